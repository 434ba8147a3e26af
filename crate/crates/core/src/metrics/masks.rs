use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rle::Mask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskOverlap {
    pub iou: f64,
    pub dice: f64,
    pub intersection: u64,
    pub union: u64,
}

/// IoU and Dice of two same-sized masks. Two empty masks agree perfectly.
pub fn mask_overlap(a: &Mask, b: &Mask) -> Result<MaskOverlap> {
    if a.size() != b.size() {
        return Err(Error::Shape(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let (mut inter, mut union) = (0u64, 0u64);
    for (&x, &y) in a.cells().iter().zip(b.cells()) {
        inter += (x && y) as u64;
        union += (x || y) as u64;
    }
    if union == 0 {
        return Ok(MaskOverlap {
            iou: 1.0,
            dice: 1.0,
            intersection: 0,
            union: 0,
        });
    }
    let iou = inter as f64 / union as f64;
    // 2I/(|A|+|B|) rewritten through IoU so the identity holds bit for bit
    Ok(MaskOverlap {
        iou,
        dice: 2.0 * iou / (1.0 + iou),
        intersection: inter,
        union,
    })
}
