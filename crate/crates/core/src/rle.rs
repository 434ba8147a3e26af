//! Run-length codec for binary masks.
//!
//! Text form is `WxH:r0,r1,...` over the row-major cell sequence. Runs
//! alternate background/foreground and always start with the background run,
//! which is an explicit `0` when the first cell is foreground. Every other run
//! is strictly positive and the runs sum to `W*H`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{BoxAnnotation, FrameSize};

/// Dense row-major binary mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    size: FrameSize,
    cells: Vec<bool>,
}

impl Mask {
    pub fn empty(size: FrameSize) -> Self {
        Self {
            size,
            cells: vec![false; size.cells()],
        }
    }

    pub fn from_cells(size: FrameSize, cells: Vec<bool>) -> Result<Self> {
        if size.width == 0 || size.height == 0 {
            return Err(Error::InvalidMask("grid must be at least 1x1".into()));
        }
        if cells.len() != size.cells() {
            return Err(Error::InvalidMask(format!(
                "{} cells for a {}x{} grid",
                cells.len(),
                size.width,
                size.height
            )));
        }
        Ok(Self { size, cells })
    }

    /// Builds a mask from nested rows (`rows[y][x]`).
    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidMask("ragged rows".into()));
        }
        Self::from_cells(
            FrameSize::new(width as u32, height as u32),
            rows.concat(),
        )
    }

    /// Union of the filled rectangles of `boxes`.
    pub fn from_boxes<'a>(size: FrameSize, boxes: impl IntoIterator<Item = &'a BoxAnnotation>) -> Self {
        let mut m = Self::empty(size);
        for b in boxes {
            m.fill_box(b);
        }
        m
    }

    pub fn size(&self) -> FrameSize {
        self.size
    }

    pub fn width(&self) -> u32 {
        self.size.width
    }

    pub fn height(&self) -> u32 {
        self.size.height
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.cells[y as usize * self.size.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let w = self.size.width as usize;
        self.cells[y as usize * w + x as usize] = v;
    }

    pub fn area(&self) -> u64 {
        self.cells.iter().filter(|&&c| c).count() as u64
    }

    pub fn is_empty(&self) -> bool {
        !self.cells.iter().any(|&c| c)
    }

    /// Sets every cell whose center lies inside the box.
    ///
    /// Column `c` is covered when `round(x) <= c < round(x + w)`, rounding half
    /// away from zero, and likewise for rows. The same rule rasterizes predicted
    /// and ground-truth rectangles so identical boxes give identical masks.
    pub fn fill_box(&mut self, b: &BoxAnnotation) {
        let (x0, x1) = pixel_span(b.x, b.right(), self.size.width);
        let (y0, y1) = pixel_span(b.y, b.bottom(), self.size.height);
        let w = self.size.width as usize;
        for y in y0..y1 {
            self.cells[y as usize * w + x0 as usize..y as usize * w + x1 as usize].fill(true);
        }
    }

    /// Tight bounding box of the foreground, if any.
    pub fn bounding_box(&self, frame_index: u64, label: &str) -> Option<BoxAnnotation> {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0u32, 0u32);
        for y in 0..self.size.height {
            for x in 0..self.size.width {
                if self.get(x, y) {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x + 1);
                    y1 = y1.max(y + 1);
                }
            }
        }
        (x0 != u32::MAX).then(|| {
            BoxAnnotation::new(
                frame_index,
                x0 as f64,
                y0 as f64,
                (x1 - x0) as f64,
                (y1 - y0) as f64,
                label,
            )
        })
    }
}

fn pixel_span(lo: f64, hi: f64, limit: u32) -> (u32, u32) {
    let clamp = |v: f64| v.round().clamp(0.0, limit as f64) as u32;
    let (a, b) = (clamp(lo), clamp(hi));
    (a, b.max(a))
}

/// Encodes `mask` as `WxH:runs`.
pub fn encode(mask: &Mask) -> Result<String> {
    if mask.cells.is_empty() {
        return Err(Error::InvalidMask("empty grid".into()));
    }
    let mut out = format!("{}x{}:", mask.size.width, mask.size.height);
    let mut current = false;
    let mut run = 0u64;
    let mut first = true;
    let mut push = |out: &mut String, n: u64| {
        if !first {
            out.push(',');
        }
        first = false;
        let _ = write!(out, "{n}");
    };
    for &c in &mask.cells {
        if c != current {
            push(&mut out, run);
            current = c;
            run = 0;
        }
        run += 1;
    }
    push(&mut out, run);
    Ok(out)
}

/// Decodes the text form produced by [`encode`].
pub fn decode(encoded: &str) -> Result<Mask> {
    let (header, body) = encoded
        .split_once(':')
        .ok_or_else(|| Error::Parse(format!("missing `:` in `{encoded}`")))?;
    let (w, h) = header
        .split_once(['x', '×'])
        .ok_or_else(|| Error::Parse(format!("malformed header `{header}`")))?;
    let parse_dim = |s: &str| -> Result<u32> {
        match s.trim().parse::<u32>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(Error::Parse(format!("bad dimension `{s}`"))),
        }
    };
    let size = FrameSize::new(parse_dim(w)?, parse_dim(h)?);
    let total = size.cells() as u64;

    if body.trim().is_empty() {
        return Err(Error::CorruptRle(format!("no runs for {total} cells")));
    }
    let mut cells = Vec::with_capacity(size.cells());
    let mut value = false;
    let mut sum = 0u64;
    for (i, tok) in body.split(',').enumerate() {
        let run: u64 = tok
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad run `{tok}`")))?;
        if run == 0 && i > 0 {
            return Err(Error::CorruptRle(format!("zero-length run at position {i}")));
        }
        sum += run;
        if sum > total {
            return Err(Error::CorruptRle(format!("runs exceed {total} cells")));
        }
        cells.extend(std::iter::repeat_n(value, run as usize));
        value = !value;
    }
    if sum != total {
        return Err(Error::CorruptRle(format!("runs sum to {sum}, expected {total}")));
    }
    Ok(Mask { size, cells })
}
