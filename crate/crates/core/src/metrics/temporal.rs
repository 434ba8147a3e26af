use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{f1_score, ratio, TemporalMetrics};
use crate::model::VideoWindow;

/// Ground-truth positive frames per sequence, stored as sorted disjoint
/// inclusive intervals.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GtFrames {
    intervals: BTreeMap<String, Vec<(u64, u64)>>,
}

impl GtFrames {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_intervals<S: Into<String>>(items: impl IntoIterator<Item = (S, u64, u64)>) -> Self {
        let mut gt = Self::new();
        for (seq, start, end) in items {
            gt.add_interval(seq, start, end);
        }
        gt
    }

    pub fn add_interval(&mut self, sequence_id: impl Into<String>, start: u64, end: u64) {
        if start > end {
            return;
        }
        let list = self.intervals.entry(sequence_id.into()).or_default();
        list.push((start, end));
        *list = normalize(std::mem::take(list));
    }

    pub fn add_frames(&mut self, sequence_id: impl Into<String>, frames: &BTreeSet<u64>) {
        let list = self.intervals.entry(sequence_id.into()).or_default();
        list.extend(frames.iter().map(|&f| (f, f)));
        *list = normalize(std::mem::take(list));
    }

    pub fn intervals(&self, sequence_id: &str) -> &[(u64, u64)] {
        self.intervals.get(sequence_id).map_or(&[], Vec::as_slice)
    }

    pub fn contains(&self, sequence_id: &str, frame: u64) -> bool {
        let iv = self.intervals(sequence_id);
        let idx = iv.partition_point(|&(_, e)| e < frame);
        iv.get(idx).is_some_and(|&(s, _)| s <= frame)
    }

    /// Whether any gt frame falls in `[start, end]`.
    pub fn overlaps(&self, sequence_id: &str, start: u64, end: u64) -> bool {
        let iv = self.intervals(sequence_id);
        let idx = iv.partition_point(|&(_, e)| e < start);
        iv.get(idx).is_some_and(|&(s, _)| s <= end)
    }

    pub fn sequences(&self) -> impl Iterator<Item = &str> {
        self.intervals.keys().map(String::as_str)
    }
}

/// Sorts and merges overlapping or adjacent intervals.
fn normalize(mut iv: Vec<(u64, u64)>) -> Vec<(u64, u64)> {
    iv.sort_unstable();
    let mut out: Vec<(u64, u64)> = Vec::with_capacity(iv.len());
    for (s, e) in iv {
        match out.last_mut() {
            Some(last) if s <= last.1.saturating_add(1) => last.1 = last.1.max(e),
            _ => out.push((s, e)),
        }
    }
    out
}

fn clip(iv: &[(u64, u64)], total: u64) -> Vec<(u64, u64)> {
    if total == 0 {
        return Vec::new();
    }
    iv.iter()
        .filter(|&&(s, _)| s < total)
        .map(|&(s, e)| (s, e.min(total - 1)))
        .collect()
}

fn covered(iv: &[(u64, u64)]) -> u64 {
    iv.iter().map(|&(s, e)| e - s + 1).sum()
}

fn intersection(a: &[(u64, u64)], b: &[(u64, u64)]) -> u64 {
    let (mut i, mut j, mut n) = (0, 0, 0u64);
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if lo <= hi {
            n += hi - lo + 1;
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    n
}

/// Which frames of a retained window count as predicted positive.
#[derive(Debug, Clone, Copy)]
pub enum PositiveMode<'a> {
    /// Every frame of the window.
    Windows,
    /// Only frames carrying at least one box, keyed by window id.
    BoxFramesOnly(&'a BTreeMap<String, BTreeSet<u64>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FrameCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl FrameCounts {
    pub fn metrics(&self) -> TemporalMetrics {
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        TemporalMetrics {
            precision,
            recall,
            f1: f1_score(precision, recall),
            specificity: ratio(self.tn, self.tn + self.fp),
        }
    }
}

/// Per-frame confusion counts over every sequence in `total_frames`.
///
/// Sequences absent from `total_frames` are ignored; frames past a sequence's
/// end are clipped.
pub fn frame_counts(
    retained: &[VideoWindow],
    gt: &GtFrames,
    total_frames: &BTreeMap<String, u64>,
    mode: PositiveMode<'_>,
) -> FrameCounts {
    let mut predicted: BTreeMap<&str, Vec<(u64, u64)>> = BTreeMap::new();
    for w in retained {
        if w.start_frame > w.end_frame {
            continue;
        }
        let list = predicted.entry(w.sequence_id.as_str()).or_default();
        match mode {
            PositiveMode::Windows => list.push((w.start_frame, w.end_frame)),
            PositiveMode::BoxFramesOnly(frames) => {
                if let Some(fs) = frames.get(&w.window_id) {
                    list.extend(fs.range(w.start_frame..=w.end_frame).map(|&f| (f, f)));
                }
            }
        }
    }

    let mut counts = FrameCounts::default();
    for (seq, &total) in total_frames {
        let pred = clip(&normalize(predicted.remove(seq.as_str()).unwrap_or_default()), total);
        let gtv = clip(gt.intervals(seq), total);
        let tp = intersection(&pred, &gtv);
        let p = covered(&pred);
        let g = covered(&gtv);
        counts.tp += tp;
        counts.fp += p - tp;
        counts.fn_ += g - tp;
        counts.tn += total - (p + g - tp);
    }
    counts
}

pub fn temporal_frame_metrics(
    retained: &[VideoWindow],
    gt: &GtFrames,
    total_frames: &BTreeMap<String, u64>,
    mode: PositiveMode<'_>,
) -> TemporalMetrics {
    frame_counts(retained, gt, total_frames, mode).metrics()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// Walks every frame of every sequence.
    fn brute_force(
        windows: &[VideoWindow],
        gt_frames: &BTreeMap<String, BTreeSet<u64>>,
        totals: &BTreeMap<String, u64>,
        box_frames: Option<&BTreeMap<String, BTreeSet<u64>>>,
    ) -> FrameCounts {
        let mut c = FrameCounts::default();
        for (seq, &total) in totals {
            for f in 0..total {
                let predicted = windows.iter().any(|w| {
                    w.sequence_id == *seq
                        && w.contains(f)
                        && box_frames.is_none_or(|b| b.get(&w.window_id).is_some_and(|s| s.contains(&f)))
                });
                let actual = gt_frames.get(seq).is_some_and(|s| s.contains(&f));
                match (predicted, actual) {
                    (true, true) => c.tp += 1,
                    (true, false) => c.fp += 1,
                    (false, true) => c.fn_ += 1,
                    (false, false) => c.tn += 1,
                }
            }
        }
        c
    }

    fn totals(items: &[(&str, u64)]) -> BTreeMap<String, u64> {
        items.iter().map(|(s, n)| (s.to_string(), *n)).collect()
    }

    #[test]
    fn examples() {
        let t = totals(&[("s", 100)]);
        let gt = GtFrames::from_intervals([("s", 10, 29)]);

        let exact = temporal_frame_metrics(&[VideoWindow::new("w", "s", 10, 29)], &gt, &t, PositiveMode::Windows);
        assert_eq!(exact, TemporalMetrics { precision: 1.0, recall: 1.0, f1: 1.0, specificity: 1.0 });

        let none = temporal_frame_metrics(&[], &gt, &t, PositiveMode::Windows);
        assert_eq!((none.recall, none.specificity), (0.0, 1.0));

        let w = [VideoWindow::new("w", "s", 20, 39)];
        let c = frame_counts(&w, &gt, &t, PositiveMode::Windows);
        assert_eq!(c, FrameCounts { tp: 10, fp: 10, fn_: 10, tn: 70 });
        let m = c.metrics();
        assert_eq!((m.precision, m.recall, m.f1, m.specificity), (0.5, 0.5, 0.5, 0.875));
    }

    #[test]
    fn box_frames_only_restricts_positives() {
        let t = totals(&[("s", 100)]);
        let gt = GtFrames::from_intervals([("s", 10, 29)]);
        let w = [VideoWindow::new("w", "s", 0, 49)];
        let boxes: BTreeMap<String, BTreeSet<u64>> = [("w".to_string(), (10..30).collect())].into();
        let c = frame_counts(&w, &gt, &t, PositiveMode::BoxFramesOnly(&boxes));
        assert_eq!(c, FrameCounts { tp: 20, fp: 0, fn_: 0, tn: 80 });
    }

    #[test]
    fn gt_lookup() {
        let gt = GtFrames::from_intervals([("s", 10, 19), ("s", 20, 25), ("s", 40, 40)]);
        assert_eq!(gt.intervals("s"), &[(10, 25), (40, 40)]);
        assert!(gt.contains("s", 25) && gt.contains("s", 40) && !gt.contains("s", 26));
        assert!(gt.overlaps("s", 26, 40) && !gt.overlaps("s", 26, 39) && !gt.overlaps("x", 0, 100));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn agrees_with_brute_force(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n_seq = rng.random_range(1..4);
            let mut t = BTreeMap::new();
            let mut gt = GtFrames::new();
            let mut gt_sets: BTreeMap<String, BTreeSet<u64>> = BTreeMap::new();
            let mut windows = Vec::new();
            let mut boxes: BTreeMap<String, BTreeSet<u64>> = BTreeMap::new();
            for s in 0..n_seq {
                let seq = format!("s{s}");
                let total = rng.random_range(1..300u64);
                t.insert(seq.clone(), total);
                for _ in 0..rng.random_range(0..4) {
                    let a = rng.random_range(0..total);
                    let b = (a + rng.random_range(0..60)).min(total - 1);
                    gt.add_interval(seq.clone(), a, b);
                    gt_sets.entry(seq.clone()).or_default().extend(a..=b);
                }
                for k in 0..rng.random_range(0..5) {
                    let a = rng.random_range(0..total);
                    let b = (a + rng.random_range(0..80)).min(total - 1);
                    let id = format!("{seq}-w{k}");
                    let bf = (a..=b).filter(|_| rng.random_bool(0.4)).collect();
                    boxes.insert(id.clone(), bf);
                    windows.push(VideoWindow::new(id, seq.clone(), a, b));
                }
            }
            prop_assert_eq!(
                frame_counts(&windows, &gt, &t, PositiveMode::Windows),
                brute_force(&windows, &gt_sets, &t, None)
            );
            prop_assert_eq!(
                frame_counts(&windows, &gt, &t, PositiveMode::BoxFramesOnly(&boxes)),
                brute_force(&windows, &gt_sets, &t, Some(&boxes))
            );
        }
    }
}
