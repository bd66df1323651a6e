//! Detection scoring (precision, recall, F-measure with don't-care regions)
//! and proposal recall over a fixed number of proposals per image.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::decode::Proposal;
use crate::error::{invalid_input, Result};
use crate::geom::RotatedBox;
use crate::polyiou::iou;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthItem {
    pub rbox: RotatedBox,
    pub dont_care: bool,
}

impl GroundTruthItem {
    pub fn care(rbox: RotatedBox) -> Self {
        Self { rbox, dont_care: false }
    }

    pub fn dont_care(rbox: RotatedBox) -> Self {
        Self { rbox, dont_care: true }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub matched: usize,
    /// Detections left after don't-care removal.
    pub num_detections: usize,
    /// Ground truths that are not don't-care.
    pub num_gt: usize,
    pub iou_threshold: f64,
}

impl EvalReport {
    pub fn from_counts(matched: usize, num_detections: usize, num_gt: usize, iou_threshold: f64) -> Self {
        let precision = ratio(matched, num_detections);
        let recall = ratio(matched, num_gt);
        let f_measure = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f_measure,
            matched,
            num_detections,
            num_gt,
            iou_threshold,
        }
    }

    /// Pools the counts of two reports at the same threshold.
    pub fn merge(&self, other: &EvalReport) -> EvalReport {
        EvalReport::from_counts(
            self.matched + other.matched,
            self.num_detections + other.num_detections,
            self.num_gt + other.num_gt,
            self.iou_threshold,
        )
    }

    /// Report over no detections and no ground truth.
    pub fn empty(iou_threshold: f64) -> Self {
        Self::from_counts(0, 0, 0, iou_threshold)
    }
}

/// Greedy one-to-one matching of one image's detections.
///
/// Detections overlapping any don't-care region with IoU above the
/// threshold are dropped. The rest are visited by descending score (ties
/// in input order) and each takes the unmatched care gt it overlaps most,
/// provided that IoU reaches the threshold.
pub fn match_detections(dets: &[Proposal], gts: &[GroundTruthItem], iou_threshold: f64) -> EvalReport {
    let (care, dont): (Vec<&GroundTruthItem>, Vec<&GroundTruthItem>) = gts.iter().partition(|g| !g.dont_care);
    let mut kept: Vec<&Proposal> = dets
        .iter()
        .filter(|d| !dont.iter().any(|g| iou(&d.rbox, &g.rbox) > iou_threshold))
        .collect();
    kept.sort_by(|a, b| b.score.total_cmp(&a.score));

    let mut taken = vec![false; care.len()];
    let mut matched = 0;
    for d in &kept {
        let mut best: Option<(usize, f64)> = None;
        for (g, item) in care.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let v = iou(&d.rbox, &item.rbox);
            if v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
            matched += 1;
        }
    }
    EvalReport::from_counts(matched, kept.len(), care.len(), iou_threshold)
}

/// Dataset-level report: per-image matching, counts pooled over images.
pub fn evaluate_dataset(
    dets: &[Vec<Proposal>],
    gts: &[Vec<GroundTruthItem>],
    iou_threshold: f64,
) -> Result<EvalReport> {
    if dets.len() != gts.len() {
        return Err(invalid_input(format!(
            "{} detection lists but {} ground-truth lists",
            dets.len(),
            gts.len()
        )));
    }
    Ok(dets
        .par_iter()
        .zip(gts)
        .map(|(d, g)| match_detections(d, g, iou_threshold))
        .collect::<Vec<_>>()
        .iter()
        .fold(EvalReport::empty(iou_threshold), |acc, r| acc.merge(r)))
}

/// One dataset-level report per threshold.
pub fn sweep_report(
    dets: &[Vec<Proposal>],
    gts: &[Vec<GroundTruthItem>],
    thresholds: &[f64],
) -> Result<Vec<EvalReport>> {
    if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(invalid_input(format!("IoU threshold must lie in (0, 1), got {t}")));
    }
    thresholds.iter().map(|&t| evaluate_dataset(dets, gts, t)).collect()
}

/// How a recall threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RecallMode {
    At(f64),
    /// Mean over 0.50, 0.55, ..., 0.95.
    Averaged,
}

impl RecallMode {
    /// The three standard modes: 0.5, 0.75, averaged.
    pub fn standard() -> [RecallMode; 3] {
        [RecallMode::At(0.5), RecallMode::At(0.75), RecallMode::Averaged]
    }

    pub fn label(&self) -> String {
        match self {
            RecallMode::At(t) => format!("{t}"),
            RecallMode::Averaged => "avg".to_string(),
        }
    }

    fn thresholds(&self) -> Vec<f64> {
        match self {
            RecallMode::At(t) => vec![*t],
            RecallMode::Averaged => averaged_thresholds().to_vec(),
        }
    }
}

/// `0.50, 0.55, ..., 0.95`, each built from an integer so `0.60` is exactly
/// the literal `0.6`.
pub fn averaged_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecallEntry {
    pub n: usize,
    pub mode: RecallMode,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecallReport {
    pub entries: Vec<RecallEntry>,
    pub num_gt: usize,
}

impl RecallReport {
    pub fn get(&self, n: usize, mode: RecallMode) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.n == n && e.mode == mode)
            .map(|e| e.value)
    }

    /// Tab-separated `metric N mode value` lines, values with 4 decimals.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(out, "TR\t{}\t{}\t{:.4}", e.n, e.mode.label(), e.value);
        }
        out
    }
}

/// Best IoU between each care gt of one image and its top-`n` proposals.
fn best_ious(proposals: &[Proposal], gts: &[GroundTruthItem], n: usize) -> Vec<f64> {
    let mut order: Vec<&Proposal> = proposals.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score));
    order.truncate(n);
    gts.iter()
        .filter(|g| !g.dont_care)
        .map(|g| order.iter().map(|p| iou(&p.rbox, &g.rbox)).fold(0.0, f64::max))
        .collect()
}

/// Fraction of care gts covered by some top-`N` proposal of their image
/// at IoU at least the threshold, for every `N` and mode.
pub fn proposal_recall(
    proposals_per_image: &[Vec<Proposal>],
    gts_per_image: &[Vec<GroundTruthItem>],
    n_values: &[usize],
    modes: &[RecallMode],
) -> Result<RecallReport> {
    if proposals_per_image.len() != gts_per_image.len() {
        return Err(invalid_input(format!(
            "{} proposal lists but {} ground-truth lists",
            proposals_per_image.len(),
            gts_per_image.len()
        )));
    }
    if n_values.contains(&0) {
        return Err(invalid_input("proposal count N must be positive"));
    }
    for m in modes {
        if let RecallMode::At(t) = m {
            if !(*t > 0.0 && *t <= 1.0) {
                return Err(invalid_input(format!("recall threshold must lie in (0, 1], got {t}")));
            }
        }
    }
    let num_gt: usize = gts_per_image
        .iter()
        .map(|g| g.iter().filter(|x| !x.dont_care).count())
        .sum();
    let mut entries = Vec::new();
    for &n in n_values {
        let best: Vec<f64> = proposals_per_image
            .par_iter()
            .zip(gts_per_image)
            .flat_map_iter(|(p, g)| best_ious(p, g, n))
            .collect();
        for &mode in modes {
            // Averaging recalled counts rather than per-threshold ratios
            // keeps the result a single rounded fraction.
            let ts = mode.thresholds();
            let recalled: usize = ts.iter().map(|t| best.iter().filter(|v| **v >= *t).count()).sum();
            entries.push(RecallEntry {
                n,
                mode,
                value: ratio(recalled, num_gt * ts.len()),
            });
        }
    }
    Ok(RecallReport { entries, num_gt })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rb(cx: f64, cy: f64, w: f64, h: f64) -> RotatedBox {
        RotatedBox::new(cx, cy, w, h, 0.0).unwrap()
    }

    fn det(b: RotatedBox, s: f64) -> Proposal {
        Proposal::new(b, s).unwrap()
    }

    /// A 10x10 square and the same square shifted by 2.5 overlap with IoU 0.6.
    fn iou_06_pair() -> (RotatedBox, RotatedBox) {
        (rb(5.0, 5.0, 10.0, 10.0), rb(7.5, 5.0, 10.0, 10.0))
    }

    #[test]
    fn fixture_pair_has_iou_06() {
        let (a, b) = iou_06_pair();
        assert!((iou(&a, &b) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn perfect_detections() {
        let gts = [
            GroundTruthItem::care(rb(10., 10., 8., 4.)),
            GroundTruthItem::care(rb(50., 10., 8., 4.)),
        ];
        let dets: Vec<_> = gts.iter().map(|g| det(g.rbox, 0.9)).collect();
        let r = match_detections(&dets, &gts, 0.5);
        assert_eq!((r.precision, r.recall, r.f_measure), (1.0, 1.0, 1.0));
    }

    #[test]
    fn half_recall() {
        let gts = [
            GroundTruthItem::care(rb(10., 10., 8., 4.)),
            GroundTruthItem::care(rb(50., 10., 8., 4.)),
        ];
        let r = match_detections(&[det(gts[0].rbox, 0.9)], &gts, 0.5);
        assert_eq!((r.precision, r.recall), (1.0, 0.5));
        assert!((r.f_measure - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn dont_care_only() {
        let g = GroundTruthItem::dont_care(rb(10., 10., 8., 4.));
        let r = match_detections(&[det(g.rbox, 0.9)], &[g], 0.5);
        assert_eq!((r.num_detections, r.num_gt), (0, 0));
        assert_eq!((r.precision, r.recall, r.f_measure), (0.0, 0.0, 0.0));
    }

    #[test]
    fn one_to_one_matching() {
        let g = GroundTruthItem::care(rb(10., 10., 8., 4.));
        let dets = [det(g.rbox, 0.9), det(g.rbox, 0.8)];
        let r = match_detections(&dets, &[g], 0.5);
        assert_eq!((r.matched, r.num_detections), (1, 2));
        assert_eq!(r.precision, 0.5);
    }

    #[test]
    fn sweep_thresholds() {
        let (a, b) = iou_06_pair();
        let dets = vec![vec![det(b, 0.9)]];
        let gts = vec![vec![GroundTruthItem::care(a)]];
        let rows = sweep_report(&dets, &gts, &[0.5, 0.75]).unwrap();
        assert_eq!((rows[0].matched, rows[1].matched), (1, 0));
        let none = sweep_report(&[vec![]], &gts, &[0.5, 0.7]).unwrap();
        assert!(none.iter().all(|r| r.recall == 0.0));
        assert!(sweep_report(&dets, &gts, &[1.0]).is_err());
    }

    #[test]
    fn recall_single_match() {
        let (a, b) = iou_06_pair();
        let props = vec![vec![det(b, 0.9)]];
        let gts = vec![vec![GroundTruthItem::care(a)]];
        let r = proposal_recall(&props, &gts, &[50], &RecallMode::standard()).unwrap();
        assert_eq!(r.get(50, RecallMode::At(0.5)), Some(1.0));
        assert_eq!(r.get(50, RecallMode::At(0.75)), Some(0.0));
        let avg = r.get(50, RecallMode::Averaged).unwrap();
        assert!((avg - 0.3).abs() < 1e-15);
        assert!(r.to_tsv().contains("TR\t50\tavg\t0.3000"));
    }

    #[test]
    fn recall_respects_top_n() {
        let g = rb(10., 10., 8., 4.);
        let props = vec![vec![det(rb(100., 100., 8., 4.), 0.9), det(g, 0.5)]];
        let gts = vec![vec![GroundTruthItem::care(g)]];
        let r = proposal_recall(&props, &gts, &[1, 2], &[RecallMode::At(0.5)]).unwrap();
        assert_eq!(r.get(1, RecallMode::At(0.5)), Some(0.0));
        assert_eq!(r.get(2, RecallMode::At(0.5)), Some(1.0));
        assert!(proposal_recall(&props, &gts, &[0], &[RecallMode::At(0.5)]).is_err());
    }

    #[test]
    fn averaged_thresholds_are_exact() {
        let t = averaged_thresholds();
        assert_eq!(t[0], 0.5);
        assert_eq!(t[2], 0.6);
        assert_eq!(t[9], 0.95);
    }
}
