//! Turning predicted location, orientation, and shape maps into rotated
//! proposals, plus greedy polygon non-maximum suppression.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{invalid_input, Error, Result};
use crate::geom::{unit_to_angle, RotatedBox};
use crate::grid::Grid;
use crate::polyiou::iou;
use crate::targets::{cell_center, shape_decode, LevelSpec, LocationClass, TargetMaps};

/// Anchor-location threshold used unless configured otherwise.
pub const DEFAULT_T_A: f64 = 0.05;
pub const DEFAULT_NMS_IOU: f64 = 0.3;

/// Per-level network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMaps {
    pub level: LevelSpec,
    pub location_prob: Grid<f64>,
    pub orientation: Grid<f64>,
    pub shape_dw: Grid<f64>,
    pub shape_dh: Grid<f64>,
}

impl PredictionMaps {
    /// Checks grid sizes and value ranges.
    pub fn new(
        level: LevelSpec,
        location_prob: Grid<f64>,
        orientation: Grid<f64>,
        shape_dw: Grid<f64>,
        shape_dh: Grid<f64>,
    ) -> Result<Self> {
        let want = (level.grid_w, level.grid_h);
        for g in [&location_prob, &orientation, &shape_dw, &shape_dh] {
            if g.dims() != want {
                return Err(Error::ShapeMismatch {
                    expected_w: want.0,
                    expected_h: want.1,
                    actual_w: g.width(),
                    actual_h: g.height(),
                });
            }
        }
        if location_prob.as_slice().iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid_input("location probabilities must lie in [0, 1]"));
        }
        if orientation.as_slice().iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid_input("orientation values must lie in [0, 1]"));
        }
        if shape_dw
            .as_slice()
            .iter()
            .chain(shape_dh.as_slice())
            .any(|v| !v.is_finite())
        {
            return Err(invalid_input("shape offsets must be finite"));
        }
        Ok(Self {
            level,
            location_prob,
            orientation,
            shape_dw,
            shape_dh,
        })
    }

    /// What a perfect network would output for the given targets:
    /// probability 1 on positive cells and 0 elsewhere, the target angle
    /// where defined (1/2 elsewhere), and the target shape where valid.
    pub fn ideal(targets: &TargetMaps) -> Self {
        let location_prob = targets.location.map(|c| match c {
            LocationClass::Positive => 1.0,
            _ => 0.0,
        });
        let orientation = targets.orientation.map(|o| if o.is_nan() { 0.5 } else { *o });
        let mask = |g: &Grid<f64>| {
            let mut out = g.clone();
            for (i, j, v) in targets.shape_valid.iter_cells() {
                if !*v {
                    out.set(i, j, 0.0);
                }
            }
            out
        };
        Self {
            level: targets.level,
            location_prob,
            orientation,
            shape_dw: mask(&targets.shape_dw),
            shape_dh: mask(&targets.shape_dh),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub rbox: RotatedBox,
    pub score: f64,
}

impl Proposal {
    pub fn new(rbox: RotatedBox, score: f64) -> Result<Self> {
        if !score.is_finite() {
            return Err(invalid_input(format!("non-finite score {score}")));
        }
        Ok(Self { rbox, score })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeParams {
    pub t_a: f64,
    pub top_n: Option<usize>,
    pub nms_iou: f64,
}

impl DecodeParams {
    pub fn new(t_a: f64, top_n: Option<usize>, nms_iou: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t_a) {
            return Err(invalid_input(format!("t_a must lie in [0, 1], got {t_a}")));
        }
        if !(nms_iou > 0.0 && nms_iou < 1.0) {
            return Err(invalid_input(format!("nms_iou must lie in (0, 1), got {nms_iou}")));
        }
        Ok(Self { t_a, top_n, nms_iou })
    }
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            t_a: DEFAULT_T_A,
            top_n: None,
            nms_iou: DEFAULT_NMS_IOU,
        }
    }
}

/// A decoded proposal together with the cell it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedAnchor {
    pub proposal: Proposal,
    pub i: usize,
    pub j: usize,
    pub stride: u32,
}

fn decode_order(a: &DecodedAnchor, b: &DecodedAnchor) -> Ordering {
    b.proposal
        .score
        .total_cmp(&a.proposal.score)
        .then(a.i.cmp(&b.i))
        .then(a.j.cmp(&b.j))
        .then(a.stride.cmp(&b.stride))
}

fn decode_level(maps: &PredictionMaps, t_a: f64) -> Vec<DecodedAnchor> {
    let level = &maps.level;
    (0..level.grid_h)
        .into_par_iter()
        .flat_map_iter(|j| {
            (0..level.grid_w).filter_map(move |i| {
                let p = *maps.location_prob.get(i, j);
                if p <= t_a {
                    return None;
                }
                let c = cell_center(i, j, level).ok()?;
                let theta = unit_to_angle(*maps.orientation.get(i, j)).ok()?;
                let (w, h) = shape_decode(*maps.shape_dw.get(i, j), *maps.shape_dh.get(i, j), level);
                let rbox = RotatedBox::normalized(c.x, c.y, w, h, theta).ok()?;
                Some(DecodedAnchor {
                    proposal: Proposal { rbox, score: p },
                    i,
                    j,
                    stride: level.stride,
                })
            })
        })
        .collect()
}

/// Decodes every cell with probability strictly above `t_a` across all
/// given levels, sorted by score (ties by cell `i`, then `j`, then stride)
/// and truncated to `top_n`.
pub fn decode_anchors_with_cells(maps: &[PredictionMaps], params: &DecodeParams) -> Vec<DecodedAnchor> {
    let mut out: Vec<DecodedAnchor> = maps.iter().flat_map(|m| decode_level(m, params.t_a)).collect();
    out.sort_by(decode_order);
    if let Some(n) = params.top_n {
        out.truncate(n);
    }
    out
}

/// Active anchors of one level as proposals.
pub fn decode_anchors(maps: &PredictionMaps, params: &DecodeParams) -> Vec<Proposal> {
    decode_anchors_with_cells(std::slice::from_ref(maps), params)
        .into_iter()
        .map(|d| d.proposal)
        .collect()
}

/// Number of cells with probability strictly above `t_a`.
pub fn active_count(maps: &PredictionMaps, t_a: f64) -> usize {
    maps.location_prob.as_slice().iter().filter(|p| **p > t_a).count()
}

/// Greedy polygon NMS: keep the best remaining proposal, drop every other
/// proposal overlapping it with IoU above `iou_threshold`, repeat. Equal
/// scores keep their input order.
pub fn polygon_nms(proposals: &[Proposal], iou_threshold: f64) -> Vec<Proposal> {
    let mut order: Vec<usize> = (0..proposals.len()).collect();
    order.sort_by(|&a, &b| proposals[b].score.total_cmp(&proposals[a].score));
    let mut suppressed = vec![false; proposals.len()];
    let mut kept = Vec::new();
    for (rank, &idx) in order.iter().enumerate() {
        if suppressed[idx] {
            continue;
        }
        let keep = proposals[idx];
        kept.push(keep);
        for &other in &order[rank + 1..] {
            if !suppressed[other] && iou(&keep.rbox, &proposals[other].rbox) > iou_threshold {
                suppressed[other] = true;
            }
        }
    }
    kept
}

/// Histogram bin width for log2 aspect ratios.
pub const ASPECT_BIN: f64 = 0.25;
/// Histogram bin width for angles (5 degrees).
pub const ANGLE_BIN: f64 = PI / 36.0;

/// Sparse histogram keyed by bin index; bin `k` covers
/// `[k * width, (k + 1) * width)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Histogram {
    pub width: f64,
    pub bins: BTreeMap<i64, u64>,
}

impl Histogram {
    fn new(width: f64) -> Self {
        Self {
            width,
            bins: BTreeMap::new(),
        }
    }

    fn add(&mut self, value: f64) {
        *self.bins.entry((value / self.width).floor() as i64).or_insert(0) += 1;
    }

    pub fn total(&self) -> u64 {
        self.bins.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// `(bin lower edge, count)` pairs in ascending order.
    pub fn rows(&self) -> impl Iterator<Item = (f64, u64)> + '_ {
        self.bins.iter().map(|(k, c)| (*k as f64 * self.width, *c))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorStatistics {
    pub count: usize,
    pub cells_total: usize,
    pub fraction: f64,
    /// Distribution of `log2(w / h)`.
    pub aspect_log2: Histogram,
    /// Distribution of the box angle in radians.
    pub angle: Histogram,
}

pub fn anchor_statistics(proposals: &[Proposal], cells_total: usize) -> AnchorStatistics {
    let mut aspect_log2 = Histogram::new(ASPECT_BIN);
    let mut angle = Histogram::new(ANGLE_BIN);
    for p in proposals {
        aspect_log2.add((p.rbox.w() / p.rbox.h()).log2());
        angle.add(p.rbox.theta());
    }
    let fraction = if cells_total == 0 {
        0.0
    } else {
        proposals.len() as f64 / cells_total as f64
    };
    AnchorStatistics {
        count: proposals.len(),
        cells_total,
        fraction,
        aspect_log2,
        angle,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn level() -> LevelSpec {
        LevelSpec::new(4, 5.0, 8, 8, true).unwrap()
    }

    fn maps_with(cells: &[(usize, usize, f64, f64, f64, f64)]) -> PredictionMaps {
        let l = level();
        let mut prob = Grid::filled(8, 8, 0.0);
        let mut orient = Grid::filled(8, 8, 0.5);
        let mut dw = Grid::filled(8, 8, 0.0);
        let mut dh = Grid::filled(8, 8, 0.0);
        for &(i, j, p, o, w, h) in cells {
            prob.set(i, j, p);
            orient.set(i, j, o);
            dw.set(i, j, w);
            dh.set(i, j, h);
        }
        PredictionMaps::new(l, prob, orient, dw, dh).unwrap()
    }

    fn rb(cx: f64, cy: f64, w: f64, h: f64, t: f64) -> RotatedBox {
        RotatedBox::new(cx, cy, w, h, t).unwrap()
    }

    #[test]
    fn zero_map_decodes_nothing() {
        assert!(decode_anchors(&maps_with(&[]), &DecodeParams::default()).is_empty());
    }

    #[test]
    fn single_active_cell() {
        let maps = maps_with(&[(3, 4, 0.9, 0.75, 0.0, 0.0)]);
        let out = decode_anchors(&maps, &DecodeParams::default());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].score, 0.9);
        let b = out[0].rbox;
        assert_eq!((b.cx(), b.cy(), b.w(), b.h()), (14.0, 18.0, 20.0, 20.0));
        assert_eq!(b.theta(), FRAC_PI_4);
    }

    #[test]
    fn threshold_one_is_empty() {
        let maps = maps_with(&[(0, 0, 1.0, 0.5, 0.0, 0.0), (1, 1, 0.99, 0.5, 0.0, 0.0)]);
        let p = DecodeParams::new(1.0, None, 0.3).unwrap();
        assert!(decode_anchors(&maps, &p).is_empty());
    }

    #[test]
    fn threshold_is_strict_and_sorted() {
        let maps = maps_with(&[
            (0, 0, 0.05, 0.5, 0.0, 0.0),
            (1, 0, 0.2, 0.5, 0.0, 0.0),
            (2, 0, 0.7, 0.5, 0.0, 0.0),
            (0, 1, 0.7, 0.5, 0.0, 0.0),
        ]);
        let d = decode_anchors_with_cells(std::slice::from_ref(&maps), &DecodeParams::default());
        let cells: Vec<_> = d.iter().map(|a| (a.i, a.j)).collect();
        assert_eq!(cells, vec![(0, 1), (2, 0), (1, 0)]);
        let top = DecodeParams::new(0.05, Some(2), 0.3).unwrap();
        assert_eq!(decode_anchors(&maps, &top).len(), 2);
        // t_a = 0 keeps every cell with non-zero probability
        let all = DecodeParams::new(0.0, None, 0.3).unwrap();
        assert_eq!(decode_anchors(&maps, &all).len(), 4);
    }

    #[test]
    fn predictions_validate() {
        let l = level();
        let g = Grid::filled(8, 8, 0.0);
        let bad = Grid::filled(8, 7, 0.0);
        assert!(matches!(
            PredictionMaps::new(l, g.clone(), bad, g.clone(), g.clone()),
            Err(Error::ShapeMismatch { .. })
        ));
        let over = Grid::filled(8, 8, 1.5);
        assert!(PredictionMaps::new(l, over, g.clone(), g.clone(), g.clone()).is_err());
        assert!(DecodeParams::new(1.2, None, 0.3).is_err());
        assert!(DecodeParams::new(0.1, None, 1.0).is_err());
    }

    #[test]
    fn nms_examples() {
        let a = Proposal::new(rb(0., 0., 10., 4., 0.), 0.9).unwrap();
        assert_eq!(polygon_nms(&[a], 0.3), vec![a]);

        let dup = Proposal::new(a.rbox, 0.8).unwrap();
        assert_eq!(polygon_nms(&[dup, a], 0.3), vec![a]);

        let far = Proposal::new(rb(100., 0., 10., 4., 0.), 0.8).unwrap();
        assert_eq!(polygon_nms(&[far, a], 0.3), vec![a, far]);
    }

    #[test]
    fn nms_keeps_chain_survivor() {
        // b overlaps a and c; c does not overlap a, so c survives once b is gone
        let a = Proposal::new(rb(0., 0., 10., 10., 0.), 0.9).unwrap();
        let b = Proposal::new(rb(4., 0., 10., 10., 0.), 0.8).unwrap();
        let c = Proposal::new(rb(8., 0., 10., 10., 0.), 0.7).unwrap();
        assert_eq!(polygon_nms(&[c, b, a], 0.3), vec![a, c]);
    }

    #[test]
    fn statistics_examples() {
        let empty = anchor_statistics(&[], 100);
        assert_eq!((empty.count, empty.fraction), (0, 0.0));
        assert!(empty.aspect_log2.is_empty() && empty.angle.is_empty());

        let props: Vec<_> = (0..100)
            .map(|k| Proposal::new(rb(k as f64, 0., 20., 10., 0.1), 0.5).unwrap())
            .collect();
        let s = anchor_statistics(&props, 10_000);
        assert_eq!(s.fraction, 0.01);
        let rows: Vec<_> = s.aspect_log2.rows().collect();
        assert_eq!(rows, vec![(1.0, 100)]);
        assert_eq!(s.angle.total(), 100);
        assert_eq!(anchor_statistics(&props, 0).fraction, 0.0);
    }

    #[test]
    fn ideal_maps_reproduce_targets() {
        use crate::targets::{generate_targets, ShapeCandidateSet, ShrinkParams};
        let l = LevelSpec::new(4, 5.0, 16, 16, true).unwrap();
        let gt = rb(30.0, 30.0, 32.0, 32.0, 0.3);
        let out = generate_targets(&[gt], &[l], &ShrinkParams::default(), &ShapeCandidateSet::default()).unwrap();
        let ideal = PredictionMaps::ideal(&out.maps[0]);
        let props = decode_anchors(&ideal, &DecodeParams::default());
        assert_eq!(props.len(), out.maps[0].counts().0);
        let best = props.iter().map(|p| iou(&p.rbox, &gt)).fold(0.0, f64::max);
        assert!((best - out.best_iou[0].unwrap()).abs() < 1e-9);
    }
}
