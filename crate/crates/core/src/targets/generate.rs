use rayon::prelude::*;

use super::codec::{cell_center_unchecked, shape_encode};
use super::{LevelSpec, LocationClass, ShapeCandidateSet, ShrinkParams, TargetMaps};
use crate::error::{invalid_input, Result};
use crate::geom::{angle_to_unit, RotatedBox};
use crate::grid::Grid;
use crate::polyiou::iou;

/// Boxes with a side below this many pixels get no targets.
pub const MIN_GT_SIDE: f64 = 1.0;

const TIE_EPS: f64 = 1e-12;

/// Non-fatal conditions met while generating targets.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetDiagnostic {
    /// The box has a side shorter than [`MIN_GT_SIDE`] and was skipped.
    TooSmall { gt: usize },
    /// No cell centre fell inside the shrink region; the in-box cell
    /// nearest the box centre was made positive instead.
    ShrinkFallback { gt: usize, stride: u32 },
    /// No cell centre fell inside the box at all.
    NoPositiveCell { gt: usize, stride: u32 },
    /// Boxes whose normalized angles differ by more than 1/2 (they straddle
    /// the ±π/2 wrap) were averaged at this cell.
    OrientationWrap { stride: u32, i: usize, j: usize },
}

#[derive(Debug, Clone)]
pub struct TargetOutput {
    /// One entry per input level, in input order.
    pub maps: Vec<TargetMaps>,
    pub diagnostics: Vec<TargetDiagnostic>,
    /// Per ground truth: the level index it was assigned to, or `None` when
    /// it was skipped.
    pub assigned_level: Vec<Option<usize>>,
    /// Per ground truth: the highest IoU between the box and the shape
    /// target stored at any of its positive cells.
    pub best_iou: Vec<Option<f64>>,
}

/// Index of the level whose base size `k * s` is closest to `sqrt(w h)` in
/// log space. Ties go to the smaller stride.
pub fn assign_level_index(gt: &RotatedBox, levels: &[LevelSpec]) -> Result<usize> {
    if levels.is_empty() {
        return Err(invalid_input("no pyramid levels given"));
    }
    let size = (gt.w() * gt.h()).sqrt();
    let mut best = 0;
    let mut best_cost = f64::INFINITY;
    for (idx, level) in levels.iter().enumerate() {
        let cost = (size / level.base_size()).ln().abs();
        let tie = (cost - best_cost).abs() <= TIE_EPS;
        if (!tie && cost < best_cost) || (tie && level.stride < levels[best].stride) {
            best = idx;
            best_cost = cost;
        }
    }
    Ok(best)
}

pub fn assign_level(gt: &RotatedBox, levels: &[LevelSpec]) -> Result<LevelSpec> {
    assign_level_index(gt, levels).map(|i| levels[i])
}

/// Candidate shapes `(a s sqrt(r), a s / sqrt(r))` for every scale `a` and
/// applicable ratio `r`, scale-major.
pub fn enumerate_candidates(level: &LevelSpec, candidates: &ShapeCandidateSet) -> Vec<(f64, f64)> {
    let s = level.stride_f64();
    let long: &[f64] = if level.long_ratios_enabled {
        &candidates.long_ratios
    } else {
        &[]
    };
    candidates
        .scales
        .iter()
        .flat_map(|&a| {
            candidates.ratios.iter().chain(long).map(move |&r| {
                let root = r.sqrt();
                (a * s * root, a * s / root)
            })
        })
        .collect()
}

#[derive(Clone, Copy)]
struct ShapeClaim {
    iou: f64,
    w: f64,
    h: f64,
}

struct LevelAccum {
    location: Grid<LocationClass>,
    theta_sum: Grid<f64>,
    theta_count: Grid<u32>,
    theta_min: Grid<f64>,
    theta_max: Grid<f64>,
    shape: Grid<Option<ShapeClaim>>,
}

impl LevelAccum {
    fn new(level: &LevelSpec) -> Self {
        let (w, h) = (level.grid_w, level.grid_h);
        Self {
            location: Grid::filled(w, h, LocationClass::Negative),
            theta_sum: Grid::filled(w, h, 0.0),
            theta_count: Grid::filled(w, h, 0),
            theta_min: Grid::filled(w, h, f64::INFINITY),
            theta_max: Grid::filled(w, h, f64::NEG_INFINITY),
            shape: Grid::filled(w, h, None),
        }
    }

    fn add_orientation(&mut self, i: usize, j: usize, theta_t: f64) {
        *self.theta_sum.get_mut(i, j) += theta_t;
        *self.theta_count.get_mut(i, j) += 1;
        let lo = self.theta_min.get_mut(i, j);
        *lo = lo.min(theta_t);
        let hi = self.theta_max.get_mut(i, j);
        *hi = hi.max(theta_t);
    }
}

/// Candidate shape with the highest IoU against `gt` when centred on
/// `(x, y)` with the box's angle. The first candidate wins ties.
fn best_candidate(gt: &RotatedBox, x: f64, y: f64, pool: &[(f64, f64)]) -> Option<ShapeClaim> {
    let mut best: Option<ShapeClaim> = None;
    for &(w, h) in pool {
        let Ok(anchor) = RotatedBox::normalized(x, y, w, h, gt.theta()) else {
            continue;
        };
        let v = iou(&anchor, gt);
        if best.is_none_or(|b| v > b.iou) {
            best = Some(ShapeClaim { iou: v, w, h });
        }
    }
    best
}

/// Cell index range whose centres can fall inside `b` on a level.
fn cell_window(b: &RotatedBox, level: &LevelSpec) -> Option<(usize, usize, usize, usize)> {
    let corners = b.corners();
    let fold =
        |f: fn(f64, f64) -> f64, init: f64, get: fn(&crate::geom::Point2) -> f64| corners.iter().map(get).fold(init, f);
    let x0 = fold(f64::min, f64::INFINITY, |p| p.x);
    let x1 = fold(f64::max, f64::NEG_INFINITY, |p| p.x);
    let y0 = fold(f64::min, f64::INFINITY, |p| p.y);
    let y1 = fold(f64::max, f64::NEG_INFINITY, |p| p.y);
    let s = level.stride_f64();
    let lo = |v: f64| ((v / s - 0.5).floor()).max(0.0) as usize;
    let hi = |v: f64, n: usize| {
        let c = (v / s - 0.5).ceil();
        if c < 0.0 {
            None
        } else {
            Some((c as usize).min(n - 1))
        }
    };
    let (i1, j1) = (hi(x1, level.grid_w)?, hi(y1, level.grid_h)?);
    let (i0, j0) = (lo(x0), lo(y0));
    (i0 <= i1 && j0 <= j1).then_some((i0, i1, j0, j1))
}

struct LevelResult {
    maps: TargetMaps,
    diagnostics: Vec<TargetDiagnostic>,
    best_iou: Vec<(usize, f64)>,
}

fn generate_level(
    level: &LevelSpec,
    members: &[(usize, RotatedBox)],
    shrink: &ShrinkParams,
    pool: &[(f64, f64)],
) -> LevelResult {
    let s = level.stride_f64();
    let mut acc = LevelAccum::new(level);
    let mut diagnostics = Vec::new();
    let mut best_iou = Vec::new();

    for &(g, ref gt) in members {
        let theta_t = angle_to_unit(gt.theta());
        let mut positives = Vec::new();
        let mut inside = Vec::new();
        if let Some((i0, i1, j0, j1)) = cell_window(gt, level) {
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let c = cell_center_unchecked(i, j, s);
                    if !gt.contains(c) {
                        continue;
                    }
                    inside.push((i, j));
                    if gt.contains_scaled(c, shrink.sigma1, shrink.sigma2) {
                        positives.push((i, j));
                    }
                }
            }
        }
        if inside.is_empty() {
            diagnostics.push(TargetDiagnostic::NoPositiveCell {
                gt: g,
                stride: level.stride,
            });
            continue;
        }
        if positives.is_empty() {
            let centre = gt.center();
            let nearest = inside
                .iter()
                .copied()
                .min_by(|a, b| {
                    let da = cell_center_unchecked(a.0, a.1, s).distance(centre);
                    let db = cell_center_unchecked(b.0, b.1, s).distance(centre);
                    da.total_cmp(&db)
                })
                .expect("inside is non-empty");
            positives.push(nearest);
            diagnostics.push(TargetDiagnostic::ShrinkFallback {
                gt: g,
                stride: level.stride,
            });
        }

        for &(i, j) in &inside {
            acc.add_orientation(i, j, theta_t);
            if *acc.location.get(i, j) == LocationClass::Negative {
                acc.location.set(i, j, LocationClass::Ignore);
            }
        }
        let mut gt_best = f64::NEG_INFINITY;
        for &(i, j) in &positives {
            acc.location.set(i, j, LocationClass::Positive);
            let c = cell_center_unchecked(i, j, s);
            let Some(claim) = best_candidate(gt, c.x, c.y, pool) else {
                continue;
            };
            gt_best = gt_best.max(claim.iou);
            let slot = acc.shape.get_mut(i, j);
            if slot.is_none_or(|cur| claim.iou > cur.iou) {
                *slot = Some(claim);
            }
        }
        if gt_best.is_finite() {
            best_iou.push((g, gt_best));
        }
    }

    let mut maps = TargetMaps::empty(*level);
    maps.location = acc.location;
    for j in 0..level.grid_h {
        for i in 0..level.grid_w {
            let n = *acc.theta_count.get(i, j);
            if n > 0 {
                maps.orientation.set(i, j, *acc.theta_sum.get(i, j) / f64::from(n));
                if acc.theta_max.get(i, j) - acc.theta_min.get(i, j) > 0.5 {
                    diagnostics.push(TargetDiagnostic::OrientationWrap {
                        stride: level.stride,
                        i,
                        j,
                    });
                }
            }
            if *maps.location.get(i, j) != LocationClass::Positive {
                continue;
            }
            if let Some(claim) = acc.shape.get(i, j) {
                if let Ok((dw, dh)) = shape_encode(claim.w, claim.h, level) {
                    maps.shape_dw.set(i, j, dw);
                    maps.shape_dh.set(i, j, dh);
                    maps.shape_valid.set(i, j, true);
                }
            }
        }
    }
    LevelResult {
        maps,
        diagnostics,
        best_iou,
    }
}

/// Builds location, orientation, and shape targets on every level.
///
/// Each box is assigned to one level with [`assign_level_index`]. On that
/// level, cells whose centre lies strictly inside the concentric shrink box
/// `(sigma1 w, sigma2 h)` are positive and the remaining cells inside the
/// box are ignored; positive wins over ignore across boxes. Orientation
/// targets are the mean normalized angle of all boxes covering a cell.
/// The shape target of a positive cell is the candidate, pooled over all
/// levels, whose anchor at the cell centre (with the box angle) has the
/// highest IoU with the box.
pub fn generate_targets(
    gts: &[RotatedBox],
    levels: &[LevelSpec],
    shrink: &ShrinkParams,
    candidates: &ShapeCandidateSet,
) -> Result<TargetOutput> {
    if levels.is_empty() {
        return Err(invalid_input("no pyramid levels given"));
    }
    let pool: Vec<(f64, f64)> = levels
        .iter()
        .flat_map(|l| enumerate_candidates(l, candidates))
        .collect();

    let mut diagnostics = Vec::new();
    let mut assigned_level = vec![None; gts.len()];
    let mut members: Vec<Vec<(usize, RotatedBox)>> = vec![Vec::new(); levels.len()];
    for (g, gt) in gts.iter().enumerate() {
        if gt.h() < MIN_GT_SIDE {
            diagnostics.push(TargetDiagnostic::TooSmall { gt: g });
            continue;
        }
        let idx = assign_level_index(gt, levels)?;
        assigned_level[g] = Some(idx);
        members[idx].push((g, *gt));
    }

    let results: Vec<LevelResult> = levels
        .par_iter()
        .zip(members.par_iter())
        .map(|(level, m)| generate_level(level, m, shrink, &pool))
        .collect();

    let mut best_iou = vec![None; gts.len()];
    let mut maps = Vec::with_capacity(levels.len());
    for r in results {
        diagnostics.extend(r.diagnostics);
        for (g, v) in r.best_iou {
            best_iou[g] = Some(v);
        }
        maps.push(r.maps);
    }
    Ok(TargetOutput {
        maps,
        diagnostics,
        assigned_level,
        best_iou,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{default_levels, shape_decode};

    fn level(stride: u32, long: bool) -> LevelSpec {
        LevelSpec::new(stride, 5.0, 64, 64, long).unwrap()
    }

    fn pyramid() -> Vec<LevelSpec> {
        [4, 8, 16, 32].map(|s| level(s, s <= 8)).to_vec()
    }

    #[test]
    fn assign_level_examples() {
        let levels = pyramid();
        let sq = |s: f64| RotatedBox::new(100.0, 100.0, s, s, 0.0).unwrap();
        assert_eq!(assign_level(&sq(20.0), &levels).unwrap().stride, 4);
        assert_eq!(assign_level(&sq(160.0), &levels).unwrap().stride, 32);
        // sqrt(20 * 40) is equally far from 20 and 40 in log space
        let mid = (20.0f64 * 40.0).sqrt();
        assert_eq!(assign_level(&sq(mid), &levels).unwrap().stride, 4);
        let reversed: Vec<_> = levels.iter().rev().copied().collect();
        assert_eq!(assign_level(&sq(mid), &reversed).unwrap().stride, 4);
        assert!(assign_level(&sq(20.0), &[]).is_err());
    }

    #[test]
    fn candidate_counts_and_values() {
        let set = ShapeCandidateSet::default();
        assert_eq!(enumerate_candidates(&level(16, false), &set).len(), 12);
        let c4 = enumerate_candidates(&level(4, true), &set);
        assert_eq!(c4.len(), 24);
        // scale 8, ratio 4 at stride 4
        assert!(c4.contains(&(64.0, 16.0)));
    }

    #[test]
    fn shrink_region_example() {
        let gt = RotatedBox::new(16.0, 16.0, 16.0, 10.0, 0.0).unwrap();
        let out = generate_targets(
            &[gt],
            &[level(4, true)],
            &ShrinkParams::default(),
            &ShapeCandidateSet::default(),
        )
        .unwrap();
        let maps = &out.maps[0];
        let mut pos: Vec<_> = maps
            .positive_cells()
            .map(|(i, j)| ((i as f64 + 0.5) * 4.0, (j as f64 + 0.5) * 4.0))
            .collect();
        pos.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(pos, vec![(14.0, 14.0), (14.0, 18.0), (18.0, 14.0), (18.0, 18.0)]);
        // the 16x10 box covers centres x in {10..22}, y in {14, 18}
        assert_eq!(maps.counts().1, 4);
        assert!(out.diagnostics.is_empty());
    }

    #[test]
    fn orientation_is_half_for_flat_boxes() {
        let gts = [
            RotatedBox::new(40.0, 40.0, 40.0, 12.0, 0.0).unwrap(),
            RotatedBox::new(150.0, 90.0, 90.0, 30.0, 0.0).unwrap(),
        ];
        let out = generate_targets(
            &gts,
            &pyramid(),
            &ShrinkParams::default(),
            &ShapeCandidateSet::default(),
        )
        .unwrap();
        for maps in &out.maps {
            for (i, j, c) in maps.location.iter_cells() {
                let o = *maps.orientation.get(i, j);
                if *c == LocationClass::Negative {
                    assert!(o.is_nan());
                } else {
                    assert_eq!(o, 0.5);
                }
            }
        }
    }

    #[test]
    fn exact_candidate_gives_unit_iou() {
        // 32x32 box centred on the centre of cell (4, 4) at stride 4
        let gt = RotatedBox::new(18.0, 18.0, 32.0, 32.0, 0.0).unwrap();
        let l = level(4, true);
        let out = generate_targets(&[gt], &[l], &ShrinkParams::default(), &ShapeCandidateSet::default()).unwrap();
        let maps = &out.maps[0];
        assert!(*maps.shape_valid.get(4, 4));
        let want = (32.0f64 / 20.0).ln();
        assert!((maps.shape_dw.get(4, 4) - want).abs() < 1e-15);
        assert!((maps.shape_dh.get(4, 4) - want).abs() < 1e-15);
        let (w, h) = shape_decode(*maps.shape_dw.get(4, 4), *maps.shape_dh.get(4, 4), &l);
        assert!((w - 32.0).abs() < 1e-12 && (h - 32.0).abs() < 1e-12);
        assert_eq!(out.best_iou[0], Some(1.0));
    }

    #[test]
    fn thin_box_on_coarse_level_falls_back() {
        // 8 px tall shrink strip between cell-centre rows of stride 16
        let gt = RotatedBox::new(256.0, 253.0, 256.0, 16.0, 0.0).unwrap();
        let levels = default_levels(512, 512).unwrap();
        let out = generate_targets(&[gt], &levels, &ShrinkParams::default(), &ShapeCandidateSet::default()).unwrap();
        assert_eq!(levels[out.assigned_level[0].unwrap()].stride, 16);
        assert!(matches!(
            out.diagnostics[0],
            TargetDiagnostic::ShrinkFallback { gt: 0, stride: 16 }
        ));
        let total_pos: usize = out.maps.iter().map(|m| m.counts().0).sum();
        assert_eq!(total_pos, 1);
    }

    #[test]
    fn tiny_box_is_reported_not_fatal() {
        let gts = [
            RotatedBox::new(30.0, 30.0, 5.0, 0.5, 0.0).unwrap(),
            RotatedBox::new(60.0, 60.0, 30.0, 20.0, 0.0).unwrap(),
        ];
        let out = generate_targets(
            &gts,
            &pyramid(),
            &ShrinkParams::default(),
            &ShapeCandidateSet::default(),
        )
        .unwrap();
        assert!(out.diagnostics.contains(&TargetDiagnostic::TooSmall { gt: 0 }));
        assert_eq!(out.assigned_level[0], None);
        assert!(out.best_iou[1].is_some());
    }

    #[test]
    fn empty_scene_is_all_negative() {
        let out = generate_targets(&[], &pyramid(), &ShrinkParams::default(), &ShapeCandidateSet::default()).unwrap();
        for m in &out.maps {
            assert_eq!(m.counts(), (0, 0, m.level.cells()));
        }
    }

    #[test]
    fn wrap_straddling_overlap_is_flagged() {
        let gts = [
            RotatedBox::new(64.0, 64.0, 40.0, 30.0, 1.5).unwrap(),
            RotatedBox::new(64.0, 64.0, 40.0, 30.0, -1.5).unwrap(),
        ];
        let out = generate_targets(
            &gts,
            &[level(4, true)],
            &ShrinkParams::default(),
            &ShapeCandidateSet::default(),
        )
        .unwrap();
        assert!(out
            .diagnostics
            .iter()
            .any(|d| matches!(d, TargetDiagnostic::OrientationWrap { .. })));
    }
}
