//! Exact intersection-over-union for rotated boxes.
//!
//! Intersections are computed by clipping one convex polygon against the
//! half-planes of the other. [`iou_oracle`] is a Monte-Carlo estimate that
//! shares no code with the clipper and is used to cross-check it.

mod hull;
mod oracle;

pub use hull::{convex_hull, min_area_rect};
pub use oracle::iou_oracle;

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{invalid_geometry, Result};
use crate::geom::{shoelace, Point2, RotatedBox};

/// On-edge classification and vertex merge tolerance, in pixels.
pub const CLIP_EPS: f64 = 1e-9;

/// Convex polygon with counter-clockwise vertices (y-up sense), no
/// duplicate or collinear vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Point2>,
}

impl ConvexPolygon {
    /// Validates and normalizes a convex vertex list: clockwise input is
    /// reversed, near-duplicate and collinear vertices are merged.
    pub fn new(points: Vec<Point2>) -> Result<Self> {
        if points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(invalid_geometry("non-finite polygon vertex"));
        }
        let mut pts = points;
        if shoelace(&pts) < 0.0 {
            pts.reverse();
        }
        let pts = simplify(pts);
        if pts.len() < 3 {
            return Err(invalid_geometry("polygon has fewer than 3 distinct vertices"));
        }
        let n = pts.len();
        for i in 0..n {
            if cross(pts[i], pts[(i + 1) % n], pts[(i + 2) % n]) < 0.0 {
                return Err(invalid_geometry("polygon is not convex"));
            }
        }
        Ok(Self { vertices: pts })
    }

    pub fn from_box(b: &RotatedBox) -> Self {
        // corners() is counter-clockwise already
        Self {
            vertices: b.corners().to_vec(),
        }
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            vertices: self
                .vertices
                .iter()
                .map(|p| Point2 {
                    x: p.x - dx,
                    y: p.y - dy,
                })
                .collect(),
        }
    }
}

/// `(b - a) x (c - a)`; positive for a left turn in a y-up frame.
fn cross(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Drops vertices within [`CLIP_EPS`] of their predecessor and vertices
/// lying within [`CLIP_EPS`] of the line through their neighbours.
fn simplify(mut pts: Vec<Point2>) -> Vec<Point2> {
    let mut changed = true;
    while changed && pts.len() >= 3 {
        changed = false;
        let mut out: Vec<Point2> = Vec::with_capacity(pts.len());
        for p in &pts {
            if out.last().is_some_and(|q| q.distance(*p) < CLIP_EPS) {
                changed = true;
                continue;
            }
            out.push(*p);
        }
        while out.len() > 1 && out[0].distance(out[out.len() - 1]) < CLIP_EPS {
            out.pop();
            changed = true;
        }
        pts = out;
        let n = pts.len();
        if n < 3 {
            break;
        }
        for i in 0..n {
            let prev = pts[(i + n - 1) % n];
            let cur = pts[i];
            let next = pts[(i + 1) % n];
            let base = prev.distance(next);
            if base == 0.0 || (cross(prev, cur, next) / base).abs() < CLIP_EPS {
                pts.remove(i);
                changed = true;
                break;
            }
        }
    }
    pts
}

/// Shoelace area of a convex polygon.
pub fn polygon_area(p: &ConvexPolygon) -> f64 {
    shoelace(&p.vertices).abs()
}

/// Shoelace area of an arbitrary vertex list (0 for collinear points).
pub fn points_area(pts: &[Point2]) -> f64 {
    if pts.len() < 3 {
        return 0.0;
    }
    shoelace(pts).abs()
}

/// Intersection of two convex polygons, or `None` when they do not overlap
/// in a region of positive area.
pub fn clip_convex(subject: &ConvexPolygon, clip: &ConvexPolygon) -> Option<ConvexPolygon> {
    let mut output: Vec<Point2> = subject.vertices.clone();
    let mut input: Vec<Point2> = Vec::with_capacity(8);
    let m = clip.vertices.len();
    for i in 0..m {
        if output.is_empty() {
            return None;
        }
        let a = clip.vertices[i];
        let b = clip.vertices[(i + 1) % m];
        let len = a.distance(b);
        std::mem::swap(&mut input, &mut output);
        output.clear();
        // signed distance to the clip edge; inside is the left side
        let dist = |p: Point2| cross(a, b, p) / len;
        let n = input.len();
        for j in 0..n {
            let cur = input[j];
            let prev = input[(j + n - 1) % n];
            let dc = dist(cur);
            let dp = dist(prev);
            let cur_in = dc >= -CLIP_EPS;
            let prev_in = dp >= -CLIP_EPS;
            if cur_in {
                if !prev_in {
                    output.push(edge_point(prev, cur, dp, dc));
                }
                output.push(cur);
            } else if prev_in {
                output.push(edge_point(prev, cur, dp, dc));
            }
        }
    }
    let out = simplify(output);
    if out.len() < 3 || shoelace(&out) <= 0.0 {
        return None;
    }
    Some(ConvexPolygon { vertices: out })
}

fn edge_point(p: Point2, q: Point2, dp: f64, dq: f64) -> Point2 {
    let t = dp / (dp - dq);
    Point2 {
        x: p.x + t * (q.x - p.x),
        y: p.y + t * (q.y - p.y),
    }
}

fn box_order(a: &RotatedBox, b: &RotatedBox) -> Ordering {
    let ka = [a.cx(), a.cy(), a.w(), a.h(), a.theta()];
    let kb = [b.cx(), b.cy(), b.w(), b.h(), b.theta()];
    ka.iter()
        .zip(kb.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Area of the intersection of two rotated boxes.
pub fn intersection_area(a: &RotatedBox, b: &RotatedBox) -> f64 {
    // Canonical argument order makes the result exactly symmetric.
    let (a, b) = if box_order(a, b) == Ordering::Greater {
        (b, a)
    } else {
        (a, b)
    };
    let (dx, dy) = (a.cx(), a.cy());
    if (a.cx() - b.cx()).hypot(a.cy() - b.cy()) >= a.circumradius() + b.circumradius() {
        return 0.0;
    }
    // Work relative to one centre to keep coordinates small.
    let pa = ConvexPolygon::from_box(a).translated(dx, dy);
    let pb = ConvexPolygon::from_box(b).translated(dx, dy);
    clip_convex(&pa, &pb).map_or(0.0, |p| polygon_area(&p))
}

/// Intersection over union of two rotated boxes, in `[0, 1]`.
pub fn iou(a: &RotatedBox, b: &RotatedBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let inter = intersection_area(a, b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Row-major IoU matrix, `out[i * b.len() + j] = iou(a[i], b[j])`.
/// Rows are computed in parallel; every entry is independent so the result
/// does not depend on scheduling.
pub fn iou_matrix(a: &[RotatedBox], b: &[RotatedBox]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() * b.len()];
    if b.is_empty() {
        return out;
    }
    out.par_chunks_mut(b.len()).zip(a.par_iter()).for_each(|(row, ra)| {
        for (cell, rb) in row.iter_mut().zip(b) {
            *cell = iou(ra, rb);
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn p(x: f64, y: f64) -> Point2 {
        Point2 { x, y }
    }

    fn square(x0: f64, y0: f64, side: f64) -> ConvexPolygon {
        ConvexPolygon::new(vec![
            p(x0, y0),
            p(x0 + side, y0),
            p(x0 + side, y0 + side),
            p(x0, y0 + side),
        ])
        .unwrap()
    }

    #[test]
    fn areas() {
        assert_eq!(polygon_area(&square(0., 0., 1.)), 1.0);
        let tri = ConvexPolygon::new(vec![p(0., 0.), p(2., 0.), p(0., 2.)]).unwrap();
        assert_eq!(polygon_area(&tri), 2.0);
        assert_eq!(points_area(&[p(0., 0.), p(1., 1.), p(2., 2.)]), 0.0);
    }

    #[test]
    fn polygon_constructor_normalizes() {
        // clockwise input with a collinear midpoint
        let poly = ConvexPolygon::new(vec![p(0., 0.), p(0., 2.), p(2., 2.), p(2., 1.), p(2., 0.)]).unwrap();
        assert_eq!(poly.len(), 4);
        assert!(shoelace(poly.vertices()) > 0.0);
        assert!(ConvexPolygon::new(vec![p(0., 0.), p(1., 1.), p(2., 2.)]).is_err());
        let dart = vec![p(0., 0.), p(4., 0.), p(1., 1.), p(0., 4.)];
        assert!(ConvexPolygon::new(dart).is_err());
    }

    #[test]
    fn clip_identical_and_disjoint() {
        let a = square(0., 0., 1.);
        let c = clip_convex(&a, &a).unwrap();
        assert!((polygon_area(&c) - 1.0).abs() < 1e-12);
        assert!(clip_convex(&a, &square(3., 3., 1.)).is_none());
        // touching along an edge only: zero-area contact is empty
        assert!(clip_convex(&a, &square(1., 0., 1.)).is_none());
    }

    #[test]
    fn clip_offset_squares() {
        let c = clip_convex(&square(0., 0., 1.), &square(0.5, 0.5, 1.)).unwrap();
        assert!((polygon_area(&c) - 0.25).abs() < 1e-12);
        assert_eq!(c.len(), 4);
    }

    #[test]
    fn clip_nested() {
        let c = clip_convex(&square(0., 0., 10.), &square(2., 3., 1.)).unwrap();
        assert!((polygon_area(&c) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iou_examples() {
        let a = RotatedBox::new(0., 0., 2., 2., 0.).unwrap();
        let b = RotatedBox::new(1., 0., 2., 2., 0.).unwrap();
        assert_eq!(iou(&a, &a), 1.0);
        assert!((iou(&a, &b) - 2.0 / 6.0).abs() < 1e-12);
        assert_eq!(iou(&a, &b), iou(&b, &a));

        // unit square vs itself at 45 degrees: octagon of area 2(sqrt2 - 1)
        let s = RotatedBox::new(0., 0., 1., 1., 0.).unwrap();
        let r = RotatedBox::new(0., 0., 1., 1., FRAC_PI_4).unwrap();
        let oct = 2.0 * (2f64.sqrt() - 1.0);
        assert!((intersection_area(&s, &r) - oct).abs() < 1e-12);
        assert!((iou(&s, &r) - oct / (2.0 - oct)).abs() < 1e-12);
    }

    #[test]
    fn iou_far_apart_is_zero() {
        let a = RotatedBox::new(0., 0., 20., 2., 0.3).unwrap();
        let b = RotatedBox::new(500., -40., 20., 2., -0.3).unwrap();
        assert_eq!(iou(&a, &b), 0.0);
    }

    #[test]
    fn matrix_matches_pairwise() {
        let boxes: Vec<_> = (0..5)
            .map(|i| RotatedBox::new(i as f64 * 3.0, 1.0, 8.0, 4.0, 0.1 * i as f64).unwrap())
            .collect();
        let m = iou_matrix(&boxes, &boxes[1..]);
        for (i, a) in boxes.iter().enumerate() {
            for (j, b) in boxes[1..].iter().enumerate() {
                assert_eq!(m[i * 4 + j], iou(a, b));
            }
        }
        assert!(iou_matrix(&boxes, &[]).is_empty());
    }
}
