use crate::error::{invalid_input, Result};
use crate::geom::{Point2, RotatedBox};

use super::cross;

/// Andrew's monotone chain. Returns the hull counter-clockwise (y-up sense)
/// without collinear vertices.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point2>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        // last point of each chain starts the next one
        hull.pop();
    }
    hull
}

/// Minimum-area enclosing rectangle by rotating calipers over the convex
/// hull. One side of the result is collinear with a hull edge.
pub fn min_area_rect(points: &[Point2]) -> Result<RotatedBox> {
    if points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
        return Err(invalid_input("non-finite point"));
    }
    let hull = convex_hull(points);
    let n = hull.len();
    if n < 3 {
        return Err(invalid_input("points are collinear or too few"));
    }
    let at = |k: usize| hull[k % n];
    let dot = |p: Point2, (ux, uy): (f64, f64)| p.x * ux + p.y * uy;

    let mut right = 1usize;
    let mut top = 1usize;
    let mut left = 1usize;
    let mut best: Option<(f64, usize, f64, f64, f64)> = None;

    for i in 0..n {
        let a = at(i);
        let b = at(i + 1);
        let len = a.distance(b);
        let u = ((b.x - a.x) / len, (b.y - a.y) / len);
        let v = (-u.1, u.0);

        if i == 0 {
            right = 1;
        }
        while dot(at(right + 1), u) > dot(at(right), u) {
            right += 1;
        }
        if i == 0 {
            top = right;
        }
        while dot(at(top + 1), v) > dot(at(top), v) {
            top += 1;
        }
        if i == 0 {
            left = top;
        }
        while dot(at(left + 1), u) < dot(at(left), u) {
            left += 1;
        }

        let umin = dot(at(left), u) - dot(a, u);
        let umax = dot(at(right), u) - dot(a, u);
        let vmax = dot(at(top), v) - dot(a, v);
        let area = (umax - umin) * vmax;
        if best.is_none_or(|(best_area, ..)| area < best_area) {
            best = Some((area, i, umin, umax, vmax));
        }
    }

    let (_, i, umin, umax, vmax) = best.expect("hull has at least one edge");
    let a = at(i);
    let b = at(i + 1);
    let len = a.distance(b);
    let (ux, uy) = ((b.x - a.x) / len, (b.y - a.y) / len);
    let (vx, vy) = (-uy, ux);
    let mu = 0.5 * (umin + umax);
    let mv = 0.5 * vmax;
    RotatedBox::normalized(
        a.x + ux * mu + vx * mv,
        a.y + uy * mu + vy * mv,
        umax - umin,
        vmax,
        uy.atan2(ux),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::angle_distance_mod_pi;

    fn p(x: f64, y: f64) -> Point2 {
        Point2 { x, y }
    }

    #[test]
    fn hull_drops_interior_and_collinear() {
        let pts = [p(0., 0.), p(1., 0.), p(2., 0.), p(2., 2.), p(0., 2.), p(1., 1.)];
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
        assert!(crate::geom::shoelace(&h) > 0.0);
    }

    #[test]
    fn axis_aligned_rectangle() {
        let r = min_area_rect(&[p(0., 0.), p(6., 0.), p(6., 2.), p(0., 2.)]).unwrap();
        assert!((r.cx() - 3.0).abs() < 1e-12 && (r.cy() - 1.0).abs() < 1e-12);
        assert!((r.w() - 6.0).abs() < 1e-12 && (r.h() - 2.0).abs() < 1e-12);
        assert_eq!(angle_distance_mod_pi(r.theta(), 0.0), 0.0);
    }

    #[test]
    fn rotated_rectangle_is_its_own_fit() {
        let b = RotatedBox::new(10.0, -4.0, 30.0, 7.0, 0.61).unwrap();
        let r = min_area_rect(&b.corners()).unwrap();
        assert!(r.center().distance(b.center()) < 1e-6);
        assert!((r.w() - b.w()).abs() < 1e-6 && (r.h() - b.h()).abs() < 1e-6);
        assert!(angle_distance_mod_pi(r.theta(), b.theta()) < 1e-6);
    }

    #[test]
    fn collinear_points_rejected() {
        assert!(min_area_rect(&[p(0., 0.), p(1., 1.), p(3., 3.)]).is_err());
        assert!(min_area_rect(&[p(0., 0.), p(1., 1.)]).is_err());
        assert!(min_area_rect(&[p(0., 0.), p(1., 1.), p(f64::NAN, 3.)]).is_err());
    }

    #[test]
    fn triangle_fit_contains_points() {
        let pts = [p(0., 0.), p(4., 1.), p(1., 3.)];
        let r = min_area_rect(&pts).unwrap();
        for q in pts {
            let (u, v) = r.local_coords(q);
            assert!(u.abs() <= 0.5 * r.w() + 1e-9 && v.abs() <= 0.5 * r.h() + 1e-9);
        }
    }
}
