//! Rotated rectangles, quadrilaterals, and the angle conventions shared by
//! every other module.
//!
//! Coordinates are image pixels with `y` pointing down. A [`RotatedBox`]
//! stores its long side as `w`, its short side as `h`, and the direction of
//! the long side as `theta`, always in the half-open interval `[-π/2, π/2)`.

mod augment;

pub use augment::{apply_rotation, rotate_box, AugmentTransform};

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{invalid_geometry, invalid_input, Result};

/// Area below which a quadrilateral is treated as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    /// Builds a point, rejecting NaN and infinite coordinates.
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(invalid_input(format!("non-finite point ({x}, {y})")));
        }
        Ok(Self { x, y })
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn midpoint(self, other: Point2) -> Point2 {
        Point2 {
            x: 0.5 * (self.x + other.x),
            y: 0.5 * (self.y + other.y),
        }
    }
}

/// Oriented rectangle `(cx, cy, w, h, theta)` with `w >= h > 0` and
/// `theta` in `[-π/2, π/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatedBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    theta: f64,
}

impl RotatedBox {
    /// Strict constructor: every invariant must already hold.
    pub fn new(cx: f64, cy: f64, w: f64, h: f64, theta: f64) -> Result<Self> {
        check_finite(&[cx, cy, w, h, theta])?;
        if h <= 0.0 {
            return Err(invalid_geometry(format!("box height must be positive, got {h}")));
        }
        if w < h {
            return Err(invalid_geometry(format!("box width {w} is shorter than height {h}")));
        }
        if w * h <= 0.0 {
            return Err(invalid_geometry(format!("box {w}x{h} has zero area")));
        }
        if !(-FRAC_PI_2..FRAC_PI_2).contains(&theta) {
            return Err(invalid_geometry(format!("box angle {theta} outside [-pi/2, pi/2)")));
        }
        Ok(Self { cx, cy, w, h, theta })
    }

    /// Builds a box from arbitrary positive sides and any finite angle,
    /// swapping the sides (and turning the angle by π/2) when `h > w`.
    pub fn normalized(cx: f64, cy: f64, w: f64, h: f64, theta: f64) -> Result<Self> {
        check_finite(&[cx, cy, w, h, theta])?;
        if !(w > 0.0 && h > 0.0) {
            return Err(invalid_geometry(format!("box sides must be positive, got {w}x{h}")));
        }
        let (w, h, theta) = if h > w {
            (h, w, theta + FRAC_PI_2)
        } else {
            (w, h, theta)
        };
        Self::new(cx, cy, w, h, canonicalize_angle(theta))
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn center(&self) -> Point2 {
        Point2 { x: self.cx, y: self.cy }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Unit vector along the long side.
    pub fn axis(&self) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (c, s)
    }

    /// The four corners, counter-clockwise in a y-up frame, starting from
    /// the corner at local offset `(-w/2, -h/2)`.
    pub fn corners(&self) -> [Point2; 4] {
        let (c, s) = self.axis();
        let hw = 0.5 * self.w;
        let hh = 0.5 * self.h;
        [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)].map(|(lx, ly)| Point2 {
            x: self.cx + lx * c - ly * s,
            y: self.cy + lx * s + ly * c,
        })
    }

    /// Radius of the circumscribed circle.
    pub fn circumradius(&self) -> f64 {
        0.5 * self.w.hypot(self.h)
    }

    /// Whether `p` lies inside the box, measured in the box frame, with
    /// the half-extents scaled by `(sx, sy)`. Boundary points are outside.
    pub fn contains_scaled(&self, p: Point2, sx: f64, sy: f64) -> bool {
        let (u, v) = self.local_coords(p);
        u.abs() < 0.5 * sx * self.w && v.abs() < 0.5 * sy * self.h
    }

    /// Strict interior test in the box frame.
    pub fn contains(&self, p: Point2) -> bool {
        self.contains_scaled(p, 1.0, 1.0)
    }

    /// Coordinates of `p` along the long and short axes, relative to the
    /// box centre.
    pub fn local_coords(&self, p: Point2) -> (f64, f64) {
        let (c, s) = self.axis();
        let dx = p.x - self.cx;
        let dy = p.y - self.cy;
        (dx * c + dy * s, -dx * s + dy * c)
    }

    pub fn to_quad(&self) -> Quad {
        rotated_box_to_quad(self)
    }

    pub(crate) fn from_parts_unchecked(cx: f64, cy: f64, w: f64, h: f64, theta: f64) -> Self {
        debug_assert!(w >= h && h > 0.0 && (-FRAC_PI_2..FRAC_PI_2).contains(&theta));
        Self { cx, cy, w, h, theta }
    }
}

/// Convex, simple, non-degenerate quadrilateral in storage order A, B, C, D.
/// Either winding is accepted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad {
    vertices: [Point2; 4],
}

impl Quad {
    pub fn new(vertices: [Point2; 4]) -> Result<Self> {
        for p in &vertices {
            check_finite(&[p.x, p.y])?;
        }
        let area = shoelace(&vertices).abs();
        if area.is_nan() || area <= DEGENERATE_AREA {
            return Err(invalid_input(format!("degenerate quad (area {area})")));
        }
        // All turns must share a sign; near-zero turns count as straight.
        let mut pos = false;
        let mut neg = false;
        for i in 0..4 {
            let a = vertices[i];
            let b = vertices[(i + 1) % 4];
            let c = vertices[(i + 2) % 4];
            let (e1x, e1y) = (b.x - a.x, b.y - a.y);
            let (e2x, e2y) = (c.x - b.x, c.y - b.y);
            let cross = e1x * e2y - e1y * e2x;
            let scale = e1x.hypot(e1y) * e2x.hypot(e2y);
            if cross > 1e-9 * scale {
                pos = true;
            } else if cross < -1e-9 * scale {
                neg = true;
            }
        }
        if pos && neg {
            return Err(invalid_geometry("quad is not convex or self-intersecting"));
        }
        Ok(Self { vertices })
    }

    /// Parses eight coordinates `x1 y1 ... x4 y4`.
    pub fn from_coords(c: [f64; 8]) -> Result<Self> {
        Self::new([
            Point2 { x: c[0], y: c[1] },
            Point2 { x: c[2], y: c[3] },
            Point2 { x: c[4], y: c[5] },
            Point2 { x: c[6], y: c[7] },
        ])
    }

    pub fn vertices(&self) -> &[Point2; 4] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        shoelace(&self.vertices).abs()
    }

    pub fn coords(&self) -> [f64; 8] {
        let v = &self.vertices;
        [v[0].x, v[0].y, v[1].x, v[1].y, v[2].x, v[2].y, v[3].x, v[3].y]
    }
}

/// Signed area of a closed polygon; positive when counter-clockwise in a
/// y-up frame.
pub(crate) fn shoelace(pts: &[Point2]) -> f64 {
    let n = pts.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    0.5 * acc
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(invalid_input(format!("non-finite value in {values:?}")))
    }
}

/// Direction of the segment `a -> b`, folded into `[-π/2, π/2)`.
fn direction_angle(a: Point2, b: Point2) -> f64 {
    canonicalize_angle((b.y - a.y).atan2(b.x - a.x))
}

/// Converts a quadrilateral annotation to a rotated box.
///
/// The centre is the vertex mean and the sides are the longer and shorter
/// of `|AB|` and `|AD|`. The angle follows the longer of the two midlines
/// `EG` and `HF`, where E, F, G, H are the midpoints of AB, BC, CD and DA.
/// When both midlines have the same length the `HF` branch is taken.
pub fn quad_to_rotated_box(q: &Quad) -> RotatedBox {
    let [a, b, c, d] = q.vertices;
    let cx = (a.x + b.x + c.x + d.x) / 4.0;
    let cy = (a.y + b.y + c.y + d.y) / 4.0;
    let ab = a.distance(b);
    let ad = a.distance(d);
    let (w, h) = (ab.max(ad), ab.min(ad));

    let e = a.midpoint(b);
    let f = b.midpoint(c);
    let g = c.midpoint(d);
    let hm = d.midpoint(a);
    let theta = if e.distance(g) > hm.distance(f) {
        direction_angle(e, g)
    } else {
        direction_angle(hm, f)
    };
    RotatedBox::from_parts_unchecked(cx, cy, w, h, theta)
}

/// Corners of `b` as a quad, in the order of [`RotatedBox::corners`].
pub fn rotated_box_to_quad(b: &RotatedBox) -> Quad {
    Quad { vertices: b.corners() }
}

/// Folds any finite angle into `[-π/2, π/2)` by adding a multiple of π.
pub fn canonicalize_angle(theta: f64) -> f64 {
    if (-FRAC_PI_2..FRAC_PI_2).contains(&theta) {
        return theta;
    }
    let mut t = theta - PI * ((theta + FRAC_PI_2) / PI).floor();
    if t >= FRAC_PI_2 {
        t -= PI;
    }
    if t < -FRAC_PI_2 {
        t += PI;
    }
    t
}

/// Smallest absolute difference between two angles modulo π.
pub fn angle_distance_mod_pi(a: f64, b: f64) -> f64 {
    canonicalize_angle(a - b).abs()
}

/// Maps an angle in `[-π/2, π/2]` linearly onto `[0, 1]`.
pub fn angle_to_unit(theta_g: f64) -> f64 {
    theta_g / PI + 0.5
}

/// Inverse of [`angle_to_unit`].
pub fn unit_to_angle(t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(invalid_input(format!("normalized angle {t} outside [0, 1]")));
    }
    Ok(PI * (t - 0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_4, SQRT_2};

    fn p(x: f64, y: f64) -> Point2 {
        Point2 { x, y }
    }

    fn quad(c: [f64; 8]) -> Quad {
        Quad::from_coords(c).unwrap()
    }

    #[test]
    fn axis_aligned_quad() {
        let b = quad_to_rotated_box(&quad([0., 0., 4., 0., 4., 2., 0., 2.]));
        assert_eq!((b.cx(), b.cy(), b.w(), b.h(), b.theta()), (2.0, 1.0, 4.0, 2.0, 0.0));
    }

    #[test]
    fn diagonal_quad() {
        let b = quad_to_rotated_box(&quad([0., 0., 2., 2., 1., 3., -1., 1.]));
        assert!((b.cx() - 0.5).abs() < 1e-12);
        assert!((b.cy() - 1.5).abs() < 1e-12);
        assert!((b.w() - 2.0 * SQRT_2).abs() < 1e-12);
        assert!((b.h() - SQRT_2).abs() < 1e-12);
        assert!((b.theta() - FRAC_PI_4).abs() < 1e-12);
        // regenerate the vertices from the fitted box and compare as sets
        let corners = b.corners();
        for v in quad([0., 0., 2., 2., 1., 3., -1., 1.]).vertices() {
            assert!(corners.iter().any(|c| c.distance(*v) < 1e-9), "{v:?} missing");
        }
    }

    #[test]
    fn square_tie_takes_hf_branch() {
        let b = quad_to_rotated_box(&quad([0., 0., 1., 0., 1., 1., 0., 1.]));
        assert_eq!(b.theta(), 0.0);
        assert_eq!((b.w(), b.h()), (1.0, 1.0));
    }

    #[test]
    fn vertical_long_side() {
        // long side along y: EG is vertical and longer
        let b = quad_to_rotated_box(&quad([0., 0., 2., 0., 2., 6., 0., 6.]));
        assert_eq!(b.w(), 6.0);
        assert_eq!(b.theta(), -FRAC_PI_2);
    }

    #[test]
    fn quad_rejects_degenerate_and_bowtie() {
        assert!(matches!(
            Quad::from_coords([0., 0., 1., 1., 2., 2., 3., 3.]),
            Err(crate::Error::InvalidInput(_))
        ));
        assert!(matches!(
            Quad::from_coords([0., 0., 2., 2., 2., 0., 0., 1.]),
            Err(crate::Error::InvalidGeometry(_))
        ));
        assert!(Quad::from_coords([0., 0., f64::NAN, 0., 1., 1., 0., 1.]).is_err());
        // clockwise winding is fine
        assert!(Quad::from_coords([0., 0., 0., 1., 1., 1., 1., 0.]).is_ok());
    }

    #[test]
    fn box_to_quad_examples() {
        let q = RotatedBox::new(0., 0., 2., 2., 0.).unwrap().to_quad();
        let want = [p(-1., -1.), p(1., -1.), p(1., 1.), p(-1., 1.)];
        assert_eq!(q.vertices(), &want);

        let b = RotatedBox::normalized(0., 0., 2., 1., FRAC_PI_2).unwrap();
        // rotate the axis-aligned corners by 90 degrees
        let want = [p(-1., -0.5), p(1., -0.5), p(1., 0.5), p(-1., 0.5)].map(|c| p(-c.y, c.x));
        for c in b.corners() {
            assert!(want.iter().any(|w| w.distance(c) < 1e-12));
        }
    }

    #[test]
    fn box_constructor_invariants() {
        assert!(RotatedBox::new(0., 0., 1., 2., 0.).is_err());
        assert!(RotatedBox::new(0., 0., 2., 0., 0.).is_err());
        assert!(RotatedBox::new(0., 0., 2., 1., FRAC_PI_2).is_err());
        assert!(RotatedBox::new(0., 0., 2., 1., -FRAC_PI_2).is_ok());
        assert!(RotatedBox::new(f64::INFINITY, 0., 2., 1., 0.).is_err());
        let b = RotatedBox::normalized(0., 0., 1., 3., 0.).unwrap();
        assert_eq!((b.w(), b.h(), b.theta()), (3.0, 1.0, -FRAC_PI_2));
    }

    #[test]
    fn canonicalize_examples() {
        assert_eq!(canonicalize_angle(FRAC_PI_4), FRAC_PI_4);
        assert!((canonicalize_angle(3.0 * FRAC_PI_4) + FRAC_PI_4).abs() < 1e-15);
        assert_eq!(canonicalize_angle(FRAC_PI_2), -FRAC_PI_2);
        assert_eq!(canonicalize_angle(-FRAC_PI_2), -FRAC_PI_2);
        assert!((canonicalize_angle(-3.0 * PI + 0.1) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn unit_angle_examples() {
        assert_eq!(angle_to_unit(0.0), 0.5);
        assert_eq!(angle_to_unit(FRAC_PI_4), 0.75);
        assert_eq!(angle_to_unit(-FRAC_PI_2), 0.0);
        assert_eq!(unit_to_angle(0.5).unwrap(), 0.0);
        assert_eq!(unit_to_angle(0.75).unwrap(), FRAC_PI_4);
        assert_eq!(unit_to_angle(1.0).unwrap(), FRAC_PI_2);
        assert!(unit_to_angle(1.0001).is_err());
        assert!(unit_to_angle(-0.1).is_err());
        assert!(unit_to_angle(f64::NAN).is_err());
    }

    #[test]
    fn point_rejects_nan() {
        assert!(Point2::new(f64::NAN, 0.0).is_err());
        assert!(Point2::new(1.0, 2.0).is_ok());
    }
}
