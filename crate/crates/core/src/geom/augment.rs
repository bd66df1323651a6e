//! Rotation augmentation: a coordinate-only rotation about the image
//! centre, composed as `T(lw/2, lh/2) · R(θ0) · T(-lw/2, -lh/2)`.

use std::f64::consts::FRAC_PI_2;

use super::{canonicalize_angle, Point2, RotatedBox};
use crate::error::{invalid_input, Result};

type Mat3 = [[f64; 3]; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentTransform {
    lw: f64,
    lh: f64,
    theta0: f64,
}

impl AugmentTransform {
    pub fn new(lw: f64, lh: f64, theta0: f64) -> Result<Self> {
        if !(lw > 0.0 && lw.is_finite() && lh > 0.0 && lh.is_finite()) {
            return Err(invalid_input(format!("image size must be positive, got {lw}x{lh}")));
        }
        if !(-FRAC_PI_2..=FRAC_PI_2).contains(&theta0) {
            return Err(invalid_input(format!("rotation {theta0} outside [-pi/2, pi/2]")));
        }
        Ok(Self { lw, lh, theta0 })
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    pub fn center(&self) -> Point2 {
        Point2 {
            x: 0.5 * self.lw,
            y: 0.5 * self.lh,
        }
    }

    /// The same rotation in the opposite sense.
    pub fn inverse(&self) -> Self {
        Self {
            theta0: -self.theta0,
            ..*self
        }
    }

    /// The composed homogeneous matrix.
    pub fn matrix(&self) -> Mat3 {
        let (a, b) = (0.5 * self.lw, 0.5 * self.lh);
        mul(&mul(&translation(a, b), &rotation(self.theta0)), &translation(-a, -b))
    }
}

fn translation(a: f64, b: f64) -> Mat3 {
    [[1.0, 0.0, a], [0.0, 1.0, b], [0.0, 0.0, 1.0]]
}

// Note the sign layout: +sin in the first row.
fn rotation(theta: f64) -> Mat3 {
    let (s, c) = theta.sin_cos();
    [[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]]
}

fn mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Applies [`AugmentTransform::matrix`] to a point. The three factors are
/// applied one after another, so the image centre maps to itself exactly.
pub fn apply_rotation(t: &AugmentTransform, p: Point2) -> Point2 {
    let c = t.center();
    let (s, cos) = t.theta0.sin_cos();
    let (dx, dy) = (p.x - c.x, p.y - c.y);
    Point2 {
        x: cos * dx + s * dy + c.x,
        y: -s * dx + cos * dy + c.y,
    }
}

/// Moves a box under the augmentation. The matrix maps the long-axis
/// direction `(cos t, sin t)` to `(cos(t - θ0), sin(t - θ0))`, so sizes are
/// kept and the angle becomes `t - θ0`.
pub fn rotate_box(t: &AugmentTransform, b: &RotatedBox) -> RotatedBox {
    let c = apply_rotation(t, b.center());
    RotatedBox::from_parts_unchecked(c.x, c.y, b.w(), b.h(), canonicalize_angle(b.theta() - t.theta0))
}
