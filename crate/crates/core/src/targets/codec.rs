use std::f64::consts::PI;

use super::LevelSpec;
use crate::error::{invalid_input, Result};
use crate::geom::{canonicalize_angle, Point2, RotatedBox};

/// `(w, h) = (k s e^dw, k s e^dh)`.
pub fn shape_decode(dw: f64, dh: f64, level: &LevelSpec) -> (f64, f64) {
    let base = level.base_size();
    (base * dw.exp(), base * dh.exp())
}

/// Inverse of [`shape_decode`].
pub fn shape_encode(w: f64, h: f64, level: &LevelSpec) -> Result<(f64, f64)> {
    if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
        return Err(invalid_input(format!("shape sizes must be positive, got {w}x{h}")));
    }
    let base = level.base_size();
    Ok(((w / base).ln(), (h / base).ln()))
}

/// Image position of cell `(i, j)`: `((i + 1/2) s, (j + 1/2) s)`.
pub fn cell_center(i: usize, j: usize, level: &LevelSpec) -> Result<Point2> {
    if i >= level.grid_w || j >= level.grid_h {
        return Err(invalid_input(format!(
            "cell ({i}, {j}) outside {}x{} grid",
            level.grid_w, level.grid_h
        )));
    }
    Ok(cell_center_unchecked(i, j, level.stride_f64()))
}

pub(crate) fn cell_center_unchecked(i: usize, j: usize, stride: f64) -> Point2 {
    Point2 {
        x: (i as f64 + 0.5) * stride,
        y: (j as f64 + 0.5) * stride,
    }
}

/// Regression offsets of a box relative to an anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxDelta {
    pub tx: f64,
    pub ty: f64,
    pub tw: f64,
    pub th: f64,
    /// Angle difference folded into `[-π/2, π/2)` and divided by π.
    pub ttheta: f64,
}

impl BoxDelta {
    pub fn as_array(&self) -> [f64; 5] {
        [self.tx, self.ty, self.tw, self.th, self.ttheta]
    }
}

pub fn box_delta_encode(gt: &RotatedBox, anchor: &RotatedBox) -> BoxDelta {
    BoxDelta {
        tx: (gt.cx() - anchor.cx()) / anchor.w(),
        ty: (gt.cy() - anchor.cy()) / anchor.h(),
        tw: (gt.w() / anchor.w()).ln(),
        th: (gt.h() / anchor.h()).ln(),
        ttheta: canonicalize_angle(gt.theta() - anchor.theta()) / PI,
    }
}

pub fn box_delta_decode(delta: &BoxDelta, anchor: &RotatedBox) -> Result<RotatedBox> {
    RotatedBox::normalized(
        anchor.cx() + delta.tx * anchor.w(),
        anchor.cy() + delta.ty * anchor.h(),
        anchor.w() * delta.tw.exp(),
        anchor.h() * delta.th.exp(),
        anchor.theta() + PI * delta.ttheta,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::angle_distance_mod_pi;

    fn level(stride: u32) -> LevelSpec {
        LevelSpec::new(stride, 5.0, 64, 64, false).unwrap()
    }

    #[test]
    fn decode_examples() {
        assert_eq!(shape_decode(0.0, 0.0, &level(4)), (20.0, 20.0));
        let (w, h) = shape_decode(2f64.ln(), 0.0, &level(4));
        assert!((w - 40.0).abs() < 1e-12);
        assert_eq!(h, 20.0);
    }

    #[test]
    fn encode_examples() {
        assert_eq!(shape_encode(20.0, 20.0, &level(4)).unwrap(), (0.0, 0.0));
        assert_eq!(shape_encode(160.0, 40.0, &level(32)).unwrap().0, 0.0);
        let (dw, _) = shape_encode(500.0, 80.0, &level(16)).unwrap();
        assert!((dw - 6.25f64.ln()).abs() < 1e-15);
        assert!((dw - 1.8326).abs() < 1e-4);
        assert!(shape_encode(0.0, 1.0, &level(4)).is_err());
        assert!(shape_encode(1.0, -3.0, &level(4)).is_err());
    }

    #[test]
    fn cell_center_examples() {
        assert_eq!(cell_center(0, 0, &level(4)).unwrap(), Point2 { x: 2.0, y: 2.0 });
        assert_eq!(cell_center(3, 4, &level(4)).unwrap(), Point2 { x: 14.0, y: 18.0 });
        assert_eq!(cell_center(0, 0, &level(32)).unwrap(), Point2 { x: 16.0, y: 16.0 });
        assert!(cell_center(64, 0, &level(4)).is_err());
        assert!(cell_center(0, 64, &level(4)).is_err());
    }

    #[test]
    fn delta_examples() {
        let anchor = RotatedBox::new(0.0, 0.0, 20.0, 10.0, 0.0).unwrap();
        let gt = RotatedBox::new(2.0, 1.0, 40.0, 10.0, 0.0).unwrap();
        let d = box_delta_encode(&gt, &anchor);
        assert_eq!(d.as_array(), [0.1, 0.1, 2f64.ln(), 0.0, 0.0]);
        assert_eq!(box_delta_encode(&anchor, &anchor).as_array(), [0.0; 5]);
    }

    #[test]
    fn delta_round_trip_across_angle_wrap() {
        let anchor = RotatedBox::new(5.0, 5.0, 30.0, 8.0, 1.5).unwrap();
        let gt = RotatedBox::new(9.0, 2.0, 33.0, 7.0, -1.5).unwrap();
        let d = box_delta_encode(&gt, &anchor);
        assert!(d.ttheta.abs() < 0.1);
        let back = box_delta_decode(&d, &anchor).unwrap();
        assert!(back.center().distance(gt.center()) < 1e-9);
        assert!((back.w() - gt.w()).abs() < 1e-9 && (back.h() - gt.h()).abs() < 1e-9);
        assert!(angle_distance_mod_pi(back.theta(), gt.theta()) < 1e-9);
    }
}
