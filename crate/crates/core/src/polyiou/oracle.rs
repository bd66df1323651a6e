use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid_input, Result};
use crate::geom::RotatedBox;

/// Minimum sample count accepted by [`iou_oracle`].
pub const MIN_ORACLE_SAMPLES: usize = 10_000;

struct Frame {
    cx: f64,
    cy: f64,
    cos: f64,
    sin: f64,
    hw: f64,
    hh: f64,
}

impl Frame {
    fn new(b: &RotatedBox) -> Self {
        let (sin, cos) = b.theta().sin_cos();
        Self {
            cx: b.cx(),
            cy: b.cy(),
            cos,
            sin,
            hw: 0.5 * b.w(),
            hh: 0.5 * b.h(),
        }
    }

    #[inline]
    fn inside(&self, x: f64, y: f64) -> bool {
        let dx = x - self.cx;
        let dy = y - self.cy;
        (dx * self.cos + dy * self.sin).abs() < self.hw && (dy * self.cos - dx * self.sin).abs() < self.hh
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let ex = self.hw * self.cos.abs() + self.hh * self.sin.abs();
        let ey = self.hw * self.sin.abs() + self.hh * self.cos.abs();
        (self.cx - ex, self.cy - ey, self.cx + ex, self.cy + ey)
    }
}

/// Monte-Carlo IoU: uniform samples over the joint axis-aligned bounding
/// box, each classified by transforming into both box frames. Deterministic
/// for a given seed.
pub fn iou_oracle(a: &RotatedBox, b: &RotatedBox, samples: usize, seed: u64) -> Result<f64> {
    if samples < MIN_ORACLE_SAMPLES {
        return Err(invalid_input(format!(
            "oracle needs at least {MIN_ORACLE_SAMPLES} samples, got {samples}"
        )));
    }
    let fa = Frame::new(a);
    let fb = Frame::new(b);
    let (ax0, ay0, ax1, ay1) = fa.bounds();
    let (bx0, by0, bx1, by1) = fb.bounds();
    let (x0, y0) = (ax0.min(bx0), ay0.min(by0));
    let (sx, sy) = (ax1.max(bx1) - x0, ay1.max(by1) - y0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut both = 0u64;
    let mut either = 0u64;
    for _ in 0..samples {
        let x = x0 + sx * rng.random::<f64>();
        let y = y0 + sy * rng.random::<f64>();
        let ia = fa.inside(x, y);
        let ib = fb.inside(x, y);
        both += u64::from(ia && ib);
        either += u64::from(ia || ib);
    }
    if either == 0 {
        return Ok(0.0);
    }
    Ok(both as f64 / either as f64)
}
