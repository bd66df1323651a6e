//! Loss functions for the proposal network branches, each returning its
//! value together with an analytic gradient.
//!
//! Gradients are with respect to the natural input of each loss: the
//! predicted probability for the classification losses, the predicted
//! angle for the angle loss, and the log-space shape offsets `(dw, dh)` for
//! the shape loss.

use std::f64::consts::PI;

use crate::decode::PredictionMaps;
use crate::error::{invalid_input, Error, Result};
use crate::grid::Grid;
use crate::targets::{shape_decode, BoxDelta, LocationClass, TargetMaps};

/// Probabilities are clamped into `[PROB_CLAMP, 1 - PROB_CLAMP]` before
/// taking logarithms in map reductions.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64, lambda: f64, focal_alpha: f64, focal_gamma: f64) -> Result<Self> {
        let all = [alpha, beta, lambda, focal_alpha, focal_gamma];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid_input("loss weights must be finite and non-negative"));
        }
        if !(focal_alpha > 0.0 && focal_alpha < 1.0) {
            return Err(invalid_input(format!(
                "focal alpha must lie in (0, 1), got {focal_alpha}"
            )));
        }
        Ok(Self {
            alpha,
            beta,
            lambda,
            focal_alpha,
            focal_gamma,
        })
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            lambda: 0.1,
            focal_alpha: 0.25,
            focal_gamma: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub gradient: Vec<f64>,
}

impl LossValue {
    fn scalar(value: f64, d: f64) -> Self {
        Self {
            value,
            gradient: vec![d],
        }
    }
}

fn check_open_unit(name: &str, p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(invalid_input(format!(
            "{name} must lie strictly inside (0, 1), got {p}"
        )))
    }
}

fn check_label(y: u8) -> Result<()> {
    if y <= 1 {
        Ok(())
    } else {
        Err(invalid_input(format!("class label must be 0 or 1, got {y}")))
    }
}

/// Focal loss of a predicted probability `y_prime` for class `y`.
/// The gradient is `dL/dy_prime`.
pub fn focal_loss(y: u8, y_prime: f64, focal_alpha: f64, focal_gamma: f64) -> Result<LossValue> {
    check_label(y)?;
    check_open_unit("predicted probability", y_prime)?;
    let (a, g, p) = (focal_alpha, focal_gamma, y_prime);
    let out = if y == 1 {
        let q = 1.0 - p;
        let value = -a * q.powf(g) * p.ln();
        let d = a * (g * q.powf(g - 1.0) * p.ln() - q.powf(g) / p);
        LossValue::scalar(value, d)
    } else {
        let q = 1.0 - p;
        let value = -(1.0 - a) * p.powf(g) * q.ln();
        let d = -(1.0 - a) * (g * p.powf(g - 1.0) * q.ln() - p.powf(g) / q);
        LossValue::scalar(value, d)
    };
    Ok(out)
}

/// `1 - cos(theta_hat - theta_g)`, gradient with respect to `theta_hat`.
pub fn angle_loss(theta_hat: f64, theta_g: f64) -> LossValue {
    let delta = theta_hat - theta_g;
    LossValue::scalar(1.0 - delta.cos(), delta.sin())
}

pub fn smooth_l1(x: f64) -> LossValue {
    if x.abs() < 1.0 {
        LossValue::scalar(0.5 * x * x, x)
    } else {
        LossValue::scalar(x.abs() - 0.5, x.signum())
    }
}

/// One side of the bounded-IoU shape loss, with its derivative taken with
/// respect to `ln(pred)`.
fn bounded_side(pred: f64, target: f64) -> (f64, f64) {
    let (x, dx_dlog) = if pred < target {
        (1.0 - pred / target, -pred / target)
    } else {
        (1.0 - target / pred, target / pred)
    };
    let s = smooth_l1(x);
    (s.value, s.gradient[0] * dx_dlog)
}

/// Bounded-IoU shape loss between a predicted `(w, h)` and a target
/// `(wg, hg)`. The gradient is `[dL/ddw, dL/ddh]` where `w = k s e^dw`.
pub fn shape_loss(w: f64, h: f64, wg: f64, hg: f64) -> Result<LossValue> {
    if [w, h, wg, hg].iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(invalid_input(format!(
            "shape sizes must be positive, got {w}x{h} against {wg}x{hg}"
        )));
    }
    let (lw, gw) = bounded_side(w, wg);
    let (lh, gh) = bounded_side(h, hg);
    Ok(LossValue {
        value: lw + lh,
        gradient: vec![gw, gh],
    })
}

/// Binary cross entropy, gradient with respect to `p`.
pub fn conf_loss(y: u8, p: f64) -> Result<LossValue> {
    check_label(y)?;
    check_open_unit("probability", p)?;
    let out = if y == 1 {
        LossValue::scalar(-p.ln(), -1.0 / p)
    } else {
        LossValue::scalar(-(1.0 - p).ln(), 1.0 / (1.0 - p))
    };
    Ok(out)
}

/// Smooth-L1 regression loss summed over the five box offsets. The gradient
/// is with respect to the predicted offsets in `[tx, ty, tw, th, ttheta]`
/// order.
pub fn reg_loss(pred: &BoxDelta, target: &BoxDelta) -> LossValue {
    let (p, t) = (pred.as_array(), target.as_array());
    let mut value = 0.0;
    let mut gradient = Vec::with_capacity(5);
    for (a, b) in p.iter().zip(&t) {
        let s = smooth_l1(a - b);
        value += s.value;
        gradient.push(s.gradient[0]);
    }
    LossValue { value, gradient }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossComponents {
    pub conf: f64,
    pub reg: f64,
    pub loc: f64,
    pub angle: f64,
    pub shape: f64,
}

pub fn total_loss(c: &LossComponents, w: &LossWeights) -> f64 {
    c.conf + c.reg + w.alpha * c.loc + w.beta * c.angle + w.lambda * c.shape
}

/// Compensated (Neumaier) running sum, so the reduced value does not depend
/// on accumulated rounding in long maps.
#[derive(Debug, Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Mean-reduced branch losses over a level, with per-cell gradients of each
/// mean with respect to the prediction maps.
#[derive(Debug, Clone, PartialEq)]
pub struct MapLosses {
    pub loc: f64,
    pub angle: f64,
    pub shape: f64,
    pub loc_cells: usize,
    pub angle_cells: usize,
    pub shape_cells: usize,
    /// `d loc / d location_prob`.
    pub loc_grad: Grid<f64>,
    /// `d angle / d orientation` (orientation in normalized units).
    pub angle_grad: Grid<f64>,
    pub shape_grad_dw: Grid<f64>,
    pub shape_grad_dh: Grid<f64>,
}

impl MapLosses {
    /// `alpha * loc + beta * angle + lambda * shape`.
    pub fn weighted(&self, w: &LossWeights) -> f64 {
        w.alpha * self.loc + w.beta * self.angle + w.lambda * self.shape
    }
}

fn check_dims(pred: &PredictionMaps, targets: &TargetMaps) -> Result<()> {
    let want = targets.location.dims();
    for g in [&pred.location_prob, &pred.orientation, &pred.shape_dw, &pred.shape_dh] {
        if g.dims() != want {
            return Err(Error::ShapeMismatch {
                expected_w: want.0,
                expected_h: want.1,
                actual_w: g.width(),
                actual_h: g.height(),
            });
        }
    }
    if pred.level != targets.level {
        return Err(invalid_input("prediction and target levels differ"));
    }
    Ok(())
}

fn scale_grid(g: &mut Grid<f64>, n: usize) {
    if n > 0 {
        let inv = 1.0 / n as f64;
        for j in 0..g.height() {
            for i in 0..g.width() {
                let v = *g.get(i, j) * inv;
                g.set(i, j, v);
            }
        }
    }
}

/// Location, angle, and shape losses of one level. Empty masks contribute 0
/// with a zero gradient.
pub fn map_losses(pred: &PredictionMaps, targets: &TargetMaps, weights: &LossWeights) -> Result<MapLosses> {
    check_dims(pred, targets)?;
    let (gw, gh) = targets.location.dims();
    let mut loc_grad = Grid::filled(gw, gh, 0.0);
    let mut angle_grad = Grid::filled(gw, gh, 0.0);
    let mut shape_grad_dw = Grid::filled(gw, gh, 0.0);
    let mut shape_grad_dh = Grid::filled(gw, gh, 0.0);
    let (mut loc_sum, mut angle_sum, mut shape_sum) = (Neumaier::default(), Neumaier::default(), Neumaier::default());
    let (mut n_loc, mut n_angle, mut n_shape) = (0usize, 0usize, 0usize);

    for (i, j, class) in targets.location.iter_cells() {
        let y = match class {
            LocationClass::Ignore => None,
            LocationClass::Positive => Some(1),
            LocationClass::Negative => Some(0),
        };
        if let Some(y) = y {
            let p = pred.location_prob.get(i, j).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            let l = focal_loss(y, p, weights.focal_alpha, weights.focal_gamma)?;
            loc_sum.add(l.value);
            loc_grad.set(i, j, l.gradient[0]);
            n_loc += 1;
        }

        if *class != LocationClass::Negative {
            let target = *targets.orientation.get(i, j);
            let unit = *pred.orientation.get(i, j);
            if !target.is_nan() {
                if !unit.is_finite() {
                    return Err(invalid_input(format!("non-finite orientation at ({i}, {j})")));
                }
                let l = angle_loss(PI * (unit - 0.5), PI * (target - 0.5));
                angle_sum.add(l.value);
                angle_grad.set(i, j, PI * l.gradient[0]);
                n_angle += 1;
            }
        }

        if *targets.shape_valid.get(i, j) {
            let (w, h) = shape_decode(*pred.shape_dw.get(i, j), *pred.shape_dh.get(i, j), &pred.level);
            let (wg, hg) = shape_decode(*targets.shape_dw.get(i, j), *targets.shape_dh.get(i, j), &targets.level);
            let l = shape_loss(w, h, wg, hg)?;
            shape_sum.add(l.value);
            shape_grad_dw.set(i, j, l.gradient[0]);
            shape_grad_dh.set(i, j, l.gradient[1]);
            n_shape += 1;
        }
    }

    let mean = |s: Neumaier, n: usize| if n == 0 { 0.0 } else { s.total() / n as f64 };
    scale_grid(&mut loc_grad, n_loc);
    scale_grid(&mut angle_grad, n_angle);
    scale_grid(&mut shape_grad_dw, n_shape);
    scale_grid(&mut shape_grad_dh, n_shape);
    Ok(MapLosses {
        loc: mean(loc_sum, n_loc),
        angle: mean(angle_sum, n_angle),
        shape: mean(shape_sum, n_shape),
        loc_cells: n_loc,
        angle_cells: n_angle,
        shape_cells: n_shape,
        loc_grad,
        angle_grad,
        shape_grad_dw,
        shape_grad_dh,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::LevelSpec;
    use std::f64::consts::{FRAC_PI_2, LN_2};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn focal_examples() {
        let l = focal_loss(1, 1.0 - 1e-12, 0.25, 2.0).unwrap();
        assert!(l.value < 1e-20);
        let l = focal_loss(1, 0.5, 0.25, 2.0).unwrap();
        assert!(close(l.value, 0.0625 * LN_2, 1e-15));
        assert!(close(l.value, 0.04332, 1e-5));
        for y in [0, 1] {
            for p in [0.1, 0.5, 0.93] {
                let f = focal_loss(y, p, 0.5, 0.0).unwrap();
                let c = conf_loss(y, p).unwrap();
                assert!(close(f.value, 0.5 * c.value, 1e-12));
                assert!(close(f.gradient[0], 0.5 * c.gradient[0], 1e-12));
            }
        }
        assert!(focal_loss(1, 0.0, 0.25, 2.0).is_err());
        assert!(focal_loss(0, 1.0, 0.25, 2.0).is_err());
        assert!(focal_loss(2, 0.5, 0.25, 2.0).is_err());
    }

    #[test]
    fn angle_examples() {
        assert_eq!(angle_loss(0.3, 0.3).value, 0.0);
        assert!(close(angle_loss(FRAC_PI_2, 0.0).value, 1.0, 1e-15));
        assert!(close(angle_loss(-0.2, PI - 0.2).value, 2.0, 1e-15));
    }

    #[test]
    fn angle_loss_is_not_pi_periodic_until_canonicalized() {
        use crate::geom::canonicalize_angle;
        let (a, b) = (1.5, 1.5 - PI);
        assert!(close(angle_loss(a, b).value, 2.0, 1e-12));
        let ca = canonicalize_angle(a);
        let cb = canonicalize_angle(b);
        assert!(close(angle_loss(ca, cb).value, 0.0, 1e-12));
    }

    #[test]
    fn shape_examples() {
        assert_eq!(shape_loss(30.0, 10.0, 30.0, 10.0).unwrap().value, 0.0);
        assert_eq!(shape_loss(60.0, 10.0, 30.0, 10.0).unwrap().value, 0.125);
        let a = shape_loss(13.0, 7.0, 40.0, 3.0).unwrap().value;
        let b = shape_loss(40.0, 3.0, 13.0, 7.0).unwrap().value;
        assert!(close(a, b, 1e-15));
        assert!(shape_loss(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(shape_loss(1.0, 1.0, 1.0, -2.0).is_err());
    }

    #[test]
    fn smooth_l1_examples() {
        assert_eq!(smooth_l1(0.0).value, 0.0);
        assert_eq!(smooth_l1(0.5).value, 0.125);
        assert_eq!(smooth_l1(2.0).value, 1.5);
        assert_eq!(smooth_l1(-2.0).gradient, vec![-1.0]);
        // value and slope meet at the transition
        assert!(close(smooth_l1(1.0 - 1e-12).value, smooth_l1(1.0).value, 1e-11));
        assert!(close(smooth_l1(1.0 - 1e-12).gradient[0], 1.0, 1e-11));
    }

    #[test]
    fn conf_examples() {
        assert!(conf_loss(1, 1.0 - 1e-12).unwrap().value < 1e-11);
        assert!(close(conf_loss(1, 0.5).unwrap().value, LN_2, 1e-15));
        assert!(close(conf_loss(0, 0.5).unwrap().value, LN_2, 1e-15));
        assert!(conf_loss(1, 1.0).is_err());
    }

    #[test]
    fn total_examples() {
        let w = LossWeights::default();
        assert_eq!(total_loss(&LossComponents::default(), &w), 0.0);
        let ones = LossComponents {
            conf: 1.0,
            reg: 1.0,
            loc: 1.0,
            angle: 1.0,
            shape: 1.0,
        };
        assert!(close(total_loss(&ones, &w), 4.1, 1e-15));
        let no_shape = LossWeights { lambda: 0.0, ..w };
        let big_shape = LossComponents {
            shape: 1e6,
            ..LossComponents::default()
        };
        assert_eq!(total_loss(&big_shape, &no_shape), 0.0);
        assert!(LossWeights::new(1.0, 1.0, 0.1, 1.0, 2.0).is_err());
        assert!(LossWeights::new(-1.0, 1.0, 0.1, 0.25, 2.0).is_err());
    }

    #[test]
    fn reg_loss_sums_components() {
        let t = BoxDelta {
            tx: 0.0,
            ty: 0.0,
            tw: 0.0,
            th: 0.0,
            ttheta: 0.0,
        };
        let p = BoxDelta {
            tx: 0.5,
            ty: 2.0,
            tw: 0.0,
            th: -0.5,
            ttheta: 0.0,
        };
        let l = reg_loss(&p, &t);
        assert_eq!(l.value, 0.125 + 1.5 + 0.125);
        assert_eq!(l.gradient, vec![0.5, 1.0, 0.0, -0.5, 0.0]);
    }

    fn level() -> LevelSpec {
        LevelSpec::new(4, 5.0, 3, 2, true).unwrap()
    }

    fn single_positive() -> TargetMaps {
        let mut t = TargetMaps::empty(level());
        t.location.set(1, 1, LocationClass::Positive);
        t.orientation.set(1, 1, 0.75);
        t.shape_dw.set(1, 1, 0.5);
        t.shape_dh.set(1, 1, -0.2);
        t.shape_valid.set(1, 1, true);
        t
    }

    #[test]
    fn ideal_predictions_have_zero_loss() {
        let t = single_positive();
        let pred = PredictionMaps::ideal(&t);
        let l = map_losses(&pred, &t, &LossWeights::default()).unwrap();
        assert!(l.loc < 1e-15);
        assert_eq!((l.angle, l.shape), (0.0, 0.0));
        assert_eq!((l.loc_cells, l.angle_cells, l.shape_cells), (6, 1, 1));
    }

    #[test]
    fn single_cell_reductions_equal_cell_values() {
        let mut t = single_positive();
        for (i, j) in [(0, 0), (1, 0), (2, 0), (0, 1), (2, 1)] {
            t.location.set(i, j, LocationClass::Ignore);
            t.orientation.set(i, j, f64::NAN);
        }
        let mut pred = PredictionMaps::ideal(&t);
        pred.location_prob.set(1, 1, 0.6);
        pred.orientation.set(1, 1, 0.6);
        pred.shape_dw.set(1, 1, 0.1);
        pred.shape_dh.set(1, 1, 0.3);
        let w = LossWeights::default();
        let l = map_losses(&pred, &t, &w).unwrap();
        assert_eq!(l.loc, focal_loss(1, 0.6, 0.25, 2.0).unwrap().value);
        assert_eq!(l.angle, angle_loss(PI * 0.1, PI * 0.25).value);
        let (pw, ph) = shape_decode(0.1, 0.3, &t.level);
        let (gw, gh) = shape_decode(0.5, -0.2, &t.level);
        assert_eq!(l.shape, shape_loss(pw, ph, gw, gh).unwrap().value);
        assert_eq!(l.weighted(&w), l.loc + l.angle + 0.1 * l.shape);
    }

    #[test]
    fn all_ignore_gives_zero_location_loss() {
        let mut t = TargetMaps::empty(level());
        for j in 0..2 {
            for i in 0..3 {
                t.location.set(i, j, LocationClass::Ignore);
            }
        }
        let pred = PredictionMaps::ideal(&t);
        let l = map_losses(&pred, &t, &LossWeights::default()).unwrap();
        assert_eq!(l.loc, 0.0);
        assert!(l.loc_grad.as_slice().iter().all(|g| *g == 0.0));
        assert_eq!(l.loc_cells, 0);
    }

    #[test]
    fn mismatched_maps_are_rejected() {
        let t = single_positive();
        let other = TargetMaps::empty(LevelSpec::new(4, 5.0, 4, 2, true).unwrap());
        let pred = PredictionMaps::ideal(&other);
        assert!(matches!(
            map_losses(&pred, &t, &LossWeights::default()),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn neumaier_recovers_cancelled_terms() {
        let mut s = Neumaier::default();
        for x in [1.0, 1e100, 1.0, -1e100] {
            s.add(x);
        }
        assert_eq!(s.total(), 2.0);
    }
}
