use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::matrix::Matrix;
use crate::oracle::{Objective, SmoothnessConstants};

/// Worst observed violation ratios of the two smoothness inequalities.
/// A ratio of at most `1 + 1e-6` means the declared constant held.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeReport {
    pub trials: usize,
    /// `max ‖∇F(Y) − ∇F(X)‖⋆ / ((l0 + l1‖∇F(X)‖⋆)‖Y − X‖)`
    pub first_order_ratio: f64,
    /// `max ‖∇F(Y) − ∇F(X) − ∇²F(X)[Y − X]‖⋆ / (l2‖Y − X‖²)`
    pub second_order_ratio: f64,
}

impl ProbeReport {
    pub const SLACK: f64 = 1e-6;

    pub fn passed(&self) -> bool {
        self.first_order_ratio <= 1.0 + Self::SLACK && self.second_order_ratio <= 1.0 + Self::SLACK
    }
}

struct PairSample {
    step_norm: f64,
    grad_dual: f64,
    first_order_lhs: f64,
    second_order_lhs: f64,
}

/// `X = anchor + N(0, I)` and `Y = X + D` with `‖D‖` uniform in `(0, radius]`.
fn draw_pair<R: Rng + ?Sized>(obj: &Objective, g: &Geometry, radius: f64, rng: &mut R) -> Result<PairSample> {
    let (m, n) = obj.shape();
    let x = obj.anchor().add(&Matrix::gaussian(m, n, 1.0, rng))?;
    let mut d = Matrix::gaussian(m, n, 1.0, rng);
    let len = radius * (1.0 - rng.random::<f64>());
    d = d.scale(len / g.primal_norm(&d)?);
    let step_norm = g.primal_norm(&d)?;
    let y = x.add(&d)?;
    let gx = obj.gradient(&x)?;
    let diff = obj.gradient(&y)?.sub(&gx)?;
    let curv = diff.sub(&obj.hessian_apply(&x, &d)?)?;
    let first_order_lhs = g.dual_norm(&diff)?;
    let mut second_order_lhs = g.dual_norm(&curv)?;
    // round-off floor for objectives with an exactly linear gradient
    if second_order_lhs <= 1e3 * f64::EPSILON * (first_order_lhs + g.dual_norm(&gx)?) {
        second_order_lhs = 0.0;
    }
    Ok(PairSample { step_norm, grad_dual: g.dual_norm(&gx)?, first_order_lhs, second_order_lhs })
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else if rhs == 0.0 {
        f64::INFINITY
    } else {
        lhs / rhs
    }
}

fn check_radius(radius: f64, l1: f64) -> Result<()> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidArgument(format!("probe radius {radius} must be positive")));
    }
    if l1 > 0.0 && radius > 1.0 / l1 {
        return Err(Error::InvalidArgument(format!("probe radius {radius} exceeds 1/l1 = {}", 1.0 / l1)));
    }
    Ok(())
}

/// Empirically checks the objective's declared constants in geometry `g`.
pub fn smoothness_probe<R: Rng + ?Sized>(
    obj: &Objective,
    g: &Geometry,
    trials: usize,
    radius: f64,
    rng: &mut R,
) -> Result<ProbeReport> {
    if trials < 1 {
        return Err(Error::InvalidArgument("probe needs at least one trial".into()));
    }
    let c = obj.constants();
    check_radius(radius, c.l1)?;
    let mut report = ProbeReport { trials, first_order_ratio: 0.0, second_order_ratio: 0.0 };
    for _ in 0..trials {
        let s = draw_pair(obj, g, radius, rng)?;
        let r1 = ratio(s.first_order_lhs, (c.l0 + c.l1 * s.grad_dual) * s.step_norm);
        let r2 = ratio(s.second_order_lhs, c.l2 * s.step_norm * s.step_norm);
        report.first_order_ratio = report.first_order_ratio.max(r1);
        report.second_order_ratio = report.second_order_ratio.max(r2);
    }
    Ok(report)
}

/// Smallest `l0`, `l2` consistent with `trials` random pairs for the given
/// `l1`, multiplied by `padding`. Meant to be run once and frozen into a
/// configuration, then confirmed by [`smoothness_probe`] on fresh draws.
pub fn calibrate_constants<R: Rng + ?Sized>(
    obj: &Objective,
    g: &Geometry,
    l1: f64,
    trials: usize,
    radius: f64,
    padding: f64,
    rng: &mut R,
) -> Result<SmoothnessConstants> {
    if trials < 1 || !(padding >= 1.0) {
        return Err(Error::InvalidArgument("calibration needs trials ≥ 1 and padding ≥ 1".into()));
    }
    check_radius(radius, l1)?;
    let (mut l0, mut l2) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let s = draw_pair(obj, g, radius, rng)?;
        l0 = l0.max(s.first_order_lhs / s.step_norm - l1 * s.grad_dual);
        l2 = l2.max(s.second_order_lhs / (s.step_norm * s.step_norm));
    }
    Ok(SmoothnessConstants { l0: padding * l0.max(0.0), l1, l2: padding * l2, f_star: obj.constants().f_star })
}
