//! Constant parameter schedules, including the closed forms prescribed by the
//! convergence theorems for BUSCG and TUSCG.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// BUSCG with known tail order `p`.
    Theorem2,
    /// BUSCG, tail order unknown: `B = 1`, `β = 1 − T^{-1/2}`.
    Theorem3,
    /// TUSCG with known `p`, parametrized by the target accuracy `ε`.
    Theorem4,
    /// TUSCG, tail order unknown: `B = 1`, `β = 1 − T^{-4/7}`.
    Theorem5,
    Manual,
}

impl ScheduleKind {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Theorem2 => "theorem2",
            ScheduleKind::Theorem3 => "theorem3",
            ScheduleKind::Theorem4 => "theorem4",
            ScheduleKind::Theorem5 => "theorem5",
            ScheduleKind::Manual => "manual",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub batch: usize,
    pub beta: f64,
    pub eta: f64,
    /// Extrapolation coefficient of the transported method; `None` means
    /// `β/(1 − β)`.
    pub alpha_transport: Option<f64>,
    pub kind: ScheduleKind,
}

impl Schedule {
    pub fn manual(batch: usize, beta: f64, eta: f64) -> Result<Self> {
        let s = Self { batch, beta, eta, alpha_transport: None, kind: ScheduleKind::Manual };
        s.validate()?;
        Ok(s)
    }

    pub fn with_transport(mut self, alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("transport coefficient {alpha} must be finite and ≥ 0")));
        }
        self.alpha_transport = Some(alpha);
        Ok(self)
    }

    /// `β ∈ [0, 1]`, `η` finite and positive, `B ≥ 1`. The transported method
    /// additionally rejects `β = 1` when the default coefficient is used.
    pub fn validate(&self) -> Result<()> {
        if self.batch < 1 {
            return Err(Error::InvalidArgument("batch must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidArgument(format!("beta = {} must lie in [0, 1]", self.beta)));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidArgument(format!("eta = {} must be finite and positive", self.eta)));
        }
        Ok(())
    }

    /// Coefficient of `X_t − X_{t−1}` in the transported query point.
    pub fn transport_coefficient(&self) -> Result<f64> {
        match self.alpha_transport {
            Some(a) => Ok(a),
            None if self.beta >= 1.0 => Err(Error::InvalidArgument(
                "beta = 1 makes the default transport coefficient β/(1−β) infinite".into(),
            )),
            None => Ok(self.beta / (1.0 - self.beta)),
        }
    }
}

/// Problem constants entering the theorem schedules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremConstants {
    pub p: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    pub l0: f64,
    pub l1: f64,
    pub l2: f64,
    /// `F(X₀) − F⋆`.
    pub delta0: f64,
    /// `‖∇F(X₀)‖⋆`.
    pub grad0_dual: f64,
    /// Martingale factor of the dual norm.
    pub tau_star: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Iterations(u64),
    Accuracy(f64),
}

/// `a / b` with the convention `a / 0 = +∞` used by the step-size caps.
fn cap(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        f64::INFINITY
    } else {
        a / b
    }
}

fn iterations(kind: ScheduleKind, horizon: Horizon) -> Result<f64> {
    match horizon {
        Horizon::Iterations(t) if t >= 1 => Ok(t as f64),
        Horizon::Iterations(_) => Err(Error::InvalidArgument("horizon T must be at least 1".into())),
        Horizon::Accuracy(_) => Err(Error::InvalidArgument(format!(
            "{} takes an iteration horizon T, not an accuracy",
            kind.name()
        ))),
    }
}

fn require_positive(name: &str, v: f64, kind: ScheduleKind) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{} requires {name} > 0, got {v}", kind.name())))
    }
}

fn require_zero_sigma1(c: &TheoremConstants, kind: ScheduleKind) -> Result<()> {
    if c.sigma1 == 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{} assumes sigma1 = 0, got {}", kind.name(), c.sigma1)))
    }
}

/// Evaluates the closed-form parameter choice of a convergence theorem.
pub fn theorem_schedule(kind: ScheduleKind, c: &TheoremConstants, horizon: Horizon) -> Result<Schedule> {
    let p = c.p;
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::InvalidArgument(format!("p = {p} must lie in (1, 2]")));
    }
    for (name, v) in [("sigma0", c.sigma0), ("sigma1", c.sigma1), ("l0", c.l0), ("l1", c.l1), ("l2", c.l2)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::InvalidArgument(format!("{name} = {v} must be finite and nonnegative")));
        }
    }
    let sched = match kind {
        ScheduleKind::Theorem2 => theorem2(c, iterations(kind, horizon)?)?,
        ScheduleKind::Theorem3 => {
            require_zero_sigma1(c, kind)?;
            let t = iterations(kind, horizon)?;
            let eta = t.powf(-0.75).min(cap(1.0, 8.0 * c.l1 * t.sqrt()));
            Schedule { batch: 1, beta: 1.0 - 1.0 / t.sqrt(), eta, alpha_transport: None, kind }
        }
        ScheduleKind::Theorem4 => theorem4(c, horizon)?,
        ScheduleKind::Theorem5 => {
            require_zero_sigma1(c, kind)?;
            let t = iterations(kind, horizon)?;
            let t47 = t.powf(4.0 / 7.0);
            let eta = t.powf(-5.0 / 7.0).min(cap(1.0, 8.0 * c.l1 * t47));
            Schedule { batch: 1, beta: 1.0 - 1.0 / t47, eta, alpha_transport: None, kind }
        }
        ScheduleKind::Manual => {
            return Err(Error::InvalidArgument("manual schedules are not derived from constants".into()))
        }
    };
    sched.validate().map_err(|e| Error::Configuration(format!("{}: {e}", kind.name())))?;
    Ok(sched)
}

fn theorem2(c: &TheoremConstants, t: f64) -> Result<Schedule> {
    let kind = ScheduleKind::Theorem2;
    require_positive("sigma0", c.sigma0, kind)?;
    require_positive("l0", c.l0, kind)?;
    require_positive("tau_star", c.tau_star, kind)?;
    if !(c.delta0 >= 0.0) || !(c.grad0_dual >= 0.0) {
        return Err(Error::InvalidArgument("delta0 and grad0_dual must be nonnegative".into()));
    }
    let p = c.p;
    let q = p / (p - 1.0);
    let batch_real = (16.0 * c.tau_star * c.sigma1).powf(q).ceil();
    if !batch_real.is_finite() || batch_real > u32::MAX as f64 {
        return Err(Error::Configuration(format!("theorem2: batch size {batch_real} is not representable")));
    }
    let batch = (batch_real as usize).max(1);
    let b = batch as f64;
    let ts = c.tau_star * c.sigma0;
    let a0 = c.l1 * c.delta0 + c.tau_star * (c.sigma0 + c.sigma1 * c.grad0_dual) * b.powf(-(p - 1.0) / p);
    let e1 = p / (2.0 * p - 1.0);
    let branch1 = a0.powf(e1) * b.powf((p - 1.0) / (2.0 * p - 1.0)) / (ts * t).powf(e1);
    let e2 = 3.0 * p - 2.0;
    let branch2 = (c.l0 * c.delta0).powf(p / e2) * b.powf((2.0 * p - 2.0) / e2)
        / (ts.powf(2.0 * p / e2) * t.powf(p / e2));
    let alpha = branch1.max(branch2).min(1.0);
    if !(alpha > 0.0) {
        return Err(Error::Configuration(format!(
            "theorem2: momentum weight alpha = {alpha} (delta0 = {}, A0 = {a0})",
            c.delta0
        )));
    }
    let eta = (alpha * c.delta0 / (c.l0 * t)).sqrt().min(cap(alpha, 8.0 * c.l1));
    Ok(Schedule { batch, beta: 1.0 - alpha, eta, alpha_transport: None, kind })
}

fn theorem4(c: &TheoremConstants, horizon: Horizon) -> Result<Schedule> {
    let kind = ScheduleKind::Theorem4;
    let eps = match horizon {
        Horizon::Accuracy(e) if e > 0.0 && e.is_finite() => e,
        Horizon::Accuracy(e) => return Err(Error::InvalidArgument(format!("accuracy {e} must be positive"))),
        Horizon::Iterations(_) => {
            return Err(Error::InvalidArgument("theorem4 takes an accuracy ε, not an iteration horizon".into()))
        }
    };
    require_positive("sigma0", c.sigma0, kind)?;
    require_positive("l2", c.l2, kind)?;
    require_positive("tau_star", c.tau_star, kind)?;
    let q = c.p / (c.p - 1.0);
    let ts = c.tau_star * c.sigma0;
    let lead = (ts / eps.sqrt()).max(c.tau_star * c.sigma1 * c.l0 / (c.l2 * eps).sqrt());
    let batch_real = lead.powf(q).ceil();
    if !batch_real.is_finite() || batch_real > u32::MAX as f64 {
        return Err(Error::Configuration(format!("theorem4: batch size {batch_real} is not representable")));
    }
    let batch = (batch_real as usize).max(1);
    let b = batch as f64;
    let beta = 1.0 - b * (eps / (3.0 * ts)).powf(q);
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Configuration(format!(
            "theorem4: beta = {beta} outside [0, 1) for eps = {eps}, B = {batch}; eps is not small enough"
        )));
    }
    let eta = (1.0 - beta) / 20.0 * (eps / c.l2).sqrt();
    if c.l1 > 0.0 && eta > (1.0 - beta) / (8.0 * c.l1) {
        return Err(Error::Configuration(format!(
            "theorem4: eta = {eta} exceeds (1 − β)/(8 L1) = {}",
            (1.0 - beta) / (8.0 * c.l1)
        )));
    }
    if b < (8.0 * c.tau_star * c.sigma1).powf(q) {
        return Err(Error::Configuration(format!(
            "theorem4: batch {batch} below (8 τ σ1)^(p/(p−1)) = {}",
            (8.0 * c.tau_star * c.sigma1).powf(q)
        )));
    }
    Ok(Schedule { batch, beta, eta, alpha_transport: None, kind })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn consts() -> TheoremConstants {
        TheoremConstants {
            p: 1.5,
            sigma0: 1.0,
            sigma1: 0.0,
            l0: 2.0,
            l1: 0.0,
            l2: 1.0,
            delta0: 3.0,
            grad0_dual: 4.0,
            tau_star: 2.0,
        }
    }

    #[test]
    fn theorem2_without_relative_noise_uses_unit_batch() {
        let s = theorem_schedule(ScheduleKind::Theorem2, &consts(), Horizon::Iterations(1000)).unwrap();
        assert_eq!(s.batch, 1);
        assert!(s.beta >= 0.0 && s.beta < 1.0);
    }

    #[test]
    fn theorem2_matches_hand_evaluation() {
        // p = 2: B = max(1, ⌈(16·2·0.1)²⌉) = ⌈10.24⌉ = 11
        let c = TheoremConstants { p: 2.0, sigma1: 0.1, l1: 0.5, ..consts() };
        let t: f64 = 10_000.0;
        let s = theorem_schedule(ScheduleKind::Theorem2, &c, Horizon::Iterations(10_000)).unwrap();
        assert_eq!(s.batch, 11);
        let b: f64 = 11.0;
        let a0 = 0.5 * 3.0 + 2.0 * (1.0 + 0.1 * 4.0) / b.sqrt();
        let br1 = a0.powf(2.0 / 3.0) * b.powf(1.0 / 3.0) / (2.0 * t).powf(2.0 / 3.0);
        let br2 = (6.0f64).powf(0.5) * b.powf(0.5) / (2.0f64.powf(1.0) * t.powf(0.5));
        let alpha = br1.max(br2).min(1.0);
        assert!((s.beta - (1.0 - alpha)).abs() < 1e-15);
        let eta = (alpha * 3.0 / (2.0 * t)).sqrt().min(alpha / 4.0);
        assert!((s.eta - eta).abs() < 1e-15);
    }

    #[test]
    fn theorem2_alpha_clamps_to_one() {
        // huge Δ₀ saturates both branches
        let c = TheoremConstants { delta0: 1e12, ..consts() };
        let s = theorem_schedule(ScheduleKind::Theorem2, &c, Horizon::Iterations(10)).unwrap();
        assert_eq!(s.beta, 0.0);
    }

    #[test]
    fn theorem3_hand_values() {
        let s = theorem_schedule(ScheduleKind::Theorem3, &consts(), Horizon::Iterations(10_000)).unwrap();
        assert_eq!(s.batch, 1);
        assert!((s.beta - 0.99).abs() < 1e-15);
        assert!((s.eta - 1e-3).abs() < 1e-15);
        // 1/(8·L1·√T) = 1/1600 < T^{-3/4}
        let capped = TheoremConstants { l1: 2.0, ..consts() };
        let s = theorem_schedule(ScheduleKind::Theorem3, &capped, Horizon::Iterations(10_000)).unwrap();
        assert!((s.eta - 1.0 / 1600.0).abs() < 1e-15);
    }

    #[test]
    fn theorem5_powers_of_two() {
        let s = theorem_schedule(ScheduleKind::Theorem5, &consts(), Horizon::Iterations(1 << 21)).unwrap();
        assert!((s.beta - (1.0 - 2f64.powi(-12))).abs() < 1e-15);
        assert!((s.eta / 2f64.powi(-15) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn theorem4_admissible_and_inadmissible_accuracy() {
        let c = TheoremConstants { sigma0: 1.0, tau_star: 1.0, ..consts() };
        let s = theorem_schedule(ScheduleKind::Theorem4, &c, Horizon::Accuracy(0.01)).unwrap();
        // B = ⌈(1/0.1)^3⌉ = 1000, β = 1 − 1000·(0.01/3)^3
        assert_eq!(s.batch, 1000);
        assert!((s.beta - (1.0 - 1000.0 * (0.01f64 / 3.0).powi(3))).abs() < 1e-12);
        assert!((s.eta - (1.0 - s.beta) / 20.0 * 0.1).abs() < 1e-15);

        let err = theorem_schedule(ScheduleKind::Theorem4, &c, Horizon::Accuracy(5.0)).unwrap_err();
        assert!(matches!(err, Error::Configuration(_)), "{err}");
    }

    #[test]
    fn invalid_inputs() {
        let bad_p = TheoremConstants { p: 2.5, ..consts() };
        assert!(theorem_schedule(ScheduleKind::Theorem3, &bad_p, Horizon::Iterations(10)).is_err());
        let one = TheoremConstants { p: 1.0, ..consts() };
        assert!(theorem_schedule(ScheduleKind::Theorem3, &one, Horizon::Iterations(10)).is_err());
        assert!(theorem_schedule(ScheduleKind::Theorem3, &consts(), Horizon::Accuracy(0.1)).is_err());
        let rel = TheoremConstants { sigma1: 0.5, ..consts() };
        assert!(theorem_schedule(ScheduleKind::Theorem5, &rel, Horizon::Iterations(10)).is_err());
        assert!(Schedule::manual(0, 0.5, 0.1).is_err());
        assert!(Schedule::manual(1, 1.5, 0.1).is_err());
        assert!(Schedule::manual(1, 0.5, 0.0).is_err());
    }

    #[test]
    fn default_transport_coefficient() {
        assert_eq!(Schedule::manual(1, 0.5, 0.1).unwrap().transport_coefficient().unwrap(), 1.0);
        assert!(Schedule::manual(1, 1.0, 0.1).unwrap().transport_coefficient().is_err());
        let s = Schedule::manual(1, 1.0, 0.1).unwrap().with_transport(0.3).unwrap();
        assert_eq!(s.transport_coefficient().unwrap(), 0.3);
    }
}
