//! Scale-invariant stochastic conditional gradient methods.
//!
//! All three methods keep a heavy-ball momentum
//! `m_{t+1} = β m_t + (1 − β) Ḡ_t` and move by a fixed primal length:
//! `X_{t+1} = X_t + η · lmo(·)`.
//!
//! * [`buscg_step`] draws `Ḡ_t` at `X_t` and steps along `lmo(m_{t+1})`.
//! * [`tuscg_step`] draws `Ḡ_t` at the transported point
//!   `Y_t = X_t + α (X_t − X_{t−1})`, `α = β/(1 − β)` unless overridden.
//! * [`nesterov_lmo_step`] draws at `X_t` and steps along
//!   `lmo((1 − β) m_{t+1} + β Ḡ_t)`.

mod schedule;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::oracle::GradientOracle;

pub use schedule::{theorem_schedule, Horizon, Schedule, ScheduleKind, TheoremConstants};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Buscg,
    Tuscg,
    Nesterov,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Buscg => "buscg",
            Algorithm::Tuscg => "tuscg",
            Algorithm::Nesterov => "nesterov",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "buscg" => Ok(Algorithm::Buscg),
            "tuscg" => Ok(Algorithm::Tuscg),
            "nesterov" => Ok(Algorithm::Nesterov),
            other => Err(Error::InvalidArgument(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Exact objective value and dual gradient norm at `X_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistoryEntry {
    pub t: u64,
    pub f_value: f64,
    pub grad_dual_norm: f64,
    /// Cumulative stochastic gradient calls spent before reaching `X_t`.
    pub oracle_calls: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    /// `X_t`
    pub x: Matrix,
    /// `X_{t−1}`
    pub x_prev: Matrix,
    /// `m_t`
    pub momentum: Matrix,
    pub t: u64,
    pub oracle_calls: u64,
    pub history: Vec<HistoryEntry>,
}

/// Everything a step computed, for replay checks.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    /// The step moved `X_t` to `X_{t+1}`.
    pub t: u64,
    pub beta: f64,
    /// Where the gradient was drawn (`X_t`, or `Y_t` for TUSCG).
    pub query: Matrix,
    /// `Ḡ_t`
    pub grad: Matrix,
    /// `m_t`; `None` for the initialization step, which sets `m₁ = Ḡ₀`.
    pub prev_momentum: Option<Matrix>,
    /// `m_{t+1}`
    pub momentum: Matrix,
    /// The matrix handed to the oracle.
    pub lmo_input: Matrix,
    /// `X_{t+1} − X_t = η · lmo(lmo_input)`
    pub direction: Matrix,
}

impl StepTrace {
    /// `m_{t+1} − (β m_t + (1 − β) Ḡ_t)`, recomputed independently of the step.
    pub fn momentum_residual(&self) -> Result<Matrix> {
        match &self.prev_momentum {
            None => self.momentum.sub(&self.grad),
            Some(prev) => self.momentum.sub(&momentum_update(prev, &self.grad, self.beta)?),
        }
    }
}

/// `β m + (1 − β) g`, evaluated entrywise in that order.
pub fn momentum_update(momentum: &Matrix, grad: &Matrix, beta: f64) -> Result<Matrix> {
    Matrix::lincomb(beta, momentum, 1.0 - beta, grad)
}

/// `(1 − β) m_{t+1} + β Ḡ_t`.
pub fn nesterov_blend(momentum_next: &Matrix, grad: &Matrix, beta: f64) -> Result<Matrix> {
    Matrix::lincomb(1.0 - beta, momentum_next, beta, grad)
}

/// `X_t + α (X_t − X_{t−1})`; exactly `X_t` when `α = 0`.
pub fn transport_point(x: &Matrix, x_prev: &Matrix, alpha: f64) -> Result<Matrix> {
    if alpha == 0.0 {
        return Ok(x.clone());
    }
    x.add_scaled(alpha, &x.sub(x_prev)?)
}

impl OptState {
    /// Initialization shared by all methods: `m₁ = Ḡ₀` drawn at `X₀` and
    /// `X₁ = X₀ + η lmo(m₁)`.
    pub fn initialize<R: Rng + ?Sized>(
        x0: Matrix,
        sched: &Schedule,
        oracle: &GradientOracle,
        rng: &mut R,
    ) -> Result<(Self, StepTrace)> {
        sched.validate()?;
        let mut state = OptState {
            x: x0.clone(),
            x_prev: x0.clone(),
            momentum: Matrix::zeros(x0.rows(), x0.cols()),
            t: 0,
            oracle_calls: 0,
            history: Vec::new(),
        };
        state.record(oracle)?;
        let sample = oracle.sample_batch_grad(&x0, sched.batch, rng)?;
        state.oracle_calls += sample.oracle_calls;
        let momentum = sample.mean_grad.clone();
        let trace = state.advance(sched, oracle, x0, sample.mean_grad, None, momentum.clone(), momentum)?;
        Ok((state, trace))
    }

    fn record(&mut self, oracle: &GradientOracle) -> Result<()> {
        let obj = oracle.objective();
        let grad = obj.gradient(&self.x)?;
        self.history.push(HistoryEntry {
            t: self.t,
            f_value: obj.value(&self.x)?,
            grad_dual_norm: oracle.geometry().dual_norm(&grad)?,
            oracle_calls: self.oracle_calls,
        });
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn advance(
        &mut self,
        sched: &Schedule,
        oracle: &GradientOracle,
        query: Matrix,
        grad: Matrix,
        prev_momentum: Option<Matrix>,
        momentum: Matrix,
        lmo_input: Matrix,
    ) -> Result<StepTrace> {
        // lmo(0) = 0 turns a zero input into a no-op step
        let lmo = oracle.geometry().lmo(&lmo_input)?;
        let direction = lmo.direction.scale(sched.eta);
        let next = self.x.add(&direction)?;
        if !next.is_finite() {
            return Err(Error::NonFinite(format!("iterate after step {}", self.t)));
        }
        let t = self.t;
        self.x_prev = std::mem::replace(&mut self.x, next);
        self.momentum = momentum.clone();
        self.t += 1;
        self.record(oracle)?;
        Ok(StepTrace { t, beta: sched.beta, query, grad, prev_momentum, momentum, lmo_input, direction })
    }

    fn draw<R: Rng + ?Sized>(
        &mut self,
        at: &Matrix,
        sched: &Schedule,
        oracle: &GradientOracle,
        rng: &mut R,
    ) -> Result<Matrix> {
        let sample = oracle.sample_batch_grad(at, sched.batch, rng)?;
        self.oracle_calls += sample.oracle_calls;
        Ok(sample.mean_grad)
    }
}

/// One iteration of the batched method (BUSCG).
pub fn buscg_step<R: Rng + ?Sized>(
    state: &mut OptState,
    sched: &Schedule,
    oracle: &GradientOracle,
    rng: &mut R,
) -> Result<StepTrace> {
    let query = state.x.clone();
    let grad = state.draw(&query, sched, oracle, rng)?;
    let momentum = momentum_update(&state.momentum, &grad, sched.beta)?;
    let prev = state.momentum.clone();
    state.advance(sched, oracle, query, grad, Some(prev), momentum.clone(), momentum)
}

/// One iteration of the transported method (TUSCG).
pub fn tuscg_step<R: Rng + ?Sized>(
    state: &mut OptState,
    sched: &Schedule,
    oracle: &GradientOracle,
    rng: &mut R,
) -> Result<StepTrace> {
    if state.t < 1 {
        return Err(Error::InvalidArgument("transported step needs an initialized state (t ≥ 1)".into()));
    }
    let alpha = sched.transport_coefficient()?;
    let query = transport_point(&state.x, &state.x_prev, alpha)?;
    let grad = state.draw(&query, sched, oracle, rng)?;
    let momentum = momentum_update(&state.momentum, &grad, sched.beta)?;
    let prev = state.momentum.clone();
    state.advance(sched, oracle, query, grad, Some(prev), momentum.clone(), momentum)
}

/// One iteration of the practical Nesterov-LMO variant.
pub fn nesterov_lmo_step<R: Rng + ?Sized>(
    state: &mut OptState,
    sched: &Schedule,
    oracle: &GradientOracle,
    rng: &mut R,
) -> Result<StepTrace> {
    let query = state.x.clone();
    let grad = state.draw(&query, sched, oracle, rng)?;
    let momentum = momentum_update(&state.momentum, &grad, sched.beta)?;
    let blend = nesterov_blend(&momentum, &grad, sched.beta)?;
    let prev = state.momentum.clone();
    state.advance(sched, oracle, query, grad, Some(prev), momentum, blend)
}

pub fn step<R: Rng + ?Sized>(
    algorithm: Algorithm,
    state: &mut OptState,
    sched: &Schedule,
    oracle: &GradientOracle,
    rng: &mut R,
) -> Result<StepTrace> {
    match algorithm {
        Algorithm::Buscg => buscg_step(state, sched, oracle, rng),
        Algorithm::Tuscg => tuscg_step(state, sched, oracle, rng),
        Algorithm::Nesterov => nesterov_lmo_step(state, sched, oracle, rng),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// `X̃_T`, uniform over `{X₀, …, X_{T−1}}`.
    pub tilde_x: Matrix,
    pub tilde_index: u64,
    /// State after `X_T`; its history covers `t = 0..=T`.
    pub state: OptState,
}

/// Initialization plus `t_total − 1` iterations. The output index is drawn
/// from `rng` before the first gradient sample.
pub fn run<R: Rng + ?Sized>(
    algorithm: Algorithm,
    sched: &Schedule,
    oracle: &GradientOracle,
    x0: Matrix,
    t_total: u64,
    rng: &mut R,
) -> Result<RunOutcome> {
    run_observed(algorithm, sched, oracle, x0, t_total, rng, |_| {})
}

/// [`run`], handing every step's trace to `observer`.
pub fn run_observed<R: Rng + ?Sized>(
    algorithm: Algorithm,
    sched: &Schedule,
    oracle: &GradientOracle,
    x0: Matrix,
    t_total: u64,
    rng: &mut R,
    mut observer: impl FnMut(&StepTrace),
) -> Result<RunOutcome> {
    if t_total < 1 {
        return Err(Error::InvalidArgument("t_total must be at least 1".into()));
    }
    if algorithm == Algorithm::Tuscg {
        sched.transport_coefficient()?;
    }
    // The output index is drawn first so only one candidate iterate is kept.
    let pick = rng.random_range(0..t_total);
    let mut tilde_x = (pick == 0).then(|| x0.clone());
    let (mut state, trace) = OptState::initialize(x0, sched, oracle, rng)?;
    observer(&trace);
    for t in 1..t_total {
        if t == pick {
            tilde_x = Some(state.x.clone());
        }
        let trace = step(algorithm, &mut state, sched, oracle, rng)?;
        observer(&trace);
    }
    let tilde_x = tilde_x.expect("pick < t_total");
    Ok(RunOutcome { tilde_x, tilde_index: pick, state })
}
