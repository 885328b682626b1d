//! TOML run configuration.
//!
//! ```toml
//! algorithm = "buscg"
//! t_total = 1000
//! seeds = [1, 2, 3]
//!
//! [geometry]
//! kind = "spectral"
//! d_out = 8
//! d_in = 8
//!
//! [objective]
//! kind = "quadratic"
//! target = { kind = "gaussian", seed = 7 }
//!
//! [noise]
//! p = 1.5
//! sigma0 = 1.0
//!
//! [schedule]
//! kind = "theorem3"
//! ```

use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Geometry, GeometryKind};
use crate::matrix::Matrix;
use crate::optim::{theorem_schedule, Algorithm, Horizon, Schedule, ScheduleKind, TheoremConstants};
use crate::oracle::{
    analytic_constants, GradientOracle, NoiseModel, NoiseShape, Objective, ObjectiveName, SmoothnessConstants,
};
use crate::svd::{NewtonSchulz, PolarMethod};

/// How to build a matrix of the configured shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixSpec {
    Zeros,
    /// Ones on the main diagonal.
    Identity,
    /// I.i.d. `N(0, scale²)` entries from `ChaCha8Rng::seed_from_u64(seed)`.
    Gaussian {
        seed: u64,
        #[serde(default = "unit")]
        scale: f64,
    },
    Rows { rows: Vec<Vec<f64>> },
    /// The objective target plus a [`MatrixSpec::Gaussian`] perturbation.
    /// Only valid for `x0`.
    NearTarget {
        seed: u64,
        #[serde(default = "unit")]
        scale: f64,
    },
}

fn unit() -> f64 {
    1.0
}

impl MatrixSpec {
    pub fn materialize(&self, rows: usize, cols: usize, target: Option<&Matrix>) -> Result<Matrix> {
        let gaussian = |seed: u64, scale: f64| {
            if !(scale >= 0.0) || !scale.is_finite() {
                return Err(Error::Configuration(format!("scale {scale} must be finite and nonnegative")));
            }
            Ok(Matrix::gaussian(rows, cols, scale, &mut ChaCha8Rng::seed_from_u64(seed)))
        };
        match self {
            MatrixSpec::Zeros => Ok(Matrix::zeros(rows, cols)),
            MatrixSpec::Identity => Ok(Matrix::from_fn(rows, cols, |i, j| if i == j { 1.0 } else { 0.0 })),
            MatrixSpec::Gaussian { seed, scale } => gaussian(*seed, *scale),
            MatrixSpec::Rows { rows: data } => {
                if data.len() != rows || data.iter().any(|r| r.len() != cols) {
                    return Err(Error::Configuration(format!("explicit rows must form a {rows}x{cols} matrix")));
                }
                let flat: Vec<f64> = data.iter().flatten().copied().collect();
                Matrix::from_vec(rows, cols, flat)
            }
            MatrixSpec::NearTarget { seed, scale } => {
                let t = target.ok_or_else(|| Error::Configuration("near_target is only valid for x0".into()))?;
                t.add(&gaussian(*seed, *scale)?)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolarChoice {
    #[default]
    Exact,
    NewtonSchulz,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryConfig {
    pub kind: GeometryKind,
    pub d_out: usize,
    pub d_in: usize,
    pub polar: PolarChoice,
}

/// Explicit smoothness constants; each one overrides the analytic value.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DeclaredConstants {
    pub l0: Option<f64>,
    pub l1: Option<f64>,
    pub l2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveConfig {
    pub kind: ObjectiveName,
    /// The target matrix; for `factor_residual` the factor `M` of `G = MMᵀ`.
    pub target: MatrixSpec,
    pub x0: MatrixSpec,
    pub declared: DeclaredConstants,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    /// Manual schedules only.
    pub batch: usize,
    pub beta: Option<f64>,
    pub eta: Option<f64>,
    pub alpha_transport: Option<f64>,
    /// Theorem schedules only; `None` means `min(m, n)^{1 − 1/p}`.
    pub tau_star: Option<f64>,
    /// Target accuracy of the fourth theorem schedule.
    pub epsilon: Option<f64>,
}

/// A validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub t_total: u64,
    pub seeds: Vec<u64>,
    pub output_path: Option<String>,
    pub geometry: GeometryConfig,
    pub objective: ObjectiveConfig,
    /// `None` for exact gradients.
    pub noise: Option<NoiseModel>,
    pub schedule: ScheduleConfig,
}

/// Everything a run needs, built from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Experiment {
    pub oracle: GradientOracle,
    pub x0: Matrix,
    pub schedule: Schedule,
    /// Present for theorem schedules.
    pub constants: Option<TheoremConstants>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    algorithm: Option<String>,
    t_total: Option<u64>,
    seeds: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output_path: Option<String>,
    geometry: Option<RawGeometry>,
    objective: Option<RawObjective>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise: Option<RawNoise>,
    schedule: Option<RawSchedule>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeometry {
    kind: Option<String>,
    d_out: Option<usize>,
    d_in: Option<usize>,
    polar: Option<PolarChoice>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObjective {
    kind: Option<String>,
    target: Option<MatrixSpec>,
    x0: Option<MatrixSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    l0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    l1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    l2: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    p: Option<f64>,
    sigma0: Option<f64>,
    sigma1: Option<f64>,
    tail_index: Option<f64>,
    shape: Option<NoiseShape>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    batch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha_transport: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
}

fn cfg_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Configuration(format!("{field}: {msg}"))
}

fn required<T>(v: Option<T>, field: &str) -> Result<T> {
    v.ok_or_else(|| cfg_err(field, "missing required field"))
}

fn finite_nonneg(v: f64, field: &str) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(cfg_err(field, format!("{v} must be finite and nonnegative")))
    }
}

fn parse_kind<T: FromStr<Err = Error>>(s: &str, field: &str) -> Result<T> {
    s.parse::<T>().map_err(|e| cfg_err(field, e))
}

fn schedule_kind(s: &str) -> Result<ScheduleKind> {
    [
        ScheduleKind::Theorem2,
        ScheduleKind::Theorem3,
        ScheduleKind::Theorem4,
        ScheduleKind::Theorem5,
        ScheduleKind::Manual,
    ]
    .into_iter()
    .find(|k| k.name() == s)
    .ok_or_else(|| cfg_err("schedule.kind", format!("unknown schedule kind `{s}`")))
}

/// Parses and fully validates a configuration document, including the
/// preconditions of theorem schedules.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Configuration(e.to_string()))?;
    let cfg = resolve(raw)?;
    cfg.build()?;
    Ok(cfg)
}

fn resolve(raw: RawConfig) -> Result<RunConfig> {
    let algorithm = parse_kind(&required(raw.algorithm, "algorithm")?, "algorithm")?;
    let t_total = required(raw.t_total, "t_total")?;
    if t_total < 1 {
        return Err(cfg_err("t_total", "must be at least 1"));
    }
    let seeds = required(raw.seeds, "seeds")?;
    if seeds.is_empty() {
        return Err(cfg_err("seeds", "must list at least one seed"));
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(cfg_err("seeds", "seeds must be distinct"));
    }

    let g = required(raw.geometry, "geometry")?;
    let geometry = GeometryConfig {
        kind: parse_kind(&required(g.kind, "geometry.kind")?, "geometry.kind")?,
        d_out: required(g.d_out, "geometry.d_out")?,
        d_in: required(g.d_in, "geometry.d_in")?,
        polar: g.polar.unwrap_or_default(),
    };
    if geometry.d_out == 0 || geometry.d_in == 0 {
        return Err(cfg_err("geometry", "dimensions must be positive"));
    }

    let o = required(raw.objective, "objective")?;
    let objective = ObjectiveConfig {
        kind: parse_kind(&required(o.kind, "objective.kind")?, "objective.kind")?,
        target: o.target.unwrap_or(MatrixSpec::Zeros),
        x0: o.x0.unwrap_or(MatrixSpec::Zeros),
        declared: DeclaredConstants { l0: o.l0, l1: o.l1, l2: o.l2 },
    };
    if matches!(objective.target, MatrixSpec::NearTarget { .. }) {
        return Err(cfg_err("objective.target", "near_target is only valid for x0"));
    }
    for (name, v) in [("objective.l0", o.l0), ("objective.l1", o.l1), ("objective.l2", o.l2)] {
        if let Some(v) = v {
            finite_nonneg(v, name)?;
        }
    }

    let noise = match raw.noise {
        None => None,
        Some(n) => {
            let p = required(n.p, "noise.p")?;
            if !(p > 1.0 && p <= 2.0) {
                return Err(cfg_err("noise.p", format!("p = {p} must lie in the tail-order range (1, 2]")));
            }
            let s0 = finite_nonneg(n.sigma0.unwrap_or(0.0), "noise.sigma0")?;
            let s1 = finite_nonneg(n.sigma1.unwrap_or(0.0), "noise.sigma1")?;
            let model = NoiseModel::new(p, s0, s1, n.tail_index, n.shape.unwrap_or_default())
                .map_err(|e| cfg_err("noise.tail_index", e))?;
            Some(model)
        }
    };

    let s = required(raw.schedule, "schedule")?;
    let kind = schedule_kind(&required(s.kind, "schedule.kind")?)?;
    if kind == ScheduleKind::Manual {
        if s.tau_star.is_some() || s.epsilon.is_some() {
            return Err(cfg_err("schedule", "tau_star and epsilon only apply to theorem schedules"));
        }
        required(s.beta, "schedule.beta")?;
        required(s.eta, "schedule.eta")?;
    } else {
        for (name, v) in [("schedule.batch", s.batch.map(|b| b as f64)), ("schedule.beta", s.beta), ("schedule.eta", s.eta)]
        {
            if v.is_some() {
                return Err(cfg_err(name, format!("is derived by {} and cannot be set", kind.name())));
            }
        }
        if (kind == ScheduleKind::Theorem4) != s.epsilon.is_some() {
            return Err(cfg_err("schedule.epsilon", "required by theorem4 and only allowed there"));
        }
    }
    let schedule = ScheduleConfig {
        kind,
        batch: s.batch.unwrap_or(1),
        beta: s.beta,
        eta: s.eta,
        alpha_transport: s.alpha_transport,
        tau_star: s.tau_star,
        epsilon: s.epsilon,
    };

    Ok(RunConfig { algorithm, t_total, seeds, output_path: raw.output_path, geometry, objective, noise, schedule })
}

impl RunConfig {
    /// Serializes with every default written out; [`parse_config`] maps the
    /// result back to an equal configuration.
    pub fn to_toml(&self) -> Result<String> {
        let s = &self.schedule;
        let manual = s.kind == ScheduleKind::Manual;
        let raw = RawConfig {
            algorithm: Some(self.algorithm.name().into()),
            t_total: Some(self.t_total),
            seeds: Some(self.seeds.clone()),
            output_path: self.output_path.clone(),
            geometry: Some(RawGeometry {
                kind: Some(self.geometry.kind.name().into()),
                d_out: Some(self.geometry.d_out),
                d_in: Some(self.geometry.d_in),
                polar: Some(self.geometry.polar),
            }),
            objective: Some(RawObjective {
                kind: Some(self.objective.kind.to_string()),
                target: Some(self.objective.target.clone()),
                x0: Some(self.objective.x0.clone()),
                l0: self.objective.declared.l0,
                l1: self.objective.declared.l1,
                l2: self.objective.declared.l2,
            }),
            noise: self.noise.map(|n| RawNoise {
                p: Some(n.p),
                sigma0: Some(n.sigma0),
                sigma1: Some(n.sigma1),
                tail_index: Some(n.tail_index),
                shape: Some(n.shape),
            }),
            schedule: Some(RawSchedule {
                kind: Some(s.kind.name().into()),
                batch: manual.then_some(s.batch),
                beta: s.beta,
                eta: s.eta,
                alpha_transport: s.alpha_transport,
                tau_star: s.tau_star,
                epsilon: s.epsilon,
            }),
        };
        toml::to_string(&raw).map_err(|e| Error::Configuration(format!("serialization failed: {e}")))
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.geometry.d_out, self.geometry.d_in)
    }

    /// Builds the oracle, start point and schedule.
    pub fn build(&self) -> Result<Experiment> {
        let (m, n) = self.shape();
        let geometry = Geometry::new(self.geometry.kind, m, n)?.with_polar(match self.geometry.polar {
            PolarChoice::Exact => PolarMethod::ExactSvd,
            PolarChoice::NewtonSchulz => PolarMethod::NewtonSchulz(NewtonSchulz::default()),
        });
        let target = self.objective.target.materialize(m, n, None).map_err(|e| e.context("objective.target"))?;
        let x0 = self.objective.x0.materialize(m, n, Some(&target)).map_err(|e| e.context("objective.x0"))?;
        let mut objective = match self.objective.kind {
            ObjectiveName::Quadratic => Objective::quadratic(target),
            ObjectiveName::BoundedWell => Objective::bounded_well(target),
            ObjectiveName::FactorResidual => {
                let gram = target.matmul(&target.transpose())?;
                Objective::factor_residual(gram, n)?
            }
        };
        let base = analytic_constants(&objective, &geometry).unwrap_or(*objective.constants());
        let d = self.objective.declared;
        let constants = SmoothnessConstants {
            l0: d.l0.unwrap_or(base.l0),
            l1: d.l1.unwrap_or(base.l1),
            l2: d.l2.unwrap_or(base.l2),
            f_star: base.f_star,
        };
        objective = objective.with_constants(constants);
        let noise = self.noise.unwrap_or_else(NoiseModel::noiseless);
        let oracle = GradientOracle::new(objective, noise, geometry).map_err(|e| e.context("noise"))?;

        let s = &self.schedule;
        let (mut schedule, theorem) = if s.kind == ScheduleKind::Manual {
            let sched = Schedule::manual(s.batch, s.beta.unwrap_or(f64::NAN), s.eta.unwrap_or(f64::NAN))
                .map_err(|e| e.context("schedule"))?;
            (sched, None)
        } else {
            let obj = oracle.objective();
            let grad0 = obj.gradient(&x0)?;
            let p = noise.p;
            let tau_star = s.tau_star.unwrap_or_else(|| (m.min(n) as f64).powf(1.0 - 1.0 / p));
            let c = TheoremConstants {
                p,
                sigma0: noise.sigma0,
                sigma1: noise.sigma1,
                l0: constants.l0,
                l1: constants.l1,
                l2: constants.l2,
                delta0: obj.value(&x0)? - constants.f_star,
                grad0_dual: oracle.geometry().dual_norm(&grad0)?,
                tau_star,
            };
            let horizon = match s.epsilon {
                Some(eps) => Horizon::Accuracy(eps),
                None => Horizon::Iterations(self.t_total),
            };
            let sched = theorem_schedule(s.kind, &c, horizon).map_err(|e| e.context("schedule"))?;
            (sched, Some(c))
        };
        if let Some(a) = s.alpha_transport {
            schedule = schedule.with_transport(a).map_err(|e| e.context("schedule.alpha_transport"))?;
        }
        if self.algorithm == Algorithm::Tuscg {
            schedule.transport_coefficient().map_err(|e| e.context("schedule"))?;
        }
        Ok(Experiment { oracle, x0, schedule, constants: theorem })
    }
}

/// Returns `text` with the dotted `path` (for example `t_total` or
/// `schedule.eta`) set to `value`, which is read as an integer, a float, a
/// boolean or else a string.
pub fn with_override(text: &str, path: &str, value: &str) -> Result<String> {
    let mut doc: toml::Table = toml::from_str(text).map_err(|e| Error::Configuration(e.to_string()))?;
    let new_value = if let Ok(i) = value.parse::<i64>() {
        toml::Value::Integer(i)
    } else if let Ok(f) = value.parse::<f64>() {
        toml::Value::Float(f)
    } else if let Ok(b) = value.parse::<bool>() {
        toml::Value::Boolean(b)
    } else {
        toml::Value::String(value.to_string())
    };
    let keys: Vec<&str> = path.split('.').collect();
    let (last, parents) = keys.split_last().ok_or_else(|| cfg_err("--vary", "empty key"))?;
    let mut table = &mut doc;
    for k in parents {
        table = table
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| cfg_err(path, format!("`{k}` is not a table")))?;
    }
    table.insert(last.to_string(), new_value);
    toml::to_string(&doc).map_err(|e| Error::Configuration(e.to_string()))
}
