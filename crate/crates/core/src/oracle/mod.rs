//! Synthetic objectives and stochastic first-order oracles.

mod noise;
mod objective;
mod probe;

pub use noise::{pareto_scalar, GradSample, GradientOracle, NoiseModel, NoiseShape, SymmetricPareto};
pub use objective::{
    analytic_constants, norm_equivalence, Objective, ObjectiveKind, ObjectiveName, SmoothnessConstants,
};
pub use probe::{calibrate_constants, smoothness_probe, ProbeReport};
