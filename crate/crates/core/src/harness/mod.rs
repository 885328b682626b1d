//! Configuration, seeded experiment runs, CSV/JSON output and self-tests.

mod config;
mod experiment;
mod selftest;

pub use config::{
    parse_config, with_override, DeclaredConstants, Experiment, GeometryConfig, MatrixSpec, ObjectiveConfig,
    PolarChoice, RunConfig, ScheduleConfig,
};
pub use experiment::{
    format_float, median, run_experiment, write_csv, write_json, SeedSummary, Summary, TrajectoryRecord,
    TrajectoryRow, CSV_HEADER,
};
pub use selftest::{gradcheck, selftest, with_singular_values, Faults, GradcheckReport, SelftestReport, SuiteResult};
