use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::optim::{run, Schedule};

use super::config::RunConfig;

/// Column order of the CSV output.
pub const CSV_HEADER: &str = "seed,t,f_value,grad_dual_norm,oracle_calls,eta,beta";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub seed: u64,
    pub t: u64,
    pub f_value: f64,
    pub grad_dual_norm: f64,
    pub oracle_calls: u64,
    pub eta: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub tilde_index: u64,
    /// `‖∇F(X̃_T)‖⋆`
    pub tilde_grad_norm: f64,
    pub min_grad_norm: f64,
    pub final_grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub per_seed: Vec<SeedSummary>,
    pub tilde_grad_mean: f64,
    pub tilde_grad_median: f64,
    pub min_grad_median: f64,
    pub final_grad_median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub schedule: Schedule,
    /// Rows of every seed, seeds in configuration order, `t = 0..=T`.
    pub rows: Vec<TrajectoryRow>,
    pub summary: Summary,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

/// Runs every seed of `cfg` in parallel. Seed `s` drives its own
/// `ChaCha8Rng::seed_from_u64(s)`, so results do not depend on the other
/// seeds or on scheduling.
pub fn run_experiment(cfg: &RunConfig) -> Result<TrajectoryRecord> {
    let exp = cfg.build()?;
    let per_seed: Vec<(Vec<TrajectoryRow>, SeedSummary)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| -> Result<_> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = run(cfg.algorithm, &exp.schedule, &exp.oracle, exp.x0.clone(), cfg.t_total, &mut rng)
                .map_err(|e| e.context(format!("seed {seed}")))?;
            let rows: Vec<TrajectoryRow> = out
                .state
                .history
                .iter()
                .map(|h| TrajectoryRow {
                    seed,
                    t: h.t,
                    f_value: h.f_value,
                    grad_dual_norm: h.grad_dual_norm,
                    oracle_calls: h.oracle_calls,
                    eta: exp.schedule.eta,
                    beta: exp.schedule.beta,
                })
                .collect();
            let grad = exp.oracle.objective().gradient(&out.tilde_x)?;
            let summary = SeedSummary {
                seed,
                tilde_index: out.tilde_index,
                tilde_grad_norm: exp.oracle.geometry().dual_norm(&grad)?,
                min_grad_norm: rows.iter().map(|r| r.grad_dual_norm).fold(f64::INFINITY, f64::min),
                final_grad_norm: rows.last().map_or(f64::NAN, |r| r.grad_dual_norm),
            };
            Ok((rows, summary))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut seeds = Vec::new();
    for (r, s) in per_seed {
        rows.extend(r);
        seeds.push(s);
    }
    let tilde: Vec<f64> = seeds.iter().map(|s| s.tilde_grad_norm).collect();
    let summary = Summary {
        tilde_grad_mean: tilde.iter().sum::<f64>() / tilde.len() as f64,
        tilde_grad_median: median(&tilde),
        min_grad_median: median(&seeds.iter().map(|s| s.min_grad_norm).collect::<Vec<_>>()),
        final_grad_median: median(&seeds.iter().map(|s| s.final_grad_norm).collect::<Vec<_>>()),
        per_seed: seeds,
    };
    Ok(TrajectoryRecord { schedule: exp.schedule, rows, summary })
}

/// 17 significant digits, enough to round-trip every `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv<W: Write>(record: &TrajectoryRecord, mut w: W) -> Result<()> {
    let io = |e: std::io::Error| Error::InvalidArgument(format!("write failed: {e}"));
    writeln!(w, "{CSV_HEADER}").map_err(io)?;
    for r in &record.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.seed,
            r.t,
            format_float(r.f_value),
            format_float(r.grad_dual_norm),
            r.oracle_calls,
            format_float(r.eta),
            format_float(r.beta)
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_json<W: Write>(record: &TrajectoryRecord, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, record)
        .map_err(|e| Error::InvalidArgument(format!("write failed: {e}")))?;
    writeln!(w).map_err(|e| Error::InvalidArgument(format!("write failed: {e}")))
}
