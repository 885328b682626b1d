use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scion_lab::harness::{
    gradcheck, parse_config, run_experiment, selftest, with_override, write_csv, write_json, Faults,
    TrajectoryRecord,
};
use scion_lab::martingale::{scaling_slope, FamilyKind};
use scion_lab::oracle::ObjectiveName;
use scion_lab::{Error, GeometryKind};

#[derive(Parser)]
#[command(name = "scion-lab", version, about = "Scale-invariant stochastic matrix optimization lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Write data here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of a configuration.
    Run { config: PathBuf },
    /// Rerun a configuration for several values of one key.
    Sweep {
        config: PathBuf,
        /// `key=v1,v2,...`, where key is a dotted path such as `t_total` or `schedule.eta`.
        #[arg(long)]
        vary: String,
    },
    /// Estimate the martingale-factor scaling over square sizes.
    Tau {
        #[arg(long)]
        p: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, default_value = "diag_sign")]
        family: String,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Defaults to `spectral` (nuclear dual), or `frobenius` for `rank_one_gaussian`.
        #[arg(long)]
        geometry: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the built-in invariant suites.
    Selftest {
        /// Negate the oracle direction of this geometry in the duality suite.
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Compare analytic and finite-difference gradients.
    Gradcheck {
        objective: String,
        #[arg(long, default_value_t = 10)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Validation(String),
    Runtime(String),
    Check(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Check(_) => 3,
        }
    }
}

fn validation(e: impl std::fmt::Display) -> Failure {
    Failure::Validation(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Validation(m) => eprintln!("error: {m}"),
                Failure::Runtime(m) => eprintln!("runtime error: {m}"),
                Failure::Check(m) => eprintln!("{m}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run { config } => cmd_run(cli, config),
        Command::Sweep { config, vary } => cmd_sweep(cli, config, vary),
        Command::Tau { p, sizes, family, trials, geometry, seed } => {
            cmd_tau(cli, *p, sizes, family, *trials, geometry.as_deref(), *seed)
        }
        Command::Selftest { inject_fault } => cmd_selftest(cli, inject_fault.as_deref()),
        Command::Gradcheck { objective, points, seed } => cmd_gradcheck(cli, objective, *points, *seed),
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| runtime(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_record(record: &TrajectoryRecord, format: Format, w: impl Write) -> Result<(), Failure> {
    match format {
        Format::Csv => write_csv(record, w),
        Format::Json => write_json(record, w),
    }
    .map_err(runtime)
}

fn read_config(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| validation(format!("cannot read {}: {e}", path.display())))
}

fn report_summary(label: &str, record: &TrajectoryRecord) {
    let s = &record.summary;
    eprintln!(
        "{label}B={} beta={} eta={}; tilde grad norm mean {} median {}; min grad norm median {}",
        record.schedule.batch,
        record.schedule.beta,
        record.schedule.eta,
        s.tilde_grad_mean,
        s.tilde_grad_median,
        s.min_grad_median
    );
}

fn cmd_run(cli: &Cli, config: &Path) -> Result<(), Failure> {
    let cfg = parse_config(&read_config(config)?).map_err(validation)?;
    let record = run_experiment(&cfg).map_err(runtime)?;
    let out = cli.out.clone().or_else(|| cfg.output_path.as_ref().map(PathBuf::from));
    write_record(&record, cli.format, open_out(out.as_deref())?)?;
    report_summary("", &record);
    Ok(())
}

/// `out.csv` with key `t_total` and value `100` becomes `out.t_total=100.csv`.
fn sweep_path(base: &Path, key: &str, value: &str) -> PathBuf {
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match base.extension() {
        Some(ext) => format!("{stem}.{key}={value}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{key}={value}"),
    };
    base.with_file_name(name)
}

fn cmd_sweep(cli: &Cli, config: &Path, vary: &str) -> Result<(), Failure> {
    let text = read_config(config)?;
    let (key, values) =
        vary.split_once('=').ok_or_else(|| validation("--vary expects key=v1,v2,..."))?;
    let values: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
    if key.is_empty() || values.is_empty() {
        return Err(validation("--vary expects key=v1,v2,..."));
    }
    let configs = values
        .iter()
        .map(|v| {
            let t = with_override(&text, key, v)?;
            parse_config(&t).map_err(|e| e.context(format!("{key}={v}")))
        })
        .collect::<Result<Vec<_>, Error>>()
        .map_err(validation)?;
    let mut summary = open_out(None)?;
    let mut json = Vec::new();
    if cli.format == Format::Csv {
        writeln!(summary, "{key},tilde_grad_mean,tilde_grad_median,min_grad_median,final_grad_median")
            .map_err(runtime)?;
    }
    for (value, cfg) in values.iter().zip(&configs) {
        let record = run_experiment(cfg).map_err(runtime)?;
        if let Some(base) = &cli.out {
            let path = sweep_path(base, key, value);
            write_record(&record, cli.format, open_out(Some(&path))?)?;
        }
        let s = &record.summary;
        match cli.format {
            Format::Csv => writeln!(
                summary,
                "{value},{},{},{},{}",
                scion_lab::harness::format_float(s.tilde_grad_mean),
                scion_lab::harness::format_float(s.tilde_grad_median),
                scion_lab::harness::format_float(s.min_grad_median),
                scion_lab::harness::format_float(s.final_grad_median)
            )
            .map_err(runtime)?,
            Format::Json => json.push(serde_json::json!({ "key": key, "value": value, "summary": s })),
        }
    }
    if cli.format == Format::Json {
        serde_json::to_writer_pretty(&mut summary, &json).map_err(runtime)?;
        writeln!(summary).map_err(runtime)?;
    }
    summary.flush().map_err(runtime)
}

fn cmd_tau(
    cli: &Cli,
    p: f64,
    sizes: &[usize],
    family: &str,
    trials: usize,
    geometry: Option<&str>,
    seed: u64,
) -> Result<(), Failure> {
    let family: FamilyKind = family.parse().map_err(validation)?;
    let geometry: GeometryKind = match geometry {
        Some(g) => g.parse().map_err(validation)?,
        None if family == FamilyKind::RankOneGaussian => GeometryKind::Frobenius,
        None => GeometryKind::Spectral,
    };
    if trials < 1 {
        return Err(validation("--trials must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fit = scaling_slope(p, sizes, geometry, family, trials, &mut rng).map_err(validation)?;
    let mut w = open_out(cli.out.as_deref())?;
    match cli.format {
        Format::Csv => {
            writeln!(w, "r,ratio").map_err(runtime)?;
            for (r, v) in &fit.points {
                writeln!(w, "{r},{}", scion_lab::harness::format_float(*v)).map_err(runtime)?;
            }
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, &fit).map_err(runtime)?;
            writeln!(w).map_err(runtime)?;
        }
    }
    w.flush().map_err(runtime)?;
    eprintln!("{family} under {geometry} dual: slope {} (1 - 1/p = {})", fit.slope, 1.0 - 1.0 / p);
    Ok(())
}

fn cmd_selftest(cli: &Cli, fault: Option<&str>) -> Result<(), Failure> {
    let faults = Faults { flip_lmo_sign: fault.map(str::parse).transpose().map_err(validation)? };
    let report = selftest(faults);
    let mut w = open_out(cli.out.as_deref())?;
    match cli.format {
        Format::Csv => writeln!(w, "{report}").map_err(runtime)?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, &report).map_err(runtime)?;
            writeln!(w).map_err(runtime)?;
        }
    }
    w.flush().map_err(runtime)?;
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Check("selftest failed".into()))
    }
}

fn cmd_gradcheck(cli: &Cli, objective: &str, points: usize, seed: u64) -> Result<(), Failure> {
    let kind: ObjectiveName = objective.parse().map_err(validation)?;
    if points < 1 {
        return Err(validation("--points must be at least 1"));
    }
    let report = gradcheck(kind, points, seed).map_err(runtime)?;
    let mut w = open_out(cli.out.as_deref())?;
    match cli.format {
        Format::Csv => writeln!(
            w,
            "objective,points,max_relative_error\n{kind},{points},{}",
            scion_lab::harness::format_float(report.max_relative_error)
        )
        .map_err(runtime)?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, &report).map_err(runtime)?;
            writeln!(w).map_err(runtime)?;
        }
    }
    w.flush().map_err(runtime)?;
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Check(format!("gradient check failed: {} > {}", report.max_relative_error, 1e-5)))
    }
}
