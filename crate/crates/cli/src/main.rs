use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tsalc::approximation::{DEFAULT_MAX_ITERS, DEFAULT_TOL};
use tsalc::experiment::{
    approx_bound_trials, emit_plots, read_run, run_experiment, run_replicates, verify_basis, write_aggregate,
    write_run, ExperimentConfig, RunStatus,
};
use tsalc::{Error, Execution};

/// Thompson-sampling active learning control experiments.
#[derive(Parser)]
#[command(name = "tsalc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Replaces the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `out_dir`, then `out/<name>`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// `dotted.key=value` config overrides, applied in order.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write run.json, run.csv, diagnostics.csv,
    /// summary.json and charts.
    Run(Common),
    /// Run all configured replicates and write the aggregate report.
    Replicates(Common),
    /// Check the basis identities for the configured law and state box.
    VerifyBasis {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Project random hull members onto the hull and compare with the bounds.
    ApproxBound {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        targets: usize,
    },
    /// Regenerate CSVs and charts from an existing run directory.
    Report {
        /// Directory containing run.json.
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidInput(_) | Error::Json(_) => 2,
        Error::PlantBlowup { .. } => 3,
        Error::Io(_) => 4,
        Error::Numeric(_) => 1,
    }
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf), Error> {
    let mut overrides = common.overrides.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("seed={seed}"));
    }
    let cfg = ExperimentConfig::load(&common.config, &overrides)?;
    let dir = common
        .out_dir
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| Path::new("out").join(cfg.name.as_deref().unwrap_or("experiment")));
    Ok((cfg, dir))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn run(command: Command) -> Result<u8, Error> {
    let exec = Execution::default();
    match command {
        Command::Run(common) => {
            let (cfg, dir) = load(&common)?;
            let record = run_experiment(&cfg, exec)?;
            write_run(&record, &dir)?;
            emit_plots(&record, &dir)?;
            let s = &record.summary;
            println!(
                "{}: {} segments, final outside mass {:.3e}, eps_L {:?}, R2 {:?}, output in {}",
                record.name,
                s.segments_completed,
                s.final_mass_outside_h.unwrap_or(f64::NAN),
                s.eps_l_hat,
                s.r_squared,
                dir.display()
            );
            if let RunStatus::PlantBlowup { segment, step } = s.status {
                eprintln!("plant blew up in segment {segment} at step {step}; partial record written");
                return Ok(3);
            }
            Ok(0)
        }
        Command::Replicates(common) => {
            let (cfg, dir) = load(&common)?;
            let (report, records) = run_replicates(&cfg, exec)?;
            write_aggregate(&report, &dir)?;
            for (r, rec) in records.iter().enumerate() {
                if let Some(rec) = rec {
                    write_run(rec, &dir.join(format!("replicate_{r:03}")))?;
                }
            }
            for o in &report.replicates {
                println!(
                    "replicate {:>3} seed {:>20}: converged {} final mass {:?} eps_L {:?} R2 {:?}{}",
                    o.index,
                    o.seed,
                    o.converged,
                    o.final_mass_outside,
                    o.eps_l_hat,
                    o.r_squared,
                    o.error.as_deref().map(|e| format!(" error: {e}")).unwrap_or_default()
                );
            }
            println!("{}/{} replicates converged", report.converged_count, report.replicates.len());
            Ok(if report.failures > 0 { 3 } else { 0 })
        }
        Command::VerifyBasis { common, samples } => {
            let (cfg, dir) = load(&common)?;
            let check = verify_basis(&cfg.build_basis()?, samples, cfg.seed)?;
            fs::create_dir_all(&dir)?;
            write_json(&dir.join("basis_check.json"), &check)?;
            println!("{}", serde_json::to_string_pretty(&check)?);
            Ok(if check.passed { 0 } else { 1 })
        }
        Command::ApproxBound { common, targets } => {
            let (cfg, dir) = load(&common)?;
            let trials = approx_bound_trials(
                &cfg.build_basis()?,
                cfg.quadrature_spec(),
                targets,
                cfg.seed,
                DEFAULT_MAX_ITERS,
                DEFAULT_TOL,
                exec,
            )?;
            fs::create_dir_all(&dir)?;
            let reports: Vec<_> = trials.iter().map(|t| &t.report).collect();
            write_json(&dir.join("bound_report.json"), &reports)?;
            let mut csv = String::from("target,channel,iteration,objective\n");
            for (k, t) in trials.iter().enumerate() {
                for (i, trace) in t.traces.iter().enumerate() {
                    for (it, v) in trace.iter().enumerate() {
                        let _ = writeln!(csv, "{k},{i},{it},{v}");
                    }
                }
            }
            fs::write(dir.join("objective_trace.csv"), csv)?;
            println!("{}", serde_json::to_string_pretty(&reports)?);
            Ok(if reports.iter().all(|r| r.satisfied) { 0 } else { 1 })
        }
        Command::Report { out_dir } => {
            let record = read_run(&out_dir.join("run.json"))?;
            write_run(&record, &out_dir)?;
            for p in emit_plots(&record, &out_dir)? {
                println!("{}", p.display());
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
