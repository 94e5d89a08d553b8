//! `bhtw` — semiclassical chain-transport simulator and analysis toolkit.
//!
//! Exit codes: 0 success, 2 validation/configuration error, 3 numeric
//! failure during a computation. Environment: `BHTW_OUTPUT_ROOT` (root for
//! auto-named output directories, default `./runs`) and `BHTW_WORKERS`
//! (default worker count; the `--workers` flag overrides it).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use bhtw_cli::config::{load_run_config, load_sweep_config};
use bhtw_cli::error::CliError;
use bhtw_cli::plot::{execute_plot, PlotSelection};
use bhtw_cli::runner::{execute_run, resolve_workers};
use bhtw_cli::sweep::{execute_sweep, PointStatus};
use bhtw_core::ensemble::Corrections;

#[derive(Parser)]
#[command(
    name = "bhtw",
    version,
    about = "Simulate and analyze semiclassical transport on one-dimensional bosonic chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CorrectionsArg {
    /// Classical averages only.
    None,
    /// Deterministic cumulative-integral correction estimator.
    Integrated,
    /// Stochastic-kick correction estimator at default stride and scale.
    Langevin,
}

impl CorrectionsArg {
    fn to_core(self) -> Corrections {
        match self {
            CorrectionsArg::None => Corrections::None,
            CorrectionsArg::Integrated => Corrections::Integrated,
            CorrectionsArg::Langevin => Corrections::langevin_default(),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PlotKindArg {
    Dispersion,
    Density,
    Spectrum,
    Entropy,
    All,
}

impl PlotKindArg {
    fn to_selection(self) -> PlotSelection {
        match self {
            PlotKindArg::Dispersion => PlotSelection::Dispersion,
            PlotKindArg::Density => PlotSelection::Density,
            PlotKindArg::Spectrum => PlotSelection::Spectrum,
            PlotKindArg::Entropy => PlotSelection::Entropy,
            PlotKindArg::All => PlotSelection::All,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one configured ensemble into a directory.
    Run {
        /// JSON run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: an auto-named directory under the
        /// output root).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the configured master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (1 forces sequential execution).
        #[arg(long)]
        workers: Option<usize>,
        /// Override the configured correction mode.
        #[arg(long, value_enum)]
        corrections: Option<CorrectionsArg>,
    },
    /// Run a family of ensembles over one parameter axis.
    Sweep {
        /// JSON sweep configuration (base run plus axis).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the base config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Concurrent axis points (each point runs sequentially inside when
        /// more than one).
        #[arg(long)]
        workers: Option<usize>,
        /// Override the base config's correction mode.
        #[arg(long, value_enum)]
        corrections: Option<CorrectionsArg>,
    },
    /// Render quick-look SVG plots from a run directory.
    Plot {
        /// A completed run directory.
        dir: PathBuf,
        /// Which plot to produce.
        #[arg(long, value_enum, default_value = "all")]
        kind: PlotKindArg,
        /// Output directory for the SVGs (default: DIR/plots).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the numeric self-check battery (kernel integrals, sampling
    /// moments, reduction determinism, conservation).
    Validate {
        /// Write a JSON report of all checks.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the deterministic early-time occupation cascade against its
    /// analytic exponent ladder.
    Oracle {
        /// Optional run config supplying chain parameters and the filled
        /// site (must use a single_site preset).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write a JSON report of all fits.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            workers,
            corrections,
        } => {
            let mut cfg = load_run_config(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(mode) = corrections {
                cfg.corrections = mode.to_core();
            }
            let workers = resolve_workers(workers)?;
            let outcome = execute_run(&cfg, out.as_deref(), workers)?;
            if outcome.reused {
                println!(
                    "run already complete in {} (hash {}); nothing to do",
                    outcome.dir.display(),
                    &outcome.content_hash[..12]
                );
            } else {
                println!(
                    "run complete: {} (hash {})",
                    outcome.dir.display(),
                    &outcome.content_hash[..12]
                );
            }
            Ok(())
        }
        Command::Sweep {
            config,
            out,
            seed,
            workers,
            corrections,
        } => {
            let mut cfg = load_sweep_config(&config)?;
            if let Some(seed) = seed {
                cfg.base.seed = seed;
            }
            if let Some(mode) = corrections {
                cfg.base.corrections = mode.to_core();
            }
            let workers = resolve_workers(workers)?;
            let outcome = execute_sweep(&cfg, out.as_deref(), workers)?;
            let report = &outcome.report;
            println!(
                "sweep over {}: {} completed, {} reused, {} failed — {}",
                report.axis_field,
                report.completed,
                report.skipped,
                report.failed,
                outcome.dir.display()
            );
            if report.failed > 0 {
                let mut numeric = false;
                for point in &report.points {
                    if let PointStatus::Failed { error, numeric: n } = &point.status {
                        eprintln!("point {} ({} = {}): {error}", point.index, report.axis_field, point.value);
                        numeric |= n;
                    }
                }
                let message = format!(
                    "{} of {} sweep points failed (see sweep_report.json)",
                    report.failed,
                    report.points.len()
                );
                return Err(if numeric {
                    CliError::Numeric(message)
                } else {
                    CliError::Validation(message)
                });
            }
            Ok(())
        }
        Command::Plot { dir, kind, out } => {
            let report = execute_plot(&dir, kind.to_selection(), out.as_deref())?;
            for name in &report.written {
                println!("wrote {name}");
            }
            for skip in &report.skipped {
                println!("skipped {}: {}", skip.kind, skip.reason);
            }
            if report.empty {
                println!("no plottable series found; empty report written");
            }
            Ok(())
        }
        Command::Validate { out } => bhtw_cli::checks::execute_validate(out.as_deref()),
        Command::Oracle { config, out } => {
            let cfg = match config {
                Some(path) => Some(load_run_config(&path)?),
                None => None,
            };
            bhtw_cli::oracle::execute_oracle(cfg.as_ref(), out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
