use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use mlr_core::harness::{self, FitOptions, PhaseConfig, PhaseMode, Preprocess};
use mlr_core::{gen_sim1, gen_sim2, io, MlrError, Sim1Config, Sim2Config, SolverOptions};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "convex-mlr",
    version,
    about = "Mixed linear regression by convex fusion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Aperture,
    Imbalance,
}

impl From<Mode> for PhaseMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Aperture => PhaseMode::Aperture,
            Mode::Imbalance => PhaseMode::Imbalance,
        }
    }
}

#[derive(Args)]
struct SolverArgs {
    /// Smoothing added to squared distances in the weights.
    #[arg(long, default_value_t = 1e-16)]
    delta: f64,
    #[arg(long, default_value_t = 150)]
    max_iter: usize,
    /// Stop when the normalized step falls below this.
    #[arg(long, default_value_t = 1e-5)]
    stop_tol: f64,
    /// Multiply delta by this factor after every iteration.
    #[arg(long)]
    delta_decay: Option<f64>,
}

impl SolverArgs {
    fn options(&self) -> SolverOptions {
        SolverOptions {
            delta: self.delta,
            max_iter: self.max_iter,
            stop_tol: self.stop_tol,
            delta_decay: self.delta_decay,
            ..SolverOptions::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic data set and its true coefficients.
    Gen {
        #[arg(long, value_enum, default_value = "aperture")]
        mode: Mode,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Rows per class (aperture mode; imbalance mode uses 4d).
        #[arg(long, default_value_t = 16)]
        n_per_class: usize,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 0.0)]
        tau: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV for the measurements.
        #[arg(long)]
        out: PathBuf,
        /// Output CSV for the coefficient vectors.
        #[arg(long)]
        betas_out: Option<PathBuf>,
    },
    /// Solve the fusion program and write per-point estimates.
    Solve {
        data: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the recovery conditions and the certificate for labeled data.
    Certify {
        data: PathBuf,
        #[arg(long)]
        betas: PathBuf,
        /// Write the JSON verdict here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve, cluster the estimates and refit one regression per cluster.
    Fit {
        data: PathBuf,
        #[arg(long)]
        k: usize,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value_t = mlr_core::cluster::DEFAULT_RESTARTS)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Center this column (1-based) and multiply it by --scale.
        #[arg(long, requires = "scale")]
        center_column: Option<usize>,
        #[arg(long, requires = "center_column")]
        scale: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep dimension against aperture or imbalance and record recovery
    /// rates.
    Phase {
        #[arg(long, value_enum, default_value = "aperture")]
        mode: Mode,
        /// Dimensions, e.g. `3,4,5`.
        #[arg(long, value_delimiter = ',', required = true)]
        d: Vec<usize>,
        /// Aperture sweep values (aperture mode).
        #[arg(long, value_delimiter = ',')]
        alpha: Vec<f64>,
        /// Imbalance sweep values (imbalance mode).
        #[arg(long, value_delimiter = ',')]
        tau: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 1e-5)]
        success_tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Allow sweep values beyond the usual range.
        #[arg(long = "unsafe")]
        allow_unsafe: bool,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Run(MlrError),
}

impl From<MlrError> for Failure {
    fn from(e: MlrError) -> Self {
        Failure::Run(e)
    }
}

fn usage(r: mlr_core::Result<()>) -> Result<(), Failure> {
    r.map_err(|e| Failure::Usage(e.to_string()))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    let s = serde_json::to_string_pretty(value).map_err(MlrError::from)?;
    println!("{s}");
    Ok(())
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Gen {
            mode,
            d,
            k,
            n_per_class,
            alpha,
            tau,
            seed,
            out,
            betas_out,
        } => {
            let (data, model) = match mode {
                Mode::Aperture => gen_sim1(&Sim1Config {
                    k,
                    d,
                    n_per_class,
                    alpha,
                    seed,
                }),
                Mode::Imbalance => gen_sim2(&Sim2Config {
                    d,
                    alpha,
                    tau,
                    seed,
                }),
            }
            .map_err(|e| Failure::Usage(e.to_string()))?;
            io::write_csv(&data, &out)?;
            if let Some(p) = betas_out {
                io::write_betas(model.betas(), p)?;
            }
            info!("wrote {} rows to {}", data.len(), out.display());
        }
        Command::Solve { data, solver, out } => {
            let opts = solver.options();
            usage(opts.validate())?;
            let trace = harness::cmd_solve(data, &opts, out)?;
            print_json(&trace)?;
        }
        Command::Certify { data, betas, out } => {
            let report = harness::cmd_certify(data, betas)?;
            match out {
                Some(p) => io::write_json(&report, p)?,
                None => print_json(&report)?,
            }
            if report.failure.is_some() {
                return Ok(EXIT_NUMERICAL);
            }
        }
        Command::Fit {
            data,
            k,
            solver,
            restarts,
            seed,
            center_column,
            scale,
            out,
        } => {
            let opts = FitOptions {
                k,
                solver: solver.options(),
                restarts,
                seed,
                preprocess: match (center_column, scale) {
                    (Some(0), _) => return Err(Failure::Usage("columns are 1-based".into())),
                    (Some(c), Some(alpha)) => Some(Preprocess {
                        alpha,
                        column: c - 1,
                    }),
                    _ => None,
                },
            };
            usage(opts.solver.validate())?;
            if k == 0 || restarts == 0 {
                return Err(Failure::Usage("k and restarts must be at least 1".into()));
            }
            let report = harness::cmd_fit(data, &opts, out)?;
            print_json(&report.refit)?;
        }
        Command::Phase {
            mode,
            d,
            alpha,
            tau,
            trials,
            success_tol,
            seed,
            workers,
            allow_unsafe,
            solver,
            out,
        } => {
            let mode = PhaseMode::from(mode);
            let values = match mode {
                PhaseMode::Aperture => alpha,
                PhaseMode::Imbalance => tau,
            };
            let values = if values.is_empty() {
                mode.default_sweep()
            } else {
                values
            };
            let mut cfg = PhaseConfig::new(mode, d, values);
            cfg.trials = trials;
            cfg.success_tol = success_tol;
            cfg.base_seed = seed;
            cfg.solver = solver.options();
            cfg.allow_unsafe = allow_unsafe;
            usage(cfg.validate())?;
            let grid = harness::cmd_phase(&cfg, workers)?;
            grid.write(&out)?;
            print!("{}", grid.fractions_csv());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_DATA
            })
        }
    }
}
