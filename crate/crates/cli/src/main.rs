use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bpa_cli::commands::{self, OracleArgs, TransformArgs, TransformMode};
use bpa_cli::error::{CliError, CliResult};
use bpa_cli::report::RunReport;
use bpa_core::sinkhorn::{DEFAULT_ITERATIONS, DEFAULT_LAMBDA};
use bpa_core::SolverConfig;
use clap::{Parser, Subcommand, ValueEnum};

/// Balanced pairwise affinities: feature transform and benchmarks.
#[derive(Debug, Parser)]
#[command(name = "bpa", version)]
struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true, env = "BPA_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Bpa,
    BpaAttn,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Replace each row of a feature file by its BPA embedding.
    Transform {
        /// Input features (BPAF, or CSV when the name ends in .csv).
        input: PathBuf,
        /// Output path; format chosen by extension like the input.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_LAMBDA)]
        lambda: f64,
        #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
        iters: usize,
        #[arg(long, value_enum, default_value_t = Mode::Bpa)]
        mode: Mode,
        /// Log-domain updates; `--log-domain false` switches to plain scaling.
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        log_domain: bool,
    },
    /// Sphere clustering grid; JSON report plus optional per-cell CSV.
    ClusterBench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Synthetic few-shot episodes with a prototype classifier.
    FscBench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Synthetic query/gallery retrieval.
    RetrievalBench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Compare entropic plans with the exact optimum on small random sets.
    OracleCheck {
        #[arg(long, default_value_t = 4)]
        n_min: usize,
        #[arg(long, default_value_t = 7)]
        n_max: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 200.0)]
        lambda: f64,
        #[arg(long, default_value_t = 2000)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn emit(report: RunReport, path: Option<&Path>) -> CliResult<()> {
    let text = report.to_json();
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::output(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Transform {
            input,
            out,
            lambda,
            iters,
            mode,
            log_domain,
        } => {
            let args = TransformArgs {
                input,
                output: out,
                solver: SolverConfig::default()
                    .with_lambda(lambda)
                    .with_iterations(iters)
                    .with_log_domain(log_domain),
                mode: match mode {
                    Mode::Bpa => TransformMode::Bpa,
                    Mode::BpaAttn => TransformMode::BpaAttn,
                },
            };
            let s = commands::transform(&args)?;
            eprintln!(
                "wrote {}x{} features; row_dev={:.3e} col_dev={:.3e}",
                s.rows, s.cols, s.row_dev, s.col_dev
            );
            Ok(())
        }
        Command::ClusterBench {
            config,
            csv,
            report,
        } => emit(
            commands::cluster_bench(config.as_deref(), csv.as_deref())?,
            report.as_deref(),
        ),
        Command::FscBench { config, report } => {
            emit(commands::fsc_bench(config.as_deref())?, report.as_deref())
        }
        Command::RetrievalBench { config, report } => emit(
            commands::retrieval_bench(config.as_deref())?,
            report.as_deref(),
        ),
        Command::OracleCheck {
            n_min,
            n_max,
            trials,
            lambda,
            iters,
            seed,
            report,
        } => {
            let args = OracleArgs {
                n_min,
                n_max,
                trials,
                lambda,
                iterations: iters,
                seed,
            };
            emit(commands::oracle(&args)?, report.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(0) => Err(CliError::Config("--threads must be >= 1".into())),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))
            .and_then(|pool| pool.install(|| run(cli.command))),
        None => run(cli.command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
