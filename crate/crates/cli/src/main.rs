use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info, warn};
use minimaxpi::async_pi::ScheduleSpec;
use minimaxpi_cli::commands::{self, Algo, Options};
use minimaxpi_cli::output::{compare_csv, emit, trace_csv};
use minimaxpi_cli::problem::ProblemFile;
use minimaxpi_cli::CliError;

/// Policy iteration solvers for sequential zero-sum games.
///
/// Exit status: 0 converged, 1 input or I/O error, 2 policy cycle detected,
/// 3 iteration budget exhausted.
#[derive(Parser)]
#[command(name = "minimaxpi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem file with one algorithm.
    Solve {
        problem: PathBuf,
        #[arg(long, value_enum, default_value = "async")]
        algo: Algo,
        #[command(flatten)]
        run: RunArgs,
        /// Value table (CSV); standard output if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-step trace (CSV).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run several algorithms and tabulate iterations, residuals and status.
    Compare {
        problem: PathBuf,
        /// Comma-separated, e.g. `vi,hk,async`.
        #[arg(long, value_enum, value_delimiter = ',', default_value = "vi,async")]
        algo: Vec<Algo>,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit a game on which exact Pollatschek–Avi-Itzhak iteration cycles.
    Counterexample {
        #[arg(long, default_value = "counterexample.json")]
        out: PathBuf,
    },
    /// Solve the aggregate problem given by the file's aggregation block.
    AggregateSolve {
        problem: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Iterations, improvements or asynchronous steps, by algorithm.
    #[arg(long, default_value_t = 1_000_000)]
    max_steps: usize,
    /// `round_robin:k=10`, `random:seed=S`, `partitioned:p=4`,
    /// `delayed:B=3,inner=round_robin`.
    #[arg(long, default_value = "round_robin:k=10")]
    schedule: ScheduleSpec,
    /// Half-stage scaling for Markov games and minimax control.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run the asynchronous algorithm's updates on this many threads.
    #[arg(long, value_name = "P")]
    parallel: Option<usize>,
    /// Add a wall-clock column to traces.
    #[arg(long)]
    timing: bool,
}

impl RunArgs {
    fn options(&self) -> Options {
        Options {
            tol: self.tol,
            max_steps: self.max_steps,
            schedule: self.schedule.clone(),
            beta: self.beta,
            seed: self.seed,
            parallel: self.parallel,
            timing: self.timing,
        }
    }
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Solve { problem, algo, run, out, trace } => {
            let model = ProblemFile::load(&problem)?.model()?;
            let opts = run.options();
            let report = commands::solve(&model, algo, &opts)?;
            info!("{algo}: {} after {} iterations, residual {:e}", report.status, report.iterations, report.residual);
            commands::write_values(&report, out.as_deref())?;
            if let Some(path) = trace {
                emit(Some(&path), &trace_csv(&algo.to_string(), &report.trace, opts.timing))?;
            }
            if let Some(cycle) = &report.cycle {
                let values: Vec<String> = cycle.values.iter().map(|v| format!("{v:?}")).collect();
                eprintln!("policy cycle of period {}: values {}", cycle.period, values.join(" -> "));
            }
            Ok(report.status.exit_code())
        }
        Command::Compare { problem, algo, run, out } => {
            let model = ProblemFile::load(&problem)?.model()?;
            let opts = run.options();
            let cmp = commands::compare(&model, &algo, &opts)?;
            emit(out.as_deref(), &compare_csv(&cmp.reports))?;
            eprintln!("largest disagreement between converged algorithms: {:e}", cmp.max_disagreement);
            if cmp.max_disagreement > 10.0 * opts.tol {
                error!("converged algorithms disagree beyond 10 * tol");
                return Ok(1);
            }
            Ok(0)
        }
        Command::Counterexample { out } => {
            commands::counterexample(&out)?;
            eprintln!("wrote {} and {}", out.display(), out.with_extension("cycle.txt").display());
            Ok(0)
        }
        Command::AggregateSolve { problem, run, out } => {
            let file = ProblemFile::load(&problem)?;
            let model = file.model()?;
            let report = commands::aggregate_solve(&file, &model, &run.options())?;
            emit(out.as_deref(), &commands::aggregate_csv(&report))?;
            eprintln!("lookahead policy gap to the exact values: {:e}", report.gap);
            Ok(report.status.exit_code())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MINIMAXPI_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => {
            if code == 3 {
                warn!("iteration budget exhausted");
            }
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
