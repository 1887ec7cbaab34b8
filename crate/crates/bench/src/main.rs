use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use vrcrpn::optimizer::Mode;
use vrcrpn_bench::plan::{render_plan, PlanRequest};
use vrcrpn_bench::{compare, run_config_file, BenchError, RunOverrides};

#[derive(Parser)]
#[command(name = "vrcrpn-bench", version, about = "Run and compare VR-CR-PN and CR-PN experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Theory,
    Practical,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Run a single seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Use exact derivatives (tabular environments only).
        #[arg(long)]
        oracle: bool,
    },
    /// Compare two per-algorithm summary CSVs.
    Compare { a: PathBuf, b: PathBuf },
    /// Print the theory-mode schedule and planned sample totals.
    Plan {
        #[arg(long)]
        epsilon: f64,
        /// Failure probability P.
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 0.99)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        r_max: f64,
        /// Feature norm bound.
        #[arg(long, default_value_t = 2.0)]
        c_phi: f64,
        /// Parameter dimension.
        #[arg(long, default_value_t = 8)]
        dim: usize,
    },
}

fn dispatch(cli: Cli) -> Result<(), BenchError> {
    match cli.command {
        Command::Run { config, seed, out_dir, mode, oracle } => {
            let overrides = RunOverrides {
                seed,
                out_dir,
                mode: mode.map(|m| match m {
                    ModeArg::Theory => Mode::Theory,
                    ModeArg::Practical => Mode::Practical,
                }),
                oracle,
            };
            let (dir, outcomes) = run_config_file(&config, &overrides)?;
            for o in &outcomes {
                let s = o.summary();
                println!(
                    "{:<9} seed {:<4} return {:>10.4} ± {:<8.4} iterations {:<6} samples {:<8} {}",
                    s.algorithm, s.seed, s.final_return, s.final_return_stderr, s.iterations, s.samples_total, s.termination
                );
            }
            println!("outputs written to {}", dir.display());
        }
        Command::Compare { a, b } => println!("{}", compare::compare_files(&a, &b)?),
        Command::Plan { epsilon, delta, gamma, r_max, c_phi, dim } => {
            print!("{}", render_plan(&PlanRequest { epsilon, failure_prob: delta, gamma, r_max, c_phi, dim })?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
