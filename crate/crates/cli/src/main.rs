//! `evocert`: certify a problem file or a built-in scenario, simulate it and
//! check the simulation against every licensed envelope.

mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use run::{Format, Input, RunConfig};

#[derive(Parser)]
#[command(name = "evocert", version, about = "Evolution-operator stability certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify, simulate and verify one problem.
    Run(RunArgs),
    /// List built-in scenarios and theorem ids.
    List,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Problem file (TOML); same as --config.
    #[arg(value_name = "CONFIG", conflicts_with_all = ["config", "scenario"])]
    path: Option<PathBuf>,
    /// Problem file (TOML).
    #[arg(long, conflicts_with = "scenario")]
    config: Option<PathBuf>,
    /// Built-in scenario: example1, example2, example3, blowup-remark.
    #[arg(long)]
    scenario: Option<String>,
    /// Comma-separated theorem ids (default: all that apply).
    #[arg(long, value_delimiter = ',')]
    theorems: Vec<String>,
    /// Final analysis time.
    #[arg(long)]
    tmax: Option<f64>,
    /// Integration tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Seed for the randomized stability trials.
    #[arg(long)]
    seed: Option<u64>,
    /// Randomized stability trials per stability certificate.
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long, env = "EVOCERT_OUT")]
    out: Option<PathBuf>,
    /// Comma-separated subset of json, csv, text.
    #[arg(long, value_delimiter = ',')]
    formats: Vec<Format>,
    /// Target bound for the stability certificates.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Fixed κ for the ζ certificates.
    #[arg(long)]
    kappa: Option<f64>,
    /// Evaluate sequentially.
    #[arg(long)]
    sequential: bool,
}

impl RunArgs {
    fn into_config(self) -> anyhow::Result<RunConfig> {
        let input = match (self.path.or(self.config), self.scenario) {
            (Some(p), None) => Input::File(p),
            (None, Some(s)) => Input::Scenario(s),
            (None, None) => anyhow::bail!("give a problem file or --scenario"),
            (Some(_), Some(_)) => unreachable!("clap rejects both"),
        };
        Ok(RunConfig {
            input,
            theorems: self.theorems,
            t_max: self.tmax,
            tol: self.tol,
            seed: self.seed,
            trials: self.trials,
            output_dir: self.out,
            formats: self.formats,
            epsilon: self.epsilon,
            kappa: self.kappa,
            sequential: self.sequential,
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            run::list();
            ExitCode::SUCCESS
        }
        Command::Run(args) => {
            let outcome = args.into_config().and_then(run::run);
            match outcome {
                Ok(o) => {
                    print!("{}", o.summary);
                    for f in &o.soundness_failures {
                        eprintln!("soundness failure: {f}");
                    }
                    if o.soundness_failures.is_empty() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(2)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
