use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};

use emx_core::model::SystemVariant;
use emx_core::scenario::{self, parse_scenario, RunOutput, Scenario, ScenarioError};

/// Electricity-market dynamics: simulation, stability and dispatch.
#[derive(Parser)]
#[command(name = "emx", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file; repeat to run a batch.
    #[arg(long = "scenario", required = true)]
    scenarios: Vec<PathBuf>,
    /// Output directory.
    #[arg(long, env = "EMX_OUT_DIR", default_value = ".")]
    out: PathBuf,
    /// Scenarios to run in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the scenario's model and write the trajectory CSV.
    Simulate(Common),
    /// Write the generalized spectrum of the linearized model.
    Stability {
        #[command(flatten)]
        common: Common,
        /// Pencil to analyse; defaults to the one matching the model.
        #[arg(long)]
        variant: Option<SystemVariant>,
    },
    /// Write the fixed point of the scenario's model.
    Equilibrium(Common),
    /// Solve the scenario's dispatch problem.
    Dispatch(Common),
    /// Produce every artifact listed in the scenario's `outputs`.
    Run(Common),
}

fn execute(cmd: &Command, sc: &Scenario) -> Result<Vec<RunOutput>, ScenarioError> {
    match cmd {
        Command::Simulate(_) => scenario::simulate(sc),
        Command::Stability { variant, .. } => {
            let v = variant.unwrap_or_else(|| sc.spectrum_variant());
            Ok(vec![RunOutput::Spectrum(scenario::stability(sc, v)?)])
        }
        Command::Equilibrium(_) => Ok(vec![RunOutput::Equilibrium(sc.equilibrium()?)]),
        Command::Dispatch(_) => Ok(vec![RunOutput::Dispatch(scenario::dispatch(sc)?)]),
        Command::Run(_) => scenario::run_scenario(sc),
    }
}

fn run_one(cmd: &Command, path: &Path, out: &Path) -> Result<Vec<PathBuf>, ScenarioError> {
    let sc = parse_scenario(path)?;
    let outputs = execute(cmd, &sc)?;
    scenario::write_outputs(&sc.name, &outputs, out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Simulate(c) | Command::Equilibrium(c) | Command::Dispatch(c) | Command::Run(c) => c,
        Command::Stability { common, .. } => common,
    };
    let paths = &common.scenarios;
    let results: Vec<Mutex<Option<Result<Vec<PathBuf>, ScenarioError>>>> =
        paths.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = common.jobs.clamp(1, paths.len().max(1));

    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= paths.len() {
                    break;
                }
                let r = run_one(&cli.command, &paths[i], &common.out);
                *results[i].lock().expect("result slot") = Some(r);
            });
        }
    });

    let mut failed = false;
    for (path, slot) in paths.iter().zip(results) {
        match slot.into_inner().expect("result slot").expect("every job ran") {
            Ok(files) => {
                for f in files {
                    println!("{}", f.display());
                }
            }
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                failed = true;
            }
        }
    }
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
