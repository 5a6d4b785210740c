use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use npmc::experiment::{
    aggregate_results, read_results, results_csv, run_experiment, run_verification,
    simulate_replicate, summary_csv, verification_csv, ExperimentConfig, ExperimentKind,
};
use npmc::verify::Suite;
use npmc::{Error, Result};

/// Nonlinear population Monte Carlo experiments on a target-tracking model.
#[derive(Parser)]
#[command(name = "npmc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Base seed (overrides experiment.seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core (overrides experiment.workers).
    #[arg(long)]
    workers: Option<usize>,
    /// Output file; standard output when absent (overrides output.path).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Configuration override, `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a configuration file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a verification suite, or `all`.
    Verify {
        suite: String,
        #[command(flatten)]
        common: Common,
    },
    /// Summarise a results file per sampler and grid point.
    Aggregate {
        results: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the simulated dataset of one replicate.
    Simulate {
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        replicate: usize,
        #[command(flatten)]
        common: Common,
    },
}

const VERIFICATION_FAILED: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("npmc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load(path: Option<&Path>, common: &Common) -> Result<ExperimentConfig> {
    let mut config = match path {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    for o in &common.overrides {
        config.apply_override(o)?;
    }
    if let Some(s) = common.seed {
        config.seed = s;
    }
    if let Some(w) = common.workers {
        config.workers = w;
    }
    if let Some(out) = &common.out {
        config.output = Some(out.clone());
    }
    config.validate()?;
    Ok(config)
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn verify(config: &ExperimentConfig) -> Result<u8> {
    let reports = run_verification(config)?;
    for r in &reports {
        eprint!("{}", r.to_text());
    }
    emit(
        config.output.as_deref(),
        &verification_csv(config, &reports),
    )?;
    Ok(if reports.iter().all(|r| r.passed()) {
        0
    } else {
        VERIFICATION_FAILED
    })
}

fn dispatch(command: Command) -> Result<u8> {
    match command {
        Command::Run { config, common } => {
            let config = load(Some(&config), &common)?;
            if config.kind == ExperimentKind::Verify {
                return verify(&config);
            }
            let rows = run_experiment(&config)?;
            emit(config.output.as_deref(), &results_csv(&config, &rows))?;
            eprint!("{}", summary_csv(&aggregate_results(&rows)?));
            Ok(0)
        }
        Command::Verify { suite, common } => {
            let mut config = load(None, &common)?;
            config.kind = ExperimentKind::Verify;
            config.suites = if suite == "all" {
                Suite::ALL.to_vec()
            } else {
                vec![suite.parse()?]
            };
            verify(&config)
        }
        Command::Aggregate { results, out } => {
            let file = std::fs::File::open(&results)?;
            let rows = read_results(BufReader::new(file))?;
            emit(out.as_deref(), &summary_csv(&aggregate_results(&rows)?))?;
            Ok(0)
        }
        Command::Simulate {
            config,
            replicate,
            common,
        } => {
            let config = load(Some(&config), &common)?;
            if replicate >= config.replicates {
                return Err(Error::Usage(format!(
                    "replicate {replicate} is outside 0..{}",
                    config.replicates
                )));
            }
            let dataset = simulate_replicate(&config, replicate)?;
            emit(config.output.as_deref(), &dataset.to_text())?;
            Ok(0)
        }
    }
}
