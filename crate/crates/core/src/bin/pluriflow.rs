use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pluriflow::experiments::{
    exit_code, identities, kahler::kahler_converge, oracle::oracle_2d, parse_config, run::run_flow, run::RunOptions,
    sweep::beta_sweep, ExperimentConfig, Verdict, EXIT_CONFIG,
};
use pluriflow::grid::set_parallel;
use pluriflow::identities::SuiteOptions;
use pluriflow::monitors::Corruption;
use pluriflow::{Error, Result};

/// Pluriclosed flow on the flat 4-torus: runs, monitors and verification recipes.
#[derive(Parser, Debug)]
#[command(name = "pluriflow", version)]
struct Cli {
    /// TOML configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Single-threaded evaluation, for byte-identical reruns.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Output directory, overriding `[output] directory`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for random initial data and identity fixtures.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the flow and evaluate the monitors.
    Run {
        /// Replay with the corrupted fixture for this check.
        #[arg(long, value_name = "CHECK")]
        corrupt: Option<String>,
    },
    /// Convergence to the steady metric on a Kähler product.
    KahlerConverge,
    /// Distances to the beta = 1 flow at matched times.
    BetaSweep {
        /// Comma-separated exponents, overriding `[sweep] betas`.
        #[arg(long, value_delimiter = ',')]
        betas: Option<Vec<f64>>,
    },
    /// Compare split data against the two decoupled factor flows.
    #[command(name = "oracle-2d")]
    Oracle2d,
    /// Run the differential identity suite.
    CheckIdentities {
        /// Perturb one identity so that the suite must fail.
        #[arg(long)]
        tamper: bool,
    },
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => parse_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.output.directory = out.clone();
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<Verdict> {
    let cfg = load(cli)?;
    let out = cfg.output.directory.clone();
    match &cli.command {
        Command::Run { corrupt } => {
            let corrupt = match corrupt {
                Some(name) => Some(Corruption::from_check(name).ok_or_else(|| {
                    let known: Vec<&str> = Corruption::ALL.iter().map(|c| c.check()).collect();
                    Error::Config(format!("unknown check `{name}`; expected one of {}", known.join(", ")))
                })?),
                None => None,
            };
            Ok(run_flow(&cfg, &out, &RunOptions { corrupt })?.verdict())
        }
        Command::KahlerConverge => Ok(kahler_converge(&cfg, &out)?.verdict()),
        Command::BetaSweep { betas } => Ok(beta_sweep(&cfg, betas.as_deref(), &out)?.verdict()),
        Command::Oracle2d => Ok(oracle_2d(&cfg, &out)?.verdict()),
        Command::CheckIdentities { tamper } => {
            let report = identities::check_identities(&cfg, SuiteOptions { tamper: *tamper }, &out)?;
            Ok(identities::verdict(&report))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            return ExitCode::from(code as u8);
        }
    };
    if cli.deterministic {
        set_parallel(false);
    }
    match execute(&cli) {
        Ok(v) => {
            for line in &v.lines {
                println!("{line}");
            }
            println!("{}", if v.passed { "PASS" } else { "FAIL" });
            ExitCode::from(v.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
