mod artifacts;
mod config;
mod error;
mod scenario;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};

use crate::artifacts::write_json;
use crate::config::Scenario;
use crate::error::CliError;
use crate::scenario::Tally;

/// Most probable paths and stochastic flows from scenario files.
///
/// Exit codes: 0 success, 2 config error, 3 solver non-convergence (partial
/// artifacts are written), 4 ellipticity violation, 1 anything else.
#[derive(Parser)]
#[command(name = "mpflow", version)]
struct Cli {
    /// scenario file (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory, created if missing
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// overrides the scenario seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// only report errors
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// everything enabled under [outputs]
    Run,
    /// Monte-Carlo ensemble: ensemble_summary.json (+ ensemble_paths.csv)
    Simulate,
    /// forward most probable paths: mpp_forward.csv
    Mpp,
    /// boundary value most probable paths: mpp_bvp.csv, bvp_summary.json
    Shoot,
    /// print the Onsager-Machlup functional of each trajectory in a CSV
    OmEval {
        /// CSV with header t,x1,...,xd[,sample]
        csv: PathBuf,
    },
    /// integrate the [epdiff] table and write epdiff_drift.json
    EpdiffDrift,
    /// re-render figure.svg from the CSVs in --out
    Plot,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config <file> is required".into()))?;
    let sc = Scenario::load(path)?;
    let seed = cli.seed.unwrap_or(sc.seed);
    if let Command::EpdiffDrift = cli.command {
        let Some(cfg) = &sc.epdiff else {
            return Err(CliError::Config("epdiff: table missing".into()));
        };
        let file = scenario::compute_drift(&sc, cfg)?;
        let e0 = file.energies[0];
        let spread = file
            .energies
            .iter()
            .fold(0.0f64, |m, e| m.max((e - e0).abs()))
            / e0.abs().max(f64::MIN_POSITIVE);
        info!("X-energy {e0:.6e}, relative variation {spread:.2e}");
        prepare(&cli.out)?;
        return write_json(&cli.out.join(scenario::DRIFT_JSON), &file);
    }
    let model = scenario::build_model(&sc)?;
    if let Command::OmEval { csv } = &cli.command {
        let values = scenario::om_eval(&model, csv)?;
        if let [(_, v)] = values.as_slice() {
            println!("{v}");
        } else {
            for (id, v) in values {
                println!("{id} {v}");
            }
        }
        return Ok(());
    }
    prepare(&cli.out)?;
    info!(
        "scenario {} with {} landmarks",
        sc.name,
        model.landmarks.len()
    );
    let out = cli.out.as_path();
    match cli.command {
        Command::Run => scenario::run(&sc, &model, seed, out),
        Command::Simulate => scenario::ensemble(&sc, &model, seed, out),
        Command::Mpp => {
            let mut tally = Tally::default();
            scenario::write_forward(&sc, &model, out, &mut tally)?;
            tally.finish()
        }
        Command::Shoot => {
            let mut tally = Tally::default();
            let targets = scenario::bvp_targets(&sc, None, &model)?;
            scenario::bvp(&sc, &model, &targets, out, &mut tally)?;
            tally.finish()
        }
        Command::Plot => scenario::plot(&sc, &model, out),
        Command::OmEval { .. } | Command::EpdiffDrift => unreachable!("handled above"),
    }
}

fn prepare(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out.display())))
}
