use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dlpr::metrics::SnrDenominator;
use dlpr::Algorithm;
use dlpr_cli::{apply_config, parse_config, preset, CliError, ExperimentSpec, PRESET_NAMES};

#[derive(Parser)]
#[command(name = "pr", version, about = "Dictionary-learning phase retrieval from Poisson measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate, reconstruct and write artifacts for every sweep cell.
    Run {
        #[command(flatten)]
        spec: SpecArgs,
        /// Restrict to these algorithms (amm, palm, pr).
        #[arg(long, value_delimiter = ',')]
        algo: Vec<String>,
    },
    /// Write scaled truths and Poisson counts only.
    Simulate {
        #[command(flatten)]
        spec: SpecArgs,
    },
    /// SNR of an estimate against a truth (PGM or CPRM files).
    Snr {
        estimate: PathBuf,
        truth: PathBuf,
        /// Divide by the truth norm instead of the estimate norm.
        #[arg(long)]
        truth_denominator: bool,
    },
    /// List the built-in presets.
    Presets,
}

#[derive(Args)]
struct SpecArgs {
    /// key=value experiment file; applied on top of --preset when both are given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run a single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0: one per core).
    #[arg(long)]
    jobs: Option<usize>,
}

fn build_spec(args: &SpecArgs) -> Result<ExperimentSpec, CliError> {
    let text = match &args.config {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let mut spec = match (&args.preset, text) {
        (Some(name), text) => {
            let mut spec = preset(name)?;
            if let Some(t) = text {
                apply_config(&mut spec, &t)?;
            }
            spec
        }
        (None, Some(t)) => parse_config(&t)?,
        (None, None) => return Err(CliError::Usage("give --config, --preset or both".into())),
    };
    if let Some(out) = &args.out {
        spec.out = out.clone();
    }
    if let Some(seed) = args.seed {
        spec.seeds = vec![seed];
    }
    if let Some(jobs) = args.jobs {
        spec.jobs = jobs;
    }
    Ok(spec)
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run { spec, algo } => {
            let mut spec = build_spec(&spec)?;
            if !algo.is_empty() {
                spec.algorithms = algo
                    .iter()
                    .map(|a| a.parse::<Algorithm>().map_err(|_| CliError::Usage(format!("unknown algorithm `{a}`"))))
                    .collect::<Result<_, _>>()?;
            }
            let report = dlpr_cli::run_experiment(&spec)?;
            print!("{}", dlpr_cli::experiment::summary_table(&spec, &report.cells));
            if report.failures() > 0 {
                eprintln!("{} of {} cells failed; see summary.csv", report.failures(), report.cells.len());
            }
            println!("manifest: {}", report.manifest.display());
            Ok(report.exit_code())
        }
        Command::Simulate { spec } => {
            let spec = build_spec(&spec)?;
            let files = dlpr_cli::run_simulation(&spec)?;
            println!("wrote {} files under {}", files.len(), spec.out.display());
            Ok(0)
        }
        Command::Snr {
            estimate,
            truth,
            truth_denominator,
        } => {
            let denom = if truth_denominator {
                SnrDenominator::Truth
            } else {
                SnrDenominator::Estimate
            };
            let rep = dlpr_cli::experiment::snr_files(&estimate, &truth, denom)?;
            println!("snr_db {}\nphase {}", rep.snr_db, rep.phase.arg() + 0.0);
            Ok(0)
        }
        Command::Presets => {
            for name in PRESET_NAMES {
                println!("{name}");
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
