use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use koopq::compare::Tolerance;
use koopq::{compare_to_reference, run_experiment, CliError, ConfigFile, Experiment};

#[derive(Parser)]
#[command(name = "koopq", version, about = "Koopman-operator experiments for quantum systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare a results.json against a reference bundle.
    Compare {
        results: PathBuf,
        reference: PathBuf,
        /// Absolute tolerance for reference metrics that carry none.
        #[arg(long, default_value_t = 1e-12)]
        abs_tol: f64,
        /// Relative tolerance for reference metrics that carry none.
        #[arg(long, default_value_t = 0.0)]
        rel_tol: f64,
    },
    /// List the available experiments.
    List,
    #[command(external_subcommand)]
    Run(Vec<String>),
}

/// `koopq <experiment> [--config PATH] [--seed N] [--threads K] [--out DIR]`
#[derive(Parser)]
#[command(name = "koopq")]
struct RunArgs {
    experiment: String,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed given in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Caps the number of worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; defaults to `results/<experiment>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

const CHECK_FAILED: u8 = 3;

fn fail(e: &CliError) -> ExitCode {
    eprintln!("error: {e}");
    eprintln!("{}", e.report());
    ExitCode::from(e.exit_code() as u8)
}

fn run(args: RunArgs) -> Result<bool, CliError> {
    let experiment: Experiment = args.experiment.parse()?;
    let config = match &args.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    if let Some(n) = args.threads.or(config.threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot size the thread pool: {e}")))?;
    }
    let report = run_experiment(experiment, &config.params, args.seed.or(config.seed))?;
    let out = args.out.or(config.out).unwrap_or_else(|| PathBuf::from("results").join(experiment.name()));
    report.write(&out)?;
    for c in &report.checks {
        let value = c.value.map_or("non-finite".to_string(), |v| format!("{v:.6}"));
        println!("{} {}: {} (threshold {})", if c.passed { "PASS" } else { "FAIL" }, c.name, value, c.threshold);
    }
    println!("wrote {}", out.display());
    Ok(report.passed())
}

fn compare(results: PathBuf, reference: PathBuf, fallback: Tolerance) -> Result<bool, CliError> {
    let read = |p: &PathBuf| -> Result<serde_json::Value, CliError> { Ok(serde_json::from_slice(&std::fs::read(p)?)?) };
    let cmp = compare_to_reference(&read(&results)?, &read(&reference)?, fallback)?;
    println!("{}", serde_json::to_string_pretty(&cmp)?);
    Ok(cmp.passed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let outcome = match cli.command {
        Command::List => {
            Experiment::ALL.iter().for_each(|e| println!("{e}"));
            Ok(true)
        }
        Command::Compare { results, reference, abs_tol, rel_tol } => {
            compare(results, reference, Tolerance { abs: abs_tol, rel: rel_tol })
        }
        Command::Run(raw) => {
            let args = match RunArgs::try_parse_from(std::iter::once("koopq".to_string()).chain(raw)) {
                Ok(a) => a,
                Err(e) => e.exit(),
            };
            run(args)
        }
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(CHECK_FAILED),
        Err(e) => fail(&e),
    }
}
