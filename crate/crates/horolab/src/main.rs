//! Command-line entry point: runs one experiment family from a flat
//! `key=value` config and writes CSV/JSON/manifest artifacts, or produces a
//! calibration file.  Exit codes: 0 when every pass/fail check passes, 1
//! when a check fails, 2 on configuration or runtime errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use horolab::experiments::{
    parse_config_file, run, write_artifacts, ExperimentConfig,
};
use horolab::returns::calibrate_with_resolution;

#[derive(Parser)]
#[command(
    name = "horolab",
    about = "Numerical laboratory for horocycle-flow experiments on the modular surface",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recover cusp-form coefficients and compare with the integer oracle.
    Tau(RunArgs),
    /// Fit the coefficient-growth slope on a dyadic ladder.
    #[command(name = "good-bound")]
    GoodBound(RunArgs),
    /// Measure dilation-operator norm ratios on the model spaces.
    Utau(RunArgs),
    /// Sweep transfer-solution Sobolev ratios across twists and rescalings.
    Coeqn(RunArgs),
    /// Run sparse-time averages and the map-vs-flow exponent fit.
    Sparse(RunArgs),
    /// Count close returns and check count bounds and separation.
    Returns(RunArgs),
    /// Compare width-average constants across the (rescale, horizon) grid.
    Scaling(RunArgs),
    /// Track cusp-excursion growth medians along the diagonal flow.
    Loglaw(RunArgs),
    /// Measure the injectivity and degenerate-count constants and write a
    /// calibration file.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat key=value config file (may be empty to take all defaults).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for the CSV, JSON, and manifest artifacts.
    #[arg(long, default_value = "horolab-out")]
    out: PathBuf,
    /// Seed for sampled points and generated test families.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for independent rows (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Output directory for calibration.txt.
    #[arg(long, default_value = "horolab-out")]
    out: PathBuf,
    /// Seed of the calibration point sample.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Grid resolution of the injectivity search, in (0, 0.5].
    #[arg(long, default_value_t = 0.05)]
    resolution: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (id, args) = match cli.command {
        Command::Tau(a) => ("tau", a),
        Command::GoodBound(a) => ("good-bound", a),
        Command::Utau(a) => ("utau", a),
        Command::Coeqn(a) => ("coeqn", a),
        Command::Sparse(a) => ("sparse", a),
        Command::Returns(a) => ("returns", a),
        Command::Scaling(a) => ("scaling", a),
        Command::Loglaw(a) => ("loglaw", a),
        Command::Calibrate(a) => return run_calibrate(a),
    };
    match run_experiment(id, args) {
        Ok(pass) => {
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("horolab {id}: {e}");
            ExitCode::from(2)
        }
    }
}

fn run_experiment(id: &str, args: RunArgs) -> horolab::Result<bool> {
    let raw = parse_config_file(&args.config)?;
    let config = ExperimentConfig::resolve(id, &raw, args.seed)?;
    let jobs = args.jobs.unwrap_or_else(|| {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    });
    let arts = run(&config, jobs)?;
    let (csv, _, manifest) = write_artifacts(&args.out, &arts)?;

    println!("experiment={id} config_hash={}", arts.config_hash);
    for (key, value) in &arts.output.summary {
        println!("{key}={value}");
    }
    println!("rows={} csv={} manifest={}", arts.output.table.rows.len(), csv.display(), manifest.display());
    println!("{}", if arts.output.pass { "PASS" } else { "FAIL" });
    Ok(arts.output.pass)
}

fn run_calibrate(args: CalibrateArgs) -> ExitCode {
    match calibrate_and_save(&args) {
        Ok(path) => {
            println!("calibration written to {}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("horolab calibrate: {e}");
            ExitCode::from(2)
        }
    }
}

fn calibrate_and_save(args: &CalibrateArgs) -> horolab::Result<PathBuf> {
    let calib = calibrate_with_resolution(args.seed, args.resolution)?;
    std::fs::create_dir_all(&args.out)?;
    let path = args.out.join("calibration.txt");
    calib.save(&path)?;
    println!(
        "C_Gamma={} C_Gamma_prime={} seed={} date={}",
        calib.c_gamma, calib.c_gamma_prime, calib.seed, calib.date
    );
    Ok(path)
}
