use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bcfeedback::bmcl::{sum_capacity, GAMMA_STEP};
use bcfeedback::channel::db_to_linear;
use bcfeedback::config::{parse_fb_list, parse_list, ConfigFile};
use bcfeedback::harness::{sweep_to_csv, CodeOptions, SchemeKind, SimSpec, SweepSpec};
use bcfeedback::lqg::lqg_symmetric_rate;
use bcfeedback::{Error, Result};

#[derive(Parser)]
#[command(version, about = "Linear feedback codes for the Gaussian broadcast channel")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo BLER over a grid of forward SNRs and feedback noise levels.
    Simulate(Box<SimulateArgs>),
    /// Perfect-feedback sum capacity against the number of users.
    Capacity {
        /// Forward SNR in dB.
        #[arg(long, default_value_t = 10.0)]
        snr_db: f64,
        /// Largest user count (powers of two from 1).
        #[arg(long, default_value_t = 256)]
        max_users: usize,
    },
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// key = value file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// ol | eol | lqg | bmcl | sk-tdd | uncoded
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    users: Option<usize>,
    /// Bits per user.
    #[arg(long)]
    k: Option<u32>,
    /// Channel uses.
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated forward SNRs in dB.
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<String>,
    /// Comma-separated feedback noise levels in dB, or `perfect`.
    #[arg(long, allow_hyphen_values = true)]
    fb_noise_db: Option<String>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    min_errors: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV; existing grid points are kept and skipped.
    #[arg(long)]
    out: Option<PathBuf>,
    /// BMCL γ grid step.
    #[arg(long)]
    gamma_grid: Option<f64>,
    /// OL/EOL balance gain.
    #[arg(long)]
    g: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Power budget P.
    #[arg(long)]
    power: Option<f64>,
}

fn pick<T: std::str::FromStr>(cli: Option<T>, file: &ConfigFile, key: &str) -> Result<Option<T>> {
    match cli {
        Some(v) => Ok(Some(v)),
        None => file.get(key),
    }
}

fn require<T>(v: Option<T>, key: &str) -> Result<T> {
    v.ok_or_else(|| Error::validation(format!("missing required setting `{key}`")))
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let scheme: SchemeKind = require(pick(args.scheme, &file, "scheme")?, "scheme")?.parse()?;
    let snr = require(pick(args.snr_db, &file, "snr-db")?, "snr-db")?;
    let fb = pick(args.fb_noise_db, &file, "fb-noise-db")?.unwrap_or_else(|| "perfect".into());
    let out: PathBuf = require(pick(args.out, &file, "out")?, "out")?;
    let defaults = SimSpec::default();
    let spec = SweepSpec {
        scheme,
        users: pick(args.users, &file, "users")?.unwrap_or(2),
        bits: require(pick(args.k, &file, "k")?, "k")?,
        uses: require(pick(args.n, &file, "n")?, "n")?,
        power: pick(args.power, &file, "power")?.unwrap_or(1.0),
        snr_db: parse_list(&snr)?,
        fb_db: parse_fb_list(&fb)?,
        sim: SimSpec {
            trials: pick(args.trials, &file, "trials")?.unwrap_or(defaults.trials),
            min_errors: pick(args.min_errors, &file, "min-errors")?.unwrap_or(defaults.min_errors),
            threads: pick(args.threads, &file, "threads")?,
        },
        seed: pick(args.seed, &file, "seed")?.unwrap_or(0),
        code: CodeOptions {
            g: pick(args.g, &file, "g")?.unwrap_or(1.0),
            gamma_step: pick(args.gamma_grid, &file, "gamma-grid")?.unwrap_or(GAMMA_STEP),
        },
    };
    let rows = sweep_to_csv(&spec, &out)?;
    for r in &rows {
        let blers: Vec<String> = (0..r.users).map(|l| format!("{:.3e}", r.bler(l))).collect();
        eprintln!(
            "{} snr={} dB fb={} bler=[{}] trials={} power={:.4} ({:.1}s)",
            r.scheme,
            r.snr_b_db,
            r.sigma_f2_db.map_or("perfect".to_string(), |v| format!("{v} dB")),
            blers.join(", "),
            r.trials,
            r.avg_power(),
            r.seconds
        );
    }
    Ok(())
}

fn capacity(snr_db: f64, max_users: usize) -> Result<()> {
    let snr = db_to_linear(snr_db);
    println!("L,c_sum,lqg_sum_rate,c_limit");
    let mut users = 1;
    while users <= max_users {
        let cap = sum_capacity(snr, users)?;
        let lqg = lqg_symmetric_rate(snr, users)?;
        println!("{users},{:.9},{:.9},{:.9}", cap.c_sum, lqg.sum_rate, cap.c_limit);
        users *= 2;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(*args),
        Command::Capacity { snr_db, max_users } => capacity(snr_db, max_users),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
