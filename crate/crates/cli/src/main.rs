//! `nullcoord` — drive the null-coordinate and Klein-Gordon reduction
//! pipelines from JSON configs.
//!
//! Exit codes: 0 all asserted tolerances pass, 2 a tolerance failed,
//! 3 small divisor / unsolvable mean, 4 smallness or diffeomorphism guard,
//! 5 I/O or config error.

mod config;
mod reports;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "nullcoord", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Straighten the transport field `w.d_phi + (1 + a0) d_x`
    Straighten(CommonArgs),
    /// Build the null chart for `g = -A dt^2 + A^-1 dx^2` and verify it
    Chart(CommonArgs),
    /// Transport Klein-Gordon coefficients and remove the time derivative
    Kg(CommonArgs),
    /// First-order pseudo-differential reduction
    Psdo(CommonArgs),
    /// Sampled measure of the excluded frequency set
    DiophScan(CommonArgs),
    /// Leapfrog evolution of the geometric wave equation
    Evolve(CommonArgs),
    /// Full verification pass: chart, metric form, parity suite
    Check(CommonArgs),
}

#[derive(Parser)]
struct CommonArgs {
    /// JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// output directory for reports and artifacts
    #[arg(long)]
    out: PathBuf,
    /// overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, runner): (&CommonArgs, fn(&RunConfig, &reports::RunContext) -> anyhow::Result<i32>) =
        match &cli.command {
            Command::Straighten(a) => (a, reports::run_straighten),
            Command::Chart(a) => (a, reports::run_chart),
            Command::Kg(a) => (a, reports::run_kg),
            Command::Psdo(a) => (a, reports::run_psdo),
            Command::DiophScan(a) => (a, reports::run_dioph_scan),
            Command::Evolve(a) => (a, reports::run_evolve),
            Command::Check(a) => (a, reports::run_check),
        };

    let code = execute(args, runner);
    ExitCode::from(code as u8)
}

fn execute(
    args: &CommonArgs,
    runner: fn(&RunConfig, &reports::RunContext) -> anyhow::Result<i32>,
) -> i32 {
    let (mut cfg, base) = match RunConfig::load(&args.config) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("{}", reports::error_record(&e, 5));
            return 5;
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = Some(seed);
    }
    if let Err(e) = std::fs::create_dir_all(&args.out) {
        eprintln!("{}", reports::error_record(&anyhow::Error::from(e), 5));
        return 5;
    }
    let ctx = reports::RunContext { out: args.out.clone(), base };
    match runner(&cfg, &ctx) {
        Ok(code) => code,
        Err(e) => {
            let code = reports::classify(&e);
            let record = reports::error_record(&e, code);
            eprintln!("{record}");
            let _ = std::fs::write(ctx.out.join("error.json"), format!("{record}\n"));
            code
        }
    }
}
