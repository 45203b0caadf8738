//! `gsvd`: generate designed pairs, run the gGKB solver, build dense
//! references and compare results.
//!
//! Exit codes: 0 success (for `run`: every target converged), 2 `run`
//! stopped with unconverged targets, 1 any error including usage errors.

mod commands;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gsvd_core::Side;

#[derive(Parser, Debug)]
#[command(name = "gsvd", version, about = "Extreme GSVD components via generalized Golub-Kahan bidiagonalization")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a designed test pair (A.mtx, L.mtx, truth.json).
    Generate(GenerateArgs),
    /// Run the solver on a pair.
    Run(RunArgs),
    /// Dense reference GSVD of a pair (desk scale only).
    Oracle(OracleArgs),
    /// Per-target errors of a run against a reference or another run.
    Compare(CompareArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Recipe {
    Example1,
    Example3,
    Example4,
    Designed,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    recipe: Recipe,
    #[arg(long)]
    n: usize,
    /// Rank of M (example3 and designed).
    #[arg(long)]
    r: Option<usize>,
    /// Comma-separated nonincreasing c values (designed).
    #[arg(long, value_delimiter = ',')]
    c: Vec<f64>,
    /// Range of the diagonal scaling D (designed).
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [1.0, 10.0])]
    d_range: Vec<f64>,
    #[arg(long, default_value_t = gsvd_core::testgen::DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum SideArg {
    #[value(name = "A", alias = "a")]
    A,
    #[value(name = "L", alias = "l")]
    L,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Side {
        match s {
            SideArg::A => Side::A,
            SideArg::L => Side::L,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ReorthArg {
    None,
    Full,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PinvArg {
    Direct,
    Lsqr,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    l: PathBuf,
    #[arg(long, value_enum, default_value = "A")]
    side: SideArg,
    #[arg(long, default_value_t = 1)]
    largest: usize,
    #[arg(long, default_value_t = 0)]
    smallest: usize,
    #[arg(long, default_value_t = gsvd_core::solver::DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, value_enum, default_value = "full")]
    reorth: ReorthArg,
    #[arg(long, value_enum, default_value = "direct")]
    pinv: PinvArg,
    /// LSQR tolerance for `--pinv lsqr`.
    #[arg(long, default_value_t = 1e-10)]
    inner_tol: f64,
    #[arg(long, default_value_t = 2000)]
    max_inner_iters: usize,
    #[arg(long, default_value_t = gsvd_core::ggkb::DEFAULT_BREAKDOWN_TOL)]
    breakdown_tol: f64,
    /// Seed of the random starting vector.
    #[arg(long, default_value_t = gsvd_core::ggkb::DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Oracle directory; adds error columns and ghost detection.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Keep iterating after every target has converged.
    #[arg(long)]
    no_early_stop: bool,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    l: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Run directory.
    run: PathBuf,
    /// Oracle directory or another run directory.
    reference: PathBuf,
    /// Where compare.csv and compare.json go; defaults to the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let res = match cli.cmd {
        Command::Generate(a) => commands::generate(a),
        Command::Run(a) => commands::run(a),
        Command::Oracle(a) => commands::oracle(a),
        Command::Compare(a) => commands::compare(a),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}

/// The error chain, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}
