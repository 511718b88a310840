use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lll_cli::config::ExperimentConfig;
use lll_cli::diag::{run_diag, DiagKind};
use lll_cli::runner::{resolve_out_dir, train};
use lll_cli::verify::{parse_suites, run_suites};
use lll_cli::exit_code;
use lll_core::Result;

#[derive(Parser)]
#[command(name = "lll", version, about = "Train and verify local learning rules: BP, DFA, DKP, PC, iPC, DKP-PC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a config file; writes metrics.csv and model.lll.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to out-dir from the config, then runs/<timestamp>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the property suites and print a PASS/FAIL table.
    Verify {
        /// delay, decay, omega, grad, equiv, decomp or all.
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// Emit one diagnostic as CSV (and PGM for errorprop).
    Diag {
        /// errorprop, align, energy or flops.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Ok(false) when verification ran but some suite failed.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = resolve_out_dir(&cfg, out.as_deref());
            let summary = train(&cfg, &dir)?;
            match summary.final_accuracy() {
                Some(acc) => println!("final test accuracy {acc:.4}; outputs in {}", dir.display()),
                None => println!("outputs in {}", dir.display()),
            }
            Ok(true)
        }
        Command::Verify { suite } => {
            let (results, pass) = run_suites(&parse_suites(&suite)?)?;
            for r in &results {
                println!("{}", r.line());
            }
            println!("{}", if pass { "all suites passed" } else { "some suites FAILED" });
            Ok(pass)
        }
        Command::Diag { kind, config, out } => {
            let kind: DiagKind = kind.parse()?;
            let cfg = ExperimentConfig::load(&config)?;
            let dir = resolve_out_dir(&cfg, out.as_deref());
            for path in run_diag(kind, &cfg, &dir)? {
                println!("wrote {}", path.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
