use std::path::PathBuf;

use anyhow::{Context, Result};
use bendaid_cli::{reference_csv, score_files};
use clap::{Parser, Subcommand};

/// Pitch-contour tools for the mimicry task.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Score a performed contour against a reference contour.
    Score {
        #[arg(long)]
        performed: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Print the score as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Write the reference vibrato contour.
    Reference {
        #[arg(long, default_value_t = 50.0)]
        depth: f64,
        #[arg(long, default_value_t = 5.0)]
        rate: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read(path: &PathBuf) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn main() -> Result<()> {
    match Args::parse().cmd {
        Cmd::Score { performed, reference, json } => {
            print!("{}", score_files(&read(&performed)?, &read(&reference)?, json)?);
        }
        Cmd::Reference { depth, rate, out } => {
            let csv = reference_csv(depth, rate)?;
            match out {
                Some(p) => std::fs::write(&p, csv).with_context(|| format!("writing {}", p.display()))?,
                None => std::io::Write::write_all(&mut std::io::stdout().lock(), &csv)?,
            }
        }
    }
    Ok(())
}
