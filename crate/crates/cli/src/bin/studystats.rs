use std::path::PathBuf;

use anyhow::{Context, Result};
use bendaid_cli::{render_report, study_report};
use clap::{Parser, Subcommand};

/// Statistics for the haptic-mode rating study.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Per-category ANOVA, per-mode confidence intervals and preferred modes.
    Report {
        /// CSV with header `participant,mode,category,rating`.
        ratings: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

fn main() -> Result<()> {
    let Cmd::Report { ratings, json } = Args::parse().cmd;
    let bytes = std::fs::read(&ratings).with_context(|| format!("reading {}", ratings.display()))?;
    let report = study_report(&bytes)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", render_report(&report));
    }
    Ok(())
}
