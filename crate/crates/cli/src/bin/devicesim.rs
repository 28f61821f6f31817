use std::path::PathBuf;

use anyhow::{Context, Result};
use bendaid::haptic::{HapticMode, ParamKey};
use bendaid_cli::{load_profile, parse_mode, parse_param, samples_csv, simulate, vibrato_profile, SimOutput};
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Session,
    Telemetry,
}

/// Runs a scripted gesture through the simulated knob and writes the result as CSV.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// Haptic mode (smooth, detent, spring, free, vibrato).
    #[arg(long, value_parser = parse_mode, default_value = "smooth")]
    mode: HapticMode,
    /// Gesture profile JSON.
    #[arg(long, required_unless_present = "vibrato")]
    profile: Option<PathBuf>,
    /// Generate a vibrato gesture instead: DEPTH_DEG RATE_HZ DURATION_S.
    #[arg(long, num_args = 3, value_names = ["DEPTH_DEG", "RATE_HZ", "DURATION_S"], conflicts_with = "profile")]
    vibrato: Option<Vec<f64>>,
    /// Mode parameter override, repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE", value_parser = parse_param)]
    params: Vec<(ParamKey, f64)>,
    #[arg(long, value_enum, default_value = "session")]
    format: Format,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    let args = Args::parse();
    let profile = match (&args.profile, &args.vibrato) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            load_profile(&text)?
        }
        (None, Some(v)) => vibrato_profile(v[0], v[1], v[2])?,
        (None, None) => unreachable!("clap requires one of them"),
    };
    let samples = simulate(args.mode, &args.params, &profile)?;
    let output = match args.format {
        Format::Session => SimOutput::Session,
        Format::Telemetry => SimOutput::Telemetry,
    };
    let csv = samples_csv(&samples, output)?;
    match args.out {
        Some(path) => std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::Write::write_all(&mut std::io::stdout().lock(), &csv)?,
    }
    Ok(())
}
