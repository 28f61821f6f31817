//! Shared logic behind the `devicesim`, `session` and `studystats` binaries.

use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use bendaid::haptic::{HapticMode, ModeConfig, ParamKey};
use bendaid::session::{export_csv, import_csv, record, score, ContourSource, PitchMapConfig, ReferenceVibrato};
use bendaid::sim::{make_vibrato_gesture, run_profile, GestureProfile, KnobSample, RotorParams};
use bendaid::stats::{load_study_csv, summarize, StatsReport};

/// Accepts mode names in any case.
pub fn parse_mode(s: &str) -> Result<HapticMode> {
    Ok(s.to_ascii_uppercase().parse()?)
}

/// Parses `key=value` parameter overrides.
pub fn parse_param(s: &str) -> Result<(ParamKey, f64)> {
    let (k, v) = s.split_once('=').context("expected key=value")?;
    let value: f64 = v.trim().parse().with_context(|| format!("bad number `{v}`"))?;
    Ok((k.trim().parse()?, value))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimOutput {
    /// `t_ms,cents` through the default pitch map.
    Session,
    /// Every sample field.
    Telemetry,
}

pub fn simulate(
    mode: HapticMode,
    params: &[(ParamKey, f64)],
    profile: &GestureProfile<f64>,
) -> Result<Vec<KnobSample<f64>>> {
    let mut config = ModeConfig::for_mode(mode);
    for &(k, v) in params {
        config.set(k, v)?;
    }
    Ok(run_profile(profile, &config, &RotorParams::default())?)
}

pub fn load_profile(json: &str) -> Result<GestureProfile<f64>> {
    serde_json::from_str(json).context("gesture profile JSON")
}

pub fn vibrato_profile(depth_deg: f64, rate_hz: f64, duration_s: f64) -> Result<GestureProfile<f64>> {
    Ok(make_vibrato_gesture(depth_deg, rate_hz, duration_s)?)
}

pub fn samples_csv(samples: &[KnobSample<f64>], output: SimOutput) -> Result<Vec<u8>> {
    match output {
        SimOutput::Session => {
            let contour = record(&PitchMapConfig::default(), samples)?;
            Ok(export_csv(&contour))
        }
        SimOutput::Telemetry => {
            let mut s = String::from("seq,t_ms,angle_deg,velocity_dps,torque,mode\n");
            for k in samples {
                let _ = writeln!(
                    s,
                    "{},{},{:.4},{:.4},{:.4},{}",
                    k.seq, k.t_ms, k.angle_deg, k.velocity_dps, k.torque, k.mode
                );
            }
            Ok(s.into_bytes())
        }
    }
}

pub fn score_files(performed: &[u8], reference: &[u8], json: bool) -> Result<String> {
    let p = import_csv::<f64>(performed, ContourSource::Recorded).context("performed contour")?;
    let r = import_csv::<f64>(reference, ContourSource::Reference).context("reference contour")?;
    let s = score(&p, &r)?;
    if json {
        return Ok(serde_json::to_string_pretty(&s)? + "\n");
    }
    Ok(format!(
        "rmse_cents       {:.4}\ncorrelation      {:.4}\npeak_count_delta {}\ngrid_points      {}\n",
        s.rmse_cents, s.correlation, s.peak_count_delta, s.grid_points
    ))
}

pub fn reference_csv(depth_cents: f64, rate_hz: f64) -> Result<Vec<u8>> {
    let c = ReferenceVibrato { depth_cents, rate_hz, ..Default::default() }.contour()?;
    Ok(export_csv(&c))
}

pub fn study_report(ratings: &[u8]) -> Result<StatsReport> {
    let table = load_study_csv(ratings)?;
    if table.rows().is_empty() {
        bail!("no ratings");
    }
    Ok(summarize(&table)?)
}

pub fn render_report(r: &StatsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "participants: {}", r.participants);
    for c in &r.categories {
        let a = &c.anova;
        let _ = writeln!(
            s,
            "{:<16} F({}, {}) = {:.3}, p = {:.4}, eta^2 = {:.3}",
            c.category, a.df1, a.df2, a.f, a.p, a.eta_squared
        );
        for m in &c.ci95 {
            let _ = writeln!(s, "  {:<7} n={:<3} mean {:.2} [{:.2}, {:.2}]", m.mode, m.n, m.mean, m.lo, m.hi);
        }
    }
    let _ = write!(s, "preferred:");
    for (m, n) in &r.preferred_counts {
        let _ = write!(s, " {m}={n}");
    }
    let ties = r.preferences.iter().filter(|p| !p.tied_with.is_empty()).count();
    let _ = writeln!(s, " (ties broken toward Smooth: {ties})");
    s
}
