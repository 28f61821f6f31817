//! Torque rendering for the haptic modes of a one-degree-of-freedom knob.
//!
//! Every function here is pure: the same config and knob state always give the
//! same torque, and nothing allocates. Torque is normalized so that `±1` is the
//! device's maximum torque; physical scaling belongs to the simulator.
//!
//! Angles are degrees relative to the session zero point, velocities degrees
//! per second, time seconds since the session started.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{clamp_unit, Real};

/// Haptic mode rendered by the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum HapticMode {
    Smooth,
    Detent,
    Spring,
    Free,
    Vibrato,
}

impl HapticMode {
    pub const ALL: [HapticMode; 5] = [
        HapticMode::Smooth,
        HapticMode::Detent,
        HapticMode::Spring,
        HapticMode::Free,
        HapticMode::Vibrato,
    ];

    /// Upper-case wire name, e.g. `SPRING`.
    pub fn name(self) -> &'static str {
        match self {
            HapticMode::Smooth => "SMOOTH",
            HapticMode::Detent => "DETENT",
            HapticMode::Spring => "SPRING",
            HapticMode::Free => "FREE",
            HapticMode::Vibrato => "VIBRATO",
        }
    }
}

impl fmt::Display for HapticMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown haptic mode `{0}`")]
pub struct UnknownMode(pub String);

impl FromStr for HapticMode {
    type Err = UnknownMode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HapticMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| UnknownMode(s.to_owned()))
    }
}

/// Tunable parameter of [`ModeConfig`], addressable by its field name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKey {
    DetentSpacingDeg,
    DetentSteepness,
    DetentClickFraction,
    DetentClickGain,
    SpringConstant,
    FreeTorque,
    VibratoAmplitude,
    VibratoFreqHz,
    RestVelocityEpsDps,
}

impl ParamKey {
    pub const ALL: [ParamKey; 9] = [
        ParamKey::DetentSpacingDeg,
        ParamKey::DetentSteepness,
        ParamKey::DetentClickFraction,
        ParamKey::DetentClickGain,
        ParamKey::SpringConstant,
        ParamKey::FreeTorque,
        ParamKey::VibratoAmplitude,
        ParamKey::VibratoFreqHz,
        ParamKey::RestVelocityEpsDps,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamKey::DetentSpacingDeg => "detent_spacing_deg",
            ParamKey::DetentSteepness => "detent_steepness",
            ParamKey::DetentClickFraction => "detent_click_fraction",
            ParamKey::DetentClickGain => "detent_click_gain",
            ParamKey::SpringConstant => "spring_constant",
            ParamKey::FreeTorque => "free_torque",
            ParamKey::VibratoAmplitude => "vibrato_amplitude",
            ParamKey::VibratoFreqHz => "vibrato_freq_hz",
            ParamKey::RestVelocityEpsDps => "rest_velocity_eps_dps",
        }
    }
}

impl fmt::Display for ParamKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown parameter `{0}`")]
pub struct UnknownParam(pub String);

impl FromStr for ParamKey {
    type Err = UnknownParam;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ParamKey::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| UnknownParam(s.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("parameter {key} = {value} violates {constraint}")]
    OutOfRange {
        key: ParamKey,
        value: f64,
        constraint: &'static str,
    },
}

/// Knob state as seen by the engine.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KnobState<T> {
    /// Unwrapped angle relative to the current zero point.
    pub angle_deg: T,
    pub velocity_dps: T,
    pub time_s: T,
}

impl<T: Real> KnobState<T> {
    pub fn new(angle_deg: T, velocity_dps: T, time_s: T) -> Self {
        Self {
            angle_deg,
            velocity_dps,
            time_s,
        }
    }
}

/// Normalized torque command, always within `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct TorqueCommand<T>(T);

impl<T: Real> TorqueCommand<T> {
    pub fn zero() -> Self {
        Self(T::zero())
    }

    /// Clamps `raw` to the unit interval.
    pub fn clamped(raw: T) -> Self {
        Self(clamp_unit(raw))
    }

    pub fn value(self) -> T {
        self.0
    }
}

/// Mode plus the parameters of every mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct ModeConfig<T> {
    pub mode: HapticMode,
    pub detent_spacing_deg: T,
    /// Exponent `k` of the detent resistance wall.
    pub detent_steepness: T,
    /// Fraction of each detent segment given to the assistive click pulse. Zero disables it.
    pub detent_click_fraction: T,
    pub detent_click_gain: T,
    /// Normalized torque per degree of displacement.
    pub spring_constant: T,
    pub free_torque: T,
    pub vibrato_amplitude: T,
    pub vibrato_freq_hz: T,
    /// Below this speed the detent renders no torque. Also the motion threshold that ends
    /// the post-reset torque hold.
    pub rest_velocity_eps_dps: T,
}

impl<T: Real> Default for ModeConfig<T> {
    fn default() -> Self {
        Self {
            mode: HapticMode::Smooth,
            detent_spacing_deg: T::lit(45.0),
            detent_steepness: T::lit(4.0),
            detent_click_fraction: T::lit(0.05),
            detent_click_gain: T::lit(0.3),
            spring_constant: T::one() / T::lit(90.0),
            free_torque: T::lit(0.2),
            vibrato_amplitude: T::lit(0.2),
            vibrato_freq_hz: T::lit(5.0),
            rest_velocity_eps_dps: T::one(),
        }
    }
}

impl<T: Real> ModeConfig<T> {
    /// Default parameters with the given mode.
    pub fn for_mode(mode: HapticMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn with_mode(mut self, mode: HapticMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn get(&self, key: ParamKey) -> T {
        match key {
            ParamKey::DetentSpacingDeg => self.detent_spacing_deg,
            ParamKey::DetentSteepness => self.detent_steepness,
            ParamKey::DetentClickFraction => self.detent_click_fraction,
            ParamKey::DetentClickGain => self.detent_click_gain,
            ParamKey::SpringConstant => self.spring_constant,
            ParamKey::FreeTorque => self.free_torque,
            ParamKey::VibratoAmplitude => self.vibrato_amplitude,
            ParamKey::VibratoFreqHz => self.vibrato_freq_hz,
            ParamKey::RestVelocityEpsDps => self.rest_velocity_eps_dps,
        }
    }

    fn slot(&mut self, key: ParamKey) -> &mut T {
        match key {
            ParamKey::DetentSpacingDeg => &mut self.detent_spacing_deg,
            ParamKey::DetentSteepness => &mut self.detent_steepness,
            ParamKey::DetentClickFraction => &mut self.detent_click_fraction,
            ParamKey::DetentClickGain => &mut self.detent_click_gain,
            ParamKey::SpringConstant => &mut self.spring_constant,
            ParamKey::FreeTorque => &mut self.free_torque,
            ParamKey::VibratoAmplitude => &mut self.vibrato_amplitude,
            ParamKey::VibratoFreqHz => &mut self.vibrato_freq_hz,
            ParamKey::RestVelocityEpsDps => &mut self.rest_velocity_eps_dps,
        }
    }

    /// Sets one parameter. The config is left untouched if the new value is invalid.
    pub fn set(&mut self, key: ParamKey, value: T) -> Result<(), ConfigError> {
        let mut next = *self;
        *next.slot(key) = value;
        next.validate()?;
        *self = next;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for key in ParamKey::ALL {
            let v = self.get(key);
            let (ok, constraint) = match key {
                ParamKey::DetentSpacingDeg => (v > T::zero(), "> 0"),
                ParamKey::DetentSteepness => (v > T::zero(), "> 0"),
                ParamKey::DetentClickFraction => {
                    (v >= T::zero() && v < T::lit(0.5), "in [0, 0.5)")
                }
                ParamKey::DetentClickGain | ParamKey::FreeTorque | ParamKey::VibratoAmplitude => {
                    (v >= T::zero() && v <= T::one(), "in [0, 1]")
                }
                ParamKey::SpringConstant | ParamKey::RestVelocityEpsDps => {
                    (v >= T::zero(), ">= 0")
                }
                ParamKey::VibratoFreqHz => (v > T::zero(), "> 0"),
            };
            if !(ok && v.is_finite()) {
                return Err(ConfigError::OutOfRange {
                    key,
                    value: v.to_f64_lossy(),
                    constraint,
                });
            }
        }
        Ok(())
    }
}

/// Renders the torque for `state` under `config`.
pub fn compute_torque<T: Real>(config: &ModeConfig<T>, state: &KnobState<T>) -> TorqueCommand<T> {
    let raw = match config.mode {
        HapticMode::Smooth => torque_smooth(state),
        HapticMode::Detent => torque_detent(config, state),
        HapticMode::Spring => torque_spring(config, state),
        HapticMode::Free => torque_free(config),
        HapticMode::Vibrato => torque_vibrato(config, state),
    };
    TorqueCommand::clamped(raw)
}

pub fn torque_smooth<T: Real>(_state: &KnobState<T>) -> T {
    T::zero()
}

/// Fractional progress in `[0, 1)` from the last detent crossed toward the next one in the
/// direction of travel.
pub fn detent_progress<T: Real>(angle_deg: T, spacing_deg: T, direction: T) -> T {
    let pos = angle_deg / spacing_deg;
    let f = if direction >= T::zero() {
        pos - pos.floor()
    } else {
        pos.ceil() - pos
    };
    // pos - floor(pos) rounds up to 1 for tiny negative pos; that is the next detent.
    if f >= T::one() {
        T::zero()
    } else {
        f
    }
}

/// `(e^{k·x} − 1) / (e^k − 1)`, evaluated without overflow for large `k`.
pub(crate) fn exp_wall<T: Real>(k: T, x: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    (k * (x - T::one())).exp() * (-(-k * x).exp_m1()) / (-(-k).exp_m1())
}

pub fn torque_detent<T: Real>(config: &ModeConfig<T>, state: &KnobState<T>) -> T {
    let v = state.velocity_dps;
    if v.abs() < config.rest_velocity_eps_dps {
        return T::zero();
    }
    let s = v.signum();
    let f = detent_progress(state.angle_deg, config.detent_spacing_deg, s);
    let click = config.detent_click_fraction;
    let raw = if f < click {
        s * config.detent_click_gain
    } else {
        let fp = (f - click) / (T::one() - click);
        -s * exp_wall(config.detent_steepness, fp)
    };
    clamp_unit(raw)
}

pub fn torque_spring<T: Real>(config: &ModeConfig<T>, state: &KnobState<T>) -> T {
    clamp_unit(-config.spring_constant * state.angle_deg)
}

pub fn torque_free<T: Real>(config: &ModeConfig<T>) -> T {
    config.free_torque
}

pub fn torque_vibrato<T: Real>(config: &ModeConfig<T>, state: &KnobState<T>) -> T {
    config.vibrato_amplitude * (T::TAU() * config.vibrato_freq_hz * state.time_s).sin()
}

/// Per-session engine state: active mode and the zero point captured at the last mode change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineSession<T> {
    pub active_config: ModeConfig<T>,
    /// Absolute device angle that maps to reported angle 0.
    pub zero_offset_deg: T,
    pub interacted_since_reset: bool,
    /// Set by a reset and cleared by the first observation after it, which always
    /// reports zero torque.
    awaiting_first_report: bool,
}

impl<T: Real> Default for EngineSession<T> {
    fn default() -> Self {
        Self::new(ModeConfig::default(), T::zero())
    }
}

impl<T: Real> EngineSession<T> {
    pub fn new(config: ModeConfig<T>, absolute_angle_deg: T) -> Self {
        Self {
            active_config: config,
            zero_offset_deg: absolute_angle_deg,
            interacted_since_reset: false,
            awaiting_first_report: true,
        }
    }

    /// Switches mode and makes the current knob position the new zero point.
    pub fn set_mode(self, config: ModeConfig<T>, current_absolute_angle: T) -> Self {
        Self::new(config, current_absolute_angle)
    }

    /// Re-zeroes without changing the mode.
    pub fn rezero(self, current_absolute_angle: T) -> Self {
        Self::new(self.active_config, current_absolute_angle)
    }

    pub fn mode(&self) -> HapticMode {
        self.active_config.mode
    }

    pub fn relative_angle(&self, absolute_angle_deg: T) -> T {
        absolute_angle_deg - self.zero_offset_deg
    }

    /// Maps an absolute reading to the reported knob state and the torque to command.
    ///
    /// Torque stays at zero after a reset until the knob leaves the zero point or its speed
    /// exceeds `rest_velocity_eps_dps`.
    pub fn observe(
        &mut self,
        absolute_angle_deg: T,
        velocity_dps: T,
        time_s: T,
    ) -> (KnobState<T>, TorqueCommand<T>) {
        let state = KnobState::new(self.relative_angle(absolute_angle_deg), velocity_dps, time_s);
        let first = std::mem::replace(&mut self.awaiting_first_report, false);
        if !self.interacted_since_reset && !first {
            let eps = self.active_config.rest_velocity_eps_dps;
            if state.angle_deg.abs() > eps || velocity_dps.abs() > eps {
                self.interacted_since_reset = true;
            }
        }
        let torque = if self.interacted_since_reset {
            compute_torque(&self.active_config, &state)
        } else {
            TorqueCommand::zero()
        };
        (state, torque)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(angle: f64, vel: f64) -> KnobState<f64> {
        KnobState::new(angle, vel, 0.0)
    }

    fn cfg(mode: HapticMode) -> ModeConfig<f64> {
        ModeConfig::for_mode(mode)
    }

    // (e^{k f} - 1)/(e^k - 1) with k = 4, evaluated independently in mpmath.
    const WALL_K4_HALF: f64 = 0.119_202_922_022_117_56;
    const WALL_K4_F0_473684: f64 = 0.105_428_973_963_409_27;

    #[test]
    fn smooth_is_zero() {
        for (a, v) in [(0.0, 0.0), (90.0, 500.0), (-30.0, 0.0)] {
            assert_eq!(compute_torque(&cfg(HapticMode::Smooth), &st(a, v)).value(), 0.0);
        }
    }

    #[test]
    fn detent_without_click_is_pure_exponential() {
        let mut c = cfg(HapticMode::Detent);
        c.detent_click_fraction = 0.0;
        let t = compute_torque(&c, &st(22.5, 10.0)).value();
        assert!((t + WALL_K4_HALF).abs() < 1e-12, "{t}");
        assert!((t - (-0.11921)).abs() < 1e-4);
    }

    #[test]
    fn detent_default_midsegment() {
        let t = torque_detent(&cfg(HapticMode::Detent), &st(22.5, 10.0));
        assert!((t + WALL_K4_F0_473684).abs() < 1e-12, "{t}");
    }

    #[test]
    fn detent_click_and_rest() {
        let c = cfg(HapticMode::Detent);
        assert_eq!(torque_detent(&c, &st(1.0, 10.0)), 0.3);
        assert_eq!(torque_detent(&c, &st(-1.0, -10.0)), -0.3);
        assert_eq!(torque_detent(&c, &st(22.5, 0.5)), 0.0);
    }

    #[test]
    fn detent_reverse_direction_measures_from_upper_detent() {
        let c = cfg(HapticMode::Detent);
        // Travelling down from 45: at 40 progress is 5/45 ≈ 0.111, past the click.
        let down = torque_detent(&c, &st(40.0, -10.0));
        let up = torque_detent(&c, &st(5.0, 10.0));
        assert!(down > 0.0);
        assert!((down + up).abs() < 1e-12);
    }

    #[test]
    fn detent_huge_steepness_stays_finite() {
        let mut c = cfg(HapticMode::Detent);
        c.detent_steepness = 1e6;
        let t = torque_detent(&c, &st(44.999, 10.0));
        assert!(t.is_finite() && t <= 0.0 && t >= -1.0);
        assert_eq!(torque_detent(&c, &st(20.0, 10.0)), -0.0);
    }

    #[test]
    fn spring_examples() {
        let c = cfg(HapticMode::Spring);
        assert_eq!(torque_spring(&c, &st(0.0, 100.0)), 0.0);
        assert!((torque_spring(&c, &st(45.0, 0.0)) + 0.5).abs() < 1e-15);
        assert_eq!(torque_spring(&c, &st(-200.0, 0.0)), 1.0);
    }

    #[test]
    fn free_examples() {
        let mut c = cfg(HapticMode::Free);
        assert_eq!(compute_torque(&c, &st(0.0, 0.0)).value(), 0.2);
        assert_eq!(compute_torque(&c, &st(80.0, -300.0)).value(), 0.2);
        c.free_torque = 0.0;
        assert_eq!(compute_torque(&c, &st(0.0, 0.0)).value(), 0.0);
    }

    #[test]
    fn vibrato_examples() {
        let c = cfg(HapticMode::Vibrato);
        let at = |t: f64| compute_torque(&c, &KnobState::new(10.0, 0.0, t)).value();
        assert_eq!(at(0.0), 0.0);
        assert!((at(0.05) - 0.2).abs() < 1e-12);
        assert!(at(0.1).abs() < 1e-12);
    }

    #[test]
    fn set_mode_zeroes_angle_and_torque() {
        let s = EngineSession::<f64>::default();
        let mut s = s.set_mode(cfg(HapticMode::Spring), 37.0);
        let (k, t) = s.observe(37.0, 0.0, 1.0);
        assert_eq!((k.angle_deg, t.value()), (0.0, 0.0));
        let (k, t) = s.observe(40.0, 0.0, 1.001);
        assert_eq!(k.angle_deg, 3.0);
        assert!((t.value() + 3.0 / 90.0).abs() < 1e-15);
    }

    #[test]
    fn second_set_mode_wins() {
        let s = EngineSession::<f64>::default()
            .set_mode(cfg(HapticMode::Detent), 10.0)
            .set_mode(cfg(HapticMode::Free), 25.0);
        assert_eq!(s.zero_offset_deg, 25.0);
        assert_eq!(s.mode(), HapticMode::Free);
    }

    #[test]
    fn hold_persists_at_rest() {
        let mut s = EngineSession::<f64>::default().set_mode(cfg(HapticMode::Free), 12.0);
        for i in 0..10 {
            let (_, t) = s.observe(12.0, 0.0, i as f64 * 1e-3);
            assert_eq!(t.value(), 0.0);
        }
        assert!(!s.interacted_since_reset);
        let (_, t) = s.observe(12.0, 5.0, 0.02);
        assert_eq!(t.value(), 0.2);
    }

    #[test]
    fn first_report_after_reset_is_held_even_while_moving() {
        let mut s = EngineSession::<f64>::default().set_mode(cfg(HapticMode::Free), 0.0);
        let (k, t) = s.observe(0.0, 250.0, 3.0);
        assert_eq!((k.angle_deg, t.value()), (0.0, 0.0));
    }

    #[test]
    fn params_by_name() {
        let mut c = ModeConfig::<f64>::default();
        let key: ParamKey = "spring_constant".parse().unwrap();
        c.set(key, 0.0111).unwrap();
        assert_eq!(c.spring_constant, 0.0111);
        let before = c;
        assert!(c.set(ParamKey::DetentClickFraction, 0.5).is_err());
        assert!(c.set(ParamKey::FreeTorque, f64::NAN).is_err());
        assert_eq!(c, before);
        assert!("bogus".parse::<ParamKey>().is_err());
    }

    #[test]
    fn mode_names() {
        for m in HapticMode::ALL {
            assert_eq!(m.name().parse::<HapticMode>().unwrap(), m);
        }
        assert_eq!(
            "MAGNET".parse::<HapticMode>(),
            Err(UnknownMode("MAGNET".into()))
        );
    }

    #[test]
    fn works_in_f32() {
        let c = ModeConfig::<f32>::for_mode(HapticMode::Spring);
        let t = compute_torque(&c, &KnobState::new(45.0f32, 0.0, 0.0)).value();
        assert!((t + 0.5).abs() < 1e-6);
    }
}
