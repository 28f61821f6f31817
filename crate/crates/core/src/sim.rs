//! Simulated rotary knob: rotor physics under engine torque plus user torque.
//!
//! The integrator is semi-implicit Euler at a fixed tick rate. Velocities are in
//! degrees per second; a net normalized torque `τ` on inertia `I` accelerates the
//! rotor by `τ / I` rad/s², i.e. `τ / I · 180/π` deg/s².

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::haptic::{EngineSession, HapticMode, ModeConfig, ParamKey, ConfigError, TorqueCommand};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid rotor parameter: {0}")]
    Rotor(&'static str),
    #[error("invalid gesture: {0}")]
    Gesture(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct RotorParams<T> {
    pub inertia: T,
    /// Normalized torque per deg/s.
    pub damping: T,
    /// N·mm at normalized torque 1. Informational.
    pub torque_scale: T,
    pub tick_rate_hz: T,
}

impl<T: Real> Default for RotorParams<T> {
    fn default() -> Self {
        Self {
            inertia: T::one(),
            damping: T::lit(0.002),
            torque_scale: T::lit(70.0),
            tick_rate_hz: T::lit(1000.0),
        }
    }
}

impl<T: Real> RotorParams<T> {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.inertia > T::zero() && self.inertia.is_finite()) {
            return Err(SimError::Rotor("inertia must be > 0"));
        }
        if !(self.damping >= T::zero() && self.damping.is_finite()) {
            return Err(SimError::Rotor("damping must be >= 0"));
        }
        if !(self.tick_rate_hz >= T::lit(100.0) && self.tick_rate_hz.is_finite()) {
            return Err(SimError::Rotor("tick_rate_hz must be >= 100"));
        }
        Ok(())
    }

    pub fn dt(&self) -> T {
        T::one() / self.tick_rate_hz
    }

    /// Angular acceleration in deg/s² produced by one unit of normalized torque.
    pub fn accel_per_torque(&self) -> T {
        T::lit(180.0) / (T::PI() * self.inertia)
    }
}

/// Physical rotor state. `angle_deg` is the absolute device angle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RotorState<T> {
    pub angle_deg: T,
    pub velocity_dps: T,
    pub time_s: T,
}

/// One semi-implicit Euler step of length `params.dt()`.
///
/// `engine_torque` must be the torque rendered at the pre-step state.
pub fn integrate<T: Real>(
    state: RotorState<T>,
    user_torque: T,
    engine_torque: T,
    params: &RotorParams<T>,
) -> RotorState<T> {
    let dt = params.dt();
    let net = user_torque + engine_torque - params.damping * state.velocity_dps;
    let velocity_dps = state.velocity_dps + dt * net * params.accel_per_torque();
    RotorState {
        angle_deg: state.angle_deg + dt * velocity_dps,
        velocity_dps,
        time_s: state.time_s + dt,
    }
}

/// One telemetry tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnobSample<T> {
    pub seq: u64,
    pub t_ms: u64,
    pub angle_deg: T,
    pub velocity_dps: T,
    pub torque: T,
    pub mode: HapticMode,
}

/// User torque as a function of time since the start of its segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub enum TorqueShape<T> {
    Constant { value: T },
    /// Linear from `from` at the segment start to `to` at its end.
    Ramp { from: T, to: T },
    /// `offset + amplitude·sin(2π·freq_hz·t + phase_rad)`.
    Sine {
        offset: T,
        amplitude: T,
        freq_hz: T,
        phase_rad: T,
    },
}

impl<T: Real> TorqueShape<T> {
    pub fn eval(&self, t: T, duration: T) -> T {
        match *self {
            TorqueShape::Constant { value } => value,
            TorqueShape::Ramp { from, to } => from + (to - from) * (t / duration),
            TorqueShape::Sine {
                offset,
                amplitude,
                freq_hz,
                phase_rad,
            } => offset + amplitude * (T::TAU() * freq_hz * t + phase_rad).sin(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct GestureSegment<T> {
    pub duration_s: T,
    pub torque: TorqueShape<T>,
}

/// Scripted user input: a sequence of torque segments plus optional seeded jitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct GestureProfile<T> {
    pub segments: Vec<GestureSegment<T>>,
    #[serde(default)]
    pub seed: u64,
    /// Half-width of uniform torque noise added every tick.
    #[serde(default)]
    pub jitter: T,
}

impl<T: Real> Default for GestureProfile<T> {
    fn default() -> Self {
        Self {
            segments: Vec::new(),
            seed: 0,
            jitter: T::zero(),
        }
    }
}

impl<T: Real> GestureProfile<T> {
    pub fn validate(&self) -> Result<(), SimError> {
        for (i, seg) in self.segments.iter().enumerate() {
            if !(seg.duration_s > T::zero() && seg.duration_s.is_finite()) {
                return Err(SimError::Gesture(format!(
                    "segment {i} duration must be positive and finite"
                )));
            }
        }
        if !(self.jitter >= T::zero() && self.jitter.is_finite()) {
            return Err(SimError::Gesture("jitter must be >= 0".into()));
        }
        Ok(())
    }

    pub fn duration_s(&self) -> T {
        self.segments
            .iter()
            .fold(T::zero(), |acc, s| acc + s.duration_s)
    }

    /// Per-tick user torque, sampled at the midpoint of every tick.
    pub fn torque_samples(&self, tick_rate_hz: T) -> Vec<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let half = T::lit(0.5);
        let mut out = Vec::new();
        let mut seg_start = T::zero();
        let mut tick = 0usize;
        for seg in &self.segments {
            let seg_end = seg_start + seg.duration_s;
            let end_tick = (seg_end * tick_rate_hz).round().to_usize().unwrap_or(0);
            while tick < end_tick {
                let t = (T::from_usize_lossy(tick) + half) / tick_rate_hz - seg_start;
                let mut u = seg.torque.eval(t, seg.duration_s);
                if self.jitter > T::zero() {
                    let r: f64 = rng.random_range(-1.0..=1.0);
                    u = u + self.jitter * T::lit(r);
                }
                out.push(u);
                tick += 1;
            }
            seg_start = seg_end;
        }
        out
    }
}

/// User torque that makes a free rotor follow `depth/2·(1 − cos(2π·rate·t))`.
pub fn make_vibrato_gesture<T: Real>(
    depth_deg: T,
    rate_hz: T,
    duration_s: T,
) -> Result<GestureProfile<T>, SimError> {
    make_vibrato_gesture_for(&RotorParams::default(), depth_deg, rate_hz, duration_s)
}

pub fn make_vibrato_gesture_for<T: Real>(
    params: &RotorParams<T>,
    depth_deg: T,
    rate_hz: T,
    duration_s: T,
) -> Result<GestureProfile<T>, SimError> {
    params.validate()?;
    if !(depth_deg > T::zero() && depth_deg <= T::lit(90.0)) {
        return Err(SimError::Gesture(format!(
            "depth_deg {depth_deg} outside (0, 90]"
        )));
    }
    if !(rate_hz > T::zero() && rate_hz <= T::lit(20.0)) {
        return Err(SimError::Gesture(format!("rate_hz {rate_hz} outside (0, 20]")));
    }
    if !(duration_s > T::zero() && duration_s.is_finite()) {
        return Err(SimError::Gesture("duration must be positive".into()));
    }
    // Inverse dynamics: τ = θ''/a + c·θ' with a = accel_per_torque, which is a single
    // sinusoid R·sin(ωt + φ).
    let omega = T::TAU() * rate_hz;
    let half_depth = depth_deg / T::lit(2.0);
    let cos_coeff = half_depth * omega * omega / params.accel_per_torque();
    let sin_coeff = params.damping * half_depth * omega;
    let amplitude = cos_coeff.hypot(sin_coeff);
    let phase_rad = cos_coeff.atan2(sin_coeff);
    Ok(GestureProfile {
        segments: vec![GestureSegment {
            duration_s,
            torque: TorqueShape::Sine {
                offset: T::zero(),
                amplitude,
                freq_hz: rate_hz,
                phase_rad,
            },
        }],
        seed: 0,
        jitter: T::zero(),
    })
}

/// A simulated device session: rotor, haptic engine, and telemetry counter.
///
/// Single owner; exactly one driver calls [`Simulator::tick`].
#[derive(Debug, Clone)]
pub struct Simulator<T> {
    params: RotorParams<T>,
    engine: EngineSession<T>,
    rotor: RotorState<T>,
    pending_torque: TorqueCommand<T>,
    ticks: u64,
    /// A reset waiting for the next sample: the rotor keeps moving during the tick, so
    /// the zero point is taken from the post-step angle.
    rezero_on_tick: bool,
}

impl<T: Real> Simulator<T> {
    pub fn new(params: RotorParams<T>, config: ModeConfig<T>) -> Result<Self, SimError> {
        params.validate()?;
        config.validate()?;
        Ok(Self {
            params,
            engine: EngineSession::new(config, T::zero()),
            rotor: RotorState::default(),
            pending_torque: TorqueCommand::zero(),
            ticks: 0,
            rezero_on_tick: false,
        })
    }

    pub fn params(&self) -> &RotorParams<T> {
        &self.params
    }

    pub fn engine(&self) -> &EngineSession<T> {
        &self.engine
    }

    pub fn rotor(&self) -> RotorState<T> {
        self.rotor
    }

    pub fn mode(&self) -> HapticMode {
        self.engine.mode()
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    /// Torque the engine will apply on the next tick.
    pub fn pending_torque(&self) -> T {
        self.pending_torque.value()
    }

    /// Moves the rotor to an absolute angle and velocity without touching the zero point.
    pub fn place(&mut self, absolute_angle_deg: T, velocity_dps: T) {
        self.rotor.angle_deg = absolute_angle_deg;
        self.rotor.velocity_dps = velocity_dps;
        let (_, torque) = self
            .engine
            .observe(absolute_angle_deg, velocity_dps, self.rotor.time_s);
        self.pending_torque = torque;
    }

    /// Switches mode; the current rotor angle becomes the zero point.
    pub fn set_mode(&mut self, mode: HapticMode) {
        let config = self.engine.active_config.with_mode(mode);
        self.apply_config(config);
    }

    pub fn apply_config(&mut self, config: ModeConfig<T>) {
        self.engine = self.engine.set_mode(config, self.rotor.angle_deg);
        self.pending_torque = TorqueCommand::zero();
        self.rezero_on_tick = true;
    }

    pub fn rezero(&mut self) {
        self.engine = self.engine.rezero(self.rotor.angle_deg);
        self.pending_torque = TorqueCommand::zero();
        self.rezero_on_tick = true;
    }

    pub fn set_param(&mut self, key: ParamKey, value: T) -> Result<(), SimError> {
        self.engine.active_config.set(key, value)?;
        Ok(())
    }

    /// Advances one tick and returns the telemetry sample of the post-step state.
    pub fn tick(&mut self, user_torque: T) -> KnobSample<T> {
        self.rotor = integrate(
            self.rotor,
            user_torque,
            self.pending_torque.value(),
            &self.params,
        );
        self.ticks += 1;
        if std::mem::take(&mut self.rezero_on_tick) {
            self.engine = self.engine.rezero(self.rotor.angle_deg);
        }
        let (state, torque) =
            self.engine
                .observe(self.rotor.angle_deg, self.rotor.velocity_dps, self.rotor.time_s);
        self.pending_torque = torque;
        KnobSample {
            seq: self.ticks,
            t_ms: self.t_ms(),
            angle_deg: state.angle_deg,
            velocity_dps: state.velocity_dps,
            torque: torque.value(),
            mode: self.engine.mode(),
        }
    }

    fn t_ms(&self) -> u64 {
        let ms = T::from_u64(self.ticks).unwrap_or_else(T::zero) * T::lit(1000.0)
            / self.params.tick_rate_hz;
        ms.round().to_u64().unwrap_or(u64::MAX)
    }
}

/// Plays a scripted gesture from rest at angle zero and returns every emitted sample.
pub fn run_profile<T: Real>(
    profile: &GestureProfile<T>,
    config: &ModeConfig<T>,
    params: &RotorParams<T>,
) -> Result<Vec<KnobSample<T>>, SimError> {
    profile.validate()?;
    let mut sim = Simulator::new(*params, *config)?;
    Ok(profile
        .torque_samples(params.tick_rate_hz)
        .into_iter()
        .map(|u| sim.tick(u))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smooth() -> ModeConfig<f64> {
        ModeConfig::for_mode(HapticMode::Smooth)
    }

    fn constant(duration_s: f64, value: f64) -> GestureProfile<f64> {
        GestureProfile {
            segments: vec![GestureSegment {
                duration_s,
                torque: TorqueShape::Constant { value },
            }],
            ..Default::default()
        }
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let p = RotorParams::<f64>::default();
        let s = RotorState {
            angle_deg: 12.0,
            velocity_dps: 0.0,
            time_s: 0.0,
        };
        let n = integrate(s, 0.0, 0.0, &p);
        assert_eq!((n.angle_deg, n.velocity_dps), (12.0, 0.0));
    }

    #[test]
    fn damping_slows_free_rotor() {
        let mut sim = Simulator::new(RotorParams::default(), smooth()).unwrap();
        sim.place(0.0, 100.0);
        let mut last = 100.0;
        for _ in 0..1000 {
            let v = sim.tick(0.0).velocity_dps;
            assert!(v < last && v > 0.0);
            last = v;
        }
    }

    #[test]
    fn empty_profile_gives_no_samples() {
        let out = run_profile(&GestureProfile::default(), &smooth(), &RotorParams::default());
        assert!(out.unwrap().is_empty());
    }

    #[test]
    fn one_second_is_one_thousand_ticks() {
        let out = run_profile(&constant(1.0, 0.0), &smooth(), &RotorParams::default()).unwrap();
        assert_eq!(out.len(), 1000);
        assert!(out.iter().enumerate().all(|(i, s)| s.t_ms == i as u64 + 1));
        assert!(out.iter().enumerate().all(|(i, s)| s.seq == i as u64 + 1));
    }

    #[test]
    fn jittered_replay_is_deterministic() {
        let mut p = constant(0.5, 0.3);
        p.jitter = 0.1;
        p.seed = 99;
        let cfg = ModeConfig::for_mode(HapticMode::Detent);
        let a = run_profile(&p, &cfg, &RotorParams::default()).unwrap();
        let b = run_profile(&p, &cfg, &RotorParams::default()).unwrap();
        assert_eq!(a, b);
        p.seed = 100;
        assert_ne!(a, run_profile(&p, &cfg, &RotorParams::default()).unwrap());
    }

    #[test]
    fn segment_tick_counts_do_not_drift() {
        let seg = GestureSegment {
            duration_s: 0.0015,
            torque: TorqueShape::Constant { value: 0.0 },
        };
        let p = GestureProfile {
            segments: vec![seg; 4],
            ..Default::default()
        };
        assert_eq!(p.torque_samples(1000.0).len(), 6);
    }

    #[test]
    fn ramp_and_sine_shapes() {
        let r = TorqueShape::Ramp { from: 0.0, to: 1.0 };
        assert_eq!(r.eval(0.25, 1.0), 0.25);
        let s = TorqueShape::<f64>::Sine {
            offset: 1.0,
            amplitude: 2.0,
            freq_hz: 1.0,
            phase_rad: 0.0,
        };
        assert!((s.eval(0.25, 1.0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn vibrato_gesture_preconditions() {
        assert!(make_vibrato_gesture(45.0, 5.0, 0.0).is_err());
        assert!(make_vibrato_gesture(0.0, 5.0, 3.0).is_err());
        assert!(make_vibrato_gesture(91.0, 5.0, 3.0).is_err());
        assert!(make_vibrato_gesture(45.0, 21.0, 3.0).is_err());
        assert!(make_vibrato_gesture(45.0, 5.0, 3.0).is_ok());
    }

    #[test]
    fn vibrato_gesture_tracks_raised_cosine() {
        let g = make_vibrato_gesture(45.0, 5.0, 3.0).unwrap();
        let out = run_profile(&g, &smooth(), &RotorParams::default()).unwrap();
        let worst = out
            .iter()
            .map(|s| {
                let t = s.t_ms as f64 / 1000.0;
                let target = 22.5 * (1.0 - (std::f64::consts::TAU * 5.0 * t).cos());
                (s.angle_deg - target).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 1.0, "tracking error {worst}");
    }

    #[test]
    fn mode_change_reports_zero_from_rest() {
        let mut sim = Simulator::new(RotorParams::default(), smooth()).unwrap();
        sim.place(37.0, 0.0);
        sim.set_mode(HapticMode::Spring);
        let s = sim.tick(0.0);
        assert_eq!((s.angle_deg, s.torque, s.mode), (0.0, 0.0, HapticMode::Spring));
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = RotorParams::<f64>::default();
        p.tick_rate_hz = 50.0;
        assert!(Simulator::new(p, smooth()).is_err());
        p = RotorParams::default();
        p.inertia = 0.0;
        assert!(p.validate().is_err());
    }
}
