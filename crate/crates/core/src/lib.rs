//! Force-feedback pitch-bend instrument: haptic torque rendering for a rotary knob, a
//! simulated knob, the device ↔ host line protocol, a piano-roll sequencer with MIDI
//! file support, the vibrato mimicry session and the study statistics.
//!
//! The numeric modules are generic over [`Real`] (`f32` or `f64`); the aliases below fix
//! the scalar to `f64`, with `F32` variants for the embedded-style path.
//!
//! ```
//! use bendaid::{HapticMode, ModeConfig, RotorParams, Simulator};
//!
//! let mut sim = Simulator::new(RotorParams::default(), ModeConfig::for_mode(HapticMode::Spring))?;
//! sim.place(30.0, 0.0);
//! let sample = sim.tick(0.0);
//! assert!(sample.torque < 0.0);
//! # Ok::<(), bendaid::sim::SimError>(())
//! ```

pub mod haptic;
pub mod protocol;
pub mod scalar;
pub mod sequencer;
pub mod session;
pub mod sim;
pub mod stats;

pub use haptic::{compute_torque, HapticMode, ParamKey};
pub use scalar::Real;

pub type KnobState = haptic::KnobState<f64>;
pub type TorqueCommand = haptic::TorqueCommand<f64>;
pub type ModeConfig = haptic::ModeConfig<f64>;
pub type EngineSession = haptic::EngineSession<f64>;

pub type KnobStateF32 = haptic::KnobState<f32>;
pub type ModeConfigF32 = haptic::ModeConfig<f32>;
pub type EngineSessionF32 = haptic::EngineSession<f32>;

pub type RotorParams = sim::RotorParams<f64>;
pub type RotorState = sim::RotorState<f64>;
pub type KnobSample = sim::KnobSample<f64>;
pub type GestureProfile = sim::GestureProfile<f64>;
pub type Simulator = sim::Simulator<f64>;
pub type SimulatorF32 = sim::Simulator<f32>;

pub type PitchMapConfig = session::PitchMapConfig<f64>;
pub type PitchContour = session::PitchContour<f64>;
pub type MimicryScore = session::MimicryScore<f64>;

pub type AnovaResult = stats::AnovaResult<f64>;
pub type ChiSquareResult = stats::ChiSquareResult<f64>;
pub type ConfidenceInterval = stats::ConfidenceInterval<f64>;
