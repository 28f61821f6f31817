//! Host side of the knob link: one owner thread drives the device at tick rate, HTTP
//! handlers talk to it over a command queue, and telemetry fans out to WebSocket clients
//! through bounded drop-oldest queues.

pub mod api;
pub mod config;
pub mod device;
pub mod fanout;
pub mod owner;

pub use api::{router, AppState};
pub use config::{BridgeConfig, DeviceSpec};
pub use device::{open_device, Device, DeviceError, SerialDevice, SimDevice};
pub use fanout::{Fanout, Subscription, TelemetryJson};
pub use owner::{
    BridgeError, BridgeHandle, LoopStats, LoopStatsSnapshot, Owner, RealtimeLoop, RecordingInfo, SessionState,
};

/// Builds a connected owner/handle pair. The owner must be driven by [`Owner::tick`]
/// or [`RealtimeLoop::spawn`].
pub fn build(config: &BridgeConfig) -> Result<(Owner, BridgeHandle), BridgeError> {
    owner::build(config)
}
