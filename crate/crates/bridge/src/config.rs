use std::fmt;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Where the knob lives: the built-in simulator or a serial port.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum DeviceSpec {
    Sim,
    Serial(PathBuf),
}

impl fmt::Display for DeviceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeviceSpec::Sim => f.write_str("sim"),
            DeviceSpec::Serial(p) => write!(f, "serial:{}", p.display()),
        }
    }
}

impl FromStr for DeviceSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "sim" => Ok(DeviceSpec::Sim),
            Some(("serial", path)) if !path.is_empty() => Ok(DeviceSpec::Serial(path.into())),
            _ => Err(format!("device `{s}`: expected `sim` or `serial:<path>`")),
        }
    }
}

impl From<DeviceSpec> for String {
    fn from(d: DeviceSpec) -> Self {
        d.to_string()
    }
}

impl TryFrom<String> for DeviceSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone)]
pub struct BridgeConfig {
    pub addr: SocketAddr,
    pub device: DeviceSpec,
    /// Publish every Nth telemetry sample to UI clients.
    pub telemetry_downsample: u32,
    /// Finished recordings are also written here as `<id>.csv`.
    pub record_dir: Option<PathBuf>,
    /// Per-client queue capacity in frames.
    pub client_queue: usize,
    pub tick_rate_hz: u32,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self {
            addr: SocketAddr::new(IpAddr::V4(Ipv4Addr::LOCALHOST), 8080),
            device: DeviceSpec::Sim,
            telemetry_downsample: 10,
            record_dir: None,
            client_queue: 256,
            tick_rate_hz: 1000,
        }
    }
}

impl BridgeConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.telemetry_downsample == 0 {
            return Err("telemetry_downsample must be at least 1".into());
        }
        if self.client_queue == 0 {
            return Err("client_queue must be at least 1".into());
        }
        if self.tick_rate_hz == 0 {
            return Err("tick_rate_hz must be positive".into());
        }
        Ok(())
    }
}
