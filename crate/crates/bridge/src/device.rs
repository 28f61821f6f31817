use std::collections::VecDeque;
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use bendaid::haptic::{HapticMode, ModeConfig};
use bendaid::protocol::{encode_command, write_telemetry, CommandFrame, Frame, StreamDecoder};
use bendaid::sim::{GestureProfile, RotorParams, Simulator};
use thiserror::Error;

use crate::config::DeviceSpec;

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("cannot open device {path}: {source}")]
    Open {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("device i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("device link closed")]
    Closed,
    #[error("{0} is not supported by this device")]
    Unsupported(&'static str),
    #[error("invalid gesture: {0}")]
    Gesture(String),
}

/// A byte-level link to a knob. The owner calls [`Device::poll`] once per tick.
pub trait Device: Send {
    fn descriptor(&self) -> String;

    /// Host to device bytes.
    fn write(&mut self, bytes: &[u8]) -> Result<(), DeviceError>;

    /// Appends whatever the device sent since the last poll.
    fn poll(&mut self, out: &mut Vec<u8>) -> Result<(), DeviceError>;

    /// Scripted user input; only the simulator accepts it.
    fn load_gesture(&mut self, _gesture: GestureProfile<f64>) -> Result<(), DeviceError> {
        Err(DeviceError::Unsupported("gesture playback"))
    }
}

pub fn open_device(spec: &DeviceSpec) -> Result<Box<dyn Device>, DeviceError> {
    match spec {
        DeviceSpec::Sim => Ok(Box::new(SimDevice::new())),
        DeviceSpec::Serial(path) => Ok(Box::new(SerialDevice::open(path)?)),
    }
}

/// Simulated knob firmware. Each poll runs one physics tick and emits one telemetry line.
/// Commands take effect at the start of the next tick, like firmware reading its serial
/// buffer between control-loop iterations.
pub struct SimDevice {
    sim: Simulator<f64>,
    rx: StreamDecoder,
    pending: Vec<CommandFrame>,
    gesture: VecDeque<f64>,
    hold_torque: f64,
    rejected: u64,
    line: String,
}

impl Default for SimDevice {
    fn default() -> Self {
        Self::new()
    }
}

impl SimDevice {
    pub fn new() -> Self {
        Self::with_params(RotorParams::default())
    }

    pub fn with_params(params: RotorParams<f64>) -> Self {
        let sim = Simulator::new(params, ModeConfig::for_mode(HapticMode::Smooth))
            .expect("default rotor and config are valid");
        Self {
            sim,
            rx: StreamDecoder::new(),
            pending: Vec::new(),
            gesture: VecDeque::new(),
            hold_torque: 0.0,
            rejected: 0,
            line: String::with_capacity(64),
        }
    }

    pub fn simulator(&self) -> &Simulator<f64> {
        &self.sim
    }

    /// PARAM commands the firmware refused.
    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    /// Constant user torque applied once any gesture has finished.
    pub fn set_hold_torque(&mut self, torque: f64) {
        self.hold_torque = torque;
    }

    fn apply(&mut self, cmd: CommandFrame) {
        match cmd {
            CommandFrame::Mode(m) => self.sim.set_mode(m),
            CommandFrame::Zero => self.sim.rezero(),
            CommandFrame::Param { key, value } => {
                if self.sim.set_param(key, value).is_err() {
                    self.rejected += 1;
                }
            }
            CommandFrame::Ping { nonce } => {
                // Echoed back as the liveness reply.
                self.line.push_str(
                    std::str::from_utf8(&encode_command(&CommandFrame::Ping { nonce }))
                        .expect("ascii"),
                );
            }
        }
    }
}

impl Device for SimDevice {
    fn descriptor(&self) -> String {
        DeviceSpec::Sim.to_string()
    }

    fn write(&mut self, bytes: &[u8]) -> Result<(), DeviceError> {
        for f in self.rx.decode(bytes) {
            if let Frame::Command(c) = f {
                self.pending.push(c);
            }
        }
        Ok(())
    }

    fn poll(&mut self, out: &mut Vec<u8>) -> Result<(), DeviceError> {
        self.line.clear();
        for cmd in std::mem::take(&mut self.pending) {
            self.apply(cmd);
        }
        let user = self.gesture.pop_front().unwrap_or(self.hold_torque);
        let sample = self.sim.tick(user);
        write_telemetry(&mut self.line, &sample);
        out.extend_from_slice(self.line.as_bytes());
        Ok(())
    }

    fn load_gesture(&mut self, gesture: GestureProfile<f64>) -> Result<(), DeviceError> {
        gesture
            .validate()
            .map_err(|e| DeviceError::Gesture(e.to_string()))?;
        self.gesture = gesture
            .torque_samples(self.sim.params().tick_rate_hz)
            .into();
        Ok(())
    }
}

/// A serial port opened as a plain file. Line settings (baud, raw mode) are expected to be
/// configured outside the bridge, e.g. with `stty`. A reader thread forwards bytes so that
/// polling never blocks the tick loop.
pub struct SerialDevice {
    path: PathBuf,
    port: File,
    rx: mpsc::Receiver<std::io::Result<Vec<u8>>>,
}

impl SerialDevice {
    pub fn open(path: &Path) -> Result<Self, DeviceError> {
        let open_err = |source| DeviceError::Open {
            path: path.to_owned(),
            source,
        };
        let port = OpenOptions::new().read(true).write(true).open(path).map_err(open_err)?;
        let mut reader = port.try_clone().map_err(open_err)?;
        let (tx, rx) = mpsc::channel();
        std::thread::Builder::new()
            .name("serial-reader".into())
            .spawn(move || {
                let mut buf = [0u8; 512];
                loop {
                    match reader.read(&mut buf) {
                        Ok(0) => break,
                        Ok(n) => {
                            if tx.send(Ok(buf[..n].to_vec())).is_err() {
                                break;
                            }
                        }
                        Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                        Err(e) => {
                            let _ = tx.send(Err(e));
                            break;
                        }
                    }
                }
            })
            .map_err(open_err)?;
        Ok(Self {
            path: path.to_owned(),
            port,
            rx,
        })
    }
}

impl Device for SerialDevice {
    fn descriptor(&self) -> String {
        DeviceSpec::Serial(self.path.clone()).to_string()
    }

    fn write(&mut self, bytes: &[u8]) -> Result<(), DeviceError> {
        self.port.write_all(bytes)?;
        Ok(())
    }

    fn poll(&mut self, out: &mut Vec<u8>) -> Result<(), DeviceError> {
        loop {
            match self.rx.try_recv() {
                Ok(Ok(chunk)) => out.extend_from_slice(&chunk),
                Ok(Err(e)) => return Err(e.into()),
                Err(mpsc::TryRecvError::Empty) => return Ok(()),
                Err(mpsc::TryRecvError::Disconnected) => return Err(DeviceError::Closed),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use bendaid::protocol::parse_telemetry;

    fn poll_line(d: &mut SimDevice) -> String {
        let mut out = Vec::new();
        d.poll(&mut out).unwrap();
        String::from_utf8(out).unwrap()
    }

    #[test]
    fn sim_emits_one_line_per_tick() {
        let mut d = SimDevice::new();
        for i in 1..=5u64 {
            let t = parse_telemetry(&poll_line(&mut d)).unwrap();
            assert_eq!((t.seq, t.t_ms, t.mode), (i, i, HapticMode::Smooth));
        }
    }

    #[test]
    fn mode_command_applies_next_tick_with_zeroed_report() {
        let mut d = SimDevice::new();
        d.set_hold_torque(0.5);
        for _ in 0..200 {
            poll_line(&mut d);
        }
        d.write(b"MODE,SPRING\n").unwrap();
        let t = parse_telemetry(&poll_line(&mut d)).unwrap();
        assert_eq!(t.mode, HapticMode::Spring);
        assert_eq!((t.angle_deg, t.torque), (0.0, 0.0));
    }

    #[test]
    fn ping_is_echoed_and_bad_params_counted() {
        let mut d = SimDevice::new();
        d.write(b"PING,42\nPARAM,spring_constant,-1\n").unwrap();
        let out = poll_line(&mut d);
        assert!(out.starts_with("PING,42\nTT,1,1,"), "{out}");
        assert_eq!(d.rejected(), 1);
    }

    #[test]
    fn serial_open_failure_names_the_path() {
        let e = SerialDevice::open(Path::new("/nonexistent/ttyBAD")).err().unwrap();
        assert!(e.to_string().contains("/nonexistent/ttyBAD"));
    }
}
