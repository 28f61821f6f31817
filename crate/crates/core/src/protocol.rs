//! Line-oriented ASCII codec for the device ↔ host link.
//!
//! Device to host, one line per telemetry tick:
//!
//! ```text
//! TT,<seq>,<t_ms>,<angle_deg>,<velocity_dps>,<torque>,<mode>\n
//! ```
//!
//! Host to device: `MODE,<name>`, `ZERO`, `PARAM,<key>,<value>` or `PING,<nonce>`,
//! each terminated by `\n`. Floats in telemetry carry exactly four decimals. Lines are at
//! most [`MAX_LINE`] bytes including the terminator. See `docs/protocol.md` for the ABNF.

use std::fmt::Write as _;

use thiserror::Error;

use crate::haptic::{HapticMode, ParamKey, UnknownMode, UnknownParam};
use crate::sim::KnobSample;

pub const MAX_LINE: usize = 128;

pub type TelemetryFrame = KnobSample<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CommandFrame {
    Mode(HapticMode),
    Zero,
    Param { key: ParamKey, value: f64 },
    Ping { nonce: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    Telemetry(TelemetryFrame),
    Command(CommandFrame),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    UnknownMode(#[from] UnknownMode),
    #[error(transparent)]
    UnknownParam(#[from] UnknownParam),
    #[error("malformed {what} in `{line}`")]
    Malformed { what: &'static str, line: String },
    #[error("line exceeds {MAX_LINE} bytes")]
    TooLong,
}

fn malformed(what: &'static str, line: &str) -> ProtocolError {
    ProtocolError::Malformed {
        what,
        line: line.to_owned(),
    }
}

/// Appends the telemetry line for `sample` to `out`.
pub fn write_telemetry(out: &mut String, sample: &TelemetryFrame) {
    let _ = writeln!(
        out,
        "TT,{},{},{:.4},{:.4},{:.4},{}",
        sample.seq, sample.t_ms, sample.angle_deg, sample.velocity_dps, sample.torque, sample.mode
    );
}

pub fn encode_telemetry(sample: &TelemetryFrame) -> Vec<u8> {
    let mut s = String::with_capacity(64);
    write_telemetry(&mut s, sample);
    debug_assert!(s.len() <= MAX_LINE);
    s.into_bytes()
}

pub fn encode_command(cmd: &CommandFrame) -> Vec<u8> {
    match cmd {
        CommandFrame::Mode(m) => format!("MODE,{m}\n"),
        CommandFrame::Zero => "ZERO\n".to_owned(),
        CommandFrame::Param { key, value } => format!("PARAM,{key},{value}\n"),
        CommandFrame::Ping { nonce } => format!("PING,{nonce}\n"),
    }
    .into_bytes()
}

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    match frame {
        Frame::Telemetry(t) => encode_telemetry(t),
        Frame::Command(c) => encode_command(c),
    }
}

/// Rounds to the precision telemetry carries on the wire.
pub fn quantize(x: f64) -> f64 {
    format!("{x:.4}").parse().expect("formatted float parses")
}

fn strip_terminator(line: &str) -> &str {
    let line = line.strip_suffix('\n').unwrap_or(line);
    line.strip_suffix('\r').unwrap_or(line)
}

fn parse_uint(field: &str) -> Option<u64> {
    let canonical = !field.is_empty()
        && field.bytes().all(|b| b.is_ascii_digit())
        && (field.len() == 1 || !field.starts_with('0'));
    if canonical {
        field.parse().ok()
    } else {
        None
    }
}

/// `["-"] 1*DIGIT "." 4DIGIT` without redundant leading zeros.
fn parse_fixed4(field: &str) -> Option<f64> {
    let digits = field.strip_prefix('-').unwrap_or(field);
    let (int, frac) = digits.split_once('.')?;
    let ok = parse_uint(int).is_some()
        && frac.len() == 4
        && frac.bytes().all(|b| b.is_ascii_digit());
    if ok {
        field.parse().ok()
    } else {
        None
    }
}

/// `["-"] 1*DIGIT ["." 1*DIGIT]`, finite.
fn parse_decimal(field: &str) -> Option<f64> {
    let digits = field.strip_prefix('-').unwrap_or(field);
    let (int, frac) = digits.split_once('.').unwrap_or((digits, "0"));
    let ok = !int.is_empty()
        && !frac.is_empty()
        && int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit());
    if ok {
        field.parse().ok().filter(|v: &f64| v.is_finite())
    } else {
        None
    }
}

pub fn parse_telemetry(line: &str) -> Result<TelemetryFrame, ProtocolError> {
    if line.len() > MAX_LINE {
        return Err(ProtocolError::TooLong);
    }
    let body = strip_terminator(line);
    let mut fields = body.split(',');
    if fields.next() != Some("TT") {
        return Err(malformed("telemetry tag", line));
    }
    let mut next = |what| fields.next().ok_or_else(|| malformed(what, line));
    let seq = parse_uint(next("seq")?).ok_or_else(|| malformed("seq", line))?;
    let t_ms = parse_uint(next("t_ms")?).ok_or_else(|| malformed("t_ms", line))?;
    let angle_deg = parse_fixed4(next("angle")?).ok_or_else(|| malformed("angle", line))?;
    let velocity_dps = parse_fixed4(next("velocity")?).ok_or_else(|| malformed("velocity", line))?;
    let torque = parse_fixed4(next("torque")?)
        .filter(|t| t.abs() <= 1.0)
        .ok_or_else(|| malformed("torque", line))?;
    let mode: HapticMode = next("mode")?.parse()?;
    if fields.next().is_some() {
        return Err(malformed("trailing field", line));
    }
    Ok(KnobSample {
        seq,
        t_ms,
        angle_deg,
        velocity_dps,
        torque,
        mode,
    })
}

pub fn parse_command(line: &str) -> Result<CommandFrame, ProtocolError> {
    if line.len() > MAX_LINE {
        return Err(ProtocolError::TooLong);
    }
    let body = strip_terminator(line);
    let fields: Vec<&str> = body.split(',').collect();
    match fields.as_slice() {
        ["MODE", name] => Ok(CommandFrame::Mode(name.parse()?)),
        ["ZERO"] => Ok(CommandFrame::Zero),
        ["PARAM", key, value] => {
            let key: ParamKey = key.parse()?;
            let value = parse_decimal(value).ok_or_else(|| malformed("param value", line))?;
            Ok(CommandFrame::Param { key, value })
        }
        ["PING", nonce] => Ok(CommandFrame::Ping {
            nonce: parse_uint(nonce).ok_or_else(|| malformed("nonce", line))?,
        }),
        _ => Err(malformed("command", line)),
    }
}

pub fn parse_frame(line: &str) -> Result<Frame, ProtocolError> {
    if line.starts_with("TT,") {
        parse_telemetry(line).map(Frame::Telemetry)
    } else {
        parse_command(line).map(Frame::Command)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecoderStats {
    pub frames_ok: u64,
    pub frames_dropped: u64,
}

/// Incremental line decoder. Feed arbitrary chunks; complete valid frames come out once.
///
/// Blank lines are ignored. Lines that are malformed, not UTF-8, or longer than
/// [`MAX_LINE`] are discarded and counted in [`DecoderStats::frames_dropped`]. The
/// pending-line buffer never holds more than `MAX_LINE` bytes.
#[derive(Debug, Default)]
pub struct StreamDecoder {
    line: Vec<u8>,
    overflow: bool,
    stats: DecoderStats,
}

impl StreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stats(&self) -> DecoderStats {
        self.stats
    }

    pub fn buffered(&self) -> usize {
        self.line.len()
    }

    pub fn decode(&mut self, chunk: &[u8]) -> Vec<Frame> {
        let mut out = Vec::new();
        self.decode_into(chunk, &mut out);
        out
    }

    pub fn decode_into(&mut self, mut chunk: &[u8], out: &mut Vec<Frame>) {
        while !chunk.is_empty() {
            match chunk.iter().position(|&b| b == b'\n') {
                Some(i) => {
                    self.append(&chunk[..i]);
                    self.finish_line(out);
                    chunk = &chunk[i + 1..];
                }
                None => {
                    self.append(chunk);
                    chunk = &[];
                }
            }
        }
    }

    fn append(&mut self, bytes: &[u8]) {
        if self.overflow {
            return;
        }
        // Room for the terminator is part of the limit.
        if self.line.len() + bytes.len() >= MAX_LINE {
            self.overflow = true;
            self.line.clear();
        } else {
            self.line.extend_from_slice(bytes);
        }
    }

    fn finish_line(&mut self, out: &mut Vec<Frame>) {
        if std::mem::take(&mut self.overflow) {
            self.stats.frames_dropped += 1;
            return;
        }
        let parsed = match std::str::from_utf8(&self.line) {
            Ok(s) if strip_terminator(s).is_empty() => None,
            Ok(s) => Some(parse_frame(s).ok()),
            Err(_) => Some(None),
        };
        self.line.clear();
        match parsed {
            None => {}
            Some(Some(frame)) => {
                self.stats.frames_ok += 1;
                out.push(frame);
            }
            Some(None) => self.stats.frames_dropped += 1,
        }
    }
}
