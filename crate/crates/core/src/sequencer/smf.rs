//! Standard MIDI File import and export.
//!
//! Reads format 0 and 1 files with metrical timing, writes format 0. Supported events:
//! note on/off (note-on with velocity 0 is a note-off), pitch bend, set-tempo and
//! time-signature meta events. Running status is honoured on input; other channel,
//! sysex and meta events are skipped.

use std::collections::HashMap;

use thiserror::Error;

use super::{Clip, NoteId, PitchBend, SequencerError, Tempo, TimeSignature};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmfError {
    #[error("bad header at byte {offset}: {reason}")]
    BadHeader { offset: usize, reason: &'static str },
    #[error("truncated data at byte {offset}")]
    Truncated { offset: usize },
    #[error("unsupported {what} at byte {offset}")]
    Unsupported { offset: usize, what: &'static str },
    #[error("data byte without running status at byte {offset}")]
    NoRunningStatus { offset: usize },
    #[error("note-on for pitch {pitch} at byte {offset} is never released")]
    UnmatchedNoteOn { offset: usize, pitch: u8 },
    #[error("invalid note at byte {offset}: {source}")]
    Note {
        offset: usize,
        #[source]
        source: SequencerError,
    },
    #[error("invalid clip: {0}")]
    Clip(#[from] SequencerError),
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    end: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], pos: usize, end: usize) -> Self {
        Self { bytes, pos, end }
    }

    fn u8(&mut self) -> Result<u8, SmfError> {
        if self.pos >= self.end {
            return Err(SmfError::Truncated { offset: self.pos });
        }
        let b = self.bytes[self.pos];
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], SmfError> {
        if self.end - self.pos < n {
            return Err(SmfError::Truncated { offset: self.end });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, SmfError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, SmfError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Variable-length quantity, at most four bytes.
    fn vlq(&mut self) -> Result<u32, SmfError> {
        let start = self.pos;
        let mut v = 0u32;
        for _ in 0..4 {
            let b = self.u8()?;
            v = (v << 7) | u32::from(b & 0x7F);
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(SmfError::Unsupported {
            offset: start,
            what: "variable-length quantity longer than 4 bytes",
        })
    }

    fn done(&self) -> bool {
        self.pos >= self.end
    }
}

struct Pending {
    start: u64,
    velocity: u8,
    offset: usize,
}

#[derive(Default)]
struct Collected {
    notes: Vec<(u8, u64, u64, u8, usize)>,
    bends: Vec<(u64, i16)>,
    tempo: Option<(u64, Tempo)>,
    time_signature: Option<(u64, TimeSignature)>,
}

fn keep_earliest<T>(slot: &mut Option<(u64, T)>, tick: u64, value: T) {
    if slot.as_ref().is_none_or(|(t, _)| tick < *t) {
        *slot = Some((tick, value));
    }
}

fn parse_track(r: &mut Reader<'_>, out: &mut Collected) -> Result<(), SmfError> {
    let mut tick = 0u64;
    let mut running: Option<u8> = None;
    let mut active: HashMap<(u8, u8), Pending> = HashMap::new();
    while !r.done() {
        tick += u64::from(r.vlq()?);
        let offset = r.pos;
        let first = r.u8()?;
        let (status, first_data) = if first & 0x80 != 0 {
            (first, None)
        } else {
            (running.ok_or(SmfError::NoRunningStatus { offset })?, Some(first))
        };
        match status {
            0xFF => {
                running = None;
                let kind = r.u8()?;
                let len = r.vlq()? as usize;
                let data = r.take(len)?;
                match kind {
                    0x2F => break,
                    0x51 if len == 3 => {
                        let us = u32::from_be_bytes([0, data[0], data[1], data[2]]);
                        let tempo = Tempo::from_us_per_quarter(us).ok_or(SmfError::Unsupported {
                            offset,
                            what: "zero tempo",
                        })?;
                        keep_earliest(&mut out.tempo, tick, tempo);
                    }
                    0x58 if len == 4 => {
                        let den = 1u16 << data[1].min(15);
                        let ts = u8::try_from(den)
                            .ok()
                            .and_then(|d| TimeSignature::new(data[0], d))
                            .ok_or(SmfError::Unsupported {
                                offset,
                                what: "time signature",
                            })?;
                        keep_earliest(&mut out.time_signature, tick, ts);
                    }
                    _ => {}
                }
            }
            0xF0 | 0xF7 => {
                running = None;
                let len = r.vlq()? as usize;
                r.take(len)?;
            }
            0xF1..=0xFE => {
                return Err(SmfError::Unsupported {
                    offset,
                    what: "system message in track",
                })
            }
            _ => {
                running = Some(status);
                let kind = status & 0xF0;
                let channel = status & 0x0F;
                let data = |r: &mut Reader<'_>, idx: usize| -> Result<u8, SmfError> {
                    let b = match (idx, first_data) {
                        (0, Some(b)) => b,
                        _ => r.u8()?,
                    };
                    if b & 0x80 != 0 {
                        return Err(SmfError::Unsupported {
                            offset: r.pos - 1,
                            what: "status byte inside channel message",
                        });
                    }
                    Ok(b)
                };
                match kind {
                    0x80 | 0x90 => {
                        let pitch = data(r, 0)?;
                        let velocity = data(r, 1)?;
                        if kind == 0x90 && velocity > 0 {
                            if active.contains_key(&(channel, pitch)) {
                                return Err(SmfError::Unsupported {
                                    offset,
                                    what: "note-on for an already sounding pitch",
                                });
                            }
                            active.insert(
                                (channel, pitch),
                                Pending {
                                    start: tick,
                                    velocity,
                                    offset,
                                },
                            );
                        } else if let Some(p) = active.remove(&(channel, pitch)) {
                            out.notes.push((pitch, p.start, tick - p.start, p.velocity, p.offset));
                        }
                    }
                    0xE0 => {
                        let lsb = data(r, 0)?;
                        let msb = data(r, 1)?;
                        let raw = (i32::from(msb) << 7) | i32::from(lsb);
                        out.bends.push((tick, (raw - 8192) as i16));
                    }
                    0xC0 | 0xD0 => {
                        data(r, 0)?;
                    }
                    _ => {
                        data(r, 0)?;
                        data(r, 1)?;
                    }
                }
            }
        }
    }
    if let Some(p) = active.values().min_by_key(|p| p.offset) {
        let pitch = active
            .iter()
            .find(|(_, q)| q.offset == p.offset)
            .map(|((_, pitch), _)| *pitch)
            .unwrap_or_default();
        return Err(SmfError::UnmatchedNoteOn {
            offset: p.offset,
            pitch,
        });
    }
    Ok(())
}

/// Parses a Standard MIDI File into a clip. Notes from every track and channel are merged.
pub fn load_midi(bytes: &[u8]) -> Result<Clip, SmfError> {
    let mut r = Reader::new(bytes, 0, bytes.len());
    let bad = |offset, reason| SmfError::BadHeader { offset, reason };
    if bytes.len() < 14 {
        return Err(bad(0, "file shorter than a header chunk"));
    }
    if r.take(4)? != b"MThd" {
        return Err(bad(0, "missing MThd magic"));
    }
    let len = r.u32()? as usize;
    if len < 6 {
        return Err(bad(4, "header length below 6"));
    }
    let format = r.u16()?;
    if format > 1 {
        return Err(SmfError::Unsupported {
            offset: 8,
            what: "SMF format 2",
        });
    }
    let ntracks = r.u16()?;
    let division = r.u16()?;
    if division & 0x8000 != 0 || division == 0 {
        return Err(SmfError::Unsupported {
            offset: 12,
            what: "SMPTE or zero time division",
        });
    }
    r.pos = 8 + len;
    if r.pos > bytes.len() {
        return Err(SmfError::Truncated { offset: bytes.len() });
    }

    let mut collected = Collected::default();
    let mut tracks = 0;
    while tracks < ntracks && !r.done() {
        let id = r.take(4)?;
        let len = r.u32()? as usize;
        let body = r.pos;
        if bytes.len() - body < len {
            return Err(SmfError::Truncated { offset: bytes.len() });
        }
        if id == b"MTrk" {
            let mut tr = Reader::new(bytes, body, body + len);
            parse_track(&mut tr, &mut collected)?;
            tracks += 1;
        }
        r.pos = body + len;
    }
    if tracks < ntracks {
        return Err(SmfError::Truncated { offset: bytes.len() });
    }

    let mut clip = Clip::new(division);
    if let Some((_, t)) = collected.tempo {
        clip.tempo = t;
    }
    if let Some((_, ts)) = collected.time_signature {
        clip.time_signature = ts;
    }
    collected
        .notes
        .sort_by_key(|&(pitch, start, _, _, offset)| (start, pitch, offset));
    for (pitch, start, duration, velocity, offset) in collected.notes {
        let note = |e| SmfError::Note { offset, source: e };
        let start = i64::try_from(start).map_err(|_| note(SequencerError::TickOutOfRange(-1)))?;
        clip.add_note_with_velocity(i64::from(pitch), start, duration as i64, velocity)
            .map_err(note)?;
    }
    for (tick, value) in collected.bends {
        let tick = u32::try_from(tick).map_err(|_| SequencerError::TickOutOfRange(tick as i64))?;
        clip.pitch_bends.push(PitchBend { tick, value });
    }
    clip.pitch_bends.sort_by_key(|b| b.tick);
    Ok(clip)
}

fn push_vlq(out: &mut Vec<u8>, mut v: u32) {
    let mut buf = [0u8; 5];
    let mut i = buf.len() - 1;
    buf[i] = (v & 0x7F) as u8;
    v >>= 7;
    while v > 0 {
        i -= 1;
        buf[i] = ((v & 0x7F) as u8) | 0x80;
        v >>= 7;
    }
    out.extend_from_slice(&buf[i..]);
}

/// Serializes a clip as a single-track format 0 file on channel 1.
///
/// At equal ticks note-offs precede pitch bends, which precede note-ons.
pub fn save_midi(clip: &Clip) -> Result<Vec<u8>, SmfError> {
    clip.validate()?;
    if clip.end_ticks() > 0x0FFF_FFFF
        || clip.pitch_bends.iter().any(|b| b.tick > 0x0FFF_FFFF)
    {
        return Err(SequencerError::TickOutOfRange(clip.end_ticks() as i64).into());
    }
    let mut events: Vec<(u64, u8, NoteId, [u8; 3])> = Vec::with_capacity(clip.len() * 2);
    for n in clip.notes() {
        events.push((n.end_ticks(), 0, n.id, [0x80, n.pitch, 0x40]));
        events.push((u64::from(n.start_ticks), 2, n.id, [0x90, n.pitch, n.velocity]));
    }
    for (i, b) in clip.pitch_bends.iter().enumerate() {
        let raw = (i32::from(b.value) + 8192) as u16;
        events.push((
            u64::from(b.tick),
            1,
            i as NoteId,
            [0xE0, (raw & 0x7F) as u8, (raw >> 7) as u8],
        ));
    }
    events.sort_by_key(|&(tick, order, id, msg)| (tick, order, msg[1], id));

    let mut track = Vec::with_capacity(16 + events.len() * 4);
    let us = clip.tempo.us_per_quarter().to_be_bytes();
    track.extend_from_slice(&[0x00, 0xFF, 0x51, 0x03, us[1], us[2], us[3]]);
    let ts = clip.time_signature;
    track.extend_from_slice(&[
        0x00,
        0xFF,
        0x58,
        0x04,
        ts.numerator,
        ts.denominator.trailing_zeros() as u8,
        24,
        8,
    ]);
    let mut now = 0u64;
    for (tick, _, _, msg) in events {
        push_vlq(&mut track, (tick - now) as u32);
        track.extend_from_slice(&msg);
        now = tick;
    }
    track.extend_from_slice(&[0x00, 0xFF, 0x2F, 0x00]);

    let mut out = Vec::with_capacity(22 + track.len());
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&clip.ppq.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    Ok(out)
}
