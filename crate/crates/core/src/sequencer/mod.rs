//! Piano-roll document model: notes on a tick grid plus tempo and meter.
//!
//! Pitches use MIDI numbering with C-1 = 0, so the editable range C1..=G8 is 24..=115.
//! Every edit either succeeds and leaves a valid clip, or fails and leaves the clip
//! untouched.

mod smf;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use smf::{load_midi, save_midi, SmfError};

pub const PITCH_MIN: u8 = 24;
pub const PITCH_MAX: u8 = 115;
pub const C3: u8 = 48;
pub const DEFAULT_PPQ: u16 = 480;
pub const DEFAULT_VELOCITY: u8 = 100;

pub type NoteId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoteEvent {
    pub id: NoteId,
    pub pitch: u8,
    pub start_ticks: u32,
    pub duration_ticks: u32,
    pub velocity: u8,
}

impl NoteEvent {
    /// Exclusive end tick.
    pub fn end_ticks(&self) -> u64 {
        u64::from(self.start_ticks) + u64::from(self.duration_ticks)
    }

    fn overlaps(&self, pitch: u8, start: u32, end: u64) -> bool {
        self.pitch == pitch && u64::from(self.start_ticks) < end && u64::from(start) < self.end_ticks()
    }
}

/// Tempo stored the way SMF stores it, microseconds per quarter note.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tempo(u32);

impl Tempo {
    pub const MAX_US: u32 = 0x00FF_FFFF;

    pub fn from_us_per_quarter(us: u32) -> Option<Self> {
        (1..=Self::MAX_US).contains(&us).then_some(Self(us))
    }

    /// Nearest representable tempo.
    pub fn from_bpm(bpm: f64) -> Option<Self> {
        if !(bpm.is_finite() && bpm > 0.0) {
            return None;
        }
        let us = (60_000_000.0 / bpm).round();
        if us >= 1.0 && us <= f64::from(Self::MAX_US) {
            Self::from_us_per_quarter(us as u32)
        } else {
            None
        }
    }

    pub fn us_per_quarter(self) -> u32 {
        self.0
    }

    pub fn bpm(self) -> f64 {
        60_000_000.0 / f64::from(self.0)
    }
}

impl Default for Tempo {
    fn default() -> Self {
        Self(500_000)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeSignature {
    pub numerator: u8,
    /// Power of two.
    pub denominator: u8,
}

impl TimeSignature {
    pub fn new(numerator: u8, denominator: u8) -> Option<Self> {
        (numerator > 0 && denominator.is_power_of_two()).then_some(Self {
            numerator,
            denominator,
        })
    }
}

impl Default for TimeSignature {
    fn default() -> Self {
        Self {
            numerator: 4,
            denominator: 4,
        }
    }
}

/// Pitch-bend event carried through MIDI import/export. `value` is centred on 0, range
/// -8192..=8191.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PitchBend {
    pub tick: u32,
    pub value: i16,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SequencerError {
    #[error("pitch {0} outside {PITCH_MIN}..={PITCH_MAX}")]
    PitchOutOfRange(i64),
    #[error("note overlaps note {existing} on pitch {pitch}")]
    Overlap { pitch: u8, existing: NoteId },
    #[error("unknown note id {0}")]
    UnknownNote(NoteId),
    #[error("note duration must be at least one tick")]
    MinDuration,
    #[error("tick position {0} out of range")]
    TickOutOfRange(i64),
    #[error("velocity {0} outside 1..=127")]
    Velocity(u8),
    #[error("invalid clip: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clip {
    notes: Vec<NoteEvent>,
    pub ppq: u16,
    pub tempo: Tempo,
    pub time_signature: TimeSignature,
    selection: BTreeSet<NoteId>,
    pub pitch_bends: Vec<PitchBend>,
    next_id: NoteId,
}

impl Default for Clip {
    fn default() -> Self {
        Self::new(DEFAULT_PPQ)
    }
}

fn check_pitch(pitch: i64) -> Result<u8, SequencerError> {
    if (i64::from(PITCH_MIN)..=i64::from(PITCH_MAX)).contains(&pitch) {
        Ok(pitch as u8)
    } else {
        Err(SequencerError::PitchOutOfRange(pitch))
    }
}

fn check_tick(tick: i64) -> Result<u32, SequencerError> {
    u32::try_from(tick).map_err(|_| SequencerError::TickOutOfRange(tick))
}

impl Clip {
    pub fn new(ppq: u16) -> Self {
        Self {
            notes: Vec::new(),
            ppq,
            tempo: Tempo::default(),
            time_signature: TimeSignature::default(),
            selection: BTreeSet::new(),
            pitch_bends: Vec::new(),
            next_id: 1,
        }
    }

    pub fn notes(&self) -> &[NoteEvent] {
        &self.notes
    }

    pub fn selection(&self) -> &BTreeSet<NoteId> {
        &self.selection
    }

    pub fn note(&self, id: NoteId) -> Option<&NoteEvent> {
        self.notes.iter().find(|n| n.id == id)
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    /// Notes as `(pitch, start, duration, velocity)` sorted by start then pitch, ignoring ids.
    pub fn note_content(&self) -> Vec<(u8, u32, u32, u8)> {
        let mut v: Vec<_> = self
            .notes
            .iter()
            .map(|n| (n.pitch, n.start_ticks, n.duration_ticks, n.velocity))
            .collect();
        v.sort_by_key(|&(p, s, _, _)| (s, p));
        v
    }

    pub fn end_ticks(&self) -> u64 {
        self.notes.iter().map(NoteEvent::end_ticks).max().unwrap_or(0)
    }

    pub fn ticks_to_seconds(&self, ticks: u64) -> f64 {
        ticks as f64 / f64::from(self.ppq) * f64::from(self.tempo.us_per_quarter()) / 1e6
    }

    fn index_of(&self, id: NoteId) -> Result<usize, SequencerError> {
        self.notes
            .iter()
            .position(|n| n.id == id)
            .ok_or(SequencerError::UnknownNote(id))
    }

    fn check_free(
        &self,
        pitch: u8,
        start: u32,
        duration: u32,
        ignore: Option<NoteId>,
    ) -> Result<(), SequencerError> {
        if duration == 0 {
            return Err(SequencerError::MinDuration);
        }
        let end = u64::from(start) + u64::from(duration);
        if end > u64::from(u32::MAX) {
            return Err(SequencerError::TickOutOfRange(end as i64));
        }
        match self
            .notes
            .iter()
            .find(|n| Some(n.id) != ignore && n.overlaps(pitch, start, end))
        {
            Some(n) => Err(SequencerError::Overlap {
                pitch,
                existing: n.id,
            }),
            None => Ok(()),
        }
    }

    /// Adds a note in an empty cell and returns its id.
    pub fn add_note(
        &mut self,
        pitch: i64,
        start_ticks: i64,
        duration_ticks: i64,
    ) -> Result<NoteId, SequencerError> {
        self.add_note_with_velocity(pitch, start_ticks, duration_ticks, DEFAULT_VELOCITY)
    }

    pub fn add_note_with_velocity(
        &mut self,
        pitch: i64,
        start_ticks: i64,
        duration_ticks: i64,
        velocity: u8,
    ) -> Result<NoteId, SequencerError> {
        let pitch = check_pitch(pitch)?;
        let start = check_tick(start_ticks)?;
        if duration_ticks < 1 {
            return Err(SequencerError::MinDuration);
        }
        let duration = check_tick(duration_ticks)?;
        if !(1..=127).contains(&velocity) {
            return Err(SequencerError::Velocity(velocity));
        }
        self.check_free(pitch, start, duration, None)?;
        let id = self.next_id;
        self.next_id += 1;
        self.notes.push(NoteEvent {
            id,
            pitch,
            start_ticks: start,
            duration_ticks: duration,
            velocity,
        });
        Ok(id)
    }

    /// Highlights a single note, replacing the previous selection.
    pub fn select(&mut self, id: NoteId) -> Result<(), SequencerError> {
        self.index_of(id)?;
        self.selection.clear();
        self.selection.insert(id);
        Ok(())
    }

    pub fn extend_selection(&mut self, id: NoteId) -> Result<(), SequencerError> {
        self.index_of(id)?;
        self.selection.insert(id);
        Ok(())
    }

    pub fn clear_selection(&mut self) {
        self.selection.clear();
    }

    pub fn move_note(
        &mut self,
        id: NoteId,
        delta_ticks: i64,
        delta_pitch: i64,
    ) -> Result<(), SequencerError> {
        let idx = self.index_of(id)?;
        let n = self.notes[idx];
        let pitch = check_pitch(i64::from(n.pitch) + delta_pitch)?;
        let start = check_tick(i64::from(n.start_ticks) + delta_ticks)?;
        self.check_free(pitch, start, n.duration_ticks, Some(id))?;
        let n = &mut self.notes[idx];
        n.pitch = pitch;
        n.start_ticks = start;
        Ok(())
    }

    /// Moves either edge of a note. `new_end` is exclusive.
    pub fn resize_note(
        &mut self,
        id: NoteId,
        new_start: Option<i64>,
        new_end: Option<i64>,
    ) -> Result<(), SequencerError> {
        let idx = self.index_of(id)?;
        let n = self.notes[idx];
        let start = i64::from(n.start_ticks);
        let end = n.end_ticks() as i64;
        let start = new_start.unwrap_or(start);
        let end = new_end.unwrap_or(end);
        if end <= start {
            return Err(SequencerError::MinDuration);
        }
        let start = check_tick(start)?;
        let duration = check_tick(end - i64::from(start))?;
        self.check_free(n.pitch, start, duration, Some(id))?;
        let n = &mut self.notes[idx];
        n.start_ticks = start;
        n.duration_ticks = duration;
        Ok(())
    }

    pub fn delete_note(&mut self, id: NoteId) -> Result<NoteEvent, SequencerError> {
        let idx = self.index_of(id)?;
        self.selection.remove(&id);
        Ok(self.notes.remove(idx))
    }

    /// Removes every note, the selection and any pitch bends.
    pub fn clear(&mut self) {
        self.notes.clear();
        self.selection.clear();
        self.pitch_bends.clear();
    }

    /// Full invariant check, used on data arriving from outside.
    pub fn validate(&self) -> Result<(), SequencerError> {
        if self.ppq == 0 {
            return Err(SequencerError::Invalid("ppq must be positive".into()));
        }
        let mut probe = Clip::new(self.ppq);
        let mut ids = BTreeSet::new();
        for n in &self.notes {
            if !ids.insert(n.id) {
                return Err(SequencerError::Invalid(format!("duplicate note id {}", n.id)));
            }
            check_pitch(i64::from(n.pitch))?;
            if !(1..=127).contains(&n.velocity) {
                return Err(SequencerError::Velocity(n.velocity));
            }
            probe.check_free(n.pitch, n.start_ticks, n.duration_ticks, None)?;
            probe.notes.push(*n);
        }
        if let Some(id) = self.selection.iter().find(|id| !ids.contains(id)) {
            return Err(SequencerError::Invalid(format!("selected id {id} is not a note")));
        }
        if self.pitch_bends.iter().any(|b| !(-8192..=8191).contains(&b.value)) {
            return Err(SequencerError::Invalid("pitch bend outside -8192..=8191".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(ClipJson::from(self)).expect("clip serializes")
    }

    pub fn from_json(value: serde_json::Value) -> Result<Self, SequencerError> {
        let dto: ClipJson =
            serde_json::from_value(value).map_err(|e| SequencerError::Invalid(e.to_string()))?;
        Clip::try_from(dto)
    }
}

/// Wire form of a clip for the UI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipJson {
    pub notes: Vec<NoteEvent>,
    pub ppq: u16,
    pub tempo_bpm: f64,
    pub time_signature: TimeSignature,
    #[serde(default)]
    pub selection: Vec<NoteId>,
    #[serde(default)]
    pub pitch_bends: Vec<PitchBend>,
}

impl From<&Clip> for ClipJson {
    fn from(c: &Clip) -> Self {
        Self {
            notes: c.notes.clone(),
            ppq: c.ppq,
            tempo_bpm: c.tempo.bpm(),
            time_signature: c.time_signature,
            selection: c.selection.iter().copied().collect(),
            pitch_bends: c.pitch_bends.clone(),
        }
    }
}

impl TryFrom<ClipJson> for Clip {
    type Error = SequencerError;

    fn try_from(j: ClipJson) -> Result<Self, Self::Error> {
        let tempo = Tempo::from_bpm(j.tempo_bpm)
            .ok_or_else(|| SequencerError::Invalid(format!("tempo {} bpm", j.tempo_bpm)))?;
        let ts = TimeSignature::new(j.time_signature.numerator, j.time_signature.denominator)
            .ok_or_else(|| SequencerError::Invalid("time signature".into()))?;
        let clip = Clip {
            next_id: j.notes.iter().map(|n| n.id).max().unwrap_or(0) + 1,
            notes: j.notes,
            ppq: j.ppq,
            tempo,
            time_signature: ts,
            selection: j.selection.into_iter().collect(),
            pitch_bends: j.pitch_bends,
        };
        clip.validate()?;
        Ok(clip)
    }
}

/// Three back-to-back C3 notes of six quarter notes each, 4/4 at 120 bpm, ppq 480.
pub fn make_reference_clip() -> Clip {
    let mut clip = Clip::new(DEFAULT_PPQ);
    let len = 6 * i64::from(DEFAULT_PPQ);
    for i in 0..3 {
        clip.add_note(i64::from(C3), i * len, len)
            .expect("reference notes are disjoint and in range");
    }
    clip
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_c3() {
        let mut c = Clip::default();
        let id = c.add_note(48, 0, 480).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.note(id).unwrap().pitch, 48);
    }

    #[test]
    fn add_rejections() {
        let mut c = Clip::default();
        assert_eq!(c.add_note(23, 0, 480), Err(SequencerError::PitchOutOfRange(23)));
        assert_eq!(c.add_note(116, 0, 480), Err(SequencerError::PitchOutOfRange(116)));
        let id = c.add_note(60, 0, 480).unwrap();
        assert_eq!(
            c.add_note(60, 479, 10),
            Err(SequencerError::Overlap { pitch: 60, existing: id })
        );
        // Touching is not overlapping; other pitches are independent.
        c.add_note(60, 480, 10).unwrap();
        c.add_note(61, 0, 480).unwrap();
        assert_eq!(c.add_note(62, 0, 0), Err(SequencerError::MinDuration));
        assert_eq!(c.add_note(62, -1, 5), Err(SequencerError::TickOutOfRange(-1)));
        assert_eq!(c.add_note_with_velocity(62, 0, 5, 0), Err(SequencerError::Velocity(0)));
    }

    #[test]
    fn move_and_resize() {
        let mut c = Clip::default();
        let id = c.add_note(48, 0, 480).unwrap();
        c.move_note(id, 0, 12).unwrap();
        assert_eq!(c.note(id).unwrap().pitch, 60);
        let before = c.clone();
        assert_eq!(c.resize_note(id, None, Some(0)), Err(SequencerError::MinDuration));
        assert_eq!(c.move_note(id, 0, 60), Err(SequencerError::PitchOutOfRange(120)));
        assert_eq!(c.move_note(id, -1, 0), Err(SequencerError::TickOutOfRange(-1)));
        assert_eq!(c, before);
        c.resize_note(id, Some(120), Some(960)).unwrap();
        let n = c.note(id).unwrap();
        assert_eq!((n.start_ticks, n.duration_ticks), (120, 840));
        assert_eq!(c.move_note(99, 0, 0), Err(SequencerError::UnknownNote(99)));
    }

    #[test]
    fn move_into_neighbour_fails_atomically() {
        let mut c = Clip::default();
        let a = c.add_note(50, 0, 480).unwrap();
        let b = c.add_note(50, 960, 480).unwrap();
        let before = c.clone();
        assert_eq!(
            c.move_note(a, 600, 0),
            Err(SequencerError::Overlap { pitch: 50, existing: b })
        );
        assert_eq!(c, before);
        // A note never collides with itself.
        c.move_note(a, 100, 0).unwrap();
    }

    #[test]
    fn select_and_clear() {
        let mut c = Clip::default();
        let ids: Vec<_> = (0..10).map(|i| c.add_note(30 + i, 0, 100).unwrap()).collect();
        c.select(ids[3]).unwrap();
        c.extend_selection(ids[4]).unwrap();
        assert_eq!(c.selection().len(), 2);
        c.select(ids[5]).unwrap();
        assert_eq!(c.selection().iter().copied().collect::<Vec<_>>(), vec![ids[5]]);
        assert!(c.select(1000).is_err());
        c.delete_note(ids[5]).unwrap();
        assert!(c.selection().is_empty());
        c.select(ids[0]).unwrap();
        c.clear();
        assert!(c.is_empty() && c.selection().is_empty());
    }

    #[test]
    fn reference_clip_timing() {
        let c = make_reference_clip();
        assert_eq!(c.len(), 3);
        let starts: Vec<_> = c.notes().iter().map(|n| n.start_ticks).collect();
        assert_eq!(starts, vec![0, 2880, 5760]);
        assert!(c.notes().iter().all(|n| n.pitch == 48 && n.duration_ticks == 2880));
        for n in c.notes() {
            assert_eq!(c.ticks_to_seconds(u64::from(n.duration_ticks)), 3.0);
        }
        assert_eq!(c.ticks_to_seconds(c.end_ticks()), 9.0);
        assert_eq!(c.tempo.bpm(), 120.0);
        assert_eq!(c.time_signature, TimeSignature::new(4, 4).unwrap());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let mut c = make_reference_clip();
        c.select(2).unwrap();
        let back = Clip::from_json(c.to_json()).unwrap();
        assert_eq!(back, c);

        let mut j = c.to_json();
        j["notes"][1]["pitch"] = 10.into();
        assert!(Clip::from_json(j).is_err());
        let mut j = c.to_json();
        j["notes"][1]["start_ticks"] = 100.into();
        assert!(matches!(Clip::from_json(j), Err(SequencerError::Overlap { .. })));
        let mut j = c.to_json();
        j["selection"] = serde_json::json!([42]);
        assert!(Clip::from_json(j).is_err());
        let mut j = c.to_json();
        j["time_signature"]["denominator"] = 3.into();
        assert!(Clip::from_json(j).is_err());
    }

    #[test]
    fn tempo_conversions() {
        assert_eq!(Tempo::from_bpm(120.0).unwrap().us_per_quarter(), 500_000);
        assert!(Tempo::from_bpm(0.0).is_none());
        assert!(Tempo::from_bpm(1.0).is_none());
        assert!(Tempo::from_us_per_quarter(0).is_none());
    }
}
