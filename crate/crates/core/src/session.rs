//! The mimicry task: knob angle → pitch offset, contour recording and export, and
//! scoring a performed contour against the reference vibrato.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;
use crate::sim::KnobSample;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("invalid pitch map: {0}")]
    PitchMap(&'static str),
    #[error("line {line}: {reason}")]
    Csv { line: u64, reason: String },
    #[error("contour times must be strictly increasing (line {line})")]
    NotIncreasing { line: u64 },
    #[error("contour is empty")]
    Empty,
    #[error("contours do not overlap in time")]
    NoOverlap,
    #[error("invalid reference parameter: {0}")]
    Reference(&'static str),
}

/// Linear angle-to-cents map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct PitchMapConfig<T> {
    pub angle_min_deg: T,
    pub angle_max_deg: T,
    pub cents_at_max: T,
    pub clamp: bool,
}

impl<T: Real> Default for PitchMapConfig<T> {
    fn default() -> Self {
        Self {
            angle_min_deg: T::zero(),
            angle_max_deg: T::lit(90.0),
            cents_at_max: T::lit(200.0),
            clamp: true,
        }
    }
}

impl<T: Real> PitchMapConfig<T> {
    pub fn validate(&self) -> Result<(), SessionError> {
        if !(self.angle_max_deg > self.angle_min_deg) {
            return Err(SessionError::PitchMap("angle_max must exceed angle_min"));
        }
        if !(self.cents_at_max > T::zero() && self.cents_at_max.is_finite()) {
            return Err(SessionError::PitchMap("cents_at_max must be positive"));
        }
        Ok(())
    }

    pub fn map(&self, angle_deg: T) -> T {
        map_angle_to_cents(self, angle_deg)
    }
}

pub fn map_angle_to_cents<T: Real>(config: &PitchMapConfig<T>, angle_deg: T) -> T {
    let span = config.angle_max_deg - config.angle_min_deg;
    let cents = (angle_deg - config.angle_min_deg) / span * config.cents_at_max;
    if config.clamp {
        cents.max(T::zero()).min(config.cents_at_max)
    } else {
        cents
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContourSource {
    Recorded,
    Reference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PitchContour<T> {
    samples: Vec<(u64, T)>,
    pub source: ContourSource,
}

impl<T: Real> PitchContour<T> {
    pub fn new(source: ContourSource) -> Self {
        Self {
            samples: Vec::new(),
            source,
        }
    }

    /// Builds a contour, checking time order and finiteness.
    pub fn from_samples(source: ContourSource, samples: Vec<(u64, T)>) -> Result<Self, SessionError> {
        let mut c = Self::new(source);
        for (i, (t, cents)) in samples.into_iter().enumerate() {
            c.push(t, cents).map_err(|e| match e {
                SessionError::NotIncreasing { .. } => SessionError::NotIncreasing { line: i as u64 },
                other => other,
            })?;
        }
        Ok(c)
    }

    pub fn push(&mut self, t_ms: u64, cents: T) -> Result<(), SessionError> {
        if !cents.is_finite() {
            return Err(SessionError::Csv {
                line: self.samples.len() as u64,
                reason: "non-finite cents".into(),
            });
        }
        if self.samples.last().is_some_and(|&(last, _)| t_ms <= last) {
            return Err(SessionError::NotIncreasing {
                line: self.samples.len() as u64,
            });
        }
        self.samples.push((t_ms, cents));
        Ok(())
    }

    pub fn samples(&self) -> &[(u64, T)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_ms(&self) -> u64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.0 - a.0,
            _ => 0,
        }
    }

    /// Linear interpolation; `None` outside the sampled range.
    pub fn value_at(&self, t_ms: T) -> Option<T> {
        let time = |i: usize| T::from_u64(self.samples[i].0).unwrap_or_else(T::zero);
        let n = self.samples.len();
        if n == 0 || t_ms < time(0) || t_ms > time(n - 1) {
            return None;
        }
        let hi = self
            .samples
            .partition_point(|&(t, _)| T::from_u64(t).unwrap_or_else(T::zero) < t_ms);
        if hi == 0 {
            return Some(self.samples[0].1);
        }
        let (t0, v0) = (time(hi - 1), self.samples[hi - 1].1);
        let (t1, v1) = (time(hi), self.samples[hi].1);
        Some(v0 + (v1 - v0) * (t_ms - t0) / (t1 - t0))
    }

    pub fn max_cents(&self) -> Option<T> {
        self.samples.iter().map(|s| s.1).reduce(T::max)
    }

    /// Every sample's cents rounded to the four decimals written by [`export_csv`].
    pub fn quantized(&self) -> Self {
        Self {
            samples: self
                .samples
                .iter()
                .map(|&(t, c)| (t, quantize4(c)))
                .collect(),
            source: self.source,
        }
    }
}

fn quantize4<T: Real>(x: T) -> T {
    format!("{x:.4}").parse().unwrap_or(x)
}

/// Records telemetry into a contour, one point per sample with a strictly newer `t_ms`.
#[derive(Debug, Clone)]
pub struct Recorder<T> {
    map: PitchMapConfig<T>,
    contour: PitchContour<T>,
}

impl<T: Real> Recorder<T> {
    pub fn new(map: PitchMapConfig<T>) -> Result<Self, SessionError> {
        map.validate()?;
        Ok(Self {
            map,
            contour: PitchContour::new(ContourSource::Recorded),
        })
    }

    /// Returns `false` when the sample was skipped because its time did not advance.
    pub fn push(&mut self, sample: &KnobSample<T>) -> bool {
        self.contour
            .push(sample.t_ms, self.map.map(sample.angle_deg))
            .is_ok()
    }

    pub fn contour(&self) -> &PitchContour<T> {
        &self.contour
    }

    pub fn finish(self) -> PitchContour<T> {
        self.contour
    }
}

pub fn record<'a, T: Real>(
    map: &PitchMapConfig<T>,
    stream: impl IntoIterator<Item = &'a KnobSample<T>>,
) -> Result<PitchContour<T>, SessionError> {
    let mut rec = Recorder::new(*map)?;
    for s in stream {
        rec.push(s);
    }
    Ok(rec.finish())
}

pub fn export_csv<T: Real>(contour: &PitchContour<T>) -> Vec<u8> {
    use std::fmt::Write as _;
    let mut s = String::with_capacity(16 + contour.len() * 16);
    s.push_str("t_ms,cents\n");
    for (t, c) in &contour.samples {
        let _ = writeln!(s, "{t},{c:.4}");
    }
    s.into_bytes()
}

/// Parses the `t_ms,cents` schema. Line numbers in errors are 1-based file lines.
pub fn import_csv<T: Real>(bytes: &[u8], source: ContourSource) -> Result<PitchContour<T>, SessionError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let csv_err = |line: u64, e: &dyn std::fmt::Display| SessionError::Csv {
        line,
        reason: e.to_string(),
    };
    let headers = reader.headers().map_err(|e| csv_err(1, &e))?;
    if headers.iter().collect::<Vec<_>>() != ["t_ms", "cents"] {
        return Err(csv_err(1, &"expected header `t_ms,cents`"));
    }
    let mut contour = PitchContour::new(source);
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_err(line, &e)
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(csv_err(line, &"expected 2 fields"));
        }
        let t: u64 = record[0]
            .parse()
            .map_err(|_| csv_err(line, &format!("bad t_ms `{}`", &record[0])))?;
        let cents: T = record[1]
            .parse()
            .ok()
            .filter(|c: &T| c.is_finite())
            .ok_or_else(|| csv_err(line, &format!("bad cents `{}`", &record[1])))?;
        contour.push(t, cents).map_err(|e| match e {
            SessionError::NotIncreasing { .. } => SessionError::NotIncreasing { line },
            other => other,
        })?;
    }
    Ok(contour)
}

/// Shape of the reference stimulus: three notes of `note_ms`, each a flat onset
/// followed by a raised-cosine vibrato.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceVibrato<T> {
    pub depth_cents: T,
    pub rate_hz: T,
    pub notes: u32,
    pub note_ms: u64,
    pub onset_ms: u64,
}

impl<T: Real> Default for ReferenceVibrato<T> {
    fn default() -> Self {
        Self {
            depth_cents: T::lit(50.0),
            rate_hz: T::lit(5.0),
            notes: 3,
            note_ms: 3000,
            onset_ms: 500,
        }
    }
}

impl<T: Real> ReferenceVibrato<T> {
    /// Cents at absolute time `t_ms`. The sample at the very end closes the last note.
    pub fn cents_at(&self, t_ms: u64) -> T {
        let last = u64::from(self.notes.max(1)) - 1;
        let note = (t_ms / self.note_ms).min(last);
        let local = t_ms - note * self.note_ms;
        if local < self.onset_ms {
            return T::zero();
        }
        let t = T::from_u64(local - self.onset_ms).unwrap_or_else(T::zero) / T::lit(1000.0);
        self.depth_cents * (T::one() - (T::TAU() * self.rate_hz * t).cos()) / T::lit(2.0)
    }

    pub fn contour(&self) -> Result<PitchContour<T>, SessionError> {
        if !(self.depth_cents > T::zero() && self.depth_cents.is_finite()) {
            return Err(SessionError::Reference("depth must be positive"));
        }
        if !(self.rate_hz > T::zero() && self.rate_hz.is_finite()) {
            return Err(SessionError::Reference("rate must be positive"));
        }
        if self.notes == 0 || self.note_ms == 0 || self.onset_ms > self.note_ms {
            return Err(SessionError::Reference("note layout"));
        }
        let end = u64::from(self.notes) * self.note_ms;
        Ok(PitchContour {
            samples: (0..=end).map(|t| (t, self.cents_at(t))).collect(),
            source: ContourSource::Reference,
        })
    }
}

/// Reference vibrato sampled at 1 kHz over the three 3 s reference notes.
pub fn reference_contour<T: Real>(depth_cents: T, rate_hz: T) -> Result<PitchContour<T>, SessionError> {
    ReferenceVibrato {
        depth_cents,
        rate_hz,
        ..ReferenceVibrato::default()
    }
    .contour()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MimicryScore<T> {
    pub rmse_cents: T,
    pub correlation: T,
    pub peak_count_delta: i64,
    /// Number of points on the common grid.
    pub grid_points: usize,
}

pub const SCORE_GRID_MS: u64 = 10;

/// Both contours linearly resampled on the shared 100 Hz grid covering their overlap.
pub fn common_grid<T: Real>(
    a: &PitchContour<T>,
    b: &PitchContour<T>,
) -> Result<(Vec<T>, Vec<T>), SessionError> {
    let (Some(a0), Some(a1)) = (a.samples.first(), a.samples.last()) else {
        return Err(SessionError::Empty);
    };
    let (Some(b0), Some(b1)) = (b.samples.first(), b.samples.last()) else {
        return Err(SessionError::Empty);
    };
    let start = a0.0.max(b0.0).div_ceil(SCORE_GRID_MS) * SCORE_GRID_MS;
    let end = a1.0.min(b1.0);
    if start > end {
        return Err(SessionError::NoOverlap);
    }
    let times = (start..=end).step_by(SCORE_GRID_MS as usize);
    let at = |c: &PitchContour<T>, t: u64| {
        c.value_at(T::from_u64(t).unwrap_or_else(T::zero))
            .expect("grid lies inside both contours")
    };
    Ok(times.map(|t| (at(a, t), at(b, t))).unzip())
}

fn pearson<T: Real>(x: &[T], y: &[T]) -> T {
    let n = T::from_usize_lossy(x.len());
    let mx = x.iter().fold(T::zero(), |s, &v| s + v) / n;
    let my = y.iter().fold(T::zero(), |s, &v| s + v) / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy = sxy + da * db;
        sxx = sxx + da * da;
        syy = syy + db * db;
    }
    if sxx == T::zero() || syy == T::zero() {
        return T::zero();
    }
    (sxy / (sxx * syy).sqrt()).max(-T::one()).min(T::one())
}

fn peaks_above<T: Real>(g: &[T], threshold: T) -> i64 {
    let mut count = 0;
    let mut i = 1;
    while i + 1 < g.len() {
        if g[i] > g[i - 1] && g[i] > threshold {
            // Walk across a plateau; it counts if it is followed by a descent.
            let mut j = i;
            while j + 1 < g.len() && g[j + 1] == g[i] {
                j += 1;
            }
            if j + 1 < g.len() && g[j + 1] < g[i] {
                count += 1;
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    count
}

/// Scores a performance on the shared 100 Hz grid.
///
/// Peaks are interior local maxima above half of the reference's maximum. The
/// correlation is reported as 0 when either side is constant on the grid.
pub fn score<T: Real>(
    performed: &PitchContour<T>,
    reference: &PitchContour<T>,
) -> Result<MimicryScore<T>, SessionError> {
    let (p, r) = common_grid(performed, reference)?;
    let n = T::from_usize_lossy(p.len());
    let sq = p
        .iter()
        .zip(&r)
        .fold(T::zero(), |s, (&a, &b)| s + (a - b) * (a - b));
    let ref_max = r.iter().copied().reduce(T::max).unwrap_or_else(T::zero);
    let threshold = ref_max / T::lit(2.0);
    Ok(MimicryScore {
        rmse_cents: (sq / n).sqrt(),
        correlation: pearson(&p, &r),
        peak_count_delta: peaks_above(&p, threshold) - peaks_above(&r, threshold),
        grid_points: p.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::haptic::HapticMode;

    fn sample(t_ms: u64, angle: f64) -> KnobSample<f64> {
        KnobSample {
            seq: t_ms,
            t_ms,
            angle_deg: angle,
            velocity_dps: 0.0,
            torque: 0.0,
            mode: HapticMode::Smooth,
        }
    }

    #[test]
    fn mapping_examples() {
        let m = PitchMapConfig::<f64>::default();
        assert_eq!(m.map(0.0), 0.0);
        assert_eq!(m.map(45.0), 100.0);
        assert_eq!(m.map(120.0), 200.0);
        assert_eq!(m.map(-10.0), 0.0);
        let free = PitchMapConfig { clamp: false, ..m };
        assert!((free.map(120.0) - 266.666_666_666_666_7).abs() < 1e-9);
        assert!(PitchMapConfig { angle_max_deg: 0.0, ..m }.validate().is_err());
    }

    #[test]
    fn record_constant_angle() {
        let stream: Vec<_> = (1..=1000).map(|t| sample(t, 45.0)).collect();
        let c = record(&PitchMapConfig::default(), &stream).unwrap();
        assert_eq!(c.len(), 1000);
        assert!(c.samples().iter().all(|&(_, v)| v == 100.0));
        let empty: Vec<KnobSample<f64>> = Vec::new();
        assert!(record(&PitchMapConfig::default(), &empty).unwrap().is_empty());
    }

    #[test]
    fn recorder_skips_stale_time() {
        let mut r = Recorder::new(PitchMapConfig::<f64>::default()).unwrap();
        assert!(r.push(&sample(5, 10.0)));
        assert!(!r.push(&sample(5, 11.0)));
        assert_eq!(r.contour().len(), 1);
    }

    #[test]
    fn csv_shape_and_errors() {
        let c = PitchContour::from_samples(ContourSource::Recorded, vec![(1, 0.5), (2, -3.25)]).unwrap();
        let bytes = export_csv(&c);
        assert_eq!(String::from_utf8(bytes.clone()).unwrap(), "t_ms,cents\n1,0.5000\n2,-3.2500\n");
        assert_eq!(import_csv::<f64>(&bytes, ContourSource::Recorded).unwrap(), c);

        let err = import_csv::<f64>(b"t_ms,cents\nabc,1.0\n", ContourSource::Recorded).unwrap_err();
        assert!(matches!(err, SessionError::Csv { line: 2, .. }), "{err:?}");
        let err = import_csv::<f64>(b"t_ms,cents\n1,1\n1,2\n", ContourSource::Recorded).unwrap_err();
        assert_eq!(err, SessionError::NotIncreasing { line: 3 });
        assert!(import_csv::<f64>(b"time,cents\n", ContourSource::Recorded).is_err());
        assert!(import_csv::<f64>(b"t_ms,cents\n1,NaN\n", ContourSource::Recorded).is_err());
    }

    #[test]
    fn reference_shape() {
        let r = reference_contour(50.0, 5.0).unwrap();
        assert_eq!(r.duration_ms(), 9000);
        for onset in [0, 3000, 6000] {
            assert_eq!(r.value_at(onset as f64), Some(0.0));
        }
        assert!((r.max_cents().unwrap() - 50.0).abs() < 1e-9);
        assert!(reference_contour(0.0, 5.0).is_err());
        assert!(reference_contour(50.0, -1.0).is_err());
    }

    #[test]
    fn identity_and_offset_scores() {
        let r = reference_contour(50.0f64, 5.0).unwrap();
        let s = score(&r, &r).unwrap();
        assert_eq!(s.rmse_cents, 0.0);
        assert!((s.correlation - 1.0).abs() < 1e-12);
        assert_eq!(s.peak_count_delta, 0);

        let shifted = PitchContour::from_samples(
            ContourSource::Recorded,
            r.samples().iter().map(|&(t, c)| (t, c + 10.0)).collect(),
        )
        .unwrap();
        let s = score(&shifted, &r).unwrap();
        assert!((s.rmse_cents - 10.0).abs() < 1e-12);
        assert!((s.correlation - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_overlap() {
        let a = PitchContour::from_samples(ContourSource::Recorded, vec![(0, 1.0), (5, 1.0)]).unwrap();
        let b = PitchContour::from_samples(ContourSource::Recorded, vec![(20, 1.0), (30, 1.0)]).unwrap();
        assert_eq!(score(&a, &b), Err(SessionError::NoOverlap));
        assert_eq!(score(&a, &PitchContour::new(ContourSource::Reference)), Err(SessionError::Empty));
    }

    #[test]
    fn peak_counting() {
        assert_eq!(peaks_above(&[0.0, 2.0, 0.0, 2.0, 2.0, 0.0, 0.5, 0.0], 1.0), 2);
        assert_eq!(peaks_above(&[0.0, 2.0, 2.0], 1.0), 0);
        // Reference: 12.5 cycles per note, the final half cycle peaks at the note end.
        let r = reference_contour(50.0, 5.0).unwrap();
        let (g, _) = common_grid(&r, &r).unwrap();
        assert_eq!(peaks_above(&g, 25.0), 3 * 13 - 1);
    }
}
