use std::fmt;

use serde::{Deserialize, Serialize};

use super::aami::{AamiClass, BeatLabel};
use super::record::EcgRecord;
use crate::error::{Error, Result};

/// Length every beat is resampled to.
pub const BEAT_LEN: usize = 128;

/// Fraction of the neighbouring R-R interval trimmed (single) or added (trio).
const NEIGHBOUR_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SegmentKind {
    /// Between the neighbouring R-peaks, 10% inwards.
    Single,
    /// Spanning the neighbouring R-peaks, 10% outwards.
    Trio,
}

/// A fixed-length, unit-energy heartbeat segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beat {
    pub values: Vec<f64>,
    pub label: AamiClass,
    pub patient_id: String,
    /// Sample index of the central R-peak in the source record.
    pub origin_index: usize,
    pub kind: SegmentKind,
}

/// Trio segments share the `Beat` layout; `kind` tells them apart.
pub type BeatTrio = Beat;

impl Beat {
    pub fn binary(&self) -> BeatLabel {
        self.label.binary()
    }

    pub fn is_abnormal(&self) -> bool {
        self.label.is_abnormal()
    }
}

/// The two views of one heartbeat that the CNN consumes as channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatPair {
    pub single: Beat,
    pub trio: Beat,
}

impl BeatPair {
    pub fn label(&self) -> AamiClass {
        self.single.label
    }

    pub fn is_abnormal(&self) -> bool {
        self.single.is_abnormal()
    }

    pub fn patient_id(&self) -> &str {
        &self.single.patient_id
    }

    pub fn origin_index(&self) -> usize {
        self.single.origin_index
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SkipReason {
    /// First or last annotated peak; no neighbour on one side.
    Boundary,
    UnmappedSymbol(String),
    InvalidSegment(String),
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkipReason::Boundary => f.write_str("boundary peak"),
            SkipReason::UnmappedSymbol(s) => write!(f, "unmapped symbol {s:?}"),
            SkipReason::InvalidSegment(s) => write!(f, "invalid segment: {s}"),
        }
    }
}

/// Linearly interpolate `values` onto `target_len` evenly spaced points
/// spanning the same interval. Both endpoints are preserved.
pub fn resample(values: &[f64], target_len: usize) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::InvalidSegment(format!(
            "need at least 2 samples to resample, got {}",
            values.len()
        )));
    }
    if target_len < 2 {
        return Err(Error::InvalidArgument(format!("target length {target_len} < 2")));
    }
    let last = values.len() - 1;
    let scale = last as f64 / (target_len - 1) as f64;
    Ok((0..target_len)
        .map(|j| {
            let pos = j as f64 * scale;
            let k = (pos.floor() as usize).min(last - 1);
            let frac = pos - k as f64;
            values[k] + (values[k + 1] - values[k]) * frac
        })
        .collect())
}

/// Scale to unit l2 norm.
pub fn normalize(values: &mut [f64]) -> Result<()> {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::InvalidSegment(format!("cannot normalize segment with norm {norm}")));
    }
    values.iter_mut().for_each(|v| *v /= norm);
    Ok(())
}

/// Unrounded bounds of the single-beat segment for peaks `(left, center, right)`.
pub fn single_bounds(left: usize, center: usize, right: usize) -> (f64, f64) {
    let (l, c, r) = (left as f64, center as f64, right as f64);
    (l + NEIGHBOUR_FRACTION * (c - l), r - NEIGHBOUR_FRACTION * (r - c))
}

/// Unrounded, unclamped bounds of the beat-trio segment.
pub fn trio_bounds(left: usize, center: usize, right: usize) -> (f64, f64) {
    let (l, c, r) = (left as f64, center as f64, right as f64);
    (l - NEIGHBOUR_FRACTION * (c - l), r + NEIGHBOUR_FRACTION * (r - c))
}

/// Round `(lo, hi)` to sample indices and clamp to `[0, len)`.
pub fn sample_bounds(bounds: (f64, f64), len: usize) -> (usize, usize) {
    let max = len.saturating_sub(1) as f64;
    (bounds.0.round().clamp(0.0, max) as usize, bounds.1.round().clamp(0.0, max) as usize)
}

fn neighbours(record: &EcgRecord, i: usize) -> std::result::Result<(usize, usize, usize), SkipReason> {
    if i == 0 || i + 1 >= record.r_peaks.len() {
        return Err(SkipReason::Boundary);
    }
    Ok((record.r_peaks[i - 1], record.r_peaks[i], record.r_peaks[i + 1]))
}

fn build(
    record: &EcgRecord,
    i: usize,
    kind: SegmentKind,
    bounds: (f64, f64),
) -> std::result::Result<Beat, SkipReason> {
    let label = AamiClass::from_symbol(&record.symbols[i])
        .map_err(|_| SkipReason::UnmappedSymbol(record.symbols[i].clone()))?;
    let (lo, hi) = sample_bounds(bounds, record.samples.len());
    let mut values = resample(&record.samples[lo..=hi], BEAT_LEN)
        .and_then(|mut v| normalize(&mut v).map(|_| v))
        .map_err(|e| SkipReason::InvalidSegment(e.to_string()))?;
    values.shrink_to_fit();
    Ok(Beat {
        values,
        label,
        patient_id: record.patient_id.clone(),
        origin_index: record.r_peaks[i],
        kind,
    })
}

/// Single-beat segment around annotated peak `i`.
pub fn extract_single_beat(record: &EcgRecord, i: usize) -> std::result::Result<Beat, SkipReason> {
    let (l, c, r) = neighbours(record, i)?;
    build(record, i, SegmentKind::Single, single_bounds(l, c, r))
}

/// Beat-trio segment around annotated peak `i`, clamped to the record.
pub fn extract_beat_trio(record: &EcgRecord, i: usize) -> std::result::Result<BeatTrio, SkipReason> {
    let (l, c, r) = neighbours(record, i)?;
    build(record, i, SegmentKind::Trio, trio_bounds(l, c, r))
}

pub fn extract_pair(record: &EcgRecord, i: usize) -> std::result::Result<BeatPair, SkipReason> {
    Ok(BeatPair {
        single: extract_single_beat(record, i)?,
        trio: extract_beat_trio(record, i)?,
    })
}
