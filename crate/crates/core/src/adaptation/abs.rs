//! Abnormal beat synthesis from a library of LTI degradation filters.
//!
//! Convolution here is "same" mode anchored at the first tap:
//! `y[i] = Σ_j h[j]·x[i − j]` for `i` in `0..x.len()`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{normalize, resample, AamiClass, Beat, BeatPair, PatientBeats, SegmentKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsConfig {
    pub filter_len: usize,
    pub ridge: f64,
    /// Filters whose cosine similarity with an already kept filter reaches
    /// this value are dropped. Values of 1 or more disable pruning.
    pub prune_threshold: f64,
}

impl Default for AbsConfig {
    fn default() -> Self {
        AbsConfig {
            filter_len: 32,
            ridge: 1e-4,
            prune_threshold: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsFilter {
    pub h: Vec<f64>,
    pub source_id: String,
    /// R-peak sample index of the abnormal beat the filter was fitted to.
    pub source_abnormal_index: usize,
    pub source_label: AamiClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsLibrary {
    pub filter_len: usize,
    pub ridge: f64,
    pub prune_threshold: f64,
    pub filters: Vec<AbsFilter>,
}

impl AbsLibrary {
    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }
}

pub fn conv_same(x: &[f64], h: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| h.iter().take(i + 1).enumerate().map(|(j, &hj)| hj * x[i - j]).sum())
        .collect()
}

/// Least-squares filter `h` of length `m` with `conv_same(normal, h) ≈ abnormal`,
/// regularized by `ridge·‖h‖²`.
pub fn estimate_filter(normal: &[f64], abnormal: &[f64], m: usize, ridge: f64) -> Result<Vec<f64>> {
    let len = normal.len();
    if abnormal.len() != len {
        return Err(Error::Shape(format!("beats of length {len} and {}", abnormal.len())));
    }
    if m == 0 || m >= len {
        return Err(Error::InvalidArgument(format!("filter length {m} must lie in 1..{len}")));
    }
    let c = DMatrix::from_fn(len, m, |i, j| if i >= j { normal[i - j] } else { 0.0 });
    let ctc = c.transpose() * &c;
    let rhs = c.transpose() * DVector::from_column_slice(abnormal);
    // keep the system solvable when the caller passes no regularization
    let floor = 1e-12 * ctc.trace().max(1.0);
    let mut lam = ridge.max(floor);
    loop {
        let sys = &ctc + DMatrix::identity(m, m) * lam;
        if let Some(ch) = sys.cholesky() {
            return Ok(ch.solve(&rhs).as_slice().to_vec());
        }
        lam *= 10.0;
        if !lam.is_finite() {
            return Err(Error::InvalidArgument("filter normal equations are not solvable".into()));
        }
    }
}

pub fn estimate_abs_filter(avg_normal: &Beat, abnormal: &Beat, m: usize, ridge: f64) -> Result<AbsFilter> {
    Ok(AbsFilter {
        h: estimate_filter(&avg_normal.values, &abnormal.values, m, ridge)?,
        source_id: abnormal.patient_id.clone(),
        source_abnormal_index: abnormal.origin_index,
        source_label: abnormal.label,
    })
}

/// Index of the beat closest in l2 to the mean of `beats`.
pub fn average_beat_index(beats: &[&[f64]]) -> Option<usize> {
    let first = beats.first()?;
    let mut mean = vec![0.0; first.len()];
    for b in beats {
        for (m, v) in mean.iter_mut().zip(b.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= beats.len() as f64);
    let dist = |b: &[f64]| b.iter().zip(&mean).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    (0..beats.len()).min_by(|&a, &b| dist(beats[a]).total_cmp(&dist(beats[b])))
}

/// The patient's normal pair whose single beat is closest to the mean
/// single beat.
pub fn average_normal_pair(pairs: &[BeatPair]) -> Option<&BeatPair> {
    let normals: Vec<&BeatPair> = pairs.iter().filter(|p| !p.is_abnormal()).collect();
    let singles: Vec<&[f64]> = normals.iter().map(|p| p.single.values.as_slice()).collect();
    average_beat_index(&singles).map(|i| normals[i])
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return if na == nb { 1.0 } else { 0.0 };
    }
    dot / (na * nb)
}

/// Greedy pruning in input order.
pub fn prune_filters(filters: Vec<AbsFilter>, threshold: f64) -> Vec<AbsFilter> {
    if threshold >= 1.0 {
        return filters;
    }
    let mut kept: Vec<AbsFilter> = Vec::new();
    for f in filters {
        if kept.iter().all(|k| cosine(&k.h, &f.h) < threshold) {
            kept.push(f);
        }
    }
    kept
}

/// One filter per abnormal beat of each source patient, fitted against that
/// patient's average normal beat, then pruned.
pub fn build_abs_library(sources: &[&PatientBeats], cfg: &AbsConfig) -> Result<AbsLibrary> {
    let mut filters = Vec::new();
    for src in sources {
        let Some(avg) = average_normal_pair(&src.pairs) else {
            log::debug!("{}: no normal beats, skipped for the filter library", src.patient_id);
            continue;
        };
        for p in src.pairs.iter().filter(|p| p.is_abnormal()) {
            filters.push(estimate_abs_filter(&avg.single, &p.single, cfg.filter_len, cfg.ridge)?);
        }
    }
    Ok(AbsLibrary {
        filter_len: cfg.filter_len,
        ridge: cfg.ridge,
        prune_threshold: cfg.prune_threshold,
        filters: prune_filters(filters, cfg.prune_threshold),
    })
}

/// Convolve the target's average normal beat with `filter` and rescale to
/// unit energy. The result carries the class of the filter's source beat.
pub fn synthesize_abnormal(avg_normal: &Beat, filter: &AbsFilter) -> Result<Beat> {
    let mut values = conv_same(&avg_normal.values, &filter.h);
    normalize(&mut values)?;
    Ok(Beat {
        values,
        label: filter.source_label,
        patient_id: avg_normal.patient_id.clone(),
        origin_index: avg_normal.origin_index,
        kind: SegmentKind::Single,
    })
}

/// Trio channel for a synthesized beat: the target's average normal trio
/// with its central beat region replaced by the synthesized single beat.
///
/// With equal R-R intervals the single window covers the middle 1.8/2.2 of
/// the trio window, which fixes where the single beat is placed.
pub fn synthesize_trio(avg_normal: &BeatPair, synthesized: &Beat) -> Result<Beat> {
    let len = avg_normal.trio.values.len();
    let margin = 0.2 / 2.2;
    let (lo, hi) = (margin * (len - 1) as f64, (1.0 - margin) * (len - 1) as f64);
    let first = lo.ceil() as usize;
    let last = hi.floor() as usize;
    let width = last - first + 1;

    let centre_syn = resample(&synthesized.values, width)?;
    let centre_avg = resample(&avg_normal.single.values, width)?;
    let trio_centre = &avg_normal.trio.values[first..=last];
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = match norm(&centre_avg) {
        n if n > 0.0 => norm(trio_centre) / n,
        _ => 1.0,
    };

    let mut values = avg_normal.trio.values.clone();
    for (k, v) in centre_syn.into_iter().enumerate() {
        values[first + k] = scale * v;
    }
    normalize(&mut values)?;
    Ok(Beat {
        values,
        label: synthesized.label,
        patient_id: synthesized.patient_id.clone(),
        origin_index: synthesized.origin_index,
        kind: SegmentKind::Trio,
    })
}

pub fn synthesize_pair(avg_normal: &BeatPair, filter: &AbsFilter) -> Result<BeatPair> {
    let single = synthesize_abnormal(&avg_normal.single, filter)?;
    let trio = synthesize_trio(avg_normal, &single)?;
    Ok(BeatPair { single, trio })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(len: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..len)
            .map(|i| {
                let t = i as f64 / len as f64;
                (-((t - 0.5) / 0.05).powi(2)).exp() + 0.3 * (-((t - 0.25) / 0.08).powi(2)).exp()
            })
            .collect();
        normalize(&mut v).unwrap();
        v
    }

    fn beat(values: Vec<f64>, label: AamiClass) -> Beat {
        Beat { values, label, patient_id: "x".into(), origin_index: 0, kind: SegmentKind::Single }
    }

    #[test]
    fn identity_filter() {
        let x = bump(128);
        let h = estimate_filter(&x, &x, 1, 1e-12).unwrap();
        assert!((h[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn shift_gives_lag_impulse() {
        let x = bump(128);
        let mut y = vec![0.0; 128];
        y[2..].copy_from_slice(&x[..126]);
        let h = estimate_filter(&x, &y, 5, 1e-12).unwrap();
        let arg = (0..5).max_by(|&a, &b| h[a].abs().total_cmp(&h[b].abs())).unwrap();
        assert_eq!(arg, 2);
        assert!((h[2] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn closed_loop_reconstruction() {
        let x = bump(128);
        let h_true: Vec<f64> = (0..32).map(|j| ((j as f64) * 0.7).cos() * (-(j as f64) / 6.0).exp()).collect();
        let mut a = conv_same(&x, &h_true);
        normalize(&mut a).unwrap();
        let f = estimate_abs_filter(&beat(x.clone(), AamiClass::N), &beat(a.clone(), AamiClass::V), 32, 1e-4).unwrap();
        let syn = synthesize_abnormal(&beat(x, AamiClass::N), &f).unwrap();
        let err: f64 = syn.values.iter().zip(&a).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 0.1, "relative error {err}");
        assert_eq!(syn.label, AamiClass::V);
    }

    #[test]
    fn pruning() {
        let f = |h: Vec<f64>| AbsFilter { h, source_id: "s".into(), source_abnormal_index: 0, source_label: AamiClass::V };
        let fs = vec![f(vec![1.0, 0.0]), f(vec![1.0, 0.0]), f(vec![0.0, 1.0])];
        assert_eq!(prune_filters(fs.clone(), 0.9).len(), 2);
        assert_eq!(prune_filters(fs, 1.0).len(), 3);
    }

    #[test]
    fn impulse_synthesis_returns_input() {
        let x = bump(128);
        let mut h = vec![0.0; 32];
        h[0] = 1.0;
        let filt = AbsFilter { h, source_id: "s".into(), source_abnormal_index: 0, source_label: AamiClass::S };
        let out = synthesize_abnormal(&beat(x.clone(), AamiClass::N), &filt).unwrap();
        assert_eq!(out.values.len(), 128);
        for (a, b) in out.values.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn average_beat_is_an_actual_beat() {
        let a = [0.0, 0.0];
        let b = [1.0, 1.0];
        let c = [0.6, 0.6];
        assert_eq!(average_beat_index(&[&a, &b, &c]), Some(2));
    }
}
