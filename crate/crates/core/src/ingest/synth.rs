//! Deterministic synthetic ECG corpora for tests and examples.
//!
//! Each patient gets a P-QRS-T template built from a sum of Gaussians with
//! its own random amplitudes, widths and offsets. Abnormal beats are the
//! patient's template passed through one of four corpus-wide FIR
//! degradation filters (one per abnormal AAMI class), so the same disease
//! distorts different patients' morphologies the same way. The ventricular
//! filter widens the complex, and patients differ in their own QRS width,
//! so one patient's normal beat can look like another's ventricular beat.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::aami::AamiClass;
use super::record::EcgRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_patients: usize,
    pub beats_per_patient: usize,
    pub abnormal_rate: f64,
    pub sampling_rate: f64,
    /// Standard deviation of additive white noise, in signal units.
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_patients: 6,
            beats_per_patient: 600,
            abnormal_rate: 0.2,
            sampling_rate: 360.0,
            noise: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Wave {
    amp: f64,
    center: f64,
    width: f64,
}

#[derive(Debug, Clone)]
struct Morphology {
    waves: Vec<Wave>,
    mean_rr: f64,
}

impl Morphology {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let mut waves = vec![
            Wave { amp: rng.random_range(0.05..0.25), center: rng.random_range(-0.25..-0.15), width: rng.random_range(0.015..0.035) },
            Wave { amp: rng.random_range(-0.25..0.0), center: -rng.random_range(0.02..0.04), width: rng.random_range(0.008..0.015) },
            Wave { amp: rng.random_range(0.6..1.4), center: 0.0, width: rng.random_range(0.008..0.02) },
            Wave { amp: rng.random_range(-0.5..-0.05), center: rng.random_range(0.025..0.045), width: rng.random_range(0.008..0.02) },
            Wave { amp: rng.random_range(-0.3..0.5), center: rng.random_range(0.2..0.32), width: rng.random_range(0.03..0.07) },
        ];
        // Secondary R wave, as in right bundle branch block morphologies.
        if rng.random_bool(0.3) {
            waves.push(Wave { amp: rng.random_range(0.2..0.6), center: rng.random_range(0.04..0.07), width: rng.random_range(0.01..0.02) });
        }
        // Per-patient conduction speed; slow patients have wide normal
        // complexes that resemble other patients' ventricular beats.
        let widen = rng.random_range(0.6..2.6);
        for w in waves.iter_mut().skip(1).filter(|w| w.width < 0.025) {
            w.width *= widen;
            w.center *= widen;
        }
        Morphology { waves, mean_rr: rng.random_range(0.65..1.0) }
    }

    fn eval(&self, t: f64) -> f64 {
        self.waves
            .iter()
            .map(|w| w.amp * (-0.5 * ((t - w.center) / w.width).powi(2)).exp())
            .sum()
    }
}

/// Random FIR with a dominant tap near its middle so the distorted beat
/// keeps its R-peak roughly in place.
fn degradation_filter(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let len = rng.random_range(7..16usize);
    let mid = len / 2;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut h: Vec<f64> = (0..len)
        .map(|j| {
            let d = (j as f64 - mid as f64).abs();
            0.4 * normal.sample(rng) * (-d / (len as f64 / 3.0)).exp()
        })
        .collect();
    h[mid] += if rng.random_bool(0.3) { -1.0 } else { 1.0 };
    h
}

/// Ventricular beats are conducted slowly: a Gaussian smoothing kernel
/// widens the complex, with a little random structure on top.
fn ventricular_filter(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sigma = rng.random_range(2.5..4.0);
    let len = 17;
    let mid = len / 2;
    let normal = Normal::new(0.0, 0.05).expect("valid sd");
    let raw: Vec<f64> = (0..len)
        .map(|j| (-0.5 * ((j as f64 - mid as f64) / sigma).powi(2)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|v| 1.6 * v / sum + normal.sample(rng)).collect()
}

fn same_conv_centered(x: &[f64], h: &[f64]) -> Vec<f64> {
    let mid = h.len() / 2;
    (0..x.len())
        .map(|i| {
            h.iter()
                .enumerate()
                .filter_map(|(j, &hj)| {
                    let k = i as isize + mid as isize - j as isize;
                    (k >= 0 && (k as usize) < x.len()).then(|| hj * x[k as usize])
                })
                .sum()
        })
        .collect()
}

fn abnormal_class(rng: &mut ChaCha8Rng) -> AamiClass {
    let u: f64 = rng.random();
    match u {
        u if u < 0.45 => AamiClass::V,
        u if u < 0.80 => AamiClass::S,
        u if u < 0.90 => AamiClass::F,
        _ => AamiClass::Q,
    }
}

fn class_slot(c: AamiClass) -> usize {
    match c {
        AamiClass::V => 0,
        AamiClass::S => 1,
        AamiClass::F => 2,
        _ => 3,
    }
}

/// Generate `n_patients` single-channel records named `syn00`, `syn01`, ...
pub fn synth_corpus(cfg: &SynthConfig) -> Result<Vec<EcgRecord>> {
    if !(0.0..=1.0).contains(&cfg.abnormal_rate) {
        return Err(Error::InvalidArgument(format!(
            "abnormal_rate must lie in [0, 1], got {}",
            cfg.abnormal_rate
        )));
    }
    if cfg.sampling_rate <= 0.0 {
        return Err(Error::InvalidArgument("sampling rate must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut filters = vec![ventricular_filter(&mut rng)];
    filters.extend((1..4).map(|_| degradation_filter(&mut rng)));

    (0..cfg.n_patients)
        .map(|p| {
            let mut prng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(p as u64 + 1)));
            synth_record(&format!("syn{p:02}"), cfg, &filters, &mut prng)
        })
        .collect()
}

fn synth_record(id: &str, cfg: &SynthConfig, filters: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Result<EcgRecord> {
    let fs = cfg.sampling_rate;
    let morph = Morphology::random(rng);
    let jitter = Normal::new(0.0, 0.03).expect("valid sd");
    let noise = Normal::new(0.0, cfg.noise.max(0.0)).expect("valid sd");

    let labels: Vec<AamiClass> = (0..cfg.beats_per_patient)
        .map(|_| {
            if rng.random_bool(cfg.abnormal_rate) {
                abnormal_class(rng)
            } else {
                AamiClass::N
            }
        })
        .collect();

    // R-peak times; premature ectopics shorten the preceding interval and
    // lengthen the following one.
    let mut times = Vec::with_capacity(labels.len());
    let mut t = 0.5;
    let mut carry = 1.0;
    for label in &labels {
        let premature = matches!(label, AamiClass::V | AamiClass::S);
        let factor = if premature { 0.8 } else { 1.0 };
        t += morph.mean_rr * (1.0 + jitter.sample(rng)) * factor * carry;
        carry = if premature { 1.2 } else { 1.0 };
        times.push(t);
    }
    let total = times.last().copied().unwrap_or(0.5) + 1.0;
    let len = (total * fs).ceil() as usize;

    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let mut samples: Vec<f64> = (0..len)
        .map(|i| 0.05 * (std::f64::consts::TAU * 0.3 * i as f64 / fs + phase).sin() + noise.sample(rng))
        .collect();

    let (before, after) = ((0.35 * fs) as isize, (0.5 * fs) as isize);
    let mut r_peaks = Vec::with_capacity(labels.len());
    for (&tr, &label) in times.iter().zip(&labels) {
        let center = (tr * fs).round() as isize;
        let amp = 1.0 + jitter.sample(rng);
        let window: Vec<f64> = (-before..=after)
            .map(|k| amp * morph.eval(k as f64 / fs))
            .collect();
        let shaped = if label.is_abnormal() {
            let base = &filters[class_slot(label)];
            let h: Vec<f64> = base.iter().map(|&v| v * (1.0 + 1.5 * jitter.sample(rng))).collect();
            same_conv_centered(&window, &h)
        } else {
            window
        };
        for (k, v) in (-before..=after).zip(shaped) {
            let idx = center + k;
            if idx >= 0 && (idx as usize) < len {
                samples[idx as usize] += v;
            }
        }
        r_peaks.push(center as usize);
    }

    let symbols = labels.iter().map(|c| c.symbol().to_string()).collect();
    EcgRecord::new(id, samples, fs, r_peaks, symbols)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64, rate: f64, beats: usize) -> SynthConfig {
        SynthConfig {
            seed,
            n_patients: 2,
            beats_per_patient: beats,
            abnormal_rate: rate,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = synth_corpus(&small(7, 0.2, 100)).unwrap();
        let b = synth_corpus(&small(7, 0.2, 100)).unwrap();
        assert_eq!(a, b);
        let c = synth_corpus(&small(8, 0.2, 100)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_rate_all_normal() {
        let recs = synth_corpus(&small(1, 0.0, 200)).unwrap();
        assert!(recs.iter().flat_map(|r| &r.symbols).all(|s| s == "N"));
    }

    #[test]
    fn rate_out_of_range() {
        assert!(matches!(synth_corpus(&small(1, 1.5, 10)), Err(Error::InvalidArgument(_))));
        assert!(matches!(synth_corpus(&small(1, -0.1, 10)), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn abnormal_count_within_binomial_interval() {
        // n = 1000, p = 0.2: mean 200, sd = sqrt(160) ~ 12.65; the two-sided
        // 99% interval is 200 +- 2.576 * 12.65 = [167.4, 232.6].
        let cfg = SynthConfig { seed: 3, n_patients: 1, beats_per_patient: 1000, abnormal_rate: 0.2, ..Default::default() };
        let rec = &synth_corpus(&cfg).unwrap()[0];
        let abnormal = rec.symbols.iter().filter(|s| *s != "N").count();
        assert!((168..=232).contains(&abnormal), "abnormal count {abnormal}");
    }
}
