//! Two-stage monitoring: beats with a small null-space residual are
//! accepted as normal straight away, everything else goes to the ensemble.

use serde::{Deserialize, Serialize};

use super::dataset::beats_matrix;
use super::metrics::{evaluate, Metrics};
use crate::classifiers::{ensemble_classify, EnsembleModel, EnsemblePath};
use crate::error::{Error, Result};
use crate::ingest::{BeatLabel, BeatPair};
use crate::sparse::{build_annihilator, learn_dictionary, residual_npe, Annihilator, DictionaryConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeConfig {
    pub npe_fraction_target: f64,
    /// Beats whose NPE energy is strictly below this are declared normal.
    pub npe_low_threshold: f64,
    /// When set, beats at or above this energy are declared abnormal without
    /// running the ensemble.
    pub npe_high_threshold: Option<f64>,
}

fn npe_energies(f: &Annihilator, beats: &[BeatPair]) -> Result<Vec<f64>> {
    beats.iter().map(|p| residual_npe(f, &p.single.values).map(|r| r.energy)).collect()
}

/// Pick the low threshold as the quantile of the calibration normals'
/// NPE energies that leaves `target_fraction` of them strictly below it.
/// With `two_sided`, the high threshold is set just above the largest
/// calibration energy.
///
/// Energies of the beats the dictionary was learned from run low, so this
/// undershoots the fraction on new beats; [`held_out_npe_energies`] with
/// [`calibrate_from_energies`] avoids that.
pub fn calibrate_cascade(f: &Annihilator, train_normals: &[BeatPair], target_fraction: f64, two_sided: bool) -> Result<CascadeConfig> {
    calibrate_from_energies(&npe_energies(f, train_normals)?, target_fraction, two_sided)
}

pub fn calibrate_from_energies(energies: &[f64], target_fraction: f64, two_sided: bool) -> Result<CascadeConfig> {
    if !(0.0..=1.0).contains(&target_fraction) {
        return Err(Error::InvalidArgument(format!("NPE fraction must lie in [0, 1], got {target_fraction}")));
    }
    if energies.is_empty() {
        return Err(Error::InvalidArgument("no calibration beats".into()));
    }
    let mut e = energies.to_vec();
    e.sort_by(f64::total_cmp);
    let k = (target_fraction * e.len() as f64).round() as usize;
    let low = if target_fraction == 0.0 {
        0.0
    } else if k >= e.len() {
        f64::MAX
    } else {
        e[k]
    };
    let high = two_sided.then(|| e[e.len() - 1] * (1.0 + 1e-9));
    Ok(CascadeConfig {
        npe_fraction_target: target_fraction,
        npe_low_threshold: low,
        npe_high_threshold: high,
    })
}

/// NPE energy of every normal under a dictionary that never saw it. The
/// beats are dealt round-robin into `folds` folds and each fold is scored
/// against a dictionary learned from the others.
pub fn held_out_npe_energies(normals: &[BeatPair], cfg: &DictionaryConfig, folds: usize) -> Result<Vec<f64>> {
    if folds < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {folds}")));
    }
    let largest_fold = normals.len().div_ceil(folds);
    if normals.len() - largest_fold < cfg.n_atoms {
        return Err(Error::InvalidArgument(format!(
            "{} normals are too few for {folds}-fold calibration with {} atoms",
            normals.len(),
            cfg.n_atoms
        )));
    }
    let mut energies = vec![0.0; normals.len()];
    for fold in 0..folds {
        let fit_on = beats_matrix(normals.iter().enumerate().filter(|(i, _)| i % folds != fold).map(|(_, p)| &p.single))?;
        let dict = learn_dictionary(&fit_on, cfg, "calibration")?.dictionary;
        let f = build_annihilator(&dict)?;
        for (i, p) in normals.iter().enumerate().filter(|(i, _)| i % folds == fold) {
            energies[i] = residual_npe(&f, &p.single.values)?.energy;
        }
    }
    Ok(energies)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Route {
    NpeNormal,
    NpeAbnormal,
    Ensemble(EnsemblePath),
}

impl Route {
    pub fn npe_only(self) -> bool {
        matches!(self, Route::NpeNormal | Route::NpeAbnormal)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub beats: usize,
    pub npe_only: usize,
    pub forwarded: usize,
    pub npe_fraction: f64,
    /// Σ over NPE-only beats of (CNN forward FLOPs − NPE FLOPs).
    pub flops_saved: u64,
    pub flops_per_beat_ensemble: u64,
    pub flops_per_beat_npe: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeOutcome {
    pub metrics: Metrics,
    pub efficiency: EfficiencyReport,
    pub routes: Vec<Route>,
    pub predictions: Vec<BeatLabel>,
}

pub fn run_cascade(cascade: &CascadeConfig, ens: &EnsembleModel, test: &[BeatPair]) -> Result<CascadeOutcome> {
    let npe_flops = ens.annihilator_flops();
    let cnn_flops = ens.cnn.forward_flops();
    let mut routes = Vec::with_capacity(test.len());
    let mut predictions = Vec::with_capacity(test.len());
    for p in test {
        let e = residual_npe(&ens.annihilator, &p.single.values)?.energy;
        let (route, label) = if e < cascade.npe_low_threshold {
            (Route::NpeNormal, BeatLabel::Normal)
        } else if cascade.npe_high_threshold.is_some_and(|h| e >= h) {
            (Route::NpeAbnormal, BeatLabel::Abnormal)
        } else {
            let d = ensemble_classify(ens, p)?;
            (Route::Ensemble(d.path), d.label)
        };
        routes.push(route);
        predictions.push(label);
    }
    let truth: Vec<BeatLabel> = test.iter().map(|p| p.single.binary()).collect();
    let npe_only = routes.iter().filter(|r| r.npe_only()).count();
    let efficiency = EfficiencyReport {
        beats: test.len(),
        npe_only,
        forwarded: test.len() - npe_only,
        npe_fraction: if test.is_empty() { 0.0 } else { npe_only as f64 / test.len() as f64 },
        flops_saved: npe_only as u64 * cnn_flops.saturating_sub(npe_flops),
        flops_per_beat_ensemble: cnn_flops,
        flops_per_beat_npe: npe_flops,
    };
    Ok(CascadeOutcome {
        metrics: evaluate(&predictions, &truth),
        efficiency,
        routes,
        predictions,
    })
}

/// One point of the efficiency-versus-quality curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyPoint {
    pub target_fraction: f64,
    pub realized_fraction: f64,
    pub f1: f64,
    pub flops_saved: u64,
}

/// Cascade quality and savings at each target fraction, calibrated on
/// `calibration` NPE energies of normal beats.
pub fn efficiency_sweep(
    ens: &EnsembleModel,
    calibration: &[f64],
    test: &[BeatPair],
    fractions: &[f64],
    two_sided: bool,
) -> Result<Vec<EfficiencyPoint>> {
    fractions
        .iter()
        .map(|&f| {
            let cfg = calibrate_from_energies(calibration, f, two_sided)?;
            let out = run_cascade(&cfg, ens, test)?;
            Ok(EfficiencyPoint {
                target_fraction: f,
                realized_fraction: out.efficiency.npe_fraction,
                f1: out.metrics.f1,
                flops_saved: out.efficiency.flops_saved,
            })
        })
        .collect()
}

pub fn default_fractions() -> Vec<f64> {
    (0..10).map(|i| i as f64 / 10.0).collect()
}
