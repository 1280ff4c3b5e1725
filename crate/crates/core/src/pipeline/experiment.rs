//! Per-patient experiments: build the training set, train, calibrate and
//! evaluate every classifier on the patient's held-out beats.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cascade::{default_fractions, efficiency_sweep, held_out_npe_energies, EfficiencyPoint};
use super::dataset::{build_training_set, split_train_val, StrategyConfig, StrategyKind, StrategyState, TargetModel};
use super::metrics::{evaluate, macro_average, Metrics};
use crate::classifiers::{
    cnn_train, confidence_sweep, select_confidence_from, threshold_classify, threshold_grid, BranchOutputs, EnsembleModel,
    NpeChannel, ResidualDistributions, Sample, TrainConfig,
};
use crate::error::{Error, Result};
use crate::ingest::{BeatLabel, BeatPair, PatientBeats, DEFAULT_TRAIN_MINUTES};
use crate::sparse::{auc, residual_npe, ResidualKind, ResidualModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub strategy: StrategyConfig,
    pub train_minutes: f64,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    pub val_ratio: f64,
    /// Residual used by the plain threshold detector.
    pub threshold_kind: ResidualKind,
    pub threshold_step: f64,
    pub cascade_fractions: Vec<f64>,
    pub cascade_two_sided: bool,
    /// Folds for the held-out NPE energies the cascade is calibrated on.
    pub calibration_folds: usize,
    pub npe_channel: NpeChannel,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            strategy: StrategyConfig::default(),
            train_minutes: DEFAULT_TRAIN_MINUTES,
            seeds: (0..10).collect(),
            train: TrainConfig::default(),
            val_ratio: 0.8,
            threshold_kind: ResidualKind::Npe,
            threshold_step: 0.01,
            cascade_fractions: default_fractions(),
            cascade_two_sided: false,
            calibration_folds: 5,
            npe_channel: NpeChannel::Single,
        }
    }
}

/// Test metrics of every classifier for one run or averaged over runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub cnn: Metrics,
    pub ensemble: Metrics,
    pub probabilistic: Metrics,
    pub threshold: Metrics,
}

impl MethodMetrics {
    pub const NAMES: [&'static str; 4] = ["cnn", "ensemble", "probabilistic", "threshold"];

    pub fn get(&self, name: &str) -> Option<&Metrics> {
        match name {
            "cnn" => Some(&self.cnn),
            "ensemble" => Some(&self.ensemble),
            "probabilistic" => Some(&self.probabilistic),
            "threshold" => Some(&self.threshold),
            _ => None,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &Metrics)> {
        Self::NAMES.into_iter().zip([&self.cnn, &self.ensemble, &self.probabilistic, &self.threshold])
    }

    pub fn average(items: &[MethodMetrics]) -> Self {
        let pick = |f: fn(&MethodMetrics) -> Metrics| macro_average(&items.iter().map(f).collect::<Vec<_>>());
        MethodMetrics {
            cnn: pick(|m| m.cnn),
            ensemble: pick(|m| m.ensemble),
            probabilistic: pick(|m| m.probabilistic),
            threshold: pick(|m| m.threshold),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub train_size: usize,
    pub val_size: usize,
    pub dataset_normals: usize,
    pub dataset_abnormals: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub confidence_threshold: f64,
    pub residual_threshold: f64,
    pub distributions: ResidualDistributions,
    pub metrics: MethodMetrics,
    /// Test F1 of the ensemble at every grid confidence threshold.
    pub f1_vs_confidence: Vec<(f64, f64)>,
    /// Test F1 of the residual threshold detector at every grid threshold.
    pub f1_vs_threshold: Vec<(f64, f64)>,
    pub efficiency: Vec<EfficiencyPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientResult {
    pub patient_id: String,
    pub strategy: StrategyKind,
    pub test_beats: usize,
    pub test_abnormal: usize,
    pub runs: Vec<RunResult>,
    pub mean: MethodMetrics,
}

fn mean_series(runs: &[RunResult], get: fn(&RunResult) -> &Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let Some(first) = runs.first() else { return Vec::new() };
    (0..get(first).len())
        .map(|i| {
            let x = get(first)[i].0;
            (x, runs.iter().map(|r| get(r)[i].1).sum::<f64>() / runs.len() as f64)
        })
        .collect()
}

impl PatientResult {
    pub fn f1_vs_confidence(&self) -> Vec<(f64, f64)> {
        mean_series(&self.runs, |r| &r.f1_vs_confidence)
    }

    pub fn f1_vs_threshold(&self) -> Vec<(f64, f64)> {
        mean_series(&self.runs, |r| &r.f1_vs_threshold)
    }

    pub fn efficiency(&self) -> Vec<EfficiencyPoint> {
        let Some(first) = self.runs.first() else { return Vec::new() };
        let n = self.runs.len() as f64;
        (0..first.efficiency.len())
            .map(|i| EfficiencyPoint {
                target_fraction: first.efficiency[i].target_fraction,
                realized_fraction: self.runs.iter().map(|r| r.efficiency[i].realized_fraction).sum::<f64>() / n,
                f1: self.runs.iter().map(|r| r.efficiency[i].f1).sum::<f64>() / n,
                flops_saved: (self.runs.iter().map(|r| r.efficiency[i].flops_saved as f64).sum::<f64>() / n).round() as u64,
            })
            .collect()
    }
}

fn labels(pairs: &[BeatPair]) -> Vec<BeatLabel> {
    pairs.iter().map(|p| p.single.binary()).collect()
}

fn energies(model: &ResidualModel, kind: ResidualKind, pairs: &[BeatPair]) -> Result<Vec<f64>> {
    pairs.iter().map(|p| model.energy(kind, &p.single.values)).collect()
}

/// Threshold with the best F1 on `energies`; ties keep the lowest.
fn best_threshold(grid: &[f64], energies: &[f64], truth: &[BeatLabel]) -> f64 {
    let mut best = (f64::NEG_INFINITY, grid[0]);
    for &t in grid {
        let pred: Vec<BeatLabel> = energies.iter().map(|&e| threshold_classify(t, e)).collect();
        let f1 = evaluate(&pred, truth).f1;
        if f1 > best.0 {
            best = (f1, t);
        }
    }
    best.1
}

/// A target patient with everything computed once and shared across runs.
pub struct PreparedTarget<'a> {
    pub split: crate::ingest::PatientSplit,
    pub model: TargetModel,
    pub state: StrategyState,
    pub others: Vec<&'a PatientBeats>,
    /// NPE energies of the training normals for cascade calibration.
    pub calibration: Vec<f64>,
}

impl<'a> PreparedTarget<'a> {
    pub fn new(target: &PatientBeats, others: Vec<&'a PatientBeats>, cfg: &ExperimentConfig) -> Result<Self> {
        let split = target.split(cfg.train_minutes)?;
        let model = TargetModel::learn(&split, &cfg.strategy)?;
        let state = StrategyState::prepare(&model, &others, &cfg.strategy)?;
        let calibration = match held_out_npe_energies(&split.train_normals, &cfg.strategy.dictionary, cfg.calibration_folds) {
            Ok(e) => e,
            Err(Error::InvalidArgument(why)) => {
                log::warn!("{}: calibrating the cascade in-sample: {why}", split.patient_id);
                energies(&model.residual, ResidualKind::Npe, &split.train_normals)?
            }
            Err(e) => return Err(e),
        };
        Ok(PreparedTarget { split, model, state, others, calibration })
    }

    pub fn run(&self, seed: u64, cfg: &ExperimentConfig) -> Result<RunResult> {
        let set = build_training_set(&self.split, &self.others, &self.state, seed)?;
        let (dataset_normals, dataset_abnormals) = set.counts();
        let (train, val) = split_train_val(&set.pairs, cfg.val_ratio, seed)?;
        let to_samples = |ps: &[BeatPair]| ps.iter().map(Sample::from_pair).collect::<Vec<_>>();
        let train_cfg = TrainConfig { seed, ..cfg.train };
        let (cnn, history) = cnn_train(&to_samples(&train), &to_samples(&val), &train_cfg)?;

        let f = &self.model.residual.annihilator;
        let mut normal_e = Vec::new();
        let mut abnormal_e = Vec::new();
        for p in &train {
            let beat = match cfg.npe_channel {
                NpeChannel::Single => &p.single,
                NpeChannel::Trio => &p.trio,
            };
            let e = residual_npe(f, &beat.values)?.energy;
            if p.is_abnormal() {
                abnormal_e.push(e);
            } else {
                normal_e.push(e);
            }
        }
        let dist = ResidualDistributions::fit(&normal_e, &abnormal_e)
            .map_err(|e| Error::InvalidTrainingSet(format!("cannot fit residual distributions: {e}")))?;
        let mut ens = EnsembleModel {
            cnn,
            dist,
            annihilator: f.clone(),
            confidence_threshold: 0.5,
            npe_channel: cfg.npe_channel,
        };

        let val_out = val.iter().map(|p| BranchOutputs::compute(&ens, p)).collect::<Result<Vec<_>>>()?;
        let val_truth = labels(&val);
        ens.confidence_threshold = select_confidence_from(&val_out, &val_truth);

        let test = &self.split.test_beats;
        let truth = labels(test);
        let test_out = test.iter().map(|p| BranchOutputs::compute(&ens, p)).collect::<Result<Vec<_>>>()?;
        let c = ens.confidence_threshold;
        let pick = |f: fn(&BranchOutputs, f64) -> BeatLabel| test_out.iter().map(|o| f(o, c)).collect::<Vec<_>>();

        let grid = threshold_grid(cfg.threshold_step);
        let kind = cfg.threshold_kind;
        let val_e = energies(&self.model.residual, kind, &val)?;
        let residual_threshold = best_threshold(&grid, &val_e, &val_truth);
        let test_e = energies(&self.model.residual, kind, test)?;
        let thr_pred: Vec<BeatLabel> = test_e.iter().map(|&e| threshold_classify(residual_threshold, e)).collect();

        let metrics = MethodMetrics {
            cnn: evaluate(&pick(|o, _| o.cnn_label), &truth),
            ensemble: evaluate(&pick(|o, c| o.decide(c)), &truth),
            probabilistic: evaluate(&pick(|o, _| o.prob_label), &truth),
            threshold: evaluate(&thr_pred, &truth),
        };
        let f1_vs_confidence = confidence_sweep(&test_out, &truth).into_iter().map(|(c, m)| (c, m.f1)).collect();
        let f1_vs_threshold = grid
            .iter()
            .map(|&t| {
                let pred: Vec<BeatLabel> = test_e.iter().map(|&e| threshold_classify(t, e)).collect();
                (t, evaluate(&pred, &truth).f1)
            })
            .collect();
        let efficiency = efficiency_sweep(&ens, &self.calibration, test, &cfg.cascade_fractions, cfg.cascade_two_sided)?;

        Ok(RunResult {
            seed,
            train_size: train.len(),
            val_size: val.len(),
            dataset_normals,
            dataset_abnormals,
            epochs_run: history.val_loss.len(),
            best_epoch: history.best_epoch,
            confidence_threshold: c,
            residual_threshold,
            distributions: dist,
            metrics,
            f1_vs_confidence,
            f1_vs_threshold,
            efficiency,
        })
    }
}

pub fn run_patient_experiment(target: &PatientBeats, others: &[&PatientBeats], cfg: &ExperimentConfig) -> Result<PatientResult> {
    if cfg.seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one seed is required".into()));
    }
    let prepared = PreparedTarget::new(target, others.to_vec(), cfg)?;
    let runs = cfg.seeds.iter().map(|&s| prepared.run(s, cfg)).collect::<Result<Vec<_>>>()?;
    let mean = MethodMetrics::average(&runs.iter().map(|r| r.metrics).collect::<Vec<_>>());
    let test = &prepared.split.test_beats;
    Ok(PatientResult {
        patient_id: target.patient_id.clone(),
        strategy: cfg.strategy.kind,
        test_beats: test.len(),
        test_abnormal: test.iter().filter(|p| p.is_abnormal()).count(),
        runs,
        mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPatient {
    pub patient_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusResult {
    pub strategy: StrategyKind,
    pub patients: Vec<PatientResult>,
    pub skipped: Vec<SkippedPatient>,
    /// Macro average over patients of each patient's run mean.
    pub macro_metrics: MethodMetrics,
}

impl CorpusResult {
    pub fn f1_vs_confidence(&self) -> Vec<(f64, f64)> {
        average_curves(self.patients.iter().map(|p| p.f1_vs_confidence()).collect())
    }

    pub fn f1_vs_threshold(&self) -> Vec<(f64, f64)> {
        average_curves(self.patients.iter().map(|p| p.f1_vs_threshold()).collect())
    }

    pub fn efficiency(&self) -> Vec<EfficiencyPoint> {
        let curves: Vec<Vec<EfficiencyPoint>> = self.patients.iter().map(|p| p.efficiency()).collect();
        let Some(first) = curves.first() else { return Vec::new() };
        let n = curves.len() as f64;
        (0..first.len())
            .map(|i| EfficiencyPoint {
                target_fraction: first[i].target_fraction,
                realized_fraction: curves.iter().map(|c| c[i].realized_fraction).sum::<f64>() / n,
                f1: curves.iter().map(|c| c[i].f1).sum::<f64>() / n,
                flops_saved: curves.iter().map(|c| c[i].flops_saved).sum(),
            })
            .collect()
    }
}

fn average_curves(curves: Vec<Vec<(f64, f64)>>) -> Vec<(f64, f64)> {
    let Some(first) = curves.first() else { return Vec::new() };
    let n = curves.len() as f64;
    (0..first.len())
        .map(|i| (first[i].0, curves.iter().map(|c| c[i].1).sum::<f64>() / n))
        .collect()
}

/// Run every listed target against the rest of `corpus`. Targets that fail
/// with a data problem are reported in `skipped` instead of aborting.
pub fn run_corpus(corpus: &[PatientBeats], targets: &[String], cfg: &ExperimentConfig) -> Result<CorpusResult> {
    let outcomes: Vec<(String, Result<PatientResult>)> = targets
        .par_iter()
        .map(|id| {
            let Some(target) = corpus.iter().find(|p| &p.patient_id == id) else {
                return (id.clone(), Err(Error::InvalidArgument(format!("patient {id} not in corpus"))));
            };
            let others: Vec<&PatientBeats> = corpus.iter().filter(|p| &p.patient_id != id).collect();
            (id.clone(), run_patient_experiment(target, &others, cfg))
        })
        .collect();

    let mut patients = Vec::new();
    let mut skipped = Vec::new();
    for (id, r) in outcomes {
        match r {
            Ok(p) => patients.push(p),
            Err(e @ (Error::EmptyTrainingSet { .. } | Error::InvalidTrainingSet(_) | Error::RankDeficient { .. } | Error::InvalidArgument(_))) => {
                log::warn!("patient {id} skipped: {e}");
                skipped.push(SkippedPatient { patient_id: id, reason: e.to_string() });
            }
            Err(e) => return Err(e),
        }
    }
    let macro_metrics = MethodMetrics::average(&patients.iter().map(|p| p.mean).collect::<Vec<_>>());
    Ok(CorpusResult {
        strategy: cfg.strategy.kind,
        patients,
        skipped,
        macro_metrics,
    })
}

/// AUC of each residual energy as an abnormality score, pooled over the
/// test beats of every target that can be split.
pub fn residual_auc(corpus: &[PatientBeats], targets: &[String], cfg: &ExperimentConfig) -> Result<Vec<(ResidualKind, f64)>> {
    let per_patient: Vec<Option<(Vec<[f64; 4]>, Vec<bool>)>> = targets
        .par_iter()
        .map(|id| {
            let target = corpus
                .iter()
                .find(|p| &p.patient_id == id)
                .ok_or_else(|| Error::InvalidArgument(format!("patient {id} not in corpus")))?;
            let split = match target.split(cfg.train_minutes) {
                Ok(s) => s,
                Err(Error::EmptyTrainingSet { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let model = TargetModel::learn(&split, &cfg.strategy)?.residual;
            let scores = split
                .test_beats
                .iter()
                .map(|p| {
                    let mut row = [0.0; 4];
                    for (k, kind) in ResidualKind::ALL.into_iter().enumerate() {
                        row[k] = model.energy(kind, &p.single.values)?;
                    }
                    Ok(row)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Some((scores, split.test_beats.iter().map(|p| p.is_abnormal()).collect())))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut scores, mut truth) = (Vec::new(), Vec::new());
    for (s, t) in per_patient.into_iter().flatten() {
        scores.extend(s);
        truth.extend(t);
    }
    ResidualKind::ALL
        .into_iter()
        .enumerate()
        .map(|(k, kind)| Ok((kind, auc(&scores.iter().map(|r| r[k]).collect::<Vec<_>>(), &truth)?)))
        .collect()
}
