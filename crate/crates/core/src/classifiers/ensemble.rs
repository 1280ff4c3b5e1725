//! Confidence-gated combination of the CNN and the NPE likelihood
//! classifier.

use serde::{Deserialize, Serialize};

use super::cnn::{CnnModel, CnnOutput};
use super::mle::{prob_classify, ResidualDistributions};
use crate::error::Result;
use crate::ingest::{BeatLabel, BeatPair};
use crate::pipeline::{evaluate, Metrics};
use crate::sparse::{npe_flops, residual_npe, Annihilator};

/// Which beat representation feeds the NPE of the probabilistic branch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum NpeChannel {
    #[default]
    Single,
    Trio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub cnn: CnnModel,
    pub dist: ResidualDistributions,
    pub annihilator: Annihilator,
    pub confidence_threshold: f64,
    #[serde(default)]
    pub npe_channel: NpeChannel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnsemblePath {
    Cnn,
    Probabilistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDecision {
    pub label: BeatLabel,
    pub path: EnsemblePath,
    pub confidence: f64,
    /// Only computed when the probabilistic branch runs.
    pub npe_energy: Option<f64>,
}

/// Does a CNN output with this confidence get trusted under threshold `c`?
/// Thresholds at or below 0.5 always trust the CNN and thresholds at or
/// above 1 never do, even when the softmax saturates to exactly 1.
pub fn uses_cnn(c: f64, confidence: f64) -> bool {
    c <= 0.5 || (c < 1.0 && confidence >= c)
}

impl EnsembleModel {
    pub fn npe_energy(&self, pair: &BeatPair) -> Result<f64> {
        let beat = match self.npe_channel {
            NpeChannel::Single => &pair.single,
            NpeChannel::Trio => &pair.trio,
        };
        Ok(residual_npe(&self.annihilator, &beat.values)?.energy)
    }

    /// Cost of one NPE evaluation with this model's annihilator.
    pub fn annihilator_flops(&self) -> u64 {
        let (rows, len) = self.annihilator.f.shape();
        npe_flops(len, len - rows)
    }

    pub fn with_threshold(&self, c: f64) -> Self {
        EnsembleModel {
            confidence_threshold: c,
            ..self.clone()
        }
    }
}

pub fn ensemble_classify(ens: &EnsembleModel, pair: &BeatPair) -> Result<EnsembleDecision> {
    let out = ens.cnn.forward_pair(pair)?;
    decide_with(ens, pair, &out)
}

fn decide_with(ens: &EnsembleModel, pair: &BeatPair, out: &CnnOutput) -> Result<EnsembleDecision> {
    if uses_cnn(ens.confidence_threshold, out.confidence) {
        return Ok(EnsembleDecision {
            label: out.label(),
            path: EnsemblePath::Cnn,
            confidence: out.confidence,
            npe_energy: None,
        });
    }
    let e = ens.npe_energy(pair)?;
    Ok(EnsembleDecision {
        label: prob_classify(&ens.dist, e),
        path: EnsemblePath::Probabilistic,
        confidence: out.confidence,
        npe_energy: Some(e),
    })
}

/// Both branch outputs for one beat, so any threshold can be applied
/// without rerunning either classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchOutputs {
    pub cnn_label: BeatLabel,
    pub confidence: f64,
    pub prob_label: BeatLabel,
}

impl BranchOutputs {
    pub fn compute(ens: &EnsembleModel, pair: &BeatPair) -> Result<Self> {
        let out = ens.cnn.forward_pair(pair)?;
        Ok(BranchOutputs {
            cnn_label: out.label(),
            confidence: out.confidence,
            prob_label: prob_classify(&ens.dist, ens.npe_energy(pair)?),
        })
    }

    pub fn decide(&self, c: f64) -> BeatLabel {
        if uses_cnn(c, self.confidence) {
            self.cnn_label
        } else {
            self.prob_label
        }
    }
}

/// 0.50, 0.51, ..., 0.99.
pub fn confidence_grid() -> Vec<f64> {
    (0..50).map(|i| (50 + i) as f64 / 100.0).collect()
}

/// Metrics of the ensemble at every threshold of the grid.
pub fn confidence_sweep(outputs: &[BranchOutputs], truth: &[BeatLabel]) -> Vec<(f64, Metrics)> {
    confidence_grid()
        .into_iter()
        .map(|c| {
            let pred: Vec<BeatLabel> = outputs.iter().map(|o| o.decide(c)).collect();
            (c, evaluate(&pred, truth))
        })
        .collect()
}

/// Grid threshold with the best F1; ties go to the larger threshold.
pub fn select_confidence_from(outputs: &[BranchOutputs], truth: &[BeatLabel]) -> f64 {
    let mut best = (f64::NEG_INFINITY, 0.5);
    for (c, m) in confidence_sweep(outputs, truth) {
        if m.f1 >= best.0 {
            best = (m.f1, c);
        }
    }
    best.1
}

pub fn select_confidence(ens: &EnsembleModel, val: &[BeatPair]) -> Result<f64> {
    let outputs = val.iter().map(|p| BranchOutputs::compute(ens, p)).collect::<Result<Vec<_>>>()?;
    let truth: Vec<BeatLabel> = val.iter().map(|p| p.single.binary()).collect();
    Ok(select_confidence_from(&outputs, &truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use BeatLabel::{Abnormal as A, Normal as N};

    fn out(cnn: BeatLabel, conf: f64, prob: BeatLabel) -> BranchOutputs {
        BranchOutputs { cnn_label: cnn, confidence: conf, prob_label: prob }
    }

    #[test]
    fn boundary_rules() {
        assert!(uses_cnn(0.5, 0.5));
        assert!(uses_cnn(0.3, 0.5));
        assert!(!uses_cnn(1.0, 1.0));
        assert!(uses_cnn(0.8, 0.8));
        assert!(!uses_cnn(0.8, 0.79));
    }

    #[test]
    fn grid() {
        let g = confidence_grid();
        assert_eq!(g.len(), 50);
        assert_eq!(g[0], 0.5);
        assert_eq!(g[49], 0.99);
    }

    #[test]
    fn prefers_probabilistic_when_it_is_better() {
        let truth = vec![A, N, A, N];
        let outputs = vec![out(N, 0.9, A), out(A, 0.95, N), out(N, 0.7, A), out(A, 0.6, N)];
        assert_eq!(select_confidence_from(&outputs, &truth), 0.99);
    }

    #[test]
    fn prefers_cnn_when_it_is_better() {
        let truth = vec![A, N, A, N];
        let outputs = vec![out(A, 0.9, N), out(N, 0.95, A), out(A, 0.7, N), out(N, 0.5, A)];
        assert_eq!(select_confidence_from(&outputs, &truth), 0.5);
    }
}
