//! Personalized training sets for one target patient.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptation::{
    average_normal_pair, build_abs_library, learn_mtm, synthesize_pair, AbsConfig, AbsLibrary, MorphTransform, MtmConfig,
};
use crate::error::{Error, Result};
use crate::ingest::{Beat, BeatPair, PatientBeats, PatientSplit, BEAT_LEN};
use crate::linalg::columns_to_matrix;
use crate::sparse::{learn_dictionary, Dictionary, DictionaryConfig, ResidualModel, DEFAULT_RIDGE, DEFAULT_SPARSITY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Baseline,
    Abs,
    #[serde(rename = "da")]
    DomainAdaptation,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Baseline => "baseline",
            StrategyKind::Abs => "abs",
            StrategyKind::DomainAdaptation => "da",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(StrategyKind::Baseline),
            "abs" => Ok(StrategyKind::Abs),
            "da" | "domain-adaptation" | "domainadaptation" => Ok(StrategyKind::DomainAdaptation),
            other => Err(Error::InvalidArgument(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub dictionary: DictionaryConfig,
    pub mtm: MtmConfig,
    pub abs: AbsConfig,
    /// Source normals used to fit each transform. Beats beyond this count
    /// are dropped, keeping the gradient step stable for the default rate.
    pub mtm_source_beats: usize,
    /// Ridge weight of the least-squares residual.
    pub ridge: f64,
    /// Atoms used by the sparse approximation residual.
    pub sparsity: usize,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            kind: StrategyKind::DomainAdaptation,
            dictionary: DictionaryConfig::default(),
            mtm: MtmConfig::default(),
            abs: AbsConfig::default(),
            mtm_source_beats: 300,
            ridge: DEFAULT_RIDGE,
            sparsity: DEFAULT_SPARSITY,
        }
    }
}

pub fn beats_matrix<'a>(beats: impl IntoIterator<Item = &'a Beat>) -> Result<DMatrix<f64>> {
    columns_to_matrix(beats.into_iter().map(|b| b.values.as_slice()), BEAT_LEN)
}

/// Dictionaries of a target patient learned from their training normals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetModel {
    pub patient_id: String,
    /// Residual detectors on the single-beat dictionary.
    pub residual: ResidualModel,
    pub trio_dictionary: Dictionary,
}

impl TargetModel {
    pub fn learn(split: &PatientSplit, cfg: &StrategyConfig) -> Result<Self> {
        let singles = beats_matrix(split.train_normals.iter().map(|p| &p.single))?;
        let trios = beats_matrix(split.train_normals.iter().map(|p| &p.trio))?;
        let single = learn_dictionary(&singles, &cfg.dictionary, &split.patient_id)?.dictionary;
        let trio = learn_dictionary(&trios, &cfg.dictionary, &split.patient_id)?.dictionary;
        Ok(TargetModel {
            patient_id: split.patient_id.clone(),
            residual: ResidualModel::new(single, cfg.ridge, cfg.sparsity)?,
            trio_dictionary: trio,
        })
    }

    pub fn single_dictionary(&self) -> &Dictionary {
        &self.residual.dictionary
    }
}

/// Transforms of one source patient towards the target, one per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceTransforms {
    pub source_id: String,
    pub single: MorphTransform,
    pub trio: MorphTransform,
}

impl SourceTransforms {
    pub fn apply(&self, pair: &BeatPair) -> BeatPair {
        let mut out = pair.clone();
        out.single.values = self.single.apply(&pair.single.values);
        out.trio.values = self.trio.apply(&pair.trio.values);
        out
    }
}

/// Normals a transform is fitted on: the source's first normals in record
/// order, up to `cap`.
fn mtm_sources(src: &PatientBeats, cap: usize) -> Vec<&BeatPair> {
    src.pairs.iter().filter(|p| !p.is_abnormal()).take(cap).collect()
}

pub fn learn_source_transforms(target: &TargetModel, sources: &[&PatientBeats], cfg: &StrategyConfig) -> Result<Vec<SourceTransforms>> {
    sources
        .par_iter()
        .map(|src| {
            let normals = mtm_sources(src, cfg.mtm_source_beats);
            if normals.is_empty() {
                return Err(Error::InvalidArgument(format!("source {} has no normal beats", src.patient_id)));
            }
            let s = beats_matrix(normals.iter().map(|p| &p.single))?;
            let t = beats_matrix(normals.iter().map(|p| &p.trio))?;
            Ok(SourceTransforms {
                source_id: src.patient_id.clone(),
                single: learn_mtm(target.single_dictionary(), &s, &src.patient_id, &cfg.mtm)?,
                trio: learn_mtm(&target.trio_dictionary, &t, &src.patient_id, &cfg.mtm)?,
            })
        })
        .collect()
}

/// Everything a strategy needs beyond the target split, computed once per
/// target and reused across runs.
#[derive(Debug, Clone)]
pub enum StrategyState {
    Baseline,
    Abs(AbsLibrary),
    DomainAdaptation(Vec<SourceTransforms>),
}

impl StrategyState {
    pub fn prepare(target: &TargetModel, others: &[&PatientBeats], cfg: &StrategyConfig) -> Result<Self> {
        Ok(match cfg.kind {
            StrategyKind::Baseline => StrategyState::Baseline,
            StrategyKind::Abs => StrategyState::Abs(build_abs_library(others, &cfg.abs)?),
            StrategyKind::DomainAdaptation => StrategyState::DomainAdaptation(learn_source_transforms(target, others, cfg)?),
        })
    }
}

/// Labelled (single, trio) pairs used to train one target's classifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub target_id: String,
    pub strategy: StrategyKind,
    pub pairs: Vec<BeatPair>,
}

impl TrainingSet {
    pub fn counts(&self) -> (usize, usize) {
        let abnormal = self.pairs.iter().filter(|p| p.is_abnormal()).count();
        (self.pairs.len() - abnormal, abnormal)
    }
}

/// Target normals plus material from other patients:
///
/// * Baseline: every other-patient abnormal, and other-patient normals
///   drawn uniformly so both classes end up the same size.
/// * ABS: one synthesized abnormal per library filter, built on the
///   target's average normal beat.
/// * Domain adaptation: the baseline selection with every other-patient
///   beat passed through its source's transform.
pub fn build_training_set(
    split: &PatientSplit,
    others: &[&PatientBeats],
    state: &StrategyState,
    seed: u64,
) -> Result<TrainingSet> {
    if others.is_empty() {
        return Err(Error::InvalidArgument("no other patients to draw training beats from".into()));
    }
    if split.train_normals.is_empty() {
        return Err(Error::EmptyTrainingSet {
            patient_id: split.patient_id.clone(),
            train_minutes: split.train_minutes,
        });
    }
    let mut pairs = split.train_normals.clone();
    let kind = match state {
        StrategyState::Baseline => {
            pairs.extend(balanced_selection(split, others, seed).into_iter().map(|(_, p)| p.clone()));
            StrategyKind::Baseline
        }
        StrategyState::DomainAdaptation(transforms) => {
            for (src, p) in balanced_selection(split, others, seed) {
                let t = transforms
                    .iter()
                    .find(|t| t.source_id == src)
                    .ok_or_else(|| Error::InvalidArgument(format!("no transform for source {src}")))?;
                pairs.push(t.apply(p));
            }
            StrategyKind::DomainAdaptation
        }
        StrategyState::Abs(library) => {
            let avg = average_normal_pair(&split.train_normals).expect("train normals are non-empty");
            for f in &library.filters {
                pairs.push(synthesize_pair(avg, f)?);
            }
            StrategyKind::Abs
        }
    };
    Ok(TrainingSet {
        target_id: split.patient_id.clone(),
        strategy: kind,
        pairs,
    })
}

/// Other-patient beats for the baseline composition, tagged with their
/// source id.
fn balanced_selection<'a>(split: &PatientSplit, others: &[&'a PatientBeats], seed: u64) -> Vec<(&'a str, &'a BeatPair)> {
    let mut abnormal = Vec::new();
    let mut normal = Vec::new();
    for o in others {
        for p in &o.pairs {
            if p.is_abnormal() {
                abnormal.push((o.patient_id.as_str(), p));
            } else {
                normal.push((o.patient_id.as_str(), p));
            }
        }
    }
    let wanted = abnormal.len().saturating_sub(split.train_normals.len()).min(normal.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = (0..normal.len()).collect::<Vec<_>>().choose_multiple(&mut rng, wanted).copied().collect();
    chosen.sort_unstable();
    abnormal.extend(chosen.into_iter().map(|i| normal[i]));
    abnormal
}

/// Class-stratified split; each class is shuffled with `seed` and its
/// first `round(ratio·n)` members go to training.
pub fn split_train_val(pairs: &[BeatPair], ratio: f64, seed: u64) -> Result<(Vec<BeatPair>, Vec<BeatPair>)> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidArgument(format!("train ratio must lie in [0, 1], got {ratio}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for abnormal in [false, true] {
        let mut class: Vec<&BeatPair> = pairs.iter().filter(|p| p.is_abnormal() == abnormal).collect();
        class.shuffle(&mut rng);
        let k = (ratio * class.len() as f64).round() as usize;
        train.extend(class[..k].iter().map(|p| (*p).clone()));
        val.extend(class[k..].iter().map(|p| (*p).clone()));
    }
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{AamiClass, SegmentKind};

    fn pair(label: AamiClass, id: &str, idx: usize) -> BeatPair {
        let beat = |kind| Beat {
            values: vec![1.0 / (BEAT_LEN as f64).sqrt(); BEAT_LEN],
            label,
            patient_id: id.into(),
            origin_index: idx,
            kind,
        };
        BeatPair { single: beat(SegmentKind::Single), trio: beat(SegmentKind::Trio) }
    }

    #[test]
    fn stratified_split_sizes() {
        let pairs: Vec<BeatPair> = (0..100)
            .map(|i| pair(if i % 4 == 0 { AamiClass::V } else { AamiClass::N }, "p", i))
            .collect();
        let (train, val) = split_train_val(&pairs, 0.8, 3).unwrap();
        assert_eq!((train.len(), val.len()), (80, 20));
        assert_eq!(train.iter().filter(|p| p.is_abnormal()).count(), 20);
        assert_eq!(split_train_val(&pairs, 0.8, 3).unwrap(), (train, val));
    }

    #[test]
    fn baseline_is_balanced() {
        let split = PatientSplit {
            patient_id: "t".into(),
            train_normals: (0..5).map(|i| pair(AamiClass::N, "t", i)).collect(),
            test_beats: vec![],
            train_minutes: 5.0,
        };
        let other = PatientBeats {
            patient_id: "o".into(),
            sampling_rate: 360.0,
            pairs: (0..60).map(|i| pair(if i % 3 == 0 { AamiClass::S } else { AamiClass::N }, "o", i)).collect(),
            report: Default::default(),
        };
        let set = build_training_set(&split, &[&other], &StrategyState::Baseline, 1).unwrap();
        let (n, a) = set.counts();
        assert_eq!(n, a);
        assert_eq!(a, 20);
        assert!(build_training_set(&split, &[], &StrategyState::Baseline, 1).is_err());
    }

    #[test]
    fn strategy_names() {
        assert_eq!("da".parse::<StrategyKind>().unwrap(), StrategyKind::DomainAdaptation);
        assert_eq!(StrategyKind::Abs.to_string(), "abs");
    }
}
