use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::record::EcgRecord;
use super::segment::{extract_pair, BeatPair, SkipReason};
use crate::error::{Error, Result};

pub const DEFAULT_TRAIN_MINUTES: f64 = 5.0;

/// All 48 MIT-BIH Arrhythmia Database record names.
pub const MITBIH_RECORDS: [&str; 48] = [
    "100", "101", "102", "103", "104", "105", "106", "107", "108", "109", "111", "112", "113", "114",
    "115", "116", "117", "118", "119", "121", "122", "123", "124", "200", "201", "202", "203", "205",
    "207", "208", "209", "210", "212", "213", "214", "215", "217", "219", "220", "221", "222", "223",
    "228", "230", "231", "232", "233", "234",
];

/// Paced records (102, 104, 107, 217) and records with high beat-to-beat
/// variation that are left out of the evaluation.
pub fn excluded_patients() -> BTreeSet<&'static str> {
    [
        "102", "104", "107", "217", "105", "114", "201", "202", "207", "209", "213", "222", "223", "234",
    ]
    .into_iter()
    .collect()
}

/// MIT-BIH records that remain after exclusion (34 of them).
pub fn usable_patients() -> Vec<&'static str> {
    let excluded = excluded_patients();
    MITBIH_RECORDS.iter().copied().filter(|r| !excluded.contains(r)).collect()
}

/// Counts of what happened to each annotated peak during extraction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub peaks: usize,
    pub extracted: usize,
    pub skipped_boundary: usize,
    pub skipped_unmapped: usize,
    pub skipped_invalid: usize,
}

/// Every extractable beat of one patient, in record order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientBeats {
    pub patient_id: String,
    pub sampling_rate: f64,
    pub pairs: Vec<BeatPair>,
    pub report: IngestReport,
}

impl PatientBeats {
    pub fn from_record(record: &EcgRecord) -> Self {
        let mut report = IngestReport {
            peaks: record.r_peaks.len(),
            ..Default::default()
        };
        let mut pairs = Vec::with_capacity(record.r_peaks.len());
        for i in 0..record.r_peaks.len() {
            match extract_pair(record, i) {
                Ok(p) => pairs.push(p),
                Err(SkipReason::Boundary) => report.skipped_boundary += 1,
                Err(SkipReason::UnmappedSymbol(s)) => {
                    log::debug!("{}: skipping beat with symbol {s:?}", record.patient_id);
                    report.skipped_unmapped += 1;
                }
                Err(SkipReason::InvalidSegment(_)) => report.skipped_invalid += 1,
            }
        }
        report.extracted = pairs.len();
        PatientBeats {
            patient_id: record.patient_id.clone(),
            sampling_rate: record.sampling_rate,
            pairs,
            report,
        }
    }

    fn in_window(&self, pair: &BeatPair, train_minutes: f64) -> bool {
        (pair.origin_index() as f64 / self.sampling_rate) < train_minutes * 60.0
    }

    /// Normal beats inside the training window.
    pub fn window_normals(&self, train_minutes: f64) -> Vec<BeatPair> {
        self.pairs
            .iter()
            .filter(|p| !p.is_abnormal() && self.in_window(p, train_minutes))
            .cloned()
            .collect()
    }

    pub fn split(&self, train_minutes: f64) -> Result<PatientSplit> {
        let (train_normals, test_beats): (Vec<BeatPair>, Vec<BeatPair>) = self
            .pairs
            .iter()
            .cloned()
            .partition(|p| !p.is_abnormal() && self.in_window(p, train_minutes));
        if train_normals.is_empty() {
            return Err(Error::EmptyTrainingSet {
                patient_id: self.patient_id.clone(),
                train_minutes,
            });
        }
        Ok(PatientSplit {
            patient_id: self.patient_id.clone(),
            train_normals,
            test_beats,
            train_minutes,
        })
    }
}

/// Personal training normals and held-out test beats for one patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientSplit {
    pub patient_id: String,
    /// Normal beats whose R-peak falls in the first `train_minutes`.
    pub train_normals: Vec<BeatPair>,
    /// Abnormal beats from the training window plus every later beat.
    pub test_beats: Vec<BeatPair>,
    pub train_minutes: f64,
}

pub fn make_patient_split(record: &EcgRecord, train_minutes: f64) -> Result<PatientSplit> {
    PatientBeats::from_record(record).split(train_minutes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record_with(labels: &[(usize, &str)], fs: f64) -> EcgRecord {
        let len = labels.last().unwrap().0 + 400;
        let samples = (0..len).map(|i| 1.0 + (i as f64 * 0.03).sin()).collect();
        EcgRecord::new(
            "p",
            samples,
            fs,
            labels.iter().map(|l| l.0).collect(),
            labels.iter().map(|l| l.1.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn exclusion_list() {
        let ex = excluded_patients();
        assert!(ex.contains("102"));
        assert!(!ex.contains("100"));
        assert_eq!(ex.len(), 14);
        assert_eq!(usable_patients().len(), 34);
    }

    #[test]
    fn abnormal_in_window_goes_to_test() {
        // 10 Hz so minute boundaries are easy: 5 min = sample 3000.
        let labels: Vec<(usize, &str)> = (1..60)
            .map(|k| (k * 100, if k == 18 { "V" } else { "N" }))
            .collect();
        let rec = record_with(&labels, 10.0);
        let split = make_patient_split(&rec, 5.0).unwrap();
        assert!(split.train_normals.iter().all(|p| !p.is_abnormal() && p.origin_index() < 3000));
        assert!(split.test_beats.iter().any(|p| p.origin_index() == 1800 && p.is_abnormal()));
        assert!(split.test_beats.iter().all(|p| p.is_abnormal() || p.origin_index() >= 3000));
        let train: BTreeSet<usize> = split.train_normals.iter().map(|p| p.origin_index()).collect();
        assert!(split.test_beats.iter().all(|p| !train.contains(&p.origin_index())));
        // peaks 1..=59 minus the two boundary ones
        assert_eq!(split.train_normals.len() + split.test_beats.len(), 57);
    }

    #[test]
    fn no_window_normals() {
        let labels: Vec<(usize, &str)> = (1..10).map(|k| (k * 100, "V")).collect();
        let rec = record_with(&labels, 10.0);
        assert!(matches!(make_patient_split(&rec, 5.0), Err(Error::EmptyTrainingSet { .. })));
    }

    #[test]
    fn report_counts_skips() {
        let labels = vec![(100, "N"), (200, "B"), (300, "N"), (400, "N")];
        let beats = PatientBeats::from_record(&record_with(&labels, 360.0));
        assert_eq!(beats.report.skipped_boundary, 2);
        assert_eq!(beats.report.skipped_unmapped, 1);
        assert_eq!(beats.report.extracted, 1);
    }
}
