//! Record parsing, beat segmentation and per-patient train/test splits.

mod aami;
mod csv_format;
mod record;
mod segment;
mod split;
mod synth;
pub mod wfdb;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use aami::{AamiClass, BeatLabel};
pub use csv_format::{parse_csv, peaks_path, write_csv};
pub use record::EcgRecord;
pub use segment::{
    extract_beat_trio, extract_pair, extract_single_beat, normalize, resample, sample_bounds, single_bounds,
    trio_bounds, Beat, BeatPair, BeatTrio, SegmentKind, SkipReason, BEAT_LEN,
};
pub use split::{
    excluded_patients, make_patient_split, usable_patients, IngestReport, PatientBeats, PatientSplit,
    DEFAULT_TRAIN_MINUTES, MITBIH_RECORDS,
};
pub use synth::{synth_corpus, SynthConfig};
pub use wfdb::{parse_wfdb, write_wfdb};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordFormat {
    Wfdb,
    Csv,
}

impl std::str::FromStr for RecordFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wfdb" => Ok(RecordFormat::Wfdb),
            "csv" => Ok(RecordFormat::Csv),
            other => Err(Error::InvalidArgument(format!("unknown record format {other:?}"))),
        }
    }
}

/// Options for reading a directory of records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub format: RecordFormat,
    pub channel: usize,
    /// Used for CSV records, which carry no rate of their own.
    pub csv_sampling_rate: f64,
    /// Record ids to read; `None` reads everything found.
    pub only: Option<Vec<String>>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            format: RecordFormat::Wfdb,
            channel: 0,
            csv_sampling_rate: 360.0,
            only: None,
        }
    }
}

/// Read every record in `dir` and extract its beats. Records come back
/// sorted by id.
pub fn load_directory(dir: &Path, opts: &LoadOptions) -> Result<Vec<PatientBeats>> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let keep = match opts.format {
            RecordFormat::Wfdb => name.ends_with(".hea"),
            RecordFormat::Csv => name.ends_with(".csv") && !name.ends_with(".peaks.csv"),
        };
        if !keep {
            continue;
        }
        let stem = name.split('.').next().unwrap_or_default().to_string();
        if opts.only.as_ref().is_some_and(|ids| !ids.contains(&stem)) {
            continue;
        }
        paths.push(path);
    }
    paths.sort();

    let mut beats = paths
        .par_iter()
        .map(|p| {
            let rec = match opts.format {
                RecordFormat::Wfdb => parse_wfdb(p, opts.channel)?,
                RecordFormat::Csv => parse_csv(p, opts.csv_sampling_rate)?,
            };
            Ok(PatientBeats::from_record(&rec))
        })
        .collect::<Result<Vec<_>>>()?;
    beats.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    Ok(beats)
}

/// Beats of a whole corpus as written by the `ingest` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatStore {
    pub version: u32,
    pub patients: Vec<PatientBeats>,
}

impl BeatStore {
    pub const VERSION: u32 = 1;

    pub fn new(patients: Vec<PatientBeats>) -> Self {
        BeatStore {
            version: Self::VERSION,
            patients,
        }
    }

    pub fn patient(&self, id: &str) -> Option<&PatientBeats> {
        self.patients.iter().find(|p| p.patient_id == id)
    }
}
