//! Plain-text fallback: `<id>.csv` with `sample_index,amplitude` rows and a
//! companion `<id>.peaks.csv` with `peak_index,symbol` rows.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::record::EcgRecord;
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct SampleRow {
    sample_index: usize,
    amplitude: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct PeakRow {
    peak_index: usize,
    symbol: String,
}

/// Path of the peaks file that accompanies a signal CSV.
pub fn peaks_path(signal_path: &Path) -> PathBuf {
    let stem = signal_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    signal_path.with_file_name(format!("{stem}.peaks.csv"))
}

pub fn parse_csv(path: &Path, sampling_rate: f64) -> Result<EcgRecord> {
    let peaks_file = peaks_path(path);
    if !peaks_file.exists() {
        return Err(Error::parse(&peaks_file, "peaks file missing"));
    }

    let mut samples = Vec::new();
    let mut rdr = csv::Reader::from_path(path)?;
    for (i, row) in rdr.deserialize::<SampleRow>().enumerate() {
        let row = row.map_err(|e| Error::parse(path, e.to_string()))?;
        if row.sample_index != i {
            return Err(Error::parse(
                path,
                format!("row {i} has sample_index {}", row.sample_index),
            ));
        }
        if !row.amplitude.is_finite() {
            return Err(Error::parse(path, format!("non-finite amplitude at row {i}")));
        }
        samples.push(row.amplitude);
    }

    let (mut r_peaks, mut symbols) = (Vec::new(), Vec::new());
    let mut rdr = csv::Reader::from_path(&peaks_file)?;
    for row in rdr.deserialize::<PeakRow>() {
        let row = row.map_err(|e| Error::parse(&peaks_file, e.to_string()))?;
        r_peaks.push(row.peak_index);
        symbols.push(row.symbol);
    }

    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    EcgRecord::new(id, samples, sampling_rate, r_peaks, symbols)
        .map_err(|e| Error::parse(path, e.to_string()))
}

/// Write `<id>.csv` and `<id>.peaks.csv` into `dir`; returns the signal path.
pub fn write_csv(record: &EcgRecord, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let signal = dir.join(format!("{}.csv", record.patient_id));
    let mut w = csv::Writer::from_path(&signal)?;
    for (sample_index, &amplitude) in record.samples.iter().enumerate() {
        w.serialize(SampleRow {
            sample_index,
            amplitude,
        })?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(peaks_path(&signal))?;
    for (&peak_index, symbol) in record.r_peaks.iter().zip(&record.symbols) {
        w.serialize(PeakRow {
            peak_index,
            symbol: symbol.clone(),
        })?;
    }
    w.flush()?;
    Ok(signal)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ten_rows(dir: &Path) -> PathBuf {
        let p = dir.join("rec.csv");
        let mut body = String::from("sample_index,amplitude\n");
        for i in 0..10 {
            body.push_str(&format!("{i},{}\n", i as f64 * 0.1));
        }
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn ten_rows_give_ten_samples() {
        let dir = tempfile::tempdir().unwrap();
        let p = ten_rows(dir.path());
        fs::write(peaks_path(&p), "peak_index,symbol\n2,N\n5,V\n8,N\n").unwrap();
        let rec = parse_csv(&p, 360.0).unwrap();
        assert_eq!(rec.samples.len(), 10);
        assert_eq!(rec.r_peaks, vec![2, 5, 8]);
        assert_eq!(rec.patient_id, "rec");
    }

    #[test]
    fn missing_peaks_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = ten_rows(dir.path());
        assert!(matches!(parse_csv(&p, 360.0), Err(Error::Parse { .. })));
    }

    #[test]
    fn non_numeric_amplitude() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        fs::write(&p, "sample_index,amplitude\n0,0.5\n1,abc\n").unwrap();
        fs::write(peaks_path(&p), "peak_index,symbol\n").unwrap();
        assert!(matches!(parse_csv(&p, 360.0), Err(Error::Parse { .. })));
    }
}
