//! CSV and JSON output of experiment results.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::{CorpusResult, ExperimentConfig};
use super::metrics::Metrics;
use crate::error::Result;

/// One line of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub strategy: String,
    pub patient: String,
    pub method: String,
    pub accuracy: f64,
    pub specificity: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl MetricsRow {
    pub fn new(strategy: &str, patient: &str, method: &str, m: &Metrics) -> Self {
        MetricsRow {
            strategy: strategy.into(),
            patient: patient.into(),
            method: method.into(),
            accuracy: m.accuracy,
            specificity: m.specificity,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            tp: m.tp,
            fp: m.fp,
            tn: m.tn,
            fn_: m.fn_,
        }
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            accuracy: self.accuracy,
            specificity: self.specificity,
            precision: self.precision,
            recall: self.recall,
            f1: self.f1,
            tp: self.tp,
            fp: self.fp,
            tn: self.tn,
            fn_: self.fn_,
        }
    }
}

/// Patient id used for the macro-average rows.
pub const MACRO_ROW: &str = "MACRO";

pub fn metrics_rows(result: &CorpusResult) -> Vec<MetricsRow> {
    let s = result.strategy.name();
    let mut rows = Vec::new();
    for p in &result.patients {
        for (method, m) in p.mean.iter() {
            rows.push(MetricsRow::new(s, &p.patient_id, method, m));
        }
    }
    for (method, m) in result.macro_metrics.iter() {
        rows.push(MetricsRow::new(s, MACRO_ROW, method, m));
    }
    rows
}

#[derive(Serialize)]
struct RunRow<'a> {
    patient: &'a str,
    seed: u64,
    method: &'static str,
    f1: f64,
    precision: f64,
    recall: f64,
    accuracy: f64,
    confidence_threshold: f64,
    residual_threshold: f64,
    epochs_run: usize,
    test_size: u64,
}

#[derive(Serialize)]
struct ConfusionRow<'a> {
    patient: &'a str,
    method: &'static str,
    tp: u64,
    fp: u64,
    tn: u64,
    #[serde(rename = "fn")]
    fn_: u64,
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_series(path: &Path, header: [&str; 2], points: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for (x, y) in points {
        w.serialize((x, y))?;
    }
    w.flush()?;
    Ok(())
}

/// Files written to `out_dir`:
///
/// * `metrics.csv`: run-averaged metrics per patient and method, plus
///   macro-average rows
/// * `confusion.csv`, `runs.csv`, `skipped.csv`
/// * `config.json`: the configuration including every seed
/// * `f1_vs_threshold.csv`, `f1_vs_confidence.csv`, `efficiency.csv`:
///   plot series averaged over patients
pub fn emit_results(result: &CorpusResult, cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    write_csv(&out_dir.join("metrics.csv"), metrics_rows(result))?;
    write_csv(
        &out_dir.join("confusion.csv"),
        result.patients.iter().flat_map(|p| {
            p.mean.iter().map(move |(method, m)| ConfusionRow {
                patient: &p.patient_id,
                method,
                tp: m.tp,
                fp: m.fp,
                tn: m.tn,
                fn_: m.fn_,
            })
        }),
    )?;
    write_csv(
        &out_dir.join("runs.csv"),
        result.patients.iter().flat_map(|p| {
            p.runs.iter().flat_map(move |r| {
                r.metrics.iter().map(move |(method, m)| RunRow {
                    patient: &p.patient_id,
                    seed: r.seed,
                    method,
                    f1: m.f1,
                    precision: m.precision,
                    recall: m.recall,
                    accuracy: m.accuracy,
                    confidence_threshold: r.confidence_threshold,
                    residual_threshold: r.residual_threshold,
                    epochs_run: r.epochs_run,
                    test_size: m.tp + m.fp + m.tn + m.fn_,
                })
            })
        }),
    )?;
    let mut w = csv::Writer::from_path(out_dir.join("skipped.csv"))?;
    w.write_record(["patient_id", "reason"])?;
    for s in &result.skipped {
        w.write_record([&s.patient_id, &s.reason])?;
    }
    w.flush()?;

    std::fs::write(out_dir.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    write_series(&out_dir.join("f1_vs_threshold.csv"), ["threshold", "f1"], &result.f1_vs_threshold())?;
    write_series(&out_dir.join("f1_vs_confidence.csv"), ["confidence", "f1"], &result.f1_vs_confidence())?;
    write_csv(&out_dir.join("efficiency.csv"), result.efficiency())?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<MetricsRow>, _>>()?)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        Ok(serde_json::from_str(&text)?)
    } else {
        toml::from_str(&text).map_err(|e| crate::Error::parse(path, e.to_string()))
    }
}
