use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One ECG channel with its annotated beat positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcgRecord {
    pub patient_id: String,
    pub samples: Vec<f64>,
    /// Hz
    pub sampling_rate: f64,
    /// Sample indices of annotated QRS complexes, strictly increasing.
    pub r_peaks: Vec<usize>,
    /// Annotation mnemonic for each entry of `r_peaks`.
    pub symbols: Vec<String>,
}

impl EcgRecord {
    pub fn new(
        patient_id: impl Into<String>,
        samples: Vec<f64>,
        sampling_rate: f64,
        r_peaks: Vec<usize>,
        symbols: Vec<String>,
    ) -> Result<Self> {
        let rec = EcgRecord {
            patient_id: patient_id.into(),
            samples,
            sampling_rate,
            r_peaks,
            symbols,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sampling_rate > 0.0 && self.sampling_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sampling rate must be positive, got {}",
                self.sampling_rate
            )));
        }
        if self.r_peaks.len() != self.symbols.len() {
            return Err(Error::InvalidArgument(format!(
                "{} peaks but {} labels",
                self.r_peaks.len(),
                self.symbols.len()
            )));
        }
        if self.r_peaks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("r-peaks not strictly increasing".into()));
        }
        if let Some(&last) = self.r_peaks.last() {
            if last >= self.samples.len() {
                return Err(Error::InvalidArgument(format!(
                    "r-peak {last} beyond record of {} samples",
                    self.samples.len()
                )));
            }
        }
        Ok(())
    }

    /// Seconds from record start to sample `index`.
    pub fn time_of(&self, index: usize) -> f64 {
        index as f64 / self.sampling_rate
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sampling_rate
    }
}
