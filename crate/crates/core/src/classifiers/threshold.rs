use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::BeatLabel;
use crate::sparse::ResidualKind;

/// Flags a beat as abnormal when its residual energy exceeds a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdClassifier {
    pub kind: ResidualKind,
    pub threshold: f64,
}

impl ThresholdClassifier {
    pub fn new(kind: ResidualKind, threshold: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::InvalidArgument(format!("threshold must lie in [0, 1], got {threshold}")));
        }
        Ok(ThresholdClassifier { kind, threshold })
    }

    pub fn classify(&self, energy: f64) -> BeatLabel {
        threshold_classify(self.threshold, energy)
    }
}

pub fn threshold_classify(threshold: f64, energy: f64) -> BeatLabel {
    BeatLabel::from_abnormal(energy > threshold)
}

/// Thresholds 0, step, 2·step, ... up to 1 inclusive.
pub fn threshold_grid(step: f64) -> Vec<f64> {
    let n = (1.0 / step).round() as usize;
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_inequality() {
        assert_eq!(threshold_classify(0.1, 0.0), BeatLabel::Normal);
        assert_eq!(threshold_classify(0.5, 1.0), BeatLabel::Abnormal);
        assert_eq!(threshold_classify(0.5, 0.5), BeatLabel::Normal);
    }

    #[test]
    fn grid_endpoints() {
        let g = threshold_grid(0.01);
        assert_eq!(g.len(), 101);
        assert_eq!(g[0], 0.0);
        assert_eq!(*g.last().unwrap(), 1.0);
    }

    #[test]
    fn out_of_range_threshold() {
        assert!(ThresholdClassifier::new(ResidualKind::Npe, 1.5).is_err());
    }
}
