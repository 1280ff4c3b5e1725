//! Closed-form maximum-likelihood fits of residual energies: exponential for
//! normal beats, Gaussian for abnormal beats.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::BeatLabel;

pub const SIGMA_FLOOR: f64 = 1e-6;

fn validate(xs: &[f64]) -> Result<()> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite residual energy".into()));
    }
    Ok(())
}

/// Scale of the exponential law, which is the sample mean.
pub fn fit_exponential(xs: &[f64]) -> Result<f64> {
    validate(xs)?;
    if xs.is_empty() {
        return Err(Error::InvalidArgument("cannot fit an exponential to no data".into()));
    }
    if xs.iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidArgument("exponential data must be non-negative".into()));
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Mean and population standard deviation. A zero spread is replaced by
/// [`SIGMA_FLOOR`].
pub fn fit_gaussian(xs: &[f64]) -> Result<(f64, f64)> {
    validate(xs)?;
    if xs.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 values, got {}", xs.len())));
    }
    let n = xs.len() as f64;
    let mu = xs.iter().sum::<f64>() / n;
    let sigma = (xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n).sqrt();
    if sigma < SIGMA_FLOOR {
        log::warn!("degenerate Gaussian fit (sigma {sigma}), using floor {SIGMA_FLOOR}");
        return Ok((mu, SIGMA_FLOOR));
    }
    Ok((mu, sigma))
}

pub fn exponential_density(x: f64, beta: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else {
        (-x / beta).exp() / beta
    }
}

pub fn gaussian_density(x: f64, mu: f64, sigma: f64) -> f64 {
    (-0.5 * ((x - mu) / sigma).powi(2)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

fn exponential_log_density(x: f64, beta: f64) -> f64 {
    if x < 0.0 {
        f64::NEG_INFINITY
    } else {
        -x / beta - beta.ln()
    }
}

fn gaussian_log_density(x: f64, mu: f64, sigma: f64) -> f64 {
    -0.5 * ((x - mu) / sigma).powi(2) - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Fitted residual-energy laws of the two classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualDistributions {
    pub beta: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl ResidualDistributions {
    pub fn fit(normal: &[f64], abnormal: &[f64]) -> Result<Self> {
        let beta = fit_exponential(normal)?;
        if !(beta > 0.0) {
            return Err(Error::InvalidArgument("normal residual energies are all zero".into()));
        }
        let (mu, sigma) = fit_gaussian(abnormal)?;
        Ok(ResidualDistributions { beta, mu, sigma })
    }

    pub fn classify(&self, energy: f64) -> BeatLabel {
        prob_classify(self, energy)
    }
}

/// The class with the larger density at `energy`; equal densities go to
/// Abnormal. Compared in log space so far tails do not underflow to a tie.
pub fn prob_classify(dist: &ResidualDistributions, energy: f64) -> BeatLabel {
    let ln = exponential_log_density(energy, dist.beta);
    let la = gaussian_log_density(energy, dist.mu, dist.sigma);
    BeatLabel::from_abnormal(la >= ln)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_mean() {
        assert_eq!(fit_exponential(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(fit_exponential(&[0.3]).unwrap(), 0.3);
        assert!(fit_exponential(&[]).is_err());
    }

    #[test]
    fn gaussian_population_sd() {
        assert_eq!(fit_gaussian(&[0.0, 2.0]).unwrap(), (1.0, 1.0));
        assert_eq!(fit_gaussian(&[5.0, 5.0, 5.0]).unwrap(), (5.0, SIGMA_FLOOR));
    }

    #[test]
    fn densities() {
        assert!((exponential_density(0.05, 0.1) - 6.0653).abs() < 1e-3);
        assert!((gaussian_density(0.05, 1.0, 0.2) - 2.6e-5).abs() < 1e-6);
    }

    #[test]
    fn decisions() {
        let d = ResidualDistributions { beta: 0.1, mu: 1.0, sigma: 0.2 };
        assert_eq!(prob_classify(&d, 0.05), BeatLabel::Normal);
        assert_eq!(prob_classify(&d, -0.01), BeatLabel::Abnormal);
        let wide = ResidualDistributions { beta: 1e6, mu: 0.5, sigma: 0.1 };
        assert_eq!(prob_classify(&wide, 0.5), BeatLabel::Abnormal);
    }
}
