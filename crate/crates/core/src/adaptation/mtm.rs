//! Linear morphology transform that maps another patient's beats into the
//! span of the target patient's dictionary.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, mat_serde, normalize_columns, view};
use crate::sparse::{Dictionary, LassoConfig, LassoSolver};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MtmConfig {
    pub gamma: f64,
    pub eta: f64,
    pub epochs: usize,
    /// Lasso weight used when coding the transformed beats.
    pub lambda: f64,
    /// Normalize the transformed beats before coding them. Turning this off
    /// makes each epoch an exact gradient step on the quadratic objective.
    pub normalize: bool,
}

impl Default for MtmConfig {
    fn default() -> Self {
        MtmConfig {
            gamma: 0.2,
            eta: 0.002,
            epochs: 25,
            lambda: 0.01,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphTransform {
    pub source_id: String,
    pub target_id: String,
    pub gamma: f64,
    pub eta: f64,
    pub epochs: usize,
    #[serde(with = "mat_serde")]
    pub q: DMatrix<f64>,
}

impl MorphTransform {
    /// Transform one beat and rescale it to unit energy.
    pub fn apply(&self, s: &[f64]) -> Vec<f64> {
        let mut out = &self.q * view(s);
        let n = out.norm();
        if n > 0.0 {
            out /= n;
        }
        out.as_slice().to_vec()
    }

    pub fn is_identity(&self) -> bool {
        self.q == DMatrix::identity(self.q.nrows(), self.q.ncols())
    }
}

/// Transform every column of `beats` and rescale each to unit energy.
pub fn apply_mtm(t: &MorphTransform, beats: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = &t.q * beats;
    normalize_columns(&mut out);
    out
}

/// ‖QS − DX‖² + γ‖S − QS‖².
pub fn mtm_objective(q: &DMatrix<f64>, s: &DMatrix<f64>, d: &DMatrix<f64>, x: &DMatrix<f64>, gamma: f64) -> f64 {
    let qs = q * s;
    (&qs - d * x).norm_squared() + gamma * (s - &qs).norm_squared()
}

/// ((1+γ)Q − γI)·SSᵀ − D·X·Sᵀ, which is half the gradient of
/// [`mtm_objective`] in Q.
pub fn mtm_gradient(q: &DMatrix<f64>, s: &DMatrix<f64>, d: &DMatrix<f64>, x: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    let sst = s * s.transpose();
    gradient_with(q, &sst, &(d * x * s.transpose()), gamma)
}

fn gradient_with(q: &DMatrix<f64>, sst: &DMatrix<f64>, dxst: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    let n = q.nrows();
    let a = q * (1.0 + gamma) - DMatrix::identity(n, n) * gamma;
    a * sst - dxst
}

/// Learn Q mapping the source beats `s` (N×T, unit-norm columns) towards
/// `dict`. Each epoch transforms the beats, codes them on the dictionary,
/// and takes one gradient step on Q with the codes held fixed.
pub fn learn_mtm(dict: &Dictionary, s: &DMatrix<f64>, source_id: &str, cfg: &MtmConfig) -> Result<MorphTransform> {
    if !(cfg.gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {}", cfg.gamma)));
    }
    if !(cfg.eta > 0.0) {
        return Err(Error::InvalidArgument(format!("eta must be positive, got {}", cfg.eta)));
    }
    let len = dict.signal_len();
    if s.nrows() != len {
        return Err(Error::Shape(format!("beats of length {} for a dictionary of length {len}", s.nrows())));
    }
    let d = &dict.atoms;
    let solver = LassoSolver::new(
        d,
        LassoConfig {
            lambda: cfg.lambda,
            ..LassoConfig::default()
        },
    )?;
    let sst = s * s.transpose();
    let mut q = DMatrix::<f64>::identity(len, len);

    for epoch in 0..cfg.epochs {
        let mut s_hat = &q * s;
        if cfg.normalize {
            normalize_columns(&mut s_hat);
        }
        let x = solver.solve_matrix(&s_hat).x;
        let dxst = d * x * s.transpose();
        let grad = gradient_with(&q, &sst, &dxst, cfg.gamma);
        q -= grad * cfg.eta;
        if !all_finite(&q) {
            return Err(Error::Diverged { epoch });
        }
    }

    Ok(MorphTransform {
        source_id: source_id.to_string(),
        target_id: dict.patient_id.clone(),
        gamma: cfg.gamma,
        eta: cfg.eta,
        epochs: cfg.epochs,
        q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    fn unit(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut m = random(rows, cols, seed);
        normalize_columns(&mut m);
        m
    }

    #[test]
    fn zero_epochs_is_identity() {
        let dict = Dictionary::new("p", unit(16, 4, 0)).unwrap();
        let cfg = MtmConfig { epochs: 0, ..Default::default() };
        let t = learn_mtm(&dict, &unit(16, 10, 1), "l", &cfg).unwrap();
        assert!(t.is_identity());
        assert_eq!(t.target_id, "p");
    }

    #[test]
    fn gradient_is_half_finite_difference() {
        let (d, s, x) = (unit(8, 3, 2), unit(8, 6, 3), random(3, 6, 4));
        let q = DMatrix::identity(8, 8) + random(8, 8, 5) * 0.1;
        let g = mtm_gradient(&q, &s, &d, &x, 0.2);
        let h = 1e-5;
        let mut fd = DMatrix::zeros(8, 8);
        for i in 0..8 {
            for j in 0..8 {
                let (mut qp, mut qm) = (q.clone(), q.clone());
                qp[(i, j)] += h;
                qm[(i, j)] -= h;
                fd[(i, j)] = (mtm_objective(&qp, &s, &d, &x, 0.2) - mtm_objective(&qm, &s, &d, &x, 0.2)) / (2.0 * h);
            }
        }
        let rel = (&g * 2.0 - &fd).norm() / fd.norm();
        assert!(rel < 1e-4, "relative error {rel}");
    }

    #[test]
    fn rejects_zero_gamma() {
        let dict = Dictionary::new("p", unit(16, 4, 0)).unwrap();
        let cfg = MtmConfig { gamma: 0.0, ..Default::default() };
        assert!(matches!(learn_mtm(&dict, &unit(16, 10, 1), "l", &cfg), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn huge_step_diverges() {
        let dict = Dictionary::new("p", unit(16, 4, 0)).unwrap();
        let cfg = MtmConfig { eta: 1e6, epochs: 200, ..Default::default() };
        assert!(matches!(learn_mtm(&dict, &unit(16, 40, 1), "l", &cfg), Err(Error::Diverged { .. })));
    }

    #[test]
    fn apply_single_matches_batch() {
        let q = DMatrix::identity(8, 8) + random(8, 8, 7) * 0.2;
        let t = MorphTransform { source_id: "l".into(), target_id: "p".into(), gamma: 0.2, eta: 0.002, epochs: 1, q };
        let beats = unit(8, 5, 8);
        let batch = apply_mtm(&t, &beats);
        let single = t.apply(beats.column(2).as_slice());
        for i in 0..8 {
            assert!((batch[(i, 2)] - single[i]).abs() < 1e-12);
        }
        for c in batch.column_iter() {
            assert!((c.norm() - 1.0).abs() < 1e-9);
        }
    }
}
