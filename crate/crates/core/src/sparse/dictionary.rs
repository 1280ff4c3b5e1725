use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::lasso::{LassoConfig, LassoSolver};
use crate::error::{Error, Result};
use crate::linalg::{all_finite, mat_serde, normalize_columns};

/// An undercomplete dictionary of unit-norm atoms learned from one
/// patient's normal beats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    pub patient_id: String,
    #[serde(with = "mat_serde")]
    pub atoms: DMatrix<f64>,
}

impl Dictionary {
    pub fn new(patient_id: impl Into<String>, atoms: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = atoms.shape();
        if cols == 0 || cols >= rows {
            return Err(Error::InvalidArgument(format!(
                "dictionary must be undercomplete with at least one atom, got {rows}x{cols}"
            )));
        }
        for (j, c) in atoms.column_iter().enumerate() {
            if (c.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("atom {j} has norm {}", c.norm())));
            }
        }
        Ok(Dictionary {
            patient_id: patient_id.into(),
            atoms,
        })
    }

    pub fn signal_len(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DictionaryConfig {
    pub n_atoms: usize,
    pub lambda: f64,
    pub iterations: usize,
    pub lasso_max_iter: usize,
    pub lasso_tol: f64,
}

impl Default for DictionaryConfig {
    fn default() -> Self {
        DictionaryConfig {
            n_atoms: 20,
            lambda: 0.01,
            iterations: 30,
            lasso_max_iter: 500,
            lasso_tol: 1e-6,
        }
    }
}

impl DictionaryConfig {
    fn lasso(&self) -> LassoConfig {
        LassoConfig {
            lambda: self.lambda,
            max_iter: self.lasso_max_iter,
            tol: self.lasso_tol,
            ..LassoConfig::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct DictionaryFit {
    pub dictionary: Dictionary,
    /// Training objective of the initial dictionary and after each accepted
    /// update.
    pub objective: Vec<f64>,
}

pub fn training_objective(d: &DMatrix<f64>, s: &DMatrix<f64>, x: &DMatrix<f64>, lambda: f64) -> f64 {
    (s - d * x).norm_squared() + lambda * x.iter().map(|v| v.abs()).sum::<f64>()
}

/// Learn a dictionary for the columns of `s` (N×T, unit-norm columns) by
/// alternating Lasso coding with regularized MOD updates. Starts from the
/// leading left singular vectors of `s`. An update that would raise the
/// objective is rejected and ends training.
pub fn learn_dictionary(s: &DMatrix<f64>, cfg: &DictionaryConfig, patient_id: &str) -> Result<DictionaryFit> {
    let (rows, t) = s.shape();
    let n = cfg.n_atoms;
    if t < n {
        return Err(Error::InvalidArgument(format!("{t} training beats for {n} atoms")));
    }
    if n == 0 || n >= rows {
        return Err(Error::InvalidArgument(format!("{n} atoms for signals of length {rows}")));
    }
    if !all_finite(s) {
        return Err(Error::InvalidArgument("training beats contain non-finite values".into()));
    }

    let mut d = svd_init(s, n);
    let lasso = cfg.lasso();
    let mut x = LassoSolver::new(&d, lasso)?.solve_matrix(s).x;
    let mut obj = training_objective(&d, s, &x, cfg.lambda);
    let mut history = vec![obj];

    for it in 0..cfg.iterations {
        let Some(d_new) = mod_update(s, &x, &d) else {
            log::debug!("{patient_id}: MOD system not solvable at iteration {it}");
            break;
        };
        let Ok(solver) = LassoSolver::new(&d_new, lasso) else { break };
        let x_new = solver.solve_matrix(s).x;
        let obj_new = training_objective(&d_new, s, &x_new, cfg.lambda);
        if !(obj_new <= obj) {
            log::debug!("{patient_id}: stopping after {it} MOD updates, objective would rise {obj} -> {obj_new}");
            break;
        }
        d = d_new;
        x = x_new;
        obj = obj_new;
        history.push(obj);
    }

    Ok(DictionaryFit {
        dictionary: Dictionary::new(patient_id, d)?,
        objective: history,
    })
}

fn svd_init(s: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let svd = s.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let mut d = u.select_columns(&order[..n]);
    normalize_columns(&mut d);
    d
}

/// D ← S Xᵀ (X Xᵀ + εI)⁻¹ followed by atom renormalization. Atoms left
/// without any usage keep their previous value.
fn mod_update(s: &DMatrix<f64>, x: &DMatrix<f64>, prev: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = x.nrows();
    let xxt = x * x.transpose();
    let eps = match 1e-6 * xxt.trace() / n as f64 {
        e if e > 0.0 => e,
        _ => 1e-12,
    };
    let a = xxt + DMatrix::identity(n, n) * eps;
    let xst = x * s.transpose();
    let dt = a.cholesky()?.solve(&xst);
    let mut d = dt.transpose();
    for j in normalize_columns(&mut d) {
        d.set_column(j, &prev.column(j));
    }
    all_finite(&d).then_some(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_unit_columns(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng));
        normalize_columns(&mut m);
        m
    }

    #[test]
    fn too_few_beats() {
        let s = random_unit_columns(32, 5, 0);
        let cfg = DictionaryConfig { n_atoms: 8, ..Default::default() };
        assert!(matches!(learn_dictionary(&s, &cfg, "p"), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn representable_data_fits_almost_exactly() {
        let basis = random_unit_columns(32, 4, 1).qr().q();
        let s = DMatrix::from_fn(32, 40, |i, j| basis[(i, j % 4)]);
        let cfg = DictionaryConfig { n_atoms: 4, iterations: 10, ..Default::default() };
        let fit = learn_dictionary(&s, &cfg, "p").unwrap();
        let solver = LassoSolver::new(&fit.dictionary.atoms, cfg.lasso()).unwrap();
        let x = solver.solve_matrix(&s).x;
        let err = (&s - &fit.dictionary.atoms * x).norm_squared() / 40.0;
        assert!(err < 1e-3, "mean error {err}");
    }

    #[test]
    fn objective_non_increasing_and_atoms_unit() {
        let s = random_unit_columns(64, 120, 2);
        let cfg = DictionaryConfig { n_atoms: 10, iterations: 8, ..Default::default() };
        let fit = learn_dictionary(&s, &cfg, "p").unwrap();
        for w in fit.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-6);
        }
        for c in fit.dictionary.atoms.column_iter() {
            assert!((c.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn json_round_trip() {
        let d = Dictionary::new("100", random_unit_columns(16, 3, 5)).unwrap();
        let text = serde_json::to_string(&d).unwrap();
        assert!(text.contains("\"rows\":16"));
        let back: Dictionary = serde_json::from_str(&text).unwrap();
        assert_eq!(back, d);
    }
}
