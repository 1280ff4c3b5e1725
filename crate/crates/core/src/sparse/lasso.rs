//! Lasso by ADMM: minimize ‖s − Dx‖² + λ‖x‖₁.
//!
//! ADMM on its own reaches a KKT residual of 1e-6 slowly, so every few
//! iterations the current support is polished: with the support and signs
//! fixed the problem is a small linear system, and if its solution keeps
//! the signs and passes the KKT check it is the exact minimizer.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sign, soft_threshold, view};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    pub lambda: f64,
    pub rho: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        LassoConfig {
            lambda: 0.01,
            rho: 1.0,
            max_iter: 500,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCode {
    pub coeffs: Vec<f64>,
    /// Set when the code came from a solver with a hard sparsity limit.
    pub sparsity_bound: Option<usize>,
    pub converged: bool,
    pub iterations: usize,
}

impl SparseCode {
    pub fn nnz(&self) -> usize {
        self.coeffs.iter().filter(|c| **c != 0.0).count()
    }

    pub fn support(&self) -> Vec<usize> {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Result of coding every column of a matrix.
#[derive(Debug, Clone)]
pub struct LassoBatch {
    pub x: DMatrix<f64>,
    pub converged: Vec<bool>,
    pub iterations: usize,
}

impl LassoBatch {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|c| *c)
    }
}

/// Lasso solver for a fixed dictionary. The factorization of 2DᵀD + ρI is
/// computed once and reused for every signal.
#[derive(Debug, Clone)]
pub struct LassoSolver {
    d: DMatrix<f64>,
    gram: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    cfg: LassoConfig,
}

const CHECK_EVERY: usize = 5;

impl LassoSolver {
    pub fn new(d: &DMatrix<f64>, cfg: LassoConfig) -> Result<Self> {
        if !(cfg.lambda > 0.0) || !(cfg.rho > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lasso needs lambda > 0 and rho > 0, got {} and {}",
                cfg.lambda, cfg.rho
            )));
        }
        let gram = d.transpose() * d;
        let n = gram.nrows();
        let sys = &gram * 2.0 + DMatrix::identity(n, n) * cfg.rho;
        let chol = Cholesky::new(sys).ok_or_else(|| Error::InvalidArgument("ADMM system not positive definite".into()))?;
        Ok(LassoSolver { d: d.clone(), gram, chol, cfg })
    }

    pub fn config(&self) -> &LassoConfig {
        &self.cfg
    }

    pub fn solve(&self, s: &[f64]) -> SparseCode {
        let sm = DMatrix::from_column_slice(s.len(), 1, s);
        let batch = self.solve_matrix(&sm);
        SparseCode {
            coeffs: batch.x.column(0).iter().copied().collect(),
            sparsity_bound: None,
            converged: batch.converged[0],
            iterations: batch.iterations,
        }
    }

    /// Code every column of `s` jointly. Columns are independent; sharing
    /// the iteration just lets the solves run as matrix products.
    pub fn solve_matrix(&self, s: &DMatrix<f64>) -> LassoBatch {
        let n = self.gram.nrows();
        let t = s.ncols();
        let LassoConfig { lambda, rho, max_iter, tol } = self.cfg;
        let dts = self.d.transpose() * s;
        let dts2 = &dts * 2.0;

        let mut z = DMatrix::<f64>::zeros(n, t);
        let mut u = DMatrix::<f64>::zeros(n, t);
        let mut out = DMatrix::<f64>::zeros(n, t);
        let mut done = vec![false; t];
        let mut best_kkt = vec![f64::INFINITY; t];
        let mut iterations = 0;

        for it in 1..=max_iter.max(1) {
            iterations = it;
            let rhs = &dts2 + (&z - &u) * rho;
            let x = self.chol.solve(&rhs);
            let mut z_new = &x + &u;
            z_new.apply(|v| *v = soft_threshold(*v, lambda / rho));
            u += &x - &z_new;
            z = z_new;

            if it % CHECK_EVERY == 0 || it == max_iter {
                for j in 0..t {
                    if done[j] {
                        continue;
                    }
                    let zj = z.column(j).clone_owned();
                    let dj = dts.column(j).clone_owned();
                    let mut cand = vec![(kkt_from_gram(&self.gram, &dj, &zj, lambda), zj.clone())];
                    if let Some(p) = polish(&self.gram, &dj, &zj, lambda) {
                        cand.push((kkt_from_gram(&self.gram, &dj, &p, lambda), p));
                    }
                    for (k, v) in cand {
                        if k < best_kkt[j] {
                            best_kkt[j] = k;
                            out.set_column(j, &v);
                        }
                    }
                    if best_kkt[j] <= tol {
                        done[j] = true;
                    }
                }
                if done.iter().all(|d| *d) {
                    break;
                }
            }
        }
        LassoBatch { x: out, converged: done, iterations }
    }
}

/// Solve the Lasso for one signal from scratch.
pub fn admm_lasso(d: &DMatrix<f64>, s: &[f64], lambda: f64, max_iter: usize, tol: f64) -> Result<SparseCode> {
    if s.len() != d.nrows() {
        return Err(Error::Shape(format!("signal length {} vs dictionary rows {}", s.len(), d.nrows())));
    }
    let solver = LassoSolver::new(d, LassoConfig { lambda, rho: 1.0, max_iter, tol })?;
    Ok(solver.solve(s))
}

fn kkt_from_gram(gram: &DMatrix<f64>, dts: &DVector<f64>, x: &DVector<f64>, lambda: f64) -> f64 {
    let g = (gram * x - dts) * 2.0;
    kkt_of_gradient(g.as_slice(), x.as_slice(), lambda)
}

fn kkt_of_gradient(g: &[f64], x: &[f64], lambda: f64) -> f64 {
    g.iter()
        .zip(x)
        .map(|(&gi, &xi)| {
            if xi == 0.0 {
                (gi.abs() - lambda).max(0.0)
            } else {
                (gi + lambda * sign(xi)).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Largest violation of the Lasso optimality conditions at `x`.
pub fn kkt_residual(d: &DMatrix<f64>, s: &[f64], x: &[f64], lambda: f64) -> f64 {
    let xv = view(x);
    let r = d * xv - view(s);
    let g = d.transpose() * r * 2.0;
    kkt_of_gradient(g.as_slice(), x, lambda)
}

pub fn lasso_objective(d: &DMatrix<f64>, s: &[f64], x: &[f64], lambda: f64) -> f64 {
    let r = d * view(x) - view(s);
    r.norm_squared() + lambda * x.iter().map(|v| v.abs()).sum::<f64>()
}

/// Exact minimizer restricted to the support and signs of `z`, if the signs
/// survive the solve.
fn polish(gram: &DMatrix<f64>, dts: &DVector<f64>, z: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let support: Vec<usize> = (0..z.len()).filter(|&i| z[i] != 0.0).collect();
    let mut x = DVector::zeros(z.len());
    if support.is_empty() {
        return Some(x);
    }
    let k = support.len();
    let sub = DMatrix::from_fn(k, k, |a, b| gram[(support[a], support[b])]);
    let rhs = DVector::from_fn(k, |a, _| dts[support[a]] - 0.5 * lambda * sign(z[support[a]]));
    let sol = Cholesky::new(sub)?.solve(&rhs);
    for (a, &i) in support.iter().enumerate() {
        if sign(sol[a]) != sign(z[i]) {
            return None;
        }
        x[i] = sol[a];
    }
    Some(x)
}
