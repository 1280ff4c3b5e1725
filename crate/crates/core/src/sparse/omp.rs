use nalgebra::{DMatrix, DVector};

use super::lasso::SparseCode;
use crate::linalg::view;

/// Orthogonal matching pursuit with at most `k` atoms. Selection ties go to
/// the lowest atom index. Stops early once the residual vanishes.
pub fn omp(d: &DMatrix<f64>, s: &[f64], k: usize) -> SparseCode {
    let n = d.ncols();
    let k = k.min(n);
    let sv = view(s);
    let scale = sv.norm().max(1.0);
    let mut selected: Vec<usize> = Vec::with_capacity(k);
    let mut coef = DVector::<f64>::zeros(0);
    let mut r: DVector<f64> = sv.clone_owned();

    for _ in 0..k {
        if r.norm() <= 1e-12 * scale {
            break;
        }
        let c = d.transpose() * &r;
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if selected.contains(&j) {
                continue;
            }
            let v = c[j].abs();
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((j, v));
            }
        }
        let Some((j, v)) = best else { break };
        if v <= 1e-14 * scale {
            break;
        }
        selected.push(j);
        let sub = d.select_columns(&selected);
        coef = least_squares(&sub, &sv.clone_owned());
        r = &sv - sub * &coef;
    }

    let mut coeffs = vec![0.0; n];
    for (a, &j) in selected.iter().enumerate() {
        coeffs[j] = coef[a];
    }
    SparseCode {
        coeffs,
        sparsity_bound: Some(k),
        converged: true,
        iterations: selected.len(),
    }
}

fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let eps = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    svd.solve(b, eps).expect("svd computed with both factors")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_atom_match() {
        let d = DMatrix::<f64>::identity(6, 6);
        let mut s = vec![0.0; 6];
        s[3] = 1.0;
        let code = omp(&d, &s, 1);
        assert_eq!(code.support(), vec![3]);
        assert!((code.coeffs[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_signal() {
        let d = DMatrix::<f64>::identity(6, 4);
        let code = omp(&d, &[0.0; 6], 3);
        assert_eq!(code.nnz(), 0);
    }

    #[test]
    fn ties_pick_lowest_index() {
        let d = DMatrix::<f64>::identity(4, 4);
        let code = omp(&d, &[1.0, 1.0, 1.0, 1.0], 1);
        assert_eq!(code.support(), vec![0]);
    }

    #[test]
    fn residual_orthogonal_to_selection() {
        let d = DMatrix::from_fn(12, 6, |i, j| (((i * 7 + j * 3) as f64).powi(2) * 0.37).sin());
        let s: Vec<f64> = (0..12).map(|i| (i as f64).cos()).collect();
        let code = omp(&d, &s, 3);
        let r = view(&s) - &d * view(&code.coeffs);
        for j in code.support() {
            assert!(d.column(j).dot(&r).abs() < 1e-8);
        }
        assert_eq!(code.nnz(), 3);
    }
}
