use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::linalg::mat_serde;

/// Orthonormal basis of the left null space of a dictionary, stored as the
/// rows of an (N−n)×N matrix F with F·D = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annihilator {
    pub patient_id: String,
    #[serde(with = "mat_serde")]
    pub f: DMatrix<f64>,
}

pub fn build_annihilator(dict: &Dictionary) -> Result<Annihilator> {
    Ok(Annihilator {
        patient_id: dict.patient_id.clone(),
        f: annihilator_matrix(&dict.atoms)?,
    })
}

/// Rank is decided from the singular values of `d` with tolerance
/// 1e-10·σ_max. The null-space basis is the eigenvectors of I − UUᵀ with
/// eigenvalue one, where U spans the columns of `d`.
pub fn annihilator_matrix(d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (rows, n) = d.shape();
    if n >= rows {
        return Err(Error::InvalidArgument(format!("{n} atoms leave no null space in dimension {rows}")));
    }
    let svd = d.clone().svd(true, false);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10 * smax).count();
    if rank < n || smax == 0.0 {
        return Err(Error::RankDeficient { rank, atoms: n });
    }
    let u = svd.u.expect("requested U");
    let proj = DMatrix::identity(rows, rows) - &u * u.transpose();
    let eig = SymmetricEigen::new(proj);
    let mut order: Vec<usize> = (0..rows).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let basis = eig.eigenvectors.select_columns(&order[..rows - n]);
    Ok(basis.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_basis_energy_is_complement() {
        let d = DMatrix::<f64>::identity(8, 3);
        let f = annihilator_matrix(&d).unwrap();
        assert_eq!(f.shape(), (5, 8));
        let s = nalgebra::DVector::from_fn(8, |i, _| i as f64 + 1.0);
        let expected: f64 = (3..8).map(|i| s[i] * s[i]).sum();
        assert!(((&f * &s).norm_squared() - expected).abs() < 1e-10);
    }

    #[test]
    fn rank_deficient() {
        let mut d = DMatrix::<f64>::identity(8, 3);
        d.set_column(2, &d.column(0).clone_owned());
        assert!(matches!(annihilator_matrix(&d), Err(Error::RankDeficient { rank: 2, atoms: 3 })));
    }
}
