//! Approximation-error residuals of a beat against a patient's dictionary,
//! with the floating-point operation count of each method.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::annihilator::{build_annihilator, Annihilator};
use super::dictionary::Dictionary;
use super::omp::omp;
use crate::error::{Error, Result};
use crate::linalg::{mat_serde, view};

pub const DEFAULT_SPARSITY: usize = 5;
pub const DEFAULT_RIDGE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResidualKind {
    /// Sparse approximation error via OMP.
    Sae,
    /// Null-space projection error.
    Npe,
    /// Least-squares error with a precomputed N×N projector.
    Lae1,
    /// Least-squares error as two chained matrix-vector products.
    Lae2,
}

impl ResidualKind {
    pub const ALL: [ResidualKind; 4] = [ResidualKind::Sae, ResidualKind::Npe, ResidualKind::Lae1, ResidualKind::Lae2];

    pub fn name(self) -> &'static str {
        match self {
            ResidualKind::Sae => "sae",
            ResidualKind::Npe => "npe",
            ResidualKind::Lae1 => "lae1",
            ResidualKind::Lae2 => "lae2",
        }
    }
}

impl fmt::Display for ResidualKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ResidualKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sae" => Ok(ResidualKind::Sae),
            "npe" => Ok(ResidualKind::Npe),
            "lae" | "lae1" => Ok(ResidualKind::Lae1),
            "lae2" => Ok(ResidualKind::Lae2),
            other => Err(Error::InvalidArgument(format!("unknown residual kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub residual: Vec<f64>,
    pub energy: f64,
    pub flops: u64,
    pub kind: ResidualKind,
}

impl ResidualReport {
    fn new(residual: DVector<f64>, flops: u64, kind: ResidualKind) -> Self {
        let energy = residual.norm_squared();
        ResidualReport {
            residual: residual.as_slice().to_vec(),
            energy,
            flops,
            kind,
        }
    }
}

pub fn sae_flops(len: usize, atoms: usize, k: usize) -> u64 {
    let (big_n, n, k) = (len as u64, atoms as u64, k as u64);
    // 2·N·k·(k + 1.5) written without the fraction
    big_n * k * (2 * k + 3) + 2 * k * n * (big_n + 1) + (2 * n + 1) * big_n
}

pub fn npe_flops(len: usize, atoms: usize) -> u64 {
    2 * len as u64 * len.saturating_sub(atoms) as u64
}

pub fn lae1_flops(len: usize) -> u64 {
    2 * (len as u64).pow(2)
}

pub fn lae2_flops(len: usize, atoms: usize) -> u64 {
    (4 * atoms as u64 + 1) * len as u64
}

pub fn flops(kind: ResidualKind, len: usize, atoms: usize, k: usize) -> u64 {
    match kind {
        ResidualKind::Sae => sae_flops(len, atoms, k),
        ResidualKind::Npe => npe_flops(len, atoms),
        ResidualKind::Lae1 => lae1_flops(len),
        ResidualKind::Lae2 => lae2_flops(len, atoms),
    }
}

/// Ridge least-squares coder L = (DᵀD + λI)⁻¹Dᵀ and the projector I − DL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsOperator {
    pub lambda: f64,
    #[serde(with = "mat_serde")]
    pub l: DMatrix<f64>,
    #[serde(with = "mat_serde")]
    pub complement: DMatrix<f64>,
}

impl LsOperator {
    pub fn new(d: &DMatrix<f64>, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!("ridge weight must be non-negative, got {lambda}")));
        }
        let n = d.ncols();
        let gram = d.transpose() * d + DMatrix::identity(n, n) * lambda;
        let chol = Cholesky::new(gram).ok_or(Error::RankDeficient { rank: 0, atoms: n })?;
        let l = chol.solve(&d.transpose());
        let complement = DMatrix::identity(d.nrows(), d.nrows()) - d * &l;
        Ok(LsOperator { lambda, l, complement })
    }
}

fn check_len(s: &[f64], len: usize) -> Result<()> {
    if s.len() != len {
        return Err(Error::Shape(format!("beat of length {} where {len} expected", s.len())));
    }
    Ok(())
}

pub fn residual_sae(d: &Dictionary, s: &[f64], k: usize) -> Result<ResidualReport> {
    check_len(s, d.signal_len())?;
    let code = omp(&d.atoms, s, k);
    let r = &d.atoms * view(&code.coeffs) - view(s);
    Ok(ResidualReport::new(r, sae_flops(d.signal_len(), d.n_atoms(), k), ResidualKind::Sae))
}

pub fn residual_npe(f: &Annihilator, s: &[f64]) -> Result<ResidualReport> {
    let len = f.f.ncols();
    check_len(s, len)?;
    let r = &f.f * view(s);
    let atoms = len - f.f.nrows();
    Ok(ResidualReport::new(r, npe_flops(len, atoms), ResidualKind::Npe))
}

/// Least-squares residual s − D·L·s. Variant 1 applies the stored N×N
/// projector; variant 2 computes L·s and then D·(L·s).
pub fn residual_lae(d: &Dictionary, l: &LsOperator, s: &[f64], variant: u8) -> Result<ResidualReport> {
    check_len(s, d.signal_len())?;
    let (len, atoms) = (d.signal_len(), d.n_atoms());
    let sv = view(s);
    match variant {
        1 => Ok(ResidualReport::new(&l.complement * sv, lae1_flops(len), ResidualKind::Lae1)),
        2 => {
            let x = &l.l * sv;
            let r = sv - &d.atoms * x;
            Ok(ResidualReport::new(r, lae2_flops(len, atoms), ResidualKind::Lae2))
        }
        v => Err(Error::InvalidArgument(format!("LAE variant must be 1 or 2, got {v}"))),
    }
}

/// Everything needed to score beats of one patient with any residual kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualModel {
    pub dictionary: Dictionary,
    pub annihilator: Annihilator,
    pub ls: LsOperator,
    pub sparsity: usize,
}

impl ResidualModel {
    pub fn new(dictionary: Dictionary, ridge: f64, sparsity: usize) -> Result<Self> {
        let annihilator = build_annihilator(&dictionary)?;
        let ls = LsOperator::new(&dictionary.atoms, ridge)?;
        Ok(ResidualModel {
            dictionary,
            annihilator,
            ls,
            sparsity,
        })
    }

    pub fn report(&self, kind: ResidualKind, s: &[f64]) -> Result<ResidualReport> {
        match kind {
            ResidualKind::Sae => residual_sae(&self.dictionary, s, self.sparsity),
            ResidualKind::Npe => residual_npe(&self.annihilator, s),
            ResidualKind::Lae1 => residual_lae(&self.dictionary, &self.ls, s, 1),
            ResidualKind::Lae2 => residual_lae(&self.dictionary, &self.ls, s, 2),
        }
    }

    pub fn energy(&self, kind: ResidualKind, s: &[f64]) -> Result<f64> {
        self.report(kind, s).map(|r| r.energy)
    }

    pub fn flops(&self, kind: ResidualKind) -> u64 {
        flops(kind, self.dictionary.signal_len(), self.dictionary.n_atoms(), self.sparsity)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flop_counts() {
        assert_eq!(sae_flops(128, 20, 5), 39368);
        assert_eq!(npe_flops(128, 20), 27648);
        assert_eq!(lae1_flops(128), 32768);
        assert_eq!(lae2_flops(128, 20), 10368);
    }

    #[test]
    fn lae_variants_agree() {
        let atoms = DMatrix::from_fn(16, 4, |i, j| if i == j * 3 { 1.0 } else { 0.0 });
        let d = Dictionary::new("p", atoms).unwrap();
        let l = LsOperator::new(&d.atoms, 1e-3).unwrap();
        let s: Vec<f64> = (0..16).map(|i| (i as f64 * 0.7).sin()).collect();
        let a = residual_lae(&d, &l, &s, 1).unwrap();
        let b = residual_lae(&d, &l, &s, 2).unwrap();
        for (x, y) in a.residual.iter().zip(&b.residual) {
            assert!((x - y).abs() < 1e-10);
        }
        assert!(residual_lae(&d, &l, &s, 3).is_err());
    }

    #[test]
    fn energy_is_squared_norm() {
        let atoms = DMatrix::from_fn(8, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        let d = Dictionary::new("p", atoms).unwrap();
        let rep = residual_sae(&d, &[1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 0.0, 4.0], 5).unwrap();
        assert_eq!(rep.energy, rep.residual.iter().map(|v| v * v).sum::<f64>());
        assert!((rep.energy - 25.0).abs() < 1e-12);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("NPE".parse::<ResidualKind>().unwrap(), ResidualKind::Npe);
        assert!("foo".parse::<ResidualKind>().is_err());
    }
}
