//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use zeroshot_ecg::classifiers::CnnModel;
use zeroshot_ecg::ingest::BEAT_LEN;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn gaussian_vec(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn unit_columns(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for mut c in m.column_iter_mut() {
        let n = c.norm();
        c /= n;
    }
    m
}

/// Random dictionary with unit-norm atoms.
pub fn random_dictionary(len: usize, atoms: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    unit_columns(gaussian(len, atoms, rng))
}

/// Orthonormal columns (thin QR of a Gaussian matrix).
pub fn orthonormal(len: usize, atoms: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    gaussian(len, atoms, rng).qr().q()
}

/// Largest absolute inner product between two distinct unit atoms.
pub fn coherence(d: &DMatrix<f64>) -> f64 {
    let g = d.transpose() * d;
    let mut mu: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            if i != j {
                mu = mu.max(g[(i, j)].abs());
            }
        }
    }
    mu
}

/// Slightly perturbed orthonormal atoms: incoherent but not orthogonal.
pub fn incoherent_dictionary(len: usize, atoms: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let q = orthonormal(len, atoms, rng);
    unit_columns(q + gaussian(len, atoms, rng) * 0.01)
}

/// `k`-sparse vector with magnitudes in [0.5, 1.5] and random signs.
pub fn sparse_code(atoms: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let support = rand::seq::index::sample(rng, atoms, k);
    let mut x = vec![0.0; atoms];
    for i in support {
        let mag = rng.random_range(0.5..1.5);
        x[i] = if rng.random_bool(0.5) { mag } else { -mag };
    }
    x
}

pub fn matvec(d: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (d * nalgebra::DVector::from_column_slice(x)).as_slice().to_vec()
}

pub fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

pub fn batch(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = (0..n).map(|_| (0..2 * BEAT_LEN).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let ys = (0..n).map(|i| i % 2).collect();
    (xs, ys)
}

/// Relative error per tensor between backprop and central differences,
/// checked on a random subset of entries of each tensor. Entries sitting on
/// a ReLU or max-pool kink, where the one-sided differences disagree, are
/// left out because the loss has no derivative there.
pub fn gradient_errors(model: &CnnModel, seed: u64) -> Vec<(&'static str, f64)> {
    let (xs, ys) = batch(seed, 10);
    let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
    let (_, grads) = model.loss_and_grad(&refs, &ys).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let h = 1e-6;
    let base = model.mean_loss(&refs, &ys).unwrap();
    let mut out = Vec::new();
    for (k, name) in CnnModel::tensor_names().into_iter().enumerate() {
        let len = model.tensors()[k].len();
        let picks: Vec<usize> = if len <= 40 { (0..len).collect() } else { (0..40).map(|_| rng.random_range(0..len)).collect() };
        let (mut num, mut den, mut checked) = (0.0f64, 0.0f64, 0usize);
        for &i in &picks {
            let mut plus = model.clone();
            plus.tensors_mut()[k][i] += h;
            let mut minus = model.clone();
            minus.tensors_mut()[k][i] -= h;
            let (lp, l0, lm) = (plus.mean_loss(&refs, &ys).unwrap(), base, minus.mean_loss(&refs, &ys).unwrap());
            let (fwd, bwd) = ((lp - l0) / h, (l0 - lm) / h);
            if (fwd - bwd).abs() > 1e-3 * fwd.abs().max(bwd.abs()).max(1e-3) {
                continue;
            }
            let fd = (lp - lm) / (2.0 * h);
            checked += 1;
            num += (grads.0[k][i] - fd).powi(2);
            den += fd.powi(2);
        }
        assert!(checked * 2 >= picks.len(), "{name}: only {checked} smooth entries");
        out.push((name, num.sqrt() / den.sqrt().max(1e-12)));
    }
    out
}

/// Subgradient optimality of `‖s − Dx‖² + λ‖x‖₁`, computed independently
/// of the library's checker.
pub fn kkt_violation(d: &DMatrix<f64>, s: &[f64], x: &[f64], lambda: f64) -> f64 {
    let dx = matvec(d, x);
    let r: Vec<f64> = dx.iter().zip(s).map(|(a, b)| a - b).collect();
    let g = matvec(&d.transpose(), &r);
    g.iter()
        .zip(x)
        .map(|(gi, xi)| {
            let gi = 2.0 * gi;
            if *xi == 0.0 {
                (gi.abs() - lambda).max(0.0)
            } else {
                (gi + lambda * xi.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}
