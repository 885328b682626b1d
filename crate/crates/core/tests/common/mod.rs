//! Reference oracles built on nalgebra, independent of the crate's kernels.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use scion_lab::oracle::Objective;
use scion_lab::{GeometryKind, Matrix};

pub fn to_na(a: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice())
}

pub fn from_na(a: &DMatrix<f64>) -> Matrix {
    let (r, c) = a.shape();
    let mut data = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            data.push(a[(i, j)]);
        }
    }
    Matrix::from_vec(r, c, data).unwrap()
}

pub fn singular_values(a: &Matrix) -> Vec<f64> {
    to_na(a).singular_values().iter().copied().collect()
}

fn col_norms(a: &Matrix) -> Vec<f64> {
    (0..a.cols()).map(|j| a.col(j).iter().map(|x| x * x).sum::<f64>().sqrt()).collect()
}

fn row_norms(a: &Matrix) -> Vec<f64> {
    (0..a.rows()).map(|i| a.row(i).iter().map(|x| x * x).sum::<f64>().sqrt()).collect()
}

fn fro(a: &Matrix) -> f64 {
    a.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn ref_primal(kind: GeometryKind, w: &Matrix) -> f64 {
    let (m, n) = (w.rows() as f64, w.cols() as f64);
    let smax = || singular_values(w).into_iter().fold(0.0, f64::max);
    match kind {
        GeometryKind::Spectral => smax(),
        GeometryKind::RmsToRms => (n / m).sqrt() * smax(),
        GeometryKind::OneToRms => col_norms(w).into_iter().fold(0.0, f64::max) / m.sqrt(),
        GeometryKind::RmsToInf => n.sqrt() * row_norms(w).into_iter().fold(0.0, f64::max),
        GeometryKind::OneToInf => w.as_slice().iter().fold(0.0, |a, x| a.max(x.abs())),
        GeometryKind::Frobenius => fro(w),
    }
}

pub fn ref_dual(kind: GeometryKind, s: &Matrix) -> f64 {
    let (m, n) = (s.rows() as f64, s.cols() as f64);
    let nuc = || singular_values(s).into_iter().sum::<f64>();
    match kind {
        GeometryKind::Spectral => nuc(),
        GeometryKind::RmsToRms => (m / n).sqrt() * nuc(),
        GeometryKind::OneToRms => m.sqrt() * col_norms(s).into_iter().sum::<f64>(),
        GeometryKind::RmsToInf => row_norms(s).into_iter().sum::<f64>() / n.sqrt(),
        GeometryKind::OneToInf => s.as_slice().iter().map(|x| x.abs()).sum(),
        GeometryKind::Frobenius => fro(s),
    }
}

pub fn gaussian(m: usize, n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| rng.sample(StandardNormal))
}

/// `(A, UVᵀ)` with `A = U diag(σ) Vᵀ`, `σ` uniform in `[lo, hi]`, orthonormal
/// factors from QR of Gaussian matrices.
pub fn with_singular_values(m: usize, n: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> (Matrix, Matrix) {
    let r = m.min(n);
    let u = gaussian(m, r, rng).qr().q();
    let v = gaussian(n, r, rng).qr().q();
    let sig = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(r, |_, _| rng.random_range(lo..=hi)));
    (from_na(&(&u * sig * v.transpose())), from_na(&(&u * v.transpose())))
}

/// Central differences of `obj.value`.
pub fn fd_gradient(obj: &Objective, x: &Matrix, h: f64) -> Matrix {
    let mut g = Matrix::zeros(x.rows(), x.cols());
    for k in 0..x.as_slice().len() {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp.as_mut_slice()[k] += h;
        xm.as_mut_slice()[k] -= h;
        g.as_mut_slice()[k] = (obj.value(&xp).unwrap() - obj.value(&xm).unwrap()) / (2.0 * h);
    }
    g
}
