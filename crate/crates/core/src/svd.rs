//! Thin singular value decomposition and polar factors.
//!
//! The SVD is a one-sided Jacobi sweep on the thinner side of the input.
//! Every left singular vector is sign-normalized so that its entry of largest
//! magnitude is nonnegative, which makes `U·Vᵀ` a deterministic function of
//! the input whenever the singular values are distinct.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

const MAX_SWEEPS: usize = 80;

/// Singular values below `RANK_CUTOFF · σ_max` get a completed (rather than
/// normalized) left singular vector.
const RANK_CUTOFF: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    /// `rows × k`, orthonormal columns.
    pub u: Matrix,
    /// Descending, nonnegative.
    pub sigma: Vec<f64>,
    /// `cols × k`, orthonormal columns.
    pub v: Matrix,
}

impl SvdResult {
    pub fn rank_k(&self) -> usize {
        self.sigma.len()
    }

    /// `U · diag(σ) · Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let (m, n, k) = (self.u.rows(), self.v.rows(), self.sigma.len());
        Matrix::from_fn(m, n, |i, j| (0..k).map(|l| self.u[(i, l)] * self.sigma[l] * self.v[(j, l)]).sum())
    }

    /// `U · Vᵀ`, the orthogonal polar factor.
    pub fn polar(&self) -> Matrix {
        let (m, n, k) = (self.u.rows(), self.v.rows(), self.sigma.len());
        Matrix::from_fn(m, n, |i, j| (0..k).map(|l| self.u[(i, l)] * self.v[(j, l)]).sum())
    }

    pub fn nuclear_norm(&self) -> f64 {
        self.sigma.iter().sum()
    }
}

/// Thin SVD `a = U Σ Vᵀ` with `k = min(rows, cols)`.
pub fn svd(a: &Matrix) -> Result<SvdResult> {
    if !a.is_finite() {
        return Err(Error::NonFinite("svd input".into()));
    }
    if a.rows() >= a.cols() {
        Ok(tall_svd(a))
    } else {
        let t = tall_svd(&a.transpose());
        // aᵀ = U' Σ V'ᵀ  ⇒  a = V' Σ U'ᵀ; re-normalize signs on the new U.
        let mut out = SvdResult { u: t.v, sigma: t.sigma, v: t.u };
        normalize_signs(&mut out);
        Ok(out)
    }
}

fn tall_svd(a: &Matrix) -> SvdResult {
    let (m, n) = a.shape();
    // Power-of-two rescaling keeps squared norms in range and is exact.
    let max_abs = a.max_abs();
    let scale = if max_abs > 0.0 { pow2_floor(max_abs) } else { 1.0 };
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| a.col(j).into_iter().map(|x| x / scale).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = gram_entries(&w[p], &w[q]);
                if gamma == 0.0 || alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma: Vec<f64> = w.iter().map(|col| norm2(col)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));
    let sigma_max = sigma[order[0]];

    let mut u_cols: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
    for &j in &order {
        let s = sigma[j];
        if s > 0.0 && s > RANK_CUTOFF * sigma_max {
            u_cols.push(Some(w[j].iter().map(|x| x / s).collect()));
        } else {
            u_cols.push(None);
        }
    }
    complete_orthonormal(&mut u_cols, m);

    for s in sigma.iter_mut() {
        *s *= scale;
    }
    let sigma_sorted: Vec<f64> = order.iter().map(|&j| sigma[j]).collect();
    let u_cols: Vec<Vec<f64>> = u_cols.into_iter().map(|c| c.expect("completed")).collect();
    let u = Matrix::from_fn(m, n, |i, l| u_cols[l][i]);
    let vm = Matrix::from_fn(n, n, |i, l| v[order[l]][i]);
    let mut out = SvdResult { u, sigma: sigma_sorted, v: vm };
    normalize_signs(&mut out);
    out
}

fn gram_entries(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let mut a = 0.0;
    let mut b = 0.0;
    let mut g = 0.0;
    for (&p, &q) in x.iter().zip(y) {
        a += p * p;
        b += q * q;
        g += p * q;
    }
    (a, b, g)
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    for (x, y) in left[p].iter_mut().zip(right[0].iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn pow2_floor(x: f64) -> f64 {
    2f64.powi(x.log2().floor() as i32)
}

/// Fills missing columns with unit vectors orthogonal to every present one,
/// scanning the standard basis in order.
fn complete_orthonormal(cols: &mut [Option<Vec<f64>>], m: usize) {
    let mut candidate = 0;
    for idx in 0..cols.len() {
        if cols[idx].is_some() {
            continue;
        }
        while candidate < m {
            let mut e = vec![0.0; m];
            e[candidate] = 1.0;
            candidate += 1;
            // two passes of modified Gram–Schmidt
            for _ in 0..2 {
                for c in cols.iter().flatten() {
                    let d: f64 = c.iter().zip(&e).map(|(a, b)| a * b).sum();
                    for (ei, ci) in e.iter_mut().zip(c) {
                        *ei -= d * ci;
                    }
                }
            }
            let nrm = norm2(&e);
            if nrm > 0.5 {
                cols[idx] = Some(e.into_iter().map(|x| x / nrm).collect());
                break;
            }
        }
        assert!(cols[idx].is_some(), "basis exhausted while completing U");
    }
}

fn normalize_signs(out: &mut SvdResult) {
    let (m, n) = (out.u.rows(), out.v.rows());
    for l in 0..out.sigma.len() {
        let mut best = 0;
        for i in 1..m {
            if out.u[(i, l)].abs() > out.u[(best, l)].abs() {
                best = i;
            }
        }
        if out.u[(best, l)] < 0.0 {
            for i in 0..m {
                out.u[(i, l)] = -out.u[(i, l)];
            }
            for j in 0..n {
                out.v[(j, l)] = -out.v[(j, l)];
            }
        }
    }
}

/// Largest singular value.
pub fn spectral_norm(a: &Matrix) -> f64 {
    if a.is_zero() {
        return 0.0;
    }
    svd(a).map(|s| s.sigma[0]).unwrap_or(f64::NAN)
}

/// Sum of singular values.
pub fn nuclear_norm(a: &Matrix) -> f64 {
    if a.is_zero() {
        return 0.0;
    }
    svd(a).map(|s| s.nuclear_norm()).unwrap_or(f64::NAN)
}

/// Coefficients `(a, b, c)` of one odd quintic step `X ← aX + b(XXᵀ)X + c(XXᵀ)²X`.
pub type QuinticStep = (f64, f64, f64);

/// Newton–Schulz style polar iteration on the Frobenius-normalized input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonSchulz {
    pub steps: Vec<QuinticStep>,
    /// Accept the iterate when the estimated distance `½‖QQᵀ − I‖_F` to the
    /// exact polar factor is at most this value; otherwise fall back to SVD.
    pub tolerance: f64,
}

/// Added to `‖A‖_F` before pre-scaling.
pub const NS_SCALE_EPS: f64 = 1e-12;

impl Default for NewtonSchulz {
    /// Five Polar Express steps (tuned for singular values in `[1e-3, 1]`)
    /// followed by three steps of the third-order `(15, -10, 3)/8` polynomial,
    /// which pins the fixed point at 1.
    fn default() -> Self {
        Self {
            steps: vec![
                (8.156554524902461, -22.48329292557795, 15.878769915207462),
                (4.042929935166739, -2.808917465908714, 0.5000178451051316),
                (3.8916678022926607, -2.772484153217685, 0.5060648178503393),
                (3.285753657755655, -2.3681294933425376, 0.46449024233003106),
                (2.3465413258596377, -1.7097828382687081, 0.42323551169305323),
                (1.875, -1.25, 0.375),
                (1.875, -1.25, 0.375),
                (1.875, -1.25, 0.375),
            ],
            tolerance: 1e-6,
        }
    }
}

impl NewtonSchulz {
    /// Runs the iteration and returns `(Q, estimated error)`.
    pub fn iterate(&self, a: &Matrix) -> (Matrix, f64) {
        let wide = a.rows() <= a.cols();
        let mut x = if wide { a.clone() } else { a.transpose() };
        x = x.scale(1.0 / (a.frobenius_norm() + NS_SCALE_EPS));
        for &(ca, cb, cc) in &self.steps {
            let gram = x.matmul(&x.transpose()).expect("square gram");
            let gram2 = gram.matmul(&gram).expect("square gram");
            let poly = Matrix::lincomb(cb, &gram, cc, &gram2).expect("same shape");
            let px = poly.matmul(&x).expect("conformable");
            x = Matrix::lincomb(ca, &x, 1.0, &px).expect("same shape");
        }
        let gram = x.matmul(&x.transpose()).expect("square gram");
        let defect = gram.sub(&Matrix::identity(gram.rows())).expect("square").frobenius_norm();
        let q = if wide { x } else { x.transpose() };
        (q, 0.5 * defect)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolarMethod {
    #[default]
    ExactSvd,
    NewtonSchulz(NewtonSchulz),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolarFactor {
    pub q: Matrix,
    /// The iterative method was requested but did not meet its tolerance, so
    /// `q` came from the exact SVD.
    pub fell_back: bool,
}

/// Orthogonal polar factor `U·Vᵀ` of a nonzero matrix.
pub fn polar_factor(a: &Matrix, method: &PolarMethod) -> Result<PolarFactor> {
    if !a.is_finite() {
        return Err(Error::NonFinite("polar_factor input".into()));
    }
    if a.is_zero() {
        return Err(Error::InvalidArgument("polar factor of the zero matrix".into()));
    }
    match method {
        PolarMethod::ExactSvd => Ok(PolarFactor { q: svd(a)?.polar(), fell_back: false }),
        PolarMethod::NewtonSchulz(ns) => {
            let (q, err) = ns.iterate(a);
            if q.is_finite() && err <= ns.tolerance {
                Ok(PolarFactor { q, fell_back: false })
            } else {
                Ok(PolarFactor { q: svd(a)?.polar(), fell_back: true })
            }
        }
    }
}
