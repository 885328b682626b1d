//! Input-output matrix norms and their linear minimization oracles.
//!
//! Each [`Geometry`] fixes a norm `‖·‖` on `d_out × d_in` matrices. It exposes
//! the primal norm, the dual norm `‖·‖⋆` and the oracle
//! `lmo(S) ∈ argmin_{‖X‖ ≤ 1} ⟨S, X⟩`, which satisfies
//! `⟨S, lmo(S)⟩ = −‖S‖⋆`.
//!
//! | kind        | primal `‖W‖`                     | dual `‖S‖⋆`                      |
//! |-------------|----------------------------------|----------------------------------|
//! | `spectral`  | `σ_max(W)`                       | `Σ σᵢ(S)`                        |
//! | `rms_rms`   | `√(d_in/d_out) σ_max(W)`         | `√(d_out/d_in) Σ σᵢ(S)`          |
//! | `one_rms`   | `maxⱼ ‖W₍:,ⱼ₎‖₂ / √d_out`        | `Σⱼ √d_out ‖S₍:,ⱼ₎‖₂`            |
//! | `rms_inf`   | `√d_in maxᵢ ‖W₍ᵢ,:₎‖₂`           | `Σᵢ ‖S₍ᵢ,:₎‖₂ / √d_in`           |
//! | `one_inf`   | `maxᵢⱼ |Wᵢⱼ|`                    | `Σᵢⱼ |Sᵢⱼ|`                      |
//! | `frobenius` | `‖W‖_F`                          | `‖S‖_F`                          |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::svd::{polar_factor, svd, PolarMethod};

/// Relative tolerance of the duality cross-check applied to iterative LMOs.
pub const ITERATIVE_LMO_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    Spectral,
    RmsToRms,
    OneToRms,
    RmsToInf,
    OneToInf,
    Frobenius,
}

impl GeometryKind {
    pub const ALL: [GeometryKind; 6] = [
        GeometryKind::Spectral,
        GeometryKind::RmsToRms,
        GeometryKind::OneToRms,
        GeometryKind::RmsToInf,
        GeometryKind::OneToInf,
        GeometryKind::Frobenius,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GeometryKind::Spectral => "spectral",
            GeometryKind::RmsToRms => "rms_rms",
            GeometryKind::OneToRms => "one_rms",
            GeometryKind::RmsToInf => "rms_inf",
            GeometryKind::OneToInf => "one_inf",
            GeometryKind::Frobenius => "frobenius",
        }
    }

    /// Whether the oracle goes through a polar factor.
    pub fn is_spectral_family(self) -> bool {
        matches!(self, GeometryKind::Spectral | GeometryKind::RmsToRms)
    }
}

impl fmt::Display for GeometryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GeometryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GeometryKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown geometry kind `{s}`")))
    }
}

/// A norm family bound to a matrix shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    kind: GeometryKind,
    d_out: usize,
    d_in: usize,
    polar: PolarMethod,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmoReport {
    pub direction: Matrix,
    pub dual_norm_value: f64,
    /// `⟨S, direction⟩`.
    pub pairing: f64,
    /// An iterative polar factor was requested and rejected in favour of SVD.
    pub fell_back: bool,
}

impl Geometry {
    pub fn new(kind: GeometryKind, d_out: usize, d_in: usize) -> Result<Self> {
        if d_out == 0 || d_in == 0 {
            return Err(Error::InvalidArgument(format!("empty geometry shape {d_out}x{d_in}")));
        }
        Ok(Self { kind, d_out, d_in, polar: PolarMethod::ExactSvd })
    }

    /// Use `method` for the polar factor of spectral-family oracles.
    pub fn with_polar(mut self, method: PolarMethod) -> Self {
        self.polar = method;
        self
    }

    pub fn kind(&self) -> GeometryKind {
        self.kind
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.d_out, self.d_in)
    }

    pub fn polar_method(&self) -> &PolarMethod {
        &self.polar
    }

    fn check(&self, w: &Matrix) -> Result<()> {
        if w.shape() != self.shape() {
            return Err(Error::Shape(format!(
                "{} geometry is {}x{}, matrix is {}x{}",
                self.kind,
                self.d_out,
                self.d_in,
                w.rows(),
                w.cols()
            )));
        }
        Ok(())
    }

    fn in_over_out(&self) -> f64 {
        (self.d_in as f64 / self.d_out as f64).sqrt()
    }

    pub fn primal_norm(&self, w: &Matrix) -> Result<f64> {
        self.check(w)?;
        let (m, n) = (self.d_out as f64, self.d_in as f64);
        Ok(match self.kind {
            GeometryKind::Spectral => sigma_max(w)?,
            GeometryKind::RmsToRms => self.in_over_out() * sigma_max(w)?,
            GeometryKind::OneToRms => column_norms(w).into_iter().fold(0.0, f64::max) / m.sqrt(),
            GeometryKind::RmsToInf => n.sqrt() * row_norms(w).into_iter().fold(0.0, f64::max),
            GeometryKind::OneToInf => w.max_abs(),
            GeometryKind::Frobenius => w.frobenius_norm(),
        })
    }

    pub fn dual_norm(&self, s: &Matrix) -> Result<f64> {
        self.check(s)?;
        let (m, n) = (self.d_out as f64, self.d_in as f64);
        Ok(match self.kind {
            GeometryKind::Spectral => nuclear(s)?,
            GeometryKind::RmsToRms => nuclear(s)? / self.in_over_out(),
            GeometryKind::OneToRms => m.sqrt() * column_norms(s).into_iter().sum::<f64>(),
            GeometryKind::RmsToInf => row_norms(s).into_iter().sum::<f64>() / n.sqrt(),
            GeometryKind::OneToInf => s.as_slice().iter().map(|v| v.abs()).sum(),
            GeometryKind::Frobenius => s.frobenius_norm(),
        })
    }

    /// Linear minimization oracle over the unit ball.
    ///
    /// The input is first divided entrywise by its largest absolute entry, so
    /// `lmo(α·S)` and `lmo(S)` see the same normalized matrix whenever `α·S`
    /// is exactly representable. Zero rows, columns or entries map to zero.
    pub fn lmo(&self, s: &Matrix) -> Result<LmoReport> {
        self.check(s)?;
        if !s.is_finite() {
            return Err(Error::NonFinite("lmo input".into()));
        }
        let peak = s.max_abs();
        if peak == 0.0 {
            return Ok(LmoReport {
                direction: Matrix::zeros(self.d_out, self.d_in),
                dual_norm_value: 0.0,
                pairing: 0.0,
                fell_back: false,
            });
        }
        let t = s.map(|v| v / peak);
        let (m, n) = (self.d_out as f64, self.d_in as f64);
        let mut fell_back = false;
        let (direction, dual_t) = match self.kind {
            GeometryKind::Spectral | GeometryKind::RmsToRms => {
                let c = if self.kind == GeometryKind::Spectral { 1.0 } else { 1.0 / self.in_over_out() };
                let (q, nuc, fb) = self.polar_of(&t)?;
                fell_back = fb;
                (q.map(|v| -c * v), c * nuc)
            }
            GeometryKind::OneToRms => {
                let norms = column_norms(&t);
                let d = Matrix::from_fn(self.d_out, self.d_in, |i, j| {
                    if norms[j] == 0.0 { 0.0 } else { -m.sqrt() * (t[(i, j)] / norms[j]) }
                });
                (d, m.sqrt() * norms.iter().sum::<f64>())
            }
            GeometryKind::RmsToInf => {
                let norms = row_norms(&t);
                let d = Matrix::from_fn(self.d_out, self.d_in, |i, j| {
                    if norms[i] == 0.0 { 0.0 } else { -(t[(i, j)] / norms[i]) / n.sqrt() }
                });
                (d, norms.iter().sum::<f64>() / n.sqrt())
            }
            GeometryKind::OneToInf => {
                let d = t.map(|v| if v > 0.0 { -1.0 } else if v < 0.0 { 1.0 } else { 0.0 });
                (d, t.as_slice().iter().map(|v| v.abs()).sum())
            }
            GeometryKind::Frobenius => {
                let f = t.frobenius_norm();
                (t.map(|v| -(v / f)), f)
            }
        };
        let pairing = s.dot(&direction)?;
        Ok(LmoReport { direction, dual_norm_value: peak * dual_t, pairing, fell_back })
    }

    /// Closed-form dual norm of the rank-one matrix `u vᵀ`.
    pub fn rank_one_dual(&self, u: &[f64], v: &[f64]) -> f64 {
        let l2 = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
        let l1 = |x: &[f64]| x.iter().map(|a| a.abs()).sum::<f64>();
        let (m, n) = (self.d_out as f64, self.d_in as f64);
        match self.kind {
            GeometryKind::Spectral | GeometryKind::Frobenius => l2(u) * l2(v),
            GeometryKind::RmsToRms => (m / n).sqrt() * l2(u) * l2(v),
            GeometryKind::OneToRms => m.sqrt() * l2(u) * l1(v),
            GeometryKind::RmsToInf => l1(u) * l2(v) / n.sqrt(),
            GeometryKind::OneToInf => l1(u) * l1(v),
        }
    }

    /// Polar factor of `t` plus its nuclear norm; applies the duality
    /// cross-check when the iterative method is selected.
    fn polar_of(&self, t: &Matrix) -> Result<(Matrix, f64, bool)> {
        match &self.polar {
            PolarMethod::ExactSvd => {
                let dec = svd(t)?;
                Ok((dec.polar(), dec.nuclear_norm(), false))
            }
            method @ PolarMethod::NewtonSchulz(_) => {
                let pf = polar_factor(t, method)?;
                let nuc = svd(t)?.nuclear_norm();
                let gap = (t.dot(&pf.q)? - nuc).abs();
                if pf.fell_back || gap <= ITERATIVE_LMO_TOLERANCE * nuc {
                    Ok((pf.q, nuc, pf.fell_back))
                } else {
                    Ok((svd(t)?.polar(), nuc, true))
                }
            }
        }
    }
}

fn sigma_max(w: &Matrix) -> Result<f64> {
    if w.is_zero() {
        return Ok(0.0);
    }
    Ok(svd(w)?.sigma[0])
}

fn nuclear(s: &Matrix) -> Result<f64> {
    if s.is_zero() {
        return Ok(0.0);
    }
    Ok(svd(s)?.nuclear_norm())
}

fn column_norms(w: &Matrix) -> Vec<f64> {
    let mut acc = vec![0.0; w.cols()];
    for i in 0..w.rows() {
        for (a, v) in acc.iter_mut().zip(w.row(i)) {
            *a += v * v;
        }
    }
    acc.into_iter().map(f64::sqrt).collect()
}

fn row_norms(w: &Matrix) -> Vec<f64> {
    (0..w.rows()).map(|i| w.row(i).iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
}
