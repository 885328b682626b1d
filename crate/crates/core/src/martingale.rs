//! Lower estimates of the martingale factor
//!
//! ```text
//! τ(‖·‖⋆, m, n, p) = sup E‖Σₜ Zₜ‖⋆ / E(Σₜ ‖Zₜ‖⋆^p)^{1/p}
//! ```
//!
//! over martingale difference sequences `Zₜ ∈ ℝ^{m×n}`. The supremum is not
//! computable; each [`FamilyKind`] is one explicit sequence whose ratio
//! bounds `τ` from below.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Geometry, GeometryKind};
use crate::matrix::Matrix;

/// Sequence length used for the non-diagonal families in [`scaling_slope`].
pub const DEFAULT_SEQUENCE_LENGTH: usize = 64;

const TRIALS_PER_BLOCK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// `Z_k = ε_k E_{kk}` with fair signs, cycling over the diagonal.
    DiagSign,
    /// `Z_t = γ_t u_t v_tᵀ`: standard normal `γ`, uniform unit `u`, `v`.
    RankOneGaussian,
    /// Matrices of i.i.d. fair signs.
    EntrywiseSign,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::DiagSign => "diag_sign",
            FamilyKind::RankOneGaussian => "rank_one_gaussian",
            FamilyKind::EntrywiseSign => "entrywise_sign",
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [FamilyKind::DiagSign, FamilyKind::RankOneGaussian, FamilyKind::EntrywiseSign]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown martingale family `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MartingaleFamily {
    pub kind: FamilyKind,
    pub m: usize,
    pub n: usize,
    /// Number of terms `T`.
    pub length: usize,
}

impl MartingaleFamily {
    pub fn new(kind: FamilyKind, m: usize, n: usize, length: usize) -> Result<Self> {
        if m == 0 || n == 0 || length == 0 {
            return Err(Error::InvalidArgument("family needs a nonempty shape and at least one term".into()));
        }
        Ok(Self { kind, m, n, length })
    }

    /// `(‖Σ Z_t‖⋆, (Σ ‖Z_t‖⋆^p)^{1/p})` for one realization.
    fn realize<R: Rng + ?Sized>(&self, g: &Geometry, p: f64, unit_diag: &[f64], rng: &mut R) -> Result<(f64, f64)> {
        let mut sum = Matrix::zeros(self.m, self.n);
        let mut agg = 0.0;
        match self.kind {
            FamilyKind::DiagSign => {
                let r = self.m.min(self.n);
                for k in 0..self.length {
                    let eps = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    sum[(k % r, k % r)] += eps;
                    agg += unit_diag[k % r].powf(p);
                }
            }
            FamilyKind::RankOneGaussian => {
                for _ in 0..self.length {
                    let gamma: f64 = rng.sample(StandardNormal);
                    let u = unit_vector(self.m, rng);
                    let v = unit_vector(self.n, rng);
                    agg += (gamma.abs() * g.rank_one_dual(&u, &v)).powf(p);
                    let data = sum.as_mut_slice();
                    for (i, &ui) in u.iter().enumerate() {
                        let a = gamma * ui;
                        for (d, &vj) in data[i * self.n..(i + 1) * self.n].iter_mut().zip(&v) {
                            *d += a * vj;
                        }
                    }
                }
            }
            FamilyKind::EntrywiseSign => {
                for _ in 0..self.length {
                    let z = Matrix::from_fn(self.m, self.n, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
                    agg += g.dual_norm(&z)?.powf(p);
                    sum = sum.add(&z)?;
                }
            }
        }
        Ok((g.dual_norm(&sum)?, agg.powf(1.0 / p)))
    }
}

fn unit_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm > 1e-300 {
            return v.into_iter().map(|x| x / nrm).collect();
        }
    }
}

fn check_p(p: f64) -> Result<()> {
    if p > 1.0 && p <= 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("p = {p} must lie in (1, 2]")))
    }
}

/// Exact ratio `r^{1 − 1/p}` of the diagonal-sign family under the nuclear
/// norm, cross-checked against one drawn realization.
pub fn diag_sign_ratio(r: usize, p: f64) -> Result<f64> {
    check_p(p)?;
    if r < 1 {
        return Err(Error::InvalidArgument("r must be at least 1".into()));
    }
    let exact = (r as f64).powf(1.0 - 1.0 / p);
    let fam = MartingaleFamily::new(FamilyKind::DiagSign, r, r, r)?;
    let g = Geometry::new(GeometryKind::Spectral, r, r)?;
    let unit = vec![1.0; r];
    let mut rng = ChaCha8Rng::seed_from_u64(r as u64);
    let (num, den) = fam.realize(&g, p, &unit, &mut rng)?;
    let drawn = num / den;
    if (drawn - exact).abs() > 1e-9 * exact {
        return Err(Error::InvalidArgument(format!(
            "diagonal-sign realization gave {drawn}, expected {exact}"
        )));
    }
    Ok(exact)
}

/// Monte-Carlo estimate of `E‖Σ Z‖⋆ / E(Σ‖Z‖⋆^p)^{1/p}` for one family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauEstimate {
    pub trials: usize,
    pub numerator: f64,
    pub denominator: f64,
    /// Standard error of the numerator mean.
    pub numerator_se: f64,
    /// Standard error of the denominator mean.
    pub denominator_se: f64,
}

impl TauEstimate {
    /// Zero when the denominator is zero.
    pub fn ratio(&self) -> f64 {
        if self.denominator == 0.0 {
            0.0
        } else {
            self.numerator / self.denominator
        }
    }
}

/// Trials run in blocks of 256; block `b` uses a ChaCha8 generator seeded
/// with one `u64` drawn from `rng` and switched to stream `b`, so the result
/// does not depend on thread scheduling.
pub fn estimate_tau_lower<R: Rng + ?Sized>(
    fam: &MartingaleFamily,
    g: &Geometry,
    p: f64,
    trials: usize,
    rng: &mut R,
) -> Result<TauEstimate> {
    check_p(p)?;
    if trials < 1 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    if g.shape() != (fam.m, fam.n) {
        return Err(Error::Shape(format!("family is {}x{}, geometry is {:?}", fam.m, fam.n, g.shape())));
    }
    let r = fam.m.min(fam.n);
    let unit_diag: Vec<f64> = (0..r)
        .map(|k| {
            let mut e = Matrix::zeros(fam.m, fam.n);
            e[(k, k)] = 1.0;
            g.dual_norm(&e)
        })
        .collect::<Result<_>>()?;
    let master: u64 = rng.random();
    let blocks = trials.div_ceil(TRIALS_PER_BLOCK);
    let sums: Vec<[f64; 4]> = (0..blocks)
        .into_par_iter()
        .map(|b| -> Result<[f64; 4]> {
            let mut block_rng = ChaCha8Rng::seed_from_u64(master);
            block_rng.set_stream(b as u64);
            let count = TRIALS_PER_BLOCK.min(trials - b * TRIALS_PER_BLOCK);
            let mut acc = [0.0; 4];
            for _ in 0..count {
                let (num, den) = fam.realize(g, p, &unit_diag, &mut block_rng)?;
                acc[0] += num;
                acc[1] += num * num;
                acc[2] += den;
                acc[3] += den * den;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut tot = [0.0; 4];
    for s in &sums {
        for (t, v) in tot.iter_mut().zip(s) {
            *t += v;
        }
    }
    let n = trials as f64;
    let se = |sum: f64, sq: f64| {
        if trials < 2 {
            return 0.0;
        }
        let mean = sum / n;
        ((sq / n - mean * mean).max(0.0) * n / (n - 1.0) / n).sqrt()
    };
    Ok(TauEstimate {
        trials,
        numerator: tot[0] / n,
        denominator: tot[2] / n,
        numerator_se: se(tot[0], tot[1]),
        denominator_se: se(tot[2], tot[3]),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// `(r, estimated ratio)` per size.
    pub points: Vec<(usize, f64)>,
}

/// Least-squares slope of `log ratio` against `log r` over square `r × r`
/// shapes. The diagonal-sign family uses `r` terms; the others use
/// [`DEFAULT_SEQUENCE_LENGTH`].
pub fn scaling_slope<R: Rng + ?Sized>(
    p: f64,
    sizes: &[usize],
    geometry: GeometryKind,
    family: FamilyKind,
    trials: usize,
    rng: &mut R,
) -> Result<SlopeFit> {
    check_p(p)?;
    let mut distinct = sizes.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::InvalidArgument("scaling fit needs at least 3 distinct sizes".into()));
    }
    if distinct[0] < 2 {
        return Err(Error::InvalidArgument("sizes must be at least 2".into()));
    }
    let mut points = Vec::with_capacity(distinct.len());
    for &r in &distinct {
        let length = if family == FamilyKind::DiagSign { r } else { DEFAULT_SEQUENCE_LENGTH };
        let fam = MartingaleFamily::new(family, r, r, length)?;
        let g = Geometry::new(geometry, r, r)?;
        let est = estimate_tau_lower(&fam, &g, p, trials, rng)?;
        points.push((r, est.ratio()));
    }
    let xs: Vec<f64> = points.iter().map(|&(r, _)| (r as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, v)| v.ln()).collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::InvalidArgument("a size produced a zero ratio; slope undefined".into()));
    }
    let (slope, intercept) = least_squares(&xs, &ys);
    Ok(SlopeFit { slope, intercept, points })
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// `2√(2mn)`: no martingale ratio can exceed this for any norm.
pub fn universal_cap(m: usize, n: usize) -> f64 {
    2.0 * (2.0 * (m * n) as f64).sqrt()
}
