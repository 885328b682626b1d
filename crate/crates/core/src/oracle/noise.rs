use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Pareto, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::matrix::Matrix;
use crate::oracle::Objective;

/// Draws used to calibrate entrywise noise against its dual norm.
const ENTRYWISE_CALIBRATION_DRAWS: usize = 20_000;
const ENTRYWISE_CALIBRATION_SEED: u64 = 0x5eed_ca1b;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseShape {
    /// `ζ · u vᵀ / ‖u vᵀ‖⋆`: the dual norm of each draw is exactly `|ζ|`.
    #[default]
    RankOne,
    /// I.i.d. symmetric Pareto entries, rescaled empirically.
    Entrywise,
}

/// Heavy-tailed perturbation satisfying
/// `E‖G − ∇F‖⋆^p ≤ σ0^p + σ1^p ‖∇F‖⋆^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub p: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    pub tail_index: f64,
    pub shape: NoiseShape,
}

impl NoiseModel {
    /// `tail_index` defaults to `(p + 2)/2`: finite `p`-th moment, infinite
    /// variance for `p < 2`.
    pub fn new(p: f64, sigma0: f64, sigma1: f64, tail_index: Option<f64>, shape: NoiseShape) -> Result<Self> {
        if !(p > 1.0 && p <= 2.0) {
            return Err(Error::InvalidArgument(format!("p = {p} must lie in (1, 2]")));
        }
        if !(sigma0 >= 0.0 && sigma1 >= 0.0) || !sigma0.is_finite() || !sigma1.is_finite() {
            return Err(Error::InvalidArgument("noise scales must be finite and nonnegative".into()));
        }
        // (p, 2] is empty at p = 2; there any finite-variance tail is allowed.
        let light = p == 2.0;
        let tail_index = tail_index.unwrap_or(if light { 3.0 } else { (p + 2.0) / 2.0 });
        if !(tail_index > p && (light || tail_index <= 2.0)) || !tail_index.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "tail index {tail_index} must lie in (p, 2] = ({p}, 2]"
            )));
        }
        Ok(Self { p, sigma0, sigma1, tail_index, shape })
    }

    pub fn noiseless() -> Self {
        Self { p: 2.0, sigma0: 0.0, sigma1: 0.0, tail_index: 3.0, shape: NoiseShape::RankOne }
    }

    pub fn is_noiseless(&self) -> bool {
        self.sigma0 == 0.0 && self.sigma1 == 0.0
    }
}

/// Symmetric scalar with `E|ζ|^p = σ^p`: `|ζ| = z0·U^{-1/a}` with
/// `z0 = σ((a − p)/a)^{1/p}` and a fair sign.
#[derive(Debug, Clone, Copy)]
pub struct SymmetricPareto {
    magnitude: Option<Pareto<f64>>,
}

impl SymmetricPareto {
    pub fn new(p: f64, sigma: f64, tail_index: f64) -> Result<Self> {
        if !(tail_index > p) {
            return Err(Error::InvalidArgument(format!(
                "tail index {tail_index} must exceed p = {p} for a finite p-th moment"
            )));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("sigma = {sigma} must be finite and nonnegative")));
        }
        if sigma == 0.0 {
            return Ok(Self { magnitude: None });
        }
        let z0 = sigma * ((tail_index - p) / tail_index).powf(1.0 / p);
        let magnitude = Pareto::new(z0, tail_index).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(Self { magnitude: Some(magnitude) })
    }
}

impl Distribution<f64> for SymmetricPareto {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.magnitude {
            None => 0.0,
            Some(d) => {
                let m = d.sample(rng);
                if rng.random::<bool>() {
                    m
                } else {
                    -m
                }
            }
        }
    }
}

pub fn pareto_scalar<R: Rng + ?Sized>(p: f64, sigma: f64, tail_index: f64, rng: &mut R) -> Result<f64> {
    Ok(SymmetricPareto::new(p, sigma, tail_index)?.sample(rng))
}

/// A batched gradient draw `Ḡ_B(X) = (1/B) Σ G(X, ξⁱ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradSample {
    pub mean_grad: Matrix,
    pub batch: usize,
    /// Oracle calls spent on this sample (always `batch`).
    pub oracle_calls: u64,
}

/// Objective + noise model + geometry, ready to be queried.
#[derive(Debug, Clone)]
pub struct GradientOracle {
    objective: Objective,
    noise: NoiseModel,
    geometry: Geometry,
    base: SymmetricPareto,
    relative: SymmetricPareto,
    unit_entry: SymmetricPareto,
    /// Multiplier making `E‖c·N‖⋆^p = 1` for unit entrywise noise `N`.
    entrywise_scale: f64,
}

impl GradientOracle {
    pub fn new(objective: Objective, noise: NoiseModel, geometry: Geometry) -> Result<Self> {
        if objective.shape() != geometry.shape() {
            return Err(Error::Shape(format!(
                "objective is {:?}, geometry is {:?}",
                objective.shape(),
                geometry.shape()
            )));
        }
        let base = SymmetricPareto::new(noise.p, noise.sigma0, noise.tail_index)?;
        let relative = SymmetricPareto::new(noise.p, noise.sigma1, noise.tail_index)?;
        let unit_entry = SymmetricPareto::new(noise.p, 1.0, noise.tail_index)?;
        let mut oracle = Self {
            objective,
            noise,
            geometry,
            base,
            relative,
            unit_entry,
            entrywise_scale: 1.0,
        };
        if noise.shape == NoiseShape::Entrywise && !noise.is_noiseless() {
            oracle.entrywise_scale = oracle.calibrate_entrywise()?;
        }
        Ok(oracle)
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn entrywise_scale(&self) -> f64 {
        self.entrywise_scale
    }

    fn calibrate_entrywise(&self) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(ENTRYWISE_CALIBRATION_SEED);
        let (m, n) = self.geometry.shape();
        let mut acc = 0.0;
        for _ in 0..ENTRYWISE_CALIBRATION_DRAWS {
            let draw = self.unit_entrywise(m, n, &mut rng);
            acc += self.geometry.dual_norm(&draw)?.powf(self.noise.p);
        }
        let moment = acc / ENTRYWISE_CALIBRATION_DRAWS as f64;
        Ok(moment.powf(-1.0 / self.noise.p))
    }

    fn unit_entrywise<R: Rng + ?Sized>(&self, m: usize, n: usize, rng: &mut R) -> Matrix {
        Matrix::from_fn(m, n, |_, _| self.unit_entry.sample(rng))
    }

    /// One noise draw at a point whose true gradient has dual norm
    /// `grad_dual`. Returns the perturbation and, for rank-one noise, the
    /// scalar `ζ` with `‖perturbation‖⋆ = |ζ|`.
    pub fn sample_noise<R: Rng + ?Sized>(&self, grad_dual: f64, rng: &mut R) -> Result<(Matrix, f64)> {
        let (m, n) = self.geometry.shape();
        match self.noise.shape {
            NoiseShape::RankOne => {
                let zeta0 = self.base.sample(rng);
                let zeta1 = if self.noise.sigma1 > 0.0 { self.relative.sample(rng) } else { 0.0 };
                let zeta = zeta0 + zeta1 * grad_dual;
                let u = unit_vector(m, rng);
                let v = unit_vector(n, rng);
                let scale = zeta / self.geometry.rank_one_dual(&u, &v);
                Ok((Matrix::outer(&u, &v).scale(scale), zeta))
            }
            NoiseShape::Entrywise => {
                let c = self.entrywise_scale;
                let mut out = self.unit_entrywise(m, n, rng).scale(c * self.noise.sigma0);
                if self.noise.sigma1 > 0.0 {
                    let rel = self.unit_entrywise(m, n, rng);
                    out = out.add_scaled(c * self.noise.sigma1 * grad_dual, &rel)?;
                }
                Ok((out, f64::NAN))
            }
        }
    }

    /// `Ḡ_B(x)`: exact gradient plus the average of `batch` independent
    /// noise draws.
    pub fn sample_batch_grad<R: Rng + ?Sized>(&self, x: &Matrix, batch: usize, rng: &mut R) -> Result<GradSample> {
        if batch < 1 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        let grad = self.objective.gradient(x)?;
        let mean_grad = if self.noise.is_noiseless() {
            grad
        } else {
            let grad_dual = if self.noise.sigma1 > 0.0 { self.geometry.dual_norm(&grad)? } else { 0.0 };
            let (m, n) = grad.shape();
            let mut acc = Matrix::zeros(m, n);
            for _ in 0..batch {
                let (noise, _) = self.sample_noise(grad_dual, rng)?;
                acc = acc.add(&noise)?;
            }
            grad.add_scaled(1.0 / batch as f64, &acc)?
        };
        Ok(GradSample { mean_grad, batch, oracle_calls: batch as u64 })
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometryKind;

    fn oracle(kind: GeometryKind, noise: NoiseModel) -> GradientOracle {
        let obj = Objective::quadratic(Matrix::zeros(3, 4));
        GradientOracle::new(obj, noise, Geometry::new(kind, 3, 4).unwrap()).unwrap()
    }

    #[test]
    fn zero_sigma_is_deterministic_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(pareto_scalar(1.5, 0.0, 1.75, &mut rng).unwrap(), 0.0);
        }
    }

    #[test]
    fn tail_index_must_exceed_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(pareto_scalar(1.5, 1.0, 1.5, &mut rng).is_err());
        assert!(NoiseModel::new(1.5, 1.0, 0.0, Some(1.4), NoiseShape::RankOne).is_err());
        assert!(NoiseModel::new(2.5, 1.0, 0.0, None, NoiseShape::RankOne).is_err());
        assert!(NoiseModel::new(1.0, 1.0, 0.0, None, NoiseShape::RankOne).is_err());
        assert_eq!(NoiseModel::new(1.5, 1.0, 0.0, None, NoiseShape::RankOne).unwrap().tail_index, 1.75);
    }

    #[test]
    fn noiseless_batch_is_exact_gradient() {
        let o = oracle(GeometryKind::Spectral, NoiseModel::new(1.5, 0.0, 0.0, None, NoiseShape::RankOne).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Matrix::gaussian(3, 4, 1.0, &mut rng);
        let s = o.sample_batch_grad(&x, 7, &mut rng).unwrap();
        assert_eq!(s.mean_grad, o.objective().gradient(&x).unwrap());
        assert_eq!(s.oracle_calls, 7);
    }

    #[test]
    fn zero_batch_is_rejected() {
        let o = oracle(GeometryKind::Spectral, NoiseModel::noiseless());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(o.sample_batch_grad(&Matrix::zeros(3, 4), 0, &mut rng).is_err());
    }

    #[test]
    fn rank_one_noise_has_dual_norm_zeta() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for kind in GeometryKind::ALL {
            let o = oracle(kind, NoiseModel::new(1.5, 1.0, 0.5, None, NoiseShape::RankOne).unwrap());
            for _ in 0..20 {
                let (n, zeta) = o.sample_noise(2.0, &mut rng).unwrap();
                let d = o.geometry().dual_norm(&n).unwrap();
                assert!((d - zeta.abs()).abs() <= 1e-12 * zeta.abs().max(1.0), "{kind}: {d} vs {zeta}");
            }
        }
    }

    #[test]
    fn entrywise_calibration_hits_target_moment() {
        let noise = NoiseModel::new(1.5, 2.0, 0.0, None, NoiseShape::Entrywise).unwrap();
        let o = oracle(GeometryKind::Spectral, noise);
        // replay the calibration stream: the p-th moment matches σ0^p
        let mut rng = ChaCha8Rng::seed_from_u64(ENTRYWISE_CALIBRATION_SEED);
        let mut acc = 0.0;
        for _ in 0..ENTRYWISE_CALIBRATION_DRAWS {
            let (draw, _) = o.sample_noise(0.0, &mut rng).unwrap();
            acc += o.geometry().dual_norm(&draw).unwrap().powf(1.5);
        }
        let moment = acc / ENTRYWISE_CALIBRATION_DRAWS as f64;
        assert!((moment / 2f64.powf(1.5) - 1.0).abs() <= 0.05, "moment {moment}");
    }
}
