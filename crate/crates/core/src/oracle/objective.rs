use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Geometry, GeometryKind};
use crate::matrix::Matrix;

/// `max |φ'''(t)|` for `φ(t) = t²/(1+t²)`, attained at `t = tan(π/10)`.
const BOUNDED_WELL_THIRD_DERIVATIVE_MAX: f64 = 4.668_559_284_155_215;

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveKind {
    /// `½‖X − target‖²_F`
    Quadratic { target: Matrix },
    /// `Σᵢⱼ φ(Xᵢⱼ − targetᵢⱼ)` with `φ(t) = t²/(1+t²)`; bounded and
    /// Hessian-Lipschitz.
    BoundedWell { target: Matrix },
    /// `¼‖X·Xᵀ − gram_target‖²_F` for `X ∈ ℝ^{m×n}`, `gram_target ∈ ℝ^{m×m}`.
    FactorResidual { gram_target: Matrix },
}

/// Declared constants for the generalized smoothness bounds in a given
/// geometry:
///
/// * `‖∇F(Y) − ∇F(X)‖⋆ ≤ (l0 + l1‖∇F(X)‖⋆)‖Y − X‖`
/// * `‖∇F(Y) − ∇F(X) − ∇²F(X)[Y − X]‖⋆ ≤ l2‖Y − X‖²`
///
/// both for `‖Y − X‖ ≤ 1/l1`, and `F ≥ f_star`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessConstants {
    pub l0: f64,
    pub l1: f64,
    pub l2: f64,
    pub f_star: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    kind: ObjectiveKind,
    constants: SmoothnessConstants,
    rows: usize,
    cols: usize,
}

impl Objective {
    pub fn quadratic(target: Matrix) -> Self {
        let (rows, cols) = target.shape();
        Self {
            kind: ObjectiveKind::Quadratic { target },
            constants: SmoothnessConstants { l0: 1.0, l1: 0.0, l2: 0.0, f_star: 0.0 },
            rows,
            cols,
        }
    }

    pub fn bounded_well(target: Matrix) -> Self {
        let (rows, cols) = target.shape();
        Self {
            kind: ObjectiveKind::BoundedWell { target },
            constants: SmoothnessConstants {
                l0: 2.0,
                l1: 0.0,
                l2: 0.5 * BOUNDED_WELL_THIRD_DERIVATIVE_MAX,
                f_star: 0.0,
            },
            rows,
            cols,
        }
    }

    /// The constants default to zero smoothness (they must be calibrated);
    /// `f_star` is 0, which is the infimum whenever `gram_target` is PSD of
    /// rank at most `cols`.
    pub fn factor_residual(gram_target: Matrix, cols: usize) -> Result<Self> {
        if gram_target.rows() != gram_target.cols() {
            return Err(Error::Shape("gram target must be square".into()));
        }
        if cols == 0 {
            return Err(Error::Shape("factor must have at least one column".into()));
        }
        Ok(Self {
            rows: gram_target.rows(),
            cols,
            kind: ObjectiveKind::FactorResidual { gram_target },
            constants: SmoothnessConstants { l0: 0.0, l1: 0.0, l2: 0.0, f_star: 0.0 },
        })
    }

    pub fn with_constants(mut self, constants: SmoothnessConstants) -> Self {
        self.constants = constants;
        self
    }

    pub fn kind(&self) -> &ObjectiveKind {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ObjectiveKind::Quadratic { .. } => "quadratic",
            ObjectiveKind::BoundedWell { .. } => "bounded_well",
            ObjectiveKind::FactorResidual { .. } => "factor_residual",
        }
    }

    pub fn constants(&self) -> &SmoothnessConstants {
        &self.constants
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// A natural centre for initial points and probes: the target, or zero.
    pub fn anchor(&self) -> Matrix {
        match &self.kind {
            ObjectiveKind::Quadratic { target } | ObjectiveKind::BoundedWell { target } => target.clone(),
            ObjectiveKind::FactorResidual { .. } => Matrix::zeros(self.rows, self.cols),
        }
    }

    fn check(&self, x: &Matrix) -> Result<()> {
        if x.shape() != self.shape() {
            return Err(Error::Shape(format!(
                "objective expects {}x{}, got {}x{}",
                self.rows,
                self.cols,
                x.rows(),
                x.cols()
            )));
        }
        Ok(())
    }

    pub fn value(&self, x: &Matrix) -> Result<f64> {
        self.check(x)?;
        Ok(match &self.kind {
            ObjectiveKind::Quadratic { target } => {
                let d = x.sub(target)?.frobenius_norm();
                0.5 * d * d
            }
            ObjectiveKind::BoundedWell { target } => x
                .as_slice()
                .iter()
                .zip(target.as_slice())
                .map(|(a, b)| {
                    let t = a - b;
                    t * t / (1.0 + t * t)
                })
                .sum(),
            ObjectiveKind::FactorResidual { gram_target } => {
                let r = x.matmul(&x.transpose())?.sub(gram_target)?.frobenius_norm();
                0.25 * r * r
            }
        })
    }

    pub fn gradient(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        match &self.kind {
            ObjectiveKind::Quadratic { target } => x.sub(target),
            ObjectiveKind::BoundedWell { target } => x.zip_map(target, |a, b| {
                let t = a - b;
                let q = 1.0 + t * t;
                2.0 * t / (q * q)
            }),
            ObjectiveKind::FactorResidual { gram_target } => {
                x.matmul(&x.transpose())?.sub(gram_target)?.matmul(x)
            }
        }
    }

    /// Hessian-vector product `∇²F(x)[d]`.
    pub fn hessian_apply(&self, x: &Matrix, d: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        self.check(d)?;
        match &self.kind {
            ObjectiveKind::Quadratic { .. } => Ok(d.clone()),
            ObjectiveKind::BoundedWell { target } => {
                let curv = x.zip_map(target, |a, b| {
                    let t2 = (a - b) * (a - b);
                    (2.0 - 6.0 * t2) / (1.0 + t2).powi(3)
                })?;
                curv.zip_map(d, |c, v| c * v)
            }
            ObjectiveKind::FactorResidual { gram_target } => {
                // (D Xᵀ + X Dᵀ) X + (X Xᵀ − G) D
                let dxt = d.matmul(&x.transpose())?;
                let sym = dxt.add(&dxt.transpose())?;
                let resid = x.matmul(&x.transpose())?.sub(gram_target)?;
                sym.matmul(x)?.add(&resid.matmul(d)?)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveName {
    Quadratic,
    BoundedWell,
    FactorResidual,
}

impl FromStr for ObjectiveName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(Self::Quadratic),
            "bounded_well" => Ok(Self::BoundedWell),
            "factor_residual" => Ok(Self::FactorResidual),
            other => Err(Error::InvalidArgument(format!("unknown objective kind `{other}`"))),
        }
    }
}

impl fmt::Display for ObjectiveName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Quadratic => "quadratic",
            Self::BoundedWell => "bounded_well",
            Self::FactorResidual => "factor_residual",
        })
    }
}

/// Constants `(c_dual, c_primal)` with `‖S‖⋆ ≤ c_dual‖S‖_F` and
/// `‖W‖_F ≤ c_primal‖W‖` on `d_out × d_in` matrices.
pub fn norm_equivalence(kind: GeometryKind, d_out: usize, d_in: usize) -> (f64, f64) {
    let (m, n) = (d_out as f64, d_in as f64);
    let r = m.min(n);
    match kind {
        GeometryKind::Spectral => (r.sqrt(), r.sqrt()),
        GeometryKind::RmsToRms => ((m / n).sqrt() * r.sqrt(), r.sqrt() * (m / n).sqrt()),
        GeometryKind::OneToRms => ((m * n).sqrt(), (m * n).sqrt()),
        GeometryKind::RmsToInf => ((m / n).sqrt(), (m / n).sqrt()),
        GeometryKind::OneToInf => ((m * n).sqrt(), (m * n).sqrt()),
        GeometryKind::Frobenius => (1.0, 1.0),
    }
}

/// Euclidean constants of `objective` carried into `geometry` through the
/// worst-case norm-equivalence factors. `None` for objectives without global
/// analytic constants (the factor residual), which must be calibrated.
pub fn analytic_constants(objective: &Objective, geometry: &Geometry) -> Option<SmoothnessConstants> {
    let (l0, l2) = match objective.kind() {
        ObjectiveKind::Quadratic { .. } => (1.0, 0.0),
        ObjectiveKind::BoundedWell { .. } => (2.0, 0.5 * BOUNDED_WELL_THIRD_DERIVATIVE_MAX),
        ObjectiveKind::FactorResidual { .. } => return None,
    };
    let (cd, cp) = norm_equivalence(geometry.kind(), geometry.d_out(), geometry.d_in());
    Some(SmoothnessConstants { l0: l0 * cd * cp, l1: 0.0, l2: l2 * cd * cp * cp, f_star: 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Central-difference gradient, independent of the analytic formulas.
    fn fd_gradient(obj: &Objective, x: &Matrix, h: f64) -> Matrix {
        let mut g = Matrix::zeros(x.rows(), x.cols());
        for k in 0..x.as_slice().len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp.as_mut_slice()[k] += h;
            xm.as_mut_slice()[k] -= h;
            g.as_mut_slice()[k] = (obj.value(&xp).unwrap() - obj.value(&xm).unwrap()) / (2.0 * h);
        }
        g
    }

    fn objectives(rng: &mut ChaCha8Rng) -> Vec<Objective> {
        let t = Matrix::gaussian(3, 4, 1.0, rng);
        let f = Matrix::gaussian(3, 2, 1.0, rng);
        vec![
            Objective::quadratic(t.clone()),
            Objective::bounded_well(t),
            Objective::factor_residual(f.matmul(&f.transpose()).unwrap(), 4).unwrap(),
        ]
    }

    #[test]
    fn minimizers_have_zero_value() {
        let t = Matrix::from_rows(&[&[1.0, -2.0], &[0.5, 3.0]]).unwrap();
        assert_eq!(Objective::quadratic(t.clone()).value(&t).unwrap(), 0.0);
        assert_eq!(Objective::bounded_well(t.clone()).value(&t).unwrap(), 0.0);
        assert!(Objective::quadratic(t.clone()).gradient(&t).unwrap().is_zero());
        let gram = t.matmul(&t.transpose()).unwrap();
        assert_eq!(Objective::factor_residual(gram, 2).unwrap().value(&t).unwrap(), 0.0);
    }

    #[test]
    fn bounded_well_is_bounded_by_entry_count() {
        let t = Matrix::zeros(2, 3);
        let obj = Objective::bounded_well(t);
        let far = Matrix::from_vec(2, 3, vec![1e8; 6]).unwrap();
        assert!(obj.value(&far).unwrap() <= 6.0);
        let mid = Matrix::from_vec(2, 3, vec![3.0; 6]).unwrap();
        assert!((obj.value(&mid).unwrap() - 5.4).abs() < 1e-12);
    }

    #[test]
    fn bounded_well_scalar_slope() {
        let obj = Objective::bounded_well(Matrix::zeros(1, 1));
        let g = obj.gradient(&Matrix::from_vec(1, 1, vec![1.0]).unwrap()).unwrap();
        assert_eq!(g[(0, 0)], 0.5);
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for obj in objectives(&mut rng) {
            for _ in 0..10 {
                let x = Matrix::gaussian(3, 4, 1.0, &mut rng);
                let g = obj.gradient(&x).unwrap();
                let fd = fd_gradient(&obj, &x, 1e-5);
                let rel = g.sub(&fd).unwrap().frobenius_norm() / g.frobenius_norm().max(1e-12);
                assert!(rel <= 1e-5, "{}: rel {rel}", obj.kind_name());
            }
        }
    }

    #[test]
    fn hessian_products_match_gradient_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for obj in objectives(&mut rng) {
            let x = Matrix::gaussian(3, 4, 1.0, &mut rng);
            let d = Matrix::gaussian(3, 4, 1.0, &mut rng);
            let h = 1e-5;
            let gp = obj.gradient(&x.add_scaled(h, &d).unwrap()).unwrap();
            let gm = obj.gradient(&x.add_scaled(-h, &d).unwrap()).unwrap();
            let fd = gp.sub(&gm).unwrap().scale(0.5 / h);
            let hv = obj.hessian_apply(&x, &d).unwrap();
            let rel = hv.sub(&fd).unwrap().frobenius_norm() / hv.frobenius_norm();
            assert!(rel <= 1e-6, "{}: rel {rel}", obj.kind_name());
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let obj = Objective::quadratic(Matrix::zeros(2, 2));
        assert!(matches!(obj.value(&Matrix::zeros(2, 3)), Err(Error::Shape(_))));
        assert!(matches!(obj.gradient(&Matrix::zeros(3, 2)), Err(Error::Shape(_))));
    }

    #[test]
    fn norm_equivalence_bounds_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for kind in GeometryKind::ALL {
            for &(m, n) in &[(2, 5), (6, 3), (4, 4)] {
                let g = Geometry::new(kind, m, n).unwrap();
                let (cd, cp) = norm_equivalence(kind, m, n);
                for _ in 0..50 {
                    let a = Matrix::gaussian(m, n, 1.0, &mut rng);
                    let f = a.frobenius_norm();
                    assert!(g.dual_norm(&a).unwrap() <= cd * f * (1.0 + 1e-12), "{kind} dual");
                    assert!(f <= cp * g.primal_norm(&a).unwrap() * (1.0 + 1e-12), "{kind} primal");
                }
            }
        }
    }
}
