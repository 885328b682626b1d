use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::geometry::{Geometry, GeometryKind};
use crate::martingale::{diag_sign_ratio, scaling_slope, FamilyKind};
use crate::matrix::Matrix;
use crate::oracle::{GradientOracle, NoiseModel, NoiseShape, Objective, ObjectiveName};
use crate::svd::{polar_factor, svd, NewtonSchulz, PolarMethod};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestReport {
    pub suites: Vec<SuiteResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }
}

impl fmt::Display for SelftestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.suites {
            writeln!(f, "{} {}: {}", if s.passed { "PASS" } else { "FAIL" }, s.name, s.detail)?;
        }
        write!(f, "{}", if self.passed() { "selftest passed" } else { "selftest FAILED" })
    }
}

/// Deliberate defects for checking that the suites can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Faults {
    /// Negate the oracle direction of this geometry in the duality suite.
    pub flip_lmo_sign: Option<GeometryKind>,
}

type Suite = fn(Faults) -> Result<(bool, String)>;

/// Runs every suite with fixed internal seeds.
pub fn selftest(faults: Faults) -> SelftestReport {
    let suites: [(&'static str, Suite); 6] = [
        ("lmo_duality", lmo_duality),
        ("scale_invariance", scale_invariance),
        ("polar_agreement", polar_agreement),
        ("gradient_fd", gradient_fd),
        ("moment_calibration", moment_calibration),
        ("tau_slope", tau_slope),
    ];
    let suites = suites
        .into_iter()
        .map(|(name, suite)| match suite(faults) {
            Ok((passed, detail)) => SuiteResult { name, passed, detail },
            Err(e) => SuiteResult { name, passed: false, detail: format!("error: {e}") },
        })
        .collect();
    SelftestReport { suites }
}

const SHAPES: [(usize, usize); 3] = [(2, 3), (8, 8), (16, 4)];

fn lmo_duality(faults: Faults) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut failed: Vec<&str> = Vec::new();
    let mut worst = 0.0f64;
    for kind in GeometryKind::ALL {
        for (m, n) in SHAPES {
            let g = Geometry::new(kind, m, n)?;
            for _ in 0..50 {
                let s = Matrix::gaussian(m, n, 1.0, &mut rng);
                let mut d = g.lmo(&s)?.direction;
                if faults.flip_lmo_sign == Some(kind) {
                    d = d.scale(-1.0);
                }
                let dual = g.dual_norm(&s)?;
                let gap = (s.dot(&d)? + dual).abs() / dual;
                let feasible = g.primal_norm(&d)? <= 1.0 + 1e-8;
                worst = worst.max(gap);
                if (gap > 1e-8 || !feasible) && !failed.contains(&kind.name()) {
                    failed.push(kind.name());
                }
            }
        }
    }
    if failed.is_empty() {
        Ok((true, format!("900 cases, worst relative gap {worst:.1e}")))
    } else {
        Ok((false, format!("duality violated for {}", failed.join(", "))))
    }
}

/// Entries rounded through `f32`, so scaling by `0.5`, `3` or `1e6` is exact.
fn representable(m: usize, n: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::gaussian(m, n, 1.0, rng).map(|x| x as f32 as f64)
}

fn scale_invariance(_: Faults) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut cases = 0;
    let mut bad = Vec::new();
    for kind in GeometryKind::ALL {
        for (m, n) in SHAPES {
            let g = Geometry::new(kind, m, n)?;
            for _ in 0..5 {
                let s = representable(m, n, &mut rng);
                let base = g.lmo(&s)?.direction;
                for alpha in [0.5, 3.0, 1e6] {
                    cases += 1;
                    if !g.lmo(&s.scale(alpha))?.direction.bitwise_eq(&base) {
                        bad.push(format!("{kind} {m}x{n} α={alpha}"));
                    }
                }
            }
        }
    }
    Ok((bad.is_empty(), format!("{}/{cases} bitwise equal{}", cases - bad.len(), fmt_list(&bad))))
}

fn fmt_list(items: &[String]) -> String {
    if items.is_empty() {
        String::new()
    } else {
        format!("; first failure: {}", items[0])
    }
}

/// Random `m × n` matrix with singular values drawn uniformly from `[lo, hi]`.
pub fn with_singular_values(m: usize, n: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Result<Matrix> {
    let r = m.min(n);
    let u = svd(&Matrix::gaussian(m, r, 1.0, rng))?.u;
    let v = svd(&Matrix::gaussian(n, r, 1.0, rng))?.u;
    let sig: Vec<f64> = (0..r).map(|_| rng.random_range(lo..=hi)).collect();
    u.matmul(&Matrix::diag(&sig))?.matmul(&v.transpose())
}

fn polar_agreement(_: Faults) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let ns = PolarMethod::NewtonSchulz(NewtonSchulz::default());
    let (mut fallbacks, mut worst, total) = (0, 0.0f64, 60);
    for k in 0..total {
        let (m, n) = SHAPES[k % 3];
        let a = with_singular_values(m, n, 0.05, 1.0, &mut rng)?;
        let exact = polar_factor(&a, &PolarMethod::ExactSvd)?.q;
        let approx = polar_factor(&a, &ns)?;
        if approx.fell_back {
            fallbacks += 1;
        } else {
            worst = worst.max(approx.q.sub(&exact)?.frobenius_norm());
        }
    }
    let rate = fallbacks as f64 / total as f64;
    Ok((worst <= 1e-5 && rate <= 0.05, format!("worst Frobenius gap {worst:.1e}, fallback rate {rate:.3}")))
}

/// Largest relative Frobenius error between analytic and central-difference
/// gradients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub points: usize,
    pub max_relative_error: f64,
}

impl GradcheckReport {
    pub const TOLERANCE: f64 = 1e-5;

    pub fn passed(&self) -> bool {
        self.max_relative_error <= Self::TOLERANCE
    }
}

/// Central differences with step `1e-5` at `points` Gaussian points of a
/// `4 × 3` instance.
pub fn gradcheck(kind: ObjectiveName, points: usize, seed: u64) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, n) = (4, 3);
    let obj = match kind {
        ObjectiveName::Quadratic => Objective::quadratic(Matrix::gaussian(m, n, 1.0, &mut rng)),
        ObjectiveName::BoundedWell => Objective::bounded_well(Matrix::gaussian(m, n, 1.0, &mut rng)),
        ObjectiveName::FactorResidual => {
            let f = Matrix::gaussian(m, 2, 1.0, &mut rng);
            Objective::factor_residual(f.matmul(&f.transpose())?, n)?
        }
    };
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..points {
        let x = Matrix::gaussian(m, n, 1.0, &mut rng);
        let g = obj.gradient(&x)?;
        let mut fd = Matrix::zeros(m, n);
        for k in 0..m * n {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp.as_mut_slice()[k] += h;
            xm.as_mut_slice()[k] -= h;
            fd.as_mut_slice()[k] = (obj.value(&xp)? - obj.value(&xm)?) / (2.0 * h);
        }
        worst = worst.max(fd.sub(&g)?.frobenius_norm() / g.frobenius_norm().max(f64::MIN_POSITIVE));
    }
    Ok(GradcheckReport { points, max_relative_error: worst })
}

fn gradient_fd(_: Faults) -> Result<(bool, String)> {
    let mut parts = Vec::new();
    let mut ok = true;
    for (i, kind) in [ObjectiveName::Quadratic, ObjectiveName::BoundedWell, ObjectiveName::FactorResidual]
        .into_iter()
        .enumerate()
    {
        let r = gradcheck(kind, 5, 104 + i as u64)?;
        ok &= r.passed();
        parts.push(format!("{kind} {:.1e}", r.max_relative_error));
    }
    Ok((ok, parts.join(", ")))
}

fn moment_calibration(_: Faults) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let p = 1.5;
    // Exact dual norm of every rank-one draw, in every geometry.
    let mut identity_gap = 0.0f64;
    for kind in GeometryKind::ALL {
        let noise = NoiseModel::new(p, 1.0, 0.0, None, NoiseShape::RankOne)?;
        let oracle = GradientOracle::new(Objective::quadratic(Matrix::zeros(3, 5)), noise, Geometry::new(kind, 3, 5)?)?;
        for _ in 0..200 {
            let (z, zeta) = oracle.sample_noise(0.0, &mut rng)?;
            identity_gap = identity_gap.max((oracle.geometry().dual_norm(&z)? - zeta.abs()).abs() / zeta.abs());
        }
    }
    // p-th moment at tail index 2, where the sample mean settles quickly.
    let draws = 200_000;
    let noise = NoiseModel::new(p, 1.0, 0.0, Some(2.0), NoiseShape::RankOne)?;
    let oracle = GradientOracle::new(Objective::quadratic(Matrix::zeros(2, 2)), noise, Geometry::new(GeometryKind::Spectral, 2, 2)?)?;
    let mut acc = 0.0;
    for _ in 0..draws {
        acc += oracle.sample_noise(0.0, &mut rng)?.1.abs().powf(p);
    }
    let moment = acc / draws as f64;
    let ok = identity_gap <= 1e-12 && (moment - 1.0).abs() <= 0.05;
    Ok((ok, format!("‖noise‖⋆ = |ζ| to {identity_gap:.1e}; E|ζ|^p = {moment:.4} over {draws} draws")))
}

fn tau_slope(_: Faults) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let exact_ok = (diag_sign_ratio(4, 2.0)? - 2.0).abs() < 1e-12;
    let fit = scaling_slope(1.5, &[2, 4, 8, 16], GeometryKind::Spectral, FamilyKind::DiagSign, 8, &mut rng)?;
    let ok = exact_ok && (fit.slope - 1.0 / 3.0).abs() <= 0.02;
    Ok((ok, format!("diag-sign nuclear slope {:.6} (expected 1/3)", fit.slope)))
}
