//! Initial particle distributions and signed fluctuation measures.
//!
//! Two families cover everything downstream: finite atomic measures (exact
//! Stieltjes transforms by partial fractions) and the semicircle law (exact
//! closed form). Both are compactly supported, which the contour machinery
//! in [`crate::theory`] relies on.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points closer to the support than this are rejected as domain errors;
/// below it evaluations are numerically meaningless.
pub const SUPPORT_CUTOFF: f64 = 1e-14;

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A compactly supported probability measure on the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr", into = "MeasureRepr")]
pub enum Measure {
    /// Finitely many atoms `(location, weight)`, locations strictly
    /// increasing, weights positive and summing to one.
    Atomic(Vec<(f64, f64)>),
    /// Density sqrt(4 sigma^2 - x^2) / (2 pi sigma^2) on [-2 sigma, 2 sigma].
    Semicircle { sigma: f64 },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum MeasureRepr {
    Atomic { atoms: Vec<(f64, f64)> },
    Semicircle { sigma: f64 },
}

impl TryFrom<MeasureRepr> for Measure {
    type Error = Error;
    fn try_from(repr: MeasureRepr) -> Result<Self> {
        match repr {
            MeasureRepr::Atomic { atoms } => Measure::atomic(atoms),
            MeasureRepr::Semicircle { sigma } => Measure::semicircle(sigma),
        }
    }
}

impl From<Measure> for MeasureRepr {
    fn from(m: Measure) -> Self {
        match m {
            Measure::Atomic(atoms) => MeasureRepr::Atomic { atoms },
            Measure::Semicircle { sigma } => MeasureRepr::Semicircle { sigma },
        }
    }
}

impl Measure {
    /// Validated atomic measure.
    pub fn atomic(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("atomic measure needs at least one atom"));
        }
        let mut sum = 0.0;
        for (i, &(x, w)) in atoms.iter().enumerate() {
            if !x.is_finite() || !w.is_finite() {
                return Err(Error::invalid("atom entries must be finite"));
            }
            if w <= 0.0 {
                return Err(Error::invalid(format!(
                    "atom weights must be strictly positive (atom {i} has weight {w})"
                )));
            }
            if i > 0 && atoms[i - 1].0 >= x {
                return Err(Error::invalid(
                    "atom locations must be strictly increasing",
                ));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid(format!(
                "atom weights must sum to 1 within {WEIGHT_SUM_TOL:e} (got {sum})"
            )));
        }
        Ok(Measure::Atomic(atoms))
    }

    /// Single unit atom at `x`.
    pub fn point_mass(x: f64) -> Self {
        Measure::Atomic(vec![(x, 1.0)])
    }

    /// Two atoms of weight one half at `-a` and `a`.
    pub fn symmetric_pair(a: f64) -> Result<Self> {
        Measure::atomic(vec![(-a, 0.5), (a, 0.5)])
    }

    pub fn semicircle(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(format!(
                "semicircle scale must be positive (got {sigma})"
            )));
        }
        Ok(Measure::Semicircle { sigma })
    }

    /// Smallest rho with the support contained in [-rho, rho].
    pub fn support_bound(&self) -> f64 {
        match self {
            Measure::Atomic(atoms) => atoms
                .iter()
                .map(|&(x, _)| x.abs())
                .fold(0.0, f64::max),
            Measure::Semicircle { sigma } => 2.0 * sigma,
        }
    }

    /// Distance from `w` to the support.
    pub fn support_distance(&self, w: Complex64) -> f64 {
        match self {
            Measure::Atomic(atoms) => atoms
                .iter()
                .map(|&(x, _)| (w - x).norm())
                .fold(f64::INFINITY, f64::min),
            Measure::Semicircle { sigma } => {
                let (a, b) = (-2.0 * sigma, 2.0 * sigma);
                if w.re < a {
                    (w - a).norm()
                } else if w.re > b {
                    (w - b).norm()
                } else {
                    w.im.abs()
                }
            }
        }
    }

    fn check_off_support(&self, w: Complex64) -> Result<()> {
        let dist = self.support_distance(w);
        if dist < SUPPORT_CUTOFF {
            Err(Error::OnSupport { point: w, dist })
        } else {
            Ok(())
        }
    }

    /// The Stieltjes transform f(w) = integral dX(x)/(x - w) and its first
    /// three derivatives: `order` selects d^order f / dw^order.
    pub fn stieltjes(&self, w: Complex64, order: u32) -> Result<Complex64> {
        if order > 3 {
            return Err(Error::invalid("stieltjes order must be in 0..=3"));
        }
        self.check_off_support(w)?;
        match self {
            Measure::Atomic(atoms) => {
                // d^k/dw^k 1/(x-w) = k!/(x-w)^{k+1}
                let factorial = [1.0, 1.0, 2.0, 6.0][order as usize];
                let mut acc = Complex64::new(0.0, 0.0);
                for &(x, weight) in atoms {
                    let d = Complex64::new(x, 0.0) - w;
                    acc += weight * factorial / d.powu(order + 1);
                }
                Ok(acc)
            }
            Measure::Semicircle { sigma } => {
                Ok(semicircle_jet(*sigma, w)[order as usize])
            }
        }
    }

    /// k-th raw moment (exact: finite sum or Catalan closed form).
    pub fn moment(&self, k: u32) -> f64 {
        match self {
            Measure::Atomic(atoms) => atoms
                .iter()
                .map(|&(x, w)| w * x.powi(k as i32))
                .sum(),
            Measure::Semicircle { sigma } => {
                if k % 2 == 1 {
                    0.0
                } else {
                    catalan(k / 2) * sigma.powi(k as i32)
                }
            }
        }
    }

    /// Deterministic n-point discretization: particle i at the
    /// (i - 1/2)/n quantile. Coincident points are allowed for atomic
    /// measures; the simulator resolves them on initialization.
    pub fn quantile_sample(&self, n: usize) -> Vec<f64> {
        assert!(n >= 1, "quantile_sample needs n >= 1");
        match self {
            Measure::Atomic(atoms) => {
                let mut out = Vec::with_capacity(n);
                let mut cum = 0.0;
                let mut atom_iter = atoms.iter();
                let (mut x, mut w) = *atom_iter.next().expect("non-empty");
                cum += w;
                for i in 0..n {
                    let q = (i as f64 + 0.5) / n as f64;
                    while q > cum {
                        match atom_iter.next() {
                            Some(&(nx, nw)) => {
                                x = nx;
                                w = nw;
                                cum += w;
                            }
                            None => break, // q beyond rounding of total mass
                        }
                    }
                    out.push(x);
                }
                out
            }
            Measure::Semicircle { sigma } => {
                let s = *sigma;
                (0..n)
                    .map(|i| {
                        let q = (i as f64 + 0.5) / n as f64;
                        semicircle_quantile(s, q)
                    })
                    .collect()
            }
        }
    }

    /// CDF, exact per variant. Used by quantile placement and tests.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Measure::Atomic(atoms) => atoms
                .iter()
                .filter(|&&(loc, _)| loc <= x)
                .map(|&(_, w)| w)
                .sum(),
            Measure::Semicircle { sigma } => semicircle_cdf(*sigma, x),
        }
    }
}

/// Stieltjes transform of the semicircle law with the branch for which
/// Im sqrt(z) >= 0 iff Im z >= 0. Satisfies sigma^2 f^2 + z f + 1 = 0.
pub fn semicircle_stieltjes(sigma: f64, z: Complex64) -> Result<Complex64> {
    let m = Measure::semicircle(sigma)?;
    m.stieltjes(z, 0)
}

/// f and its first three derivatives for the semicircle law.
///
/// f = -2 / (z (1 + s)) with s = sqrt(1 - (2 sigma / z)^2); this form has
/// no cancellation for large |z|. Derivatives follow from the quadratic
/// relation sigma^2 f^2 + z f + 1 = 0.
pub(crate) fn semicircle_jet(sigma: f64, z: Complex64) -> [Complex64; 4] {
    let u = 2.0 * sigma / z;
    let s = (Complex64::new(1.0, 0.0) - u * u).sqrt();
    let f = -2.0 / (z * (1.0 + s));
    let s2 = sigma * sigma;
    // d = 2 sigma^2 f + z = z s, the discriminant root
    let d = z * s;
    let f1 = -f / d;
    let f2 = -(2.0 * s2 * f1 * f1 + 2.0 * f1) / d;
    let f3 = -(6.0 * s2 * f1 * f2 + 3.0 * f2) / d;
    [f, f1, f2, f3]
}

/// Catalan number C_j as f64.
fn catalan(j: u32) -> f64 {
    let mut c = 1.0;
    for i in 0..j {
        c = c * 2.0 * (2.0 * i as f64 + 1.0) / (i as f64 + 2.0);
    }
    c
}

/// CDF of the semicircle law of scale sigma.
pub(crate) fn semicircle_cdf(sigma: f64, x: f64) -> f64 {
    let r = 2.0 * sigma;
    if x <= -r {
        return 0.0;
    }
    if x >= r {
        return 1.0;
    }
    let s2 = sigma * sigma;
    (0.5 * x * (4.0 * s2 - x * x).sqrt()
        + 2.0 * s2 * (x / r).asin()
        + std::f64::consts::PI * s2)
        / (2.0 * std::f64::consts::PI * s2)
}

/// Quantile of the semicircle law by bisection on the closed-form CDF.
pub(crate) fn semicircle_quantile(sigma: f64, q: f64) -> f64 {
    let r = 2.0 * sigma;
    let (mut lo, mut hi) = (-r, r);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo < 1e-15 * r.max(1.0) {
            break;
        }
        if semicircle_cdf(sigma, mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// A finite signed measure with total mass zero: the admissible initial
/// fluctuation data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SignedRepr", into = "SignedRepr")]
pub struct SignedMeasure {
    atoms: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct SignedRepr {
    atoms: Vec<(f64, f64)>,
}

impl TryFrom<SignedRepr> for SignedMeasure {
    type Error = Error;
    fn try_from(r: SignedRepr) -> Result<Self> {
        SignedMeasure::new(r.atoms)
    }
}

impl From<SignedMeasure> for SignedRepr {
    fn from(m: SignedMeasure) -> Self {
        SignedRepr { atoms: m.atoms }
    }
}

impl SignedMeasure {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        let total: f64 = atoms.iter().map(|&(_, w)| w).sum();
        if total.abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid(format!(
                "signed measure must have total weight 0 within {WEIGHT_SUM_TOL:e} (got {total})"
            )));
        }
        if atoms.iter().any(|&(x, w)| !x.is_finite() || !w.is_finite()) {
            return Err(Error::invalid("signed measure entries must be finite"));
        }
        Ok(SignedMeasure { atoms })
    }

    pub fn empty() -> Self {
        SignedMeasure { atoms: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    /// Pairing with x -> 1/(x - p): the exact finite sum.
    pub fn pair_resolvent(&self, p: Complex64) -> Complex64 {
        self.atoms
            .iter()
            .map(|&(x, w)| w / (Complex64::new(x, 0.0) - p))
            .sum()
    }
}
