//! Closed-form fluctuation statistics.
//!
//! Mean and covariance of resolvent linear statistics of the centered
//! empirical measure are expressed through jets and generalized Schwarzian
//! derivatives of the forward flow; equilibrium limits, a contour-integral
//! covariance for polynomial test functions, and a Laurent-coefficient
//! combinatorial variance give independent routes to the same quantities.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{schwarzian2, FlowMap};
use crate::measures::{semicircle_jet, Measure, SignedMeasure};

/// One observation point of a fluctuation query: the resolvent statistic
/// at `time` evaluated at `point`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryEntry {
    pub time: f64,
    pub point: Complex64,
}

/// A joint query for the limiting Gaussian vector of resolvent statistics.
#[derive(Debug, Clone)]
pub struct FluctQuery {
    beta: f64,
    entries: Vec<QueryEntry>,
    y0: SignedMeasure,
}

impl FluctQuery {
    pub fn new(beta: f64, entries: Vec<QueryEntry>) -> Result<Self> {
        Self::with_initial_fluctuation(beta, entries, SignedMeasure::empty())
    }

    pub fn with_initial_fluctuation(
        beta: f64,
        entries: Vec<QueryEntry>,
        y0: SignedMeasure,
    ) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::invalid(format!("beta must be positive, got {beta}")));
        }
        for e in &entries {
            if e.time < 0.0 || !e.time.is_finite() {
                return Err(Error::invalid(format!("entry time must be >= 0, got {}", e.time)));
            }
            if e.point.im == 0.0 {
                return Err(Error::invalid("entry points must lie off the real axis"));
            }
        }
        Ok(FluctQuery { beta, entries, y0 })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn entries(&self) -> &[QueryEntry] {
        &self.entries
    }

    pub fn y0(&self) -> &SignedMeasure {
        &self.y0
    }
}

/// Mean vector and covariance matrix for a fluctuation query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "TheoryResultRepr", into = "TheoryResultRepr")]
pub struct TheoryResult {
    pub mean: Vec<Complex64>,
    pub cov: Vec<Vec<Complex64>>,
}

#[derive(Serialize, Deserialize)]
struct TheoryResultRepr {
    mean: Vec<(f64, f64)>,
    cov: Vec<Vec<(f64, f64)>>,
}

impl From<TheoryResultRepr> for TheoryResult {
    fn from(r: TheoryResultRepr) -> Self {
        TheoryResult {
            mean: r.mean.iter().map(|&(a, b)| Complex64::new(a, b)).collect(),
            cov: r
                .cov
                .iter()
                .map(|row| row.iter().map(|&(a, b)| Complex64::new(a, b)).collect())
                .collect(),
        }
    }
}

impl From<TheoryResult> for TheoryResultRepr {
    fn from(r: TheoryResult) -> Self {
        TheoryResultRepr {
            mean: r.mean.iter().map(|c| (c.re, c.im)).collect(),
            cov: r
                .cov
                .iter()
                .map(|row| row.iter().map(|c| (c.re, c.im)).collect())
                .collect(),
        }
    }
}

/// Mean of the limiting Gaussian vector: per entry
/// (1/2)(2/beta - 1) h''/h' + <Y0, h'/(. - h_t(z))>.
pub fn mean_stieltjes(q: &FluctQuery, fm: &FlowMap) -> Result<Vec<Complex64>> {
    let coeff = 0.5 * (2.0 / q.beta - 1.0);
    q.entries
        .iter()
        .map(|e| {
            let j = fm.h_jet(e.time, e.point)?;
            let mut mu = coeff * j.d2 / j.d1;
            if !q.y0.is_empty() {
                mu += j.d1 * q.y0.pair_resolvent(j.value);
            }
            Ok(mu)
        })
        .collect()
}

/// Covariance matrix: for the pair with times t_a >= t_b,
/// (2/beta) (h_{t_a}^{t_b})'(z_a) (Sh_{t_b})(h_{t_a}^{t_b}(z_a), z_b);
/// equal-point diagonal entries reduce to (1/(3 beta)) (Sh_t)(z).
pub fn cov_stieltjes(q: &FluctQuery, fm: &FlowMap) -> Result<Vec<Vec<Complex64>>> {
    let k = q.entries.len();
    let mut cov = vec![vec![Complex64::new(0.0, 0.0); k]; k];
    for j in 0..k {
        for l in j..k {
            let v = cov_pair(q.beta, fm, q.entries[j], q.entries[l])?;
            cov[j][l] = v;
            cov[l][j] = v;
        }
    }
    Ok(cov)
}

fn cov_pair(beta: f64, fm: &FlowMap, a: QueryEntry, b: QueryEntry) -> Result<Complex64> {
    // the later time flows back to the earlier one
    let (later, earlier) = if a.time >= b.time { (a, b) } else { (b, a) };
    let (u, du) = if later.time == earlier.time {
        (later.point, Complex64::new(1.0, 0.0))
    } else {
        fm.flow_between(later.time, earlier.time, later.point)?
    };
    let s = schwarzian2(&fm.h_map(earlier.time), u, earlier.point)?;
    Ok(2.0 / beta * du * s)
}

/// Mean and covariance bundled.
pub fn evaluate(q: &FluctQuery, fm: &FlowMap) -> Result<TheoryResult> {
    Ok(TheoryResult {
        mean: mean_stieltjes(q, fm)?,
        cov: cov_stieltjes(q, fm)?,
    })
}

fn check_off_semicircle(sigma: f64, z: Complex64) -> Result<()> {
    let m = Measure::semicircle(sigma)?;
    if m.support_distance(z) < crate::measures::SUPPORT_CUTOFF {
        return Err(Error::OnSupport {
            point: z,
            dist: m.support_distance(z),
        });
    }
    Ok(())
}

/// Long-time limit of the mean: (2/beta - 1) sigma^2 f_mu(z) / (4 sigma^2 - z^2).
pub fn equilibrium_mean(beta: f64, sigma: f64, z: Complex64) -> Result<Complex64> {
    check_off_semicircle(sigma, z)?;
    let f = semicircle_jet(sigma, z)[0];
    let s2 = sigma * sigma;
    Ok((2.0 / beta - 1.0) * s2 * f / (4.0 * s2 - z * z))
}

/// Long-time limit of the covariance between statistics separated by
/// `delta_t`: e^{-dt} 2 sigma^2 f'(z1) f'(z2) / (beta (sigma^2 f(z1) f(z2) e^{-dt} - 1)^2).
pub fn equilibrium_cov(
    beta: f64,
    sigma: f64,
    delta_t: f64,
    z1: Complex64,
    z2: Complex64,
) -> Result<Complex64> {
    if delta_t < 0.0 {
        return Err(Error::invalid("delta_t must be >= 0"));
    }
    check_off_semicircle(sigma, z1)?;
    check_off_semicircle(sigma, z2)?;
    let j1 = semicircle_jet(sigma, z1);
    let j2 = semicircle_jet(sigma, z2);
    let s2 = sigma * sigma;
    let e = (-delta_t).exp();
    let den = s2 * j1[0] * j2[0] * e - 1.0;
    Ok(e * 2.0 * s2 * j1[1] * j2[1] / (beta * den * den))
}

/// Laurent coefficients of g_t(e^t / z) = sum_{k >= -1} a_k z^k:
/// a_{-1} = 1, a_0 = 0, a_k = sigma^2 (1 - e^{-2t}) e^{-(k-1)t} m_{k-1}.
#[derive(Debug, Clone)]
pub struct LaurentCoeffs {
    /// coeffs[i] is a_{i-1}: index 0 holds the z^{-1} coefficient.
    coeffs: Vec<f64>,
    pub time: f64,
    pub truncation: usize,
}

impl LaurentCoeffs {
    /// Coefficient a_k for k in -1..=truncation.
    pub fn a(&self, k: i64) -> f64 {
        if k < -1 || (k + 1) as usize >= self.coeffs.len() {
            0.0
        } else {
            self.coeffs[(k + 1) as usize]
        }
    }
}

pub fn laurent_coeffs(x0: &Measure, sigma: f64, t: f64, n_max: usize) -> LaurentCoeffs {
    let prefactor = sigma * sigma * (1.0 - (-2.0 * t).exp());
    let mut coeffs = Vec::with_capacity(n_max + 2);
    coeffs.push(1.0); // a_{-1}
    coeffs.push(0.0); // a_0
    for k in 1..=n_max {
        coeffs.push(prefactor * (-((k - 1) as f64) * t).exp() * x0.moment(k as u32 - 1));
    }
    LaurentCoeffs {
        coeffs,
        time: t,
        truncation: n_max,
    }
}

/// Variance of the degree-n monomial statistic at time t via the Laurent
/// convolution: Var = (2/beta) sum_{s=1}^n s A_{-s,n} A_{s,n} where A_{s,n}
/// is the z^s coefficient of the n-th power of the series.
pub fn poly_variance(n: usize, t: f64, beta: f64, x0: &Measure, sigma: f64) -> f64 {
    assert!(n >= 1, "poly_variance requires n >= 1");
    let trunc = 2 * n;
    let series = laurent_coeffs(x0, sigma, t, trunc);
    // coefficient vectors indexed by power + n, powers -n..=trunc
    let offset = n as i64;
    let len = (trunc as i64 + offset + 1) as usize;
    let mut acc = vec![0.0f64; len];
    acc[(offset - 1) as usize] = 0.0;
    // start with the series itself
    let mut first = vec![0.0f64; len];
    for k in -1..=trunc as i64 {
        first[(k + offset) as usize] = series.a(k);
    }
    acc.copy_from_slice(&first);
    for _ in 1..n {
        let mut next = vec![0.0f64; len];
        for (i, &ai) in acc.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            let pi = i as i64 - offset;
            for k in -1..=trunc as i64 {
                let ak = series.a(k);
                if ak == 0.0 {
                    continue;
                }
                let p = pi + k;
                if p < -offset || p > trunc as i64 {
                    continue;
                }
                next[(p + offset) as usize] += ai * ak;
            }
        }
        acc = next;
    }
    let coeff = |s: i64| -> f64 {
        let idx = s + offset;
        if idx < 0 || idx as usize >= acc.len() {
            0.0
        } else {
            acc[idx as usize]
        }
    };
    let mut var = 0.0;
    for s in 1..=n as i64 {
        var += s as f64 * coeff(-s) * coeff(s);
    }
    2.0 / beta * var
}

/// Equilibrium limit of the monomial variance:
/// (4 sigma^{2n} / beta) sum_{s=1}^{n/2} s C(n, n/2 + s)^2 for even n,
/// zero leading term for odd n.
pub fn poly_variance_limit(n: usize, beta: f64, sigma: f64) -> f64 {
    assert!(n >= 1, "poly_variance_limit requires n >= 1");
    if n % 2 == 1 {
        return 0.0;
    }
    let mut sum = 0.0;
    for s in 1..=n / 2 {
        let b = binomial(n, n / 2 + s);
        sum += s as f64 * b * b;
    }
    4.0 * sigma.powi(2 * n as i32) / beta * sum
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Equilibrium variance of a polynomial statistic via Chebyshev modes:
/// Var = (1/(2 beta)) sum_k k c_k^2 with
/// c_k = (2/pi) \int_0^pi h(2 sigma cos T) cos(k T) dT,
/// computed by Gauss-Chebyshev quadrature with deg+1 nodes (exact for
/// polynomials).
pub fn chebyshev_variance(coeffs: &[f64], beta: f64, sigma: f64) -> f64 {
    let deg = coeffs
        .iter()
        .rposition(|&c| c != 0.0)
        .unwrap_or(0);
    if deg == 0 {
        return 0.0;
    }
    let m = deg + 1;
    let mut var = 0.0;
    for k in 1..=deg {
        let mut ck = 0.0;
        for i in 1..=m {
            let theta = (2.0 * i as f64 - 1.0) * std::f64::consts::PI / (2.0 * m as f64);
            let x = 2.0 * sigma * theta.cos();
            ck += poly_eval_real(coeffs, x) * (k as f64 * theta).cos();
        }
        ck *= 2.0 / m as f64;
        var += k as f64 * ck * ck;
    }
    var / (2.0 * beta)
}

fn poly_eval_real(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn poly_eval(coeffs: &[f64], x: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
}

const CONTOUR_START_NODES: usize = 128;
const CONTOUR_MAX_NODES: usize = 1 << 13;
const CONTOUR_REL_TOL: f64 = 1e-9;

/// Radii for the two w-plane circles: distinct so the two-point Schwarzian
/// integrand stays away from its removable diagonal.
fn contour_radii(fm: &FlowMap, t1: f64) -> (f64, f64) {
    let r = 2.0 * t1.exp() * fm.x0().support_bound().max(2.0 * fm.sigma()) + 1.0;
    (r + 0.5, r)
}

struct CircleData {
    w: Vec<Complex64>,
    g_outer: Vec<Complex64>, // g_{t of this statistic}(w), feeds the test function
    g_inner: Vec<Complex64>, // g_{t2}(w), feeds the Schwarzian kernel
    g_inner_d1: Vec<Complex64>,
}

fn circle_data(fm: &FlowMap, radius: f64, t_outer: f64, t_inner: f64, m: usize) -> Result<CircleData> {
    let mut data = CircleData {
        w: Vec::with_capacity(m),
        g_outer: Vec::with_capacity(m),
        g_inner: Vec::with_capacity(m),
        g_inner_d1: Vec::with_capacity(m),
    };
    for j in 0..m {
        let theta = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
        let w = radius * Complex64::new(theta.cos(), theta.sin());
        let jo = fm.g(t_outer, w)?;
        let (gi, gi1) = if t_inner == t_outer {
            (jo.value, jo.d1)
        } else {
            let ji = fm.g(t_inner, w)?;
            (ji.value, ji.d1)
        };
        data.w.push(w);
        data.g_outer.push(jo.value);
        data.g_inner.push(gi);
        data.g_inner_d1.push(gi1);
    }
    Ok(data)
}

/// Covariance of two polynomial statistics at times t1 >= t2 via the
/// double contour integral with the two-point Schwarzian of g_{t2}.
pub fn contour_cov(
    f1: &[f64],
    f2: &[f64],
    t1: f64,
    t2: f64,
    beta: f64,
    fm: &FlowMap,
) -> Result<f64> {
    if t1 < t2 || t2 < 0.0 {
        return Err(Error::invalid("contour_cov requires t1 >= t2 >= 0"));
    }
    let (r1, r2) = contour_radii(fm, t1);
    let eval = |m: usize| -> Result<Complex64> {
        let c1 = circle_data(fm, r1, t1, t2, m)?;
        let c2 = circle_data(fm, r2, t2, t2, m)?;
        let fv1: Vec<Complex64> = c1.g_outer.iter().map(|&g| poly_eval(f1, g)).collect();
        let fv2: Vec<Complex64> = c2.g_outer.iter().map(|&g| poly_eval(f2, g)).collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..m {
            let mut inner = Complex64::new(0.0, 0.0);
            for k in 0..m {
                let df = fv1[j] - fv2[k];
                let dg = c1.g_inner[j] - c2.g_inner[k];
                let dw = c1.w[j] - c2.w[k];
                let sg = c1.g_inner_d1[j] * c2.g_inner_d1[k] / (dg * dg) - 1.0 / (dw * dw);
                inner += df * df * sg * c2.w[k];
            }
            acc += inner * c1.w[j];
        }
        // dw_i = i w_i dtheta: the two i factors give -1, the step sizes
        // give (2 pi / m)^2, and the prefactor is -1/(4 pi^2 beta).
        let step = 2.0 * std::f64::consts::PI / m as f64;
        Ok(acc * (step * step) / (4.0 * std::f64::consts::PI.powi(2) * beta))
    };
    converge_contour(eval)
}

/// Variance of a polynomial statistic via the difference-quotient contour
/// form (no Schwarzian kernel).
pub fn contour_var(f: &[f64], t: f64, beta: f64, fm: &FlowMap) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::invalid("contour_var requires t >= 0"));
    }
    let (r1, r2) = contour_radii(fm, t);
    let eval = |m: usize| -> Result<Complex64> {
        let c1 = circle_data(fm, r1, t, t, m)?;
        let c2 = circle_data(fm, r2, t, t, m)?;
        let fv1: Vec<Complex64> = c1.g_outer.iter().map(|&g| poly_eval(f, g)).collect();
        let fv2: Vec<Complex64> = c2.g_outer.iter().map(|&g| poly_eval(f, g)).collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..m {
            let mut inner = Complex64::new(0.0, 0.0);
            for k in 0..m {
                let q = (fv1[j] - fv2[k]) / (c1.w[j] - c2.w[k]);
                inner += q * q * c2.w[k];
            }
            acc += inner * c1.w[j];
        }
        let step = 2.0 * std::f64::consts::PI / m as f64;
        // dw factors contribute -1; the formula carries +1/(4 pi^2 beta).
        Ok(-acc * (step * step) / (4.0 * std::f64::consts::PI.powi(2) * beta))
    };
    converge_contour(eval)
}

fn converge_contour<F: Fn(usize) -> Result<Complex64>>(eval: F) -> Result<f64> {
    let mut m = CONTOUR_START_NODES;
    let mut val = eval(m)?;
    loop {
        m *= 2;
        let next = eval(m)?;
        let delta = (next - val).norm();
        let done = delta <= CONTOUR_REL_TOL * (1.0 + next.norm());
        val = next;
        if done {
            break;
        }
        if m >= CONTOUR_MAX_NODES {
            return Err(Error::QuadratureStalled { delta, nodes: m });
        }
    }
    if val.im.abs() > 1e-8 * (1.0 + val.norm()) {
        return Err(Error::Numeric(format!(
            "contour covariance has imaginary residue {:.3e}",
            val.im
        )));
    }
    Ok(val.re)
}
