//! The characteristic flow attached to an initial measure.
//!
//! With f the Stieltjes transform of the initial distribution and
//! b(t) = sigma^2 (e^t - e^{-t}), the backward map
//!
//!     g_t(w) = e^{-t} w - b(t) f(w)
//!
//! is explicit, and its inverse h_t (solved by Newton continuation from
//! t = 0, where it is the identity) transports the initial data forward:
//! the Stieltjes transform of the time-t distribution is
//! M(t, z) = e^t f(h_t(z)). Everything else here — jets, Schwarzian
//! derivatives, densities, moments — is built from those two maps.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::measures::Measure;

/// Function value and first three derivatives at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub value: Complex64,
    pub d1: Complex64,
    pub d2: Complex64,
    pub d3: Complex64,
}

impl Jet {
    pub fn identity(z: Complex64) -> Self {
        Jet {
            value: z,
            d1: Complex64::new(1.0, 0.0),
            d2: Complex64::new(0.0, 0.0),
            d3: Complex64::new(0.0, 0.0),
        }
    }

    /// Jet of `outer ∘ inner` where `outer` is the jet of the outer map at
    /// `inner.value` (Faa di Bruno up to order three).
    pub fn compose(outer: &Jet, inner: &Jet) -> Jet {
        Jet {
            value: outer.value,
            d1: outer.d1 * inner.d1,
            d2: outer.d2 * inner.d1 * inner.d1 + outer.d1 * inner.d2,
            d3: outer.d3 * inner.d1.powu(3)
                + 3.0 * outer.d2 * inner.d1 * inner.d2
                + outer.d1 * inner.d3,
        }
    }
}

/// Classical Schwarzian derivative from a jet: d3/d1 - (3/2)(d2/d1)^2.
pub fn schwarzian(j: &Jet) -> Result<Complex64> {
    if j.d1.norm() < f64::MIN_POSITIVE {
        return Err(Error::DegenerateJet);
    }
    Ok(j.d3 / j.d1 - 1.5 * (j.d2 / j.d1) * (j.d2 / j.d1))
}

/// A univalent map that can report its 3-jet; the two-point Schwarzian is
/// defined for any such map.
pub trait HoloMap {
    fn jet(&self, z: Complex64) -> Result<Jet>;
}

/// Relative separation below which the two-point Schwarzian switches to
/// the diagonal formula; below it cancellation in the two-point form
/// exceeds the diagonal-formula error.
pub const SCHWARZIAN_DIAG_THRESHOLD: f64 = 1e-5;

/// Generalized (two-point) Schwarzian derivative of `v`:
/// v'(z1) v'(z2) / (v(z1) - v(z2))^2 - 1/(z1 - z2)^2, extended across the
/// diagonal by (1/6) Sv(z1).
pub fn schwarzian2<V: HoloMap + ?Sized>(
    v: &V,
    z1: Complex64,
    z2: Complex64,
) -> Result<Complex64> {
    if (z1 - z2).norm() < SCHWARZIAN_DIAG_THRESHOLD * (1.0 + z1.norm()) {
        let j = v.jet(z1)?;
        return Ok(schwarzian(&j)? / 6.0);
    }
    let j1 = v.jet(z1)?;
    let j2 = v.jet(z2)?;
    let dv = j1.value - j2.value;
    let dz = z1 - z2;
    Ok(j1.d1 * j2.d1 / (dv * dv) - 1.0 / (dz * dz))
}

/// The identity map.
pub struct Identity;

impl HoloMap for Identity {
    fn jet(&self, z: Complex64) -> Result<Jet> {
        Ok(Jet::identity(z))
    }
}

/// A Moebius map (az + b)/(cz + d).
pub struct Moebius {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

impl HoloMap for Moebius {
    fn jet(&self, z: Complex64) -> Result<Jet> {
        let det = self.a * self.d - self.b * self.c;
        let den = self.c * z + self.d;
        if den.norm() < f64::MIN_POSITIVE || det.norm() < f64::MIN_POSITIVE {
            return Err(Error::DegenerateJet);
        }
        Ok(Jet {
            value: (self.a * z + self.b) / den,
            d1: det / (den * den),
            d2: -2.0 * self.c * det / den.powu(3),
            d3: 6.0 * self.c * self.c * det / den.powu(4),
        })
    }
}

/// The analytic flow for a fixed initial measure and noise scale.
#[derive(Debug, Clone)]
pub struct FlowMap {
    x0: Measure,
    sigma: f64,
    solver_tolerance: f64,
    continuation_steps: u32,
}

/// Refinement levels tried before the continuation gives up; each level
/// doubles the node count and takes the square root of the step ratio.
const MAX_REFINE_LEVELS: u32 = 6;
const NEWTON_MAX_ITER: usize = 60;

impl FlowMap {
    pub fn new(x0: Measure, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        Ok(FlowMap {
            x0,
            sigma,
            solver_tolerance: 1e-13,
            continuation_steps: 32,
        })
    }

    pub fn with_tolerance(mut self, tol: f64) -> Result<Self> {
        if !(tol > 0.0 && tol <= 1e-8) {
            return Err(Error::invalid("solver tolerance must lie in (0, 1e-8]"));
        }
        self.solver_tolerance = tol;
        Ok(self)
    }

    pub fn with_continuation_steps(mut self, steps: u32) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("continuation_steps must be positive"));
        }
        self.continuation_steps = steps;
        Ok(self)
    }

    pub fn x0(&self) -> &Measure {
        &self.x0
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn solver_tolerance(&self) -> f64 {
        self.solver_tolerance
    }

    /// b(t) = sigma^2 (e^t - e^{-t}).
    fn b(&self, t: f64) -> f64 {
        self.sigma * self.sigma * (t.exp() - (-t).exp())
    }

    /// The explicit backward map g_t(w) = e^{-t} w - b(t) f(w), with
    /// derivatives taken from the Stieltjes jet of the initial measure.
    pub fn g(&self, t: f64, w: Complex64) -> Result<Jet> {
        check_time(t)?;
        let emt = (-t).exp();
        let b = self.b(t);
        let f0 = self.x0.stieltjes(w, 0)?;
        let f1 = self.x0.stieltjes(w, 1)?;
        let f2 = self.x0.stieltjes(w, 2)?;
        let f3 = self.x0.stieltjes(w, 3)?;
        Ok(Jet {
            value: emt * w - b * f0,
            d1: emt - b * f1,
            d2: -b * f2,
            d3: -b * f3,
        })
    }

    /// Value-and-derivative evaluation used inside the Newton loop.
    fn g_val_d1(&self, emt: f64, b: f64, w: Complex64) -> Result<(Complex64, Complex64)> {
        let f0 = self.x0.stieltjes(w, 0)?;
        let f1 = self.x0.stieltjes(w, 1)?;
        Ok((emt * w - b * f0, emt - b * f1))
    }

    /// The forward map h_t = g_t^{-1}, solved by damped Newton iteration
    /// with continuation in t along a geometric grid: the branch is the
    /// one continuously connected to w = z at t = 0. Preserves the open
    /// half-plane of z.
    pub fn h(&self, t: f64, z: Complex64) -> Result<Complex64> {
        check_time(t)?;
        check_off_axis(z)?;
        if t == 0.0 {
            return Ok(z);
        }
        let mut last_err = None;
        for level in 0..=MAX_REFINE_LEVELS {
            match self.continuation_solve(t, z, level) {
                Ok(w) => return Ok(w),
                Err(e) => last_err = Some(e),
            }
        }
        Err(last_err.unwrap_or(Error::SolverFailed {
            t,
            z,
            iterate: z,
            residual: f64::NAN,
        }))
    }

    fn continuation_solve(&self, t: f64, z: Complex64, level: u32) -> Result<Complex64> {
        let nodes = (self.continuation_steps as u64) << level;
        // Geometric grid t_j = t * r^{j - nodes}; at level 0 the ratio is 2,
        // refinement takes square roots so the grid nests.
        let log_r = std::f64::consts::LN_2 / (1u64 << level) as f64;
        let mut w = z;
        for j in 1..=nodes {
            let tj = if j == nodes {
                t
            } else {
                t * (-((nodes - j) as f64) * log_r).exp()
            };
            w = self.newton_at(tj, z, w)?;
        }
        Ok(w)
    }

    /// Damped Newton for g_t(w) = z from a warm start. Steps are halved
    /// when the residual would grow and quartered when an iterate would
    /// cross the real axis, which the true branch never does.
    fn newton_at(&self, t: f64, z: Complex64, start: Complex64) -> Result<Complex64> {
        let emt = (-t).exp();
        let b = self.b(t);
        let tol = self.solver_tolerance * (1.0 + z.norm());
        let half_plane = z.im.signum();

        let mut w = start;
        let (mut gv, mut gd) = self.g_val_d1(emt, b, w)?;
        let mut resid = (gv - z).norm();

        for _ in 0..NEWTON_MAX_ITER {
            if resid <= tol {
                return Ok(w);
            }
            if gd.norm() < 1e-300 {
                return Err(Error::CriticalPoint {
                    w,
                    magnitude: gd.norm(),
                });
            }
            let full_step = (gv - z) / gd;
            let mut lambda = 1.0;
            let mut accepted = false;
            while lambda >= 1e-9 {
                let cand = w - lambda * full_step;
                if cand.im.signum() != half_plane || cand.im == 0.0 {
                    lambda *= 0.25;
                    continue;
                }
                match self.g_val_d1(emt, b, cand) {
                    Ok((cv, cd)) => {
                        let cres = (cv - z).norm();
                        if cres < resid {
                            w = cand;
                            gv = cv;
                            gd = cd;
                            resid = cres;
                            accepted = true;
                            break;
                        }
                        lambda *= 0.5;
                    }
                    Err(_) => {
                        // candidate landed on the support; shrink
                        lambda *= 0.5;
                    }
                }
            }
            if !accepted {
                return Err(Error::SolverFailed {
                    t,
                    z,
                    iterate: w,
                    residual: resid,
                });
            }
        }
        if resid <= tol {
            Ok(w)
        } else {
            Err(Error::SolverFailed {
                t,
                z,
                iterate: w,
                residual: resid,
            })
        }
    }

    /// Full 3-jet of h_t at z, from the g-jet at w = h_t(z):
    /// h' = 1/g', h'' = -g''/g'^3, h''' = (3 g''^2 - g' g''')/g'^5.
    pub fn h_jet(&self, t: f64, z: Complex64) -> Result<Jet> {
        let w = self.h(t, z)?;
        if t == 0.0 {
            return Ok(Jet::identity(z));
        }
        let gj = self.g(t, w)?;
        if gj.d1.norm() < 1e-12 {
            return Err(Error::CriticalPoint {
                w,
                magnitude: gj.d1.norm(),
            });
        }
        let g1 = gj.d1;
        let g2 = gj.d2;
        let g3 = gj.d3;
        Ok(Jet {
            value: w,
            d1: 1.0 / g1,
            d2: -g2 / g1.powu(3),
            d3: (3.0 * g2 * g2 - g1 * g3) / g1.powu(5),
        })
    }

    /// The connecting map h_{t1}^{t2} = g_{t2} ∘ h_{t1} for t1 >= t2,
    /// returned as (value, first derivative).
    pub fn flow_between(
        &self,
        t1: f64,
        t2: f64,
        z: Complex64,
    ) -> Result<(Complex64, Complex64)> {
        check_time(t2)?;
        if t1 < t2 {
            return Err(Error::invalid(format!(
                "flow_between requires t1 >= t2 (got t1={t1}, t2={t2})"
            )));
        }
        if t1 == t2 {
            return Ok((z, Complex64::new(1.0, 0.0)));
        }
        let hj = self.h_jet(t1, z)?;
        let gj = self.g(t2, hj.value)?;
        Ok((gj.value, gj.d1 * hj.d1))
    }

    /// Stieltjes transform of the time-t distribution,
    /// M(t, z) = (h_t(z) - z e^t) / b(t), with the initial transform at
    /// t = 0. Each call verifies the flow identity M = e^t f(h_t(z)).
    pub fn stieltjes_xt(&self, t: f64, z: Complex64) -> Result<Complex64> {
        check_time(t)?;
        check_off_axis(z)?;
        if t == 0.0 {
            return self.x0.stieltjes(z, 0);
        }
        let w = self.h(t, z)?;
        let m = (w - z * t.exp()) / self.b(t);
        let cross = t.exp() * self.x0.stieltjes(w, 0)?;
        let defect = (m - cross).norm();
        if defect > 1e-10 * (1.0 + m.norm()) {
            return Err(Error::Numeric(format!(
                "flow identity violated at t={t}, z={z}: |M - e^t f(h)| = {defect:.3e}"
            )));
        }
        Ok(m)
    }

    /// Density of the time-t distribution by Stieltjes inversion:
    /// (1/pi) Im M(t, x + i eps) extrapolated in eps (two Richardson
    /// levels over a geometric eps triple), clipped at zero.
    pub fn density(&self, t: f64, x: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::invalid("density requires t > 0"));
        }
        let eps = [1e-2, 5e-3, 2.5e-3];
        let mut v = [0.0; 3];
        for (i, &e) in eps.iter().enumerate() {
            let m = self.stieltjes_xt(t, Complex64::new(x, e)).map_err(|err| {
                Error::Numeric(format!("density solve failed at x={x}, t={t}: {err}"))
            })?;
            v[i] = m.im / std::f64::consts::PI;
        }
        let a1 = 2.0 * v[1] - v[0];
        let a2 = 2.0 * v[2] - v[1];
        Ok(((4.0 * a2 - a1) / 3.0).max(0.0))
    }

    /// k-th moment of the time-t distribution via the w-plane contour
    /// m_k(t) = -(1/2 pi i) \oint g_t(w)^k e^t f(w) g_t'(w) dw on a circle
    /// enclosing the initial support. The zeroth moment doubles as a
    /// certificate that the radius and resolution are adequate.
    pub fn moment_xt(&self, t: f64, k: u32) -> Result<f64> {
        check_time(t)?;
        let radius = 2.0 * self.x0.support_bound().max(2.0 * self.sigma * t.exp()) + 1.0;
        let et = t.exp();
        let emt = (-t).exp();
        let b = self.b(t);

        let eval = |n: usize| -> Result<(Complex64, Complex64)> {
            let mut mk = Complex64::new(0.0, 0.0);
            let mut m0 = Complex64::new(0.0, 0.0);
            for j in 0..n {
                let theta = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                let w = radius * Complex64::new(theta.cos(), theta.sin());
                let f0 = self.x0.stieltjes(w, 0)?;
                let f1 = self.x0.stieltjes(w, 1)?;
                let g = emt * w - b * f0;
                let g1 = emt - b * f1;
                let dw = Complex64::new(0.0, 1.0) * w; // d/dtheta of R e^{i theta}
                let base = et * f0 * g1 * dw;
                m0 += base;
                mk += g.powu(k) * base;
            }
            let scale = -1.0 / (Complex64::new(0.0, 2.0 * std::f64::consts::PI) * n as f64)
                * (2.0 * std::f64::consts::PI);
            Ok((mk * scale, m0 * scale))
        };

        let mut n = 64;
        let (mut mk, mut m0) = eval(n)?;
        loop {
            n *= 2;
            let (mk2, m02) = eval(n)?;
            let delta = (mk2 - mk).norm();
            let done = delta <= 1e-10 * (1.0 + mk2.norm());
            mk = mk2;
            m0 = m02;
            if done {
                break;
            }
            if n >= 1 << 14 {
                return Err(Error::QuadratureStalled { delta, nodes: n });
            }
        }
        let defect = (m0 - 1.0).norm();
        if defect > 1e-9 {
            return Err(Error::ContourCheck { defect });
        }
        if mk.im.abs() > 1e-9 * (1.0 + mk.norm()) {
            return Err(Error::Numeric(format!(
                "moment contour has imaginary residue {:.3e}",
                mk.im
            )));
        }
        Ok(mk.re)
    }

    /// h_t as a [`HoloMap`], for Schwarzian evaluation.
    pub fn h_map(&self, t: f64) -> FlowH<'_> {
        FlowH { flow: self, t }
    }
}

/// Borrowed view of h_t as a map of one complex variable.
pub struct FlowH<'a> {
    flow: &'a FlowMap,
    t: f64,
}

impl HoloMap for FlowH<'_> {
    fn jet(&self, z: Complex64) -> Result<Jet> {
        self.flow.h_jet(self.t, z)
    }
}

fn check_time(t: f64) -> Result<()> {
    if t < 0.0 || !t.is_finite() {
        Err(Error::invalid(format!("time must be finite and >= 0, got {t}")))
    } else {
        Ok(())
    }
}

fn check_off_axis(z: Complex64) -> Result<()> {
    if z.im == 0.0 {
        Err(Error::invalid("point must lie off the real axis"))
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::Measure;
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn point_mass_flow() -> FlowMap {
        FlowMap::new(Measure::point_mass(0.0), 1.0).unwrap()
    }

    fn pair_flow() -> FlowMap {
        FlowMap::new(Measure::symmetric_pair(1.0).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn g_closed_form_values() {
        let fm = point_mass_flow();
        let j = fm.g(LN2, c(0.0, 2.0)).unwrap();
        assert!((j.value - c(0.0, 0.25)).norm() < 1e-14);

        let fm2 = pair_flow();
        let j2 = fm2.g(LN2, c(0.0, 2.0)).unwrap();
        assert!((j2.value - c(0.0, 0.4)).norm() < 1e-14);
    }

    #[test]
    fn g_at_time_zero_is_identity() {
        let fm = pair_flow();
        let z = c(0.7, -1.3);
        let j = fm.g(0.0, z).unwrap();
        assert_eq!(j.value, z);
        assert!((j.d1 - 1.0).norm() < 1e-15);
    }

    #[test]
    fn h_point_mass_quadratic_root() {
        // 0.5 w^2 - z w + 1.5 = 0 at z = i has roots 3i and -i;
        // continuation picks 3i.
        let fm = point_mass_flow();
        let w = fm.h(LN2, c(0.0, 1.0)).unwrap();
        assert!((w - c(0.0, 3.0)).norm() < 1e-12);
        let back = fm.g(LN2, w).unwrap().value;
        assert!((back - c(0.0, 1.0)).norm() < 1e-13);
    }

    #[test]
    fn h_identity_at_zero() {
        let fm = pair_flow();
        assert_eq!(fm.h(0.0, c(1.0, 1.0)).unwrap(), c(1.0, 1.0));
    }

    #[test]
    fn h_large_time_scaled_limit() {
        // e^{-t} h_t(i) -> (i + i sqrt 5)/2 for the point mass at 0.
        let fm = point_mass_flow();
        let t = 20.0;
        let w = fm.h(t, c(0.0, 1.0)).unwrap();
        let scaled = w * (-t).exp();
        let limit = c(0.0, (1.0 + 5f64.sqrt()) / 2.0);
        assert!((scaled - limit).norm() < 1e-8, "scaled={scaled}");
    }

    #[test]
    fn h_preserves_lower_half_plane() {
        let fm = pair_flow();
        let w = fm.h(1.0, c(0.3, -0.8)).unwrap();
        assert!(w.im < 0.0);
        let wc = fm.h(1.0, c(0.3, 0.8)).unwrap();
        assert!((w - wc.conj()).norm() < 1e-11);
    }

    #[test]
    fn h_jet_closed_form() {
        let fm = point_mass_flow();
        let j = fm.h_jet(LN2, c(0.0, 1.0)).unwrap();
        assert!((j.value - c(0.0, 3.0)).norm() < 1e-12);
        assert!((j.d1 - c(1.5, 0.0)).norm() < 1e-12);
        assert!((j.d2 - c(0.0, -0.375)).norm() < 1e-12);
        assert!((j.d3 - c(0.28125, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn h_jet_identity_at_zero() {
        let fm = pair_flow();
        let j = fm.h_jet(0.0, c(0.4, 2.0)).unwrap();
        assert_eq!(j.d1, c(1.0, 0.0));
        assert_eq!(j.d2, c(0.0, 0.0));
        assert_eq!(j.d3, c(0.0, 0.0));
    }

    #[test]
    fn h_jet_matches_finite_differences() {
        let fm = pair_flow();
        let (t, z) = (1.0, c(0.0, 2.0));
        let j = fm.h_jet(t, z).unwrap();
        let step = 1e-4;
        let hv = |dz: Complex64| fm.h(t, z + dz).unwrap();
        let d1 = (hv(c(step, 0.0)) - hv(c(-step, 0.0))) / (2.0 * step);
        let d2 = (hv(c(step, 0.0)) - 2.0 * j.value + hv(c(-step, 0.0))) / (step * step);
        let d3 = (hv(c(2.0 * step, 0.0)) - 2.0 * hv(c(step, 0.0))
            + 2.0 * hv(c(-step, 0.0))
            - hv(c(-2.0 * step, 0.0)))
            / (2.0 * step * step * step);
        assert!((d1 - j.d1).norm() < 1e-6 * (1.0 + j.d1.norm()), "d1 {d1} vs {}", j.d1);
        assert!((d2 - j.d2).norm() < 1e-6 * (1.0 + j.d2.norm()), "d2 {d2} vs {}", j.d2);
        assert!((d3 - j.d3).norm() < 1e-5 * (1.0 + j.d3.norm()), "d3 {d3} vs {}", j.d3);
    }

    #[test]
    fn flow_between_trivial_cases() {
        let fm = pair_flow();
        let z = c(0.2, 1.4);
        let (v, d) = fm.flow_between(0.8, 0.8, z).unwrap();
        assert_eq!(v, z);
        assert_eq!(d, c(1.0, 0.0));
        let (v0, _) = fm.flow_between(0.8, 0.0, z).unwrap();
        assert!((v0 - fm.h(0.8, z).unwrap()).norm() < 1e-13);
    }

    #[test]
    fn flow_between_composed_value_and_semigroup() {
        // g_{ln sqrt 2}(3i) with f(3i) = i/3: (3 - 1/3) i / sqrt 2.
        let fm = point_mass_flow();
        let z = c(0.0, 1.0);
        let (t1, t2) = (LN2, 0.5 * LN2);
        let (v, _) = fm.flow_between(t1, t2, z).unwrap();
        let expect = c(0.0, (8.0 / 3.0) / 2f64.sqrt());
        assert!((v - expect).norm() < 1e-12, "v={v} expect={expect}");
        // semigroup: h_{t1} = h_{t2} ∘ h_{t1}^{t2}
        let lhs = fm.h(t1, z).unwrap();
        let rhs = fm.h(t2, v).unwrap();
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn stieltjes_xt_values() {
        let fm = point_mass_flow();
        let m = fm.stieltjes_xt(LN2, c(0.0, 1.0)).unwrap();
        assert!((m - c(0.0, 2.0 / 3.0)).norm() < 1e-12);

        // initial condition
        let z = c(0.3, 0.9);
        let m0 = fm.stieltjes_xt(0.0, z).unwrap();
        assert!((m0 - fm.x0().stieltjes(z, 0).unwrap()).norm() < 1e-15);

        // long-time convergence to the semicircle transform
        let pair = pair_flow();
        let m10 = pair.stieltjes_xt(10.0, c(0.0, 1.0)).unwrap();
        let eq = crate::measures::semicircle_stieltjes(1.0, c(0.0, 1.0)).unwrap();
        assert!((m10 - eq).norm() < 1e-3, "m10={m10} eq={eq}");
    }

    #[test]
    fn schwarzian_annihilates_moebius() {
        let mo = Moebius {
            a: c(2.0, 1.0),
            b: c(0.0, -0.5),
            c: c(1.0, 0.0),
            d: c(3.0, 2.0),
        };
        for &z in &[c(0.5, 0.5), c(-1.0, 2.0)] {
            let s = schwarzian(&mo.jet(z).unwrap()).unwrap();
            assert!(s.norm() < 1e-13);
            let s2 = schwarzian2(&mo, z, z + c(1.0, 0.3)).unwrap();
            assert!(s2.norm() < 1e-12);
        }
    }

    #[test]
    fn schwarzian2_identity_and_diagonal() {
        let s = schwarzian2(&Identity, c(0.1, 1.0), c(2.0, -0.5)).unwrap();
        assert!(s.norm() < 1e-15);

        // diagonal case for h_t of the point mass: (1/6)(9/32) = 3/64
        let fm = point_mass_flow();
        let map = fm.h_map(LN2);
        let z = c(0.0, 1.0);
        let s = schwarzian2(&map, z, z).unwrap();
        assert!((s - c(3.0 / 64.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn schwarzian2_symmetry_and_continuity() {
        let fm = pair_flow();
        let map = fm.h_map(0.7);
        let (z1, z2) = (c(0.3, 1.1), c(-0.8, 2.0));
        let a = schwarzian2(&map, z1, z2).unwrap();
        let b = schwarzian2(&map, z2, z1).unwrap();
        assert_eq!(a, b, "two-point form must be exactly symmetric");

        let z = c(0.2, 1.5);
        let diag = schwarzian2(&map, z, z).unwrap();
        let mut prev = f64::INFINITY;
        for &delta in &[1e-3, 1e-4] {
            let near = schwarzian2(&map, z, z + c(delta, 0.0)).unwrap();
            let err = (near - diag).norm();
            assert!(err < prev, "delta={delta}: err {err} vs prev {prev}");
            // first-order decay: err should shrink by roughly the
            // delta ratio
            if prev.is_finite() {
                assert!(err < 0.3 * prev);
            }
            prev = err;
        }
    }

    #[test]
    fn moebius_composition_preserves_schwarzian() {
        let fm = pair_flow();
        let mo = Moebius {
            a: c(1.0, 0.2),
            b: c(0.4, 0.0),
            c: c(0.3, -0.1),
            d: c(1.0, 0.0),
        };
        for &z in &[c(0.0, 1.0), c(1.2, -0.7)] {
            let hj = fm.h_jet(0.9, z).unwrap();
            let outer = mo.jet(hj.value).unwrap();
            let composed = Jet::compose(&outer, &hj);
            let s_composed = schwarzian(&composed).unwrap();
            let s_h = schwarzian(&hj).unwrap();
            assert!(
                (s_composed - s_h).norm() < 1e-9 * (1.0 + s_h.norm()),
                "z={z}: {s_composed} vs {s_h}"
            );
        }
    }

    #[test]
    fn density_semicircle_center() {
        // point mass relaxes to a semicircle; center density 1/(pi sigma)
        let fm = point_mass_flow();
        let d = fm.density(8.0, 0.0).unwrap();
        let expect = 1.0 / std::f64::consts::PI;
        assert!((d - expect).abs() < 1e-3, "d={d}");
    }

    #[test]
    fn density_support_merge() {
        let fm = pair_flow();
        // before the merge time log sqrt 2 the origin carries no mass
        let before = fm.density(0.2, 0.0).unwrap();
        assert!(before <= 5e-3, "before={before}");
        let after = fm.density(0.6, 0.0).unwrap();
        assert!(after > 1e-2, "after={after}");
        // exact value at t = 0.6: (e^t/pi) u/(1+u^2), u = sqrt(e^{2t}-2)
        let u = (1.2f64.exp() - 2.0).sqrt();
        let exact = 0.6f64.exp() / std::f64::consts::PI * u / (1.0 + u * u);
        assert!((after - exact).abs() < 5e-3, "after={after} exact={exact}");
    }

    #[test]
    fn moment_xt_examples() {
        let fm = point_mass_flow();
        assert!((fm.moment_xt(0.37, 0).unwrap() - 1.0).abs() < 1e-10);
        // point mass at the origin flows through semicircles of variance
        // sigma^2 (1 - e^{-2t})
        let m2 = fm.moment_xt(LN2, 2).unwrap();
        assert!((m2 - 0.75).abs() < 1e-9, "m2={m2}");

        let pair = pair_flow();
        assert!((pair.moment_xt(0.0, 2).unwrap() - 1.0).abs() < 1e-9);
        // odd moment of a symmetric law
        assert!(pair.moment_xt(0.5, 1).unwrap().abs() < 1e-9);
    }

    #[test]
    fn round_trip_and_flow_identity_grid() {
        for fm in [point_mass_flow(), pair_flow()] {
            for &t in &[0.1, 1.0, 5.0] {
                for &z in &[c(0.0, 0.1), c(1.0, 1.0), c(-2.0, 4.0), c(0.5, -2.0)] {
                    let w = fm.h(t, z).unwrap();
                    let back = fm.g(t, w).unwrap().value;
                    assert!(
                        (back - z).norm() <= 1e-12 * (1.0 + z.norm()),
                        "t={t} z={z}: residual {}",
                        (back - z).norm()
                    );
                    assert!(w.im * z.im > 0.0, "half-plane violated at t={t} z={z}");
                    let m = fm.stieltjes_xt(t, z).unwrap();
                    let cross = t.exp() * fm.x0().stieltjes(w, 0).unwrap();
                    assert!((m - cross).norm() <= 1e-10 * (1.0 + m.norm()));
                }
            }
        }
    }

    #[test]
    fn characteristic_decay_along_flow() {
        // M(tau, g_tau(h_t(z))) = M(t, z) e^{tau - t}
        let fm = pair_flow();
        let (t, z) = (1.2, c(0.4, 1.0));
        let mt = fm.stieltjes_xt(t, z).unwrap();
        let w = fm.h(t, z).unwrap();
        for &tau in &[0.0, 0.3, 0.6, 0.9, 1.2] {
            let z_tau = fm.g(tau, w).unwrap().value;
            let m_tau = fm.stieltjes_xt(tau, z_tau).unwrap();
            let expect = mt * (tau - t).exp();
            assert!(
                (m_tau - expect).norm() < 1e-9 * (1.0 + expect.norm()),
                "tau={tau}: {m_tau} vs {expect}"
            );
        }
    }

    #[test]
    fn pde_residual_small() {
        // M_t = (2 sigma^2 M + z) M_z + M by central differences
        let fm = pair_flow();
        let dt = 1e-4;
        let dz = 1e-4;
        for &t in &[0.4, 0.9] {
            for &z in &[c(0.0, 1.0), c(0.7, 1.5), c(-1.1, 0.8)] {
                let m = fm.stieltjes_xt(t, z).unwrap();
                let m_t = (fm.stieltjes_xt(t + dt, z).unwrap()
                    - fm.stieltjes_xt(t - dt, z).unwrap())
                    / (2.0 * dt);
                let m_z = (fm.stieltjes_xt(t, z + dz).unwrap()
                    - fm.stieltjes_xt(t, z - dz).unwrap())
                    / (2.0 * dz);
                let resid = m_t - (2.0 * m + z) * m_z - m;
                assert!(resid.norm() < 1e-5, "t={t} z={z}: residual {}", resid.norm());
            }
        }
    }

    #[test]
    fn h_rejects_real_axis_and_bad_time() {
        let fm = point_mass_flow();
        assert!(fm.h(1.0, c(0.5, 0.0)).is_err());
        assert!(fm.h(-0.1, c(0.0, 1.0)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn round_trip_random_points(
            re in -3.0f64..3.0,
            im_mag in 0.1f64..10.0,
            sign in prop::bool::ANY,
            t in 0.05f64..5.0,
        ) {
            let z = Complex64::new(re, if sign { im_mag } else { -im_mag });
            let fm = pair_flow();
            let w = fm.h(t, z).unwrap();
            let back = fm.g(t, w).unwrap().value;
            prop_assert!((back - z).norm() <= 1e-12 * (1.0 + z.norm()));
            prop_assert!(w.im * z.im > 0.0);
        }
    }
}
