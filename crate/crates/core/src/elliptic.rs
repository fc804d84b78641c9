//! Weierstrass elliptic kernels on the lattice generated by `1` and `tau`.
//!
//! Everything is computed from the Jacobi theta function `theta1(v, q)` with
//! nome `q = exp(i pi tau)` after reducing the argument to the lattice cell
//! nearest the origin:
//!
//! ```text
//! sigma(u) = exp(eta_h u^2) theta1(pi u) / (pi theta1'(0))
//! zeta(u)  = 2 eta_h u + pi theta1'(pi u) / theta1(pi u)
//! wp(u)    = -zeta'(u)
//! ```
//!
//! where `eta_h = zeta(1/2)`. Quasi-period constants use the increment
//! convention `zeta(u + 1) = zeta(u) + eta1`, `zeta(u + tau) = zeta(u) + eta2`,
//! under which the Legendre relation reads `eta1 tau - eta2 = 2 pi i`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Distance below which an argument counts as sitting on a lattice point.
pub const POLE_RADIUS: f64 = 1e-10;
/// Largest `|u|` accepted by the lattice functions; beyond it reduction modulo
/// the lattice has lost the digits the series need.
pub const MAX_ARGUMENT: f64 = 1e6;

/// Default truncation tolerance of the theta series.
pub const DEFAULT_SERIES_TOL: f64 = 1e-16;

const MAX_THETA_TERMS: usize = 400;

/// A torus modulus together with its derived constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    tau: Complex64,
    q_log: Complex64,
    series_tol: f64,
    half_eta: Complex64,
    theta1_prime0: Complex64,
    eta1: Complex64,
    eta2: Complex64,
    roots: [Complex64; 3],
}

/// `theta1` and its first three `v`-derivatives at one point.
#[derive(Debug, Clone, Copy)]
struct Theta {
    t0: Complex64,
    t1: Complex64,
    t2: Complex64,
    t3: Complex64,
}

/// An argument split as `u = reduced + m + n tau`.
#[derive(Debug, Clone, Copy)]
struct Reduced {
    reduced: Complex64,
    m: i64,
    n: i64,
}

impl Lattice {
    pub fn new(tau: Complex64) -> Result<Self> {
        Self::with_series_tol(tau, DEFAULT_SERIES_TOL)
    }

    pub fn with_series_tol(tau: Complex64, series_tol: f64) -> Result<Self> {
        if !(tau.im > 0.0) || !tau.re.is_finite() || !tau.im.is_finite() {
            return Err(Error::InvalidModulus(tau));
        }
        if !(series_tol > 0.0) {
            return Err(Error::InvalidModulus(tau));
        }
        let mut lat = Lattice {
            tau,
            q_log: Complex64::i() * PI * tau,
            series_tol,
            half_eta: Complex64::new(0.0, 0.0),
            theta1_prime0: Complex64::new(0.0, 0.0),
            eta1: Complex64::new(0.0, 0.0),
            eta2: Complex64::new(0.0, 0.0),
            roots: [Complex64::new(0.0, 0.0); 3],
        };
        let at_zero = lat.theta(Complex64::new(0.0, 0.0));
        lat.theta1_prime0 = at_zero.t1;
        lat.half_eta = -PI * PI * at_zero.t3 / (6.0 * at_zero.t1);
        lat.eta1 = 2.0 * lat.half_eta;
        // eta2 from the kernel itself at the half period tau/2, so that the
        // Legendre relation is a genuine check rather than a definition.
        let half_tau = tau / 2.0;
        let th = lat.theta(PI * half_tau);
        lat.eta2 = 2.0 * (2.0 * lat.half_eta * half_tau + PI * th.t1 / th.t0);
        let half_periods = [
            Complex64::new(0.5, 0.0),
            half_tau,
            Complex64::new(0.5, 0.0) + half_tau,
        ];
        let mut roots = [Complex64::new(0.0, 0.0); 3];
        for (slot, hp) in roots.iter_mut().zip(half_periods) {
            *slot = lat.wp(hp)?;
        }
        lat.roots = roots;
        Ok(lat)
    }

    pub fn tau(&self) -> Complex64 {
        self.tau
    }

    /// Nome `q = exp(i pi tau)`.
    pub fn q(&self) -> Complex64 {
        self.q_log.exp()
    }

    pub fn series_tol(&self) -> f64 {
        self.series_tol
    }

    /// Increment of `zeta` over the generator `1`.
    pub fn eta1(&self) -> Complex64 {
        self.eta1
    }

    /// Increment of `zeta` over the generator `tau`.
    pub fn eta2(&self) -> Complex64 {
        self.eta2
    }

    /// Values of `wp` at the half periods `1/2`, `tau/2`, `(1 + tau)/2`.
    pub fn half_period_values(&self) -> [Complex64; 3] {
        self.roots
    }

    pub fn g2(&self) -> Complex64 {
        let [a, b, c] = self.roots;
        2.0 * (a * a + b * b + c * c)
    }

    pub fn g3(&self) -> Complex64 {
        let [a, b, c] = self.roots;
        4.0 * a * b * c
    }

    /// Increment of `zeta` over the lattice vector `m + n tau`.
    pub fn eta_of(&self, m: i64, n: i64) -> Complex64 {
        self.eta1 * m as f64 + self.eta2 * n as f64
    }

    /// `m + n tau`.
    pub fn point(&self, m: i64, n: i64) -> Complex64 {
        Complex64::new(m as f64, 0.0) + self.tau * n as f64
    }

    /// Representative of `u` in the fundamental parallelogram
    /// `{s + t tau : s, t in [0, 1)}`.
    pub fn to_fundamental(&self, u: Complex64) -> Complex64 {
        let n = (u.im / self.tau.im).floor();
        let rest = u - self.tau * n;
        let m = rest.re.floor();
        let mut r = rest - m;
        if r.re >= 1.0 {
            r -= 1.0;
        }
        r
    }

    /// Distance from `u` to the nearest point of the lattice.
    pub fn distance_to_lattice(&self, u: Complex64) -> f64 {
        self.reduce(u).reduced.norm()
    }

    /// Whether `a` and `b` agree modulo the lattice to within `tol`.
    pub fn congruent(&self, a: Complex64, b: Complex64, tol: f64) -> bool {
        self.distance_to_lattice(a - b) < tol
    }

    fn reduce(&self, u: Complex64) -> Reduced {
        let n0 = (u.im / self.tau.im).round() as i64;
        let rest = u - self.tau * n0 as f64;
        let m0 = rest.re.round() as i64;
        let mut best = Reduced {
            reduced: u - self.point(m0, n0),
            m: m0,
            n: n0,
        };
        for dn in -1..=1 {
            for dm in -1..=1 {
                let (m, n) = (m0.saturating_add(dm), n0.saturating_add(dn));
                let r = u - self.point(m, n);
                if r.norm() < best.reduced.norm() {
                    best = Reduced { reduced: r, m, n };
                }
            }
        }
        best
    }

    fn theta(&self, v: Complex64) -> Theta {
        let mut acc = Theta {
            t0: Complex64::new(0.0, 0.0),
            t1: Complex64::new(0.0, 0.0),
            t2: Complex64::new(0.0, 0.0),
            t3: Complex64::new(0.0, 0.0),
        };
        for n in 0..MAX_THETA_TERMS {
            let k = (2 * n + 1) as f64;
            let half = n as f64 + 0.5;
            let weight = (self.q_log * (half * half)).exp() * if n % 2 == 0 { 2.0 } else { -2.0 };
            let arg = v * k;
            let (s, c) = (arg.sin(), arg.cos());
            let terms = [
                weight * s,
                weight * c * k,
                -weight * s * (k * k),
                -weight * c * (k * k * k),
            ];
            acc.t0 += terms[0];
            acc.t1 += terms[1];
            acc.t2 += terms[2];
            acc.t3 += terms[3];
            let small =
                |term: Complex64, sum: Complex64| term.norm() <= self.series_tol * sum.norm();
            if n >= 1
                && small(terms[0], acc.t0)
                && small(terms[1], acc.t1)
                && small(terms[2], acc.t2)
                && small(terms[3], acc.t3)
            {
                break;
            }
            // Terms that underflow to zero end the series regardless.
            if weight.norm() == 0.0 {
                break;
            }
        }
        acc
    }

    fn reduced_theta(&self, u: Complex64) -> Result<(Reduced, Theta)> {
        if !u.re.is_finite() || !u.im.is_finite() {
            return Err(Error::PoleAt(u));
        }
        if u.norm() > MAX_ARGUMENT {
            return Err(Error::ArgumentOutOfRange(u));
        }
        let red = self.reduce(u);
        if red.reduced.norm() < POLE_RADIUS {
            return Err(Error::PoleAt(u));
        }
        Ok((red, self.theta(PI * red.reduced)))
    }

    /// Weierstrass `wp`.
    pub fn wp(&self, u: Complex64) -> Result<Complex64> {
        let (_, th) = self.reduced_theta(u)?;
        let ratio = th.t1 / th.t0;
        Ok(-2.0 * self.half_eta + PI * PI * (ratio * ratio - th.t2 / th.t0))
    }

    /// Derivative `wp'`.
    pub fn wp_prime(&self, u: Complex64) -> Result<Complex64> {
        let (_, th) = self.reduced_theta(u)?;
        let r1 = th.t1 / th.t0;
        let r2 = th.t2 / th.t0;
        let r3 = th.t3 / th.t0;
        Ok(PI * PI * PI * (3.0 * r1 * r2 - 2.0 * r1 * r1 * r1 - r3))
    }

    /// Weierstrass `zeta` (quasi-periodic).
    pub fn zeta(&self, u: Complex64) -> Result<Complex64> {
        let (red, th) = self.reduced_theta(u)?;
        let local = 2.0 * self.half_eta * red.reduced + PI * th.t1 / th.t0;
        Ok(local + self.eta_of(red.m, red.n))
    }

    /// Weierstrass `sigma` (entire, quasi-periodic).
    pub fn sigma(&self, u: Complex64) -> Result<Complex64> {
        if !u.re.is_finite() || !u.im.is_finite() {
            return Err(Error::PoleAt(u));
        }
        if u.norm() > MAX_ARGUMENT {
            return Err(Error::ArgumentOutOfRange(u));
        }
        let red = self.reduce(u);
        let th = self.theta(PI * red.reduced);
        let local =
            (self.half_eta * red.reduced * red.reduced).exp() * th.t0 / (PI * self.theta1_prime0);
        let (m, n) = (red.m, red.n);
        let shift = self.point(m, n);
        // (-1)^(m + n + mn), and m + n + mn = (m + 1)(n + 1) - 1 is even iff both are.
        let sign = if m % 2 == 0 && n % 2 == 0 { 1.0 } else { -1.0 };
        Ok(local * (self.eta_of(m, n) * (red.reduced + shift / 2.0)).exp() * sign)
    }
}

/// `wp(u)` for the lattice `<1, tau>`.
pub fn wp(u: Complex64, lat: &Lattice) -> Result<Complex64> {
    lat.wp(u)
}

/// `wp'(u)` for the lattice `<1, tau>`.
pub fn wp_prime(u: Complex64, lat: &Lattice) -> Result<Complex64> {
    lat.wp_prime(u)
}

/// `zeta(u)` for the lattice `<1, tau>`.
pub fn zeta_w(u: Complex64, lat: &Lattice) -> Result<Complex64> {
    lat.zeta(u)
}

/// `sigma(u)` for the lattice `<1, tau>`.
pub fn sigma_w(u: Complex64, lat: &Lattice) -> Result<Complex64> {
    lat.sigma(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn square() -> Lattice {
        Lattice::new(c(0.0, 1.0)).unwrap()
    }

    #[test]
    fn laurent_leading_term() {
        let lat = square();
        let u = c(1e-4, 0.0);
        assert!((u * u * lat.wp(u).unwrap() - 1.0).norm() < 1e-6);
    }

    #[test]
    fn zeta_increment_matches_eta1() {
        let lat = square();
        let u = c(0.3, 0.2);
        let d = lat.zeta(u + 1.0).unwrap() - lat.zeta(u).unwrap();
        assert!((d - lat.eta1()).norm() < 1e-10);
    }

    #[test]
    fn eta1_is_twice_zeta_at_half() {
        let lat = Lattice::new(c(0.31, 1.17)).unwrap();
        let z = lat.zeta(c(0.5, 0.0)).unwrap();
        assert!((2.0 * z - lat.eta1()).norm() < 1e-12);
    }

    #[test]
    fn square_lattice_constants() {
        let lat = square();
        assert!((lat.eta1() - c(PI, 0.0)).norm() < 1e-13);
        assert!((lat.eta2() - c(0.0, -PI)).norm() < 1e-13);
        // g3 vanishes on the square lattice.
        assert!(lat.g3().norm() < 1e-10);
    }

    #[test]
    fn rejects_lower_half_plane() {
        assert!(matches!(
            Lattice::new(c(0.0, -1.0)),
            Err(Error::InvalidModulus(_))
        ));
        assert!(matches!(
            Lattice::new(c(1.0, 0.0)),
            Err(Error::InvalidModulus(_))
        ));
    }

    #[test]
    fn huge_arguments_are_rejected() {
        let lat = square();
        for u in [c(2.2e43, 0.0), c(5.1, -1e300), c(1e7, 1e7)] {
            assert!(matches!(lat.sigma(u), Err(Error::ArgumentOutOfRange(_))));
            assert!(matches!(lat.zeta(u), Err(Error::ArgumentOutOfRange(_))));
        }
        assert!(lat.distance_to_lattice(c(1e300, 1e300)).is_finite());
    }

    #[test]
    fn poles_detected_at_lattice_points() {
        let lat = Lattice::new(c(0.4, 0.9)).unwrap();
        for p in [
            c(0.0, 0.0),
            lat.point(1, 0),
            lat.point(-2, 3),
            lat.point(1, 1) + 1e-12,
        ] {
            assert!(matches!(lat.wp(p), Err(Error::PoleAt(_))));
            assert!(matches!(lat.zeta(p), Err(Error::PoleAt(_))));
            assert!(matches!(lat.wp_prime(p), Err(Error::PoleAt(_))));
            assert!(lat.sigma(p).unwrap().norm() < 1e-9);
        }
    }

    #[test]
    fn sigma_quasi_periodicity() {
        let lat = Lattice::new(c(0.2, 1.3)).unwrap();
        let u = c(0.17, -0.24);
        for (w, eta) in [(c(1.0, 0.0), lat.eta1()), (lat.tau(), lat.eta2())] {
            let lhs = lat.sigma(u + w).unwrap();
            let rhs = -(eta * (u + w / 2.0)).exp() * lat.sigma(u).unwrap();
            assert!((lhs - rhs).norm() < 1e-10 * rhs.norm().max(1.0));
        }
    }

    #[test]
    fn fundamental_representative() {
        let lat = Lattice::new(c(0.3, 0.8)).unwrap();
        let u = c(-3.7, 2.9);
        let r = lat.to_fundamental(u);
        assert!(lat.congruent(u, r, 1e-12));
        let t = r.im / lat.tau().im;
        let s = (r - lat.tau() * t).re;
        assert!((0.0..1.0).contains(&t) && (0.0..1.0).contains(&s));
    }
}
