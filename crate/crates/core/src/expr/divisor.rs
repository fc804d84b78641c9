use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use super::{differentiate, Expr, FormExpr};
use crate::elliptic::Lattice;
use crate::error::{Error, Result};
use crate::quadrature::{integrate_path_vec, Closure, PathSpec};

const MAX_ATTEMPTS: usize = 5;
const GRID: usize = 8;
const MAX_REFINE: usize = 10;
const MOMENT_TOL: f64 = 1e-10;

/// Zeros (positive order) and poles (negative order) of a function or form.
#[derive(Debug, Clone, PartialEq)]
pub struct Divisor {
    pub entries: Vec<(Complex64, i32)>,
    pub genus: u32,
}

impl Divisor {
    /// Number of zeros counted with multiplicity.
    pub fn zero_count(&self) -> u32 {
        self.entries
            .iter()
            .filter(|e| e.1 > 0)
            .map(|e| e.1 as u32)
            .sum()
    }

    /// Number of poles counted with multiplicity.
    pub fn pole_count(&self) -> u32 {
        self.entries
            .iter()
            .filter(|e| e.1 < 0)
            .map(|e| (-e.1) as u32)
            .sum()
    }

    pub fn degree(&self) -> i32 {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn zeros(&self) -> impl Iterator<Item = (Complex64, u32)> + '_ {
        self.entries
            .iter()
            .filter(|e| e.1 > 0)
            .map(|e| (e.0, e.1 as u32))
    }

    pub fn poles(&self) -> impl Iterator<Item = (Complex64, u32)> + '_ {
        self.entries
            .iter()
            .filter(|e| e.1 < 0)
            .map(|e| (e.0, (-e.1) as u32))
    }

    /// Order at `p` (0 if absent), matching points modulo `lat` when given.
    pub fn order_at(&self, p: Complex64, tol: f64, lat: Option<&Lattice>) -> i32 {
        self.entries
            .iter()
            .find(|(q, _)| match lat {
                Some(l) => l.congruent(*q, p, tol),
                None => (q - p).norm() < tol,
            })
            .map_or(0, |e| e.1)
    }
}

/// Result of auditing a form on a torus.
#[derive(Debug, Clone, PartialEq)]
pub struct DivisorAudit {
    pub divisor: Divisor,
    pub zeros: u32,
    pub poles: u32,
    /// `#Z - #P == 2k - 2`.
    pub balanced: bool,
}

/// The parallelogram `origin + s·a + t·b`, `s, t ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub origin: Complex64,
    pub a: Complex64,
    pub b: Complex64,
}

impl Region {
    pub fn new(origin: Complex64, a: Complex64, b: Complex64) -> Self {
        Region { origin, a, b }
    }

    /// A fundamental parallelogram, nudged off the lattice and half-periods.
    pub fn fundamental(lat: &Lattice) -> Self {
        let tau = lat.tau();
        Region {
            origin: Complex64::new(-0.0123, 0.0) - 0.0171 * tau,
            a: Complex64::new(1.0, 0.0),
            b: tau,
        }
    }

    fn corner(&self, s: f64, t: f64) -> Complex64 {
        self.origin + self.a * s + self.b * t
    }

    fn diameter(&self) -> f64 {
        (self.a + self.b).norm().max((self.a - self.b).norm())
    }

    fn shifted(&self, by: Complex64) -> Self {
        Region {
            origin: self.origin + by,
            ..*self
        }
    }

    fn split(&self, n: usize) -> Vec<Region> {
        let (da, db) = (self.a / n as f64, self.b / n as f64);
        let mut cells = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                cells.push(Region {
                    origin: self.corner(i as f64 / n as f64, j as f64 / n as f64),
                    a: da,
                    b: db,
                });
            }
        }
        cells
    }

    fn boundary(&self) -> Result<PathSpec> {
        let pts = [
            self.corner(0.0, 0.0),
            self.corner(1.0, 0.0),
            self.corner(1.0, 1.0),
            self.corner(0.0, 1.0),
        ];
        let orient = (self.a.conj() * self.b).im;
        if orient > 0.0 {
            PathSpec::polyline(&[pts[0], pts[1], pts[2], pts[3], pts[0]], Closure::Closed)
        } else {
            PathSpec::polyline(&[pts[0], pts[3], pts[2], pts[1], pts[0]], Closure::Closed)
        }
    }
}

enum CellFailure {
    Contour,
    Fatal(Error),
}

impl From<Error> for CellFailure {
    fn from(e: Error) -> Self {
        match e {
            Error::PoleAt(_)
            | Error::NonFiniteSample(_)
            | Error::DomainViolation(_)
            | Error::NoConvergence { .. } => CellFailure::Contour,
            other => CellFailure::Fatal(other),
        }
    }
}

struct Locator<'a> {
    f: &'a Expr,
    df: Expr,
}

impl Locator<'_> {
    fn ratio(&self, u: Complex64) -> Result<Complex64> {
        let v = self.f.eval_unchecked(u)?;
        let d = self.df.eval_unchecked(u)?;
        if v.norm() == 0.0 {
            return Err(Error::PoleAt(u));
        }
        Ok(d / v)
    }

    fn moments(&self, cell: &Region) -> std::result::Result<[Complex64; 3], CellFailure> {
        let c = cell.corner(0.5, 0.5);
        let path = cell.boundary()?;
        let m = integrate_path_vec(&path, MOMENT_TOL, |u| {
            let r = self.ratio(u)?;
            let d = u - c;
            Ok([r, r * d, r * d * d])
        })?;
        let k = Complex64::new(0.0, 2.0 * PI);
        Ok([m[0] / k, m[1] / k, m[2] / k])
    }

    fn cell(
        &self,
        cell: &Region,
        depth: usize,
    ) -> std::result::Result<Vec<(Complex64, i32)>, CellFailure> {
        let [m0, m1, m2] = self.moments(cell)?;
        let n = m0.re.round();
        if (m0 - n).norm() > 0.05 {
            return Err(CellFailure::Contour);
        }
        let n = n as i32;
        let h = cell.diameter();
        let c = cell.corner(0.5, 0.5);
        if n == 0 && m1.norm() < 1e-7 * h {
            return Ok(Vec::new());
        }
        if n != 0 {
            let mean = m1 / n as f64;
            let spread = m2 / n as f64 - mean * mean;
            if spread.norm() < 1e-6 * h * h {
                return Ok(vec![(self.polish(c + mean, n, h), n)]);
            }
        }
        if depth >= MAX_REFINE {
            return Ok(if n == 0 {
                Vec::new()
            } else {
                vec![(c + m1 / n as f64, n)]
            });
        }
        let mut out = Vec::new();
        for sub in cell.split(2) {
            out.extend(self.cell(&sub, depth + 1)?);
        }
        Ok(out)
    }

    /// Multiplicity-aware Newton on the logarithmic derivative.
    fn polish(&self, start: Complex64, order: i32, h: f64) -> Complex64 {
        let mut u = start;
        for _ in 0..60 {
            let Ok(r) = self.ratio(u) else { break };
            let step = order as f64 / r;
            if !step.is_finite() {
                break;
            }
            u -= step;
            if step.norm() < 1e-15 * u.norm().max(1.0) {
                break;
            }
        }
        if (u - start).norm() < h {
            u
        } else {
            start
        }
    }
}

/// Locates zeros and poles of `f` inside `region` by the argument principle.
pub fn locate_divisor(f: &Expr, region: &Region) -> Result<Vec<(Complex64, i32)>> {
    let loc = Locator {
        f,
        df: differentiate(f),
    };
    let h = region.diameter() / GRID as f64;
    for attempt in 0..MAX_ATTEMPTS {
        let jitter = if attempt == 0 {
            Complex64::new(0.0, 0.0)
        } else {
            let k = attempt as f64;
            Complex64::new(0.0731 * k, 0.0419 * k) * h
        };
        let cells = region.shifted(jitter).split(GRID);
        let found: Vec<_> = cells.par_iter().map(|cell| loc.cell(cell, 0)).collect();
        let mut entries = Vec::new();
        let mut retry = false;
        for r in found {
            match r {
                Ok(v) => entries.extend(v),
                Err(CellFailure::Contour) => retry = true,
                Err(CellFailure::Fatal(e)) => return Err(e),
            }
        }
        if retry {
            log::debug!("divisor search hit a contour, retrying with jitter {attempt}");
            continue;
        }
        return Ok(entries);
    }
    Err(Error::ZeroOnContour {
        attempts: MAX_ATTEMPTS,
    })
}

fn canonical(entries: Vec<(Complex64, i32)>, lat: &Lattice) -> Vec<(Complex64, i32)> {
    let mut out: Vec<(Complex64, i32)> = Vec::new();
    for (p, n) in entries {
        let p = lat.to_fundamental(p);
        if let Some(e) = out.iter_mut().find(|(q, _)| lat.congruent(*q, p, 1e-8)) {
            e.1 += n;
        } else {
            out.push((p, n));
        }
    }
    out.retain(|e| e.1 != 0);
    out.sort_by(|a, b| a.0.re.total_cmp(&b.0.re).then(a.0.im.total_cmp(&b.0.im)));
    out
}

/// Divisor of a function on its torus, after checking that it is elliptic.
pub fn function_divisor(g: &Expr) -> Result<Divisor> {
    let lat = g
        .lattice()
        .ok_or_else(|| Error::DomainError("divisors are computed on torus domains".into()))?;
    let defect = periodicity_defect(g)?;
    if defect > 1e-8 {
        return Err(Error::AbelViolation(format!(
            "function is not doubly periodic (relative defect {defect:e})"
        )));
    }
    let entries = canonical(locate_divisor(g, &Region::fundamental(lat))?, lat);
    let d = Divisor { entries, genus: 1 };
    if d.degree() != 0 {
        return Err(Error::AuditFailed(format!(
            "{} zeros but {} poles",
            d.zero_count(),
            d.pole_count()
        )));
    }
    Ok(d)
}

/// Locates the divisor of a form on a torus and checks `#Z - #P = 2k - 2`.
pub fn divisor_audit(w: &FormExpr) -> Result<DivisorAudit> {
    let coeff = w.coefficient();
    let lat = coeff
        .lattice()
        .ok_or_else(|| Error::DomainError("divisor audits need a torus domain".into()))?;
    let entries = canonical(locate_divisor(coeff, &Region::fundamental(lat))?, lat);
    let divisor = Divisor { entries, genus: 1 };
    let (zeros, poles) = (divisor.zero_count(), divisor.pole_count());
    let target = 2 * divisor.genus as i64 - 2;
    if zeros as i64 - poles as i64 != target {
        return Err(Error::AuditFailed(format!(
            "{zeros} zeros but {poles} poles; expected #Z - #P = {target}"
        )));
    }
    Ok(DivisorAudit {
        divisor,
        zeros,
        poles,
        balanced: true,
    })
}

/// Largest relative change of `e` under the two lattice translations, over fixed samples.
pub fn periodicity_defect(e: &Expr) -> Result<f64> {
    let lat = e
        .lattice()
        .ok_or_else(|| Error::DomainError("periodicity is defined on torus domains".into()))?;
    let tau = lat.tau();
    let mut worst = 0.0f64;
    let mut used = 0;
    for k in 0..16 {
        let s = 0.137 + 0.0613 * k as f64;
        let t = 0.291 + 0.0447 * k as f64;
        let u = Complex64::new(s, 0.0) + tau * t;
        let (Ok(v), Ok(v1), Ok(vt)) = (
            e.eval_unchecked(u),
            e.eval_unchecked(u + 1.0),
            e.eval_unchecked(u + tau),
        ) else {
            continue;
        };
        let scale = v.norm().max(1.0);
        worst = worst
            .max((v1 - v).norm() / scale)
            .max((vt - v).norm() / scale);
        used += 1;
    }
    if used == 0 {
        return Err(Error::SampleAtPole(16));
    }
    Ok(worst)
}

/// Abel's condition for `exp(a·u)·Π σ(u − zᵢ) / Π σ(u − wⱼ)` to be elliptic.
pub fn abel_check(
    zeros: &[Complex64],
    poles: &[Complex64],
    a: Complex64,
    lat: &Lattice,
) -> Result<()> {
    if zeros.len() != poles.len() {
        return Err(Error::AbelViolation(format!(
            "{} zeros but {} poles; an elliptic function has as many of each",
            zeros.len(),
            poles.len()
        )));
    }
    let d: Complex64 = zeros.iter().sum::<Complex64>() - poles.iter().sum::<Complex64>();
    let tau = lat.tau();
    let n = d.im / tau.im;
    let m = (d - tau * n).re;
    let (mr, nr) = (m.round(), n.round());
    if (m - mr).abs() > 1e-9 || (n - nr).abs() > 1e-9 {
        return Err(Error::AbelViolation(format!(
            "sum of zeros minus sum of poles = {d} is not a lattice point"
        )));
    }
    let expected = lat.eta_of(mr as i64, nr as i64);
    if (a - expected).norm() > 1e-9 * expected.norm().max(1.0) {
        return Err(Error::AbelViolation(format!(
            "exponential coefficient {a} should be {expected} for divisor offset {mr} + {nr}·tau"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_expr, parse_form, Domain};
    use std::sync::Arc;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn square() -> Domain {
        Domain::torus(Arc::new(Lattice::new(c(0.0, 1.0)).unwrap()), vec![]).unwrap()
    }

    #[test]
    fn wp_divisor() {
        let d = square();
        let audit = divisor_audit(&parse_form("wp(u) du", &d).unwrap()).unwrap();
        assert_eq!((audit.zeros, audit.poles), (2, 2));
        let lat = d.lattice().unwrap();
        assert_eq!(audit.divisor.order_at(c(0.0, 0.0), 1e-8, Some(lat)), -2);
    }

    #[test]
    fn wp_prime_divisor() {
        let d = square();
        let audit = divisor_audit(&parse_form("wpp(u) du", &d).unwrap()).unwrap();
        assert_eq!((audit.zeros, audit.poles), (3, 3));
        let lat = d.lattice().unwrap();
        assert_eq!(audit.divisor.order_at(c(0.0, 0.0), 1e-8, Some(lat)), -3);
        for h in [c(0.5, 0.0), c(0.0, 0.5), c(0.5, 0.5)] {
            assert_eq!(audit.divisor.order_at(h, 1e-8, Some(lat)), 1, "{h}");
        }
    }

    #[test]
    fn non_periodic_coefficient_fails_audit() {
        let d = square();
        assert!(matches!(
            divisor_audit(&parse_form("(u - 0.3) du", &d).unwrap()),
            Err(Error::AuditFailed(_))
        ));
    }

    #[test]
    fn abel_condition() {
        let lat = Lattice::new(c(0.0, 1.0)).unwrap();
        let z = [c(0.2, 0.1)];
        assert!(abel_check(&z, &z, c(0.0, 0.0), &lat).is_ok());
        assert!(abel_check(&[c(0.2, 0.1)], &[c(-0.3, 0.2)], c(0.0, 0.0), &lat).is_err());
        assert!(abel_check(&[c(0.2, 0.0)], &[], c(0.0, 0.0), &lat).is_err());
        // Shift by 1 needs the exponential correction eta1.
        let (zs, ps) = ([c(0.3, 0.0), c(0.7, 0.0)], [c(0.0, 0.1), c(0.0, -0.1)]);
        assert!(abel_check(&zs, &ps, lat.eta1(), &lat).is_ok());
        assert!(abel_check(&zs, &ps, c(0.0, 0.0), &lat).is_err());
        let (zs, ps) = ([c(0.1, 0.3), c(0.1, 0.7)], [c(0.2, 0.0), c(0.0, 0.0)]);
        assert!(abel_check(&zs, &ps, lat.eta2(), &lat).is_ok());
    }

    #[test]
    fn abel_violating_function_is_rejected() {
        let d = square();
        let g = parse_expr("sigma(u-0.2)/sigma(u+0.3)", &d).unwrap();
        assert!(matches!(function_divisor(&g), Err(Error::AbelViolation(_))));
        let g = parse_expr(
            "sigma(u-0.2)*sigma(u+0.2)/(sigma(u-0.1*i)*sigma(u+0.1*i))",
            &d,
        )
        .unwrap();
        let div = function_divisor(&g).unwrap();
        assert_eq!((div.zero_count(), div.pole_count()), (2, 2));
    }
}
