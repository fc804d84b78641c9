use std::f64::consts::PI;

use num_complex::Complex64;

use super::{pullback_form, FormExpr, Involution};
use crate::error::{Error, Result};
use crate::quadrature::{integrate_path_vec, PathSpec};

/// Quadrature tolerance for residue circles.
pub const RESIDUE_TOL: f64 = 1e-12;
const RESIDUE_THRESHOLD: f64 = 1e-8;
const ZERO_THRESHOLD: f64 = 1e-9;
const DEFAULT_RADIUS: f64 = 0.05;
const PROBE_SAMPLES: usize = 256;

fn sample_error(e: Error, z: Complex64) -> Error {
    match e {
        Error::PoleAt(_) | Error::DomainViolation(_) => Error::NonFiniteSample(z),
        other => other,
    }
}

/// `(1/2πi) ∮ w` over the circle of `radius` about `p`.
pub fn residue(w: &FormExpr, p: Complex64, radius: f64) -> Result<Complex64> {
    let path = PathSpec::circle(p, radius)?;
    let coeff = w.coefficient();
    // Cheap scan first so a circle through a pole fails fast instead of
    // exhausting the panel budget.
    for k in 0..PROBE_SAMPLES {
        let z = p + Complex64::from_polar(radius, 2.0 * PI * k as f64 / PROBE_SAMPLES as f64);
        coeff.eval_unchecked(z).map_err(|e| sample_error(e, z))?;
    }
    let [integral] = integrate_path_vec(&path, RESIDUE_TOL, |z| {
        coeff
            .eval_unchecked(z)
            .map(|v| [v])
            .map_err(|e| sample_error(e, z))
    })?;
    Ok(integral / Complex64::new(0.0, 2.0 * PI))
}

/// Local behaviour of `w + I*w` at a fixed point of the involution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FixedPointClass {
    /// `w` itself has a pole at `p`; `residue` is its residue there.
    SimplePole {
        residue: Complex64,
    },
    ZeroAt,
    IdenticallyZero,
    Regular {
        value: Complex64,
    },
}

impl FixedPointClass {
    pub fn name(&self) -> &'static str {
        match self {
            FixedPointClass::SimplePole { .. } => "SimplePole",
            FixedPointClass::ZeroAt => "ZeroAt",
            FixedPointClass::IdenticallyZero => "IdenticallyZero",
            FixedPointClass::Regular { .. } => "Regular",
        }
    }
}

pub fn classify_fixed_point(
    w: &FormExpr,
    inv: &Involution,
    p: Complex64,
) -> Result<FixedPointClass> {
    classify_fixed_point_with_radius(w, inv, p, DEFAULT_RADIUS)
}

/// Classifies `w + I*w` at `p`; `radius` must leave no other singularity within twice its size.
pub fn classify_fixed_point_with_radius(
    w: &FormExpr,
    inv: &Involution,
    p: Complex64,
    radius: f64,
) -> Result<FixedPointClass> {
    if !inv.is_fixed_point(p) {
        return Err(Error::IncompatibleInvolution(format!(
            "{p} is not a fixed point"
        )));
    }
    let b = residue(w, p, radius)?;
    if b.norm() > RESIDUE_THRESHOLD {
        return Ok(FixedPointClass::SimplePole { residue: b });
    }
    let sum = w.plus(&pullback_form(w, inv));
    let coeff = sum.coefficient();
    const N: usize = 64;
    let mut max_outer = 0.0f64;
    let mut max_inner = 0.0f64;
    let mut mean = Complex64::new(0.0, 0.0);
    for k in 0..N {
        let dir = Complex64::from_polar(1.0, 2.0 * PI * (k as f64 + 0.5) / N as f64);
        let outer = p + dir * radius;
        let inner = p + dir * (radius / 2.0);
        let vo = coeff
            .eval_unchecked(outer)
            .map_err(|e| sample_error(e, outer))?;
        let vi = coeff
            .eval_unchecked(inner)
            .map_err(|e| sample_error(e, inner))?;
        max_outer = max_outer.max(vo.norm());
        max_inner = max_inner.max(vi.norm());
        mean += vi;
    }
    mean /= N as f64;
    if max_outer < ZERO_THRESHOLD && max_inner < ZERO_THRESHOLD {
        return Ok(FixedPointClass::IdenticallyZero);
    }
    // Mean value over the inner circle equals the value at the centre.
    if mean.norm() <= 1e-6 * max_inner + 1e-12 {
        Ok(FixedPointClass::ZeroAt)
    } else {
        Ok(FixedPointClass::Regular { value: mean })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::Lattice;
    use crate::expr::{parse_form, Domain};
    use std::sync::Arc;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn residues_of_simple_poles() {
        let w = parse_form("1/u du", &Domain::Plane).unwrap();
        assert!((residue(&w, c(0.0, 0.0), 0.5).unwrap() - 1.0).norm() < 1e-10);
        let t = Domain::torus(Arc::new(Lattice::new(c(0.0, 1.0)).unwrap()), vec![]).unwrap();
        let w = parse_form("zeta(u) du", &t).unwrap();
        assert!((residue(&w, c(0.0, 0.0), 0.3).unwrap() - 1.0).norm() < 1e-10);
    }

    #[test]
    fn residue_circle_through_pole_is_reported() {
        let w = parse_form("1/(u-0.5) du", &Domain::Plane).unwrap();
        assert!(matches!(
            residue(&w, c(0.0, 0.0), 0.5),
            Err(Error::NonFiniteSample(_))
        ));
    }

    #[test]
    fn three_local_cases() {
        let d = Domain::Plane;
        let inv = Involution::new(c(0.0, 0.0), &d).unwrap();
        let class = |text: &str| {
            classify_fixed_point(&parse_form(text, &d).unwrap(), &inv, c(0.0, 0.0)).unwrap()
        };
        assert!(matches!(
            class("1/u du"),
            FixedPointClass::SimplePole { .. }
        ));
        assert_eq!(class("u du"), FixedPointClass::ZeroAt);
        assert_eq!(class("u^-2 du"), FixedPointClass::IdenticallyZero);
    }

    #[test]
    fn zeta_difference_at_fixed_points() {
        let t = Domain::torus(Arc::new(Lattice::new(c(0.0, 1.0)).unwrap()), vec![]).unwrap();
        let inv = Involution::new(c(0.0, 0.0), &t).unwrap();
        let w = parse_form("(zeta(u-0.2) - zeta(u+0.2)) du", &t).unwrap();
        for &p in inv.fixed_points() {
            // The form is odd, so its sum with the pullback vanishes.
            assert_eq!(
                classify_fixed_point(&w, &inv, p).unwrap(),
                FixedPointClass::IdenticallyZero
            );
        }
        let w = parse_form("zeta(u) du", &t).unwrap();
        let class = classify_fixed_point(&w, &inv, c(0.0, 0.0)).unwrap();
        match class {
            FixedPointClass::SimplePole { residue } => assert!((residue - 1.0).norm() < 1e-10),
            other => panic!("{other:?}"),
        }
    }
}
