use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{position, quadrature_tol, straight_route, WeierstrassData};
use crate::error::{Error, Result};
use crate::expr::{
    divisor_audit, function_divisor, locate_divisor, log_derivative, pullback, pullback_form,
    Divisor, Involution, Region,
};
use crate::quadrature::PathSpec;

/// `|C|` must be this close to 1 for the reflection identity to apply.
pub const UNIT_C_BAND: f64 = 1e-8;
const SAMPLE_COUNT: usize = 20;
const RESAMPLE_LIMIT: usize = 10;
const SAMPLE_SEED: u64 = 0x5eed_1a7e;
/// Half-width of the search square for divisors on plane domains.
const PLANE_SEARCH_HALF_WIDTH: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct InvolutionReport {
    pub dh_odd: bool,
    pub dgg_odd: bool,
    /// `g(p₀)²`
    pub c: Complex64,
    pub dh_deviation: f64,
    pub dgg_deviation: f64,
    /// Largest `|g(I(p))·g(p) − C|` relative to `max(1, |C|)`.
    pub product_deviation: f64,
    pub max_deviation: f64,
    pub samples: Vec<Complex64>,
}

fn check_compatible(data: &WeierstrassData, inv: &Involution) -> Result<()> {
    let dom = data.domain();
    for &p in dom.punctures() {
        if dom.puncture_near(inv.apply(p), 1e-9).is_none() {
            return Err(Error::IncompatibleInvolution(format!(
                "puncture {p} is not mapped to a puncture"
            )));
        }
    }
    if !inv.is_fixed_point(inv.p0()) {
        return Err(Error::IncompatibleInvolution(
            "p0 is not a fixed point".into(),
        ));
    }
    Ok(())
}

fn draw(rng: &mut ChaCha8Rng, data: &WeierstrassData, inv: &Involution) -> Complex64 {
    let (s, t): (f64, f64) = (rng.random(), rng.random());
    match data.domain().lattice() {
        Some(lat) => Complex64::new(s, 0.0) + lat.tau() * t,
        None => inv.p0() + Complex64::new(2.0 * s - 1.0, 2.0 * t - 1.0),
    }
}

/// Pointwise checks of `I*dh = −dh`, `I*(dg/g) = −dg/g` and `g∘I · g = C`.
pub fn involution_report(
    data: &WeierstrassData,
    inv: &Involution,
    tol: f64,
) -> Result<InvolutionReport> {
    check_compatible(data, inv)?;
    let dh = data.dh();
    let dh_back = pullback_form(dh, inv);
    let dgg = log_derivative(data.g());
    let dgg_back = pullback_form(&dgg, inv);
    let g = data.g();
    let g_back = pullback(g, inv);

    let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED);
    let mut rows = Vec::with_capacity(SAMPLE_COUNT);
    for _ in 0..SAMPLE_COUNT {
        let mut attempt = 0;
        loop {
            let u = draw(&mut rng, data, inv);
            let row = (|| -> Result<_> {
                let h = dh.eval(u)?;
                let l = dgg.eval(u)?;
                let gv = g.eval(u)?;
                let gi = g_back.eval(u)?;
                Ok((u, h, dh_back.eval(u)?, l, dgg_back.eval(u)?, gv * gi))
            })();
            match row {
                Ok(r) => {
                    rows.push(r);
                    break;
                }
                Err(Error::PoleAt(_) | Error::DomainViolation(_))
                    if attempt + 1 < RESAMPLE_LIMIT =>
                {
                    attempt += 1
                }
                Err(Error::PoleAt(_) | Error::DomainViolation(_)) => {
                    return Err(Error::SampleAtPole(RESAMPLE_LIMIT))
                }
                Err(e) => return Err(e),
            }
        }
    }
    let c = match g.eval(inv.p0()) {
        Ok(v) if v.norm() > 0.0 => v * v,
        _ => rows[0].5,
    };
    let rel = |a: Complex64, b: Complex64| (a - b).norm() / b.norm().max(1.0);
    let dh_deviation = rows.iter().map(|r| rel(-r.2, r.1)).fold(0.0, f64::max);
    let dgg_deviation = rows.iter().map(|r| rel(-r.4, r.3)).fold(0.0, f64::max);
    let product_deviation = rows.iter().map(|r| rel(r.5, c)).fold(0.0, f64::max);
    Ok(InvolutionReport {
        dh_odd: dh_deviation < tol,
        dgg_odd: dgg_deviation < tol,
        c,
        dh_deviation,
        dgg_deviation,
        product_deviation,
        max_deviation: dh_deviation.max(dgg_deviation).max(product_deviation),
        samples: rows.iter().map(|r| r.0).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryReport {
    /// Unit constant applied to `g` so that `g(p₀) > 0`.
    pub rotation: Complex64,
    pub c: Complex64,
    pub deviations: Vec<f64>,
    pub max_deviation: f64,
    pub ok: bool,
}

/// Checks `F(I(p)) = (F₁, −F₂, −F₃)(p)` after rotating `g(p₀)` onto the
/// positive reals and translating `F(p₀)` to the origin.
///
/// Routes must start at `p₀` or at the basepoint; in the latter case a straight
/// leg from `p₀` is prepended.
pub fn symmetry_verify(
    data: &WeierstrassData,
    inv: &Involution,
    samples: &[(Complex64, PathSpec)],
    tol: f64,
) -> Result<SymmetryReport> {
    check_compatible(data, inv)?;
    let p0 = inv.p0();
    let g0 = data.g().eval(p0)?;
    if g0.norm() == 0.0 {
        return Err(Error::InvalidData(format!("g vanishes at p0 = {p0}")));
    }
    let c = g0 * g0;
    let modulus = c.norm();
    if (modulus - 1.0).abs() > UNIT_C_BAND {
        return Err(Error::NotUnitModulusC { modulus });
    }
    let rotation = g0.norm() / g0;
    let rotated = data.with_g_scaled(rotation);
    let qtol = quadrature_tol(tol);
    let deviations: Vec<f64> = samples
        .par_iter()
        .map(|(p, route)| -> Result<f64> {
            let route = if (route.start() - p0).norm() <= 1e-12 {
                route.clone()
            } else if (route.start() - data.basepoint()).norm() <= 1e-12 {
                straight_route(
                    p0,
                    data.basepoint(),
                    &data.singularities_near(p0, data.basepoint()),
                )?
                .then(route)?
            } else {
                return Err(Error::InvalidPath(format!(
                    "route to {p} starts at neither p0 nor the basepoint"
                )));
            };
            if (route.end() - p).norm() > 1e-12 {
                return Err(Error::InvalidPath(format!("route does not end at {p}")));
            }
            let f = if route.length() == 0.0 {
                [0.0; 3]
            } else {
                position(rotated.period_triple(&route, qtol)?)
            };
            let image = route.affine(Complex64::new(-1.0, 0.0), inv.center());
            let fi = if route.length() == 0.0 {
                [0.0; 3]
            } else {
                position(rotated.period_triple(&image, qtol)?)
            };
            let d = [fi[0] - f[0], fi[1] + f[1], fi[2] + f[2]];
            Ok((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt())
        })
        .collect::<Result<_>>()?;
    let max_deviation = deviations.iter().copied().fold(0.0, f64::max);
    Ok(SymmetryReport {
        rotation,
        c,
        deviations,
        max_deviation,
        ok: max_deviation < tol,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolePairing {
    pub pole: Complex64,
    pub order: u32,
    pub image: Complex64,
    /// Order of `g` at the image (positive for a zero).
    pub image_order: i32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairingReport {
    pub pairs: Vec<PolePairing>,
    pub g_divisor: Divisor,
    pub dh_divisor: Divisor,
    pub violations: Vec<String>,
    pub vacuous: bool,
    pub ok: bool,
}

/// Checks that `I` carries each pole of `g` to a zero of the same order and
/// preserves the zero set of `dh`.
pub fn pole_zero_pairing(
    data: &WeierstrassData,
    inv: &Involution,
    tol: f64,
) -> Result<PairingReport> {
    check_compatible(data, inv)?;
    let lat = data.domain().lattice().map(|l| l.as_ref());
    let (g_divisor, dh_divisor) = match lat {
        Some(_) => (
            function_divisor(data.g())?,
            divisor_audit(data.dh())?.divisor,
        ),
        None => {
            let w = PLANE_SEARCH_HALF_WIDTH;
            let region = Region::new(
                inv.p0() - Complex64::new(w, w),
                Complex64::new(2.0 * w, 0.0),
                Complex64::new(0.0, 2.0 * w),
            );
            let g = Divisor {
                entries: locate_divisor(data.g(), &region)?,
                genus: 0,
            };
            let dh = Divisor {
                entries: locate_divisor(data.dh().coefficient(), &region)?,
                genus: 0,
            };
            (g, dh)
        }
    };
    let mut violations = Vec::new();
    let mut pairs = Vec::new();
    for (pole, order) in g_divisor.poles() {
        let image = inv.apply(pole);
        let image_order = g_divisor.order_at(image, tol, lat);
        if image_order != order as i32 {
            violations.push(format!(
                "pole of order {order} at {pole} maps to {image}, where g has order {image_order}"
            ));
        }
        pairs.push(PolePairing {
            pole,
            order,
            image,
            image_order,
        });
    }
    for (zero, order) in dh_divisor.zeros() {
        let image = inv.apply(zero);
        let image_order = dh_divisor.order_at(image, tol, lat);
        if image_order != order as i32 {
            violations.push(format!(
                "zero of dh at {zero} maps to {image}, where dh has order {image_order}"
            ));
        }
    }
    let vacuous = g_divisor.entries.is_empty();
    Ok(PairingReport {
        ok: violations.is_empty(),
        pairs,
        g_divisor,
        dh_divisor,
        violations,
        vacuous,
    })
}
