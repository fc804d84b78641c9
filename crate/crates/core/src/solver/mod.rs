//! Parametrized Weierstrass families and a damped Gauss-Newton driver with a
//! Levenberg-Marquardt fallback for their period problems.

mod family;

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::{log_derivative, FormExpr};
use crate::quadrature::{integrate_path_vec, PathSpec};
use crate::surface::{CycleBasis, PeriodReport, WeierstrassData};

pub use family::{
    generator_cycles, half_period, periodic_g1h_family, pick_basepoint, puncture_loops,
    symmetric_params, HalfPeriod, PeriodicData, PeriodicParams,
};

/// Finite-difference step, relative to `max(1, |x|)`.
pub const FD_STEP: f64 = 1e-6;
/// Quadrature tolerance for residual evaluations.
pub const RESIDUAL_QUAD_TOL: f64 = 1e-12;
/// Smallest admissible distance between zeros and poles of `g` in the symmetric family;
/// below it the configuration is a collapse, not a surface.
pub const MIN_SEPARATION: f64 = 0.02;
const LINE_SEARCH_HALVINGS: usize = 8;
const LM_TRIES: usize = 10;

/// One real parameter with its admissible interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, lo: f64, hi: f64) -> Self {
        ParamSpec {
            name: name.into(),
            lo,
            hi,
        }
    }
}

/// A condition contributing entries to the residual vector.
#[derive(Debug, Clone, PartialEq)]
pub enum ResidualTerm {
    /// `P₊ − conj(P₋)` on the named cycle (two reals).
    Horizontal(String),
    /// `Re P₃` on the named cycle (one real).
    Vertical(String),
    /// Residue and second Laurent coefficient of `dg/g − i dh` at each puncture (four reals each).
    Asymptotic,
}

impl fmt::Display for ResidualTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResidualTerm::Horizontal(c) => write!(f, "horizontal({c})"),
            ResidualTerm::Vertical(c) => write!(f, "vertical({c})"),
            ResidualTerm::Asymptotic => write!(f, "asymptotic"),
        }
    }
}

/// What a family constructor returns for one parameter vector.
#[derive(Debug, Clone)]
pub struct FamilyInstance {
    pub data: WeierstrassData,
    pub basis: CycleBasis,
    pub punctures: Vec<Complex64>,
    /// Radius of the residue circles around the punctures.
    pub radius: f64,
}

pub type Builder = dyn Fn(&[f64]) -> Result<FamilyInstance> + Send + Sync;

/// Parameters, constructor and residual list of a family.
#[derive(Clone)]
pub struct FamilySpec {
    params: Vec<ParamSpec>,
    residuals: Vec<ResidualTerm>,
    build: Arc<Builder>,
}

impl fmt::Debug for FamilySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FamilySpec")
            .field("params", &self.params)
            .field("residuals", &self.residuals)
            .finish()
    }
}

impl FamilySpec {
    pub fn new(
        params: Vec<ParamSpec>,
        residuals: Vec<ResidualTerm>,
        build: impl Fn(&[f64]) -> Result<FamilyInstance> + Send + Sync + 'static,
    ) -> Result<Self> {
        if residuals.is_empty() {
            return Err(Error::InvalidFamily("residual list is empty".into()));
        }
        for p in &params {
            if !(p.lo < p.hi) {
                return Err(Error::InvalidFamily(format!(
                    "parameter {} has an empty box",
                    p.name
                )));
            }
        }
        Ok(FamilySpec {
            params,
            residuals,
            build: Arc::new(build),
        })
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn residual_terms(&self) -> &[ResidualTerm] {
        &self.residuals
    }

    pub fn instance(&self, x: &[f64]) -> Result<FamilyInstance> {
        if x.len() != self.params.len() {
            return Err(Error::InvalidFamily(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                x.len()
            )));
        }
        (self.build)(x)
    }

    pub fn in_box(&self, x: &[f64]) -> bool {
        x.len() == self.params.len()
            && self
                .params
                .iter()
                .zip(x)
                .all(|(p, v)| *v >= p.lo && *v <= p.hi)
    }

    fn project(&self, x: &mut [f64]) {
        for (p, v) in self.params.iter().zip(x.iter_mut()) {
            *v = v.clamp(p.lo, p.hi);
        }
    }

    /// The residual vector at `x`.
    pub fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let inst = self.instance(x)?;
        residual_of(&inst, &self.residuals)
    }
}

/// Residual entries of `terms` for one instance.
pub fn residual_of(inst: &FamilyInstance, terms: &[ResidualTerm]) -> Result<Vec<f64>> {
    let mut cache: Vec<(String, [Complex64; 3])> = Vec::new();
    let mut triple = |label: &str| -> Result<[Complex64; 3]> {
        if let Some(t) = cache.iter().find(|c| c.0 == label) {
            return Ok(t.1);
        }
        let path = inst.basis.get(label).ok_or_else(|| {
            Error::InvalidFamily(format!("residual refers to unknown cycle {label}"))
        })?;
        let t = inst.data.period_triple(path, RESIDUAL_QUAD_TOL)?;
        cache.push((label.to_string(), t));
        Ok(t)
    };
    let mut out = Vec::new();
    for term in terms {
        match term {
            ResidualTerm::Horizontal(label) => {
                let [p, m, _] = triple(label)?;
                let d = p - m.conj();
                out.extend([d.re, d.im]);
            }
            ResidualTerm::Vertical(label) => out.push(triple(label)?[2].re),
            ResidualTerm::Asymptotic => {
                for c in asymptotic_terms(&inst.data, &inst.punctures, inst.radius)? {
                    out.extend([c.re, c.im]);
                }
            }
        }
    }
    Ok(out)
}

/// `dg/g − i dh`.
pub fn asymptotic_form(data: &WeierstrassData) -> FormExpr {
    let dgg = log_derivative(data.g());
    dgg.minus(&data.dh().scaled(Complex64::new(0.0, 1.0)))
}

/// Residue and `a₋₂` of `dg/g − i dh` at each puncture, interleaved.
pub fn asymptotic_terms(
    data: &WeierstrassData,
    punctures: &[Complex64],
    radius: f64,
) -> Result<Vec<Complex64>> {
    let w = asymptotic_form(data);
    let coeff = w.coefficient();
    let k = Complex64::new(0.0, 2.0 * PI);
    let mut out = Vec::with_capacity(2 * punctures.len());
    for &e in punctures {
        let path = PathSpec::circle(e, radius)?;
        let [m0, m1] = integrate_path_vec(&path, RESIDUAL_QUAD_TOL, |u| {
            let v = coeff
                .eval_unchecked(u)
                .map_err(|_| Error::NonFiniteSample(u))?;
            Ok([v, v * (u - e)])
        })?;
        out.push(m0 / k);
        out.push(m1 / k);
    }
    Ok(out)
}

/// `max over punctures of |res| + |a₋₂|` for `dg/g − i dh`; zero for helicoidal ends.
pub fn asymptotic_residual(
    data: &WeierstrassData,
    punctures: &[Complex64],
    radius: f64,
) -> Result<f64> {
    let t = asymptotic_terms(data, punctures, radius)?;
    Ok(t.chunks(2)
        .map(|c| c[0].norm() + c[1].norm())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub params: Vec<f64>,
    /// Residual norm at the start and after every accepted step.
    pub history: Vec<f64>,
    /// Recomputed from scratch at `params`.
    pub final_norm: f64,
    pub final_residual: Vec<f64>,
    pub report: PeriodReport,
    pub converged: bool,
    pub iterations: usize,
    /// Steps that needed the Levenberg-Marquardt fallback.
    pub lm_steps: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn jacobian(family: &FamilySpec, x: &[f64], r: &[f64]) -> Result<DMatrix<f64>> {
    let cols: Vec<Vec<f64>> = (0..x.len())
        .into_par_iter()
        .map(|j| {
            let p = &family.params[j];
            let h = FD_STEP * x[j].abs().max(1.0);
            // Forward difference, or backward at the upper bound or where the forward point is inadmissible.
            let eval = |step: f64| -> Result<Vec<f64>> {
                let mut xp = x.to_vec();
                xp[j] += step;
                let rp = family.residual(&xp)?;
                if rp.len() != r.len() {
                    return Err(Error::InvalidFamily(
                        "residual length changed with the parameters".into(),
                    ));
                }
                Ok(rp.iter().zip(r).map(|(a, b)| (a - b) / step).collect())
            };
            if x[j] + h > p.hi {
                eval(-h)
            } else {
                eval(h).or_else(|_| eval(-h))
            }
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(r.len(), x.len(), |i, j| cols[j][i]))
}

fn try_step(
    family: &FamilySpec,
    x: &[f64],
    step: &DVector<f64>,
    scale: f64,
) -> Option<(Vec<f64>, Vec<f64>, f64)> {
    let mut trial: Vec<f64> = x
        .iter()
        .zip(step.iter())
        .map(|(a, d)| a + scale * d)
        .collect();
    family.project(&mut trial);
    if trial.iter().zip(x).all(|(a, b)| a == b) {
        return None;
    }
    let r = family.residual(&trial).ok()?;
    if r.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let n = norm(&r);
    Some((trial, r, n))
}

/// Damped Gauss-Newton from `init`; Levenberg-Marquardt when no damped step reduces the norm.
pub fn solve(family: &FamilySpec, init: &[f64], tol: f64, max_iter: usize) -> Result<SolveResult> {
    if !family.in_box(init) {
        return Err(Error::InvalidFamily(
            "initial parameters lie outside the parameter box".into(),
        ));
    }
    let mut x = init.to_vec();
    let mut r = family.residual(&x)?;
    let mut current = norm(&r);
    if !current.is_finite() {
        return Err(Error::InvalidFamily(
            "residual is not finite at the initial parameters".into(),
        ));
    }
    let mut history = vec![current];
    let mut iterations = 0;
    let mut lm_steps = 0;
    while current >= tol && iterations < max_iter {
        let j = jacobian(family, &x, &r)?;
        let rv = DVector::from_column_slice(&r);
        let svd = j.clone().svd(true, true);
        let cutoff = svd.singular_values.max() * 1e-13;
        let gn = svd
            .solve(&(-&rv), cutoff)
            .map_err(|_| Error::SingularJacobian { norm: current })?;
        let mut accepted = None;
        let mut scale = 1.0;
        for _ in 0..=LINE_SEARCH_HALVINGS {
            if let Some(t) = try_step(family, &x, &gn, scale) {
                if t.2 < current {
                    accepted = Some(t);
                    break;
                }
            }
            scale *= 0.5;
        }
        if accepted.is_none() {
            let jtj = j.transpose() * &j;
            let g = j.transpose() * &rv;
            let mut mu = 1e-3 * jtj.diagonal().max().max(1e-12);
            for _ in 0..LM_TRIES {
                let mut a = jtj.clone();
                for k in 0..a.nrows() {
                    a[(k, k)] += mu * (1.0 + jtj[(k, k)]);
                }
                if let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) {
                    if let Some(t) = try_step(family, &x, &step, 1.0) {
                        if t.2 < current {
                            accepted = Some(t);
                            lm_steps += 1;
                            break;
                        }
                    }
                }
                mu *= 10.0;
            }
        }
        let Some((nx, nr, nn)) = accepted else {
            return Err(Error::SingularJacobian { norm: current });
        };
        log::debug!("solver iteration {}: |r| = {nn:e}", iterations + 1);
        x = nx;
        r = nr;
        current = nn;
        history.push(current);
        iterations += 1;
    }
    let inst = family.instance(&x)?;
    let final_residual = residual_of(&inst, &family.residuals)?;
    let final_norm = norm(&final_residual);
    let report = inst.data.period_report(&inst.basis, tol)?;
    Ok(SolveResult {
        params: x,
        history,
        final_norm,
        final_residual,
        report,
        converged: final_norm < tol,
        iterations,
        lm_steps,
    })
}

/// Whether the modulus is held fixed or solved for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauMode {
    Fixed(Complex64),
    /// `τ = i·t` with `t` an unknown.
    Rectangular,
    Free,
}

/// How the symmetric periodic family is parametrized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetricFamily {
    /// Where the companion zero of `g` sits relative to E₁.
    pub half: HalfPeriod,
    pub tau: TauMode,
    /// Adds `log ρ` as an unknown, relative to the `|g(p₀)| = 1` normalization.
    pub free_scale: bool,
    /// Restricts `E₁` to the diagonal `s·(1 + τ)/2` of the period parallelogram.
    pub diagonal: bool,
    pub series_tol: Option<f64>,
}

impl SymmetricFamily {
    pub fn param_names(&self) -> Vec<ParamSpec> {
        let mut p = if self.diagonal {
            vec![ParamSpec::new("s", 0.02, 0.98)]
        } else {
            vec![
                ParamSpec::new("e.re", -1.0, 1.0),
                ParamSpec::new("e.im", -1.0, 1.0),
            ]
        };
        if self.free_scale {
            p.push(ParamSpec::new("log_rho", -5.0, 5.0));
        }
        match self.tau {
            TauMode::Fixed(_) => {}
            TauMode::Rectangular => p.push(ParamSpec::new("tau.im", 0.2, 5.0)),
            TauMode::Free => {
                p.push(ParamSpec::new("tau.re", -0.5, 0.5));
                p.push(ParamSpec::new("tau.im", 0.2, 5.0));
            }
        }
        p
    }

    /// `(τ, E₁, log ρ)` from a parameter vector.
    pub fn unpack(&self, x: &[f64]) -> (Complex64, Complex64, f64) {
        let mut k = if self.diagonal { 1 } else { 2 };
        let log_rho = if self.free_scale {
            k += 1;
            x[k - 1]
        } else {
            0.0
        };
        let tau = match self.tau {
            TauMode::Fixed(t) => t,
            TauMode::Rectangular => Complex64::new(0.0, x[k]),
            TauMode::Free => Complex64::new(x[k], x[k + 1]),
        };
        let e = if self.diagonal {
            (tau + 1.0) * (0.5 * x[0])
        } else {
            Complex64::new(x[0], x[1])
        };
        (tau, e, log_rho)
    }

    /// Parameter vector for `E₁ = e` (or the diagonal coordinate `s`) at modulus `tau`, `ρ` unchanged.
    pub fn pack(&self, tau: Complex64, e_or_s: Complex64) -> Vec<f64> {
        let mut x = if self.diagonal {
            vec![e_or_s.re]
        } else {
            vec![e_or_s.re, e_or_s.im]
        };
        if self.free_scale {
            x.push(0.0);
        }
        match self.tau {
            TauMode::Fixed(_) => {}
            TauMode::Rectangular => x.push(tau.im),
            TauMode::Free => x.extend([tau.re, tau.im]),
        }
        x
    }

    pub fn params_at(&self, x: &[f64]) -> Result<PeriodicParams> {
        let (tau, e, log_rho) = self.unpack(x);
        let mut params = symmetric_params(tau, e, self.half, self.series_tol)?;
        params.rho *= log_rho.exp();
        Ok(params)
    }

    /// Builds the instance at `x`, with generator cycles and the two punctures.
    pub fn instance(&self, x: &[f64]) -> Result<FamilyInstance> {
        let params = self.params_at(x)?;
        let built = periodic_g1h_family(&params)?;
        let lat = &built.lattice;
        let singular = [params.zeros.as_slice(), params.poles.as_slice()].concat();
        let basis = generator_cycles(lat, &singular)?;
        let nearest = singular
            .iter()
            .flat_map(|a| singular.iter().map(move |b| (a, b)))
            .filter(|(a, b)| !lat.congruent(**a, **b, 1e-12))
            .map(|(a, b)| lat.distance_to_lattice(a - b))
            .fold(f64::INFINITY, f64::min);
        if nearest < MIN_SEPARATION {
            return Err(Error::InvalidFamily(format!(
                "singular points closer than {MIN_SEPARATION} modulo the lattice"
            )));
        }
        Ok(FamilyInstance {
            data: built.data,
            basis,
            punctures: vec![params.e1, params.e2],
            radius: (0.25 * nearest).min(0.1),
        })
    }

    /// Horizontal period conditions on both generators plus asymptotic regularity.
    /// Vertical periods stay free: they carry the screw motion.
    pub fn spec(self) -> Result<FamilySpec> {
        let residuals = vec![
            ResidualTerm::Horizontal("A".into()),
            ResidualTerm::Horizontal("B".into()),
            ResidualTerm::Asymptotic,
        ];
        FamilySpec::new(self.param_names(), residuals, move |x| self.instance(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_expr, parse_form, Domain};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn helicoid_has_regular_asymptotics() {
        let d = Domain::Plane;
        let data = WeierstrassData::new(
            parse_expr("exp(i*u)", &d).unwrap(),
            parse_form("1 du", &d).unwrap(),
            c(0.0, 0.0),
            "h",
        )
        .unwrap();
        assert!(asymptotic_residual(&data, &[c(0.0, 0.0)], 0.5).unwrap() < 1e-14);
    }

    #[test]
    fn zero_residual_converges_immediately() {
        let spec = FamilySpec::new(
            vec![ParamSpec::new("x", -1.0, 1.0)],
            vec![ResidualTerm::Asymptotic],
            |x| {
                let d = Domain::Plane;
                let g = parse_expr(&format!("exp(i*u)*{}", 1.0 + x[0]), &d)?;
                Ok(FamilyInstance {
                    data: WeierstrassData::new(g, parse_form("1 du", &d)?, c(0.0, 0.0), "h")?,
                    basis: CycleBasis::new(),
                    punctures: vec![c(0.0, 0.0)],
                    radius: 0.5,
                })
            },
        )
        .unwrap();
        let r = solve(&spec, &[0.2], 1e-10, 10).unwrap();
        assert!(r.converged && r.iterations == 0 && r.history.len() == 1);
    }

    #[test]
    fn empty_residual_list_is_rejected() {
        let spec = FamilySpec::new(vec![], vec![], |_| {
            Err(Error::InvalidFamily("unused".into()))
        });
        assert!(matches!(spec, Err(Error::InvalidFamily(_))));
    }

    #[test]
    fn symmetric_family_is_regular_at_the_ends() {
        let fam = SymmetricFamily {
            half: HalfPeriod::One,
            tau: TauMode::Fixed(c(0.0, 1.0)),
            free_scale: false,
            diagonal: false,
            series_tol: None,
        };
        let inst = fam.instance(&[0.21, 0.23]).unwrap();
        assert!(asymptotic_residual(&inst.data, &inst.punctures, inst.radius).unwrap() < 1e-9);
    }

    fn plane_data(a: f64) -> WeierstrassData {
        let d = Domain::punctured_plane(vec![c(0.0, 0.0)]).unwrap();
        let g = parse_expr(&format!("exp({a}/u + i*u)"), &d).unwrap();
        WeierstrassData::new(g, parse_form("1 du", &d).unwrap(), c(1.0, 0.0), "p").unwrap()
    }

    #[test]
    fn asymptotic_residual_tracks_the_double_pole() {
        let r = |a: f64| asymptotic_residual(&plane_data(a), &[c(0.0, 0.0)], 0.5).unwrap();
        assert!((r(0.7) - 0.7).abs() < 1e-10);
        let h = 1e-6;
        let slope = (r(0.5 + h) - r(0.5)) / h;
        let secant = (r(0.6) - r(0.5)) / 0.1;
        assert!((slope - secant).abs() < 1e-4);
    }

    #[test]
    fn generic_constants_leave_a_residual() {
        let e = c(0.3, 0.3);
        let p = PeriodicParams {
            tau: c(0.0, 1.0),
            e1: e,
            e2: -e,
            zeros: vec![c(0.1, 0.0), c(-0.1, 0.0)],
            poles: vec![c(0.0, 0.2), c(0.0, -0.2)],
            a: c(0.0, 0.0),
            rho: 1.0,
            c: c(0.0, 0.0),
            series_tol: None,
        };
        let built = periodic_g1h_family(&p).unwrap();
        // dg/g is regular at E₁, so only the residue −1 of −i·dh remains.
        let r = asymptotic_residual(&built.data, &[e, -e], 0.05).unwrap();
        assert!((r - 1.0).abs() < 1e-8, "{r}");
    }

    #[test]
    fn abel_violating_family_never_iterates() {
        let spec = FamilySpec::new(
            vec![ParamSpec::new("x", -1.0, 1.0)],
            vec![ResidualTerm::Asymptotic],
            |x| {
                let mut p = symmetric_params(c(0.0, 1.0), c(0.2, 0.2), HalfPeriod::One, None)?;
                p.a += x[0] + 0.5;
                let built = periodic_g1h_family(&p)?;
                Ok(FamilyInstance {
                    data: built.data,
                    basis: CycleBasis::new(),
                    punctures: vec![],
                    radius: 0.1,
                })
            },
        )
        .unwrap();
        assert!(matches!(
            solve(&spec, &[0.0], 1e-8, 50),
            Err(Error::AbelViolation(_))
        ));
        assert!(matches!(
            solve(&spec, &[2.0], 1e-8, 50),
            Err(Error::InvalidFamily(_))
        ));
    }

    #[test]
    fn diagonal_packing_round_trips() {
        let fam = SymmetricFamily {
            half: HalfPeriod::One,
            tau: TauMode::Free,
            free_scale: true,
            diagonal: true,
            series_tol: None,
        };
        let x = fam.pack(c(0.1, 1.2), c(0.7, 0.0));
        assert_eq!(x.len(), fam.param_names().len());
        let (tau, e, log_rho) = fam.unpack(&x);
        assert_eq!(tau, c(0.1, 1.2));
        assert!((e - c(1.1, 1.2) * 0.35).norm() < 1e-15);
        assert_eq!(log_rho, 0.0);
    }
}
