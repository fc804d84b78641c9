//! Minimal immersions from Weierstrass data `(g, dh)`.
//!
//! The immersion is `F(p) = Re ∫ (½(1/g − g), (i/2)(1/g + g), 1) dh` from the
//! basepoint. All three components come from the period triple
//! `(∫ g dh, ∫ dh/g, ∫ dh)`, so a single quadrature pass per route serves
//! positions, periods and flux.

mod route;
mod symmetry;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::expr::{Domain, Expr, FormExpr};
use crate::quadrature::{integrate_path_vec, PathSpec};

pub use route::{straight_route, DETOUR_FRACTION};
pub use symmetry::{
    involution_report, pole_zero_pairing, symmetry_verify, InvolutionReport, PairingReport,
    SymmetryReport, UNIT_C_BAND,
};

/// Quadrature tolerance for positions.
pub const IMMERSE_TOL: f64 = 1e-10;
/// Minimum distance between a cycle and a puncture.
pub const CYCLE_CLEARANCE: f64 = 1e-6;

/// Gauss map `g` and height differential `dh` on a (punctured) plane or torus.
#[derive(Debug, Clone, PartialEq)]
pub struct WeierstrassData {
    g: Expr,
    dh: FormExpr,
    basepoint: Complex64,
    label: String,
    scale: f64,
}

impl WeierstrassData {
    pub fn new(
        g: Expr,
        dh: FormExpr,
        basepoint: Complex64,
        label: impl Into<String>,
    ) -> Result<Self> {
        if g.domain() != dh.domain() {
            return Err(Error::InvalidData(
                "g and dh live on different domains".into(),
            ));
        }
        let data = WeierstrassData {
            g,
            dh,
            basepoint,
            label: label.into(),
            scale: 1.0,
        };
        data.check_regular(basepoint).map_err(|e| {
            Error::InvalidData(format!("basepoint {basepoint} is not a regular point: {e}"))
        })?;
        Ok(data)
    }

    /// Uniform scale applied to positions, periods and flux.
    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidData(format!(
                "scale must be positive, got {scale}"
            )));
        }
        self.scale = scale;
        Ok(self)
    }

    pub fn with_basepoint(&self, basepoint: Complex64) -> Result<Self> {
        WeierstrassData::new(
            self.g.clone(),
            self.dh.clone(),
            basepoint,
            self.label.clone(),
        )?
        .with_scale(self.scale)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Same data with `g` replaced by `c·g`.
    pub fn with_g_scaled(&self, c: Complex64) -> Self {
        WeierstrassData {
            g: self.g.scaled(c),
            ..self.clone()
        }
    }

    pub fn g(&self) -> &Expr {
        &self.g
    }

    pub fn dh(&self) -> &FormExpr {
        &self.dh
    }

    pub fn domain(&self) -> &Domain {
        self.g.domain()
    }

    pub fn basepoint(&self) -> Complex64 {
        self.basepoint
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    fn check_regular(&self, p: Complex64) -> Result<()> {
        self.integrands(p).map(|_| ()).map_err(|e| match e {
            Error::PathThroughPole(z) => Error::PoleAt(z),
            other => other,
        })
    }

    /// `(g·h, h/g, h)` where `dh = h du`.
    pub fn integrands(&self, z: Complex64) -> Result<[Complex64; 3]> {
        let lift = |e: Error| match e {
            Error::PoleAt(_) | Error::DomainViolation(_) => Error::PathThroughPole(z),
            other => other,
        };
        let g = self.g.eval(z).map_err(lift)?;
        let h = self.dh.eval(z).map_err(lift)?;
        if g.norm() != 0.0 {
            return Ok([g * h, h / g, h]);
        }
        if h.norm() != 0.0 {
            return Err(Error::PathThroughPole(z));
        }
        // 0/0 where a zero of g meets a zero of dh: the mean over four symmetric
        // nearby points recovers the regular value to O(δ⁴).
        let delta = 1e-4 * (1.0 + z.norm());
        let mut acc = [Complex64::new(0.0, 0.0); 3];
        for k in 0..4 {
            let w = z + Complex64::from_polar(delta, 0.25 + k as f64 * std::f64::consts::FRAC_PI_2);
            let g = self.g.eval(w).map_err(lift)?;
            let h = self.dh.eval(w).map_err(lift)?;
            if g.norm() == 0.0 {
                return Err(Error::PathThroughPole(z));
            }
            for (a, v) in acc.iter_mut().zip([g * h, h / g, h]) {
                *a += v / 4.0;
            }
        }
        Ok(acc)
    }

    /// `(∫ g dh, ∫ dh/g, ∫ dh)` along `path`, times the scale.
    pub fn period_triple(&self, path: &PathSpec, tol: f64) -> Result<[Complex64; 3]> {
        let v = integrate_path_vec(path, tol / self.scale, |z| self.integrands(z))?;
        Ok(v.map(|x| x * self.scale))
    }

    /// `F(p)` along `route`, which must start at the basepoint and end at `p`.
    pub fn immerse(&self, p: Complex64, route: &PathSpec) -> Result<[f64; 3]> {
        if (route.start() - self.basepoint).norm() > 1e-12 {
            return Err(Error::InvalidPath(format!(
                "route starts at {} instead of the basepoint",
                route.start()
            )));
        }
        if (route.end() - p).norm() > 1e-12 {
            return Err(Error::InvalidPath(format!(
                "route ends at {} instead of {p}",
                route.end()
            )));
        }
        Ok(position(self.period_triple(route, IMMERSE_TOL)?))
    }

    /// Straight route from the basepoint to `p` with detours around punctures.
    pub fn route_to(&self, p: Complex64) -> Result<PathSpec> {
        if (p - self.basepoint).norm() == 0.0 {
            return Ok(PathSpec::line(p, p));
        }
        straight_route(
            self.basepoint,
            p,
            &self.singularities_near(self.basepoint, p),
        )
    }

    /// Punctures and, on a torus, their lattice translates near the segment `a`–`b`.
    pub fn singularities_near(&self, a: Complex64, b: Complex64) -> Vec<Complex64> {
        self.singularities_within((a + b) / 2.0, (b - a).norm() / 2.0 + 1.0)
    }

    /// Punctures (with lattice translates on a torus) within `radius` of `center`.
    pub fn singularities_within(&self, center: Complex64, radius: f64) -> Vec<Complex64> {
        let punctures = self.domain().punctures();
        match self.domain().lattice() {
            None => punctures.to_vec(),
            Some(lat) => {
                let mut out = Vec::new();
                for &p in punctures {
                    let base = lat.to_fundamental(p - center) + center;
                    let tau = lat.tau();
                    let n_max = (radius / tau.im).ceil() as i64 + 2;
                    let m_max = (radius + n_max as f64 * tau.re.abs()).ceil() as i64 + 2;
                    for n in -n_max..=n_max {
                        for m in -m_max..=m_max {
                            let q = base + lat.point(m, n);
                            if (q - center).norm() <= radius {
                                out.push(q);
                            }
                        }
                    }
                }
                out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
                out
            }
        }
    }

    /// Unit normal at `p` by inverse stereographic projection of `g(p)`.
    pub fn gauss_normal(&self, p: Complex64) -> Result<[f64; 3]> {
        match self.g.eval(p) {
            Ok(g) => Ok(stereographic(g)),
            Err(Error::PoleAt(_)) => Ok([0.0, 0.0, 1.0]),
            Err(e) => Err(e),
        }
    }

    /// Period integrals and closing residuals for every cycle of `basis`.
    pub fn period_report(&self, basis: &CycleBasis, tol: f64) -> Result<PeriodReport> {
        basis.check_against(self)?;
        let qtol = quadrature_tol(tol);
        let mut cycles = Vec::with_capacity(basis.len());
        for (label, path) in basis.iter() {
            let [p_plus, p_minus, p3] = self.period_triple(path, qtol)?;
            cycles.push(CyclePeriods {
                label: label.to_string(),
                p_plus,
                p_minus,
                p3,
                r1: (p_plus - p_minus.conj()).norm(),
                r2: p3.re.abs(),
            });
        }
        let max_residual = cycles.iter().map(|c| c.r1.max(c.r2)).fold(0.0, f64::max);
        Ok(PeriodReport {
            cycles,
            max_residual,
            closes: max_residual < tol,
        })
    }

    /// Flux of the conormal along `cycle`.
    pub fn flux(&self, cycle: &PathSpec, tol: f64) -> Result<FluxVector> {
        let t = self.period_triple(cycle, quadrature_tol(tol))?;
        Ok(FluxVector(flux_of(t)))
    }

    /// Checks that every basis cycle has zero horizontal flux.
    pub fn is_vertical_flux(&self, basis: &CycleBasis, tol: f64) -> Result<VerticalFlux> {
        basis.check_against(self)?;
        let mut horizontal = Vec::new();
        for (label, path) in basis.iter() {
            let f = self.flux(path, tol)?;
            horizontal.push((label.to_string(), f.horizontal()));
        }
        let max = horizontal.iter().map(|h| h.1).fold(0.0, f64::max);
        Ok(VerticalFlux {
            vertical: max < tol,
            vacuous: basis.is_empty(),
            max_horizontal: max,
            horizontal,
        })
    }

    /// Checks that `g dh` and `dh/g` integrate to zero on every basis cycle.
    pub fn exactness_check(&self, basis: &CycleBasis, tol: f64) -> Result<Exactness> {
        basis.check_against(self)?;
        let mut per_cycle = Vec::new();
        for (label, path) in basis.iter() {
            let [p_plus, p_minus, _] = self.period_triple(path, quadrature_tol(tol))?;
            per_cycle.push((label.to_string(), p_plus.norm().max(p_minus.norm())));
        }
        let max = per_cycle.iter().map(|c| c.1).fold(0.0, f64::max);
        Ok(Exactness {
            exact: max < tol,
            vacuous: basis.is_empty(),
            max,
            per_cycle,
        })
    }

    /// The Lopez-Ros deformation `(λg, dh)`.
    pub fn lopez_ros(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::NonpositiveLambda(lambda));
        }
        let mut out = self.with_g_scaled(Complex64::new(lambda, 0.0));
        out.label = format!("{} (lambda={lambda})", self.label);
        Ok(out)
    }

    /// Conformal factor `½(|g| + 1/|g|)·|h|` of the induced metric at `p`.
    pub fn metric_factor(&self, p: Complex64) -> Result<f64> {
        let g = self.g.eval(p)?.norm();
        let h = self.dh.eval(p)?.norm();
        Ok(0.5 * (g + 1.0 / g) * h * self.scale)
    }
}

/// Quadrature tolerance used for checks against `tol`.
pub fn quadrature_tol(tol: f64) -> f64 {
    (tol * 1e-2).clamp(1e-13, 1e-8)
}

/// Position from a period triple.
pub fn position(t: [Complex64; 3]) -> [f64; 3] {
    let [p, m, h] = t;
    let i = Complex64::new(0.0, 1.0);
    [(0.5 * (m - p)).re, (0.5 * i * (m + p)).re, h.re]
}

fn flux_of(t: [Complex64; 3]) -> [f64; 3] {
    let [p, m, h] = t;
    let i = Complex64::new(0.0, 1.0);
    [(0.5 * (m - p)).im, (0.5 * i * (m + p)).im, h.im]
}

/// Inverse stereographic projection, stable for large `|g|`.
pub fn stereographic(g: Complex64) -> [f64; 3] {
    let r2 = g.norm_sqr();
    if r2 <= 1.0 {
        let d = 1.0 + r2;
        [2.0 * g.re / d, 2.0 * g.im / d, (r2 - 1.0) / d]
    } else {
        let w = g.inv();
        let s2 = w.norm_sqr();
        let d = 1.0 + s2;
        [2.0 * w.re / d, -2.0 * w.im / d, (1.0 - s2) / d]
    }
}

/// Named closed cycles.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CycleBasis {
    cycles: Vec<(String, PathSpec)>,
}

impl CycleBasis {
    pub fn new() -> Self {
        CycleBasis::default()
    }

    pub fn push(&mut self, label: impl Into<String>, path: PathSpec) -> Result<()> {
        if !path.is_closed() {
            return Err(Error::InvalidPath("basis cycles must be closed".into()));
        }
        self.cycles.push((label.into(), path));
        Ok(())
    }

    pub fn with(mut self, label: impl Into<String>, path: PathSpec) -> Result<Self> {
        self.push(label, path)?;
        Ok(self)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &PathSpec)> {
        self.cycles.iter().map(|(l, p)| (l.as_str(), p))
    }

    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<&PathSpec> {
        self.cycles.iter().find(|c| c.0 == label).map(|c| &c.1)
    }

    fn check_against(&self, data: &WeierstrassData) -> Result<()> {
        for (label, path) in self.iter() {
            for s in data.singularities_within(path.start(), path.length() + 1.0) {
                if path.distance_to(s) < CYCLE_CLEARANCE {
                    return Err(Error::InvalidPath(format!(
                        "cycle {label} passes within {CYCLE_CLEARANCE} of {s}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CyclePeriods {
    pub label: String,
    pub p_plus: Complex64,
    pub p_minus: Complex64,
    pub p3: Complex64,
    /// `|P₊ − conj(P₋)|`
    pub r1: f64,
    /// `|Re P₃|`
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodReport {
    pub cycles: Vec<CyclePeriods>,
    pub max_residual: f64,
    pub closes: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxVector(pub [f64; 3]);

impl FluxVector {
    pub fn horizontal(&self) -> f64 {
        self.0[0].hypot(self.0[1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerticalFlux {
    pub vertical: bool,
    pub vacuous: bool,
    pub max_horizontal: f64,
    pub horizontal: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exactness {
    pub exact: bool,
    pub vacuous: bool,
    pub max: f64,
    pub per_cycle: Vec<(String, f64)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_expr, parse_form};
    use std::f64::consts::{E, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn helicoid() -> WeierstrassData {
        let d = Domain::Plane;
        WeierstrassData::new(
            parse_expr("exp(i*u)", &d).unwrap(),
            parse_form("1 du", &d).unwrap(),
            c(0.0, 0.0),
            "helicoid",
        )
        .unwrap()
    }

    fn catenoid() -> WeierstrassData {
        let d = Domain::punctured_plane(vec![c(0.0, 0.0)]).unwrap();
        WeierstrassData::new(
            parse_expr("u", &d).unwrap(),
            parse_form("1/u du", &d).unwrap(),
            c(1.0, 0.0),
            "catenoid",
        )
        .unwrap()
    }

    #[test]
    fn helicoid_closed_form() {
        let h = helicoid();
        let p = c(PI / 2.0, 1.0);
        let x = h.immerse(p, &h.route_to(p).unwrap()).unwrap();
        let expect = [1f64.sinh(), 0.0, PI / 2.0];
        for k in 0..3 {
            assert!((x[k] - expect[k]).abs() < 1e-9, "{x:?}");
        }
        let zero = h
            .immerse(c(0.0, 0.0), &h.route_to(c(0.0, 0.0)).unwrap())
            .unwrap();
        assert_eq!(zero, [0.0; 3]);
    }

    #[test]
    fn catenoid_height_is_log_modulus() {
        let cat = catenoid();
        let x = cat
            .immerse(c(E, 0.0), &cat.route_to(c(E, 0.0)).unwrap())
            .unwrap();
        assert!((x[2] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn gauss_map_conventions() {
        assert_eq!(stereographic(c(0.0, 0.0)), [0.0, 0.0, -1.0]);
        let n = stereographic(Complex64::from_polar(1.0, 0.7));
        assert!(n[2].abs() < 1e-12);
        assert_eq!(
            helicoid().gauss_normal(c(0.0, 0.0)).unwrap(),
            [1.0, 0.0, 0.0]
        );
        let big = stereographic(c(1e200, 1e200));
        assert!((big[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn catenoid_periods_and_flux() {
        let cat = catenoid();
        let circle = PathSpec::circle(c(0.0, 0.0), 1.0).unwrap();
        let basis = CycleBasis::new().with("circle", circle.clone()).unwrap();
        let rep = cat.period_report(&basis, 1e-10).unwrap();
        assert!(rep.closes, "{rep:?}");
        assert!((rep.cycles[0].p3 - c(0.0, 2.0 * PI)).norm() < 1e-10);
        let f = cat.flux(&circle, 1e-10).unwrap();
        assert!((f.0[2] - 2.0 * PI).abs() < 1e-9 && f.horizontal() < 1e-9);
        let twice = cat.flux(&circle.repeated(2).unwrap(), 1e-10).unwrap();
        assert!((twice.0[2] - 4.0 * PI).abs() < 1e-9);
        assert!(cat.is_vertical_flux(&basis, 1e-9).unwrap().vertical);
        assert!(cat.exactness_check(&basis, 1e-10).unwrap().exact);
        for lambda in [0.5, 2.0] {
            let rep = cat
                .lopez_ros(lambda)
                .unwrap()
                .period_report(&basis, 1e-10)
                .unwrap();
            assert!(rep.closes);
        }
    }

    #[test]
    fn nonvertical_flux_breaks_under_deformation() {
        let d = Domain::punctured_plane(vec![c(0.0, 0.0)]).unwrap();
        let data = WeierstrassData::new(
            parse_expr("u", &d).unwrap(),
            parse_form("(1 - u^-2) du", &d).unwrap(),
            c(1.0, 0.0),
            "x",
        )
        .unwrap();
        let basis = CycleBasis::new()
            .with("circle", PathSpec::circle(c(0.0, 0.0), 1.0).unwrap())
            .unwrap();
        assert!(data.period_report(&basis, 1e-10).unwrap().closes);
        let vf = data.is_vertical_flux(&basis, 1e-9).unwrap();
        assert!(!vf.vertical && (vf.max_horizontal - 2.0 * PI).abs() < 1e-9);
        let rep = data
            .lopez_ros(2.0)
            .unwrap()
            .period_report(&basis, 1e-10)
            .unwrap();
        assert!((rep.cycles[0].r1 - 3.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn lambda_must_be_positive() {
        assert!(matches!(
            helicoid().lopez_ros(0.0),
            Err(Error::NonpositiveLambda(_))
        ));
        let same = helicoid().lopez_ros(1.0).unwrap();
        let u = c(0.3, -0.2);
        assert_eq!(same.g().eval(u).unwrap(), helicoid().g().eval(u).unwrap());
    }

    #[test]
    fn basepoint_must_be_regular() {
        let d = Domain::punctured_plane(vec![c(0.0, 0.0)]).unwrap();
        let g = parse_expr("u", &d).unwrap();
        let dh = parse_form("1/u du", &d).unwrap();
        assert!(WeierstrassData::new(g, dh, c(0.0, 0.0), "bad").is_err());
    }
}
