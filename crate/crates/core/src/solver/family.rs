use std::sync::Arc;

use num_complex::Complex64;

use crate::elliptic::Lattice;
use crate::error::{Error, Result};
use crate::expr::{abel_check, Domain, Expr, FormExpr, Kernel, Node};
use crate::quadrature::{Closure, PathSpec};
use crate::surface::{CycleBasis, WeierstrassData};

/// Inputs of the periodic genus-one family.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicParams {
    pub tau: Complex64,
    pub e1: Complex64,
    pub e2: Complex64,
    /// Zeros of `g` (E₁ must be among them for regular asymptotics).
    pub zeros: Vec<Complex64>,
    /// Poles of `g`.
    pub poles: Vec<Complex64>,
    /// Coefficient of the exponential factor `exp(a·u)`.
    pub a: Complex64,
    pub rho: f64,
    /// Additive constant in `dh`.
    pub c: Complex64,
    pub series_tol: Option<f64>,
}

/// Data built by [`periodic_g1h_family`] plus anything worth telling the caller.
#[derive(Debug, Clone)]
pub struct PeriodicData {
    pub data: WeierstrassData,
    pub lattice: Arc<Lattice>,
    pub warnings: Vec<String>,
}

fn shifted(k: Kernel, c: Complex64) -> Node {
    Node::Kernel(
        k,
        Box::new(Node::Sub(Box::new(Node::Var), Box::new(Node::Const(c)))),
    )
}

fn product(nodes: Vec<Node>) -> Node {
    nodes
        .into_iter()
        .reduce(|a, b| Node::Mul(Box::new(a), Box::new(b)))
        .unwrap_or_else(|| Node::real(1.0))
}

/// `dh = −i(ζ(u−E₁) − ζ(u−E₂))du + c du` and
/// `g = ρ·exp(a·u)·Π σ(u−zᵢ) / Π σ(u−wⱼ)` on the torus punctured at E₁, E₂.
pub fn periodic_g1h_family(p: &PeriodicParams) -> Result<PeriodicData> {
    let lattice = Arc::new(match p.series_tol {
        Some(t) => Lattice::with_series_tol(p.tau, t)?,
        None => Lattice::new(p.tau)?,
    });
    if lattice.congruent(p.e1, p.e2, 1e-10) {
        return Err(Error::CoincidentPoints(format!(
            "E1 = {} and E2 = {} coincide modulo the lattice",
            p.e1, p.e2
        )));
    }
    if !(p.rho > 0.0 && p.rho.is_finite()) {
        return Err(Error::InvalidFamily(format!(
            "scale rho must be positive, got {}",
            p.rho
        )));
    }
    let mut warnings = Vec::new();
    let mut zeros = p.zeros.clone();
    let mut poles = Vec::new();
    for &w in &p.poles {
        if let Some(k) = zeros.iter().position(|&z| (z - w).norm() < 1e-12) {
            let z = zeros.remove(k);
            let msg = format!("zero {z} and pole {w} cancel; dropped both");
            log::warn!("{msg}");
            warnings.push(msg);
        } else {
            poles.push(w);
        }
    }
    for (i, z) in zeros.iter().enumerate() {
        if zeros[..i].iter().any(|o| lattice.congruent(*o, *z, 1e-12)) {
            continue;
        }
        if poles.iter().any(|w| lattice.congruent(*w, *z, 1e-12)) {
            return Err(Error::CoincidentPoints(format!(
                "zero {z} is congruent to a pole; write the cancelled pair explicitly"
            )));
        }
    }
    abel_check(&zeros, &poles, p.a, &lattice)?;

    let domain = Domain::torus(lattice.clone(), vec![p.e1, p.e2])?;
    let i = Complex64::new(0.0, 1.0);
    let zeta_diff = Node::Sub(
        Box::new(shifted(Kernel::Zeta, p.e1)),
        Box::new(shifted(Kernel::Zeta, p.e2)),
    );
    let dh_node = Node::Add(
        Box::new(Node::Mul(Box::new(Node::Const(-i)), Box::new(zeta_diff))),
        Box::new(Node::Const(p.c)),
    );
    let num = product(zeros.iter().map(|&z| shifted(Kernel::Sigma, z)).collect());
    let den = product(poles.iter().map(|&w| shifted(Kernel::Sigma, w)).collect());
    let mut g_node = Node::Div(Box::new(num), Box::new(den));
    if p.a != Complex64::new(0.0, 0.0) {
        let exp = Node::Exp(Box::new(Node::Mul(
            Box::new(Node::Const(p.a)),
            Box::new(Node::Var),
        )));
        g_node = Node::Mul(Box::new(exp), Box::new(g_node));
    }
    if p.rho != 1.0 {
        g_node = Node::Mul(Box::new(Node::real(p.rho)), Box::new(g_node));
    }
    let g = Expr::new(g_node, domain.clone())?;
    let dh = FormExpr::new(Expr::new(dh_node, domain)?);
    let basepoint = pick_basepoint(&lattice, &[&zeros[..], &poles[..], &[p.e1, p.e2]].concat());
    let data = WeierstrassData::new(g, dh, basepoint, "periodic-g1h")?;
    Ok(PeriodicData {
        data,
        lattice,
        warnings,
    })
}

/// A point of the fundamental domain far from every point of `avoid`.
pub fn pick_basepoint(lat: &Lattice, avoid: &[Complex64]) -> Complex64 {
    let tau = lat.tau();
    let mut best = (Complex64::new(0.5, 0.0) + tau * 0.5, -1.0);
    for j in 0..16 {
        for k in 0..16 {
            let u = Complex64::new((k as f64 + 0.5) / 16.0, 0.0) + tau * ((j as f64 + 0.5) / 16.0);
            let d = avoid
                .iter()
                .map(|&a| lat.distance_to_lattice(u - a))
                .fold(f64::INFINITY, f64::min);
            if d > best.1 + 1e-12 {
                best = (u, d);
            }
        }
    }
    best.0
}

/// Midpoint of the widest gap between the values `xs` taken modulo `period`.
fn widest_gap(xs: &[f64], period: f64) -> f64 {
    let mut v: Vec<f64> = xs.iter().map(|x| x.rem_euclid(period)).collect();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return 0.0;
    }
    let mut best = (v[0] + period - v[v.len() - 1], v[v.len() - 1]);
    for w in v.windows(2) {
        if w[1] - w[0] > best.0 {
            best = (w[1] - w[0], w[0]);
        }
    }
    best.1 + best.0 / 2.0
}

/// The generator cycles `A: u ↦ u + 1` and `B: u ↦ u + τ`, placed in the widest
/// gaps between the given singular points so they move continuously with them.
pub fn generator_cycles(lat: &Lattice, singular: &[Complex64]) -> Result<CycleBasis> {
    let tau = lat.tau();
    let heights: Vec<f64> = singular.iter().map(|z| z.im).collect();
    let y = widest_gap(&heights, tau.im);
    let along: Vec<f64> = singular
        .iter()
        .map(|z| (z - tau * (z.im / tau.im)).re)
        .collect();
    let x = widest_gap(&along, 1.0);
    let a_start = tau * (y / tau.im);
    let b_start = Complex64::new(x, 0.0);
    let a = PathSpec::new(
        vec![crate::quadrature::Segment::Line {
            from: a_start,
            to: a_start + 1.0,
        }],
        Closure::Period(Complex64::new(1.0, 0.0)),
    )?;
    let b = PathSpec::new(
        vec![crate::quadrature::Segment::Line {
            from: b_start,
            to: b_start + tau,
        }],
        Closure::Period(tau),
    )?;
    CycleBasis::new().with("A", a)?.with("B", b)
}

/// Small positively oriented loops around each puncture.
pub fn puncture_loops(
    lat: &Lattice,
    punctures: &[(String, Complex64)],
    others: &[Complex64],
) -> Result<CycleBasis> {
    let mut basis = CycleBasis::new();
    for (label, p) in punctures {
        let nearest = others
            .iter()
            .chain(punctures.iter().map(|q| &q.1))
            .filter(|q| !lat.congruent(**q, *p, 1e-12))
            .map(|q| lat.distance_to_lattice(q - p))
            .fold(lat.tau().norm().min(1.0), f64::min);
        basis.push(label.clone(), PathSpec::circle(*p, 0.25 * nearest)?)?;
    }
    Ok(basis)
}

/// Degree two companion zero placement: `g` gets its second zero at `ω/2 − E₁`.
pub fn half_period(lat: &Lattice, which: HalfPeriod) -> (Complex64, i64, i64) {
    let tau = lat.tau();
    match which {
        HalfPeriod::One => (Complex64::new(0.5, 0.0), 1, 0),
        HalfPeriod::Tau => (tau / 2.0, 0, 1),
        HalfPeriod::OnePlusTau => ((tau + 1.0) / 2.0, 1, 1),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HalfPeriod {
    One,
    Tau,
    OnePlusTau,
}

impl HalfPeriod {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "1" | "one" => Some(HalfPeriod::One),
            "tau" => Some(HalfPeriod::Tau),
            "1+tau" | "one_plus_tau" => Some(HalfPeriod::OnePlusTau),
            _ => None,
        }
    }
}

/// The symmetric configuration for `E₁ = e`, `E₂ = −e`: the second zero of `g`
/// sits at the zero `ω/2 − e` of `dh`, the second pole at its mirror image,
/// `c` makes `dh` vanish there, `a` satisfies Abel's condition, and `ρ`
/// normalizes `|g(p₀)| = 1`.
pub fn symmetric_params(
    tau: Complex64,
    e: Complex64,
    which: HalfPeriod,
    series_tol: Option<f64>,
) -> Result<PeriodicParams> {
    let lat = match series_tol {
        Some(t) => Lattice::with_series_tol(tau, t)?,
        None => Lattice::new(tau)?,
    };
    let (half, m, n) = half_period(&lat, which);
    let z0 = half - e;
    let i = Complex64::new(0.0, 1.0);
    let c = i * (lat.zeta(z0 - e)? - lat.zeta(z0 + e)?);
    let a = lat.eta_of(m, n);
    let mut params = PeriodicParams {
        tau,
        e1: e,
        e2: -e,
        zeros: vec![e, z0],
        poles: vec![-e, -z0],
        a,
        rho: 1.0,
        c,
        series_tol,
    };
    let built = periodic_g1h_family(&params)?;
    let g = built.data.g();
    let fixed = [
        Complex64::new(0.0, 0.0),
        Complex64::new(0.5, 0.0),
        tau / 2.0,
        (tau + 1.0) / 2.0,
    ];
    let g0 = fixed
        .iter()
        .filter_map(|&f| g.eval(f).ok())
        .find(|v| v.norm() > 1e-8 && v.norm() < 1e8)
        .ok_or_else(|| {
            Error::InvalidFamily("no regular fixed point for the normalization".into())
        })?;
    params.rho = 1.0 / g0.norm();
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{pullback_form, residue, Involution};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn residues_of_dh() {
        let p = symmetric_params(c(0.0, 1.0), c(0.23, 0.21), HalfPeriod::One, None).unwrap();
        let built = periodic_g1h_family(&p).unwrap();
        let dh = built.data.dh();
        assert!((residue(dh, p.e1, 0.05).unwrap() - c(0.0, -1.0)).norm() < 1e-10);
        assert!((residue(dh, p.e2, 0.05).unwrap() - c(0.0, 1.0)).norm() < 1e-10);
        assert!(dh.eval(p.zeros[1]).unwrap().norm() < 1e-12);
    }

    #[test]
    fn dh_is_odd_without_constant() {
        let p = PeriodicParams {
            tau: c(0.0, 1.0),
            e1: c(0.2, 0.3),
            e2: c(-0.2, -0.3),
            zeros: vec![c(0.1, 0.0)],
            poles: vec![c(0.1, 0.0)],
            a: c(0.0, 0.0),
            rho: 1.0,
            c: c(0.0, 0.0),
            series_tol: None,
        };
        let built = periodic_g1h_family(&p).unwrap();
        assert_eq!(built.warnings.len(), 1);
        let inv = Involution::new(c(0.0, 0.0), built.data.domain()).unwrap();
        let dh = built.data.dh();
        let back = pullback_form(dh, &inv);
        for u in [c(0.1, 0.2), c(0.4, -0.1), c(-0.3, 0.35)] {
            assert!((back.eval(u).unwrap() + dh.eval(u).unwrap()).norm() < 1e-10);
        }
    }

    #[test]
    fn guards() {
        let mut p = symmetric_params(c(0.0, 1.0), c(0.23, 0.21), HalfPeriod::One, None).unwrap();
        p.a = c(0.0, 0.0);
        assert!(matches!(
            periodic_g1h_family(&p),
            Err(Error::AbelViolation(_))
        ));
        p.e2 = p.e1 + 1.0;
        assert!(matches!(
            periodic_g1h_family(&p),
            Err(Error::CoincidentPoints(_))
        ));
    }
}
