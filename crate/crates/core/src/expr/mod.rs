//! Symbolic meromorphic functions and one-forms.
//!
//! An [`Expr`] is an AST over complex constants, the coordinate `u`,
//! arithmetic, integer powers, `exp`, and the Weierstrass kernels, tagged with
//! the domain it lives on. A [`FormExpr`] is a coefficient `Expr` times the
//! formal symbol `du`. Keeping data symbolic makes pullbacks, logarithmic
//! derivatives and differentiation exact.

mod calculus;
mod divisor;
mod forms;
mod involution;
mod parse;

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::elliptic::{Lattice, POLE_RADIUS};
use crate::error::{Error, Result};

pub use calculus::{differentiate, log_derivative, pullback, pullback_form};
pub use divisor::{
    abel_check, divisor_audit, function_divisor, locate_divisor, periodicity_defect, Divisor,
    DivisorAudit, Region,
};
pub use forms::{classify_fixed_point, classify_fixed_point_with_radius, residue, FixedPointClass};
pub use involution::Involution;
pub use parse::{parse, parse_expr, parse_form, Parsed, MAX_DEPTH};

/// Where an expression lives.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Plane,
    PuncturedPlane {
        punctures: Vec<Complex64>,
    },
    Torus {
        lattice: Arc<Lattice>,
        punctures: Vec<Complex64>,
    },
}

impl Domain {
    pub fn punctured_plane(punctures: Vec<Complex64>) -> Result<Self> {
        let d = Domain::PuncturedPlane { punctures };
        d.validate()?;
        Ok(d)
    }

    pub fn torus(lattice: Arc<Lattice>, punctures: Vec<Complex64>) -> Result<Self> {
        let d = Domain::Torus { lattice, punctures };
        d.validate()?;
        Ok(d)
    }

    pub fn lattice(&self) -> Option<&Arc<Lattice>> {
        match self {
            Domain::Torus { lattice, .. } => Some(lattice),
            _ => None,
        }
    }

    pub fn punctures(&self) -> &[Complex64] {
        match self {
            Domain::Plane => &[],
            Domain::PuncturedPlane { punctures } | Domain::Torus { punctures, .. } => punctures,
        }
    }

    pub fn is_torus(&self) -> bool {
        matches!(self, Domain::Torus { .. })
    }

    /// Distance between two points, modulo the lattice on a torus.
    pub fn distance(&self, a: Complex64, b: Complex64) -> f64 {
        match self {
            Domain::Torus { lattice, .. } => lattice.distance_to_lattice(a - b),
            _ => (a - b).norm(),
        }
    }

    /// The declared puncture within `tol` of `u`, if any.
    pub fn puncture_near(&self, u: Complex64, tol: f64) -> Option<Complex64> {
        self.punctures()
            .iter()
            .copied()
            .find(|&p| self.distance(u, p) < tol)
    }

    /// Same domain with a different puncture list.
    pub fn with_punctures(&self, punctures: Vec<Complex64>) -> Result<Self> {
        let d = match self {
            Domain::Plane | Domain::PuncturedPlane { .. } => {
                if punctures.is_empty() {
                    Domain::Plane
                } else {
                    Domain::PuncturedPlane { punctures }
                }
            }
            Domain::Torus { lattice, .. } => Domain::Torus {
                lattice: lattice.clone(),
                punctures,
            },
        };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<()> {
        let ps = self.punctures();
        for (i, a) in ps.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::DomainError(format!("puncture {a} is not finite")));
            }
            for b in &ps[..i] {
                if self.distance(*a, *b) < 1e-12 {
                    return Err(Error::DomainError(format!(
                        "punctures {b} and {a} coincide"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One of the Weierstrass kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kernel {
    Wp,
    WpPrime,
    Zeta,
    Sigma,
}

impl Kernel {
    pub fn name(self) -> &'static str {
        match self {
            Kernel::Wp => "wp",
            Kernel::WpPrime => "wpp",
            Kernel::Zeta => "zeta",
            Kernel::Sigma => "sigma",
        }
    }

    fn eval(self, lat: &Lattice, z: Complex64) -> Result<Complex64> {
        match self {
            Kernel::Wp => lat.wp(z),
            Kernel::WpPrime => lat.wp_prime(z),
            Kernel::Zeta => lat.zeta(z),
            Kernel::Sigma => lat.sigma(z),
        }
    }
}

/// Expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(Complex64),
    Var,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
    Exp(Box<Node>),
    Kernel(Kernel, Box<Node>),
}

impl Node {
    pub fn constant(c: Complex64) -> Node {
        Node::Const(c)
    }

    pub fn real(x: f64) -> Node {
        Node::Const(Complex64::new(x, 0.0))
    }

    pub fn contains_kernel(&self) -> bool {
        match self {
            Node::Const(_) | Node::Var => false,
            Node::Kernel(..) => true,
            Node::Neg(a) | Node::Pow(a, _) | Node::Exp(a) => a.contains_kernel(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.contains_kernel() || b.contains_kernel()
            }
        }
    }

    pub fn contains_var(&self) -> bool {
        match self {
            Node::Const(_) => false,
            Node::Var => true,
            Node::Neg(a) | Node::Pow(a, _) | Node::Exp(a) | Node::Kernel(_, a) => a.contains_var(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.contains_var() || b.contains_var()
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Const(_) | Node::Var => 1,
            Node::Neg(a) | Node::Pow(a, _) | Node::Exp(a) | Node::Kernel(_, a) => 1 + a.depth(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                1 + a.depth().max(b.depth())
            }
        }
    }

    /// Evaluates at `u`. `at` is the point reported in pole errors.
    fn eval_at(&self, u: Complex64, lat: Option<&Lattice>, at: Complex64) -> Result<Complex64> {
        let v = match self {
            Node::Const(c) => *c,
            Node::Var => u,
            Node::Neg(a) => -a.eval_at(u, lat, at)?,
            Node::Add(a, b) => a.eval_at(u, lat, at)? + b.eval_at(u, lat, at)?,
            Node::Sub(a, b) => a.eval_at(u, lat, at)? - b.eval_at(u, lat, at)?,
            Node::Mul(a, b) => a.eval_at(u, lat, at)? * b.eval_at(u, lat, at)?,
            Node::Div(a, b) => {
                let num = a.eval_at(u, lat, at)?;
                let den = b.eval_at(u, lat, at)?;
                if den.norm() == 0.0 {
                    return Err(Error::PoleAt(at));
                }
                num / den
            }
            Node::Pow(a, n) => {
                let base = a.eval_at(u, lat, at)?;
                if *n < 0 && base.norm() == 0.0 {
                    return Err(Error::PoleAt(at));
                }
                base.powi(*n)
            }
            Node::Exp(a) => a.eval_at(u, lat, at)?.exp(),
            Node::Kernel(k, a) => {
                let lat = lat.ok_or_else(|| {
                    Error::DomainError(format!("{} needs a torus domain", k.name()))
                })?;
                let z = a.eval_at(u, Some(lat), at)?;
                k.eval(lat, z).map_err(|e| match e {
                    Error::PoleAt(_) => Error::PoleAt(at),
                    other => other,
                })?
            }
        };
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(Error::PoleAt(at));
        }
        Ok(v)
    }
}

/// A meromorphic function on a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    node: Node,
    domain: Domain,
}

impl Expr {
    pub fn new(node: Node, domain: Domain) -> Result<Self> {
        if node.contains_kernel() && !domain.is_torus() {
            return Err(Error::DomainError(
                "elliptic blocks (wp, wpp, zeta, sigma) are only allowed on a torus domain".into(),
            ));
        }
        Ok(Expr { node, domain })
    }

    pub fn constant(c: Complex64, domain: Domain) -> Self {
        Expr {
            node: Node::Const(c),
            domain,
        }
    }

    pub fn node(&self) -> &Node {
        &self.node
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn lattice(&self) -> Option<&Lattice> {
        self.domain.lattice().map(|l| l.as_ref())
    }

    /// Value at `u`.
    pub fn eval(&self, u: Complex64) -> Result<Complex64> {
        if self.domain.puncture_near(u, POLE_RADIUS).is_some() {
            return Err(Error::DomainViolation(u));
        }
        self.node.eval_at(u, self.lattice(), u)
    }

    /// Value at `u` ignoring declared punctures (used on small circles around them).
    pub fn eval_unchecked(&self, u: Complex64) -> Result<Complex64> {
        self.node.eval_at(u, self.lattice(), u)
    }

    pub fn with_domain(&self, domain: Domain) -> Result<Expr> {
        Expr::new(self.node.clone(), domain)
    }

    pub fn map_node(&self, f: impl FnOnce(Node) -> Node) -> Expr {
        Expr {
            node: f(self.node.clone()),
            domain: self.domain.clone(),
        }
    }

    /// `c * self`.
    pub fn scaled(&self, c: Complex64) -> Expr {
        self.map_node(|n| calculus::mul(Node::Const(c), n))
    }
}

/// A meromorphic one-form `coefficient * du`.
#[derive(Debug, Clone, PartialEq)]
pub struct FormExpr {
    coefficient: Expr,
}

impl FormExpr {
    pub fn new(coefficient: Expr) -> Self {
        FormExpr { coefficient }
    }

    pub fn coefficient(&self) -> &Expr {
        &self.coefficient
    }

    pub fn domain(&self) -> &Domain {
        self.coefficient.domain()
    }

    /// Coefficient value at `u`.
    pub fn eval(&self, u: Complex64) -> Result<Complex64> {
        self.coefficient.eval(u)
    }

    /// `f * self` for a function `f` on the same domain.
    pub fn times(&self, f: &Expr) -> FormExpr {
        FormExpr::new(Expr {
            node: calculus::mul(f.node.clone(), self.coefficient.node.clone()),
            domain: self.coefficient.domain.clone(),
        })
    }

    pub fn plus(&self, other: &FormExpr) -> FormExpr {
        FormExpr::new(Expr {
            node: calculus::add(
                self.coefficient.node.clone(),
                other.coefficient.node.clone(),
            ),
            domain: self.coefficient.domain.clone(),
        })
    }

    pub fn minus(&self, other: &FormExpr) -> FormExpr {
        FormExpr::new(Expr {
            node: calculus::sub(
                self.coefficient.node.clone(),
                other.coefficient.node.clone(),
            ),
            domain: self.coefficient.domain.clone(),
        })
    }

    pub fn scaled(&self, c: Complex64) -> FormExpr {
        FormExpr::new(self.coefficient.scaled(c))
    }
}

fn fmt_number(f: &mut fmt::Formatter<'_>, c: Complex64) -> fmt::Result {
    let re = if c.re == 0.0 { 0.0 } else { c.re };
    let im = if c.im == 0.0 { 0.0 } else { c.im };
    match (re == 0.0, im == 0.0) {
        (_, true) if re >= 0.0 => write!(f, "{re}"),
        (_, true) => write!(f, "(-{})", -re),
        (true, false) if im == 1.0 => write!(f, "i"),
        (true, false) if im >= 0.0 => write!(f, "({im}*i)"),
        (true, false) => write!(f, "(-{}*i)", -im),
        (false, false) => {
            let sign = if im >= 0.0 { '+' } else { '-' };
            write!(f, "({re}{sign}{}*i)", im.abs())
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Const(c) => fmt_number(f, *c),
            Node::Var => write!(f, "u"),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Add(a, b) => write!(f, "({a} + {b})"),
            Node::Sub(a, b) => write!(f, "({a} - {b})"),
            Node::Mul(a, b) => write!(f, "({a} * {b})"),
            Node::Div(a, b) => write!(f, "({a} / {b})"),
            Node::Pow(a, n) => match **a {
                Node::Var | Node::Exp(_) | Node::Kernel(..) => write!(f, "{a}^{n}"),
                Node::Const(c) if c.im == 0.0 && c.re >= 0.0 => write!(f, "{a}^{n}"),
                _ => write!(f, "({a})^{n}"),
            },
            Node::Exp(a) => write!(f, "exp({a})"),
            Node::Kernel(k, a) => write!(f, "{}({a})", k.name()),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.node.fmt(f)
    }
}

impl fmt::Display for FormExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} du", self.coefficient)
    }
}
