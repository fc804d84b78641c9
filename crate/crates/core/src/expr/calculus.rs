use num_complex::Complex64;

use super::{Expr, FormExpr, Involution, Kernel, Node};
use crate::elliptic::Lattice;

fn as_const(n: &Node) -> Option<Complex64> {
    match n {
        Node::Const(c) => Some(*c),
        _ => None,
    }
}

fn is_value(n: &Node, v: f64) -> bool {
    as_const(n) == Some(Complex64::new(v, 0.0))
}

pub(crate) fn add(a: Node, b: Node) -> Node {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => Node::Const(x + y),
        _ if is_value(&a, 0.0) => b,
        _ if is_value(&b, 0.0) => a,
        _ => Node::Add(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn sub(a: Node, b: Node) -> Node {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => Node::Const(x - y),
        _ if is_value(&b, 0.0) => a,
        _ if is_value(&a, 0.0) => neg(b),
        _ => Node::Sub(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn neg(a: Node) -> Node {
    match a {
        Node::Const(c) => Node::Const(-c),
        Node::Neg(inner) => *inner,
        other => Node::Neg(Box::new(other)),
    }
}

pub(crate) fn mul(a: Node, b: Node) -> Node {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => Node::Const(x * y),
        _ if is_value(&a, 0.0) || is_value(&b, 0.0) => Node::real(0.0),
        _ if is_value(&a, 1.0) => b,
        _ if is_value(&b, 1.0) => a,
        _ if is_value(&a, -1.0) => neg(b),
        _ if is_value(&b, -1.0) => neg(a),
        _ => Node::Mul(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn div(a: Node, b: Node) -> Node {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) if y != Complex64::new(0.0, 0.0) => Node::Const(x / y),
        _ if is_value(&b, 1.0) => a,
        _ if is_value(&a, 0.0) => Node::real(0.0),
        _ => Node::Div(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn pow(a: Node, n: i32) -> Node {
    match n {
        0 => Node::real(1.0),
        1 => a,
        _ => match a {
            Node::Const(c) => Node::Const(c.powi(n)),
            other => Node::Pow(Box::new(other), n),
        },
    }
}

fn kernel(k: Kernel, arg: &Node) -> Node {
    Node::Kernel(k, Box::new(arg.clone()))
}

/// Formal derivative of a node. `lat` supplies g2 for the second derivative of wp.
pub(crate) fn derive(node: &Node, lat: Option<&Lattice>) -> Node {
    match node {
        Node::Const(_) => Node::real(0.0),
        Node::Var => Node::real(1.0),
        Node::Neg(a) => neg(derive(a, lat)),
        Node::Add(a, b) => add(derive(a, lat), derive(b, lat)),
        Node::Sub(a, b) => sub(derive(a, lat), derive(b, lat)),
        Node::Mul(a, b) => add(
            mul(derive(a, lat), (**b).clone()),
            mul((**a).clone(), derive(b, lat)),
        ),
        Node::Div(a, b) => {
            let da = derive(a, lat);
            let db = derive(b, lat);
            if is_value(&db, 0.0) {
                return div(da, (**b).clone());
            }
            div(
                sub(mul(da, (**b).clone()), mul((**a).clone(), db)),
                pow((**b).clone(), 2),
            )
        }
        Node::Pow(a, n) => mul(
            mul(Node::real(*n as f64), pow((**a).clone(), n - 1)),
            derive(a, lat),
        ),
        Node::Exp(a) => mul(node.clone(), derive(a, lat)),
        Node::Kernel(k, a) => {
            let inner = derive(a, lat);
            let outer = match k {
                Kernel::Wp => kernel(Kernel::WpPrime, a),
                Kernel::WpPrime => {
                    let g2 = lat.map(|l| l.g2()).unwrap_or_default();
                    sub(
                        mul(Node::real(6.0), pow(kernel(Kernel::Wp, a), 2)),
                        Node::Const(g2 / 2.0),
                    )
                }
                Kernel::Zeta => neg(kernel(Kernel::Wp, a)),
                Kernel::Sigma => mul(node.clone(), kernel(Kernel::Zeta, a)),
            };
            mul(outer, inner)
        }
    }
}

/// d/du of `e`, on the same domain.
pub fn differentiate(e: &Expr) -> Expr {
    e.map_node(|n| derive(&n, e.lattice()))
}

fn log_derive(node: &Node, lat: Option<&Lattice>) -> Node {
    match node {
        Node::Const(_) => Node::real(0.0),
        Node::Var => pow(Node::Var, -1),
        Node::Neg(a) => log_derive(a, lat),
        Node::Mul(a, b) => add(log_derive(a, lat), log_derive(b, lat)),
        Node::Div(a, b) => sub(log_derive(a, lat), log_derive(b, lat)),
        Node::Pow(a, n) => mul(Node::real(*n as f64), log_derive(a, lat)),
        Node::Exp(a) => derive(a, lat),
        Node::Kernel(Kernel::Sigma, a) => mul(kernel(Kernel::Zeta, a), derive(a, lat)),
        other => div(derive(other, lat), other.clone()),
    }
}

/// `dg/g` as a form, expanded structurally over products, quotients, powers,
/// exponentials and sigma blocks.
pub fn log_derivative(g: &Expr) -> FormExpr {
    FormExpr::new(g.map_node(|n| log_derive(&n, g.lattice())))
}

fn substitute(node: &Node, with: &Node) -> Node {
    match node {
        Node::Const(_) => node.clone(),
        Node::Var => with.clone(),
        Node::Neg(a) => Node::Neg(Box::new(substitute(a, with))),
        Node::Add(a, b) => Node::Add(Box::new(substitute(a, with)), Box::new(substitute(b, with))),
        Node::Sub(a, b) => Node::Sub(Box::new(substitute(a, with)), Box::new(substitute(b, with))),
        Node::Mul(a, b) => Node::Mul(Box::new(substitute(a, with)), Box::new(substitute(b, with))),
        Node::Div(a, b) => Node::Div(Box::new(substitute(a, with)), Box::new(substitute(b, with))),
        Node::Pow(a, n) => Node::Pow(Box::new(substitute(a, with)), *n),
        Node::Exp(a) => Node::Exp(Box::new(substitute(a, with))),
        Node::Kernel(k, a) => Node::Kernel(*k, Box::new(substitute(a, with))),
    }
}

fn reflected(inv: &Involution) -> Node {
    sub(Node::Const(inv.center()), Node::Var)
}

/// `e ∘ I`.
pub fn pullback(e: &Expr, inv: &Involution) -> Expr {
    let with = reflected(inv);
    e.map_node(|n| substitute(&n, &with))
}

/// `I* w`: coefficient `-h(c - u)`.
pub fn pullback_form(w: &FormExpr, inv: &Involution) -> FormExpr {
    let with = reflected(inv);
    FormExpr::new(w.coefficient().map_node(|n| neg(substitute(&n, &with))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_expr, parse_form, Domain};
    use std::sync::Arc;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn torus() -> Domain {
        Domain::torus(Arc::new(Lattice::new(c(0.0, 1.0)).unwrap()), vec![]).unwrap()
    }

    fn fd(e: &Expr, u: Complex64) -> Complex64 {
        let h = 1e-5;
        (e.eval(u + h).unwrap() - e.eval(u - h).unwrap()) / (2.0 * h)
    }

    fn samples() -> [Complex64; 5] {
        [
            c(0.31, 0.17),
            c(-0.23, 0.41),
            c(0.12, -0.37),
            c(0.44, 0.29),
            c(-0.38, -0.13),
        ]
    }

    fn check_derivative(text: &str, d: &Domain) {
        let e = parse_expr(text, d).unwrap();
        let de = differentiate(&e);
        for u in samples() {
            let exact = de.eval(u).unwrap();
            let approx = fd(&e, u);
            assert!(
                (exact - approx).norm() < 1e-6 * exact.norm().max(1.0),
                "{text} at {u}: {exact} vs {approx}"
            );
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        check_derivative("exp((0.3-0.7*i)*u)", &Domain::Plane);
        check_derivative("u^3 - 2/u + (1+u)^-2", &Domain::Plane);
        let t = torus();
        check_derivative("zeta(u-0.05)", &t);
        check_derivative("wp(u-0.1*i)", &t);
        check_derivative("wpp(u+0.2)", &t);
        check_derivative("sigma(u-0.2)/sigma(u+0.3-0.1*i)", &t);
        check_derivative("sigma(2*u)*exp(u)", &t);
    }

    #[test]
    fn zeta_derivative_is_minus_wp() {
        let t = torus();
        let de = differentiate(&parse_expr("zeta(u-0.2)", &t).unwrap());
        let wp = parse_expr("wp(u-0.2)", &t).unwrap();
        for u in samples() {
            assert!((de.eval(u).unwrap() + wp.eval(u).unwrap()).norm() < 1e-12);
        }
    }

    #[test]
    fn log_derivative_of_exponential() {
        let g = parse_expr("exp(i*u)", &Domain::Plane).unwrap();
        let w = log_derivative(&g);
        assert_eq!(*w.coefficient().node(), Node::Const(c(0.0, 1.0)));
        let w = log_derivative(&parse_expr("3+i", &Domain::Plane).unwrap());
        assert_eq!(*w.coefficient().node(), Node::real(0.0));
    }

    #[test]
    fn log_derivative_of_sigma_quotient() {
        let t = torus();
        let (z1, z2, a) = (c(0.2, 0.1), c(-0.3, 0.25), c(0.4, -0.6));
        let g = parse_expr(
            "sigma(u-(0.2+0.1*i))/sigma(u-(-0.3+0.25*i))*exp((0.4-0.6*i)*u)",
            &t,
        )
        .unwrap();
        let w = log_derivative(&g);
        let lat = t.lattice().unwrap();
        for u in samples() {
            let expect = lat.zeta(u - z1).unwrap() - lat.zeta(u - z2).unwrap() + a;
            assert!((w.eval(u).unwrap() - expect).norm() < 1e-10);
        }
    }

    #[test]
    fn pullback_of_du_is_minus_du() {
        let inv = Involution::new(c(0.0, 0.0), &Domain::Plane).unwrap();
        let w = parse_form("1 du", &Domain::Plane).unwrap();
        let back = pullback_form(&w, &inv);
        assert_eq!(back.eval(c(0.3, 0.1)).unwrap(), c(-1.0, 0.0));
    }

    #[test]
    fn inverse_square_plus_pullback_vanishes() {
        let d = Domain::Plane;
        let inv = Involution::new(c(0.0, 0.0), &d).unwrap();
        let w = parse_form("u^-2 du", &d).unwrap();
        let s = w.plus(&pullback_form(&w, &inv));
        for k in 0..10 {
            let u = Complex64::from_polar(0.3 + 0.07 * k as f64, 0.9 * k as f64 + 0.2);
            assert!(s.eval(u).unwrap().norm() < 1e-12);
        }
    }

    #[test]
    fn zeta_difference_is_odd() {
        let t = torus();
        let inv = Involution::new(c(0.0, 0.0), &t).unwrap();
        let w = parse_form("(zeta(u-0.2-0.1*i) - zeta(u+0.2+0.1*i)) du", &t).unwrap();
        let back = pullback_form(&w, &inv);
        for u in samples() {
            assert!((back.eval(u).unwrap() + w.eval(u).unwrap()).norm() < 1e-10);
        }
    }

    #[test]
    fn pullback_twice_is_identity() {
        let t = torus();
        let inv = Involution::new(c(0.3, 0.2), &t).unwrap();
        let e = parse_expr("sigma(u-0.1)*exp(2*u)/wp(u+0.4)", &t).unwrap();
        let twice = pullback(&pullback(&e, &inv), &inv);
        for u in samples() {
            let (a, b) = (e.eval(u).unwrap(), twice.eval(u).unwrap());
            assert!((a - b).norm() < 1e-12 * a.norm().max(1.0));
        }
    }
}
