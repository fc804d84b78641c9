use std::f64::consts::PI;

use num_complex::Complex64;

use super::{Domain, Expr, FormExpr, Kernel, Node};
use crate::error::{Error, Result};

/// Maximum nesting depth accepted by the parser.
pub const MAX_DEPTH: usize = 200;
const MAX_EXPONENT: i64 = 1000;

/// Result of parsing text that may or may not end in `du`.
#[derive(Debug, Clone, PartialEq)]
pub enum Parsed {
    Function(Expr),
    Form(FormExpr),
}

/// Parses either a function or a form (`<expr> du`).
pub fn parse(text: &str, domain: &Domain) -> Result<Parsed> {
    let mut p = Parser::new(text)?;
    let node = p.expr(0)?;
    let is_form = p.eat_differential();
    p.expect_end()?;
    let e = Expr::new(node, domain.clone())?;
    Ok(if is_form {
        Parsed::Form(FormExpr::new(e))
    } else {
        Parsed::Function(e)
    })
}

/// Parses a function; a trailing `du` is a syntax error.
pub fn parse_expr(text: &str, domain: &Domain) -> Result<Expr> {
    let mut p = Parser::new(text)?;
    let node = p.expr(0)?;
    p.expect_end()?;
    Expr::new(node, domain.clone())
}

/// Parses a form; the trailing `du` (or `dz`) is required.
pub fn parse_form(text: &str, domain: &Domain) -> Result<FormExpr> {
    let mut p = Parser::new(text)?;
    let node = p.expr(0)?;
    if !p.eat_differential() {
        return Err(p.error_here("expected 'du' after the coefficient"));
    }
    p.expect_end()?;
    Ok(FormExpr::new(Expr::new(node, domain.clone())?))
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Int(i64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

fn syntax(position: usize, message: impl Into<String>) -> Error {
    Error::SyntaxError {
        position,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => out.push((Tok::Plus, start)),
            b'-' => out.push((Tok::Minus, start)),
            b'*' => out.push((Tok::Star, start)),
            b'/' => out.push((Tok::Slash, start)),
            b'^' => out.push((Tok::Caret, start)),
            b'(' => out.push((Tok::LParen, start)),
            b')' => out.push((Tok::RParen, start)),
            b'0'..=b'9' | b'.' => {
                let mut j = i;
                let mut is_int = true;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                if j < bytes.len() && bytes[j] == b'.' {
                    is_int = false;
                    j += 1;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        while k < bytes.len() && bytes[k].is_ascii_digit() {
                            k += 1;
                        }
                        is_int = false;
                        j = k;
                    }
                }
                let s = &text[start..j];
                if s == "." {
                    return Err(syntax(start, "lone '.' is not a number"));
                }
                let tok = if is_int {
                    match s.parse::<i64>() {
                        Ok(n) => Tok::Int(n),
                        Err(_) => Tok::Num(
                            s.parse::<f64>()
                                .map_err(|_| syntax(start, "malformed number"))?,
                        ),
                    }
                } else {
                    Tok::Num(
                        s.parse::<f64>()
                            .map_err(|_| syntax(start, format!("malformed number '{s}'")))?,
                    )
                };
                if let Tok::Num(x) = tok {
                    if !x.is_finite() {
                        return Err(syntax(start, "number out of range"));
                    }
                }
                out.push((tok, start));
                i = j;
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                out.push((Tok::Ident(text[start..j].to_string()), start));
                i = j;
                continue;
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(syntax(start, format!("unexpected character '{ch}'")));
            }
        }
        i += 1;
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

impl Parser {
    fn new(text: &str) -> Result<Self> {
        Ok(Parser {
            toks: lex(text)?,
            pos: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, message: &str) -> Error {
        syntax(self.offset(), message)
    }

    fn eat_differential(&mut self) -> bool {
        if let Tok::Ident(s) = self.peek() {
            if s == "du" || s == "dz" {
                self.bump();
                return true;
            }
        }
        false
    }

    fn expect_end(&self) -> Result<()> {
        match self.peek() {
            Tok::End => Ok(()),
            Tok::RParen => Err(self.error_here("unbalanced ')'")),
            _ => Err(self.error_here("unexpected trailing input")),
        }
    }

    fn check_depth(&self, depth: usize) -> Result<()> {
        if depth > MAX_DEPTH {
            Err(self.error_here("expression nested too deeply"))
        } else {
            Ok(())
        }
    }

    fn expr(&mut self, depth: usize) -> Result<Node> {
        self.check_depth(depth)?;
        let mut lhs = self.term(depth + 1)?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term(depth + 1)?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term(depth + 1)?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self, depth: usize) -> Result<Node> {
        self.check_depth(depth)?;
        let mut lhs = self.unary(depth + 1)?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.unary(depth + 1)?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Node::Div(Box::new(lhs), Box::new(self.unary(depth + 1)?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self, depth: usize) -> Result<Node> {
        self.check_depth(depth)?;
        match self.peek() {
            Tok::Minus => {
                self.bump();
                Ok(Node::Neg(Box::new(self.unary(depth + 1)?)))
            }
            Tok::Plus => {
                self.bump();
                self.unary(depth + 1)
            }
            _ => self.factor(depth + 1),
        }
    }

    fn factor(&mut self, depth: usize) -> Result<Node> {
        let base = self.atom(depth + 1)?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let sign = match self.peek() {
            Tok::Minus => {
                self.bump();
                -1
            }
            Tok::Plus => {
                self.bump();
                1
            }
            _ => 1,
        };
        match self.peek() {
            Tok::Int(n) if *n <= MAX_EXPONENT => {
                let n = sign * *n;
                self.bump();
                Ok(Node::Pow(Box::new(base), n as i32))
            }
            Tok::Int(_) => Err(self.error_here("exponent too large")),
            _ => Err(self.error_here("expected an integer exponent")),
        }
    }

    fn atom(&mut self, depth: usize) -> Result<Node> {
        self.check_depth(depth)?;
        let at = self.offset();
        match self.bump() {
            Tok::Num(x) => Ok(Node::real(x)),
            Tok::Int(n) => Ok(Node::real(n as f64)),
            Tok::LParen => {
                let inner = self.expr(depth + 1)?;
                if *self.peek() != Tok::RParen {
                    return Err(self.error_here("expected ')'"));
                }
                self.bump();
                Ok(inner)
            }
            Tok::Ident(name) => match name.as_str() {
                "u" => Ok(Node::Var),
                "i" => Ok(Node::Const(Complex64::i())),
                "pi" => Ok(Node::real(PI)),
                "exp" | "wp" | "wpp" | "zeta" | "sigma" => {
                    if *self.peek() != Tok::LParen {
                        return Err(self.error_here(&format!("expected '(' after '{name}'")));
                    }
                    self.bump();
                    let arg = Box::new(self.expr(depth + 1)?);
                    if *self.peek() != Tok::RParen {
                        return Err(self.error_here("expected ')'"));
                    }
                    self.bump();
                    Ok(match name.as_str() {
                        "exp" => Node::Exp(arg),
                        "wp" => Node::Kernel(Kernel::Wp, arg),
                        "wpp" => Node::Kernel(Kernel::WpPrime, arg),
                        "zeta" => Node::Kernel(Kernel::Zeta, arg),
                        _ => Node::Kernel(Kernel::Sigma, arg),
                    })
                }
                "du" | "dz" => Err(syntax(at, "differential must come last")),
                other => Err(syntax(at, format!("unknown identifier '{other}'"))),
            },
            Tok::End => Err(syntax(at, "unexpected end of input")),
            Tok::RParen => Err(syntax(at, "unexpected ')'")),
            _ => Err(syntax(at, "expected a number, 'u', 'i', a function or '('")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::Lattice;
    use std::sync::Arc;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn torus() -> Domain {
        Domain::torus(Arc::new(Lattice::new(c(0.0, 1.0)).unwrap()), vec![]).unwrap()
    }

    #[test]
    fn polynomial_value() {
        let e = parse_expr("u^2", &Domain::Plane).unwrap();
        let v = e.eval(c(3.0, 4.0)).unwrap();
        assert!((v - c(-7.0, 24.0)).norm() < 1e-14);
    }

    #[test]
    fn euler_identity() {
        let e = parse_expr("exp(i*u)", &Domain::Plane).unwrap();
        assert!((e.eval(c(PI, 0.0)).unwrap() + 1.0).norm() < 1e-14);
    }

    #[test]
    fn constant_one() {
        let e = parse_expr("1", &Domain::Plane).unwrap();
        assert_eq!(e.eval(c(5.0, -2.0)).unwrap(), c(1.0, 0.0));
    }

    #[test]
    fn zeta_difference_matches_kernels() {
        let d = torus();
        let e = parse_expr("zeta(u-0.5) - zeta(u+0.5)", &d).unwrap();
        let lat = d.lattice().unwrap();
        let u = c(0.25, 0.0);
        let direct = lat.zeta(u - 0.5).unwrap() - lat.zeta(u + 0.5).unwrap();
        assert!((e.eval(u).unwrap() - direct).norm() < 1e-12);
    }

    #[test]
    fn elliptic_block_on_plane_rejected() {
        assert!(matches!(
            parse_expr("wp(u)", &Domain::Plane),
            Err(Error::DomainError(_))
        ));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        match parse_expr("1 + * u", &Domain::Plane) {
            Err(Error::SyntaxError { position, .. }) => assert_eq!(position, 4),
            other => panic!("{other:?}"),
        }
        assert!(parse_expr("(u", &Domain::Plane).is_err());
        assert!(parse_expr("u)", &Domain::Plane).is_err());
        assert!(parse_expr("u^x", &Domain::Plane).is_err());
        assert!(parse_expr("foo(u)", &Domain::Plane).is_err());
        assert!(parse_expr("", &Domain::Plane).is_err());
        assert!(parse_expr("u du", &Domain::Plane).is_err());
    }

    #[test]
    fn forms_need_differential() {
        let f = parse_form("u du", &Domain::Plane).unwrap();
        assert_eq!(f.eval(c(2.0, 0.0)).unwrap(), c(2.0, 0.0));
        assert!(parse_form("u", &Domain::Plane).is_err());
        assert!(matches!(
            parse("1 du", &Domain::Plane).unwrap(),
            Parsed::Form(_)
        ));
        assert!(matches!(
            parse("1", &Domain::Plane).unwrap(),
            Parsed::Function(_)
        ));
    }

    #[test]
    fn complex_literals_and_precedence() {
        let e = parse_expr("2+3*i - u^-1 * 2", &Domain::Plane).unwrap();
        let v = e.eval(c(2.0, 0.0)).unwrap();
        assert!((v - c(1.0, 3.0)).norm() < 1e-15);
        let e = parse_expr("-u^2", &Domain::Plane).unwrap();
        assert_eq!(e.eval(c(3.0, 0.0)).unwrap(), c(-9.0, 0.0));
        let e = parse_expr("1.5e-1*pi", &Domain::Plane).unwrap();
        assert!((e.eval(c(0.0, 0.0)).unwrap().re - 0.15 * PI).abs() < 1e-15);
    }

    #[test]
    fn deep_nesting_is_an_error_not_a_crash() {
        let text = "(".repeat(10_000) + "u" + &")".repeat(10_000);
        assert!(matches!(
            parse_expr(&text, &Domain::Plane),
            Err(Error::SyntaxError { .. })
        ));
    }

    #[test]
    fn display_round_trips() {
        let d = torus();
        for text in [
            "zeta(u-0.5) - zeta(u+0.5)",
            "sigma(u - 0.2 - 0.1*i)/sigma(u+0.3)*exp(-2.5*u)",
            "-(u^-3) + wpp(u)^2 / (1+i)",
            "(-1-2*i)*u + 0.125",
        ] {
            let e = parse_expr(text, &d).unwrap();
            let again = parse_expr(&e.to_string(), &d).unwrap();
            assert_eq!(e, again, "{text} -> {e}");
        }
    }
}
