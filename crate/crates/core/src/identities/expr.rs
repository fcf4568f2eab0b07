//! A closed grammar of pointwise functionals of `u`, with time derivatives
//! evaluated by substituting `d/dt (D u) = D(speed)` into the chain rule.

use crate::error::{Error, Result};
use crate::grid::Deriv;

use super::algebra::Field;
use super::slice::Slice;

/// Highest total order of `u`-derivatives an expression may involve.
pub const MAX_U_ORDER: u32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Background coefficient of the first factor.
    G,
    /// Background coefficient of the second factor.
    H,
    Lambda,
    Eta,
    U(Deriv),
    D(Deriv, Box<Expr>),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    Conj(Box<Expr>),
    Recip(Box<Expr>),
    Log(Box<Expr>),
}

impl Expr {
    pub fn d(d: Deriv, e: Expr) -> Expr {
        match e {
            Expr::U(inner) => Expr::U(d.then(inner)),
            e => Expr::D(d, Box::new(e)),
        }
    }

    pub fn sum(terms: impl IntoIterator<Item = Expr>) -> Expr {
        Expr::Sum(terms.into_iter().collect())
    }

    pub fn product(factors: impl IntoIterator<Item = Expr>) -> Expr {
        Expr::Product(factors.into_iter().collect())
    }

    pub fn scaled(c: f64, e: Expr) -> Expr {
        Expr::product([Expr::Const(c), e])
    }

    pub fn conj(e: Expr) -> Expr {
        Expr::Conj(Box::new(e))
    }

    pub fn recip(e: Expr) -> Expr {
        Expr::Recip(Box::new(e))
    }

    pub fn log(e: Expr) -> Expr {
        Expr::Log(Box::new(e))
    }

    pub fn abs_sq(e: Expr) -> Expr {
        Expr::product([e.clone(), Expr::conj(e)])
    }

    /// Total order of the `u`-derivatives involved; the traces count as two.
    pub fn u_order(&self) -> u32 {
        match self {
            Expr::Const(_) | Expr::G | Expr::H => 0,
            Expr::Lambda | Expr::Eta => 2,
            Expr::U(d) => d.order(),
            Expr::D(d, e) => match e.u_order() {
                0 => 0,
                k => k + d.order(),
            },
            Expr::Sum(v) | Expr::Product(v) => v.iter().map(Expr::u_order).max().unwrap_or(0),
            Expr::Conj(e) | Expr::Recip(e) | Expr::Log(e) => e.u_order(),
        }
    }

    /// Value of the expression on a slice.
    pub fn eval(&self, s: &Slice) -> Result<Field> {
        check(self)?;
        Ok(dual(self, s).0)
    }
}

fn check(e: &Expr) -> Result<()> {
    let k = e.u_order();
    if k > MAX_U_ORDER {
        return Err(Error::UnsupportedExpr(format!(
            "u-derivative order {k} exceeds {MAX_U_ORDER} in {e:?}"
        )));
    }
    Ok(())
}

/// `d expr / dt` along the flow, as a purely spatial field.
pub fn material_derivative(expr: &Expr, s: &Slice) -> Result<Field> {
    check(expr)?;
    Ok(dual(expr, s).1)
}

/// `(d/dt - L) expr`.
pub fn heat(expr: &Expr, s: &Slice) -> Result<Field> {
    check(expr)?;
    let (v, dot) = dual(expr, s);
    Ok(dot - s.lop(&v))
}

/// `(value, time derivative)`.
fn dual(e: &Expr, s: &Slice) -> (Field, Field) {
    let grid = *s.grid();
    let zero = || Field::constant(grid, 0.0);
    match e {
        Expr::Const(c) => (Field::constant(grid, *c), zero()),
        Expr::G => (s.g.clone(), zero()),
        Expr::H => (s.h.clone(), zero()),
        Expr::Lambda => (s.lambda.clone(), s.lambda_t()),
        Expr::Eta => (s.eta.clone(), s.eta_t()),
        Expr::U(d) => (s.du(*d), s.dspeed(*d)),
        Expr::D(d, inner) => match inner.as_ref() {
            Expr::G => (s.dg(*d), zero()),
            Expr::H => (s.dh(*d), zero()),
            Expr::Lambda => (s.dlambda(*d), s.lambda_t().d(*d)),
            Expr::Eta => (s.deta(*d), s.eta_t().d(*d)),
            Expr::U(inner) => (s.du(d.then(*inner)), s.dspeed(d.then(*inner))),
            other => {
                let (v, dot) = dual(other, s);
                (v.d(*d), dot.d(*d))
            }
        },
        Expr::Sum(terms) => {
            let mut v = zero();
            let mut dot = zero();
            for t in terms {
                let (a, b) = dual(t, s);
                v = v + a;
                dot = dot + b;
            }
            (v, dot)
        }
        Expr::Product(factors) => {
            let parts: Vec<(Field, Field)> = factors.iter().map(|f| dual(f, s)).collect();
            let mut v = Field::constant(grid, 1.0);
            for (a, _) in &parts {
                v = v * a;
            }
            let mut dot = zero();
            for i in 0..parts.len() {
                let mut term = parts[i].1.clone();
                for (j, (a, _)) in parts.iter().enumerate() {
                    if j != i {
                        term = term * a;
                    }
                }
                dot = dot + term;
            }
            (v, dot)
        }
        Expr::Conj(inner) => {
            let (v, dot) = dual(inner, s);
            (v.conj(), dot.conj())
        }
        Expr::Recip(inner) => {
            let (v, dot) = dual(inner, s);
            let r = v.recip();
            let rdot = -(dot * &r * &r);
            (r, rdot)
        }
        Expr::Log(inner) => {
            let (v, dot) = dual(inner, s);
            let rdot = dot / &v;
            (v.ln(), rdot)
        }
    }
}
