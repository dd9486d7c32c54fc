//! One-variable analytic expressions evaluated at complex arguments.
//!
//! Real-analytic curve data are written as text (`"sin(u) + e^(0.1*u)"`);
//! complex evaluation of the elementary functions gives their analytic
//! extension. The variable may be spelled `u` or `z`.

mod parser;

use std::fmt;
use std::ops;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parse error at byte {offset}: {kind}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("{0}")]
    Syntax(String),
    #[error("unknown identifier '{0}'")]
    UnknownIdentifier(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("argument {0} lies on the branch cut")]
    BranchCut(Complex64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Sinh,
    Cosh,
    Exp,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
        }
    }

    fn apply(self, z: Complex64) -> Result<Complex64, EvalError> {
        Ok(match self {
            Func::Sin => z.sin(),
            Func::Cos => z.cos(),
            Func::Sinh => z.sinh(),
            Func::Cosh => z.cosh(),
            Func::Exp => z.exp(),
            Func::Sqrt => {
                if z.im == 0.0 && z.re < 0.0 {
                    return Err(EvalError::BranchCut(z));
                }
                z.sqrt()
            }
        })
    }
}

/// Expression tree. Build with [`parse`] or the smart constructors, which
/// fold constants.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Var,
    Const(Complex64),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, i32),
    /// Principal branch `a^p` for a real non-integer constant `p`.
    PowReal(Box<Expr>, f64),
    Func(Func, Box<Expr>),
}

pub type AnalyticExpr = Expr;

pub fn parse(text: &str) -> Result<Expr, ParseError> {
    parser::parse(text)
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

impl Expr {
    pub fn var() -> Expr {
        Expr::Var
    }

    pub fn constant(c: Complex64) -> Expr {
        Expr::Const(c)
    }

    pub fn real(x: f64) -> Expr {
        Expr::Const(Complex64::new(x, 0.0))
    }

    pub fn imag(y: f64) -> Expr {
        Expr::Const(Complex64::new(0.0, y))
    }

    pub fn zero() -> Expr {
        Expr::real(0.0)
    }

    pub fn one() -> Expr {
        Expr::real(1.0)
    }

    pub fn contains_var(&self) -> bool {
        match self {
            Expr::Var => true,
            Expr::Const(_) => false,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => a.contains_var() || b.contains_var(),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::PowReal(a, _) | Expr::Func(_, a) => a.contains_var(),
        }
    }

    /// Value of a variable-free tree.
    pub fn constant_value(&self) -> Option<Complex64> {
        if self.contains_var() {
            None
        } else {
            self.eval(ZERO).ok()
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == ZERO)
    }

    fn is_one(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == ONE)
    }

    pub fn eval(&self, z: Complex64) -> Result<Complex64, EvalError> {
        Ok(match self {
            Expr::Var => z,
            Expr::Const(c) => *c,
            Expr::Add(a, b) => a.eval(z)? + b.eval(z)?,
            Expr::Sub(a, b) => a.eval(z)? - b.eval(z)?,
            Expr::Mul(a, b) => a.eval(z)? * b.eval(z)?,
            Expr::Div(a, b) => {
                let d = b.eval(z)?;
                if d == ZERO {
                    return Err(EvalError::DivisionByZero);
                }
                a.eval(z)? / d
            }
            Expr::Neg(a) => -a.eval(z)?,
            Expr::Pow(a, n) => {
                let x = a.eval(z)?;
                if *n < 0 && x == ZERO {
                    return Err(EvalError::DivisionByZero);
                }
                x.powi(*n)
            }
            Expr::PowReal(a, p) => {
                let x = a.eval(z)?;
                if x == ZERO {
                    if *p < 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    ZERO
                } else {
                    if x.im == 0.0 && x.re < 0.0 {
                        return Err(EvalError::BranchCut(x));
                    }
                    x.powf(*p)
                }
            }
            Expr::Func(f, a) => f.apply(a.eval(z)?)?,
        })
    }

    /// Evaluation at a real argument.
    pub fn eval_real(&self, x: f64) -> Result<Complex64, EvalError> {
        self.eval(Complex64::new(x, 0.0))
    }

    /// Symbolic derivative with respect to the variable.
    pub fn differentiate(&self) -> Expr {
        match self {
            Expr::Var => Expr::one(),
            Expr::Const(_) => Expr::zero(),
            Expr::Add(a, b) => add(a.differentiate(), b.differentiate()),
            Expr::Sub(a, b) => sub(a.differentiate(), b.differentiate()),
            Expr::Mul(a, b) => add(mul(a.differentiate(), (**b).clone()), mul((**a).clone(), b.differentiate())),
            Expr::Div(a, b) => div(
                sub(mul(a.differentiate(), (**b).clone()), mul((**a).clone(), b.differentiate())),
                pow((**b).clone(), 2),
            ),
            Expr::Neg(a) => neg(a.differentiate()),
            Expr::Pow(a, n) => mul(mul(Expr::real(*n as f64), pow((**a).clone(), n - 1)), a.differentiate()),
            Expr::PowReal(a, p) => mul(mul(Expr::real(*p), pow_real((**a).clone(), p - 1.0)), a.differentiate()),
            Expr::Func(f, a) => {
                let da = a.differentiate();
                let inner = (**a).clone();
                let outer = match f {
                    Func::Sin => func(Func::Cos, inner),
                    Func::Cos => neg(func(Func::Sin, inner)),
                    Func::Sinh => func(Func::Cosh, inner),
                    Func::Cosh => func(Func::Sinh, inner),
                    Func::Exp => func(Func::Exp, inner),
                    Func::Sqrt => div(Expr::real(0.5), func(Func::Sqrt, inner)),
                };
                mul(da, outer)
            }
        }
    }

    /// Conjugates every literal: the result evaluates to `conj(e(conj z))`.
    pub fn conj_coeffs(&self) -> Expr {
        match self {
            Expr::Var => Expr::Var,
            Expr::Const(c) => Expr::Const(c.conj()),
            Expr::Add(a, b) => Expr::Add(Box::new(a.conj_coeffs()), Box::new(b.conj_coeffs())),
            Expr::Sub(a, b) => Expr::Sub(Box::new(a.conj_coeffs()), Box::new(b.conj_coeffs())),
            Expr::Mul(a, b) => Expr::Mul(Box::new(a.conj_coeffs()), Box::new(b.conj_coeffs())),
            Expr::Div(a, b) => Expr::Div(Box::new(a.conj_coeffs()), Box::new(b.conj_coeffs())),
            Expr::Neg(a) => Expr::Neg(Box::new(a.conj_coeffs())),
            Expr::Pow(a, n) => Expr::Pow(Box::new(a.conj_coeffs()), *n),
            Expr::PowReal(a, p) => Expr::PowReal(Box::new(a.conj_coeffs()), *p),
            Expr::Func(f, a) => Expr::Func(*f, Box::new(a.conj_coeffs())),
        }
    }

    /// Analytic extension of the real part on the real axis: `(e + ē)/2`.
    pub fn re_ext(&self) -> Expr {
        mul(Expr::real(0.5), add(self.clone(), self.conj_coeffs()))
    }

    /// Analytic extension of the imaginary part on the real axis: `(e − ē)/(2i)`.
    pub fn im_ext(&self) -> Expr {
        mul(Expr::imag(-0.5), sub(self.clone(), self.conj_coeffs()))
    }

    /// True when every literal is real.
    pub fn has_real_coeffs(&self) -> bool {
        match self {
            Expr::Var => true,
            Expr::Const(c) => c.im == 0.0,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => a.has_real_coeffs() && b.has_real_coeffs(),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::PowReal(a, _) | Expr::Func(_, a) => a.has_real_coeffs(),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) | Expr::PowReal(..) => 4,
            Expr::Const(c) => {
                if c.re != 0.0 && c.im != 0.0 {
                    1
                } else if c.im != 0.0 && c.im != 1.0 {
                    if c.im < 0.0 {
                        3
                    } else {
                        2
                    }
                } else if c.re < 0.0 || (c.re == 0.0 && c.re.is_sign_negative() && c.im == 0.0) {
                    3
                } else {
                    5
                }
            }
            Expr::Var | Expr::Func(..) => 5,
        }
    }
}

pub fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        _ if a.is_zero() => b,
        _ if b.is_zero() => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        _ if b.is_zero() => a,
        _ if a.is_zero() => neg(b),
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        _ if a.is_zero() || b.is_zero() => Expr::zero(),
        _ if a.is_one() => b,
        _ if b.is_one() => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) if *y != ZERO => Expr::Const(x / y),
        _ if b.is_one() => a,
        _ if a.is_zero() && !b.is_zero() => Expr::zero(),
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

pub fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(x) => Expr::Const(-x),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

pub fn pow(a: Expr, n: i32) -> Expr {
    match (&a, n) {
        (_, 0) => Expr::one(),
        (_, 1) => a,
        (Expr::Const(x), _) if *x != ZERO || n > 0 => Expr::Const(x.powi(n)),
        _ => Expr::Pow(Box::new(a), n),
    }
}

pub fn pow_real(a: Expr, p: f64) -> Expr {
    if p.fract() == 0.0 && p.abs() < 1e9 {
        return pow(a, p as i32);
    }
    Expr::PowReal(Box::new(a), p)
}

pub fn func(f: Func, a: Expr) -> Expr {
    if let Expr::Const(x) = a {
        if let Ok(v) = f.apply(x) {
            return Expr::Const(v);
        }
    }
    Expr::Func(f, Box::new(a))
}

impl ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        add(self, rhs)
    }
}

impl ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        sub(self, rhs)
    }
}

impl ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        mul(self, rhs)
    }
}

impl ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        div(self, rhs)
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        neg(self)
    }
}

impl ops::Mul<Expr> for f64 {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        mul(Expr::real(self), rhs)
    }
}

impl ops::Mul<Expr> for Complex64 {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        mul(Expr::Const(self), rhs)
    }
}

fn write_real(f: &mut fmt::Formatter<'_>, x: f64) -> fmt::Result {
    if x < 0.0 || (x == 0.0 && x.is_sign_negative()) {
        write!(f, "-{:?}", -x)
    } else {
        write!(f, "{x:?}")
    }
}

fn write_const(f: &mut fmt::Formatter<'_>, c: Complex64) -> fmt::Result {
    if c.im == 0.0 {
        return write_real(f, c.re);
    }
    if c.re != 0.0 {
        write_real(f, c.re)?;
        if c.im < 0.0 {
            write!(f, " - ")?;
        } else {
            write!(f, " + ")?;
        }
    } else if c.im < 0.0 {
        write!(f, "-")?;
    }
    if c.im.abs() == 1.0 {
        write!(f, "i")
    } else {
        write!(f, "{:?}*i", c.im.abs())
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    if e.precedence() < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Var => write!(f, "z"),
            Expr::Const(c) => write_const(f, *c),
            Expr::Add(a, b) => {
                write_child(f, a, 1)?;
                write!(f, " + ")?;
                write_child(f, b, 2)
            }
            Expr::Sub(a, b) => {
                write_child(f, a, 1)?;
                write!(f, " - ")?;
                write_child(f, b, 2)
            }
            Expr::Mul(a, b) => {
                write_child(f, a, 2)?;
                write!(f, "*")?;
                write_child(f, b, 3)
            }
            Expr::Div(a, b) => {
                write_child(f, a, 2)?;
                write!(f, "/")?;
                write_child(f, b, 3)
            }
            Expr::Neg(a) => {
                write!(f, "-")?;
                write_child(f, a, 4)
            }
            Expr::Pow(a, n) => {
                write_child(f, a, 5)?;
                if *n < 0 {
                    write!(f, "^({n})")
                } else {
                    write!(f, "^{n}")
                }
            }
            Expr::PowReal(a, p) => {
                write_child(f, a, 5)?;
                write!(f, "^(")?;
                write_real(f, *p)?;
                write!(f, ")")
            }
            Expr::Func(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Expr, ParseError> {
        parse(s)
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Expr, D::Error> {
        let text = String::deserialize(d)?;
        parse(&text).map_err(serde::de::Error::custom)
    }
}
