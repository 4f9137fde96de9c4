//! Expression language for potentials and forcings.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?          // right-associative, binds above unary minus
//! atom   := number | 'pi' | 'i' | 'x1' | 'x2' | func '(' expr ')' | '(' expr ')'
//! func   := sin | cos | exp | sqrt | abs
//! ```
//!
//! Evaluation is over the complex numbers. Purely real expressions keep
//! their imaginary part exactly zero.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

use crate::grid::{Grid, GridField};

#[derive(Debug, Error, PartialEq)]
pub enum ExprError {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("division by zero")]
    DivisionByZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Pi,
    I,
    X1,
    X2,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn lex(text: &str) -> Result<Vec<(usize, Token)>, ExprError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'+' => {
                tokens.push((i, Token::Plus));
                i += 1;
            }
            b'-' => {
                tokens.push((i, Token::Minus));
                i += 1;
            }
            b'*' => {
                tokens.push((i, Token::Star));
                i += 1;
            }
            b'/' => {
                tokens.push((i, Token::Slash));
                i += 1;
            }
            b'^' => {
                tokens.push((i, Token::Caret));
                i += 1;
            }
            b'(' => {
                tokens.push((i, Token::LParen));
                i += 1;
            }
            b')' => {
                tokens.push((i, Token::RParen));
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i], b'0'..=b'9' | b'.') {
                    i += 1;
                }
                // exponent part
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let lit = &text[start..i];
                let value: f64 = lit.parse().map_err(|_| ExprError::Parse {
                    offset: start,
                    message: format!("malformed number `{lit}`"),
                })?;
                tokens.push((start, Token::Num(value)));
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                tokens.push((start, Token::Ident(text[start..i].to_string())));
            }
            _ => {
                return Err(ExprError::Parse {
                    offset: i,
                    message: format!("unexpected character `{}`", text[i..].chars().next().unwrap()),
                })
            }
        }
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: &'a [(usize, Token)],
    pos: usize,
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Token, describe: &str) -> Result<(), ExprError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(ExprError::Parse {
                offset: self.offset(),
                message: format!("expected {describe}"),
            })
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Token::Plus) => BinOp::Add,
                Some(Token::Minus) => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Token::Star) => BinOp::Mul,
                Some(Token::Slash) => BinOp::Div,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.peek() == Some(&Token::Minus) {
            self.pos += 1;
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.peek() == Some(&Token::Caret) {
            self.pos += 1;
            // right-associative; `-` after `^` is allowed (2^-1)
            let exponent = self.unary()?;
            Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let offset = self.offset();
        match self.bump() {
            Some(Token::Num(v)) => Ok(Expr::Num(v)),
            Some(Token::LParen) => {
                let inner = self.expr()?;
                self.expect(Token::RParen, "`)`")?;
                Ok(inner)
            }
            Some(Token::Ident(name)) => match name.as_str() {
                "pi" => Ok(Expr::Pi),
                "i" => Ok(Expr::I),
                "x1" => Ok(Expr::X1),
                "x2" => Ok(Expr::X2),
                "sin" | "cos" | "exp" | "sqrt" | "abs" => {
                    let func = match name.as_str() {
                        "sin" => Func::Sin,
                        "cos" => Func::Cos,
                        "exp" => Func::Exp,
                        "sqrt" => Func::Sqrt,
                        _ => Func::Abs,
                    };
                    self.expect(Token::LParen, "`(` after function name")?;
                    let arg = self.expr()?;
                    self.expect(Token::RParen, "`)`")?;
                    Ok(Expr::Call(func, Box::new(arg)))
                }
                _ => Err(ExprError::UnknownIdentifier { name, offset }),
            },
            _ => Err(ExprError::Parse {
                offset,
                message: "expected a number, identifier, or `(`".into(),
            }),
        }
    }
}

/// Parses an expression over `x1`, `x2`, `pi`, `i` and the functions
/// `sin`, `cos`, `exp`, `sqrt`, `abs`.
pub fn parse(text: &str) -> Result<Expr, ExprError> {
    let tokens = lex(text)?;
    let mut parser = Parser {
        tokens: &tokens,
        pos: 0,
        end: text.len(),
    };
    let expr = parser.expr()?;
    if parser.pos != tokens.len() {
        return Err(ExprError::Parse {
            offset: parser.offset(),
            message: "unexpected trailing input".into(),
        });
    }
    Ok(expr)
}

fn is_real(z: Complex64) -> bool {
    z.im == 0.0
}

fn pow(base: Complex64, exp: Complex64) -> Complex64 {
    // Integer exponents are computed by repeated squaring so that real
    // bases stay exactly real; otherwise the principal branch applies.
    if is_real(exp) && exp.re.fract() == 0.0 && exp.re.abs() <= i32::MAX as f64 {
        base.powi(exp.re as i32)
    } else if is_real(base) && is_real(exp) && base.re > 0.0 {
        Complex64::new(base.re.powf(exp.re), 0.0)
    } else {
        base.powc(exp)
    }
}

impl Expr {
    /// Evaluates at a mesh point. The only runtime failure is division by
    /// an exact zero.
    pub fn evaluate(&self, x1: f64, x2: f64) -> Result<Complex64, ExprError> {
        Ok(match self {
            Expr::Num(v) => Complex64::new(*v, 0.0),
            Expr::Pi => Complex64::new(PI, 0.0),
            Expr::I => Complex64::new(0.0, 1.0),
            Expr::X1 => Complex64::new(x1, 0.0),
            Expr::X2 => Complex64::new(x2, 0.0),
            Expr::Neg(inner) => -inner.evaluate(x1, x2)?,
            Expr::Bin(op, lhs, rhs) => {
                let a = lhs.evaluate(x1, x2)?;
                let b = rhs.evaluate(x1, x2)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b.re == 0.0 && b.im == 0.0 {
                            return Err(ExprError::DivisionByZero);
                        }
                        a / b
                    }
                    BinOp::Pow => pow(a, b),
                }
            }
            Expr::Call(func, arg) => {
                let z = arg.evaluate(x1, x2)?;
                match func {
                    Func::Sin if is_real(z) => Complex64::new(z.re.sin(), 0.0),
                    Func::Cos if is_real(z) => Complex64::new(z.re.cos(), 0.0),
                    Func::Exp if is_real(z) => Complex64::new(z.re.exp(), 0.0),
                    Func::Sqrt if is_real(z) && z.re >= 0.0 => {
                        Complex64::new(z.re.sqrt(), 0.0)
                    }
                    Func::Sin => z.sin(),
                    Func::Cos => z.cos(),
                    Func::Exp => z.exp(),
                    Func::Sqrt => z.sqrt(),
                    Func::Abs => Complex64::new(z.norm(), 0.0),
                }
            }
        })
    }

    /// Samples the expression at every mesh node.
    pub fn sample(&self, grid: Grid) -> Result<GridField, ExprError> {
        let mut field = GridField::zeros(grid);
        for (j1, j2) in grid.indices() {
            let (x1, x2) = grid.node(j1, j2);
            field.values[grid.slot(j1, j2)] = self.evaluate(x1, x2)?;
        }
        Ok(field)
    }
}

impl fmt::Display for Expr {
    /// Canonical fully-parenthesized form; `parse(print(e))` returns `e`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Pi => write!(f, "pi"),
            Expr::I => write!(f, "i"),
            Expr::X1 => write!(f, "x1"),
            Expr::X2 => write!(f, "x2"),
            Expr::Neg(inner) => write!(f, "(-{inner})"),
            Expr::Bin(op, lhs, rhs) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({lhs}{sym}{rhs})")
            }
            Expr::Call(func, arg) => write!(f, "{}({arg})", func.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::dft;
    use proptest::prelude::*;

    #[test]
    fn parses_simple_call() {
        assert_eq!(
            parse("cos(x1)").unwrap(),
            Expr::Call(Func::Cos, Box::new(Expr::X1))
        );
    }

    #[test]
    fn parses_gaussian_forcing() {
        // 0.5 exp(-2 |x|^2)
        let e = parse("0.5*exp(-2*(x1^2+x2^2))").unwrap();
        let v = e.evaluate(0.0, 0.0).unwrap();
        assert!((v - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        let v = e.evaluate(1.0, -1.0).unwrap();
        assert!((v.re - 0.5 * (-4.0f64).exp()).abs() < 1e-15);
        assert_eq!(v.im, 0.0);
    }

    #[test]
    fn rejects_unknown_identifier() {
        match parse("sin(x3)") {
            Err(ExprError::UnknownIdentifier { name, offset }) => {
                assert_eq!(name, "x3");
                assert_eq!(offset, 4);
            }
            other => panic!("expected UnknownIdentifier, got {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_offsets() {
        match parse("1 + * 2") {
            Err(ExprError::Parse { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(parse("cos(x1").is_err());
        assert!(parse("1 2").is_err());
    }

    #[test]
    fn precedence_and_associativity() {
        // ^ binds tighter than unary minus: -2^2 = -4
        let e = parse("-2^2").unwrap();
        assert_eq!(e.evaluate(0.0, 0.0).unwrap().re, -4.0);
        // right-associative: 2^3^2 = 2^9
        let e = parse("2^3^2").unwrap();
        assert_eq!(e.evaluate(0.0, 0.0).unwrap().re, 512.0);
        // * over +
        let e = parse("1+2*3").unwrap();
        assert_eq!(e.evaluate(0.0, 0.0).unwrap().re, 7.0);
    }

    #[test]
    fn evaluates_separable_forcing() {
        let e = parse("sin(x1)*cos(2*x2)").unwrap();
        let v = e.evaluate(PI / 2.0, 0.0).unwrap();
        assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        let e = parse("cos(x1)").unwrap();
        assert_eq!(e.evaluate(0.0, 17.0).unwrap(), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn evaluates_offset_gaussian_peak() {
        // Peak of the complex Gaussian where the real exponent vanishes.
        let e = parse("-5*exp(-3*((x1+0.9)^2+(x2+0.8)^2)+i*(2*x1+x2))").unwrap();
        let v = e.evaluate(-0.9, -0.8).unwrap();
        let expect = -5.0 * Complex64::from_polar(1.0, -2.6);
        assert!((v - expect).norm() < 1e-12);
        assert!((v.norm() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn division_by_zero() {
        let e = parse("1/x1").unwrap();
        assert_eq!(e.evaluate(0.0, 1.0), Err(ExprError::DivisionByZero));
        assert!(e.evaluate(2.0, 1.0).is_ok());
    }

    #[test]
    fn real_expressions_stay_real() {
        let exprs = [
            "cos(x1)+sin(x2)",
            "0.5*exp(-2*(x1^2+x2^2))",
            "abs(x1-x2)^3/(1+x1^2)",
            "sqrt(x1^2+x2^2)",
        ];
        for text in exprs {
            let e = parse(text).unwrap();
            for (x1, x2) in [(0.3, -1.2), (-2.0, 2.0), (0.0, 0.0)] {
                assert_eq!(e.evaluate(x1, x2).unwrap().im, 0.0, "{text}");
            }
        }
    }

    #[test]
    fn sample_constant_and_cosine() {
        let grid = Grid::new(4).unwrap();
        let field = parse("1").unwrap().sample(grid).unwrap();
        assert!(field.values.iter().all(|v| *v == Complex64::new(1.0, 0.0)));

        let field = parse("cos(x1)").unwrap().sample(grid).unwrap();
        for (j1, j2) in grid.indices() {
            let (x1, _) = grid.node(j1, j2);
            assert!((field.at(j1, j2).re - x1.cos()).abs() < 1e-15);
            assert_eq!(field.at(j1, j2).im, 0.0);
        }
    }

    #[test]
    fn cosine_spectrum_has_two_modes() {
        let grid = Grid::new(8).unwrap();
        let spec = dft(&parse("cos(x1)").unwrap().sample(grid).unwrap());
        for (k1, k2) in grid.indices() {
            let expect = if k2 == 0 && (k1 == 1 || k1 == -1) {
                32.0
            } else {
                0.0
            };
            assert!(
                (spec.at(k1, k2) - Complex64::new(expect, 0.0)).norm() < 1e-10,
                "k = ({k1},{k2})"
            );
        }
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-10.0..10.0f64).prop_map(|v| Expr::Num(v.abs())),
            Just(Expr::Pi),
            Just(Expr::I),
            Just(Expr::X1),
            Just(Expr::X2),
        ];
        leaf.prop_recursive(4, 32, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Bin(
                    BinOp::Add,
                    Box::new(a),
                    Box::new(b)
                )),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Bin(
                    BinOp::Mul,
                    Box::new(a),
                    Box::new(b)
                )),
                inner.prop_map(|e| Expr::Call(Func::Cos, Box::new(e))),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr()) {
            let printed = e.to_string();
            let reparsed = parse(&printed).unwrap();
            prop_assert_eq!(reparsed.to_string(), printed);
        }
    }
}
