//! Arithmetic expressions over `x0..x3` for conformal factors.
//!
//! Grammar (precedence low to high, `^` right-associative):
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | 'pi' | 'x0' | 'x1' | 'x2' | 'x3'
//!          | ('sin' | 'cos' | 'exp') '(' sum ')' | '(' sum ')'
//! ```

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("column {column}: {message}")]
pub struct ExprError {
    pub column: usize,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    /// Terms with a flag marking subtraction.
    Sum(Vec<(bool, Expr)>),
    /// Factors with a flag marking division.
    Product(Vec<(bool, Expr)>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self, ExprError> {
        let tokens = lex(src)?;
        let mut p = Parser { tokens, pos: 0, end: src.len() + 1 };
        let e = p.sum()?;
        match p.peek() {
            None => Ok(e),
            Some((col, t)) => Err(ExprError { column: *col, message: format!("unexpected {t:?}") }),
        }
    }

    pub fn eval(&self, x: [f64; 4]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => x[*i],
            Expr::Sum(terms) => terms.iter().map(|(neg, e)| if *neg { -e.eval(x) } else { e.eval(x) }).sum(),
            Expr::Product(factors) => factors
                .iter()
                .fold(1.0, |acc, (div, e)| if *div { acc / e.eval(x) } else { acc * e.eval(x) }),
            Expr::Neg(e) => -e.eval(x),
            Expr::Pow(b, e) => b.eval(x).powf(e.eval(x)),
            Expr::Call(f, e) => {
                let v = e.eval(x);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                }
            }
        }
    }

    /// Nodes on the longest root-to-leaf path; a leaf has depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Var(_) => 1,
            Expr::Sum(items) | Expr::Product(items) => 1 + items.iter().map(|(_, e)| e.depth()).max().unwrap_or(0),
            Expr::Neg(e) | Expr::Call(_, e) => 1 + e.depth(),
            Expr::Pow(a, b) => 1 + a.depth().max(b.depth()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse::<f64>()
                .map_err(|_| ExprError { column: col, message: format!("bad number {text:?}") })?;
            out.push((col, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            out.push((col, Tok::Ident(chars[start..i].iter().collect())));
        } else if "+-*/^()".contains(c) {
            out.push((col, Tok::Op(c)));
            i += 1;
        } else {
            return Err(ExprError { column: col, message: format!("unexpected character {c:?}") });
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&(usize, Tok)> {
        self.tokens.get(self.pos)
    }

    fn column(&self) -> usize {
        self.peek().map_or(self.end, |(c, _)| *c)
    }

    fn eat(&mut self, op: char) -> bool {
        if matches!(self.peek(), Some((_, Tok::Op(c))) if *c == op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError { column: self.column(), message: message.into() })
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut items = vec![(false, self.product()?)];
        loop {
            if self.eat('+') {
                items.push((false, self.product()?));
            } else if self.eat('-') {
                items.push((true, self.product()?));
            } else {
                break;
            }
        }
        Ok(if items.len() == 1 { items.pop().expect("one item").1 } else { Expr::Sum(items) })
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut items = vec![(false, self.unary()?)];
        loop {
            if self.eat('*') {
                items.push((false, self.unary()?));
            } else if self.eat('/') {
                items.push((true, self.unary()?));
            } else {
                break;
            }
        }
        Ok(if items.len() == 1 { items.pop().expect("one item").1 } else { Expr::Product(items) })
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        let base = self.atom()?;
        if self.eat('^') {
            return Ok(Expr::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let Some((_, tok)) = self.peek().cloned() else {
            return self.fail("unexpected end of expression");
        };
        match tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Tok::Op('(') => {
                self.pos += 1;
                let e = self.sum()?;
                if !self.eat(')') {
                    return self.fail("expected ')'");
                }
                Ok(e)
            }
            Tok::Ident(name) => {
                let var = match name.as_str() {
                    "pi" => Some(Expr::Num(std::f64::consts::PI)),
                    "x0" => Some(Expr::Var(0)),
                    "x1" => Some(Expr::Var(1)),
                    "x2" => Some(Expr::Var(2)),
                    "x3" => Some(Expr::Var(3)),
                    _ => None,
                };
                if let Some(v) = var {
                    self.pos += 1;
                    return Ok(v);
                }
                let func = match name.as_str() {
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "exp" => Func::Exp,
                    _ => return self.fail(format!("unknown identifier {name:?}")),
                };
                self.pos += 1;
                if !self.eat('(') {
                    return self.fail(format!("expected '(' after {name}"));
                }
                let arg = self.sum()?;
                if !self.eat(')') {
                    return self.fail("expected ')'");
                }
                Ok(Expr::Call(func, Box::new(arg)))
            }
            Tok::Op(c) => self.fail(format!("unexpected {c:?}")),
        }
    }
}
