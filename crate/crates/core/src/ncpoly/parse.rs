//! Recursive-descent parser for polynomial text.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary ('*' unary)*
//! unary  := ('+' | '-') unary | power
//! power  := atom ('^' exponent)?
//! atom   := 'x' digits | number 'i'? | 'i' | '(' expr ')'
//! ```

use crate::error::{Error, Result};
use crate::linalg::C64;

use super::NCPolynomial;

/// Parses `text` into an expanded polynomial over `num_generators` generators.
pub fn parse(text: &str, num_generators: usize) -> Result<NCPolynomial> {
    if num_generators == 0 {
        return Err(Error::InvalidArgument("num_generators must be positive".into()));
    }
    let mut p = Parser {
        chars: text.chars().collect(),
        pos: 0,
        num_generators,
    };
    p.skip_ws();
    if p.peek().is_none() {
        return Err(p.syntax("empty input"));
    }
    let out = p.expr()?;
    p.skip_ws();
    if let Some(ch) = p.peek() {
        return Err(p.syntax(&format!("unexpected `{ch}`")));
    }
    Ok(out)
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
    num_generators: usize,
}

impl Parser {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn syntax(&self, message: &str) -> Error {
        Error::Syntax {
            position: self.pos,
            message: message.to_string(),
        }
    }

    fn expr(&mut self) -> Result<NCPolynomial> {
        let mut acc = self.term()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some('+') => {
                    self.pos += 1;
                    acc = acc.add(&self.term()?);
                }
                Some('-') => {
                    self.pos += 1;
                    acc = acc.sub(&self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<NCPolynomial> {
        let mut acc = self.unary()?;
        loop {
            self.skip_ws();
            if self.peek() == Some('*') {
                self.pos += 1;
                acc = acc.mul(&self.unary()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<NCPolynomial> {
        self.skip_ws();
        match self.peek() {
            Some('-') => {
                self.pos += 1;
                Ok(self.unary()?.scale(C64::new(-1.0, 0.0)))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<NCPolynomial> {
        let base = self.atom()?;
        self.skip_ws();
        if self.peek() != Some('^') {
            return Ok(base);
        }
        self.pos += 1;
        self.skip_ws();
        let start = self.pos;
        let mut text = String::new();
        while let Some(ch) = self.peek() {
            if ch.is_ascii_digit() || ch == '.' || ch == '-' || ch == '+' || ch == 'e' {
                if (ch == '-' || ch == '+') && !text.is_empty() && !text.ends_with('e') {
                    break;
                }
                text.push(ch);
                self.pos += 1;
            } else {
                break;
            }
        }
        if text.is_empty() {
            return Err(self.syntax("expected an exponent after `^`"));
        }
        if !text.chars().all(|ch| ch.is_ascii_digit()) {
            return Err(Error::InvalidExponent {
                position: start,
                text,
            });
        }
        let k: u32 = text.parse().map_err(|_| Error::InvalidExponent {
            position: start,
            text: text.clone(),
        })?;
        Ok(base.pow(k))
    }

    fn atom(&mut self) -> Result<NCPolynomial> {
        self.skip_ws();
        let r = self.num_generators;
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.skip_ws();
                if self.peek() != Some(')') {
                    return Err(self.syntax("expected `)`"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some('x') => {
                let start = self.pos;
                self.pos += 1;
                let digits = self.take_while(|ch| ch.is_ascii_digit());
                if digits.is_empty() {
                    return Err(Error::Syntax {
                        position: start,
                        message: "generator `x` must be followed by an index".into(),
                    });
                }
                let index: usize = digits.parse().map_err(|_| Error::Syntax {
                    position: start,
                    message: "generator index too large".into(),
                })?;
                if index == 0 || index > r {
                    return Err(Error::GeneratorOutOfRange {
                        index,
                        num_generators: r,
                        position: start,
                    });
                }
                NCPolynomial::generator(r, index - 1)
            }
            Some('i') => {
                self.pos += 1;
                Ok(NCPolynomial::constant(r, C64::new(0.0, 1.0)))
            }
            Some(ch) if ch.is_ascii_digit() || ch == '.' => {
                let start = self.pos;
                let mut text = self.take_while(|ch| ch.is_ascii_digit() || ch == '.');
                // optional exponent part, e.g. 1.5e-3
                if self.peek() == Some('e') {
                    let save = self.pos;
                    self.pos += 1;
                    let mut exp = String::from("e");
                    if let Some(sign @ ('+' | '-')) = self.peek() {
                        exp.push(sign);
                        self.pos += 1;
                    }
                    let digits = self.take_while(|ch| ch.is_ascii_digit());
                    if digits.is_empty() {
                        self.pos = save;
                    } else {
                        text.push_str(&exp);
                        text.push_str(&digits);
                    }
                }
                let value: f64 = text.parse().map_err(|_| Error::Syntax {
                    position: start,
                    message: format!("malformed number `{text}`"),
                })?;
                if self.peek() == Some('i') {
                    self.pos += 1;
                    Ok(NCPolynomial::constant(r, C64::new(0.0, value)))
                } else {
                    Ok(NCPolynomial::constant(r, C64::new(value, 0.0)))
                }
            }
            Some(ch) => Err(self.syntax(&format!("unexpected `{ch}`"))),
            None => Err(self.syntax("unexpected end of input")),
        }
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> String {
        let mut s = String::new();
        while let Some(ch) = self.peek() {
            if pred(ch) {
                s.push(ch);
                self.pos += 1;
            } else {
                break;
            }
        }
        s
    }
}
