//! Non-commutative *-polynomials in self-adjoint generators `x1..xr`.

mod linearize;
mod parse;
mod pencil;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{identity, matmul, CMatrix, C64};

pub use linearize::{linearize, LinearizationResult};
pub use parse::parse;
pub use pencil::CoefficientPencil;

/// Coefficients below this modulus are dropped after arithmetic.
pub const DROP_TOLERANCE: f64 = 1e-15;

/// A word in the generators, stored with 0-based generator indices.
///
/// Ordered by length first, then lexicographically, which is the canonical
/// term order used for rendering.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Word(pub Vec<usize>);

impl Word {
    pub fn unit() -> Self {
        Word(Vec::new())
    }

    pub fn generator(index: usize) -> Self {
        Word(vec![index])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn reversed(&self) -> Self {
        Word(self.0.iter().rev().copied().collect())
    }

    pub fn concat(&self, other: &Word) -> Self {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NCPolynomial {
    num_generators: usize,
    terms: BTreeMap<Word, C64>,
}

impl NCPolynomial {
    pub fn zero(num_generators: usize) -> Self {
        assert!(num_generators >= 1, "a polynomial needs at least one generator");
        NCPolynomial {
            num_generators,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(num_generators: usize, c: C64) -> Self {
        let mut p = Self::zero(num_generators);
        p.add_term(Word::unit(), c);
        p
    }

    /// The generator `x{index + 1}`.
    pub fn generator(num_generators: usize, index: usize) -> Result<Self> {
        if index >= num_generators {
            return Err(Error::GeneratorOutOfRange {
                index: index + 1,
                num_generators,
                position: 0,
            });
        }
        let mut p = Self::zero(num_generators);
        p.add_term(Word::generator(index), C64::new(1.0, 0.0));
        Ok(p)
    }

    /// Builds a polynomial from explicit terms, validating generator indices.
    pub fn from_terms(
        num_generators: usize,
        terms: impl IntoIterator<Item = (Word, C64)>,
    ) -> Result<Self> {
        let mut p = Self::zero(num_generators);
        for (w, c) in terms {
            if let Some(&g) = w.0.iter().find(|&&g| g >= num_generators) {
                return Err(Error::GeneratorOutOfRange {
                    index: g + 1,
                    num_generators,
                    position: 0,
                });
            }
            p.add_term(w, c);
        }
        Ok(p)
    }

    pub fn num_generators(&self) -> usize {
        self.num_generators
    }

    pub fn terms(&self) -> &BTreeMap<Word, C64> {
        &self.terms
    }

    pub fn coefficient(&self, w: &Word) -> C64 {
        self.terms.get(w).copied().unwrap_or_default()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(Word::len).max().unwrap_or(0)
    }

    /// Largest generator index used (1-based), 0 for constants.
    pub fn max_generator_used(&self) -> usize {
        self.terms
            .keys()
            .flat_map(|w| w.0.iter())
            .map(|g| g + 1)
            .max()
            .unwrap_or(0)
    }

    fn add_term(&mut self, w: Word, c: C64) {
        let entry = self.terms.entry(w).or_default();
        *entry += c;
        self.prune();
    }

    fn prune(&mut self) {
        self.terms.retain(|_, c| c.norm() >= DROP_TOLERANCE);
    }

    fn check_compatible(&self, other: &Self) {
        assert_eq!(
            self.num_generators, other.num_generators,
            "polynomials over different generator counts"
        );
    }

    pub fn add(&self, other: &Self) -> Self {
        self.check_compatible(other);
        let mut out = self.clone();
        for (w, c) in &other.terms {
            *out.terms.entry(w.clone()).or_default() += c;
        }
        out.prune();
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c *= s;
        }
        out.prune();
        out
    }

    /// Non-commutative product: words concatenate.
    pub fn mul(&self, other: &Self) -> Self {
        self.check_compatible(other);
        let mut out = Self::zero(self.num_generators);
        for (wa, ca) in &self.terms {
            for (wb, cb) in &other.terms {
                *out.terms.entry(wa.concat(wb)).or_default() += ca * cb;
            }
        }
        out.prune();
        out
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut out = Self::constant(self.num_generators, C64::new(1.0, 0.0));
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    /// The *-adjoint: words reverse, coefficients conjugate.
    pub fn adjoint(&self) -> Self {
        NCPolynomial {
            num_generators: self.num_generators,
            terms: self
                .terms
                .iter()
                .map(|(w, c)| (w.reversed(), c.conj()))
                .collect(),
        }
    }

    /// Largest coefficient difference between `p` and `p*`.
    pub fn self_adjoint_defect(&self) -> f64 {
        let adj = self.adjoint();
        self.terms
            .keys()
            .chain(adj.terms.keys())
            .map(|w| (self.coefficient(w) - adj.coefficient(w)).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_self_adjoint(&self) -> bool {
        let scale = self.terms.values().map(|c| c.norm()).fold(1.0, f64::max);
        self.self_adjoint_defect() <= 1e-12 * scale
    }

    /// Evaluates the polynomial on a tuple of equal-size square matrices.
    pub fn evaluate(&self, matrices: &[CMatrix]) -> Result<CMatrix> {
        let needed = self.max_generator_used();
        if matrices.len() < needed {
            return Err(Error::DimensionMismatch(format!(
                "polynomial uses x{needed} but only {} matrices were supplied",
                matrices.len()
            )));
        }
        let n = match matrices.first() {
            Some(m) => m.nrows(),
            None if self.degree() == 0 => {
                return Err(Error::DimensionMismatch(
                    "cannot infer the matrix size of a constant without matrices".into(),
                ))
            }
            None => unreachable!(),
        };
        if let Some(bad) = matrices.iter().position(|m| m.nrows() != n || m.ncols() != n) {
            return Err(Error::DimensionMismatch(format!(
                "matrix {} has shape {:?}, expected {n}x{n}",
                bad + 1,
                matrices[bad].shape()
            )));
        }
        let mut out = CMatrix::zeros(n, n);
        for (w, c) in &self.terms {
            let mut prod = identity(n);
            for (k, &g) in w.0.iter().enumerate() {
                prod = if k == 0 {
                    matrices[g].clone()
                } else {
                    matmul(&prod, &matrices[g])
                };
            }
            out += prod * *c;
        }
        Ok(out)
    }
}

fn fmt_real(x: f64) -> String {
    format!("{}", x)
}

/// Canonical text form: terms in word order, coefficients as `(a+bi)`.
impl fmt::Display for NCPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "(0+0i)");
        }
        let mut first = true;
        for (w, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            let sign = if c.im.is_sign_negative() { '-' } else { '+' };
            write!(f, "({}{}{}i)", fmt_real(c.re), sign, fmt_real(c.im.abs()))?;
            for g in &w.0 {
                write!(f, "*x{}", g + 1)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, frobenius, is_hermitian, real_diagonal};

    fn x(r: usize, i: usize) -> NCPolynomial {
        NCPolynomial::generator(r, i).unwrap()
    }

    #[test]
    fn adjoint_of_imaginary_word() {
        let p = x(2, 0).mul(&x(2, 1)).scale(c(0.0, 1.0));
        let q = p.adjoint();
        assert_eq!(q.terms().len(), 1);
        assert_eq!(q.coefficient(&Word(vec![1, 0])), c(0.0, -1.0));
    }

    #[test]
    fn symmetric_sum_is_fixed_point() {
        let p = x(2, 0).mul(&x(2, 1)).add(&x(2, 1).mul(&x(2, 0)));
        assert_eq!(p.adjoint(), p);
        assert!(p.is_self_adjoint());
    }

    #[test]
    fn evaluate_diagonal_square() {
        let p = x(1, 0).pow(2);
        let out = p.evaluate(&[real_diagonal(&[1.0, 2.0])]).unwrap();
        assert!(frobenius(&(out - real_diagonal(&[1.0, 4.0]))) < 1e-15);
    }

    #[test]
    fn commutator_of_equal_arguments_vanishes() {
        let p = x(2, 0).mul(&x(2, 1)).sub(&x(2, 1).mul(&x(2, 0)));
        let a = CMatrix::from_fn(3, 3, |i, j| c((i * 3 + j) as f64, (i as f64) - 1.0));
        let out = p.evaluate(&[a.clone(), a]).unwrap();
        assert!(frobenius(&out) < 1e-12);
    }

    #[test]
    fn evaluate_rejects_mismatched_sizes() {
        let p = x(2, 0).add(&x(2, 1));
        let err = p
            .evaluate(&[CMatrix::identity(2, 2), CMatrix::identity(3, 3)])
            .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
        assert!(p.evaluate(&[CMatrix::identity(2, 2)]).is_err());
    }

    #[test]
    fn self_adjoint_polynomial_gives_hermitian_matrix() {
        let p = parse("x1*x2 + x2*x1 + 2*x1^3 + (1+2i)*x1*x2*x2 + (1-2i)*x2*x2*x1", 2).unwrap();
        assert!(p.is_self_adjoint());
        let a = CMatrix::from_fn(4, 4, |i, j| c((i + j) as f64 * 0.1, i as f64 - j as f64));
        let b = CMatrix::from_fn(4, 4, |i, j| c(((i * j) % 3) as f64, 0.0));
        let out = p.evaluate(&[a, b]).unwrap();
        assert!(is_hermitian(&out, 1e-12));
    }

    #[test]
    fn cancellation_residue_is_dropped() {
        let p = x(1, 0).scale(c(0.1, 0.0)).add(&x(1, 0).scale(c(0.2, 0.0)));
        let q = p.sub(&x(1, 0).scale(c(0.3, 0.0)));
        assert!(q.is_zero(), "{q}");
    }

    #[test]
    fn canonical_render_orders_terms() {
        let p = parse("x2*x1 + x1 + 3 + x1*x2", 2).unwrap();
        assert_eq!(
            p.to_string(),
            "(3+0i) + (1+0i)*x1 + (1+0i)*x1*x2 + (1+0i)*x2*x1"
        );
    }
}
