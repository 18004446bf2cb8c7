use crate::error::{Error, Result};
use crate::linalg::{hermitian_defect, kron, op_norm, CMatrix};

/// Hermitian coefficients `(a0, a1, ..., ar)` of size `m x m`.
///
/// Together with a model they define `s = a0 ⊗ 1 + Σ ap ⊗ xp`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientPencil {
    m: usize,
    coefficients: Vec<CMatrix>,
}

impl CoefficientPencil {
    /// `a0` followed by `a1..ar`.
    pub fn new(a0: CMatrix, rest: Vec<CMatrix>) -> Result<Self> {
        let m = a0.nrows();
        if m == 0 {
            return Err(Error::InvalidPencil("block dimension must be positive".into()));
        }
        let mut coefficients = Vec::with_capacity(rest.len() + 1);
        coefficients.push(a0);
        coefficients.extend(rest);
        for (i, a) in coefficients.iter().enumerate() {
            if a.shape() != (m, m) {
                return Err(Error::InvalidPencil(format!(
                    "a{i} has shape {:?}, expected {m}x{m}",
                    a.shape()
                )));
            }
            if a.iter().any(|z| !z.is_finite()) {
                return Err(Error::InvalidPencil(format!("a{i} has non-finite entries")));
            }
            let defect = hermitian_defect(a);
            if defect > 1e-12 * op_norm(a) {
                return Err(Error::InvalidPencil(format!(
                    "a{i} is not Hermitian (defect {defect:e})"
                )));
            }
        }
        Ok(CoefficientPencil { m, coefficients })
    }

    /// Pencil with real scalar coefficients (`m = 1`).
    pub fn scalar(a0: f64, rest: &[f64]) -> Self {
        let one = |x: f64| CMatrix::from_element(1, 1, x.into());
        CoefficientPencil {
            m: 1,
            coefficients: std::iter::once(a0).chain(rest.iter().copied()).map(one).collect(),
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of random generators `r`.
    pub fn r(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn a0(&self) -> &CMatrix {
        &self.coefficients[0]
    }

    /// `a1..ar`.
    pub fn generators(&self) -> &[CMatrix] {
        &self.coefficients[1..]
    }

    pub fn coefficients(&self) -> &[CMatrix] {
        &self.coefficients
    }

    /// `a0 ⊗ 1n + Σ ap ⊗ Xp`, with row `(α, k)` at `α·n + k`.
    pub fn assemble(&self, matrices: &[CMatrix]) -> Result<CMatrix> {
        if matrices.len() != self.r() {
            return Err(Error::DimensionMismatch(format!(
                "pencil has {} generators but {} matrices were supplied",
                self.r(),
                matrices.len()
            )));
        }
        let n = match matrices.first() {
            Some(x) => x.nrows(),
            None => 1,
        };
        if let Some(bad) = matrices.iter().position(|x| x.shape() != (n, n)) {
            return Err(Error::DimensionMismatch(format!(
                "matrix {} has shape {:?}, expected {n}x{n}",
                bad + 1,
                matrices[bad].shape()
            )));
        }
        let mut out = kron(self.a0(), &CMatrix::identity(n, n));
        for (a, x) in self.generators().iter().zip(matrices) {
            out += kron(a, x);
        }
        Ok(out)
    }
}
