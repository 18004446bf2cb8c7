//! Dense complex matrix helpers.
//!
//! Small `m x m` algebra goes through nalgebra; large Hermitian
//! eigenproblems and products are delegated to faer (sequential, so a
//! replica's arithmetic never depends on the size of the worker pool).

use faer::{Mat, Side};
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<Complex64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(m: usize) -> CMatrix {
    CMatrix::identity(m, m)
}

pub fn scalar_matrix(z: C64, m: usize) -> CMatrix {
    CMatrix::from_diagonal_element(m, m, z)
}

pub fn real_diagonal(d: &[f64]) -> CMatrix {
    let m = d.len();
    CMatrix::from_fn(m, m, |i, j| if i == j { c(d[i], 0.0) } else { C64::default() })
}

/// Operator (spectral) norm: the largest singular value.
pub fn op_norm(a: &CMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if a.nrows() == 1 && a.ncols() == 1 {
        return a[(0, 0)].norm();
    }
    a.clone().singular_values().max()
}

pub fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `(a - a*) / 2i`, Hermitian.
pub fn im_part(a: &CMatrix) -> CMatrix {
    (a - a.adjoint()) * c(0.0, -0.5)
}

/// `(a + a*) / 2`, Hermitian.
pub fn re_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * c(0.5, 0.0)
}

pub fn hermitian_defect(a: &CMatrix) -> f64 {
    op_norm(&(a - a.adjoint()))
}

pub fn is_hermitian(a: &CMatrix, rel_tol: f64) -> bool {
    a.is_square() && hermitian_defect(a) <= rel_tol * op_norm(a).max(f64::MIN_POSITIVE)
}

pub fn inverse(a: &CMatrix) -> Result<CMatrix> {
    if a.nrows() == 1 && a.ncols() == 1 {
        let z = a[(0, 0)];
        if z == C64::default() || !z.is_finite() {
            return Err(Error::SolverFailure("singular 1x1 matrix".into()));
        }
        return Ok(CMatrix::from_element(1, 1, z.inv()));
    }
    let inv = a
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SolverFailure("singular matrix in inversion".into()))?;
    if inv.iter().any(|z| !z.is_finite()) {
        return Err(Error::SolverFailure("non-finite inverse".into()));
    }
    Ok(inv)
}

pub fn solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    a.clone()
        .lu()
        .solve(b)
        .filter(|x| x.iter().all(|z| z.is_finite()))
        .ok_or_else(|| Error::SolverFailure("singular linear system".into()))
}

/// Kronecker product `a ⊗ b`, with the row of element `(i, k)` at `i * b.nrows() + k`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s == C64::default() {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = s * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Column-major vectorization, matching `vec(A X B) = (Bᵀ ⊗ A) vec(X)`.
pub fn vec(a: &CMatrix) -> CMatrix {
    CMatrix::from_column_slice(a.len(), 1, a.as_slice())
}

pub fn unvec(v: &CMatrix, m: usize) -> CMatrix {
    CMatrix::from_column_slice(m, m, v.as_slice())
}

/// Eigenvalues of a Hermitian matrix, ascending. Only the lower triangle is read.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    let n = a.nrows();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![a[(0, 0)].re];
    }
    let f = to_faer(a);
    f.self_adjoint_eigenvalues(Side::Lower)
        .expect("Hermitian eigenvalue iteration failed to converge")
}

/// Eigen-decomposition `a = V diag(d) V*` of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = a.nrows();
    if n == 1 {
        return (vec![a[(0, 0)].re], identity(1));
    }
    let f = to_faer(a);
    let evd = f
        .self_adjoint_eigen(Side::Lower)
        .expect("Hermitian eigen-decomposition failed to converge");
    let s = evd.S();
    let d: Vec<f64> = (0..n).map(|i| s[i].re).collect();
    let u = evd.U();
    let v = CMatrix::from_fn(n, n, |i, j| u[(i, j)]);
    (d, v)
}

/// Principal square root of a Hermitian positive definite matrix and its inverse.
pub fn hpd_sqrt_and_inv_sqrt(a: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let (d, v) = hermitian_eigen(a);
    if d.iter().any(|&x| x <= 0.0 || !x.is_finite()) {
        return Err(Error::InvalidSpectralParameter(
            "matrix is not positive definite".into(),
        ));
    }
    let sq: Vec<f64> = d.iter().map(|x| x.sqrt()).collect();
    let isq: Vec<f64> = sq.iter().map(|x| 1.0 / x).collect();
    let vs = &v * real_diagonal(&sq) * v.adjoint();
    let vi = &v * real_diagonal(&isq) * v.adjoint();
    Ok((vs, vi))
}

/// `a* a` for a tall matrix, computed with faer.
pub fn gram(a: &CMatrix) -> CMatrix {
    let f = to_faer(a);
    let g = f.adjoint() * &f;
    CMatrix::from_fn(g.nrows(), g.ncols(), |i, j| g[(i, j)])
}

/// Matrix product through faer; worthwhile once dimensions reach the hundreds.
pub fn matmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    if a.nrows() < 48 {
        return a * b;
    }
    let fa = to_faer(a);
    let fb = to_faer(b);
    let p = &fa * &fb;
    CMatrix::from_fn(p.nrows(), p.ncols(), |i, j| p[(i, j)])
}

/// `Tr(a b)` without forming the product.
pub fn trace_of_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = C64::default();
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

fn to_faer(a: &CMatrix) -> Mat<C64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}
