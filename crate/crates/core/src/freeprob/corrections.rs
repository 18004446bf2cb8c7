use crate::error::{Error, Result};
use crate::linalg::{identity, inverse, solve, unvec, vec, CMatrix, C64};
use crate::ncpoly::CoefficientPencil;

use super::solver::jacobian;
use super::{solve_g, FreeModel, SpectralParameter, DEFAULT_MAX_ITER};

/// Largest `‖Im(λ)⁻¹‖` at which the correction terms are evaluated.
pub const L_RANGE_LIMIT: f64 = 100.0;

/// The fourth-cumulant terms: `R(λ)` and the first-order shift `L(λ)`, `Gn ≈ G + L/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionTerm {
    pub r: CMatrix,
    pub l: CMatrix,
    pub kappa4: f64,
}

fn converged_g(
    pencil: &CoefficientPencil,
    model: FreeModel,
    lambda: &SpectralParameter,
    tol: f64,
) -> Result<CMatrix> {
    let sol = solve_g(pencil, model, lambda, tol, DEFAULT_MAX_ITER)?;
    if !sol.converged {
        return Err(Error::SolverFailure(format!(
            "G(λ) did not converge (residual {:e})",
            sol.residual_norm
        )));
    }
    Ok(sol.g)
}

pub(crate) fn derivative_at(
    pencil: &CoefficientPencil,
    model: FreeModel,
    g: &CMatrix,
    h: &CMatrix,
) -> Result<CMatrix> {
    let m = pencil.m();
    if h.shape() != (m, m) {
        return Err(Error::DimensionMismatch(format!(
            "direction is {:?}, expected {m}x{m}",
            h.shape()
        )));
    }
    let system = identity(m * m) - jacobian(pencil, model, g)?;
    let x = solve(&system, &vec(&(g * h * g))).map_err(|_| Error::SingularLinearization)?;
    Ok(-unvec(&x, m))
}

/// `DG(λ)[h]`, from differentiating the defining equation: `(1 − K) vec DG = −vec(G h G)`.
pub fn directional_derivative(
    pencil: &CoefficientPencil,
    model: FreeModel,
    lambda: &SpectralParameter,
    h: &CMatrix,
    tol: f64,
) -> Result<CMatrix> {
    let g = converged_g(pencil, model, lambda, tol)?;
    derivative_at(pencil, model, &g, h)
}

/// `R = (κ4/2) Σ ap G ap G ap G ap G` and `L = −DG[R G⁻¹]` for the semicircular model.
pub fn corrections(
    pencil: &CoefficientPencil,
    lambda: &SpectralParameter,
    kappa4: f64,
    tol: f64,
) -> Result<CorrectionTerm> {
    if lambda.im_inv_norm() > L_RANGE_LIMIT {
        return Err(Error::OutOfRange {
            im_inv_norm: lambda.im_inv_norm(),
            limit: L_RANGE_LIMIT,
        });
    }
    if !kappa4.is_finite() {
        return Err(Error::InvalidArgument(format!("kappa4 = {kappa4}")));
    }
    let m = pencil.m();
    let model = FreeModel::Semicircular;
    let g = converged_g(pencil, model, lambda, tol)?;
    let mut r = CMatrix::zeros(m, m);
    for a in pencil.generators() {
        let ag = a * &g;
        r += &ag * &ag * &ag * &ag;
    }
    r *= C64::from(kappa4 / 2.0);
    let l = if kappa4 == 0.0 {
        CMatrix::zeros(m, m)
    } else {
        -derivative_at(pencil, model, &g, &(&r * inverse(&g)?))?
    };
    Ok(CorrectionTerm { r, l, kappa4 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, frobenius, real_diagonal};

    fn sc() -> CoefficientPencil {
        CoefficientPencil::scalar(0.0, &[1.0])
    }

    #[test]
    fn derivative_scalar_closed_form() {
        let lam = SpectralParameter::scalar(c(0.0, 3.0), 1).unwrap();
        let d = directional_derivative(&sc(), FreeModel::Semicircular, &lam, &identity(1), 1e-13).unwrap();
        let g = c(0.0, (3.0 - 13f64.sqrt()) / 2.0);
        let expect = -g * g / (1.0 - g * g);
        assert!((d[(0, 0)] - expect).norm() < 1e-12);
        assert!((d[(0, 0)].re - 0.083975).abs() < 1e-6 && d[(0, 0)].im.abs() < 1e-14);
    }

    #[test]
    fn derivative_is_linear_in_direction() {
        let p = CoefficientPencil::new(real_diagonal(&[0.3, -0.2]), vec![real_diagonal(&[1.0, 2.0])]).unwrap();
        let lam = SpectralParameter::scalar(c(0.1, 2.0), 2).unwrap();
        let d = directional_derivative(&p, FreeModel::Semicircular, &lam, &CMatrix::zeros(2, 2), 1e-12).unwrap();
        assert_eq!(frobenius(&d), 0.0);
    }

    #[test]
    fn corrections_scalar_closed_form() {
        let lam = SpectralParameter::scalar(c(0.0, 3.0), 1).unwrap();
        let t = corrections(&sc(), &lam, 3.0, 1e-13).unwrap();
        let g = c(0.0, (3.0 - 13f64.sqrt()) / 2.0);
        assert!((t.r[(0, 0)] - 1.5 * g.powi(4)).norm() < 1e-14);
        assert!((t.r[(0, 0)].re - 0.012606).abs() < 1e-6);
        let l = 1.5 * g.powi(5) / (1.0 - g * g);
        assert!((t.l[(0, 0)] - l).norm() < 1e-13);
        assert!((t.l[(0, 0)].im + 0.0034963).abs() < 1e-7);
    }

    #[test]
    fn zero_cumulant_gives_zero_corrections() {
        let lam = SpectralParameter::scalar(c(0.5, 1.0), 1).unwrap();
        let t = corrections(&sc(), &lam, 0.0, 1e-12).unwrap();
        assert_eq!(frobenius(&t.r), 0.0);
        assert_eq!(frobenius(&t.l), 0.0);
    }

    #[test]
    fn conjugate_symmetry() {
        let z = c(0.8, 0.6);
        let up = corrections(&sc(), &SpectralParameter::scalar(z, 1).unwrap(), -1.2, 1e-13).unwrap();
        let down = corrections(&sc(), &SpectralParameter::scalar(z.conj(), 1).unwrap(), -1.2, 1e-13).unwrap();
        assert!(frobenius(&(up.l.adjoint() - &down.l)) < 1e-13);
        assert!(frobenius(&(up.r.adjoint() - &down.r)) < 1e-13);
    }

    #[test]
    fn out_of_range_near_axis() {
        let lam = SpectralParameter::scalar(c(0.0, 1e-3), 1).unwrap();
        assert!(matches!(
            corrections(&sc(), &lam, 1.0, 1e-10),
            Err(Error::OutOfRange { .. })
        ));
    }
}
