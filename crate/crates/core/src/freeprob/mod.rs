//! Deterministic side: operator-valued Stieltjes transforms of
//! `s = a0 ⊗ 1 + Σ ap ⊗ xp` for free semicircular or Marchenko–Pastur `xp`.

mod corrections;
mod density;
mod solver;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, im_part, op_norm, scalar_matrix, CMatrix, C64};
use crate::ncpoly::CoefficientPencil;

pub use corrections::{corrections, directional_derivative, CorrectionTerm, L_RANGE_LIMIT};
pub use density::{
    density, norm_prediction, norm_prediction_with, spectral_edges, NormPredictionOptions,
    SpectralDensityEstimate, DEFAULT_EDGE_ETA, DEFAULT_THRESHOLD,
};
pub use solver::{equation_residual, solve_g};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FreeModel {
    Semicircular,
    /// Free Poisson law with rate `alpha ≥ 1`, R-transform `alpha / (1 − z)`.
    MarchenkoPastur { alpha: f64 },
}

impl FreeModel {
    pub fn marchenko_pastur(alpha: f64) -> Result<Self> {
        let model = FreeModel::MarchenkoPastur { alpha };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            FreeModel::Semicircular => Ok(()),
            FreeModel::MarchenkoPastur { alpha } if alpha.is_finite() && alpha >= 1.0 => Ok(()),
            FreeModel::MarchenkoPastur { alpha } => Err(Error::InvalidModel(format!(
                "Marchenko-Pastur rate must be finite and >= 1, got {alpha}"
            ))),
        }
    }

    /// Operator norm of a single generator.
    pub fn edge(&self) -> f64 {
        match *self {
            FreeModel::Semicircular => 2.0,
            FreeModel::MarchenkoPastur { alpha } => (alpha.sqrt() + 1.0).powi(2),
        }
    }

    /// Lower end of a single generator's spectrum.
    pub fn lower_edge(&self) -> f64 {
        match *self {
            FreeModel::Semicircular => -2.0,
            FreeModel::MarchenkoPastur { alpha } => (alpha.sqrt() - 1.0).powi(2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HalfPlane {
    Upper,
    Lower,
}

/// A matrix `λ` whose imaginary part `(λ − λ*)/2i` is definite.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralParameter {
    lambda: CMatrix,
    half_plane: HalfPlane,
    im_inv_norm: f64,
}

impl SpectralParameter {
    pub fn new(lambda: CMatrix) -> Result<Self> {
        if !lambda.is_square() || lambda.nrows() == 0 {
            return Err(Error::InvalidSpectralParameter(format!(
                "expected a non-empty square matrix, got {:?}",
                lambda.shape()
            )));
        }
        if lambda.iter().any(|z| !z.is_finite()) {
            return Err(Error::InvalidSpectralParameter("non-finite entries".into()));
        }
        let eig = hermitian_eigenvalues(&im_part(&lambda));
        let (lo, hi) = (eig[0], eig[eig.len() - 1]);
        let (half_plane, smallest) = if lo > 0.0 {
            (HalfPlane::Upper, lo)
        } else if hi < 0.0 {
            (HalfPlane::Lower, -hi)
        } else {
            return Err(Error::InvalidSpectralParameter(format!(
                "imaginary part is not definite (eigenvalues in [{lo:e}, {hi:e}])"
            )));
        };
        Ok(SpectralParameter {
            lambda,
            half_plane,
            im_inv_norm: 1.0 / smallest,
        })
    }

    /// `z · 1_m`.
    pub fn scalar(z: C64, m: usize) -> Result<Self> {
        Self::new(scalar_matrix(z, m))
    }

    pub fn lambda(&self) -> &CMatrix {
        &self.lambda
    }

    pub fn m(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn half_plane(&self) -> HalfPlane {
        self.half_plane
    }

    /// `‖Im(λ)⁻¹‖`.
    pub fn im_inv_norm(&self) -> f64 {
        self.im_inv_norm
    }

    pub fn adjoint(&self) -> Self {
        SpectralParameter {
            lambda: self.lambda.adjoint(),
            half_plane: match self.half_plane {
                HalfPlane::Upper => HalfPlane::Lower,
                HalfPlane::Lower => HalfPlane::Upper,
            },
            im_inv_norm: self.im_inv_norm,
        }
    }

    pub fn norm(&self) -> f64 {
        op_norm(&self.lambda)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StieltjesSolution {
    pub g: CMatrix,
    /// Operator norm of the defining equation evaluated at `g`.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl StieltjesSolution {
    /// `tr_m(G)`.
    pub fn normalized_trace(&self) -> C64 {
        self.g.trace() / self.g.nrows() as f64
    }
}

/// `tr_m G(z · 1_m)`.
pub fn g_scalar(pencil: &CoefficientPencil, model: FreeModel, z: C64, tol: f64) -> Result<C64> {
    if z.im == 0.0 || !z.is_finite() {
        return Err(Error::InvalidSpectralParameter(format!(
            "z = {z} must have a non-zero imaginary part"
        )));
    }
    let lambda = SpectralParameter::scalar(z, pencil.m())?;
    let sol = solve_g(pencil, model, &lambda, tol, DEFAULT_MAX_ITER)?;
    if !sol.converged {
        return Err(Error::SolverFailure(format!(
            "no convergence at z = {z} (residual {:e})",
            sol.residual_norm
        )));
    }
    Ok(sol.normalized_trace())
}

/// Upper bound on `‖s‖` used by the solution invariants.
pub fn operator_norm_bound(pencil: &CoefficientPencil, model: FreeModel) -> f64 {
    op_norm(pencil.a0()) + pencil.generators().iter().map(op_norm).sum::<f64>() * model.edge()
}
