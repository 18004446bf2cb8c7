//! Finite-`n` experiments on `Sn = a0 ⊗ 1n + Σ ap ⊗ Xp`.
//!
//! Every replica draws its matrices from its own ChaCha8 stream keyed by
//! `(seed, replica index)`. Replicas may run on any number of rayon workers;
//! results are collected in index order and reduced sequentially, so
//! estimates do not depend on the worker count.

mod checks;
mod control;
mod master;

use std::fmt;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::ensembles::{
    sample_wigner, sample_wishart, wigner_trace_moment, wishart_trace_moment, EntryDistribution, RngStream,
    WishartSpec,
};
use crate::error::{Error, Result};
use crate::freeprob::{FreeModel, SpectralParameter};
use crate::linalg::{c, hermitian_eigen, hermitian_eigenvalues, hpd_sqrt_and_inv_sqrt, im_part, is_hermitian, kron, matmul, re_part, CMatrix, C64};
use crate::ncpoly::CoefficientPencil;

pub use checks::{
    hermitian_direction, norm_convergence, resolvent_entry_variance, spectrum_containment, wishart_ibp_check, word_trace_variance,
    ContainmentReport, ContainmentSample, IbpFunction, IbpReport, NormConvergenceReport, NormPoint,
};
pub use master::{
    block_average_check, block_average_scaling, correction_check, master_residual_iid, master_residual_iid_scaling,
    master_residual_wishart, master_residual_wishart_scaling, BlockAverageReport, CorrectionPoint,
    CorrectionReport, MasterResidualReport, MasterScaling, WishartResidualReport,
};

/// The random matrix family driving every generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ensemble {
    /// Independent Wigner matrices with the given entry law.
    Wigner(EntryDistribution),
    /// Independent Wishart matrices `X*X/n` with `p = round(α n)`.
    Wishart { alpha: f64 },
}

impl Ensemble {
    pub fn wishart(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha < 1.0 {
            return Err(Error::InvalidArgument(format!("Wishart ratio alpha = {alpha} must be >= 1")));
        }
        Ok(Ensemble::Wishart { alpha })
    }

    /// The free limit of the ensemble.
    pub fn model(&self) -> FreeModel {
        match *self {
            Ensemble::Wigner(_) => FreeModel::Semicircular,
            Ensemble::Wishart { alpha } => FreeModel::MarchenkoPastur { alpha },
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<CMatrix> {
        match self {
            Ensemble::Wigner(d) => Ok(sample_wigner(d, n, rng)),
            Ensemble::Wishart { alpha } => Ok(sample_wishart(&WishartSpec::new(n, *alpha)?, rng)),
        }
    }

    /// `E tr_n X^k`, exact at finite `n`.
    pub fn exact_trace_moment(&self, n: usize, k: u32) -> Result<f64> {
        match self {
            Ensemble::Wigner(d) => Ok(wigner_trace_moment(d, n, k)),
            Ensemble::Wishart { alpha } => Ok(wishart_trace_moment(n, WishartSpec::new(n, *alpha)?.p, k)),
        }
    }

    /// Interval `center ± half` mapped onto `[−1, 1]` for the Chebyshev controls.
    fn control_window(&self) -> (f64, f64) {
        match *self {
            Ensemble::Wigner(_) => (0.0, 2.5),
            Ensemble::Wishart { alpha } => {
                let lo = (alpha.sqrt() - 1.0).powi(2);
                let hi = (alpha.sqrt() + 1.0).powi(2);
                (0.5 * (lo + hi), 0.6 * (hi - lo) + 0.2)
            }
        }
    }

    /// Chebyshev degree of the controls; limited by the cost of the exact moments.
    fn control_degree(&self) -> usize {
        match self {
            // odd moments vanish, so degree 15 needs moments up to 14 only
            Ensemble::Wigner(_) => 15,
            Ensemble::Wishart { .. } => 8,
        }
    }
}

impl fmt::Display for Ensemble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ensemble::Wigner(d) => write!(f, "wigner({d})"),
            Ensemble::Wishart { alpha } => write!(f, "wishart({alpha})"),
        }
    }
}

/// `Sn` for one draw of the generator matrices.
#[derive(Debug, Clone)]
pub struct BlockOperator {
    pencil: CoefficientPencil,
    matrices: Vec<CMatrix>,
    assembled: OnceLock<CMatrix>,
}

impl BlockOperator {
    pub fn new(pencil: CoefficientPencil, matrices: Vec<CMatrix>) -> Result<Self> {
        validate_matrices(&pencil, &matrices)?;
        Ok(BlockOperator {
            pencil,
            matrices,
            assembled: OnceLock::new(),
        })
    }

    pub fn pencil(&self) -> &CoefficientPencil {
        &self.pencil
    }

    pub fn matrices(&self) -> &[CMatrix] {
        &self.matrices
    }

    pub fn n(&self) -> usize {
        self.matrices.first().map_or(1, |x| x.nrows())
    }

    /// The `mn x mn` matrix, built on first use.
    pub fn assembled(&self) -> &CMatrix {
        self.assembled.get_or_init(|| {
            self.pencil
                .assemble(&self.matrices)
                .expect("matrices validated at construction")
        })
    }

    /// Eigenvalues of `Sn`, ascending.
    pub fn spectrum(&self) -> Vec<f64> {
        if self.matrices.is_empty() {
            return hermitian_eigenvalues(self.pencil.a0());
        }
        hermitian_eigenvalues(self.assembled())
    }

    pub fn resolvent_stats(&self, lambda: &SpectralParameter, detail: BlockDetail) -> Result<ResolventStats> {
        Ok(resolvent_impl(&self.pencil, &self.matrices, lambda, detail, false)?.0)
    }
}

fn validate_matrices(pencil: &CoefficientPencil, matrices: &[CMatrix]) -> Result<()> {
    if matrices.len() != pencil.r() {
        return Err(Error::DimensionMismatch(format!(
            "pencil has {} generators, got {} matrices",
            pencil.r(),
            matrices.len()
        )));
    }
    let n = matrices.first().map_or(1, |x| x.nrows());
    for (p, x) in matrices.iter().enumerate() {
        if x.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "matrix {} is {:?}, expected {n}x{n}",
                p + 1,
                x.shape()
            )));
        }
        if !is_hermitian(x, 1e-12) {
            return Err(Error::InvalidArgument(format!("matrix {} is not Hermitian", p + 1)));
        }
    }
    Ok(())
}

/// How much of the resolvent `(λ ⊗ 1n − Sn)⁻¹` to keep besides `Hn`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockDetail {
    None,
    /// The `n` diagonal `m x m` blocks.
    Diagonal,
    /// The whole `mn x mn` resolvent.
    Full,
}

#[derive(Debug, Clone)]
pub struct ResolventStats {
    /// `(id_m ⊗ tr_n)(λ ⊗ 1n − Sn)⁻¹`.
    pub h: CMatrix,
    pub diagonal_blocks: Option<Vec<CMatrix>>,
    pub resolvent: Option<CMatrix>,
    n: usize,
    m: usize,
}

impl ResolventStats {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Block `(k, l)` of the resolvent: `(id_m ⊗ Tr_n)(R (1_m ⊗ E_lk))`.
    pub fn block(&self, k: usize, l: usize) -> Option<CMatrix> {
        if let Some(r) = &self.resolvent {
            let n = self.n;
            return Some(CMatrix::from_fn(self.m, self.m, |a, b| r[(a * n + k, b * n + l)]));
        }
        if k == l {
            return self.diagonal_blocks.as_ref().map(|d| d[k].clone());
        }
        None
    }
}

/// `Hn(λ)` and, on request, resolvent blocks for one draw of the generators.
pub fn resolvent_stats(
    pencil: &CoefficientPencil,
    matrices: &[CMatrix],
    lambda: &SpectralParameter,
    detail: BlockDetail,
) -> Result<ResolventStats> {
    validate_matrices(pencil, matrices)?;
    Ok(resolvent_impl(pencil, matrices, lambda, detail, false)?.0)
}

/// The resolvent, plus the spectra of the generators when `want_spectra`.
///
/// With `λ = A + i s C`, `s = ±1`, `C > 0`:
/// `λ ⊗ 1 − Sn = (C^{1/2} ⊗ 1)(i s − T)(C^{1/2} ⊗ 1)` where
/// `T = (C^{−1/2} ⊗ 1)(Sn − A ⊗ 1)(C^{−1/2} ⊗ 1)` is Hermitian, so one
/// Hermitian eigen-decomposition gives everything.
pub(crate) fn resolvent_impl(
    pencil: &CoefficientPencil,
    matrices: &[CMatrix],
    lambda: &SpectralParameter,
    detail: BlockDetail,
    want_spectra: bool,
) -> Result<(ResolventStats, Vec<Vec<f64>>)> {
    let m = pencil.m();
    if lambda.m() != m {
        return Err(Error::DimensionMismatch(format!(
            "lambda is {}x{}, pencil has m = {m}",
            lambda.m(),
            lambda.m()
        )));
    }
    let n = matrices.first().map_or(1, |x| x.nrows());
    let lam = lambda.lambda();

    if matrices.is_empty() {
        let h = crate::linalg::inverse(&(lam - pencil.a0()))?;
        let stats = ResolventStats {
            diagonal_blocks: (detail == BlockDetail::Diagonal).then(|| vec![h.clone()]),
            resolvent: (detail == BlockDetail::Full).then(|| h.clone()),
            h,
            n,
            m,
        };
        return Ok((stats, Vec::new()));
    }

    if m == 1 && matrices.len() == 1 {
        return Ok(scalar_resolvent(pencil, &matrices[0], lam[(0, 0)], detail));
    }

    let sign = match lambda.half_plane() {
        crate::freeprob::HalfPlane::Upper => 1.0,
        crate::freeprob::HalfPlane::Lower => -1.0,
    };
    let a = re_part(lam);
    let cpos = im_part(lam) * C64::from(sign);
    let (_, ci) = hpd_sqrt_and_inv_sqrt(&cpos)?;
    let sandwich = |x: &CMatrix| {
        let y = &ci * x * &ci;
        (&y + y.adjoint()) * C64::from(0.5)
    };
    let eye_n = CMatrix::identity(n, n);
    let mut t = kron(&sandwich(&(pencil.a0() - &a)), &eye_n);
    for (ap, x) in pencil.generators().iter().zip(matrices) {
        t += kron(&sandwich(ap), x);
    }
    let (w, u) = hermitian_eigen(&t);
    let d: Vec<C64> = w.iter().map(|&wj| (c(-wj, sign)).inv()).collect();
    let mn = m * n;

    let mut diag = Vec::new();
    let mut hsum = CMatrix::zeros(m, m);
    if detail == BlockDetail::Diagonal || m > 1 {
        for k in 0..n {
            let mut nk = CMatrix::zeros(m, m);
            for j in 0..mn {
                for g in 0..m {
                    let ug = u[(g * n + k, j)] * d[j];
                    for h in 0..m {
                        nk[(g, h)] += ug * u[(h * n + k, j)].conj();
                    }
                }
            }
            hsum += &nk;
            if detail == BlockDetail::Diagonal {
                diag.push(&ci * nk * &ci);
            }
        }
    } else {
        hsum[(0, 0)] = d.iter().sum();
    }
    let h = &ci * (hsum / C64::from(n as f64)) * &ci;
    let resolvent = (detail == BlockDetail::Full).then(|| {
        let mut ud = u.clone();
        for (j, dj) in d.iter().enumerate() {
            for i in 0..mn {
                ud[(i, j)] *= dj;
            }
        }
        let inner = matmul(&ud, &u.adjoint());
        let cik = kron(&ci, &eye_n);
        matmul(&matmul(&cik, &inner), &cik)
    });
    let spectra = if want_spectra {
        matrices.iter().map(hermitian_eigenvalues).collect()
    } else {
        Vec::new()
    };
    let stats = ResolventStats {
        h,
        diagonal_blocks: (detail == BlockDetail::Diagonal).then_some(diag),
        resolvent,
        n,
        m,
    };
    Ok((stats, spectra))
}

/// `m = 1`, one generator: diagonalize `X` itself.
fn scalar_resolvent(
    pencil: &CoefficientPencil,
    x: &CMatrix,
    z: C64,
    detail: BlockDetail,
) -> (ResolventStats, Vec<Vec<f64>>) {
    let n = x.nrows();
    let a0 = pencil.a0()[(0, 0)];
    let a1 = pencil.generators()[0][(0, 0)];
    let pole = |e: f64| (z - a0 - a1 * e).inv();
    let (eig, blocks, resolvent) = match detail {
        BlockDetail::None => (hermitian_eigenvalues(x), None, None),
        BlockDetail::Diagonal => {
            let (eig, v) = hermitian_eigen(x);
            let d: Vec<C64> = eig.iter().map(|&e| pole(e)).collect();
            let blocks = (0..n)
                .map(|k| {
                    let s: C64 = (0..n).map(|j| d[j] * v[(k, j)].norm_sqr()).sum();
                    CMatrix::from_element(1, 1, s)
                })
                .collect();
            (eig, Some(blocks), None)
        }
        BlockDetail::Full => {
            let (eig, v) = hermitian_eigen(x);
            let mut vd = v.clone();
            for j in 0..n {
                let dj = pole(eig[j]);
                for i in 0..n {
                    vd[(i, j)] *= dj;
                }
            }
            let r = matmul(&vd, &v.adjoint());
            (eig, None, Some(r))
        }
    };
    let h: C64 = eig.iter().map(|&e| pole(e)).sum::<C64>() / n as f64;
    let stats = ResolventStats {
        h: CMatrix::from_element(1, 1, h),
        diagonal_blocks: blocks,
        resolvent,
        n,
        m: 1,
    };
    (stats, vec![eig])
}

/// A replica-mean with entrywise standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: CMatrix,
    /// `sqrt(Var Re + Var Im) / sqrt(replicas)` per entry.
    pub stderr: DMatrix<f64>,
    pub replicas: usize,
    pub seed: u64,
    pub n: usize,
}

impl MonteCarloEstimate {
    /// Frobenius norm of the entrywise standard errors.
    pub fn stderr_norm(&self) -> f64 {
        self.stderr.iter().map(|s| s * s).sum::<f64>().sqrt()
    }
}

/// Runs `f` once per replica on its own stream, returning results in replica order.
pub(crate) fn replicate<T, F>(seed: u64, replicas: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> Result<T> + Sync,
{
    (0..replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(seed, i as u64).rng();
            f(&mut rng)
        })
        .collect()
}

pub(crate) fn sample_generators<R: Rng + ?Sized>(
    ensemble: &Ensemble,
    r: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<CMatrix>> {
    (0..r).map(|_| ensemble.sample(n, rng)).collect()
}

/// True when `Sn` does not depend on the random matrices.
pub(crate) fn is_deterministic(pencil: &CoefficientPencil) -> bool {
    pencil.generators().iter().all(|a| a.iter().all(|z| *z == C64::default()))
}

/// `Gn(λ) = E Hn(λ)` by plain replica averaging.
pub fn estimate_gn(
    pencil: &CoefficientPencil,
    ensemble: &Ensemble,
    lambda: &SpectralParameter,
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    if replicas < 2 {
        return Err(Error::InvalidArgument(format!("replicas = {replicas}; at least 2 are needed")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let m = pencil.m();
    if is_deterministic(pencil) {
        let h = crate::linalg::inverse(&(lambda.lambda() - pencil.a0()))?;
        return Ok(MonteCarloEstimate {
            mean: h,
            stderr: DMatrix::zeros(m, m),
            replicas,
            seed,
            n,
        });
    }
    let samples = replicate(seed, replicas, |rng| {
        let xs = sample_generators(ensemble, pencil.r(), n, rng)?;
        Ok(resolvent_impl(pencil, &xs, lambda, BlockDetail::None, false)?.0.h)
    })?;
    Ok(summarize(&samples, seed, n))
}

pub(crate) fn summarize(samples: &[CMatrix], seed: u64, n: usize) -> MonteCarloEstimate {
    let (rows, cols) = samples[0].shape();
    let r = samples.len() as f64;
    let mut mean = CMatrix::zeros(rows, cols);
    for s in samples {
        mean += s;
    }
    mean /= C64::from(r);
    let mut var = DMatrix::<f64>::zeros(rows, cols);
    for s in samples {
        for (v, (x, mu)) in var.iter_mut().zip(s.iter().zip(mean.iter())) {
            *v += (x - mu).norm_sqr();
        }
    }
    let stderr = var.map(|v| (v / (r - 1.0) / r).sqrt());
    MonteCarloEstimate {
        mean,
        stderr,
        replicas: samples.len(),
        seed,
        n,
    }
}

/// One point of a scaling study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingPoint {
    pub n: usize,
    pub value: f64,
    pub stderr: f64,
}

/// Values against `n` with a log-log slope when the data resolve one.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub n_values: Vec<usize>,
    pub points: Vec<ScalingPoint>,
    pub slope: Option<f64>,
    pub slope_stderr: Option<f64>,
}

impl ScalingReport {
    pub fn new(points: Vec<ScalingPoint>) -> Result<Self> {
        if points.windows(2).any(|w| w[1].n <= w[0].n) {
            return Err(Error::InvalidArgument("n values must be strictly increasing".into()));
        }
        let fit = fit_log_slope(&points);
        Ok(ScalingReport {
            n_values: points.iter().map(|p| p.n).collect(),
            slope: fit.map(|f| f.0),
            slope_stderr: fit.map(|f| f.1),
            points,
        })
    }

    /// Every point has `stderr < value / 3`.
    pub fn resolved(&self) -> bool {
        self.points.iter().all(|p| p.value > 0.0 && p.stderr < p.value / 3.0)
    }

    pub fn slope_within(&self, lo: f64, hi: f64) -> bool {
        self.slope.is_some_and(|s| (lo..=hi).contains(&s))
    }

    /// Strictly decreasing values.
    pub fn decreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].value < w[0].value)
    }
}

/// Weighted least squares of `ln value` on `ln n`, weights `(value/stderr)²`.
///
/// Returns `None` with fewer than three points or when some point has
/// `stderr >= value / 3`: noise would pass for scaling.
pub fn fit_log_slope(points: &[ScalingPoint]) -> Option<(f64, f64)> {
    if points.len() < 3 || points.iter().any(|p| !(p.value > 0.0) || p.stderr >= p.value / 3.0) {
        return None;
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.value.ln()).collect();
    let ws: Vec<f64> = points
        .iter()
        .map(|p| {
            let rel = (p.stderr / p.value).max(1e-12);
            1.0 / (rel * rel)
        })
        .collect();
    let sw: f64 = ws.iter().sum();
    let xm = ws.iter().zip(&xs).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ym = ws.iter().zip(&ys).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = ws.iter().zip(&xs).map(|(w, x)| w * (x - xm).powi(2)).sum();
    let sxy: f64 = ws.iter().zip(xs.iter().zip(&ys)).map(|(w, (x, y))| w * (x - xm) * (y - ym)).sum();
    Some((sxy / sxx, (1.0 / sxx).sqrt()))
}
