//! Master-equation residuals, the `1/n` correction and diagonal-block averages.

use crate::ensembles::{derive_seed, EntryDistribution, WishartSpec};
use crate::error::{Error, Result};
use crate::freeprob::{corrections, solve_g, FreeModel, SpectralParameter, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::linalg::{frobenius, identity, inverse, kron, op_norm, unvec, vec, CMatrix, C64};
use crate::ncpoly::CoefficientPencil;

use super::control::{pack, unpack, ControlDesign, CvFit};
use super::{is_deterministic, replicate, resolvent_impl, sample_generators, BlockDetail, Ensemble, ScalingPoint, ScalingReport};

fn check_common(pencil: &CoefficientPencil, lambda: &SpectralParameter, n: usize, replicas: usize) -> Result<()> {
    if replicas < 2 {
        return Err(Error::InvalidArgument(format!("replicas = {replicas}; at least 2 are needed")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    if lambda.m() != pencil.m() {
        return Err(Error::DimensionMismatch(format!(
            "lambda is {0}x{0}, pencil has m = {1}",
            lambda.m(),
            pencil.m()
        )));
    }
    Ok(())
}

/// One replica: packed targets and control features.
struct Observation {
    targets: Vec<f64>,
    features: Vec<f64>,
}

/// Replica observations for the Wigner/Wishart pipelines, fitted with controls.
fn observe<F>(
    pencil: &CoefficientPencil,
    ensemble: &Ensemble,
    lambda: &SpectralParameter,
    n: usize,
    replicas: usize,
    seed: u64,
    detail: BlockDetail,
    targets: F,
) -> Result<CvFit>
where
    F: Fn(&super::ResolventStats) -> Vec<f64> + Sync,
{
    let design = ControlDesign::new(ensemble, n, pencil.r(), replicas)?;
    let obs = replicate(seed, replicas, |rng| {
        let xs = sample_generators(ensemble, pencil.r(), n, rng)?;
        let (stats, spectra) = resolvent_impl(pencil, &xs, lambda, detail, design.len() > 0)?;
        Ok(Observation {
            targets: targets(&stats),
            features: design.features(&spectra),
        })
    })?;
    let (t, f): (Vec<_>, Vec<_>) = obs.into_iter().map(|o| (o.targets, o.features)).unzip();
    Ok(CvFit::new(&t, &f, &design.means))
}

/// `(κ4/2n²) Σ_p Σ_{k,l} ap Bk ap Bl ap Bk ap Bl` for the diagonal blocks `Bk` of one replica.
///
/// With `Mk = ap Bk` the double sum is `Σ_k Mk T(Mk)`, `T(X) = Σ_l Ml X Ml`,
/// and `T` is assembled once as `Σ_l Mlᵀ ⊗ Ml` on column-major vectors.
fn rn_sample(pencil: &CoefficientPencil, blocks: &[CMatrix], kappa4: f64) -> CMatrix {
    let m = pencil.m();
    let n = blocks.len();
    let mut total = CMatrix::zeros(m, m);
    for ap in pencil.generators() {
        let ms: Vec<CMatrix> = blocks.iter().map(|b| ap * b).collect();
        if m == 1 {
            let s: C64 = ms.iter().map(|x| x[(0, 0)] * x[(0, 0)]).sum();
            total[(0, 0)] += s * s;
            continue;
        }
        let mut t = CMatrix::zeros(m * m, m * m);
        for x in &ms {
            t += kron(&x.transpose(), x);
        }
        for x in &ms {
            total += x * unvec(&(&t * vec(x)), m);
        }
    }
    total * C64::from(kappa4 / (2.0 * (n * n) as f64))
}

/// Result of one iid master-residual run at a single `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterResidualReport {
    pub n: usize,
    pub replicas: usize,
    pub seed: u64,
    /// Control-adjusted estimate of `Gn(λ)`.
    pub g_n: CMatrix,
    /// Estimate of `Rn(λ)`.
    pub rn_hat: CMatrix,
    /// `Σ ap Gn ap Gn + (a0 − λ) Gn + 1 + Rn/n`.
    pub residual: CMatrix,
    /// The same without the `Rn/n` term.
    pub residual_without: CMatrix,
    pub stderr: f64,
    pub stderr_without: f64,
    pub rn_stderr: f64,
    /// Number of control variates used.
    pub controls: usize,
}

impl MasterResidualReport {
    /// Frobenius norm of the residual with the `Rn/n` term.
    pub fn residual_norm(&self) -> f64 {
        frobenius(&self.residual)
    }

    pub fn residual_without_norm(&self) -> f64 {
        frobenius(&self.residual_without)
    }
}

fn master_lhs(pencil: &CoefficientPencil, lambda: &CMatrix, g: &CMatrix) -> CMatrix {
    let m = pencil.m();
    let mut out = (pencil.a0() - lambda) * g + identity(m);
    for a in pencil.generators() {
        out += a * g * a * g;
    }
    out
}

/// Residual of the finite-`n` master equation for Wigner generators with entry law `dist`.
///
/// `Gn` is the replica mean of `Hn` adjusted by Chebyshev-trace control
/// variates; `Rn` is evaluated exactly per replica from the diagonal
/// resolvent blocks. Standard errors use the delta method on the
/// regression residuals.
pub fn master_residual_iid(
    pencil: &CoefficientPencil,
    dist: &EntryDistribution,
    lambda: &SpectralParameter,
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<MasterResidualReport> {
    check_common(pencil, lambda, n, replicas)?;
    let m = pencil.m();
    let lam = lambda.lambda();
    let kappa4 = dist.kappa4();
    if is_deterministic(pencil) {
        let g = inverse(&(lam - pencil.a0()))?;
        let residual = master_lhs(pencil, lam, &g);
        return Ok(MasterResidualReport {
            n,
            replicas,
            seed,
            rn_hat: CMatrix::zeros(m, m),
            residual_without: residual.clone(),
            residual,
            g_n: g,
            stderr: 0.0,
            stderr_without: 0.0,
            rn_stderr: 0.0,
            controls: 0,
        });
    }
    let with_rn = kappa4 != 0.0;
    let detail = if with_rn { BlockDetail::Diagonal } else { BlockDetail::None };
    let ensemble = Ensemble::Wigner(*dist);
    let fit = observe(pencil, &ensemble, lambda, n, replicas, seed, detail, |stats| {
        let mut t = Vec::with_capacity(4 * m * m);
        pack(&stats.h, &mut t);
        if with_rn {
            let blocks = stats.diagonal_blocks.as_ref().expect("diagonal blocks requested");
            pack(&rn_sample(pencil, blocks, kappa4), &mut t);
        }
        t
    })?;
    let h_len = 2 * m * m;
    let g = unpack(&fit.mean[..h_len], m, m);
    let rn = if with_rn { unpack(&fit.mean[h_len..], m, m) } else { CMatrix::zeros(m, m) };
    let residual_without = master_lhs(pencil, lam, &g);
    let residual = &residual_without + &rn / C64::from(n as f64);

    // derivative of the left side in the direction of a Gn perturbation
    let dlhs = |dg: &CMatrix| {
        let mut out = (pencil.a0() - lam) * dg;
        for a in pencil.generators() {
            out += a * dg * a * &g + a * &g * a * dg;
        }
        out
    };
    let packed = |x: &CMatrix| {
        let mut v = Vec::new();
        pack(x, &mut v);
        v
    };
    let stderr_without = fit.stderr_of(|e| packed(&dlhs(&unpack(&e[..h_len], m, m))));
    let (stderr, rn_stderr) = if with_rn {
        let s = fit.stderr_of(|e| {
            let d = dlhs(&unpack(&e[..h_len], m, m)) + unpack(&e[h_len..], m, m) / C64::from(n as f64);
            packed(&d)
        });
        (s, fit.stderr_of(|e| e[h_len..].to_vec()))
    } else {
        (stderr_without, 0.0)
    };
    Ok(MasterResidualReport {
        n,
        replicas,
        seed,
        g_n: g,
        rn_hat: rn,
        residual,
        residual_without,
        stderr,
        stderr_without,
        rn_stderr,
        controls: fit.controls,
    })
}

/// Master residuals across `n`, with slopes for both residual variants.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterScaling {
    pub reports: Vec<MasterResidualReport>,
    pub with_rn: ScalingReport,
    pub without_rn: ScalingReport,
}

/// Runs [`master_residual_iid`] at each `n`, with per-`n` seeds derived from `seed`.
pub fn master_residual_iid_scaling(
    pencil: &CoefficientPencil,
    dist: &EntryDistribution,
    lambda: &SpectralParameter,
    n_values: &[usize],
    replicas: usize,
    seed: u64,
) -> Result<MasterScaling> {
    let reports = n_values
        .iter()
        .map(|&n| master_residual_iid(pencil, dist, lambda, n, replicas, derive_seed(seed, n as u64)))
        .collect::<Result<Vec<_>>>()?;
    let with_rn = ScalingReport::new(
        reports
            .iter()
            .map(|r| ScalingPoint {
                n: r.n,
                value: r.residual_norm(),
                stderr: r.stderr,
            })
            .collect(),
    )?;
    let without_rn = ScalingReport::new(
        reports
            .iter()
            .map(|r| ScalingPoint {
                n: r.n,
                value: r.residual_without_norm(),
                stderr: r.stderr_without,
            })
            .collect(),
    )?;
    Ok(MasterScaling {
        reports,
        with_rn,
        without_rn,
    })
}

/// The invertibility branch: `‖Im(λ)⁻¹‖ < 1/(2 max‖al‖)` or every `al` invertible.
fn wishart_branch(pencil: &CoefficientPencil, lambda: &SpectralParameter) -> Result<()> {
    let max_a = pencil.generators().iter().map(op_norm).fold(0.0, f64::max);
    if max_a == 0.0 || lambda.im_inv_norm() < 0.5 / max_a {
        return Ok(());
    }
    let all_invertible = pencil.generators().iter().all(|a| {
        let sv = a.clone().singular_values();
        sv.min() > 1e-12 * sv.max()
    });
    if all_invertible {
        return Ok(());
    }
    Err(Error::Precondition(format!(
        "||Im(lambda)^-1|| = {} must be < 1/(2 max_l ||a_l||) = {} when some a_l is singular",
        lambda.im_inv_norm(),
        0.5 / max_a
    )))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WishartResidualReport {
    pub n: usize,
    pub p: usize,
    pub replicas: usize,
    pub seed: u64,
    pub g_n: CMatrix,
    /// `(λ − a0) Gn − (p/n) Σ_l (1 − al Gn)⁻¹ al Gn − 1`.
    pub residual: CMatrix,
    pub stderr: f64,
    pub controls: usize,
}

impl WishartResidualReport {
    pub fn residual_norm(&self) -> f64 {
        frobenius(&self.residual)
    }
}

/// Residual of the Wishart master inequality with `Gn` estimated by controlled replica means.
pub fn master_residual_wishart(
    pencil: &CoefficientPencil,
    alpha: f64,
    lambda: &SpectralParameter,
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<WishartResidualReport> {
    check_common(pencil, lambda, n, replicas)?;
    let ensemble = Ensemble::wishart(alpha)?;
    wishart_branch(pencil, lambda)?;
    let spec = WishartSpec::new(n, alpha)?;
    let ratio = spec.p as f64 / n as f64;
    let m = pencil.m();
    let lam = lambda.lambda();
    let eye = identity(m);

    let (g, fit) = if is_deterministic(pencil) {
        (inverse(&(lam - pencil.a0()))?, None)
    } else {
        let fit = observe(pencil, &ensemble, lambda, n, replicas, seed, BlockDetail::None, |stats| {
            let mut t = Vec::with_capacity(2 * m * m);
            pack(&stats.h, &mut t);
            t
        })?;
        (unpack(&fit.mean, m, m), Some(fit))
    };
    let inverses = pencil
        .generators()
        .iter()
        .map(|a| inverse(&(&eye - a * &g)))
        .collect::<Result<Vec<_>>>()?;
    let mut residual = (lam - pencil.a0()) * &g - &eye;
    for (a, inv) in pencil.generators().iter().zip(&inverses) {
        residual -= inv * a * &g * C64::from(ratio);
    }
    let stderr = match &fit {
        None => 0.0,
        Some(fit) => fit.stderr_of(|e| {
            let dg = unpack(e, m, m);
            let mut d = (lam - pencil.a0()) * &dg;
            for (a, inv) in pencil.generators().iter().zip(&inverses) {
                // d[(1 − aG)⁻¹ a G] = (1 − aG)⁻¹ a dG (1 − aG)⁻¹
                d -= inv * a * &dg * inv * C64::from(ratio);
            }
            let mut v = Vec::new();
            pack(&d, &mut v);
            v
        }),
    };
    Ok(WishartResidualReport {
        n,
        p: spec.p,
        replicas,
        seed,
        g_n: g,
        residual,
        stderr,
        controls: fit.map_or(0, |f| f.controls),
    })
}

pub fn master_residual_wishart_scaling(
    pencil: &CoefficientPencil,
    alpha: f64,
    lambda: &SpectralParameter,
    n_values: &[usize],
    replicas: usize,
    seed: u64,
) -> Result<(Vec<WishartResidualReport>, ScalingReport)> {
    let reports = n_values
        .iter()
        .map(|&n| master_residual_wishart(pencil, alpha, lambda, n, replicas, derive_seed(seed, n as u64)))
        .collect::<Result<Vec<_>>>()?;
    let scaling = ScalingReport::new(
        reports
            .iter()
            .map(|r| ScalingPoint {
                n: r.n,
                value: r.residual_norm(),
                stderr: r.stderr,
            })
            .collect(),
    )?;
    Ok((reports, scaling))
}

fn semicircular_g(pencil: &CoefficientPencil, lambda: &SpectralParameter) -> Result<CMatrix> {
    let sol = solve_g(pencil, FreeModel::Semicircular, lambda, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    if !sol.converged {
        return Err(Error::SolverFailure(format!("G(λ) did not converge (residual {:e})", sol.residual_norm)));
    }
    Ok(sol.g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionPoint {
    pub n: usize,
    /// `n (Gn − G)`.
    pub scaled_difference: CMatrix,
    /// Standard error of `n (Gn − G)` (Frobenius).
    pub scaled_stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionReport {
    pub g: CMatrix,
    pub l: CMatrix,
    pub kappa4: f64,
    pub points: Vec<CorrectionPoint>,
    /// `‖n(Gn − G) − L‖` against `n`.
    pub scaling: ScalingReport,
    /// Values strictly decrease along `n_values`.
    pub decreasing: bool,
    /// Some point's standard error is at least a third of its value.
    pub inconclusive: bool,
}

/// Compares `n (Gn − G)` with the first-order correction `L(λ)` across `n_values`.
pub fn correction_check(
    pencil: &CoefficientPencil,
    dist: &EntryDistribution,
    lambda: &SpectralParameter,
    n_values: &[usize],
    replicas: usize,
    seed: u64,
) -> Result<CorrectionReport> {
    let m = pencil.m();
    let kappa4 = dist.kappa4();
    let term = corrections(pencil, lambda, kappa4, DEFAULT_TOL)?;
    let g = semicircular_g(pencil, lambda)?;
    let ensemble = Ensemble::Wigner(*dist);
    let mut points = Vec::new();
    let mut scaled_points = Vec::new();
    for &n in n_values {
        check_common(pencil, lambda, n, replicas)?;
        let nf = n as f64;
        let (gn, se) = if is_deterministic(pencil) {
            (inverse(&(lambda.lambda() - pencil.a0()))?, 0.0)
        } else {
            let fit = observe(pencil, &ensemble, lambda, n, replicas, derive_seed(seed, n as u64), BlockDetail::None, |s| {
                let mut t = Vec::new();
                pack(&s.h, &mut t);
                t
            })?;
            let se = fit.stderr_of(|e| e.to_vec());
            (unpack(&fit.mean, m, m), se)
        };
        let scaled = (&gn - &g) * C64::from(nf);
        scaled_points.push(ScalingPoint {
            n,
            value: frobenius(&(&scaled - &term.l)),
            stderr: nf * se,
        });
        points.push(CorrectionPoint {
            n,
            scaled_difference: scaled,
            scaled_stderr: nf * se,
        });
    }
    let scaling = ScalingReport::new(scaled_points)?;
    Ok(CorrectionReport {
        decreasing: scaling.decreasing(),
        inconclusive: !scaling.resolved(),
        g,
        l: term.l,
        kappa4,
        points,
        scaling,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockAverageReport {
    pub n: usize,
    /// Estimate of `E[(1/n) Σ_k Bkk a Bkk]`.
    pub d_mean: CMatrix,
    /// `G a G`.
    pub gag: CMatrix,
    pub deviation: f64,
    pub stderr: f64,
}

/// `E[(1/n) Σ_k (λ⊗1 − Sn)⁻¹_kk a (λ⊗1 − Sn)⁻¹_kk]` against `G a G`.
pub fn block_average_check(
    pencil: &CoefficientPencil,
    dist: &EntryDistribution,
    a: &CMatrix,
    lambda: &SpectralParameter,
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<BlockAverageReport> {
    check_common(pencil, lambda, n, replicas)?;
    let m = pencil.m();
    if a.shape() != (m, m) {
        return Err(Error::DimensionMismatch(format!("a is {:?}, expected {m}x{m}", a.shape())));
    }
    let g = semicircular_g(pencil, lambda)?;
    let gag = &g * a * &g;
    let (d_mean, stderr) = if is_deterministic(pencil) {
        let b = inverse(&(lambda.lambda() - pencil.a0()))?;
        (&b * a * &b, 0.0)
    } else {
        let ensemble = Ensemble::Wigner(*dist);
        let fit = observe(pencil, &ensemble, lambda, n, replicas, seed, BlockDetail::Diagonal, |s| {
            let blocks = s.diagonal_blocks.as_ref().expect("diagonal blocks requested");
            let mut d = CMatrix::zeros(m, m);
            for b in blocks {
                d += b * a * b;
            }
            d /= C64::from(blocks.len() as f64);
            let mut t = Vec::new();
            pack(&d, &mut t);
            t
        })?;
        (unpack(&fit.mean, m, m), fit.stderr_of(|e| e.to_vec()))
    };
    Ok(BlockAverageReport {
        n,
        deviation: frobenius(&(&d_mean - &gag)),
        d_mean,
        gag,
        stderr,
    })
}

pub fn block_average_scaling(
    pencil: &CoefficientPencil,
    dist: &EntryDistribution,
    a: &CMatrix,
    lambda: &SpectralParameter,
    n_values: &[usize],
    replicas: usize,
    seed: u64,
) -> Result<(Vec<BlockAverageReport>, ScalingReport)> {
    let reports = n_values
        .iter()
        .map(|&n| block_average_check(pencil, dist, a, lambda, n, replicas, derive_seed(seed, n as u64)))
        .collect::<Result<Vec<_>>>()?;
    let scaling = ScalingReport::new(
        reports
            .iter()
            .map(|r| ScalingPoint {
                n: r.n,
                value: r.deviation,
                stderr: r.stderr,
            })
            .collect(),
    )?;
    Ok((reports, scaling))
}
