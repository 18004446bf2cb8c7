//! Variance scaling, the Wishart integration-by-parts identity, spectrum
//! containment and norm convergence.

use rayon::prelude::*;

use crate::ensembles::{derive_seed, sample_wishart, RngStream, WishartSpec};
use crate::error::{Error, Result};
use crate::freeprob::{norm_prediction, spectral_edges, SpectralParameter, DEFAULT_TOL};
use crate::linalg::{gram, hermitian_eigenvalues, inverse, matmul, solve, trace_of_product, CMatrix, C64};
use crate::ncpoly::{CoefficientPencil, NCPolynomial, Word};

use super::{is_deterministic, replicate, resolvent_impl, sample_generators, BlockDetail, BlockOperator, Ensemble, ScalingPoint, ScalingReport};

const MAX_WORD_LENGTH: usize = 6;
const MIN_VARIANCE_REPLICAS: usize = 50;

/// Sample variance `Σ|x − x̄|²/(R − 1)` and its standard error.
fn variance_point(n: usize, samples: &[C64]) -> ScalingPoint {
    let r = samples.len() as f64;
    let mean = samples.iter().sum::<C64>() / r;
    let d: Vec<f64> = samples.iter().map(|x| (x - mean).norm_sqr()).collect();
    let v = d.iter().sum::<f64>() / (r - 1.0);
    let spread = d.iter().map(|x| (x - v).powi(2)).sum::<f64>() / (r - 1.0);
    ScalingPoint {
        n,
        value: v,
        stderr: (spread / r).sqrt(),
    }
}

fn check_variance_args(n_values: &[usize], replicas: usize) -> Result<()> {
    if replicas < MIN_VARIANCE_REPLICAS {
        return Err(Error::InvalidArgument(format!(
            "variance checks need at least {MIN_VARIANCE_REPLICAS} replicas, got {replicas}"
        )));
    }
    if n_values.contains(&0) {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    Ok(())
}

/// `V[tr_n w(X1, …, Xr)]` across `n_values`; generators are 0-based letters of `word`.
pub fn word_trace_variance(
    word: &Word,
    ensemble: &Ensemble,
    n_values: &[usize],
    replicas: usize,
    seed: u64,
) -> Result<ScalingReport> {
    check_variance_args(n_values, replicas)?;
    let letters = &word.0;
    if letters.len() > MAX_WORD_LENGTH {
        return Err(Error::InvalidArgument(format!(
            "word length {} exceeds {MAX_WORD_LENGTH}",
            letters.len()
        )));
    }
    let r = letters.iter().max().map_or(0, |g| g + 1);
    let mut points = Vec::new();
    for &n in n_values {
        let samples = if letters.is_empty() {
            vec![C64::from(1.0); replicas]
        } else {
            replicate(derive_seed(seed, n as u64), replicas, |rng| {
                let xs = sample_generators(ensemble, r, n, rng)?;
                let (&last, inner) = letters.split_last().expect("non-empty word");
                let tr = match inner.split_first() {
                    None => xs[last].trace(),
                    Some((&first, middle)) => {
                        let mut prod = xs[first].clone();
                        for &g in middle {
                            prod = matmul(&prod, &xs[g]);
                        }
                        trace_of_product(&prod, &xs[last])
                    }
                };
                Ok(tr / n as f64)
            })?
        };
        points.push(variance_point(n, &samples));
    }
    ScalingReport::new(points)
}

/// `V[Hn(λ)_ij]` across `n_values`.
pub fn resolvent_entry_variance(
    pencil: &CoefficientPencil,
    ensemble: &Ensemble,
    lambda: &SpectralParameter,
    entry: (usize, usize),
    n_values: &[usize],
    replicas: usize,
    seed: u64,
) -> Result<ScalingReport> {
    check_variance_args(n_values, replicas)?;
    let m = pencil.m();
    if entry.0 >= m || entry.1 >= m {
        return Err(Error::InvalidArgument(format!("entry {entry:?} outside a {m}x{m} matrix")));
    }
    let mut points = Vec::new();
    for &n in n_values {
        let samples = replicate(derive_seed(seed, n as u64), replicas, |rng| {
            let xs = sample_generators(ensemble, pencil.r(), n, rng)?;
            Ok(resolvent_impl(pencil, &xs, lambda, BlockDetail::None, false)?.0.h[entry])
        })?;
        points.push(variance_point(n, &samples));
    }
    ScalingReport::new(points)
}

/// Test functions for the Wishart integration-by-parts identity.
#[derive(Debug, Clone, PartialEq)]
pub enum IbpFunction {
    /// `Φ ≡ 0`.
    Zero,
    /// `Φ(Y) = Tr(Y A)`.
    TraceAgainst(CMatrix),
    /// `Φ(Y) = (z − Y)⁻¹_jk − (z − 0)⁻¹_jk`, `Im z ≥ 1`.
    ResolventEntry { z: C64, j: usize, k: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IbpReport {
    pub n: usize,
    pub p: usize,
    pub replicas: usize,
    pub seed: u64,
    /// Monte Carlo value of `E[Φ'(Y).H] − n E[Φ(Y) Tr H] + (p − n) E[Φ(Y) Tr(Y⁻¹H)]`.
    pub value: C64,
    pub stderr: f64,
    /// `|value| ≤ 4 stderr`.
    pub passes: bool,
}

/// `H = E_jk + E_kj` (or `E_jj` when `j = k`) as an `n x n` direction.
pub fn hermitian_direction(n: usize, j: usize, k: usize) -> CMatrix {
    let mut h = CMatrix::zeros(n, n);
    h[(j, k)] = C64::from(1.0);
    h[(k, j)] = C64::from(1.0);
    h
}

/// Checks the Wishart differentiation formula by direct Monte Carlo.
///
/// Requires `p ≥ n + 2`: for `p ∈ {n, n + 1}` the `Tr(Y⁻¹H)` term has
/// infinite variance (or mean) and the estimate is meaningless.
pub fn wishart_ibp_check(
    spec: &WishartSpec,
    phi: &IbpFunction,
    h: &CMatrix,
    replicas: usize,
    seed: u64,
) -> Result<IbpReport> {
    let (n, p) = (spec.n, spec.p);
    if p < n + 2 {
        return Err(Error::Precondition(format!(
            "the integration-by-parts check needs p >= n + 2 (n = {n}, p = {p})"
        )));
    }
    if replicas < 2 {
        return Err(Error::InvalidArgument(format!("replicas = {replicas}; at least 2 are needed")));
    }
    if h.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!("H is {:?}, expected {n}x{n}", h.shape())));
    }
    match phi {
        IbpFunction::Zero => {
            return Ok(IbpReport {
                n,
                p,
                replicas,
                seed,
                value: C64::default(),
                stderr: 0.0,
                passes: true,
            })
        }
        IbpFunction::TraceAgainst(a) if a.shape() != (n, n) => {
            return Err(Error::DimensionMismatch(format!("A is {:?}, expected {n}x{n}", a.shape())));
        }
        IbpFunction::ResolventEntry { z, j, k } => {
            if z.im < 1.0 {
                return Err(Error::InvalidArgument(format!("Im z = {} must be >= 1", z.im)));
            }
            if *j >= n || *k >= n {
                return Err(Error::InvalidArgument(format!("entry ({j}, {k}) outside {n}x{n}")));
            }
        }
        _ => {}
    }
    let tr_h = h.trace();
    let samples = replicate(seed, replicas, |rng| {
        let y = sample_wishart(spec, rng);
        let (value, derivative) = match phi {
            IbpFunction::TraceAgainst(a) => (trace_of_product(&y, a), trace_of_product(h, a)),
            IbpFunction::ResolventEntry { z, j, k } => {
                let res = inverse(&(CMatrix::from_diagonal_element(n, n, *z) - &y))?;
                let at_zero = if j == k { z.inv() } else { C64::default() };
                let dh = &res * h * &res;
                (res[(*j, *k)] - at_zero, dh[(*j, *k)])
            }
            IbpFunction::Zero => unreachable!(),
        };
        let tr_yinv_h = solve(&y, h)?.trace();
        Ok(derivative - value * tr_h * n as f64 + value * tr_yinv_h * (p - n) as f64)
    })?;
    let r = samples.len() as f64;
    let mean = samples.iter().sum::<C64>() / r;
    let var = samples.iter().map(|x| (x - mean).norm_sqr()).sum::<f64>() / (r - 1.0);
    let stderr = (var / r).sqrt();
    Ok(IbpReport {
        n,
        p,
        replicas,
        seed,
        value: mean,
        stderr,
        passes: mean.norm() <= 4.0 * stderr,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContainmentSample {
    pub seed: u64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// Largest distance from an eigenvalue of `Sn` to the predicted support.
    pub max_excursion: f64,
    pub contained: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContainmentReport {
    pub n: usize,
    pub epsilon: f64,
    pub support: Vec<(f64, f64)>,
    pub samples: Vec<ContainmentSample>,
    pub pass_rate: f64,
}

fn distance_to_support(x: f64, support: &[(f64, f64)]) -> f64 {
    support
        .iter()
        .map(|&(lo, hi)| (lo - x).max(x - hi).max(0.0))
        .fold(f64::INFINITY, f64::min)
}

/// Whether `sp(Sn)` lies in the `ε`-neighbourhood of the predicted support, per seed.
pub fn spectrum_containment(
    pencil: &CoefficientPencil,
    ensemble: &Ensemble,
    n: usize,
    epsilon: f64,
    seeds: &[u64],
) -> Result<ContainmentReport> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon = {epsilon} must be positive")));
    }
    if seeds.is_empty() || n == 0 {
        return Err(Error::InvalidArgument("need n > 0 and at least one seed".into()));
    }
    let support = if is_deterministic(pencil) {
        hermitian_eigenvalues(pencil.a0()).into_iter().map(|e| (e, e)).collect()
    } else {
        spectral_edges(pencil, ensemble.model(), DEFAULT_TOL)?
    };
    if support.is_empty() {
        return Err(Error::Density("predicted support is empty".into()));
    }
    let samples = seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = RngStream::new(derive_seed(seed, n as u64), 0).rng();
            let xs = sample_generators(ensemble, pencil.r(), n, &mut rng)?;
            let spectrum = BlockOperator::new(pencil.clone(), xs)?.spectrum();
            let max_excursion = spectrum
                .iter()
                .map(|&x| distance_to_support(x, &support))
                .fold(0.0, f64::max);
            Ok(ContainmentSample {
                seed,
                min_eigenvalue: spectrum[0],
                max_eigenvalue: spectrum[spectrum.len() - 1],
                max_excursion,
                contained: max_excursion < epsilon,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pass_rate = samples.iter().filter(|s| s.contained).count() as f64 / samples.len() as f64;
    Ok(ContainmentReport {
        n,
        epsilon,
        support,
        samples,
        pass_rate,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormPoint {
    pub n: usize,
    /// `‖p(Xn)‖` per seed, in seed order.
    pub norms: Vec<f64>,
    /// Median of `|‖p(Xn)‖ − prediction|`.
    pub median_deviation: f64,
    /// Normal-theory standard error of that median.
    pub median_stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormConvergenceReport {
    pub prediction: f64,
    pub points: Vec<NormPoint>,
    /// Medians do not increase along `n`, up to their combined standard error.
    pub non_increasing: bool,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

/// `‖P‖`: largest `|eigenvalue|` for Hermitian `P`, else `√λmax(P*P)`.
fn matrix_norm(p: &CMatrix, self_adjoint: bool) -> f64 {
    if self_adjoint {
        let e = hermitian_eigenvalues(p);
        e[0].abs().max(e[e.len() - 1].abs())
    } else {
        let e = hermitian_eigenvalues(&gram(p));
        e[e.len() - 1].max(0.0).sqrt()
    }
}

/// `‖p(Xn(1), …)‖` against the free prediction `‖p(x1, …)‖`.
pub fn norm_convergence(
    p: &NCPolynomial,
    ensemble: &Ensemble,
    n_values: &[usize],
    seeds: &[u64],
) -> Result<NormConvergenceReport> {
    if seeds.is_empty() || n_values.is_empty() || n_values.contains(&0) {
        return Err(Error::InvalidArgument("need positive n values and at least one seed".into()));
    }
    let prediction = norm_prediction(p, ensemble.model(), DEFAULT_TOL)?;
    let self_adjoint = p.is_self_adjoint();
    let r = p.num_generators();
    let mut points = Vec::new();
    for &n in n_values {
        let norms = seeds
            .par_iter()
            .map(|&seed| {
                let mut rng = RngStream::new(derive_seed(seed, n as u64), 0).rng();
                let xs = sample_generators(ensemble, r, n, &mut rng)?;
                let value = if p.degree() == 0 {
                    p.coefficient(&Word::unit()).norm()
                } else {
                    matrix_norm(&p.evaluate(&xs)?, self_adjoint)
                };
                Ok(value)
            })
            .collect::<Result<Vec<_>>>()?;
        let dev: Vec<f64> = norms.iter().map(|v| (v - prediction).abs()).collect();
        let k = dev.len() as f64;
        let mean = dev.iter().sum::<f64>() / k;
        let sd = if dev.len() > 1 {
            (dev.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        points.push(NormPoint {
            n,
            median_deviation: median(&dev),
            median_stderr: 1.2533 * sd / k.sqrt(),
            norms,
        });
    }
    let non_increasing = points.windows(2).all(|w| {
        let slack = (w[0].median_stderr.powi(2) + w[1].median_stderr.powi(2)).sqrt();
        w[1].median_deviation <= w[0].median_deviation + slack
    });
    Ok(NormConvergenceReport {
        prediction,
        points,
        non_increasing,
    })
}
