//! Entry laws, Wigner and Wishart samplers, and reproducible random streams.

mod cumulant;
mod moments;
mod quadrature;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{c, gram, CMatrix, C64};

pub use cumulant::{
    cumulant_expansion_check, ConstantTestFunction, CumulantReport, ResolventTestFunction,
    TestFunction,
};
pub use moments::{wigner_trace_moment, wishart_trace_moment, WignerMoments};
pub use quadrature::integrate;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistributionKind {
    Gaussian,
    /// Uniform on `[−√3, √3]`.
    UniformSymmetric,
    /// Density proportional to `exp(−|x|^α)`, `α ≥ 1`, rescaled to unit variance.
    ExpPower { alpha: f64 },
}

/// A symmetric, unit-variance entry law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryDistribution {
    kind: DistributionKind,
    /// Multiplies the unnormalized variable to give unit variance.
    scale: f64,
    kappa4: f64,
    /// `∫_0^∞ exp(−t^α) dt`, the normalizer of the unscaled exp_power law.
    norm0: f64,
}

/// `∫_0^∞ t^q exp(−t^α) dt`.
fn exp_power_integral(q: f64, alpha: f64) -> f64 {
    let upper = 60f64.powf(1.0 / alpha) * (1.0 + q / 10.0);
    integrate(&|t: f64| if t == 0.0 { if q == 0.0 { 1.0 } else { 0.0 } } else { t.powf(q) * (-t.powf(alpha)).exp() }, 0.0, upper, 1e-13)
}

impl EntryDistribution {
    pub fn gaussian() -> Self {
        EntryDistribution {
            kind: DistributionKind::Gaussian,
            scale: 1.0,
            kappa4: 0.0,
            norm0: 0.0,
        }
    }

    pub fn uniform() -> Self {
        EntryDistribution {
            kind: DistributionKind::UniformSymmetric,
            scale: 3f64.sqrt(),
            kappa4: -1.2,
            norm0: 0.0,
        }
    }

    /// Normalization constants come from quadrature, computed once here.
    pub fn exp_power(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha < 1.0 {
            return Err(Error::InvalidArgument(format!(
                "exp_power exponent must be >= 1, got {alpha}"
            )));
        }
        let i0 = exp_power_integral(0.0, alpha);
        let i2 = exp_power_integral(2.0, alpha);
        let i4 = exp_power_integral(4.0, alpha);
        Ok(EntryDistribution {
            kind: DistributionKind::ExpPower { alpha },
            scale: (i0 / i2).sqrt(),
            kappa4: i4 * i0 / (i2 * i2) - 3.0,
            norm0: i0,
        })
    }

    pub fn kind(&self) -> DistributionKind {
        self.kind
    }

    pub fn kappa4(&self) -> f64 {
        self.kappa4
    }

    /// All shipped laws satisfy a Poincaré inequality.
    pub fn poincare(&self) -> bool {
        true
    }

    /// `E|ξ|^q` for real `q ≥ 0`.
    pub fn abs_moment(&self, q: f64) -> f64 {
        match self.kind {
            DistributionKind::Gaussian => {
                // 2^{q/2} Γ((q+1)/2) / √π
                let t = integrate(&|x: f64| x.powf(q) * (-0.5 * x * x).exp(), 0.0, 40.0 + q, 1e-14);
                2.0 * t / (2.0 * std::f64::consts::PI).sqrt()
            }
            DistributionKind::UniformSymmetric => 3f64.powf(q / 2.0) / (q + 1.0),
            DistributionKind::ExpPower { alpha } => {
                self.scale.powf(q) * exp_power_integral(q, alpha) / self.norm0
            }
        }
    }

    /// `E ξ^k`; zero for odd `k`.
    pub fn moment(&self, k: u32) -> f64 {
        if k % 2 == 1 {
            return 0.0;
        }
        match self.kind {
            DistributionKind::Gaussian => (1..k).step_by(2).map(f64::from).product(),
            _ => self.abs_moment(k as f64),
        }
    }

    /// Cumulants `κ1..κ6`; higher orders are not needed anywhere.
    pub fn cumulant(&self, k: u32) -> f64 {
        match k {
            1 | 3 | 5 => 0.0,
            2 => 1.0,
            4 => self.kappa4,
            6 => match self.kind {
                DistributionKind::Gaussian => 0.0,
                _ => self.moment(6) - 15.0 * self.moment(4) + 30.0,
            },
            _ => panic!("cumulant of order {k} is not supported"),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            DistributionKind::Gaussian => rng.sample(StandardNormal),
            DistributionKind::UniformSymmetric => self.scale * rng.random_range(-1.0..1.0),
            DistributionKind::ExpPower { alpha } => {
                // |ξ|^α ~ Gamma(1/α)
                let g: f64 = Gamma::new(1.0 / alpha, 1.0).unwrap().sample(rng);
                let magnitude = self.scale * g.powf(1.0 / alpha);
                if rng.random::<bool>() {
                    magnitude
                } else {
                    -magnitude
                }
            }
        }
    }
}

impl FromStr for EntryDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gaussian" => Ok(Self::gaussian()),
            "uniform" => Ok(Self::uniform()),
            other => match other.strip_prefix("exp_power:") {
                Some(a) => {
                    let alpha: f64 = a
                        .trim()
                        .parse()
                        .map_err(|_| Error::UnknownDistribution(other.to_string()))?;
                    Self::exp_power(alpha)
                }
                None => Err(Error::UnknownDistribution(other.to_string())),
            },
        }
    }
}

impl fmt::Display for EntryDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            DistributionKind::Gaussian => write!(f, "gaussian"),
            DistributionKind::UniformSymmetric => write!(f, "uniform"),
            DistributionKind::ExpPower { alpha } => write!(f, "exp_power:{alpha}"),
        }
    }
}

/// A reproducible random stream: ChaCha8 keyed by `master_seed`, on stream `stream_id`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        RngStream {
            master_seed,
            stream_id,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// SplitMix64 finalizer, used to derive sub-seeds such as one per matrix size.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = (seed ^ tag.rotate_left(32)).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hermitian `n x n` Wigner matrix: `√n X_ii ~ μ`, `√(2n) Re X_ij, √(2n) Im X_ij ~ μ`.
pub fn sample_wigner<R: Rng + ?Sized>(dist: &EntryDistribution, n: usize, rng: &mut R) -> CMatrix {
    let diag = 1.0 / (n as f64).sqrt();
    let off = 1.0 / (2.0 * n as f64).sqrt();
    let mut x = CMatrix::zeros(n, n);
    for i in 0..n {
        x[(i, i)] = c(diag * dist.sample(rng), 0.0);
        for j in i + 1..n {
            let z = c(off * dist.sample(rng), off * dist.sample(rng));
            x[(i, j)] = z;
            x[(j, i)] = z.conj();
        }
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WishartSpec {
    pub n: usize,
    pub p: usize,
    pub alpha: f64,
}

impl WishartSpec {
    /// `p = round(α n)`.
    pub fn new(n: usize, alpha: f64) -> Result<Self> {
        if n == 0 || !alpha.is_finite() || alpha < 1.0 {
            return Err(Error::InvalidArgument(format!(
                "Wishart spec needs n >= 1 and alpha >= 1 (n = {n}, alpha = {alpha})"
            )));
        }
        let p = (alpha * n as f64).round() as usize;
        Self::with_p(n, p.max(n))
    }

    pub fn with_p(n: usize, p: usize) -> Result<Self> {
        if n == 0 || p < n {
            return Err(Error::InvalidArgument(format!(
                "Wishart spec needs 1 <= n <= p (n = {n}, p = {p})"
            )));
        }
        Ok(WishartSpec {
            n,
            p,
            alpha: p as f64 / n as f64,
        })
    }

    /// `|p/n − α|` for a requested rate.
    pub fn ratio_error(&self, requested_alpha: f64) -> f64 {
        (self.p as f64 / self.n as f64 - requested_alpha).abs()
    }
}

/// `Y = X*X / n` with `X` a `p x n` matrix of standard complex Gaussians.
pub fn sample_wishart<R: Rng + ?Sized>(spec: &WishartSpec, rng: &mut R) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut x = CMatrix::zeros(spec.p, spec.n);
    for i in 0..spec.p {
        for j in 0..spec.n {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            x[(i, j)] = c(s * re, s * im);
        }
    }
    let mut y = gram(&x) / C64::from(spec.n as f64);
    // exact Hermitian symmetry
    for i in 0..spec.n {
        y[(i, i)].im = 0.0;
        for j in i + 1..spec.n {
            y[(j, i)] = y[(i, j)].conj();
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplace_kappa4_is_three() {
        let d = EntryDistribution::exp_power(1.0).unwrap();
        assert!((d.kappa4() - 3.0).abs() < 1e-10);
        assert!((d.moment(2) - 1.0).abs() < 1e-12);
        let g = EntryDistribution::exp_power(2.0).unwrap();
        assert!(g.kappa4().abs() < 1e-10);
    }

    #[test]
    fn parse_and_display() {
        for s in ["gaussian", "uniform", "exp_power:1.5"] {
            assert_eq!(s.parse::<EntryDistribution>().unwrap().to_string(), s);
        }
        assert!(matches!(
            "rademacher".parse::<EntryDistribution>(),
            Err(Error::UnknownDistribution(_))
        ));
        assert!("exp_power:0.5".parse::<EntryDistribution>().is_err());
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| 0).scan(RngStream::new(7, 3).rng(), |r, _| Some(r.random())).collect();
        let b: Vec<u64> = (0..4).map(|_| 0).scan(RngStream::new(7, 3).rng(), |r, _| Some(r.random())).collect();
        let c: Vec<u64> = (0..4).map(|_| 0).scan(RngStream::new(7, 4).rng(), |r, _| Some(r.random())).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn wishart_p_rounding() {
        let s = WishartSpec::new(30, 1.5).unwrap();
        assert_eq!(s.p, 45);
        assert!(WishartSpec::with_p(30, 29).is_err());
        assert!(WishartSpec::new(10, 0.5).is_err());
    }
}
