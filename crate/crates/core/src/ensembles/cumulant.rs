//! Monte Carlo check of the cumulant expansion
//! `E[ξ φ(ξ)] = Σ_{a=0}^{p} κ_{a+1}/a! · E[φ^{(a)}(ξ)] + remainder`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::C64;

use super::EntryDistribution;

/// A smooth scalar test function with closed-form derivatives.
pub trait TestFunction: Sync {
    /// `φ(t), φ'(t), …, φ^{(order)}(t)`.
    fn derivatives(&self, t: f64, order: usize) -> Vec<C64>;
    /// `sup_t |φ^{(order)}(t)|`.
    fn sup_derivative(&self, order: usize) -> f64;
}

/// `φ(t) = 1/(z − t)` with `Im z ≠ 0`: `φ^{(k)}(t) = k!/(z − t)^{k+1}`.
#[derive(Debug, Clone, Copy)]
pub struct ResolventTestFunction {
    pub z: C64,
}

impl TestFunction for ResolventTestFunction {
    fn derivatives(&self, t: f64, order: usize) -> Vec<C64> {
        let base = (self.z - t).inv();
        let mut out = Vec::with_capacity(order + 1);
        let mut cur = base;
        for k in 0..=order {
            out.push(cur);
            cur = cur * base * (k as f64 + 1.0);
        }
        out
    }

    fn sup_derivative(&self, order: usize) -> f64 {
        let fact: f64 = (1..=order).map(|k| k as f64).product();
        fact / self.z.im.abs().powi(order as i32 + 1)
    }
}

/// `φ ≡ c`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantTestFunction(pub C64);

impl TestFunction for ConstantTestFunction {
    fn derivatives(&self, _t: f64, order: usize) -> Vec<C64> {
        let mut out = vec![C64::default(); order + 1];
        out[0] = self.0;
        out
    }

    fn sup_derivative(&self, order: usize) -> f64 {
        if order == 0 {
            self.0.norm()
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CumulantReport {
    pub value: C64,
    /// Combined standard error of the real and imaginary parts.
    pub stderr: f64,
    /// `sup|φ^{(p+1)}| · E|ξ|^{p+2}`.
    pub bound: f64,
    pub samples: usize,
    pub order: usize,
}

/// Estimates `E[ξφ(ξ)] − Σ_{a=0}^{p} κ_{a+1}/a! E[φ^{(a)}(ξ)]` from `num_samples` draws.
///
/// With `max_stderr` set, a run whose standard error exceeds it is rejected.
pub fn cumulant_expansion_check<R: Rng + ?Sized>(
    dist: &EntryDistribution,
    phi: &dyn TestFunction,
    order: usize,
    num_samples: usize,
    rng: &mut R,
    max_stderr: Option<f64>,
) -> Result<CumulantReport> {
    if order > 5 {
        return Err(Error::InvalidArgument(format!(
            "expansion order {order} exceeds the supported maximum of 5"
        )));
    }
    if num_samples < 2 {
        return Err(Error::InsufficientSamples("need at least two samples".into()));
    }
    let coeffs: Vec<f64> = (0..=order)
        .map(|a| {
            let fact: f64 = (1..=a).map(|k| k as f64).product();
            dist.cumulant(a as u32 + 1) / fact
        })
        .collect();
    let (mut sum, mut sum_sq_re, mut sum_sq_im) = (C64::default(), 0.0, 0.0);
    for _ in 0..num_samples {
        let xi = dist.sample(rng);
        let d = phi.derivatives(xi, order);
        let mut v = d[0] * xi;
        for (a, c) in coeffs.iter().enumerate() {
            v -= d[a] * *c;
        }
        sum += v;
        sum_sq_re += v.re * v.re;
        sum_sq_im += v.im * v.im;
    }
    let nf = num_samples as f64;
    let mean = sum / nf;
    let var_re = (sum_sq_re / nf - mean.re * mean.re).max(0.0) * nf / (nf - 1.0);
    let var_im = (sum_sq_im / nf - mean.im * mean.im).max(0.0) * nf / (nf - 1.0);
    let stderr = ((var_re + var_im) / nf).sqrt();
    if let Some(limit) = max_stderr {
        if stderr > limit {
            return Err(Error::InsufficientSamples(format!(
                "standard error {stderr:e} exceeds the requested {limit:e} with {num_samples} samples"
            )));
        }
    }
    Ok(CumulantReport {
        value: mean,
        stderr,
        bound: phi.sup_derivative(order + 1) * dist.abs_moment(order as f64 + 2.0),
        samples: num_samples,
        order,
    })
}
