//! Control variates for replica means.
//!
//! The fluctuations of resolvent statistics are dominated by linear spectral
//! statistics of the generators, which Chebyshev traces `tr_n T_j(u)` track
//! closely. Their expectations are known exactly at finite `n` from the
//! trace moments, so regressing them out removes most of the Monte Carlo
//! noise without bias.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::{CMatrix, C64};

use super::Ensemble;

/// `tr_n T_j((x − center)/half)` for `j = 1..=degree`.
pub(crate) fn chebyshev_traces(eigs: &[f64], center: f64, half: f64, degree: usize) -> Vec<f64> {
    let mut out = vec![0.0; degree];
    for &e in eigs {
        let u = (e - center) / half;
        let (mut prev, mut cur) = (1.0, u);
        for slot in out.iter_mut() {
            *slot += cur;
            let next = 2.0 * u * cur - prev;
            prev = cur;
            cur = next;
        }
    }
    let n = eigs.len() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    out
}

/// Exact `E tr_n T_j(u)`, `j = 1..=degree`, from the monomial moments.
pub(crate) fn chebyshev_means(ensemble: &Ensemble, n: usize, center: f64, half: f64, degree: usize) -> Result<Vec<f64>> {
    let symmetric = matches!(ensemble, Ensemble::Wigner(_)) && center == 0.0;
    let mut moments = Vec::with_capacity(degree + 1);
    for k in 0..=degree as u32 {
        moments.push(if symmetric && k % 2 == 1 { 0.0 } else { ensemble.exact_trace_moment(n, k)? });
    }
    // E tr u^i = h^{−i} Σ_k C(i,k) (−c)^{i−k} E tr X^k
    let mut umom = vec![0.0; degree + 1];
    for (i, slot) in umom.iter_mut().enumerate() {
        let mut acc = 0.0;
        let mut binom = 1.0;
        for (k, mk) in moments.iter().enumerate().take(i + 1) {
            if k > 0 {
                binom *= (i + 1 - k) as f64 / k as f64;
            }
            acc += binom * (-center).powi((i - k) as i32) * mk;
        }
        *slot = acc / half.powi(i as i32);
    }
    // Chebyshev coefficients by the three-term recurrence on coefficient vectors
    let mut prev = vec![0.0; degree + 1];
    prev[0] = 1.0;
    let mut cur = vec![0.0; degree + 1];
    if degree >= 1 {
        cur[1] = 1.0;
    }
    let mut out = Vec::with_capacity(degree);
    for _ in 1..=degree {
        out.push(cur.iter().zip(&umom).map(|(a, b)| a * b).sum());
        let mut next = vec![0.0; degree + 1];
        for i in 0..degree {
            next[i + 1] += 2.0 * cur[i];
        }
        for (nx, p) in next.iter_mut().zip(&prev) {
            *nx -= p;
        }
        prev = cur;
        cur = next;
    }
    Ok(out)
}

/// Controls for `r` generators drawn from `ensemble`.
pub(crate) struct ControlDesign {
    center: f64,
    half: f64,
    degree: usize,
    pub means: Vec<f64>,
}

impl ControlDesign {
    pub fn new(ensemble: &Ensemble, n: usize, r: usize, replicas: usize) -> Result<Self> {
        let (center, half) = ensemble.control_window();
        let mut degree = ensemble.control_degree();
        // keep the regression well determined
        while degree > 0 && replicas < 4 * (r * degree + 1) {
            degree -= 1;
        }
        let one = chebyshev_means(ensemble, n, center, half, degree)?;
        let means = (0..r).flat_map(|_| one.iter().copied()).collect();
        Ok(ControlDesign {
            center,
            half,
            degree,
            means,
        })
    }

    pub fn features(&self, spectra: &[Vec<f64>]) -> Vec<f64> {
        spectra
            .iter()
            .flat_map(|e| chebyshev_traces(e, self.center, self.half, self.degree))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }
}

/// Regression-adjusted replica mean of a real target vector.
pub(crate) struct CvFit {
    pub mean: Vec<f64>,
    residuals: Vec<Vec<f64>>,
    pub controls: usize,
}

impl CvFit {
    /// `targets[r]` and `features[r]` belong to replica `r`; `means` are the exact feature expectations.
    pub fn new(targets: &[Vec<f64>], features: &[Vec<f64>], means: &[f64]) -> CvFit {
        let reps = targets.len();
        let d = targets[0].len();
        let q = means.len();
        let rf = reps as f64;
        let ybar: Vec<f64> = (0..d).map(|j| targets.iter().map(|t| t[j]).sum::<f64>() / rf).collect();
        let yc = DMatrix::from_fn(reps, d, |i, j| targets[i][j] - ybar[j]);
        if q == 0 {
            let residuals = (0..reps).map(|i| yc.row(i).iter().copied().collect()).collect();
            return CvFit {
                mean: ybar,
                residuals,
                controls: 0,
            };
        }
        let zbar: Vec<f64> = (0..q).map(|j| features.iter().map(|f| f[j]).sum::<f64>() / rf).collect();
        let scale: Vec<f64> = (0..q)
            .map(|j| {
                let v = features.iter().map(|f| (f[j] - zbar[j]).powi(2)).sum::<f64>() / rf;
                if v > 0.0 { v.sqrt() } else { 1.0 }
            })
            .collect();
        let z = DMatrix::from_fn(reps, q, |i, j| (features[i][j] - zbar[j]) / scale[j]);
        let svd = z.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let beta = svd
            .solve(&yc, smax * 1e-10)
            .unwrap_or_else(|_| DMatrix::zeros(q, d));
        let shift = DVector::from_fn(q, |j, _| (zbar[j] - means[j]) / scale[j]);
        let correction = beta.transpose() * shift;
        let mean = (0..d).map(|j| ybar[j] - correction[j]).collect();
        let fitted = &z * &beta;
        let resid = yc - fitted;
        let residuals = (0..reps).map(|i| resid.row(i).iter().copied().collect()).collect();
        CvFit {
            mean,
            residuals,
            controls: q,
        }
    }

    fn dof(&self) -> f64 {
        let r = self.residuals.len() as f64;
        r * (r - self.controls as f64 - 1.0)
    }

    /// Standard error of `L(mean)` for a linear map `L`, components combined in quadrature.
    pub fn stderr_of(&self, map: impl Fn(&[f64]) -> Vec<f64>) -> f64 {
        let s: f64 = self.residuals.iter().map(|e| map(e).iter().map(|v| v * v).sum::<f64>()).sum();
        (s / self.dof()).sqrt()
    }

    /// Per-coordinate standard errors.
    #[cfg(test)]
    pub fn coordinate_stderr(&self) -> Vec<f64> {
        let d = self.mean.len();
        (0..d)
            .map(|j| (self.residuals.iter().map(|e| e[j] * e[j]).sum::<f64>() / self.dof()).sqrt())
            .collect()
    }
}

/// Column-major `(re, im)` pairs.
pub(crate) fn pack(m: &CMatrix, out: &mut Vec<f64>) {
    for z in m.iter() {
        out.push(z.re);
        out.push(z.im);
    }
}

pub(crate) fn unpack(v: &[f64], rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |i, j| {
        let k = 2 * (j * rows + i);
        C64::new(v[k], v[k + 1])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::EntryDistribution;

    #[test]
    fn chebyshev_means_match_direct_expansion() {
        // T2(u) = 2u² − 1, T4(u) = 8u⁴ − 8u² + 1
        let e = Ensemble::Wigner(EntryDistribution::uniform());
        let n = 7;
        let h = 2.5;
        let m = chebyshev_means(&e, n, 0.0, h, 4).unwrap();
        let m2 = e.exact_trace_moment(n, 2).unwrap();
        let m4 = e.exact_trace_moment(n, 4).unwrap();
        assert!(m[0].abs() < 1e-15);
        assert!((m[1] - (2.0 * m2 / (h * h) - 1.0)).abs() < 1e-14);
        assert!((m[3] - (8.0 * m4 / h.powi(4) - 8.0 * m2 / (h * h) + 1.0)).abs() < 1e-13);

        let w = Ensemble::Wishart { alpha: 2.0 };
        let m = chebyshev_means(&w, 5, 1.5, 2.0, 1).unwrap();
        let m1 = w.exact_trace_moment(5, 1).unwrap();
        assert!((m[0] - (m1 - 1.5) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn traces_use_the_recurrence() {
        let t = chebyshev_traces(&[0.5, -1.0], 0.0, 1.0, 3);
        // T1, T2, T3 at 0.5: 0.5, −0.5, −1; at −1: −1, 1, −1
        assert!((t[0] - (-0.25)).abs() < 1e-15);
        assert!((t[1] - 0.25).abs() < 1e-15);
        assert!((t[2] - (-1.0)).abs() < 1e-15);
    }

    #[test]
    fn regression_removes_correlated_noise_without_bias() {
        // y = 3 + 2 z + small noise, E z = 0 known exactly
        let mut targets = Vec::new();
        let mut feats = Vec::new();
        let mut state = 1u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..400 {
            let z = next();
            let eps = 1e-3 * next();
            targets.push(vec![3.0 + 2.0 * z + eps]);
            feats.push(vec![z]);
        }
        let fit = CvFit::new(&targets, &feats, &[0.0]);
        let se = fit.coordinate_stderr()[0];
        assert!(se < 1e-4);
        assert!((fit.mean[0] - 3.0).abs() < 5.0 * se);
    }
}
