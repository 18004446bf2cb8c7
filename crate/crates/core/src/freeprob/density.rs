//! Stieltjes inversion: densities, supports and operator-norm predictions.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::ncpoly::{linearize, CoefficientPencil, NCPolynomial};

use super::{g_scalar, operator_norm_bound, solve_g, FreeModel, SpectralParameter, DEFAULT_MAX_ITER};

/// Density cutoff for support detection.
pub const DEFAULT_THRESHOLD: f64 = 1e-3;
/// Imaginary offset used when bisecting for support edges.
pub const DEFAULT_EDGE_ETA: f64 = 1e-7;
/// Pre-clamp values below this are flagged.
const NEGATIVITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensityEstimate {
    pub grid: Vec<f64>,
    /// Extrapolated to `y → 0⁺` and clamped at zero.
    pub density: Vec<f64>,
    pub y_levels: Vec<f64>,
    pub support: Vec<(f64, f64)>,
    pub threshold: f64,
    /// Points where the level sequence was non-monotone or the extrapolation
    /// went negative beyond tolerance.
    pub unstable: Vec<bool>,
}

impl SpectralDensityEstimate {
    /// Trapezoidal integral over the grid.
    pub fn integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, d)| 0.5 * (x[1] - x[0]) * (d[0] + d[1]))
            .sum()
    }

    /// Linear interpolation of the density at `x` (zero outside the grid).
    pub fn value_at(&self, x: f64) -> f64 {
        let g = &self.grid;
        if g.is_empty() || x < g[0] || x > g[g.len() - 1] {
            return 0.0;
        }
        let i = g.partition_point(|&t| t <= x).min(g.len() - 1);
        if i == 0 {
            return self.density[0];
        }
        let (x0, x1) = (g[i - 1], g[i]);
        if x1 == x0 {
            return self.density[i];
        }
        let t = (x - x0) / (x1 - x0);
        (1.0 - t) * self.density[i - 1] + t * self.density[i]
    }
}

/// Scalar Stieltjes transform evaluated off the axis.
type Probe<'a> = dyn Fn(C64) -> Result<C64> + Sync + 'a;

fn check_inputs(grid: &[f64], y_levels: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("grid is empty".into()));
    }
    if grid.iter().any(|x| !x.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("grid must be finite and strictly increasing".into()));
    }
    if y_levels.len() < 2 {
        return Err(Error::InvalidArgument("at least two y levels are required".into()));
    }
    if y_levels.iter().any(|&y| !(y > 0.0) || !y.is_finite())
        || y_levels.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(Error::InvalidArgument(
            "y levels must be positive and strictly decreasing".into(),
        ));
    }
    Ok(())
}

fn estimate(
    probe: &Probe<'_>,
    grid: &[f64],
    y_levels: &[f64],
    threshold: f64,
    eta: f64,
) -> Result<SpectralDensityEstimate> {
    check_inputs(grid, y_levels)?;
    let points: Vec<Result<(f64, bool)>> = grid
        .par_iter()
        .map(|&x| {
            let levels = y_levels
                .iter()
                .map(|&y| probe(C64::new(x, y)).map(|g| -g.im / PI))
                .collect::<Result<Vec<f64>>>()?;
            let k = levels.len();
            let (ya, yb) = (y_levels[k - 2], y_levels[k - 1]);
            let (da, db) = (levels[k - 2], levels[k - 1]);
            // first-order Richardson on the two finest levels
            let d0 = (ya * db - yb * da) / (ya - yb);
            let diffs: Vec<f64> = levels.windows(2).map(|w| w[1] - w[0]).collect();
            let non_monotone = diffs.iter().any(|d| *d > NEGATIVITY_TOL)
                && diffs.iter().any(|d| *d < -NEGATIVITY_TOL);
            Ok((d0, non_monotone || d0 < -NEGATIVITY_TOL))
        })
        .collect();
    let mut density = Vec::with_capacity(grid.len());
    let mut unstable = Vec::with_capacity(grid.len());
    for p in points {
        let (d, flag) = p?;
        density.push(d.max(0.0));
        unstable.push(flag);
    }
    let support = detect_support(probe, grid, &density, threshold, eta)?;
    Ok(SpectralDensityEstimate {
        grid: grid.to_vec(),
        density,
        y_levels: y_levels.to_vec(),
        support,
        threshold,
        unstable,
    })
}

/// Maximal grid runs above `threshold`, with edges bisected at `Im z = eta`.
fn detect_support(
    probe: &Probe<'_>,
    grid: &[f64],
    density: &[f64],
    threshold: f64,
    eta: f64,
) -> Result<Vec<(f64, f64)>> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &d) in density.iter().enumerate() {
        match (d > threshold, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, density.len() - 1));
    }
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    let inside = |i: usize| -> Result<bool> {
        Ok(-probe(C64::new(grid[i], eta))?.im / PI > threshold)
    };
    let at = |x: f64| -> Result<bool> { Ok(-probe(C64::new(x, eta))?.im / PI > threshold) };
    let mut support: Vec<(f64, f64)> = Vec::with_capacity(runs.len());
    for (a, b) in runs {
        // runs with no fine-scale support are smoothing artefacts
        let mut first = None;
        for i in a..=b {
            if inside(i)? {
                first = Some(i);
                break;
            }
        }
        let Some(first) = first else { continue };
        let mut last = first;
        for i in (first..=b).rev() {
            if inside(i)? {
                last = i;
                break;
            }
        }
        let mut out = first;
        let left = loop {
            if out == 0 {
                break lo;
            }
            out -= 1;
            if !inside(out)? {
                break bisect(&at, grid[out + 1], grid[out])?;
            }
        };
        let mut out = last;
        let right = loop {
            if out == grid.len() - 1 {
                break hi;
            }
            out += 1;
            if !inside(out)? {
                break bisect(&at, grid[out - 1], grid[out])?;
            }
        };
        match support.last_mut() {
            Some(prev) if left <= prev.1 => prev.1 = prev.1.max(right),
            _ => support.push((left, right)),
        }
    }
    Ok(support)
}

/// Bisection between a point inside the support and one outside.
fn bisect(inside: &dyn Fn(f64) -> Result<bool>, mut x_in: f64, mut x_out: f64) -> Result<f64> {
    for _ in 0..60 {
        if (x_out - x_in).abs() < 1e-12 {
            break;
        }
        let mid = 0.5 * (x_in + x_out);
        if inside(mid)? {
            x_in = mid;
        } else {
            x_out = mid;
        }
    }
    Ok(0.5 * (x_in + x_out))
}

/// Density of the law of `s` by extrapolating `−Im g(x + iy)/π` to `y → 0⁺`.
pub fn density(
    pencil: &CoefficientPencil,
    model: FreeModel,
    grid: &[f64],
    y_levels: &[f64],
    tol: f64,
) -> Result<SpectralDensityEstimate> {
    let probe = |z: C64| g_scalar(pencil, model, z, tol);
    estimate(&probe, grid, y_levels, DEFAULT_THRESHOLD, DEFAULT_EDGE_ETA)
}

/// Support of the law of `s`, on a grid covering `[−‖s‖, ‖s‖]`.
pub fn spectral_edges(
    pencil: &CoefficientPencil,
    model: FreeModel,
    tol: f64,
) -> Result<Vec<(f64, f64)>> {
    let bound = operator_norm_bound(pencil, model);
    let (grid, y_levels) = probe_grid(bound, 401);
    Ok(density(pencil, model, &grid, &y_levels, tol)?.support)
}

fn probe_grid(bound: f64, points: usize) -> (Vec<f64>, Vec<f64>) {
    let half = bound * 1.05 + 0.1;
    let h = 2.0 * half / (points - 1) as f64;
    let grid = (0..points).map(|i| -half + i as f64 * h).collect();
    (grid, vec![2.0 * h, h])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormPredictionOptions {
    pub tol: f64,
    pub grid_points: usize,
    pub threshold: f64,
    pub eta: f64,
}

impl Default for NormPredictionOptions {
    fn default() -> Self {
        NormPredictionOptions {
            tol: super::DEFAULT_TOL,
            grid_points: 401,
            threshold: DEFAULT_THRESHOLD,
            eta: DEFAULT_EDGE_ETA,
        }
    }
}

/// `‖p(x1, …, xr)‖` for free generators of the given model.
pub fn norm_prediction(p: &NCPolynomial, model: FreeModel, tol: f64) -> Result<f64> {
    norm_prediction_with(
        p,
        model,
        NormPredictionOptions {
            tol,
            ..Default::default()
        },
    )
}

pub fn norm_prediction_with(
    p: &NCPolynomial,
    model: FreeModel,
    opts: NormPredictionOptions,
) -> Result<f64> {
    model.validate()?;
    if p.degree() == 0 {
        return Ok(p.coefficient(&crate::ncpoly::Word::unit()).norm());
    }
    if !p.is_self_adjoint() {
        let square = p.adjoint().mul(p);
        return Ok(norm_prediction_with(&square, model, opts)?.sqrt());
    }
    let lin = linearize(p)?;
    let pencil = lin.pencil;
    let m = pencil.m();
    // corner of G(z E11 + i y 1_m) is the Stieltjes transform of p
    let probe = |z: C64| -> Result<C64> {
        let mut lambda = CMatrix::from_diagonal_element(m, m, C64::new(0.0, z.im));
        lambda[(0, 0)] = z;
        let sol = solve_g(
            &pencil,
            model,
            &SpectralParameter::new(lambda)?,
            opts.tol,
            DEFAULT_MAX_ITER,
        )?;
        if !sol.converged {
            return Err(Error::SolverFailure(format!(
                "no convergence at z = {z} (residual {:e})",
                sol.residual_norm
            )));
        }
        Ok(sol.g[(0, 0)])
    };
    let edge = model.edge();
    let bound: f64 = p
        .terms()
        .iter()
        .map(|(w, c)| c.norm() * edge.powi(w.len() as i32))
        .sum();
    let (grid, y_levels) = probe_grid(bound, opts.grid_points.max(16));
    let est = estimate(&probe, &grid, &y_levels, opts.threshold, opts.eta)?;
    let (first, last) = match (est.support.first(), est.support.last()) {
        (Some(f), Some(l)) => (f.0, l.1),
        _ => return Err(Error::Density("no support detected".into())),
    };
    Ok(first.abs().max(last.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ncpoly::parse;

    fn sc() -> CoefficientPencil {
        CoefficientPencil::scalar(0.0, &[1.0])
    }

    fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn semicircle_density_and_support() {
        let est = density(&sc(), FreeModel::Semicircular, &grid(-3.0, 3.0, 601), &[0.02, 0.01], 1e-10)
            .unwrap();
        assert!((est.value_at(0.0) - 1.0 / PI).abs() < 5e-3);
        assert!(est.value_at(3.0) < 5e-3);
        assert_eq!(est.support.len(), 1);
        let (a, b) = est.support[0];
        assert!((a + 2.0).abs() < 1e-3 && (b - 2.0).abs() < 1e-3, "{a} {b}");
        assert!((est.integral() - 1.0).abs() < 0.02);
    }

    #[test]
    fn rejects_bad_levels() {
        let g = grid(-1.0, 1.0, 5);
        assert!(density(&sc(), FreeModel::Semicircular, &g, &[0.1], 1e-10).is_err());
        assert!(density(&sc(), FreeModel::Semicircular, &g, &[0.01, 0.1], 1e-10).is_err());
        assert!(density(&sc(), FreeModel::Semicircular, &[1.0, 0.0], &[0.1, 0.05], 1e-10).is_err());
    }

    #[test]
    fn constant_polynomial_norm() {
        let p = parse("(3+4i)", 1).unwrap();
        assert_eq!(norm_prediction(&p, FreeModel::Semicircular, 1e-10).unwrap(), 5.0);
    }

    #[test]
    fn norm_of_generator() {
        let p = parse("x1", 1).unwrap();
        let v = norm_prediction(&p, FreeModel::Semicircular, 1e-10).unwrap();
        assert!((v - 2.0).abs() < 1e-3, "{v}");
    }
}
