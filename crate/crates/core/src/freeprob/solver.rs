//! Damped fixed-point iteration with Newton polishing and continuation in `Im λ`.

use crate::error::{Error, Result};
use crate::linalg::{
    frobenius, hermitian_eigenvalues, identity, im_part, inverse, kron, op_norm, scalar_matrix,
    solve, unvec, vec, CMatrix, C64,
};
use crate::ncpoly::CoefficientPencil;

use super::{FreeModel, HalfPlane, SpectralParameter, StieltjesSolution};

const DAMPING: f64 = 0.5;
/// Newton needs an `m² x m²` solve; above this size only the fixed point runs.
const NEWTON_MAX_M: usize = 16;
const NEWTON_SWITCH: f64 = 1e-3;
const DIRECT_BUDGET: usize = 400;
const STAGNATION_WINDOW: usize = 100;
const CONTINUATION_START: f64 = 10.0;

/// The defining equation evaluated at `g`:
/// semicircular `Σ ap g ap + a0 − λ + g⁻¹`,
/// Marchenko–Pastur `a0 + α Σ (1 − ap g)⁻¹ ap + g⁻¹ − λ`.
pub fn equation_residual(
    pencil: &CoefficientPencil,
    model: FreeModel,
    lambda: &CMatrix,
    g: &CMatrix,
) -> Result<CMatrix> {
    Ok(random_part(pencil, model, g)? + pencil.a0() - lambda + inverse(g)?)
}

/// `Σ ap g ap` or `α Σ (1 − ap g)⁻¹ ap`.
fn random_part(pencil: &CoefficientPencil, model: FreeModel, g: &CMatrix) -> Result<CMatrix> {
    let m = pencil.m();
    let mut acc = CMatrix::zeros(m, m);
    match model {
        FreeModel::Semicircular => {
            for a in pencil.generators() {
                acc += a * g * a;
            }
        }
        FreeModel::MarchenkoPastur { alpha } => {
            for a in pencil.generators() {
                let inner = inverse(&(identity(m) - a * g))?;
                acc += inner * a * C64::from(alpha);
            }
        }
    }
    Ok(acc)
}

/// `K` with `g · DF(g)[Δ] · g = KΔ − Δ`, acting on column-major `vec Δ`.
pub(crate) fn jacobian(
    pencil: &CoefficientPencil,
    model: FreeModel,
    g: &CMatrix,
) -> Result<CMatrix> {
    let m = pencil.m();
    let mut k = CMatrix::zeros(m * m, m * m);
    match model {
        FreeModel::Semicircular => {
            for a in pencil.generators() {
                k += kron(&(a * g).transpose(), &(g * a));
            }
        }
        FreeModel::MarchenkoPastur { alpha } => {
            for a in pencil.generators() {
                let inner = inverse(&(identity(m) - a * g))?;
                let p = g * &inner * a;
                let q = &inner * a * g;
                k += kron(&q.transpose(), &p) * C64::from(alpha);
            }
        }
    }
    Ok(k)
}

fn branch_ok(g: &CMatrix) -> bool {
    if g.iter().any(|z| !z.is_finite()) {
        return false;
    }
    let top = *hermitian_eigenvalues(&im_part(g)).last().unwrap();
    top <= 1e-10 * op_norm(g).max(1.0)
}

struct Iterate {
    g: CMatrix,
    res: f64,
}

struct Solver<'a> {
    pencil: &'a CoefficientPencil,
    model: FreeModel,
    tol: f64,
    iterations: usize,
    max_iter: usize,
}

impl Solver<'_> {
    fn measure(&self, lambda: &CMatrix, g: CMatrix) -> Result<Iterate> {
        let res = frobenius(&equation_residual(self.pencil, self.model, lambda, &g)?);
        Ok(Iterate { g, res })
    }

    fn damped_step(&self, lambda: &CMatrix, cur: &Iterate) -> Result<Iterate> {
        let target = inverse(&(lambda - self.pencil.a0() - random_part(self.pencil, self.model, &cur.g)?))?;
        let g = &cur.g * C64::from(1.0 - DAMPING) + target * C64::from(DAMPING);
        self.measure(lambda, g)
    }

    /// One Newton step; `None` if it leaves the Stieltjes branch or does not help.
    fn newton_step(&self, lambda: &CMatrix, cur: &Iterate) -> Result<Option<Iterate>> {
        let m = self.pencil.m();
        let f = equation_residual(self.pencil, self.model, lambda, &cur.g)?;
        let k = jacobian(self.pencil, self.model, &cur.g)?;
        let rhs = vec(&(&cur.g * f * &cur.g));
        let Ok(delta) = solve(&(identity(m * m) - k), &rhs) else {
            return Ok(None);
        };
        let g = &cur.g + unvec(&delta, m);
        if !branch_ok(&g) {
            return Ok(None);
        }
        let next = match self.measure(lambda, g) {
            Ok(next) => next,
            Err(_) => return Ok(None),
        };
        Ok((next.res < cur.res).then_some(next))
    }

    /// Iterates at fixed `λ` until the residual reaches `tol`, the budget runs
    /// out, or progress stalls. Returns the best iterate and whether it converged.
    fn run(&mut self, lambda: &CMatrix, start: CMatrix, budget: usize) -> Result<(Iterate, bool)> {
        let mut cur = self.measure(lambda, start)?;
        let mut best_res = cur.res;
        let mut last_improvement = 0;
        let use_newton = self.pencil.m() <= NEWTON_MAX_M;
        for step in 0..budget {
            if cur.res <= self.tol {
                return Ok((cur, true));
            }
            if self.iterations >= self.max_iter {
                break;
            }
            self.iterations += 1;
            let newton = if use_newton && cur.res < NEWTON_SWITCH {
                self.newton_step(lambda, &cur)?
            } else {
                None
            };
            cur = match newton {
                Some(next) => next,
                None => self.damped_step(lambda, &cur)?,
            };
            if cur.res < 0.5 * best_res {
                best_res = cur.res;
                last_improvement = step;
            } else if step - last_improvement > STAGNATION_WINDOW {
                break;
            }
        }
        let ok = cur.res <= self.tol;
        Ok((cur, ok))
    }

    /// Newton-driven path `λ + i s 1` with `s` halving from 10 down to 0.
    fn continuation(&mut self, lambda: &CMatrix, floor: f64) -> Result<(Iterate, bool)> {
        let m = self.pencil.m();
        let shifted = |s: f64| lambda + scalar_matrix(C64::new(0.0, s), m);
        let mut s = CONTINUATION_START;
        let mut g = inverse(&(shifted(s) - self.pencil.a0()))?;
        let level_budget = 200;
        let (first, _) = self.run(&shifted(s), g, level_budget)?;
        g = first.g;
        let stop = 1e-3 * floor;
        loop {
            let mut next = if s * 0.5 < stop { 0.0 } else { s * 0.5 };
            let mut refinements = 0;
            let level = loop {
                let (it, ok) = self.run(&shifted(next), g.clone(), level_budget)?;
                if ok && branch_ok(&it.g) {
                    break it;
                }
                if self.iterations >= self.max_iter || refinements > 40 {
                    return Ok((it, false));
                }
                refinements += 1;
                next = 0.5 * (s + next);
            };
            g = level.g.clone();
            s = next;
            if s == 0.0 {
                return Ok((level, true));
            }
        }
    }
}

/// Solves the model's fixed-point equation for `G(λ)`.
///
/// Lower half-plane parameters go through `G(λ*) = G(λ)*`. Non-convergence is
/// not an error: the best iterate comes back with `converged = false`.
pub fn solve_g(
    pencil: &CoefficientPencil,
    model: FreeModel,
    lambda: &SpectralParameter,
    tol: f64,
    max_iter: usize,
) -> Result<StieltjesSolution> {
    model.validate()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    if lambda.m() != pencil.m() {
        return Err(Error::DimensionMismatch(format!(
            "spectral parameter is {0}x{0} but the pencil has m = {1}",
            lambda.m(),
            pencil.m()
        )));
    }
    if lambda.half_plane() == HalfPlane::Lower {
        let mut sol = solve_g(pencil, model, &lambda.adjoint(), tol, max_iter)?;
        sol.g = sol.g.adjoint();
        return Ok(sol);
    }
    let lam = lambda.lambda();
    let mut solver = Solver {
        pencil,
        model,
        tol,
        iterations: 0,
        max_iter,
    };
    let start = inverse(&(lam - pencil.a0()))?;
    let (mut best, mut ok) = solver.run(lam, start, DIRECT_BUDGET.min(max_iter))?;
    ok &= branch_ok(&best.g);
    if !ok {
        let floor = 1.0 / lambda.im_inv_norm();
        let (cont, cont_ok) = solver.continuation(lam, floor)?;
        if cont_ok || cont.res < best.res {
            best = cont;
            ok = cont_ok;
        }
    }
    let residual_norm = op_norm(&equation_residual(pencil, model, lam, &best.g)?);
    Ok(StieltjesSolution {
        g: best.g,
        residual_norm,
        iterations: solver.iterations,
        converged: ok && residual_norm <= tol,
    })
}
