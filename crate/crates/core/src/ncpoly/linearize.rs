//! Self-adjoint linearization by Schur complement.
//!
//! The pencil has block form `L = [[ℓ, u*], [u, Q]]` with `ℓ` the affine part of
//! `p`, so that `p = ℓ − u* Q⁻¹ u`. Every word `w = x_{w0} ⋯ x_{w(k-1)}` of
//! length `k ≥ 2` gets its own `2(k−1)`-dimensional block
//! `Q_w = [[0, B*], [B, 0]]` with `B = 1 − N` and `N` the nilpotent shift
//! carrying the interior letters, so that `(B⁻¹)_{0,k−2} = x_{w1} ⋯ x_{w(k−2)}`.
//! A word and its reverse share a block, which produces both `c·w` and
//! `c̄·w*` at once.

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};

use super::{CoefficientPencil, NCPolynomial, Word};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizationResult {
    pub pencil: CoefficientPencil,
    /// Where the spectral variable enters; always the top-left corner.
    pub output_slot: (usize, usize),
    pub degree: usize,
}

pub fn linearize(p: &NCPolynomial) -> Result<LinearizationResult> {
    if !p.is_self_adjoint() {
        return Err(Error::NotSelfAdjoint {
            defect: p.self_adjoint_defect(),
        });
    }
    let degree = p.degree();
    if degree == 0 {
        return Err(Error::ConstantPolynomial);
    }
    let r = p.num_generators();

    // (word, α) pairs; α is the entry of u in the first letter's row.
    let mut blocks: Vec<(&Word, C64)> = Vec::new();
    for (w, &coef) in p.terms() {
        if w.len() < 2 {
            continue;
        }
        let rev = w.reversed();
        if rev == *w {
            blocks.push((w, -coef * 0.5));
        } else if *w < rev {
            blocks.push((w, -coef.conj()));
        }
    }
    let m = 1 + blocks.iter().map(|(w, _)| 2 * (w.len() - 1)).sum::<usize>();

    let mut a = vec![CMatrix::zeros(m, m); r + 1];
    a[0][(0, 0)] = p.coefficient(&Word::unit()).re.into();
    for g in 0..r {
        a[g + 1][(0, 0)] = p.coefficient(&Word::generator(g)).re.into();
    }

    let one = C64::new(1.0, 0.0);
    let mut offset = 1;
    for (w, alpha) in blocks {
        let k = w.len();
        let half = k - 1;
        let pi = |j: usize| offset + j;
        let qi = |j: usize| offset + half + j;
        for j in 0..half {
            a[0][(qi(j), pi(j))] = one;
            a[0][(pi(j), qi(j))] = one;
            if j + 1 < half {
                let g = w.0[j + 1] + 1;
                a[g][(qi(j), pi(j + 1))] = -one;
                a[g][(pi(j + 1), qi(j))] = -one;
            }
        }
        let first = w.0[0] + 1;
        a[first][(pi(0), 0)] += alpha;
        a[first][(0, pi(0))] += alpha.conj();
        let last = w.0[k - 1] + 1;
        a[last][(qi(half - 1), 0)] += one;
        a[last][(0, qi(half - 1))] += one;
        offset += 2 * half;
    }

    let a0 = a.remove(0);
    Ok(LinearizationResult {
        pencil: CoefficientPencil::new(a0, a)?,
        output_slot: (0, 0),
        degree,
    })
}
