//! Exact finite-`n` expected trace moments.
//!
//! Wigner: `E Tr X^k` expands over closed index walks; grouping walks by the
//! set partition of positions sharing an index gives
//! `E tr_n X^k = n^{−1−k/2} Σ_b (n)_b c_b`, where `(n)_b` is the falling
//! factorial and `c_b` depends only on the entry law. Wishart uses the genus
//! expansion `E Tr (X*X)^k = Σ_{σ ∈ S_k} p^{#σ} n^{#(γσ⁻¹)}`.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use super::EntryDistribution;

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// `E[(ξ1 + iξ2)^a (ξ1 − iξ2)^b]` for iid `ξ1, ξ2 ~ μ`; real by symmetry.
fn complex_entry_moment(dist: &EntryDistribution, a: u32, b: u32) -> f64 {
    let mut acc = 0.0;
    for s in 0..=a {
        for t in 0..=b {
            let k = s + t;
            if k % 2 == 1 || (a + b - k) % 2 == 1 {
                continue;
            }
            // i^s (−i)^t = i^{s+t} (−1)^t, real because s + t is even
            let phase = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 } * if t % 2 == 0 { 1.0 } else { -1.0 };
            acc += binomial(a, s) * binomial(b, t) * phase * dist.moment(a + b - k) * dist.moment(k);
        }
    }
    acc
}

/// Per-block-count weights `c_b` of the Wigner walk expansion for one `k`.
#[derive(Debug, Clone)]
pub struct WignerMoments {
    k: u32,
    weights: Vec<f64>,
}

impl WignerMoments {
    pub fn new(dist: &EntryDistribution, k: u32) -> Self {
        let k_us = k as usize;
        let mut weights = vec![0.0; k_us + 1];
        if k == 0 {
            weights[0] = 1.0;
            return WignerMoments { k, weights };
        }
        if k % 2 == 1 {
            return WignerMoments { k, weights };
        }
        let max_edge = k;
        let cm: Vec<Vec<f64>> = (0..=max_edge)
            .map(|a| (0..=max_edge).map(|b| if a + b <= k { complex_entry_moment(dist, a, b) } else { 0.0 }).collect())
            .collect();
        let loop_m: Vec<f64> = (0..=k).map(|c| dist.moment(c)).collect();
        let mut walk = Walk {
            k: k_us,
            labels: vec![0; k_us],
            counts: vec![0; k_us * k_us],
            odd: 0,
        };
        walk.extend(1, 0, &mut |w, blocks| {
            let mut weight = 1.0;
            for u in 0..blocks {
                let l = w.counts[u * k_us + u];
                if l > 0 {
                    weight *= loop_m[l as usize];
                }
                for v in u + 1..blocks {
                    let a = w.counts[u * k_us + v];
                    let b = w.counts[v * k_us + u];
                    if a + b > 0 {
                        weight *= cm[a as usize][b as usize] * 0.5f64.powi(((a + b) / 2) as i32);
                    }
                }
            }
            weights[blocks] += weight;
        });
        WignerMoments { k, weights }
    }

    /// `E tr_n X^k`.
    pub fn at(&self, n: usize) -> f64 {
        if self.k == 0 {
            return 1.0;
        }
        let nf = n as f64;
        let mut total = 0.0;
        let mut falling = 1.0;
        for (b, w) in self.weights.iter().enumerate() {
            if b > 0 {
                falling *= nf - (b - 1) as f64;
            }
            if falling == 0.0 {
                break;
            }
            total += falling * w;
        }
        total * nf.powf(-1.0 - f64::from(self.k) / 2.0)
    }
}

/// Closed walks `labels[0] → labels[1] → … → labels[0]` enumerated as
/// restricted growth strings, with directed edge counts kept incrementally.
///
/// Only walks whose every undirected edge (and loop) is used an even number
/// of times can contribute, so prefixes with more odd edges than remaining
/// steps are cut.
struct Walk {
    k: usize,
    labels: Vec<usize>,
    counts: Vec<u32>,
    /// Number of undirected edges with odd multiplicity.
    odd: usize,
}

impl Walk {
    fn step(&mut self, u: usize, v: usize, delta: i32) {
        let idx = u * self.k + v;
        self.counts[idx] = (self.counts[idx] as i32 + delta) as u32;
        let total = if u == v { self.counts[idx] } else { self.counts[idx] + self.counts[v * self.k + u] };
        if total % 2 == 1 {
            self.odd += 1;
        } else {
            self.odd -= 1;
        }
    }

    fn extend(&mut self, pos: usize, max_label: usize, visit: &mut dyn FnMut(&Walk, usize)) {
        if pos == self.k {
            let (last, first) = (self.labels[self.k - 1], self.labels[0]);
            self.step(last, first, 1);
            if self.odd == 0 {
                visit(self, max_label + 1);
            }
            self.step(last, first, -1);
            return;
        }
        let prev = self.labels[pos - 1];
        for label in 0..=max_label + 1 {
            self.labels[pos] = label;
            self.step(prev, label, 1);
            // edges still to place: pos → pos+1, …, k−1 → 0
            let remaining = self.k - pos;
            if self.odd <= remaining && (remaining - self.odd).is_multiple_of(2) {
                self.extend(pos + 1, max_label.max(label), visit);
            }
            self.step(prev, label, -1);
        }
    }
}

type WignerKey = (String, u32);

fn wigner_cache() -> &'static Mutex<HashMap<WignerKey, WignerMoments>> {
    static CACHE: OnceLock<Mutex<HashMap<WignerKey, WignerMoments>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// `E tr_n X^k` for a Wigner matrix with entry law `dist` (cached per law and `k`).
pub fn wigner_trace_moment(dist: &EntryDistribution, n: usize, k: u32) -> f64 {
    let key = (format!("{dist}"), k);
    if let Some(m) = wigner_cache().lock().unwrap().get(&key) {
        return m.at(n);
    }
    let m = WignerMoments::new(dist, k);
    let v = m.at(n);
    wigner_cache().lock().unwrap().insert(key, m);
    v
}

fn cycles(perm: &[usize]) -> u32 {
    let mut seen = vec![false; perm.len()];
    let mut count = 0;
    for s in 0..perm.len() {
        if !seen[s] {
            count += 1;
            let mut i = s;
            while !seen[i] {
                seen[i] = true;
                i = perm[i];
            }
        }
    }
    count
}

/// Counts of permutations in `S_k` by `(#σ, #(γσ⁻¹))`.
fn genus_table(k: usize) -> Vec<((u32, u32), f64)> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Vec<((u32, u32), f64)>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(t) = cache.lock().unwrap().get(&k) {
        return t.clone();
    }
    let mut table: HashMap<(u32, u32), f64> = HashMap::new();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut inv = vec![0; k];
    let mut prod = vec![0; k];
    loop {
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        for i in 0..k {
            // γ = (0 1 … k−1)
            prod[i] = (inv[i] + 1) % k;
        }
        *table.entry((cycles(&perm), cycles(&prod))).or_default() += 1.0;
        if !next_permutation(&mut perm) {
            break;
        }
    }
    let mut out: Vec<_> = table.into_iter().collect();
    out.sort_by_key(|a| a.0);
    cache.lock().unwrap().insert(k, out.clone());
    out
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// `E tr_n Y^k` for `Y = X*X/n`, `X` a `p x n` standard complex Gaussian matrix.
pub fn wishart_trace_moment(n: usize, p: usize, k: u32) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let (nf, pf) = (n as f64, p as f64);
    let sum: f64 = genus_table(k as usize)
        .iter()
        .map(|&((a, b), count)| count * pf.powi(a as i32) * nf.powi(b as i32))
        .sum();
    sum * nf.powi(-(k as i32) - 1)
}
