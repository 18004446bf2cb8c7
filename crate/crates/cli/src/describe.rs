use crate::config::{check_experiment, DEFAULT_TOLERANCES};
use crate::Result;

struct Entry {
    summary: &'static str,
    claim: &'static str,
    fields: &'static str,
    defaults: &'static str,
    contract: &'static str,
}

fn entry(name: &str) -> Entry {
    match name {
        "solve" => Entry {
            summary: "Solve the operator-valued Stieltjes equation for G(λ) of s = a0 ⊗ 1 + Σ a_p ⊗ x_p.",
            claim: "G(λ) is the unique solution with negative imaginary part of the semicircular equation \
                    G = (λ − a0 − Σ a_p G a_p)⁻¹, or of its Marchenko–Pastur analogue built from R(z) = α(1 − z)⁻¹.",
            fields: "pencil, lambda (required); model",
            defaults: "model = semicircular",
            contract: "solver converged with equation residual <= residual_max.",
        },
        "density" => Entry {
            summary: "Spectral density of s by Stieltjes inversion, extrapolated to y → 0⁺, with support detection.",
            claim: "the law of s is recovered from −Im g(x + iy)/π as y → 0⁺.",
            fields: "pencil (required); model, grid {start, stop, points}, y_levels",
            defaults: "grid: step 0.01 over ±(1.05·‖s‖ + 0.1); y_levels = [2h, h] for grid step h",
            contract: "|∫ density − 1| <= mass_error and a non-empty support.",
        },
        "norm-predict" => Entry {
            summary: "Predicted operator norm ‖p(x1, …, xr)‖ for free semicircular or Marchenko–Pastur generators.",
            claim: "‖p(x)‖ is the largest |point| of the spectrum of p(x), read off the linearization; \
                    non-self-adjoint p goes through √‖p*p‖.",
            fields: "polynomial {text, generators} (required); model",
            defaults: "model = semicircular",
            contract: "prediction is finite.",
        },
        "converge" => Entry {
            summary: "Strong convergence: ‖p(Xn)‖ against the free prediction over n_values and a list of seeds.",
            claim: "almost surely ‖p(Xn(1), …, Xn(r))‖ → ‖p(x1, …, xr)‖ for Wigner and Wishart generators.",
            fields: "polynomial, n_values (required); model, distribution, seeds",
            defaults: "model = semicircular, distribution = gaussian, seeds = 20 seeds derived from --seed",
            contract: "median |‖p(Xn)‖ − prediction| non-increasing in n (up to combined stderr), \
                       and <= norm_deviation at the largest n.",
        },
        "master-check-iid" => Entry {
            summary: "Master-equation residual for Wigner generators, with and without the κ₄ term Rn(λ)/n.",
            claim: "E[Σ a_p Hn a_p Hn + (a0 − λ) Hn + 1] + Rn(λ)/n = O(n⁻²), where Rn is the fourth-cumulant (κ₄) \
                    term; without Rn/n the residual is only O(n⁻¹) when κ₄ ≠ 0.",
            fields: "pencil, n_values (required); distribution, lambda, replicas, seed",
            defaults: "lambda = 2i·1_m, replicas = 400, distribution = gaussian, seed = 0",
            contract: "log-log slope of the residual WITH Rn/n in slope_n2 (the n⁻² contract); if κ₄ ≠ 0 also \
                       slope WITHOUT Rn/n in slope_n1. A slope counts only when every point has stderr < value/3.",
        },
        "master-check-wishart" => Entry {
            summary: "Master-equation residual for Wishart generators Y = X*X/n with p = round(αn).",
            claim: "(λ − a0) Gn − (p/n) Σ_l (1 − a_l Gn)⁻¹ a_l Gn − 1 = O(n⁻²) on the branch \
                    ‖Im(λ)⁻¹‖ < 1/(2 max_l ‖a_l‖), or when every a_l is invertible.",
            fields: "pencil, n_values (required); model (marchenko_pastur:<alpha>), lambda, replicas, seed",
            defaults: "model = marchenko_pastur:1, lambda = 2+4i, replicas = 400, seed = 0",
            contract: "slope in slope_n2 (with three or more n values), and residual <= 10·(stderr + c/n²) at every n, \
                       with c = residual·n² at the smallest n.",
        },
        "correction-check" => Entry {
            summary: "First-order correction: compares n(Gn − G) with L(λ) computed from κ₄.",
            claim: "Gn(λ) = G(λ) + L(λ)/n + O(n⁻²); L vanishes for Gaussian entries (κ₄ = 0).",
            fields: "pencil, n_values (required); distribution, lambda, replicas, seed",
            defaults: "lambda = 2i·1_m, replicas = 400, distribution = gaussian, seed = 0",
            contract: "‖n(Gn − G) − L‖ decreases across n_values; flagged inconclusive when Monte Carlo error dominates.",
        },
        "variance-check" => Entry {
            summary: "Variance of tr_n of a word in the generators, or of one entry of Hn(λ), over n_values.",
            claim: "the Poincaré inequality gives V[tr_n w(Xn)] = O(n⁻²) and V[Hn(λ)_ij] = O(n⁻²).",
            fields: "n_values and either word (1-based letters, length <= 6) or pencil [+ lambda, entry]; \
                     model, distribution, replicas, seed",
            defaults: "lambda = 2i·1_m, entry = [1, 1], replicas = 100 (minimum 50), seed = 0",
            contract: "variance slope in slope_n2, or variance identically zero.",
        },
        "wishart-ibp" => Entry {
            summary: "Monte Carlo check of the Wishart integration-by-parts (differentiation) formula.",
            claim: "E[Φ'(Y).H] − n E[Φ(Y) Tr H] + (p − n) E[Φ(Y) Tr(Y⁻¹H)] = 0 for Φ(0) = 0 and p >= n + 2.",
            fields: "cases [{n, p, phi: zero|trace|resolvent, index [j, k], z, direction [j, k]}] (required); replicas, seed",
            defaults: "index = [1, 1], z = 3i, direction = [1, 1], replicas = 100000, seed = 0",
            contract: "for each case |value| <= ibp_sigmas·stderr.",
        },
        "containment" => Entry {
            summary: "Spectrum containment of Sn in the ε-thickened support of s, per seed.",
            claim: "eventually sp(Sn) ⊂ sp(s) + (−ε, ε) almost surely; the check uses the ε-thickened support \
                    predicted by the density solver.",
            fields: "pencil, n_values (required); model, distribution, seeds",
            defaults: "model = semicircular, distribution = gaussian, seeds = 20 seeds derived from --seed",
            contract: "pass rate >= min_pass_rate at every n, with ε = epsilon.",
        },
        _ => unreachable!(),
    }
}

fn tolerance_table() -> String {
    let mut out = String::from("Default tolerances (override under `tolerances`):\n");
    for (key, value, used) in DEFAULT_TOLERANCES {
        out.push_str(&format!("  {key:<16} {value:<14} {used}\n"));
    }
    out
}

/// Human-readable contract, defaults and claim of an experiment.
pub fn describe(name: &str) -> Result<String> {
    check_experiment(name)?;
    let e = entry(name);
    Ok(format!(
        "{name}\n  {}\n\nClaim verified:\n  {}\n\nConfig fields:\n  {}\n\nDefaults:\n  {}\n\nContract:\n  {}\n\n{}",
        e.summary,
        e.claim,
        e.fields,
        e.defaults,
        e.contract,
        tolerance_table()
    ))
}

