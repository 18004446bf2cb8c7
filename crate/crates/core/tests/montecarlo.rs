use freeconv::ensembles::{EntryDistribution, RngStream, WishartSpec};
use freeconv::freeprob::{g_scalar, FreeModel, SpectralParameter, DEFAULT_TOL};
use freeconv::linalg::{c, frobenius, identity, inverse, kron, op_norm, CMatrix, C64};
use freeconv::montecarlo::*;
use freeconv::ncpoly::{parse, CoefficientPencil, Word};

fn f_sc() -> CoefficientPencil {
    CoefficientPencil::scalar(0.0, &[1.0])
}

fn two_by_two() -> CoefficientPencil {
    let a0 = CMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.1, 0.2), c(0.1, -0.2), c(-0.3, 0.0)]);
    let a1 = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.3, 0.0), c(0.3, 0.0), c(0.0, 0.0)]);
    let a2 = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -0.4), c(0.0, 0.4), c(0.7, 0.0)]);
    CoefficientPencil::new(a0, vec![a1, a2]).unwrap()
}

fn sample(ens: &Ensemble, r: usize, n: usize, seed: u64) -> Vec<CMatrix> {
    let mut rng = RngStream::new(seed, 0).rng();
    (0..r).map(|_| ens.sample(n, &mut rng).unwrap()).collect()
}

#[test]
fn resolvent_without_generators_is_exact() {
    let a0 = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(-1.0, 0.0)]);
    let pencil = CoefficientPencil::new(a0.clone(), vec![]).unwrap();
    let lambda = SpectralParameter::scalar(c(0.2, 1.5), 2).unwrap();
    let stats = resolvent_stats(&pencil, &[], &lambda, BlockDetail::None).unwrap();
    assert_eq!(stats.h, inverse(&(lambda.lambda() - &a0)).unwrap());
    let est = estimate_gn(&pencil, &Ensemble::Wigner(EntryDistribution::gaussian()), &lambda, 10, 5, 1).unwrap();
    assert_eq!(est.mean, stats.h);
    assert_eq!(est.stderr_norm(), 0.0);
}

#[test]
fn general_resolvent_matches_direct_inversion() {
    let pencil = two_by_two();
    let ens = Ensemble::Wigner(EntryDistribution::uniform());
    let xs = sample(&ens, 2, 12, 3);
    let op = BlockOperator::new(pencil.clone(), xs.clone()).unwrap();
    let lam = CMatrix::from_row_slice(2, 2, &[c(0.3, 1.0), c(0.2, 0.1), c(0.2, 0.1), c(-0.5, 0.7)]);
    for lambda in [SpectralParameter::new(lam.clone()).unwrap(), SpectralParameter::new(lam.adjoint()).unwrap()] {
        let n = 12;
        let direct = inverse(&(kron(lambda.lambda(), &identity(n)) - op.assembled())).unwrap();
        let stats = op.resolvent_stats(&lambda, BlockDetail::Full).unwrap();
        let diag = op.resolvent_stats(&lambda, BlockDetail::Diagonal).unwrap();
        let mut h = CMatrix::zeros(2, 2);
        for k in 0..n {
            let b = CMatrix::from_fn(2, 2, |a, bb| direct[(a * n + k, bb * n + k)]);
            h += &b;
            assert!(frobenius(&(&b - diag.block(k, k).unwrap())) < 1e-11);
            let l = (k + 5) % n;
            let bkl = CMatrix::from_fn(2, 2, |a, bb| direct[(a * n + k, bb * n + l)]);
            assert!(frobenius(&(&bkl - stats.block(k, l).unwrap())) < 1e-11);
        }
        h /= C64::from(n as f64);
        assert!(frobenius(&(&h - &stats.h)) < 1e-12);
        assert!(frobenius(&(&h - &diag.h)) < 1e-12);
    }
}

#[test]
fn resolvent_norm_bounds_and_conjugate_symmetry() {
    let ens = Ensemble::Wigner(EntryDistribution::gaussian());
    let lambda = SpectralParameter::scalar(c(0.0, 2.0), 1).unwrap();
    let xs = sample(&ens, 1, 200, 4);
    let stats = resolvent_stats(&f_sc(), &xs, &lambda, BlockDetail::None).unwrap();
    assert!(op_norm(&stats.h) <= 0.5 + 1e-12);

    for seed in 0..5 {
        let pencil = two_by_two();
        let n = 30;
        let xs = sample(&Ensemble::Wigner(EntryDistribution::uniform()), 2, n, 10 + seed);
        let lam = CMatrix::from_row_slice(2, 2, &[c(0.1, 0.8), c(0.0, 0.2), c(0.0, 0.2), c(1.0, 0.5)]);
        let lambda = SpectralParameter::new(lam).unwrap();
        let bound = lambda.im_inv_norm();
        let stats = resolvent_stats(&pencil, &xs, &lambda, BlockDetail::Full).unwrap();
        assert!(op_norm(&stats.h) <= bound * (1.0 + 1e-10));
        let mut sum = 0.0;
        for k in 0..n {
            for l in 0..n {
                let b = stats.block(k, l).unwrap();
                assert!(op_norm(&b) <= bound * (1.0 + 1e-10));
                sum += op_norm(&b).powi(2);
            }
        }
        assert!(sum / n as f64 <= 2.0 * bound * bound);
        let conj = resolvent_stats(&pencil, &xs, &lambda.adjoint(), BlockDetail::None).unwrap();
        assert!(frobenius(&(conj.h - stats.h.adjoint())) < 1e-12);
    }
}

#[test]
fn block_operator_basics() {
    let pencil = two_by_two();
    let xs = sample(&Ensemble::Wigner(EntryDistribution::gaussian()), 2, 8, 5);
    let op = BlockOperator::new(pencil.clone(), xs.clone()).unwrap();
    let s = op.assembled();
    assert_eq!(s.nrows(), 16);
    assert!(frobenius(&(s - s.adjoint())) <= 1e-12 * frobenius(s));
    assert!(BlockOperator::new(pencil, xs[..1].to_vec()).is_err());
    let a0 = CMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]);
    let op = BlockOperator::new(CoefficientPencil::new(a0, vec![]).unwrap(), vec![]).unwrap();
    assert_eq!(op.spectrum(), vec![-1.0, 2.0]);
}

#[test]
fn estimate_gn_matches_limits() {
    let g2i = c(0.0, 1.0 - 2f64.sqrt());
    let lambda = SpectralParameter::scalar(c(0.0, 2.0), 1).unwrap();
    let est = estimate_gn(&f_sc(), &Ensemble::Wigner(EntryDistribution::gaussian()), &lambda, 200, 200, 11).unwrap();
    let err = (est.mean[(0, 0)] - g2i).norm();
    assert!(err <= (3.0 * est.stderr_norm()).max(5e-3), "{err}");

    let z = c(2.0, 2.0);
    let gmp = g_scalar(&f_sc(), FreeModel::marchenko_pastur(1.0).unwrap(), z, DEFAULT_TOL).unwrap();
    let lambda = SpectralParameter::scalar(z, 1).unwrap();
    let est = estimate_gn(&f_sc(), &Ensemble::wishart(1.0).unwrap(), &lambda, 200, 200, 12).unwrap();
    let err = (est.mean[(0, 0)] - gmp).norm();
    assert!(err <= (3.0 * est.stderr_norm()).max(5e-3), "{err}");
    assert!(estimate_gn(&f_sc(), &Ensemble::wishart(1.0).unwrap(), &lambda, 20, 1, 12).is_err());
}

#[test]
fn stderr_halves_when_replicas_quadruple() {
    let lambda = SpectralParameter::scalar(c(0.5, 1.0), 1).unwrap();
    let ens = Ensemble::Wigner(EntryDistribution::uniform());
    let a = estimate_gn(&f_sc(), &ens, &lambda, 40, 400, 3).unwrap().stderr_norm();
    let b = estimate_gn(&f_sc(), &ens, &lambda, 40, 1600, 3).unwrap().stderr_norm();
    let ratio = a / b;
    assert!((1.7..=2.3).contains(&ratio), "{ratio}");
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let lambda = SpectralParameter::scalar(c(0.0, 2.0), 1).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let g = estimate_gn(&two_by_two(), &Ensemble::Wigner(EntryDistribution::gaussian()), &SpectralParameter::scalar(c(0.1, 1.0), 2).unwrap(), 20, 64, 9).unwrap();
            let m = master_residual_iid(&f_sc(), &EntryDistribution::uniform(), &lambda, 30, 100, 5).unwrap();
            (g, m)
        })
    };
    let (g1, m1) = run(1);
    let (g3, m3) = run(3);
    assert_eq!(g1, g3);
    assert_eq!(m1, m3);
}

#[test]
fn master_residual_trivial_cases() {
    let a0 = CMatrix::from_row_slice(1, 1, &[c(0.7, 0.0)]);
    let pencil = CoefficientPencil::new(a0, vec![CMatrix::zeros(1, 1)]).unwrap();
    let lambda = SpectralParameter::scalar(c(0.3, 2.0), 1).unwrap();
    let r = master_residual_iid(&pencil, &EntryDistribution::uniform(), &lambda, 10, 10, 1).unwrap();
    assert!(r.residual_norm() < 1e-15);
    let w = master_residual_wishart(&pencil, 1.0, &lambda, 10, 10, 1).unwrap();
    assert!(w.residual_norm() < 1e-15);
    assert_eq!(w.stderr, 0.0);
}

#[test]
fn gaussian_master_residual_scales_like_inverse_square() {
    let lambda = SpectralParameter::scalar(c(0.0, 2.0), 1).unwrap();
    let s = master_residual_iid_scaling(&f_sc(), &EntryDistribution::gaussian(), &lambda, &[50, 100, 200], 200, 21).unwrap();
    assert!(s.with_rn.resolved());
    assert!(s.with_rn.slope_within(-2.6, -1.4), "{:?}", s.with_rn);
    // κ4 = 0: nothing to add
    for r in &s.reports {
        assert_eq!(r.rn_hat, CMatrix::zeros(1, 1));
    }
}

#[test]
fn rn_estimate_approaches_its_limit() {
    // Rn → R = (κ4/2) G⁴ for the scalar pencil
    let lambda = SpectralParameter::scalar(c(0.0, 2.0), 1).unwrap();
    let g = c(0.0, 1.0 - 2f64.sqrt());
    let r_limit = g.powi(4) * (-1.2 / 2.0);
    let r = master_residual_iid(&f_sc(), &EntryDistribution::uniform(), &lambda, 100, 100, 2).unwrap();
    assert!((r.rn_hat[(0, 0)] - r_limit).norm() < 2e-3 * r_limit.norm() * 10.0);
}

#[test]
fn wishart_master_residual() {
    let lambda = SpectralParameter::scalar(c(2.0, 4.0), 1).unwrap();
    let (reports, scaling) =
        master_residual_wishart_scaling(&f_sc(), 1.0, &lambda, &[50, 100, 200], 200, 31).unwrap();
    assert!(scaling.slope_within(-2.6, -1.4), "{scaling:?}");
    assert_eq!(reports[2].p, 200);

    // calibrate c at n = 50, then check the n = 200 run against c/n²
    let lambda = SpectralParameter::scalar(c(3.0, 4.0), 1).unwrap();
    let small = master_residual_wishart(&f_sc(), 2.0, &lambda, 50, 200, 32).unwrap();
    let calib = small.residual_norm() * 50.0 * 50.0;
    let big = master_residual_wishart(&f_sc(), 2.0, &lambda, 200, 200, 33).unwrap();
    assert!(big.residual_norm() <= 10.0 * (big.stderr + calib / (200.0 * 200.0)));

    // a singular coefficient outside the small-Im(λ)⁻¹ branch
    let a1 = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
    let pencil = CoefficientPencil::new(CMatrix::zeros(2, 2), vec![a1]).unwrap();
    let lambda = SpectralParameter::scalar(c(1.0, 0.5), 2).unwrap();
    let err = master_residual_wishart(&pencil, 1.0, &lambda, 10, 10, 1).unwrap_err();
    assert!(err.to_string().contains("1/(2 max_l ||a_l||)"), "{err}");
}

#[test]
fn correction_check_cases() {
    let lambda = SpectralParameter::scalar(c(0.0, 2.0), 1).unwrap();
    let gauss = correction_check(&f_sc(), &EntryDistribution::gaussian(), &lambda, &[100, 200, 400], 100, 41).unwrap();
    assert_eq!(gauss.l, CMatrix::zeros(1, 1));
    assert!(gauss.decreasing, "{:?}", gauss.scaling);

    let unif = correction_check(&f_sc(), &EntryDistribution::uniform(), &lambda, &[100, 400], 100, 42).unwrap();
    assert!(unif.decreasing && !unif.inconclusive, "{:?}", unif.scaling);

    let lambda = SpectralParameter::scalar(c(0.0, 3.0), 1).unwrap();
    let lap = correction_check(&f_sc(), &EntryDistribution::exp_power(1.0).unwrap(), &lambda, &[400], 100, 43).unwrap();
    let p = &lap.points[0];
    let im = p.scaled_difference[(0, 0)].im;
    let l = lap.l[(0, 0)].im;
    assert!(l < 0.0);
    assert!(im.signum() == l.signum() || im.abs() <= 3.0 * p.scaled_stderr, "{im} vs {l}");
}

#[test]
fn block_average_cases() {
    let a0 = CMatrix::from_row_slice(1, 1, &[c(0.5, 0.0)]);
    let pencil = CoefficientPencil::new(a0, vec![CMatrix::zeros(1, 1)]).unwrap();
    let lambda = SpectralParameter::scalar(c(0.0, 2.0), 1).unwrap();
    let a = CMatrix::from_element(1, 1, c(2.0, 0.0));
    let r = block_average_check(&pencil, &EntryDistribution::gaussian(), &a, &lambda, 10, 10, 1).unwrap();
    let b = c(-0.5, 2.0).inv();
    assert!((r.d_mean[(0, 0)] - b * b * 2.0).norm() < 1e-15);

    let one = CMatrix::from_element(1, 1, c(1.0, 0.0));
    let (reports, scaling) =
        block_average_scaling(&f_sc(), &EntryDistribution::gaussian(), &one, &lambda, &[100, 200, 400], 100, 51).unwrap();
    let at200 = &reports[1];
    assert!(at200.deviation <= (3.0 * at200.stderr).max(0.02));
    assert!(scaling.slope_within(-1.6, -0.6), "{scaling:?}");
}

#[test]
fn variance_checks() {
    let gauss = Ensemble::Wigner(EntryDistribution::gaussian());
    let empty = word_trace_variance(&Word::unit(), &gauss, &[10, 20, 40], 50, 1).unwrap();
    assert!(empty.points.iter().all(|p| p.value == 0.0));
    let x1sq = word_trace_variance(&Word(vec![0, 0]), &gauss, &[100, 200, 400, 800], 100, 2).unwrap();
    assert!(x1sq.slope_within(-2.6, -1.4), "{x1sq:?}");
    let lambda = SpectralParameter::scalar(c(0.0, 2.0), 1).unwrap();
    let unif = Ensemble::Wigner(EntryDistribution::uniform());
    let h11 = resolvent_entry_variance(&f_sc(), &unif, &lambda, (0, 0), &[50, 100, 200, 400], 60, 3).unwrap();
    assert!(h11.slope_within(-2.6, -1.4), "{h11:?}");
    assert!(word_trace_variance(&Word(vec![0; 7]), &gauss, &[10], 50, 1).is_err());
    assert!(word_trace_variance(&Word(vec![0]), &gauss, &[10], 49, 1).is_err());
}

#[test]
fn wishart_ibp_identity() {
    let spec = WishartSpec::with_p(30, 60).unwrap();
    let h11 = hermitian_direction(30, 0, 0);
    let zero = wishart_ibp_check(&spec, &IbpFunction::Zero, &h11, 10, 1).unwrap();
    assert_eq!(zero.value, C64::default());
    let mut e11 = CMatrix::zeros(30, 30);
    e11[(0, 0)] = c(1.0, 0.0);
    let r = wishart_ibp_check(&spec, &IbpFunction::TraceAgainst(e11), &h11, 20_000, 2).unwrap();
    assert!(r.passes, "{r:?}");
    let spec = WishartSpec::with_p(30, 45).unwrap();
    let phi = IbpFunction::ResolventEntry { z: c(0.0, 3.0), j: 0, k: 0 };
    let r = wishart_ibp_check(&spec, &phi, &hermitian_direction(30, 0, 1), 20_000, 3).unwrap();
    assert!(r.passes, "{r:?}");
    // a wrong sign on the (p − n) term is detected
    let bad = WishartSpec::with_p(30, 31).unwrap();
    assert!(matches!(
        wishart_ibp_check(&bad, &phi, &h11, 10, 1),
        Err(freeconv::Error::Precondition(_))
    ));
}

#[test]
fn containment() {
    let a0 = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-2.0, 0.0)]);
    let pencil = CoefficientPencil::new(a0, vec![]).unwrap();
    let r = spectrum_containment(&pencil, &Ensemble::Wigner(EntryDistribution::gaussian()), 5, 1e-9, &[1, 2]).unwrap();
    assert_eq!(r.pass_rate, 1.0);

    let seeds: Vec<u64> = (0..20).collect();
    let sc = spectrum_containment(&f_sc(), &Ensemble::Wigner(EntryDistribution::gaussian()), 400, 0.2, &seeds).unwrap();
    assert!(sc.pass_rate >= 0.95, "{sc:?}");
    let mp = spectrum_containment(&f_sc(), &Ensemble::wishart(1.0).unwrap(), 400, 0.2, &seeds).unwrap();
    assert!(mp.pass_rate >= 0.95);
    assert_eq!(mp.support.len(), 1);
    assert!(mp.support[0].0.abs() < 5e-2 && (mp.support[0].1 - 4.0).abs() < 1e-2, "{:?}", mp.support);
}

#[test]
fn norm_convergence_small() {
    let seeds: Vec<u64> = (0..10).collect();
    let p = parse("x1", 1).unwrap();
    let r = norm_convergence(&p, &Ensemble::Wigner(EntryDistribution::gaussian()), &[100, 400], &seeds).unwrap();
    assert!((r.prediction - 2.0).abs() < 1e-3);
    assert!(r.points[1].median_deviation <= 0.15);
    // non-self-adjoint polynomials go through p*p
    let q = parse("i*x1", 1).unwrap();
    let r = norm_convergence(&q, &Ensemble::Wigner(EntryDistribution::gaussian()), &[200], &seeds[..4]).unwrap();
    assert!((r.prediction - 2.0).abs() < 1e-3);
    assert!(r.points[0].median_deviation <= 0.2);
}

#[test]
fn slope_fit() {
    let pts: Vec<ScalingPoint> = [10usize, 20, 40]
        .iter()
        .map(|&n| ScalingPoint { n, value: 3.0 / (n * n) as f64, stderr: 1e-3 / (n * n) as f64 })
        .collect();
    let r = ScalingReport::new(pts.clone()).unwrap();
    assert!((r.slope.unwrap() + 2.0).abs() < 1e-12);
    let mut noisy = pts.clone();
    noisy[1].stderr = noisy[1].value / 2.0;
    assert!(ScalingReport::new(noisy).unwrap().slope.is_none());
    assert!(ScalingReport::new(pts[..2].to_vec()).unwrap().slope.is_none());
    let mut unordered = pts;
    unordered.swap(0, 1);
    assert!(ScalingReport::new(unordered).is_err());
}
