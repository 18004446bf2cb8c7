use freeconv::ensembles::*;
use freeconv::linalg::{c, hermitian_eigenvalues, C64};
use statrs::function::gamma::gamma;

fn sample_stats(dist: &EntryDistribution, n: usize, seed: u64) -> (f64, f64, f64, f64) {
    let mut rng = RngStream::new(seed, 0).rng();
    let (mut s1, mut s2, mut s4, mut s8) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..n {
        let x = dist.sample(&mut rng);
        let x2 = x * x;
        s1 += x;
        s2 += x2;
        s4 += x2 * x2;
        s8 += x2 * x2 * x2 * x2;
    }
    let nf = n as f64;
    let m4 = s4 / nf;
    let se4 = ((s8 / nf - m4 * m4) / nf).sqrt();
    (s1 / nf, s2 / nf, m4, se4)
}

#[test]
fn exp_power_constants_match_gamma_closed_form() {
    for alpha in [1.0, 1.5, 2.0, 3.0] {
        let d = EntryDistribution::exp_power(alpha).unwrap();
        let i = |q: f64| gamma((q + 1.0) / alpha) / alpha;
        let k4 = i(4.0) * i(0.0) / (i(2.0) * i(2.0)) - 3.0;
        assert!((d.kappa4() - k4).abs() < 1e-10, "alpha {alpha}: {} vs {k4}", d.kappa4());
        assert!((d.moment(2) - 1.0).abs() < 1e-11);
    }
}

#[test]
fn shipped_cumulants() {
    assert_eq!(EntryDistribution::gaussian().kappa4(), 0.0);
    assert!((EntryDistribution::uniform().kappa4() + 1.2).abs() < 1e-15);
    assert!((EntryDistribution::exp_power(1.0).unwrap().kappa4() - 3.0).abs() < 1e-10);
    assert!((EntryDistribution::uniform().moment(4) - 1.8).abs() < 1e-14);
}

#[test]
fn sampled_moments_agree_with_quadrature() {
    let dists = [
        EntryDistribution::gaussian(),
        EntryDistribution::uniform(),
        EntryDistribution::exp_power(1.0).unwrap(),
        EntryDistribution::exp_power(1.5).unwrap(),
    ];
    for (k, d) in dists.iter().enumerate() {
        let (m1, m2, m4, se4) = sample_stats(d, 10_000_000, 100 + k as u64);
        assert!(m1.abs() < 5.0 / 1e7f64.sqrt() * 2.0, "{d}: mean {m1}");
        assert!((m2 - 1.0).abs() < 0.01, "{d}: variance {m2}");
        assert!(
            (m4 - 3.0 - d.kappa4()).abs() <= 4.0 * se4,
            "{d}: sample kappa4 {} vs {} (se {se4})",
            m4 - 3.0,
            d.kappa4()
        );
    }
}

#[test]
fn wigner_matrices() {
    let g = EntryDistribution::gaussian();
    let mut rng = RngStream::new(1, 0).rng();
    let x = sample_wigner(&g, 1000, &mut rng);
    assert_eq!(x, x.adjoint());
    let tr2 = (&x * &x).trace().re / 1000.0;
    assert!((0.9..=1.1).contains(&tr2), "{tr2}");

    let u = EntryDistribution::uniform();
    let x = sample_wigner(&u, 1000, &mut RngStream::new(2, 0).rng());
    let x2 = &x * &x;
    let tr4 = (&x2 * &x2).trace().re / 1000.0;
    assert!((1.85..=2.15).contains(&tr4), "{tr4}");

    let a = sample_wigner(&u, 50, &mut RngStream::new(9, 4).rng());
    let b = sample_wigner(&u, 50, &mut RngStream::new(9, 4).rng());
    assert_eq!(a, b);
}

#[test]
fn wigner_second_moment_bias_scales_like_inverse_n() {
    // E tr X² = 1 exactly; the sample mean of tr X² fluctuates at O(1/n)
    let g = EntryDistribution::gaussian();
    for n in [100, 400, 1600] {
        let x = sample_wigner(&g, n, &mut RngStream::new(3, n as u64).rng());
        let tr2: f64 = x.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
        assert!((tr2 - 1.0).abs() < 10.0 / n as f64, "n = {n}: {tr2}");
    }
    assert_eq!(wigner_trace_moment(&g, 100, 2), 1.0);
}

#[test]
fn wishart_matrices() {
    let spec = WishartSpec::new(500, 1.0).unwrap();
    let y = sample_wishart(&spec, &mut RngStream::new(4, 0).rng());
    assert_eq!(y, y.adjoint());
    let eig = hermitian_eigenvalues(&y);
    assert!(eig[0] >= -1e-10);
    let tr = y.trace().re / 500.0;
    assert!((0.9..=1.1).contains(&tr), "{tr}");

    let spec = WishartSpec::new(500, 2.0).unwrap();
    let y = sample_wishart(&spec, &mut RngStream::new(5, 0).rng());
    let top = *hermitian_eigenvalues(&y).last().unwrap();
    let edge = (2f64.sqrt() + 1.0).powi(2);
    assert!((top - edge).abs() <= 0.3, "{top} vs {edge}");

    let spec = WishartSpec::with_p(1, 1).unwrap();
    let mut rng = RngStream::new(6, 0).rng();
    let mean: f64 = (0..100_000).map(|_| sample_wishart(&spec, &mut rng)[(0, 0)].re).sum::<f64>() / 1e5;
    assert!((0.97..=1.03).contains(&mean), "{mean}");
}

#[test]
fn wishart_exact_moments_match_sampling() {
    let spec = WishartSpec::with_p(20, 30).unwrap();
    let mut rng = RngStream::new(7, 0).rng();
    let reps = 4000;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..reps {
        let y = sample_wishart(&spec, &mut rng);
        let v = (&y * &y).trace().re / 20.0;
        s += v;
        s2 += v * v;
    }
    let mean = s / reps as f64;
    let se = ((s2 / reps as f64 - mean * mean) / reps as f64).sqrt();
    let exact = wishart_trace_moment(20, 30, 2);
    assert!((mean - exact).abs() <= 4.0 * se, "{mean} vs {exact} (se {se})");
}

#[test]
fn gaussian_first_order_expansion_is_exact() {
    let phi = ResolventTestFunction { z: c(0.0, 2.0) };
    let mut rng = RngStream::new(8, 0).rng();
    let r = cumulant_expansion_check(&EntryDistribution::gaussian(), &phi, 1, 1_000_000, &mut rng, None).unwrap();
    assert!(r.value.norm() <= 3.0 * r.stderr, "{} vs {}", r.value, r.stderr);
}

#[test]
fn uniform_third_order_expansion_matches_exact_remainder() {
    // exact remainder by quadrature over the uniform law on [−√3, √3]
    let z = c(0.0, 2.0);
    let a = 3f64.sqrt();
    let phi_k = |t: f64, k: i32| -> C64 {
        let fact: f64 = (1..=k).map(f64::from).product();
        (z - t).inv().powi(k + 1) * fact
    };
    let expect = |f: &dyn Fn(f64) -> C64| {
        let re = integrate(&|t| f(t).re, -a, a, 1e-13) / (2.0 * a);
        let im = integrate(&|t| f(t).im, -a, a, 1e-13) / (2.0 * a);
        c(re, im)
    };
    let k4 = -1.2;
    let exact = expect(&|t| phi_k(t, 0) * t) - expect(&|t| phi_k(t, 1)) - expect(&|t| phi_k(t, 3)) * (k4 / 6.0);

    let d = EntryDistribution::uniform();
    let phi = ResolventTestFunction { z };
    let mut rng = RngStream::new(9, 0).rng();
    let r = cumulant_expansion_check(&d, &phi, 3, 1_000_000, &mut rng, None).unwrap();
    assert!((r.value - exact).norm() <= 3.0 * r.stderr, "{} vs {exact} ({})", r.value, r.stderr);
    assert!(r.value.norm() <= r.bound);
}

#[test]
fn constant_function_and_sample_limit() {
    let mut rng = RngStream::new(10, 0).rng();
    let phi = ConstantTestFunction(c(2.0, -1.0));
    let r = cumulant_expansion_check(&EntryDistribution::gaussian(), &phi, 2, 100_000, &mut rng, None).unwrap();
    assert!(r.value.norm() <= 4.0 * r.stderr);
    let err = cumulant_expansion_check(&EntryDistribution::gaussian(), &phi, 2, 100, &mut rng, Some(1e-6));
    assert!(matches!(err, Err(freeconv::Error::InsufficientSamples(_))));
}
