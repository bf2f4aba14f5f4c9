//! Cross-checks against independent formulations.

use ldproj_core::dual::DualProblem;
use ldproj_core::estimators::brute_tail;
use ldproj_core::quadrature::adaptive_integrate;
use ldproj_core::sampling::{sample_direction, stream_rng};
use ldproj_core::PExponent;
use nalgebra::Vector2;
use statrs::distribution::{Continuous, ContinuousCDF, Gamma, Normal};
use statrs::function::gamma::{gamma_lr, ln_gamma};

/// Angular mass density of the γ_p product law on R² in polar coordinates.
fn angular_density(p: f64, phi: f64) -> f64 {
    let log_norm = (2.0f64).ln() + p.ln() / p + ln_gamma(1.0 + 1.0 / p);
    let g = phi.cos().abs().powf(p) + phi.sin().abs().powf(p);
    (-2.0 * log_norm - p.ln() + (2.0 / p) * p.ln() + ln_gamma(2.0 / p)).exp() * g.powf(-2.0 / p)
}

/// `P(W > a)` for `n = 2`: the event depends on the angle only.
fn polar_tail(p: f64, a: f64, theta: [f64; 2]) -> f64 {
    let w = |phi: f64| {
        let g = phi.cos().abs().powf(p) + phi.sin().abs().powf(p);
        2f64.powf(1.0 / p - 0.5) * (theta[0] * phi.cos() + theta[1] * phi.sin()) / g.powf(1.0 / p) - a
    };
    let two_pi = 2.0 * std::f64::consts::PI;
    let grid = 20_000;
    let mut cuts = vec![0.0];
    for i in 0..grid {
        let (mut lo, mut hi) = (two_pi * i as f64 / grid as f64, two_pi * (i + 1) as f64 / grid as f64);
        if (w(lo) > 0.0) != (w(hi) > 0.0) {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if (w(mid) > 0.0) == (w(lo) > 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            cuts.push(0.5 * (lo + hi));
        }
    }
    cuts.push(two_pi);
    cuts.windows(2)
        .filter(|c| w(0.5 * (c[0] + c[1])) > 0.0)
        .map(|c| {
            adaptive_integrate(|phi| angular_density(p, phi), c[0], c[1], 1e-13)
                .unwrap()
                .0
        })
        .sum()
}

#[test]
fn angular_density_is_normalized() {
    for p in [1.5, 2.0, 3.0] {
        let total = adaptive_integrate(|phi| angular_density(p, phi), 0.0, 2.0 * std::f64::consts::PI, 1e-13)
            .unwrap()
            .0;
        assert!((total - 1.0).abs() < 1e-11, "p={p}: {total}");
    }
}

#[test]
fn brute_tail_matches_polar_integral() {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let cases = [
        (3.0, 0.4, [0.6, 0.8]),
        (3.0, 0.7, [s, s]),
        (1.5, 0.3, [0.28, -0.96]),
        (2.0, 0.5, [1.0, 0.0]),
        (3.0, -0.2, [0.8, 0.6]),
    ];
    for (p, a, theta) in cases {
        let brute = brute_tail(PExponent::new(p).unwrap(), a, theta).unwrap();
        let polar = polar_tail(p, a, theta);
        assert!((brute - polar).abs() < 1e-8, "p={p} a={a}: {brute} vs {polar}");
    }
}

#[test]
fn brute_tail_axis_direction_closed_form() {
    // θ = (1, 0): the event is Y1 > 0 and |Y2| < k·Y1 with
    // k = (c^{-p} - 1)^{1/p}, c = a·2^{1/2-1/p}. With U = Y1^p/p ~ Gamma(1/p),
    // P = E[P(1/p, k^p U)]/2.
    for (p, a) in [(3.0, 0.4), (1.5, 0.5), (2.0, 0.3)] {
        let c: f64 = a * 2f64.powf(0.5 - 1.0 / p);
        let kp = c.powf(-p) - 1.0;
        let law = Gamma::new(1.0 / p, 1.0).unwrap();
        let upper = law.inverse_cdf(1.0 - 1e-16);
        let split = law.inverse_cdf(0.5);
        let integrand = |u: f64| law.pdf(u) * gamma_lr(1.0 / p, kp * u);
        // Substituting u = v^p removes the integrable singularity at zero.
        let head = adaptive_integrate(
            |v: f64| {
                if v > 0.0 {
                    integrand(v.powf(p)) * p * v.powf(p - 1.0)
                } else {
                    0.0
                }
            },
            0.0,
            split.powf(1.0 / p),
            1e-13,
        )
        .unwrap()
        .0;
        let tail = adaptive_integrate(integrand, split, upper, 1e-13).unwrap().0;
        let exact = 0.5 * (head + tail);
        let brute = brute_tail(PExponent::new(p).unwrap(), a, [1.0, 0.0]).unwrap();
        assert!((brute - exact).abs() < 1e-8, "p={p} a={a}: {brute} vs {exact}");
    }
}

#[test]
fn conjugate_hessian_is_inverse_of_dual_hessian() {
    for p in [1.5, 2.0, 3.0] {
        let problem = DualProblem::with_default_rule(PExponent::new(p).unwrap()).unwrap();
        for a in [0.1, 0.3, 0.5, 0.7] {
            let x = Vector2::new(a, 1.0);
            let cp = problem.conjugate(x).unwrap();
            let hinv = cp.hessian.try_inverse().unwrap();
            let h = 1e-5;
            for k in 0..2 {
                let mut e = Vector2::zeros();
                e[k] = h;
                let plus = problem.conjugate_from(x + e, cp.lambda).unwrap();
                let minus = problem.conjugate_from(x - e, cp.lambda).unwrap();
                // ∇Ψ* = λ, so the columns of Hess Ψ* are dλ/dx_k.
                let col = (plus.lambda - minus.lambda) / (2.0 * h);
                let exact = hinv.column(k);
                assert!((col - exact).norm() < 1e-4 * exact.norm(), "p={p} a={a} k={k}");
                // Gradient of the value itself.
                let grad = (plus.value - minus.value) / (2.0 * h);
                assert!((grad - cp.lambda[k]).abs() < 1e-6 * cp.lambda.norm().max(1.0));
            }
        }
    }
}

#[test]
fn rate_is_minimal_along_the_ray() {
    let taus: Vec<f64> = (0..=15).map(|i| 0.5 + 0.1 * i as f64).collect();
    for p in [1.5, 3.0] {
        let problem = DualProblem::with_default_rule(PExponent::new(p).unwrap()).unwrap();
        for a in [0.3, 0.7] {
            let base = problem.solve_dual(a).unwrap().rate;
            for (tau, v) in taus.iter().zip(problem.tau_scan(a, &taus)) {
                let v = v.unwrap();
                assert!(v >= base - 1e-10, "p={p} a={a} τ={tau}");
                if (tau - 1.0).abs() > 1e-9 {
                    assert!(v - base >= 1e-6, "p={p} a={a} τ={tau}: {}", v - base);
                }
            }
        }
    }
}

/// Quadratic Wasserstein distance between the empirical law of `√n θ_j` and
/// the standard normal, with midpoint quantiles.
fn w2_to_normal(n: usize, seed: u64) -> f64 {
    let d = sample_direction(n, &mut stream_rng(seed, 0)).unwrap();
    let mut x: Vec<f64> = d.theta.iter().map(|t| t * (n as f64).sqrt()).collect();
    x.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    let sum: f64 = x
        .iter()
        .enumerate()
        .map(|(j, v)| (v - normal.inverse_cdf((j as f64 + 0.5) / n as f64)).powi(2))
        .sum();
    (sum / n as f64).sqrt()
}

#[test]
fn empirical_direction_measure_approaches_normal() {
    let avg = |n: usize| (0..8).map(|s| w2_to_normal(n, s)).sum::<f64>() / 8.0;
    let (w1, w2, w3) = (avg(100), avg(1_000), avg(10_000));
    assert!(w1 > w2 && w2 > w3, "{w1} {w2} {w3}");
    assert!(w3 < 0.05);
}
