mod common;

use common::*;
use memlqr::lyapunov::{residual, solve_discrete_lyapunov};
use memlqr::*;
use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Plain fixed-point iteration `X ← M + F X Fᵀ` until the update is below `tol`.
fn lyapunov_fixed_point(f: &Matrix64, mm: &Matrix64, tol: f64) -> Matrix64 {
    let mut x = mm.clone();
    for _ in 0..1_000_000 {
        let next = mm + f * &x * f.transpose();
        let diff = (&next - &x).norm();
        x = next;
        if diff <= tol * (1.0 + x.norm()) {
            break;
        }
    }
    x
}

#[test]
fn value_matrix_matches_fixed_point_iteration() {
    for seed in 0..20 {
        let (sys, cost, k) = random_instance(seed, 4, 2);
        let p = solve_value_matrix(&sys, &cost, &k).unwrap();
        let f = closed_loop(&sys, &k).unwrap();
        let w = &cost.q + k.transpose() * &cost.r * &k;
        let oracle = lyapunov_fixed_point(&f.transpose(), &w, 1e-15);
        assert!((&p - &oracle).norm() <= 1e-10 * (1.0 + oracle.norm()), "seed {seed}");
        let res = residual(&f.transpose(), &w, &p);
        assert!(res <= 1e-10 * (1.0 + p.norm()), "seed {seed}: residual {res}");
        assert!((&p - p.transpose()).norm() <= 1e-12 * (1.0 + p.norm()));
    }
}

#[test]
fn state_correlation_matches_truncated_series_on_benchmark() {
    let (family, cost) = benchmark();
    for sys in sample_realizations(&family, 4, 0).unwrap() {
        let k = solve_dare(&sys, &cost).unwrap().k;
        let sigma = solve_state_correlation(&sys, &cost, &k).unwrap();
        let f = closed_loop(&sys, &k).unwrap();
        let mut term = cost.sigma0.clone();
        let mut series = DMatrix::zeros(4, 4);
        for _ in 0..=10_000 {
            series += &term;
            term = &f * term * f.transpose();
        }
        let err = (&sigma - &series).norm() / series.norm();
        assert!(err <= 1e-8, "relative error {err}");
        // Σ_K ⪰ Σ₀
        let gap = (&sigma - &cost.sigma0).symmetric_eigenvalues();
        assert!(gap.min() >= -1e-9);
        let res = residual(&f, &cost.sigma0, &sigma);
        assert!(res <= 1e-10 * (1.0 + sigma.norm()));
    }
}

#[test]
fn lyapunov_solver_agrees_with_oracle_near_the_unit_circle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let g = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let f = &g * (0.97 / spectral_radius(&g));
        let mm = random_spd(&mut rng, 3, 0.2);
        let x = solve_discrete_lyapunov(&f, &mm).unwrap();
        let oracle = lyapunov_fixed_point(&f, &mm, 1e-15);
        assert!((&x - &oracle).norm() <= 1e-8 * (1.0 + oracle.norm()));
    }
}

#[test]
fn exact_gradient_matches_central_differences_on_random_instances() {
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let (sys, cost, k) = random_instance(1000 + seed, 4, 2);
        let g = exact_gradient(&sys, &cost, &k).unwrap();
        let fd = fd_gradient(&k, 1e-6, |kk| lqr_cost(&sys, &cost, kk).unwrap().value.to_f64());
        let err = rel_err(&g, &fd);
        worst = worst.max(err);
        assert!(err <= 1e-5, "seed {seed}: relative error {err}");
    }
    eprintln!("worst relative gradient error {worst:.3e}");
}

#[test]
fn trace_forms_of_the_cost_agree() {
    for seed in 0..30 {
        let (sys, cost, k) = random_instance(500 + seed, 4, 2);
        let report = lqr_cost(&sys, &cost, &k).unwrap();
        let v = report.value.to_f64();
        let p = report.p.as_ref().unwrap();
        let alt = (p * &cost.sigma0).trace();
        assert!((v - alt).abs() <= 1e-8 * (1.0 + v));
        assert_eq!(cost_value(&sys, &cost, &k).unwrap().finite().map(|c| (c - v).abs() <= 1e-8 * (1.0 + v)), Some(true));
    }
}

#[test]
fn scalar_dare_matches_value_iteration_oracle() {
    let (p_star, k_star) = scalar_dare_oracle(0.9, 1.0, 1.0, 1.0);
    let sys = scalar_system(0.9, 1.0);
    let cost = unit_scalar_cost();
    let dare = solve_dare(&sys, &cost).unwrap();
    assert!((dare.k[(0, 0)] - k_star).abs() <= 1e-10);
    assert!((dare.p[(0, 0)] - p_star).abs() <= 1e-9);
    assert!((k_star - 0.9 * p_star / (1.0 + p_star)).abs() <= 1e-12);
    let value = lqr_cost(&sys, &cost, &dare.k).unwrap().value.to_f64();
    assert!((value - p_star).abs() <= 1e-9 * p_star);
}

#[test]
fn dare_gradient_vanishes_on_benchmark_realizations() {
    let (family, cost) = benchmark();
    let mut systems = sample_realizations(&family, 6, 11).unwrap();
    systems.push(family.nominal());
    for sys in &systems {
        let dare = solve_dare(sys, &cost).unwrap();
        let g = exact_gradient(sys, &cost, &dare.k).unwrap();
        assert!(g.norm() <= 1e-8 * (1.0 + dare.k.norm()), "gradient {}", g.norm());
        assert!(closed_loop_spectral_radius(sys, &dare.k).unwrap() < 1.0);
    }
}

#[test]
fn scalar_policy_gradient_reaches_riccati_gain() {
    let (_, k_star) = scalar_dare_oracle(0.9, 1.0, 1.0, 1.0);
    let sys = scalar_system(0.9, 1.0);
    let cost = unit_scalar_cost();
    let run = policy_gradient_descent(&sys, &cost, &k1(0.0), 0.1, 500, &GradientMode::Exact).unwrap();
    let first_hit = run.iterates.iter().position(|k| (k[(0, 0)] - k_star).abs() <= 1e-6);
    assert!(first_hit.is_some_and(|n| n <= 500), "final gain {} vs {k_star}", run.k[(0, 0)]);
    assert!(run.costs.windows(2).all(|w| w[1] <= w[0]));
}

/// Characteristic polynomial coefficients by Faddeev-LeVerrier, highest
/// degree first (monic).
fn char_poly(a: &Matrix64) -> Vec<f64> {
    let n = a.nrows();
    let mut coeffs = vec![1.0];
    let mut mk = DMatrix::<f64>::zeros(n, n);
    let mut c = 1.0;
    for k in 1..=n {
        mk = a * &mk + DMatrix::identity(n, n) * c;
        c = -(a * &mk).trace() / k as f64;
        coeffs.push(c);
    }
    coeffs
}

/// Durand-Kerner roots of a monic polynomial.
fn poly_roots(coeffs: &[f64]) -> Vec<Complex<f64>> {
    let n = coeffs.len() - 1;
    let eval = |z: Complex<f64>| coeffs.iter().fold(Complex::new(0.0, 0.0), |acc, &c| acc * z + c);
    let seed = Complex::new(0.4, 0.9);
    let mut roots: Vec<Complex<f64>> = (0..n).map(|i| seed.powu(i as u32)).collect();
    for _ in 0..5000 {
        let prev = roots.clone();
        for i in 0..n {
            let mut denom = Complex::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            let z = roots[i];
            roots[i] = z - eval(z) / denom;
        }
        let moved: f64 = roots.iter().zip(&prev).map(|(a, b)| (a - b).norm()).sum();
        if moved < 1e-15 {
            break;
        }
    }
    roots
}

#[test]
fn spectral_radius_matches_characteristic_polynomial_roots() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for trial in 0..200 {
        let n = 1 + trial % 4;
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let oracle = poly_roots(&char_poly(&a)).iter().map(|z| z.norm()).fold(0.0, f64::max);
        let rho = spectral_radius(&a);
        assert!((rho - oracle).abs() <= 1e-6 * (1.0 + oracle), "n={n}: {rho} vs {oracle}");
        let sys = LinearSystem::new(a.clone(), DMatrix::zeros(n, 1), 0).unwrap();
        let k = DMatrix::zeros(1, n);
        if (oracle - 1.0).abs() > 1e-6 {
            assert_eq!(is_stabilizing(&sys, &k), oracle < 1.0);
        }
    }
}

#[test]
fn benchmark_riccati_gain_is_stabilizing_by_polynomial_oracle() {
    let (family, cost) = benchmark();
    let nominal = family.nominal();
    let k = solve_dare(&nominal, &cost).unwrap().k;
    let f = closed_loop(&nominal, &k).unwrap();
    let oracle = poly_roots(&char_poly(&f)).iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(oracle < 1.0);
    assert!((spectral_radius(&f) - oracle).abs() <= 1e-8);
}

#[test]
fn benchmark_realizations_have_finite_radius_and_reproduce_affine_sum() {
    let (family, _) = benchmark();
    let systems = sample_realizations(&family, 4, 0).unwrap();
    for sys in &systems {
        let prov = sys.provenance.as_ref().unwrap();
        let mut a = family.a0().clone();
        for (d, t) in prov.delta.iter().zip(family.a_terms()) {
            a += t * *d;
        }
        let mut b = family.b0().clone();
        for (g, t) in prov.gamma.iter().zip(family.b_terms()) {
            b += t * *g;
        }
        assert_eq!(sys.a, a);
        assert_eq!(sys.b, b);
        let rho = spectral_radius(&sys.a);
        assert!(rho.is_finite());
        let oracle = poly_roots(&char_poly(&sys.a)).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!((rho - oracle).abs() <= 1e-8);
    }
}
