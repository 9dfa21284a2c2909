mod common;

use common::*;
use memlqr::*;

/// Closed-form scalar cost for `a = 0.9, b = 1, Q = R = Σ₀ = 1`.
fn scalar_cost(k: f64) -> f64 {
    let f = 0.9 - k;
    if f.abs() >= 1.0 {
        f64::INFINITY
    } else {
        (1.0 + k * k) / (1.0 - f * f)
    }
}

fn config(lambda: f64) -> MoreauConfig64 {
    MoreauConfig { lambda, ..MoreauConfig::default() }
}

#[test]
fn scalar_prox_matches_grid_search() {
    let sys = scalar_system(0.9, 1.0);
    let cost = unit_scalar_cost();
    let cfg = config(1.0);
    let anchor = 0.0;
    let (mut best_k, mut best_v) = (f64::NAN, f64::INFINITY);
    for i in 0..=200_000 {
        let k = -0.5 + i as f64 * 1e-5;
        let v = scalar_cost(k) + 0.5 * (k - anchor).powi(2);
        if v < best_v {
            best_v = v;
            best_k = k;
        }
    }
    let p = prox(&sys, &cost, &k1(anchor), &cfg).unwrap();
    assert!(p.converged);
    assert!(p.inner_residual <= cfg.stationarity_threshold());
    assert!((p.k_bar[(0, 0)] - best_k).abs() <= 1e-4, "{} vs {best_k}", p.k_bar[(0, 0)]);
    assert!((p.envelope_value - best_v).abs() <= 1e-6 * best_v);

    let g = envelope_gradient(&sys, &cost, &k1(anchor), &cfg).unwrap();
    let grid_grad = cfg.lambda * (anchor - best_k);
    assert!((g.gradient[(0, 0)] - grid_grad).abs() <= cfg.lambda * 1e-4);
}

#[test]
fn inner_objective_hand_values() {
    let sys = scalar_system(0.0, 1.0);
    let cost = unit_scalar_cost();
    assert_eq!(inner_objective(&sys, &cost, &k1(0.0), &k1(0.0), 2.0).unwrap().finite(), Some(1.0));
    let v = inner_objective(&sys, &cost, &k1(0.5), &k1(0.0), 2.0).unwrap().to_f64();
    assert!((v - 23.0 / 12.0).abs() <= 1e-12);
    assert!(!inner_objective(&sys, &cost, &k1(2.5), &k1(0.0), 2.0).unwrap().is_finite());

    let sys = scalar_system(0.9, 1.0);
    let k_star = solve_dare(&sys, &cost).unwrap().k;
    let opt = cost_value(&sys, &cost, &k_star).unwrap().to_f64();
    let v = inner_objective(&sys, &cost, &k_star, &k_star, 0.7).unwrap().to_f64();
    assert!((v - opt).abs() <= 1e-12);
}

#[test]
fn prox_at_riccati_gain_is_fixed() {
    let (family, cost) = benchmark();
    for sys in sample_realizations(&family, 3, 5).unwrap() {
        let k_star = solve_dare(&sys, &cost).unwrap().k;
        let cfg = MoreauConfig::default();
        let p = prox(&sys, &cost, &k_star, &cfg).unwrap();
        assert!(p.converged);
        assert!(p.inner_residual <= cfg.stationarity_threshold());
        assert!((&p.k_bar - &k_star).norm() <= 1e-6);
        let opt = cost_value(&sys, &cost, &k_star).unwrap().to_f64();
        assert!((p.envelope_value - opt).abs() <= 1e-9 * opt);
        let g = envelope_gradient(&sys, &cost, &k_star, &cfg).unwrap();
        assert!(g.gradient.norm() <= cfg.lambda * cfg.delta);
    }
}

/// Largest `|C''|` of the scalar cost on `[k - w, k + w]`, by second differences.
fn scalar_curvature_bound(k: f64, w: f64) -> f64 {
    let h = 1e-4;
    (0..=200)
        .map(|i| k - w + 2.0 * w * i as f64 / 200.0)
        .map(|x| ((scalar_cost(x + h) - 2.0 * scalar_cost(x) + scalar_cost(x - h)) / (h * h)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn large_lambda_prox_stays_near_anchor() {
    let sys = scalar_system(0.9, 1.0);
    let cost = unit_scalar_cost();
    let cfg = config(1e6);
    for anchor in [0.0, 0.3, 0.8, 1.2] {
        let grad = exact_gradient(&sys, &cost, &k1(anchor)).unwrap()[(0, 0)].abs();
        let ell = scalar_curvature_bound(anchor, 1e-3);
        let p = prox(&sys, &cost, &k1(anchor), &cfg).unwrap();
        assert!(p.converged);
        let shift = (p.k_bar[(0, 0)] - anchor).abs();
        assert!(shift <= grad / (cfg.lambda - ell), "anchor {anchor}: {shift}");
        let c = scalar_cost(anchor);
        let gap = c - p.envelope_value;
        assert!(gap >= -1e-12 * c);
        assert!(gap <= grad * grad / (2.0 * (cfg.lambda - ell)) + 1e-12 * c, "anchor {anchor}: gap {gap}");
    }
}

#[test]
fn envelope_never_exceeds_cost() {
    for seed in 0..20 {
        let (sys, cost, k) = random_instance(200 + seed, 4, 2);
        for lambda in [0.2, 1.0, 10.0] {
            let cfg = config(lambda);
            let p = prox(&sys, &cost, &k, &cfg).unwrap();
            let c = cost_value(&sys, &cost, &k).unwrap().to_f64();
            assert!(p.envelope_value <= c + 1e-12 * c);
            assert!(is_stabilizing(&sys, &p.k_bar));
            if p.converged {
                assert!(p.inner_residual <= cfg.stationarity_threshold());
            }
        }
    }
}

#[test]
fn envelope_gradient_matches_central_differences() {
    let (family, cost) = benchmark();
    let cfg = MoreauConfig::default();
    let systems = sample_realizations(&family, 4, 0).unwrap();
    let k0 = solve_dare(&family.nominal(), &cost).unwrap().k;
    for sys in &systems {
        let g = envelope_gradient(sys, &cost, &k0, &cfg).unwrap();
        assert!(g.prox.converged);
        let fd = fd_gradient(&k0, 1e-5, |k| envelope_value(sys, &cost, k, &cfg).unwrap());
        let err = rel_err(&g.gradient, &fd);
        assert!(err <= 1e-3, "relative error {err}");
    }
    for seed in 0..10 {
        let (sys, cost, k) = random_instance(300 + seed, 4, 2);
        let cfg = config(1.0);
        let g = envelope_gradient(&sys, &cost, &k, &cfg).unwrap();
        if !g.prox.converged {
            continue;
        }
        let fd = fd_gradient(&k, 1e-5, |kk| envelope_value(&sys, &cost, kk, &cfg).unwrap());
        let err = rel_err(&g.gradient, &fd);
        assert!(err <= 1e-3, "seed {seed}: relative error {err}");
    }
}

#[test]
fn local_update_limits() {
    let (family, cost) = benchmark();
    let sys = sample_realization(&family, &[0.4, -0.2], &[0.1, 0.9]).unwrap();
    let k0 = solve_dare(&family.nominal(), &cost).unwrap().k;
    let cfg = MoreauConfig::default();
    let still = local_update(&sys, &cost, &k0, &cfg, 0.0).unwrap();
    assert_eq!(still.next, k0);
    let full = local_update(&sys, &cost, &k0, &cfg, 1.0 / cfg.lambda).unwrap();
    assert!((&full.next - &full.prox.k_bar).norm() <= 1e-14 * (1.0 + full.prox.k_bar.norm()));
}

#[test]
fn local_updates_decrease_the_envelope() {
    let (family, cost) = benchmark();
    let cfg = MoreauConfig::default();
    let k0 = solve_dare(&family.nominal(), &cost).unwrap().k;
    for sys in sample_realizations(&family, 4, 9).unwrap() {
        let mut k = k0.clone();
        let mut prev = envelope_value(&sys, &cost, &k, &cfg).unwrap();
        for _ in 0..20 {
            let step = local_update(&sys, &cost, &k, &cfg, 0.1).unwrap();
            k = step.next;
            assert!(is_stabilizing(&sys, &k));
            let now = envelope_value(&sys, &cost, &k, &cfg).unwrap();
            assert!(now <= prev + 1e-8, "{now} > {prev}");
            prev = now;
        }
    }
}

#[test]
fn unstable_anchor_is_rejected() {
    let sys = scalar_system(1.5, 1.0);
    let cost = unit_scalar_cost();
    assert!(matches!(prox(&sys, &cost, &k1(0.0), &MoreauConfig::default()), Err(Error::Unstable { .. })));
}
