mod common;

use common::*;
use memlqr::scalar::frob_dot;
use memlqr::*;

fn cosine(a: &Matrix64, b: &Matrix64) -> f64 {
    frob_dot(a, b) / (a.norm() * b.norm())
}

fn averaged_estimate(sys: &LinearSystem64, cost: &QuadraticCost64, k: &Matrix64, cfg: &ZerothOrderConfig64, count: u64) -> Matrix64 {
    let mut sum = Matrix64::zeros(k.nrows(), k.ncols());
    for j in 0..count {
        sum += zeroth_order_gradient(sys, cost, k, &cfg.with_stream(&[j])).unwrap();
    }
    sum / count as f64
}

#[test]
fn averaged_scalar_estimate_aligns_with_exact_gradient() {
    let sys = scalar_system(0.9, 1.0);
    let cost = unit_scalar_cost();
    for k in [0.0, 0.2, 0.9] {
        let exact = exact_gradient(&sys, &cost, &k1(k)).unwrap();
        let avg = averaged_estimate(&sys, &cost, &k1(k), &ZerothOrderConfig::default(), 50);
        assert!(cosine(&avg, &exact) >= 0.9, "k={k}");
    }
}

#[test]
fn averaged_benchmark_estimate_aligns_with_exact_gradient() {
    let (family, cost) = benchmark();
    let sys = sample_realizations(&family, 1, 0).unwrap().remove(0);
    let k = solve_dare(&family.nominal(), &cost).unwrap().k;
    let exact = exact_gradient(&sys, &cost, &k).unwrap();
    let avg = averaged_estimate(&sys, &cost, &k, &ZerothOrderConfig::default(), 50);
    let c = cosine(&avg, &exact);
    assert!(c >= 0.9, "cosine {c}");
}

#[test]
fn small_radius_long_horizon_is_accurate() {
    let sys = scalar_system(0.9, 1.0);
    let cost = unit_scalar_cost();
    let cfg = ZerothOrderConfig { num_samples: 500, radius: 1e-3, horizon: 200, ..ZerothOrderConfig::default() };
    for k in [0.0, 0.3] {
        let exact = exact_gradient(&sys, &cost, &k1(k)).unwrap();
        let est = zeroth_order_gradient(&sys, &cost, &k1(k), &cfg).unwrap();
        let err = rel_err(&est, &exact);
        assert!(err <= 0.2, "k={k}: relative error {err}");
    }
}

#[test]
fn same_seed_same_estimate() {
    let (sys, cost, k) = random_instance(8, 4, 2);
    for antithetic in [false, true] {
        let cfg = ZerothOrderConfig { num_samples: 1, seed: 17, antithetic, ..ZerothOrderConfig::default() };
        let a = zeroth_order_gradient(&sys, &cost, &k, &cfg).unwrap();
        let b = zeroth_order_gradient(&sys, &cost, &k, &cfg).unwrap();
        assert_eq!(a, b);
    }
    let cfg = ZerothOrderConfig::default();
    let a = zeroth_order_gradient(&sys, &cost, &k, &cfg).unwrap();
    let b = zeroth_order_gradient(&sys, &cost, &k, &cfg.with_stream(&[1])).unwrap();
    assert_ne!(a, b);
}

#[test]
fn model_free_descent_keeps_stability_on_benchmark() {
    let (family, cost) = benchmark();
    let sys = sample_realizations(&family, 1, 3).unwrap().remove(0);
    let k0 = solve_dare(&family.nominal(), &cost).unwrap().k;
    let mode = GradientMode::ZerothOrder(ZerothOrderConfig::default());
    let run = policy_gradient_descent(&sys, &cost, &k0, 1e-4, 20, &mode).unwrap();
    assert!(run.iterates.iter().all(|k| is_stabilizing(&sys, k)));
    assert!(run.costs.iter().all(|c| c.is_finite()));
}
