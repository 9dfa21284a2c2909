mod common;

use common::*;
use memlqr::*;

fn setup() -> (Vec<LinearSystem64>, QuadraticCost64, MoreauConfig64) {
    let (family, cost) = benchmark();
    (sample_realizations(&family, 4, 0).unwrap(), cost, MoreauConfig::default())
}

#[test]
fn single_system_has_no_heterogeneity() {
    let (systems, cost, cfg) = setup();
    let one = &systems[..1];
    let probes = probe_policies(one, &cost, 8, 3).unwrap();
    let c = estimate_analysis_constants(one, &cost, &probes, &cfg).unwrap();
    assert_eq!(c.sigma_het_sq, 0.0);
}

#[test]
fn benchmark_estimates_are_positive_and_finite() {
    let (systems, cost, cfg) = setup();
    let probes = probe_policies(&systems, &cost, 20, 0).unwrap();
    assert_eq!(probes.len(), 20);
    let c = estimate_analysis_constants(&systems, &cost, &probes, &cfg).unwrap();
    for (name, v) in [
        ("mu", c.mu),
        ("ell_bar", c.ell_bar),
        ("l_lambda", c.l_lambda),
        ("kappa", c.kappa),
        ("sigma", c.sigma_het()),
        ("zeta", c.zeta),
    ] {
        assert!(v.is_finite() && v > 0.0, "{name} = {v}");
    }
    assert!(c.sigma_het_sq_sum >= c.sigma_het_sq);
    eprintln!("{c:?}");
}

#[test]
fn empty_probe_set_is_rejected() {
    let (systems, cost, cfg) = setup();
    assert!(matches!(estimate_analysis_constants(&systems, &cost, &[], &cfg), Err(Error::Argument(_))));
}

#[test]
fn gradient_dominance_holds_on_held_out_probes() {
    let (systems, cost, cfg) = setup();
    let fit = probe_policies(&systems, &cost, 20, 0).unwrap();
    let c = estimate_analysis_constants(&systems, &cost, &fit, &cfg).unwrap();
    let held_out = &probe_policies(&systems, &cost, 40, 77).unwrap()[systems.len()..];
    for k in held_out {
        for s in &systems {
            let opt = cost_value(s, &cost, &solve_dare(s, &cost).unwrap().k).unwrap().to_f64();
            let gap = cost_value(s, &cost, k).unwrap().to_f64() - opt;
            let g2 = exact_gradient(s, &cost, k).unwrap().norm_squared();
            assert!(gap <= 2.0 * (c.mu / 2.0) * g2 + 1e-9 * opt, "gap {gap} vs {}", c.mu / 2.0 * g2);
        }
    }
}

#[test]
fn envelope_gradient_dominance_on_probes() {
    let (systems, cost, cfg) = setup();
    let probes = probe_policies(&systems, &cost, 20, 0).unwrap();
    let c = estimate_analysis_constants(&systems, &cost, &probes, &cfg).unwrap();
    let factor = c.mu / 2.0 + 1.0 / (2.0 * cfg.lambda);
    for k in &probes {
        for s in &systems {
            let opt = cost_value(s, &cost, &solve_dare(s, &cost).unwrap().k).unwrap().to_f64();
            let g = envelope_gradient(s, &cost, k, &cfg).unwrap();
            let gap = g.prox.envelope_value - opt;
            assert!(gap <= 2.0 * factor * g.gradient.norm_squared() + 1e-9 * opt);
        }
    }
}

#[test]
fn envelope_smoothness_on_near_probe_pairs() {
    let (systems, cost, cfg) = setup();
    let probes = probe_policies(&systems, &cost, 12, 0).unwrap();
    let c = estimate_analysis_constants(&systems, &cost, &probes, &cfg).unwrap();
    for (a, ka) in probes.iter().enumerate() {
        for kb in &probes[a + 1..] {
            let d = (ka - kb).norm();
            if d > c.zeta || d == 0.0 {
                continue;
            }
            for s in &systems {
                let ga = envelope_gradient(s, &cost, ka, &cfg).unwrap().gradient;
                let gb = envelope_gradient(s, &cost, kb, &cfg).unwrap().gradient;
                assert!((ga - gb).norm() <= c.l_lambda * d * (1.0 + 1e-9));
            }
        }
    }
}

#[test]
fn schedule_flags_follow_their_definitions() {
    let cfg = MemlqrConfig64::default();
    let flags = cfg.schedule_flags(0.01);
    assert!(flags.alpha);
    assert!(flags.beta);
    assert!(!flags.eta_bar);
    let tuned = MemlqrConfig { outer_iters: 100, alpha: 0.05, inner_iters: 2, beta: 1.0, ..MemlqrConfig::default() };
    assert!(tuned.schedule_flags(0.01).eta_bar);
    assert!(!cfg.schedule_flags(10.0).alpha);
}
