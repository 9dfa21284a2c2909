//! Empirical estimates of the regularity constants that the convergence
//! theory assumes: gradient dominance `μ`, local smoothness `ℓ̄`, envelope
//! smoothness `L_λ` and gradient heterogeneity `σ`.
//!
//! None of these has a closed form for the LQR cost; the estimates are maxima
//! over a finite probe set and carry no guarantee beyond it.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linsys::{is_stabilizing, LinearSystem};
use crate::lqr::{evaluate, solve_dare, QuadraticCost};
use crate::moreau::{prox, MoreauConfig};
use crate::scalar::{frob, frob_sq, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConstants<T> {
    /// Smallest `μ` with `C_i(K) - C_i* ≤ (μ/2)‖∇C_i(K)‖²` on every probe.
    pub mu: T,
    /// Largest gradient difference quotient over probe pairs within `zeta`.
    pub ell_bar: T,
    /// Envelope smoothness estimate.
    pub l_lambda: T,
    /// `λ / ℓ̄`; the smoothness transfer needs this above one.
    pub kappa: T,
    /// `ℓ̄/(κ - 1)` when `κ > 1`.
    pub l_lambda_theory: Option<T>,
    /// `max_K (1/V) Σ_i ‖∇C_i(K) - (1/V) Σ_j ∇C_j(K)‖²` (mean-gradient form).
    pub sigma_het_sq: T,
    /// Same with the summed gradient `Σ_j ∇C_j(K)` as reference.
    pub sigma_het_sq_sum: T,
    /// Pair radius used for the smoothness estimates.
    pub zeta: T,
}

impl<T: Scalar> AnalysisConstants<T> {
    pub fn sigma_het(&self) -> T {
        self.sigma_het_sq.sqrt()
    }
}

/// Probe policies: every realization's Riccati gain plus random convex
/// combinations of them, keeping only policies that stabilize all
/// realizations.
pub fn probe_policies<T: Scalar>(
    systems: &[LinearSystem<T>],
    cost: &QuadraticCost<T>,
    count: usize,
    seed: u64,
) -> Result<Vec<DMatrix<T>>> {
    if systems.is_empty() {
        return Err(Error::Argument("need at least one realization".into()));
    }
    let gains = systems
        .iter()
        .map(|s| solve_dare(s, cost).map(|d| d.k))
        .collect::<Result<Vec<_>>>()?;
    let jointly_stable = |k: &DMatrix<T>| systems.iter().all(|s| is_stabilizing(s, k));
    let mut probes: Vec<DMatrix<T>> = gains.iter().filter(|k| jointly_stable(k)).cloned().collect();
    probes.truncate(count);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attempts = 0;
    while probes.len() < count && attempts < 100 * count.max(1) {
        attempts += 1;
        let w: Vec<f64> = gains.iter().map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
        let total: f64 = w.iter().sum();
        let mut k = DMatrix::zeros(gains[0].nrows(), gains[0].ncols());
        for (g, wi) in gains.iter().zip(&w) {
            k += g * T::lit(wi / total);
        }
        if jointly_stable(&k) {
            probes.push(k);
        }
    }
    Ok(probes)
}

/// Estimates the regularity constants on `probes`, which must all stabilize
/// every realization.
pub fn estimate_analysis_constants<T: Scalar>(
    systems: &[LinearSystem<T>],
    cost: &QuadraticCost<T>,
    probes: &[DMatrix<T>],
    moreau: &MoreauConfig<T>,
) -> Result<AnalysisConstants<T>> {
    if probes.is_empty() {
        return Err(Error::Argument("probe set is empty".into()));
    }
    if systems.is_empty() {
        return Err(Error::Argument("need at least one realization".into()));
    }
    let v = T::lit(systems.len() as f64);
    let optimal = systems
        .iter()
        .map(|s| solve_dare(s, cost).and_then(|d| evaluate(s, cost, &d.k)).map(|e| e.value))
        .collect::<Result<Vec<_>>>()?;

    // grads[probe][system]
    let mut grads = Vec::with_capacity(probes.len());
    let mut mu = T::zero();
    let mut sigma_mean = T::zero();
    let mut sigma_sum = T::zero();
    for k in probes {
        let evals = systems.iter().map(|s| evaluate(s, cost, k)).collect::<Result<Vec<_>>>()?;
        for (e, &opt) in evals.iter().zip(&optimal) {
            let gap = e.value - opt;
            let g2 = frob_sq(&e.gradient);
            if g2 > T::zero() && gap > T::zero() {
                let ratio = T::lit(2.0) * gap / g2;
                if ratio > mu {
                    mu = ratio;
                }
            }
        }
        let total = evals.iter().fold(DMatrix::zeros(k.nrows(), k.ncols()), |acc, e| acc + &e.gradient);
        let mean = &total / v;
        let spread = |reference: &DMatrix<T>| {
            evals.iter().fold(T::zero(), |acc, e| acc + frob_sq(&(&e.gradient - reference))) / v
        };
        let (sm, ss) = (spread(&mean), spread(&total));
        if sm > sigma_mean {
            sigma_mean = sm;
        }
        if ss > sigma_sum {
            sigma_sum = ss;
        }
        grads.push(evals.into_iter().map(|e| e.gradient).collect::<Vec<_>>());
    }
    if !(mu > T::zero()) {
        mu = T::machine_eps();
    }

    let mut pairs = Vec::new();
    let mut distances = Vec::new();
    for a in 0..probes.len() {
        for b in a + 1..probes.len() {
            let d = frob(&(&probes[a] - &probes[b]));
            if d > T::zero() {
                distances.push(d);
                pairs.push((a, b, d));
            }
        }
    }
    distances.sort_by(|x, y| x.partial_cmp(y).expect("finite distances"));
    let zeta = distances.get(distances.len().saturating_sub(1) / 2).copied().unwrap_or(T::zero());
    let near: Vec<(usize, usize, T)> = pairs.into_iter().filter(|&(_, _, d)| d <= zeta).collect();

    let mut ell_bar = T::zero();
    for &(a, b, d) in &near {
        for (ga, gb) in grads[a].iter().zip(&grads[b]) {
            let q = frob(&(ga - gb)) / d;
            if q > ell_bar {
                ell_bar = q;
            }
        }
    }

    let mut l_emp = T::zero();
    if !near.is_empty() {
        let prox_points = probes
            .iter()
            .map(|k| systems.iter().map(|s| prox(s, cost, k, moreau).map(|p| p.k_bar)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        for &(a, b, d) in &near {
            for (pa, pb) in prox_points[a].iter().zip(&prox_points[b]) {
                let ga = (&probes[a] - pa) * moreau.lambda;
                let gb = (&probes[b] - pb) * moreau.lambda;
                let q = frob(&(ga - gb)) / d;
                if q > l_emp {
                    l_emp = q;
                }
            }
        }
    }
    if !(ell_bar > T::zero()) {
        ell_bar = T::machine_eps();
    }
    if !(l_emp > T::zero()) {
        l_emp = moreau.lambda;
    }
    let kappa = moreau.lambda / ell_bar;
    let l_lambda_theory = (kappa > T::one()).then(|| ell_bar / (kappa - T::one()));
    let l_lambda = match l_lambda_theory {
        Some(t) if t > l_emp => t,
        _ => l_emp,
    };
    Ok(AnalysisConstants {
        mu,
        ell_bar,
        l_lambda,
        kappa,
        l_lambda_theory,
        sigma_het_sq: sigma_mean,
        sigma_het_sq_sum: sigma_sum,
        zeta,
    })
}
