//! Model-free policy-gradient estimation from perturbed finite-horizon
//! rollouts (smoothing over a Frobenius sphere).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linsys::{InitialStateSampler, LinearSystem};
use crate::lqr::QuadraticCost;
use crate::scalar::{derive_seed, frob, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct ZerothOrderConfig<T> {
    /// Number of perturbation directions.
    pub num_samples: usize,
    /// Smoothing radius `r`.
    pub radius: T,
    /// Rollout horizon `ℓ`.
    pub horizon: usize,
    pub seed: u64,
    /// Evaluate each direction at `K + U` and `K - U` from the same initial
    /// state.
    pub antithetic: bool,
}

impl<T: Scalar> Default for ZerothOrderConfig<T> {
    fn default() -> Self {
        Self { num_samples: 200, radius: T::lit(0.05), horizon: 100, seed: 0, antithetic: true }
    }
}

impl<T: Scalar> ZerothOrderConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 || self.horizon == 0 || !(self.radius > T::zero()) {
            return Err(Error::Argument("zeroth-order config needs num_samples ≥ 1, horizon ≥ 1, radius > 0".into()));
        }
        Ok(())
    }

    /// Same config on an independent random stream.
    pub fn with_stream(&self, stream: &[u64]) -> Self {
        Self { seed: derive_seed(self.seed, stream), ..self.clone() }
    }
}

/// `Σ_{t<ℓ} x_tᵀ (Q + KᵀRK) x_t` along `x_{t+1} = (A - BK) x_t`.
pub fn finite_horizon_cost<T: Scalar>(
    system: &LinearSystem<T>,
    cost: &QuadraticCost<T>,
    k: &DMatrix<T>,
    x0: &DVector<T>,
    horizon: usize,
) -> T {
    let f = &system.a - &system.b * k;
    let w = cost.closed_loop_weight(k);
    let mut x = x0.clone();
    let mut total = T::zero();
    for _ in 0..horizon {
        total += x.dot(&(&w * &x));
        x = &f * &x;
        if !total.is_finite() {
            break;
        }
    }
    total
}

fn sphere_direction<T: Scalar, R: Rng>(rng: &mut R, m: usize, n: usize, radius: T) -> DMatrix<T> {
    loop {
        let g = DMatrix::from_fn(m, n, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)));
        let norm = frob(&g);
        if norm > T::zero() {
            return g * (radius / norm);
        }
    }
}

/// `(d / (N r²)) Σ_j Ĉ_j U_j` with `U_j` uniform on the radius-`r` Frobenius
/// sphere and `d = m n`. In antithetic mode each `Ĉ_j` is replaced by
/// `(Ĉ(K + U_j) - Ĉ(K - U_j)) / 2` from a shared initial state, which has the
/// same expectation.
///
/// Perturbations whose rollout cost overflows are redrawn; more than
/// `10 N` rejections in total is an error. Sample `j` uses its own stream
/// `derive_seed(seed, j)`, so the result does not depend on scheduling.
pub fn zeroth_order_gradient<T: Scalar>(
    system: &LinearSystem<T>,
    cost: &QuadraticCost<T>,
    k: &DMatrix<T>,
    config: &ZerothOrderConfig<T>,
) -> Result<DMatrix<T>> {
    config.validate()?;
    cost.check_system(system)?;
    system.check_gain(k)?;
    let (m, n) = k.shape();
    let sampler = InitialStateSampler::new(&cost.sigma0)?;
    let cap = 10 * config.num_samples;
    let half = T::lit(0.5);

    let samples: Vec<(Option<DMatrix<T>>, usize)> = (0..config.num_samples)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[j as u64]));
            let mut rejected = 0;
            while rejected <= cap {
                let u = sphere_direction(&mut rng, m, n, config.radius);
                let x0 = sampler.sample(&mut rng);
                let plus = finite_horizon_cost(system, cost, &(k + &u), &x0, config.horizon);
                let weight = if config.antithetic {
                    let minus = finite_horizon_cost(system, cost, &(k - &u), &x0, config.horizon);
                    (plus - minus) * half
                } else {
                    plus
                };
                if weight.is_finite() {
                    return (Some(u * weight), rejected);
                }
                rejected += 1;
            }
            (None, rejected)
        })
        .collect();

    let rejected: usize = samples.iter().map(|(_, r)| r).sum();
    if rejected > cap || samples.iter().any(|(s, _)| s.is_none()) {
        return Err(Error::TooManyRejections { rejected, cap });
    }
    let mut sum = DMatrix::zeros(m, n);
    for (s, _) in samples {
        sum += s.expect("checked above");
    }
    let d = T::lit((m * n) as f64);
    let scale = d / (T::lit(config.num_samples as f64) * config.radius * config.radius);
    Ok(sum * scale)
}

/// Empirical infinite-horizon cost estimate: mean finite-horizon cost over
/// `count` initial states drawn from `Σ₀` on the given seed.
pub fn empirical_cost<T: Scalar>(
    system: &LinearSystem<T>,
    cost: &QuadraticCost<T>,
    k: &DMatrix<T>,
    count: usize,
    horizon: usize,
    seed: u64,
) -> Result<T> {
    if count == 0 {
        return Err(Error::Argument("need at least one initial state".into()));
    }
    let sampler = InitialStateSampler::new(&cost.sigma0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = T::zero();
    for _ in 0..count {
        let x0 = sampler.sample(&mut rng);
        total += finite_horizon_cost(system, cost, k, &x0, horizon);
    }
    Ok(total / T::lit(count as f64))
}
