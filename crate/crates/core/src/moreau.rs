//! Moreau envelope of a single client's LQR cost:
//! `C_λ(K) = min_K̃ C(K̃) + (λ/2)‖K̃ - K‖²`, its gradient `λ(K - prox[K])`,
//! and the local relaxation step toward the proximal point.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linsys::{is_stabilizing, LinearSystem};
use crate::lqr::{cost_value, evaluate, Cost, Evaluation, GradientMode, QuadraticCost};
use crate::scalar::{frob, frob_dot, frob_sq, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct MoreauConfig<T> {
    /// Regularization weight `λ > 0`.
    pub lambda: T,
    /// Proximal accuracy `δ > 0`.
    pub delta: T,
    pub inner_max_iters: usize,
    /// Initial inner step. Exact mode backtracks from it; zeroth-order mode
    /// uses it as a fixed step.
    pub inner_step: T,
    /// Current estimate of the local smoothness constant of the client costs,
    /// if known.
    pub smoothness_estimate: Option<T>,
}

impl<T: Scalar> Default for MoreauConfig<T> {
    fn default() -> Self {
        Self {
            lambda: T::lit(0.2),
            delta: T::lit(1e-4),
            inner_max_iters: 500,
            inner_step: T::one(),
            smoothness_estimate: None,
        }
    }
}

impl<T: Scalar> MoreauConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > T::zero()) || !(self.delta > T::zero()) {
            return Err(Error::Argument("Moreau config needs λ > 0 and δ > 0".into()));
        }
        if self.inner_max_iters == 0 || !(self.inner_step > T::zero()) {
            return Err(Error::Argument("Moreau config needs inner_max_iters ≥ 1 and inner_step > 0".into()));
        }
        Ok(())
    }

    /// Inner gradient-norm threshold `λδ/2`.
    pub fn stationarity_threshold(&self) -> T {
        self.lambda * self.delta * T::lit(0.5)
    }

    /// Whether `λ > 2√2 ℓ̂` holds for the recorded smoothness estimate.
    /// `None` when no estimate is recorded.
    pub fn heterogeneity_condition(&self) -> Option<bool> {
        self.smoothness_estimate.map(|l| self.lambda > T::lit(2.0 * 2f64.sqrt()) * l)
    }

    /// Logs a warning when the heterogeneity condition is known to fail.
    pub fn warn_if_weak(&self) {
        if self.heterogeneity_condition() == Some(false) {
            log::warn!(
                "λ = {} does not exceed 2√2·ℓ̂ = {}",
                self.lambda.as_f64(),
                2.0 * 2f64.sqrt() * self.smoothness_estimate.unwrap().as_f64()
            );
        }
    }
}

/// Approximate proximal point and its certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxResult<T: Scalar> {
    pub k_bar: DMatrix<T>,
    /// `‖∇C(K̄) + λ(K̄ - K)‖_F`.
    pub inner_residual: T,
    pub iterations: usize,
    /// `C(K̄) + (λ/2)‖K̄ - K‖²`.
    pub envelope_value: T,
    pub converged: bool,
    /// `C(K)` at the anchor.
    pub anchor_cost: T,
}

/// `C(K̃) + (λ/2)‖K̃ - K‖²_F`; infinite when `K̃` is not stabilizing.
pub fn inner_objective<T: Scalar>(
    system: &LinearSystem<T>,
    cost: &QuadraticCost<T>,
    k_tilde: &DMatrix<T>,
    anchor: &DMatrix<T>,
    lambda: T,
) -> Result<Cost<T>> {
    let reg = frob_sq(&(k_tilde - anchor)) * lambda * T::lit(0.5);
    Ok(cost_value(system, cost, k_tilde)?.add(Cost::Finite(reg)))
}

/// Exact-gradient proximal solve; see [`prox_with`].
pub fn prox<T: Scalar>(
    system: &LinearSystem<T>,
    cost: &QuadraticCost<T>,
    anchor: &DMatrix<T>,
    config: &MoreauConfig<T>,
) -> Result<ProxResult<T>> {
    prox_with(system, cost, anchor, config, &GradientMode::Exact, &[])
}

/// Gradient descent on the inner objective from `K̃⁰ = K` using
/// `∇C(K̃) + λ(K̃ - K)`, stopping once that residual is at most `λδ/2` or after
/// `inner_max_iters` steps.
///
/// Exact mode: Barzilai-Borwein trial steps with Armijo backtracking
/// (factor 0.5, sufficient decrease `1e-4`); destabilizing trials are
/// rejected, so the inner objective never increases. Once value differences
/// sink below round-off a trial is also accepted if it stays within round-off
/// of the current value and shrinks the gradient.
///
/// Zeroth-order mode: fixed steps of `inner_step` on estimated gradients,
/// halved whenever a trial destabilizes. Diagnostics are evaluated exactly.
pub fn prox_with<T: Scalar>(
    system: &LinearSystem<T>,
    cost: &QuadraticCost<T>,
    anchor: &DMatrix<T>,
    config: &MoreauConfig<T>,
    mode: &GradientMode<T>,
    stream: &[u64],
) -> Result<ProxResult<T>> {
    config.validate()?;
    let anchor_eval = evaluate(system, cost, anchor)?;
    match mode {
        GradientMode::Exact => prox_exact(system, cost, anchor, anchor_eval, config),
        GradientMode::ZerothOrder(_) => prox_model_free(system, cost, anchor, anchor_eval.value, config, mode, stream),
    }
}

fn inner_gradient<T: Scalar>(e: &Evaluation<T>, k_tilde: &DMatrix<T>, anchor: &DMatrix<T>, lambda: T) -> DMatrix<T> {
    &e.gradient + (k_tilde - anchor) * lambda
}

fn prox_exact<T: Scalar>(
    system: &LinearSystem<T>,
    cost: &QuadraticCost<T>,
    anchor: &DMatrix<T>,
    anchor_eval: Evaluation<T>,
    config: &MoreauConfig<T>,
) -> Result<ProxResult<T>> {
    let lambda = config.lambda;
    let half_lambda = lambda * T::lit(0.5);
    let threshold = config.stationarity_threshold();
    let armijo = T::lit(1e-4);
    let eps = T::machine_eps();
    let anchor_cost = anchor_eval.value;

    let mut k = anchor.clone();
    let mut value = anchor_cost;
    let mut grad = inner_gradient(&anchor_eval, &k, anchor, lambda);
    let mut step = config.inner_step;
    let mut iterations = 0;
    let mut residual = frob(&grad);

    while residual > threshold && iterations < config.inner_max_iters {
        let grad_sq = residual * residual;
        let roundoff = eps * T::lit(16.0) * (T::one() + value.abs());
        let mut t = step;
        let (next_k, next_eval, next_value) = loop {
            let trial = &k - &grad * t;
            if is_stabilizing(system, &trial) {
                let e = evaluate(system, cost, &trial)?;
                let v = e.value + frob_sq(&(&trial - anchor)) * half_lambda;
                let sufficient = v <= value - armijo * t * grad_sq;
                let flat = v <= value + roundoff && frob(&inner_gradient(&e, &trial, anchor, lambda)) < residual;
                if v.is_finite() && (sufficient || flat) {
                    break (trial, e, v);
                }
            }
            t *= T::lit(0.5);
            if t * residual <= eps * (T::one() + frob(&k)) {
                return Err(Error::ProxStall {
                    iterations,
                    residual: residual.as_f64(),
                    last_iterate: row_major(&k),
                });
            }
        };
        let next_grad = inner_gradient(&next_eval, &next_k, anchor, lambda);
        let s = &next_k - &k;
        let y = &next_grad - &grad;
        let sy = frob_dot(&s, &y);
        // Barzilai-Borwein guess for the next trial step.
        step = if sy > T::zero() { frob_sq(&s) / sy } else { t * T::lit(2.0) };
        k = next_k;
        value = next_value;
        grad = next_grad;
        residual = frob(&grad);
        iterations += 1;
    }

    Ok(ProxResult {
        k_bar: k,
        inner_residual: residual,
        iterations,
        envelope_value: value,
        converged: residual <= threshold,
        anchor_cost,
    })
}

fn prox_model_free<T: Scalar>(
    system: &LinearSystem<T>,
    cost: &QuadraticCost<T>,
    anchor: &DMatrix<T>,
    anchor_cost: T,
    config: &MoreauConfig<T>,
    mode: &GradientMode<T>,
    stream: &[u64],
) -> Result<ProxResult<T>> {
    let lambda = config.lambda;
    let mut k = anchor.clone();
    let mut step = config.inner_step;
    let mut iterations = 0;
    let mut sub = stream.to_vec();
    sub.push(0);
    let last = sub.len() - 1;
    while iterations < config.inner_max_iters {
        sub[last] = iterations as u64;
        let grad = mode.gradient(system, cost, &k, &sub)? + (&k - anchor) * lambda;
        loop {
            let trial = &k - &grad * step;
            if is_stabilizing(system, &trial) {
                k = trial;
                break;
            }
            step *= T::lit(0.5);
            if step < T::lit(crate::lqr::MIN_STEP) {
                return Err(Error::ProxStall {
                    iterations,
                    residual: frob(&grad).as_f64(),
                    last_iterate: row_major(&k),
                });
            }
        }
        iterations += 1;
    }
    let e = evaluate(system, cost, &k)?;
    let residual = frob(&inner_gradient(&e, &k, anchor, lambda));
    let envelope_value = e.value + frob_sq(&(&k - anchor)) * lambda * T::lit(0.5);
    Ok(ProxResult {
        k_bar: k,
        inner_residual: residual,
        iterations,
        envelope_value,
        converged: residual <= config.stationarity_threshold(),
        anchor_cost,
    })
}

fn row_major<T: Scalar>(m: &DMatrix<T>) -> Vec<f64> {
    m.transpose().iter().map(|x| x.as_f64()).collect()
}

/// `C_λ(K)`, the inner objective at the approximate proximal point.
pub fn envelope_value<T: Scalar>(
    system: &LinearSystem<T>,
    cost: &QuadraticCost<T>,
    k: &DMatrix<T>,
    config: &MoreauConfig<T>,
) -> Result<T> {
    Ok(prox(system, cost, k, config)?.envelope_value)
}

/// `∇C_λ(K) = λ(K - K̄)` with the proximal result as accuracy certificate.
#[derive(Debug, Clone)]
pub struct EnvelopeGradient<T: Scalar> {
    pub gradient: DMatrix<T>,
    pub prox: ProxResult<T>,
}

pub fn envelope_gradient<T: Scalar>(
    system: &LinearSystem<T>,
    cost: &QuadraticCost<T>,
    k: &DMatrix<T>,
    config: &MoreauConfig<T>,
) -> Result<EnvelopeGradient<T>> {
    let prox = prox(system, cost, k, config)?;
    Ok(EnvelopeGradient { gradient: (k - &prox.k_bar) * config.lambda, prox })
}

/// One client relaxation step and the proximal solve it used.
#[derive(Debug, Clone)]
pub struct LocalStep<T: Scalar> {
    pub next: DMatrix<T>,
    pub prox: ProxResult<T>,
}

/// `K - αλ(K - K̄) = (1 - αλ) K + αλ K̄`.
pub fn local_update<T: Scalar>(
    system: &LinearSystem<T>,
    cost: &QuadraticCost<T>,
    k_current: &DMatrix<T>,
    config: &MoreauConfig<T>,
    alpha: T,
) -> Result<LocalStep<T>> {
    local_update_with(system, cost, k_current, config, alpha, &GradientMode::Exact, &[])
}

pub fn local_update_with<T: Scalar>(
    system: &LinearSystem<T>,
    cost: &QuadraticCost<T>,
    k_current: &DMatrix<T>,
    config: &MoreauConfig<T>,
    alpha: T,
    mode: &GradientMode<T>,
    stream: &[u64],
) -> Result<LocalStep<T>> {
    let prox = prox_with(system, cost, k_current, config, mode, stream)?;
    let next = relax(k_current, &prox.k_bar, alpha * config.lambda);
    Ok(LocalStep { next, prox })
}

/// `K - w (K - K̄)`.
pub(crate) fn relax<T: Scalar>(k: &DMatrix<T>, k_bar: &DMatrix<T>, w: T) -> DMatrix<T> {
    k - (k - k_bar) * w
}
