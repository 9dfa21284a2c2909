//! Infinite-horizon LQR cost, its exact policy gradient, the Riccati oracle
//! and single-system policy-gradient descent.

use std::cmp::Ordering;
use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linsys::{closed_loop, spectral_radius, LinearSystem, SCHUR_MARGIN};
use crate::lyapunov::solve_discrete_lyapunov;
use crate::scalar::{frob, frob_sq, symmetrize, Scalar};
use crate::zeroth_order::{zeroth_order_gradient, ZerothOrderConfig};

/// Stage-cost weights `(Q, R)` and initial-state second moment `Σ₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost<T: Scalar> {
    pub q: DMatrix<T>,
    pub r: DMatrix<T>,
    pub sigma0: DMatrix<T>,
}

impl<T: Scalar> QuadraticCost<T> {
    /// Validates `Q ⪰ 0`, `R ≻ 0`, `Σ₀ ≻ 0`. Inputs within `1e-12` of
    /// symmetric are symmetrized.
    pub fn new(q: DMatrix<T>, r: DMatrix<T>, sigma0: DMatrix<T>) -> Result<Self> {
        let q = checked_symmetric("Q", q)?;
        let r = checked_symmetric("R", r)?;
        let sigma0 = checked_symmetric("Σ₀", sigma0)?;
        if q.nrows() != sigma0.nrows() {
            return Err(Error::Shape(format!("Q is {}x{}, Σ₀ is {}x{}", q.nrows(), q.nrows(), sigma0.nrows(), sigma0.nrows())));
        }
        let scale = T::one() + frob(&q);
        if q.symmetric_eigenvalues().iter().any(|&e| e < -T::lit(1e-12) * scale) {
            return Err(Error::Argument("Q must be positive semidefinite".into()));
        }
        if r.clone().cholesky().is_none() {
            return Err(Error::Argument("R must be positive definite".into()));
        }
        if sigma0.clone().cholesky().is_none() {
            return Err(Error::Argument("Σ₀ must be positive definite".into()));
        }
        Ok(Self { q, r, sigma0 })
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn m(&self) -> usize {
        self.r.nrows()
    }

    pub(crate) fn check_system(&self, system: &LinearSystem<T>) -> Result<()> {
        if system.n() != self.n() || system.m() != self.m() {
            return Err(Error::Shape(format!(
                "cost is for (n={}, m={}), system is (n={}, m={})",
                self.n(),
                self.m(),
                system.n(),
                system.m()
            )));
        }
        Ok(())
    }

    /// `Q + Kᵀ R K`.
    pub fn closed_loop_weight(&self, k: &DMatrix<T>) -> DMatrix<T> {
        &self.q + k.transpose() * &self.r * k
    }
}

fn checked_symmetric<T: Scalar>(name: &str, m: DMatrix<T>) -> Result<DMatrix<T>> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::Shape(format!("{name} must be square and nonempty")));
    }
    if !m.iter().all(|x| x.is_finite()) {
        return Err(Error::Argument(format!("{name} has non-finite entries")));
    }
    let asym = frob(&(&m - m.transpose()));
    if asym > T::lit(1e-12) * (T::one() + frob(&m)) {
        return Err(Error::Argument(format!("{name} is not symmetric")));
    }
    Ok(symmetrize(&m))
}

/// LQR cost value; non-stabilizing policies have infinite cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cost<T> {
    Finite(T),
    Infinite,
}

impl<T: Scalar> Cost<T> {
    pub fn is_finite(&self) -> bool {
        matches!(self, Cost::Finite(_))
    }

    pub fn finite(&self) -> Option<T> {
        match *self {
            Cost::Finite(v) => Some(v),
            Cost::Infinite => None,
        }
    }

    /// Maps the sentinel to `f64::INFINITY`.
    pub fn to_f64(&self) -> f64 {
        self.finite().map_or(f64::INFINITY, Scalar::as_f64)
    }

    pub fn add(self, other: Cost<T>) -> Cost<T> {
        match (self, other) {
            (Cost::Finite(a), Cost::Finite(b)) => Cost::Finite(a + b),
            _ => Cost::Infinite,
        }
    }
}

impl<T: Scalar> PartialOrd for Cost<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (Cost::Finite(a), Cost::Finite(b)) => a.partial_cmp(b),
            (Cost::Finite(_), Cost::Infinite) => Some(Ordering::Less),
            (Cost::Infinite, Cost::Finite(_)) => Some(Ordering::Greater),
            (Cost::Infinite, Cost::Infinite) => Some(Ordering::Equal),
        }
    }
}

impl<T: Scalar> fmt::Display for Cost<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cost::Finite(v) => write!(f, "{}", v.as_f64()),
            Cost::Infinite => f.write_str("inf"),
        }
    }
}

/// Cost together with the Lyapunov solutions it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct CostReport<T: Scalar> {
    pub value: Cost<T>,
    /// Value matrix `P_K`; present iff stable.
    pub p: Option<DMatrix<T>>,
    /// State correlation `Σ_K`; present iff stable.
    pub sigma: Option<DMatrix<T>>,
    pub spectral_radius: T,
}

impl<T: Scalar> CostReport<T> {
    pub fn stable(&self) -> bool {
        self.value.is_finite()
    }
}

fn stable_closed_loop<T: Scalar>(system: &LinearSystem<T>, cost: &QuadraticCost<T>, k: &DMatrix<T>) -> Result<DMatrix<T>> {
    cost.check_system(system)?;
    let f = closed_loop(system, k)?;
    let rho = spectral_radius(&f);
    if !(rho < T::one() - T::lit(SCHUR_MARGIN)) {
        return Err(Error::Unstable { spectral_radius: rho.as_f64() });
    }
    Ok(f)
}

/// `P = Q + KᵀRK + (A-BK)ᵀ P (A-BK)`.
pub fn solve_value_matrix<T: Scalar>(system: &LinearSystem<T>, cost: &QuadraticCost<T>, k: &DMatrix<T>) -> Result<DMatrix<T>> {
    let f = stable_closed_loop(system, cost, k)?;
    solve_discrete_lyapunov(&f.transpose(), &cost.closed_loop_weight(k))
}

/// `Σ = Σ₀ + (A-BK) Σ (A-BK)ᵀ`.
pub fn solve_state_correlation<T: Scalar>(system: &LinearSystem<T>, cost: &QuadraticCost<T>, k: &DMatrix<T>) -> Result<DMatrix<T>> {
    let f = stable_closed_loop(system, cost, k)?;
    solve_discrete_lyapunov(&f, &cost.sigma0)
}

/// Full cost report: `value = tr((Q + KᵀRK) Σ_K)` when stabilizing, the
/// infinite sentinel otherwise.
pub fn lqr_cost<T: Scalar>(system: &LinearSystem<T>, cost: &QuadraticCost<T>, k: &DMatrix<T>) -> Result<CostReport<T>> {
    cost.check_system(system)?;
    let f = closed_loop(system, k)?;
    let rho = spectral_radius(&f);
    if !(rho < T::one() - T::lit(SCHUR_MARGIN)) {
        return Ok(CostReport { value: Cost::Infinite, p: None, sigma: None, spectral_radius: rho });
    }
    let weight = cost.closed_loop_weight(k);
    let p = solve_discrete_lyapunov(&f.transpose(), &weight)?;
    let sigma = solve_discrete_lyapunov(&f, &cost.sigma0)?;
    let value = (&weight * &sigma).trace();
    Ok(CostReport { value: Cost::Finite(value), p: Some(p), sigma: Some(sigma), spectral_radius: rho })
}

/// Cost only, via a single Lyapunov solve: `tr(P_K Σ₀)`.
pub fn cost_value<T: Scalar>(system: &LinearSystem<T>, cost: &QuadraticCost<T>, k: &DMatrix<T>) -> Result<Cost<T>> {
    match solve_value_matrix(system, cost, k) {
        Ok(p) => Ok(Cost::Finite((&p * &cost.sigma0).trace())),
        Err(Error::Unstable { .. }) => Ok(Cost::Infinite),
        Err(e) => Err(e),
    }
}

/// Value and exact gradient at a stabilizing policy.
#[derive(Debug, Clone)]
pub struct Evaluation<T: Scalar> {
    pub value: T,
    pub gradient: DMatrix<T>,
    pub p: DMatrix<T>,
    pub sigma: DMatrix<T>,
}

/// Value and `∇C(K) = 2[(R + BᵀPB)K - BᵀPA] Σ_K`.
pub fn evaluate<T: Scalar>(system: &LinearSystem<T>, cost: &QuadraticCost<T>, k: &DMatrix<T>) -> Result<Evaluation<T>> {
    let f = stable_closed_loop(system, cost, k)?;
    let p = solve_discrete_lyapunov(&f.transpose(), &cost.closed_loop_weight(k))?;
    let sigma = solve_discrete_lyapunov(&f, &cost.sigma0)?;
    let bt_p = system.b.transpose() * &p;
    let gain_term = (&cost.r + &bt_p * &system.b) * k - &bt_p * &system.a;
    let gradient = gain_term * &sigma * T::lit(2.0);
    let value = (&p * &cost.sigma0).trace();
    Ok(Evaluation { value, gradient, p, sigma })
}

pub fn exact_gradient<T: Scalar>(system: &LinearSystem<T>, cost: &QuadraticCost<T>, k: &DMatrix<T>) -> Result<DMatrix<T>> {
    Ok(evaluate(system, cost, k)?.gradient)
}

/// Optimal gain and value matrix of the discrete algebraic Riccati equation.
#[derive(Debug, Clone)]
pub struct DareSolution<T: Scalar> {
    pub k: DMatrix<T>,
    pub p: DMatrix<T>,
    pub iterations: usize,
}

pub const DARE_MAX_ITERS: usize = 100_000;

fn riccati_gain<T: Scalar>(system: &LinearSystem<T>, cost: &QuadraticCost<T>, p: &DMatrix<T>) -> Option<DMatrix<T>> {
    let bt_p = system.b.transpose() * p;
    let s = &cost.r + &bt_p * &system.b;
    s.cholesky().map(|c| c.solve(&(&bt_p * &system.a)))
}

/// Riccati value iteration `P ← Q + AᵀPA - AᵀPB (R + BᵀPB)⁻¹ BᵀPA` to a
/// relative change of `1e-13`, followed by Hewer (policy-iteration) polishing
/// until the exact gradient vanishes to `1e-8 (1 + ‖K‖)`.
pub fn solve_dare<T: Scalar>(system: &LinearSystem<T>, cost: &QuadraticCost<T>) -> Result<DareSolution<T>> {
    cost.check_system(system)?;
    let a = &system.a;
    let mut p = cost.q.clone();
    let mut converged_at = None;
    let tol = T::lit(1e-13);
    for it in 1..=DARE_MAX_ITERS {
        let k = riccati_gain(system, cost, &p).ok_or(Error::NotStabilizable { iterations: it })?;
        let f = a - &system.b * &k;
        // Joseph form keeps the iterate symmetric positive semidefinite.
        let next = symmetrize(&(cost.closed_loop_weight(&k) + f.transpose() * &p * &f));
        if !next.iter().all(|x| x.is_finite()) {
            return Err(Error::NotStabilizable { iterations: it });
        }
        let change = frob(&(&next - &p));
        p = next;
        if change <= tol * (T::one() + frob(&p)) {
            converged_at = Some(it);
            break;
        }
    }
    let iterations = converged_at.ok_or(Error::NotStabilizable { iterations: DARE_MAX_ITERS })?;
    let mut k = riccati_gain(system, cost, &p).ok_or(Error::NotStabilizable { iterations })?;
    if !crate::linsys::is_stabilizing(system, &k) {
        return Err(Error::NotStabilizable { iterations });
    }
    let grad_tol = |k: &DMatrix<T>| T::lit(1e-8) * (T::one() + frob(k));
    for _ in 0..5 {
        let g = exact_gradient(system, cost, &k)?;
        if frob(&g) <= grad_tol(&k) {
            break;
        }
        let pk = solve_value_matrix(system, cost, &k)?;
        match riccati_gain(system, cost, &pk) {
            Some(next) if crate::linsys::is_stabilizing(system, &next) => {
                k = next;
                p = pk;
            }
            _ => break,
        }
    }
    Ok(DareSolution { k, p, iterations })
}

/// How policy gradients are obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum GradientMode<T: Scalar> {
    /// Model-based, from the two Lyapunov solves.
    Exact,
    /// Model-free, from perturbed finite-horizon rollouts.
    ZerothOrder(ZerothOrderConfig<T>),
}

impl<T: Scalar> GradientMode<T> {
    /// Gradient at `k`. For the zeroth-order estimator `stream` selects an
    /// independent random stream derived from the configured seed.
    pub fn gradient(&self, system: &LinearSystem<T>, cost: &QuadraticCost<T>, k: &DMatrix<T>, stream: &[u64]) -> Result<DMatrix<T>> {
        match self {
            GradientMode::Exact => exact_gradient(system, cost, k),
            GradientMode::ZerothOrder(cfg) => {
                let cfg = cfg.with_stream(stream);
                zeroth_order_gradient(system, cost, k, &cfg)
            }
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, GradientMode::Exact)
    }
}

/// Smallest step before a descent run declares a stall.
pub const MIN_STEP: f64 = 1e-12;

/// Result of [`policy_gradient_descent`].
#[derive(Debug, Clone)]
pub struct DescentRun<T: Scalar> {
    pub k: DMatrix<T>,
    /// Exact cost at every iterate, `iters + 1` entries.
    pub costs: Vec<T>,
    /// Step size in effect after each iteration.
    pub steps: Vec<T>,
    /// Every iterate `K⁰ … K^N`.
    pub iterates: Vec<DMatrix<T>>,
}

/// `Kⁿ⁺¹ = Kⁿ - η ∇C(Kⁿ)`.
///
/// A trial step that destabilizes is rejected and `η` halved; in exact mode a
/// step that increases the cost is also rejected, so the cost trace is
/// non-increasing. The halved step persists for later iterations. A trial
/// whose cost rises only within round-off leaves the iterate unchanged.
pub fn policy_gradient_descent<T: Scalar>(
    system: &LinearSystem<T>,
    cost: &QuadraticCost<T>,
    k_init: &DMatrix<T>,
    step: T,
    iters: usize,
    mode: &GradientMode<T>,
) -> Result<DescentRun<T>> {
    if !(step > T::zero()) {
        return Err(Error::Argument("step size must be positive".into()));
    }
    let mut k = k_init.clone();
    let mut current = cost_value(system, cost, &k)?
        .finite()
        .ok_or_else(|| Error::Unstable { spectral_radius: crate::linsys::closed_loop_spectral_radius(system, &k).map(Scalar::as_f64).unwrap_or(f64::INFINITY) })?;
    let mut eta = step;
    let mut costs = Vec::with_capacity(iters + 1);
    let mut steps = Vec::with_capacity(iters);
    let mut iterates = Vec::with_capacity(iters + 1);
    costs.push(current);
    iterates.push(k.clone());
    for n in 0..iters {
        let g = mode.gradient(system, cost, &k, &[n as u64])?;
        let roundoff = roundoff_band(current);
        loop {
            let trial = &k - &g * eta;
            match cost_value(system, cost, &trial)? {
                Cost::Finite(c) if !mode.is_exact() || c <= current => {
                    k = trial;
                    current = c;
                    break;
                }
                // Converged to working precision: hold the iterate.
                Cost::Finite(c) if c <= current + roundoff => break,
                _ => {}
            }
            eta *= T::lit(0.5);
            if eta < T::lit(MIN_STEP) {
                return Err(Error::Stall { iterations: n, step: eta.as_f64() });
            }
        }
        costs.push(current);
        steps.push(eta);
        iterates.push(k.clone());
    }
    Ok(DescentRun { k, costs, steps, iterates })
}

/// Cost differences below this are indistinguishable from round-off.
pub(crate) fn roundoff_band<T: Scalar>(value: T) -> T {
    T::machine_eps() * T::lit(64.0) * (T::one() + value.abs())
}

/// `‖∇C(K)‖²_F`, a convenience for logging.
pub fn gradient_norm_sq<T: Scalar>(system: &LinearSystem<T>, cost: &QuadraticCost<T>, k: &DMatrix<T>) -> Result<T> {
    Ok(frob_sq(&exact_gradient(system, cost, k)?))
}
