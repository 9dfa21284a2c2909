//! Federated meta-policy training over a set of realizations: the Moreau
//! envelope algorithm (MEMLQR), the averaging / first-order MAML / local-only
//! baselines, and the adaptation protocol on a held-out realization.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::analysis::AnalysisConstants;
use crate::error::{Error, Result};
use crate::linsys::{closed_loop_spectral_radius, is_stabilizing, LinearSystem, Policy, PolicyMeta};
use crate::lqr::{
    cost_value, exact_gradient, policy_gradient_descent, roundoff_band, Cost, GradientMode, QuadraticCost, MIN_STEP,
};
use crate::moreau::{local_update_with, prox, prox_with, MoreauConfig, ProxResult};
use crate::scalar::{frob_sq, Scalar};
use crate::zeroth_order::empirical_cost;

#[derive(Debug, Clone, PartialEq)]
pub struct MemlqrConfig<T: Scalar> {
    /// Outer (server) iterations `S`.
    pub outer_iters: usize,
    /// Local steps per client and outer iteration `P`.
    pub inner_iters: usize,
    /// Local step `α`.
    pub alpha: T,
    /// Server mixing weight `β ∈ (0, 1]`.
    pub beta: T,
    pub moreau: MoreauConfig<T>,
    pub gradient: GradientMode<T>,
    pub seed: u64,
    /// Constants used only to evaluate the step-size schedule conditions.
    pub analysis: Option<AnalysisConstants<T>>,
}

impl<T: Scalar> Default for MemlqrConfig<T> {
    fn default() -> Self {
        Self {
            outer_iters: 300,
            inner_iters: 2,
            alpha: T::lit(0.1),
            beta: T::one(),
            moreau: MoreauConfig::default(),
            gradient: GradientMode::Exact,
            seed: 0,
            analysis: None,
        }
    }
}

impl<T: Scalar> MemlqrConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.moreau.validate()?;
        if self.outer_iters == 0 || self.inner_iters == 0 {
            return Err(Error::Argument("MEMLQR needs S ≥ 1 and P ≥ 1".into()));
        }
        if !(self.alpha > T::zero()) || !(self.beta > T::zero() && self.beta <= T::one()) {
            return Err(Error::Argument("MEMLQR needs α > 0 and β ∈ (0, 1]".into()));
        }
        if self.alpha * self.moreau.lambda > T::one() {
            return Err(Error::Argument("MEMLQR needs αλ ≤ 1".into()));
        }
        if let GradientMode::ZerothOrder(z) = &self.gradient {
            z.validate()?;
        }
        Ok(())
    }

    /// Effective outer step `η̄ = αβP`.
    pub fn eta_bar(&self) -> T {
        self.alpha * self.beta * T::lit(self.inner_iters as f64)
    }

    /// Step-size schedule conditions of the convergence-rate bound, evaluated
    /// against an envelope smoothness estimate `L̂_λ`.
    pub fn schedule_flags(&self, l_lambda: T) -> ScheduleFlags {
        let s = T::lit(self.outer_iters as f64);
        let p = T::lit(self.inner_iters as f64);
        let two = T::lit(2.0);
        let lam = self.moreau.lambda;
        let beta_floor = {
            let b = two * l_lambda / s.sqrt();
            if b > T::lit(0.5) {
                b
            } else {
                T::lit(0.5)
            }
        };
        let target = T::one() / s.sqrt();
        let horizon_floor = T::lit(16.0) * l_lambda * l_lambda * (T::one() + T::lit(72.0) * lam * lam).powi(2);
        ScheduleFlags {
            alpha: self.alpha <= T::one() / (two * l_lambda * p),
            beta: self.beta >= beta_floor,
            eta_bar: (self.eta_bar() - target).abs() <= T::lit(1e-9) * target,
            horizon: s >= horizon_floor,
        }
    }
}

/// Which schedule conditions hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleFlags {
    /// `α ≤ 1/(2 L̂_λ P)`.
    pub alpha: bool,
    /// `β ≥ max{1/2, 2 L̂_λ/√S}`.
    pub beta: bool,
    /// `αβP = 1/√S`.
    pub eta_bar: bool,
    /// `S ≥ 16 L̂_λ² (1 + 72 λ²)²`.
    pub horizon: bool,
}

impl ScheduleFlags {
    pub fn all(&self) -> bool {
        self.alpha && self.beta && self.eta_bar && self.horizon
    }
}

/// What one client did during one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientRecord<T: Scalar> {
    /// `K_i^{s,p}` for `p = 0..=P`.
    pub iterates: Vec<DMatrix<T>>,
    /// `K̄` used at each local step.
    pub prox_points: Vec<DMatrix<T>>,
    /// Envelope value at each iterate; `P + 1` entries in exact mode, `P`
    /// otherwise (the terminal value is only evaluated with exact gradients).
    pub envelope_trace: Vec<T>,
    pub inner_residuals: Vec<T>,
    pub inner_iterations: Vec<usize>,
    pub converged: Vec<bool>,
    /// `ρ(A_j - B_j K_i^{s,P})` for every realization `j`.
    pub terminal_spectral_radii: Vec<T>,
}

impl<T: Scalar> ClientRecord<T> {
    pub fn max_inner_residual(&self) -> T {
        self.inner_residuals.iter().fold(T::zero(), |a, &b| if b > a { b } else { a })
    }
}

/// One row of a training log.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord<T: Scalar> {
    pub iteration: usize,
    /// Server iterate at the start of the iteration.
    pub policy: DMatrix<T>,
    /// Objective at `policy`: `C_λ(K^s)` for MEMLQR, the mean LQR cost for the
    /// baselines.
    pub objective: T,
    /// Squared norm of the objective's gradient at `policy`.
    pub grad_norm_sq: T,
    pub eta_bar: T,
    pub client_costs: Vec<Cost<T>>,
    pub spectral_radii: Vec<T>,
    /// Empty for the baselines.
    pub clients: Vec<ClientRecord<T>>,
    /// Averaged local direction `ĝ^s` (MEMLQR only).
    pub direction: Option<DMatrix<T>>,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog<T: Scalar> {
    pub algorithm: String,
    pub records: Vec<OuterRecord<T>>,
    pub final_policy: DMatrix<T>,
    pub final_objective: T,
    pub final_grad_norm_sq: T,
    pub schedule: Option<ScheduleFlags>,
}

impl<T: Scalar> RunLog<T> {
    pub fn objective_trace(&self) -> Vec<T> {
        self.records.iter().map(|r| r.objective).collect()
    }

    pub fn grad_norm_sq_trace(&self) -> Vec<T> {
        self.records.iter().map(|r| r.grad_norm_sq).collect()
    }

    /// `(1/S) Σ_{s<S} ‖∇‖²` over the first `s_prefix` records.
    pub fn running_grad_average(&self, s_prefix: usize) -> Option<T> {
        if s_prefix == 0 || s_prefix > self.records.len() {
            return None;
        }
        let sum = self.records[..s_prefix].iter().fold(T::zero(), |a, r| a + r.grad_norm_sq);
        Some(sum / T::lit(s_prefix as f64))
    }

    pub fn num_clients(&self) -> usize {
        self.records.first().map_or(0, |r| r.client_costs.len())
    }
}

fn check_initial<T: Scalar>(systems: &[LinearSystem<T>], k0: &DMatrix<T>) -> Result<()> {
    if systems.is_empty() {
        return Err(Error::Argument("need at least one realization".into()));
    }
    for (client, sys) in systems.iter().enumerate() {
        sys.check_gain(k0)?;
        if !is_stabilizing(sys, k0) {
            return Err(Error::Initialization {
                client,
                spectral_radius: closed_loop_spectral_radius(sys, k0)?.as_f64(),
            });
        }
    }
    Ok(())
}

fn radii<T: Scalar>(systems: &[LinearSystem<T>], k: &DMatrix<T>) -> Result<Vec<T>> {
    systems.iter().map(|s| closed_loop_spectral_radius(s, k)).collect()
}

fn first_unstable<T: Scalar>(systems: &[LinearSystem<T>], k: &DMatrix<T>) -> Result<Option<(usize, T)>> {
    for (i, s) in systems.iter().enumerate() {
        if !is_stabilizing(s, k) {
            return Ok(Some((i, closed_loop_spectral_radius(s, k)?)));
        }
    }
    Ok(None)
}

/// `C_λ(K) = Σ_i C_{λ,i}(K)`.
pub fn meta_cost<T: Scalar>(
    systems: &[LinearSystem<T>],
    cost: &QuadraticCost<T>,
    k: &DMatrix<T>,
    config: &MoreauConfig<T>,
) -> Result<T> {
    Ok(meta_proxes(systems, cost, k, config)?.iter().fold(T::zero(), |a, p| a + p.envelope_value))
}

fn meta_proxes<T: Scalar>(
    systems: &[LinearSystem<T>],
    cost: &QuadraticCost<T>,
    k: &DMatrix<T>,
    config: &MoreauConfig<T>,
) -> Result<Vec<ProxResult<T>>> {
    if let Some((client, rho)) = first_unstable(systems, k)? {
        return Err(Error::UnstableClient { client, spectral_radius: rho.as_f64() });
    }
    systems.par_iter().map(|s| prox(s, cost, k, config)).collect()
}

/// `‖Σ_i λ(K - K̄_i)‖²`.
fn envelope_grad_norm_sq<T: Scalar>(k: &DMatrix<T>, proxes: &[ProxResult<T>], lambda: T) -> T {
    let mut g = DMatrix::zeros(k.nrows(), k.ncols());
    for p in proxes {
        g += (k - &p.k_bar) * lambda;
    }
    frob_sq(&g)
}

struct ClientOutcome<T: Scalar> {
    record: ClientRecord<T>,
    terminal: DMatrix<T>,
    anchor_cost: T,
    anchor_envelope: T,
    first_prox: DMatrix<T>,
    direction_sum: DMatrix<T>,
}

fn run_client<T: Scalar>(
    s: usize,
    client: usize,
    systems: &[LinearSystem<T>],
    cost: &QuadraticCost<T>,
    k_server: &DMatrix<T>,
    config: &MemlqrConfig<T>,
) -> Result<ClientOutcome<T>> {
    let system = &systems[client];
    let lambda = config.moreau.lambda;
    let p_count = config.inner_iters;
    let mut k = k_server.clone();
    let mut record = ClientRecord {
        iterates: vec![k.clone()],
        prox_points: Vec::with_capacity(p_count),
        envelope_trace: Vec::with_capacity(p_count + 1),
        inner_residuals: Vec::with_capacity(p_count),
        inner_iterations: Vec::with_capacity(p_count),
        converged: Vec::with_capacity(p_count),
        terminal_spectral_radii: Vec::new(),
    };
    let mut direction_sum = DMatrix::zeros(k.nrows(), k.ncols());
    let mut anchor_cost = T::zero();
    for p in 0..p_count {
        let stream = [s as u64, client as u64, p as u64];
        let step = local_update_with(system, cost, &k, &config.moreau, config.alpha, &config.gradient, &stream)?;
        if p == 0 {
            anchor_cost = step.prox.anchor_cost;
        }
        direction_sum += (&k - &step.prox.k_bar) * lambda;
        record.envelope_trace.push(step.prox.envelope_value);
        record.inner_residuals.push(step.prox.inner_residual);
        record.inner_iterations.push(step.prox.iterations);
        record.converged.push(step.prox.converged);
        record.prox_points.push(step.prox.k_bar);
        k = step.next;
        if !is_stabilizing(system, &k) {
            return Err(Error::StabilityViolation {
                iteration: s,
                client,
                spectral_radius: closed_loop_spectral_radius(system, &k)?.as_f64(),
            });
        }
        record.iterates.push(k.clone());
    }
    if config.gradient.is_exact() {
        let terminal = prox_with(system, cost, &k, &config.moreau, &config.gradient, &[])?;
        record.envelope_trace.push(terminal.envelope_value);
    }
    record.terminal_spectral_radii = radii(systems, &k)?;
    Ok(ClientOutcome {
        anchor_envelope: record.envelope_trace[0],
        first_prox: record.prox_points[0].clone(),
        record,
        terminal: k,
        anchor_cost,
        direction_sum,
    })
}

/// Moreau-envelope meta-policy training.
///
/// Each outer iteration broadcasts `K^s`, lets every client take `P` local
/// steps `K ← K - αλ(K - K̄)` with `K̄` an approximate proximal point, then
/// aggregates `K^{s+1} = (1 - β) K^s + (β/V) Σ_i K_i^{s,P}`. Clients run in
/// parallel; results do not depend on scheduling.
pub fn memlqr_train<T: Scalar>(
    systems: &[LinearSystem<T>],
    cost: &QuadraticCost<T>,
    k0: &Policy<T>,
    config: &MemlqrConfig<T>,
) -> Result<(Policy<T>, RunLog<T>)> {
    config.validate()?;
    check_initial(systems, &k0.k)?;
    for s in systems {
        cost.check_system(s)?;
    }
    config.moreau.warn_if_weak();
    let schedule = config.analysis.as_ref().map(|a| config.schedule_flags(a.l_lambda));
    if let Some(flags) = schedule {
        if !flags.all() {
            log::warn!("step-size schedule conditions not all satisfied: {flags:?}");
        }
    }

    let v = T::lit(systems.len() as f64);
    let lambda = config.moreau.lambda;
    let eta_bar = config.eta_bar();
    let mut k = k0.k.clone();
    let mut records = Vec::with_capacity(config.outer_iters);

    for s in 0..config.outer_iters {
        let started = Instant::now();
        let outcomes: Vec<ClientOutcome<T>> = (0..systems.len())
            .into_par_iter()
            .map(|i| run_client(s, i, systems, cost, &k, config))
            .collect::<Result<_>>()?;

        let objective = outcomes.iter().fold(T::zero(), |a, o| a + o.anchor_envelope);
        let mut grad = DMatrix::zeros(k.nrows(), k.ncols());
        let mut direction = DMatrix::zeros(k.nrows(), k.ncols());
        let mut mean_terminal = DMatrix::zeros(k.nrows(), k.ncols());
        for o in &outcomes {
            grad += (&k - &o.first_prox) * lambda;
            direction += &o.direction_sum;
            mean_terminal += &o.terminal;
        }
        direction /= v * T::lit(config.inner_iters as f64);
        mean_terminal /= v;
        let next = &k * (T::one() - config.beta) + mean_terminal * config.beta;

        records.push(OuterRecord {
            iteration: s,
            policy: k.clone(),
            objective,
            grad_norm_sq: frob_sq(&grad),
            eta_bar,
            client_costs: outcomes.iter().map(|o| Cost::Finite(o.anchor_cost)).collect(),
            spectral_radii: radii(systems, &k)?,
            clients: outcomes.into_iter().map(|o| o.record).collect(),
            direction: Some(direction),
            wall_time: started.elapsed(),
        });

        if let Some((client, rho)) = first_unstable(systems, &next)? {
            return Err(Error::StabilityViolation { iteration: s + 1, client, spectral_radius: rho.as_f64() });
        }
        k = next;
    }

    let proxes = meta_proxes(systems, cost, &k, &config.moreau)?;
    let final_objective = proxes.iter().fold(T::zero(), |a, p| a + p.envelope_value);
    let final_grad_norm_sq = envelope_grad_norm_sq(&k, &proxes, lambda);
    let policy = Policy {
        k: k.clone(),
        meta: Some(PolicyMeta {
            algorithm: "memlqr".into(),
            lambda: Some(lambda.as_f64()),
            iterations: Some(config.outer_iters),
            seed: Some(config.seed),
        }),
    };
    Ok((
        policy,
        RunLog { algorithm: "memlqr".into(), records, final_policy: k, final_objective, final_grad_norm_sq, schedule },
    ))
}

/// Objective value and descent direction for the shared descent loop.
trait DescentProblem<T: Scalar> {
    fn objective(&self, k: &DMatrix<T>) -> Result<Cost<T>>;
    fn direction(&self, k: &DMatrix<T>) -> Result<DMatrix<T>>;
}

/// Safeguarded descent shared by the baselines: a trial step that
/// destabilizes or increases the objective is rejected and the step halved.
fn safeguarded_descent<T: Scalar, D: DescentProblem<T>>(
    algorithm: &str,
    problem: &D,
    systems: &[LinearSystem<T>],
    cost: &QuadraticCost<T>,
    k0: &DMatrix<T>,
    step: T,
    iters: usize,
) -> Result<(Policy<T>, RunLog<T>)> {
    if !(step > T::zero()) {
        return Err(Error::Argument("step size must be positive".into()));
    }
    check_initial(systems, k0)?;
    let mut k = k0.clone();
    let mut current = problem
        .objective(&k)?
        .finite()
        .ok_or_else(|| Error::Argument("initial objective is infinite".into()))?;
    let mut eta = step;
    let mut records = Vec::with_capacity(iters);
    for n in 0..iters {
        let started = Instant::now();
        let g = problem.direction(&k)?;
        let client_costs = systems.iter().map(|s| cost_value(s, cost, &k)).collect::<Result<Vec<_>>>()?;
        let spectral_radii = radii(systems, &k)?;
        let roundoff = roundoff_band(current);
        let (next, value) = loop {
            let trial = &k - &g * eta;
            if first_unstable(systems, &trial)?.is_none() {
                if let Cost::Finite(v) = problem.objective(&trial)? {
                    if v <= current {
                        break (trial, v);
                    }
                    if v <= current + roundoff {
                        break (k.clone(), current);
                    }
                }
            }
            eta *= T::lit(0.5);
            if eta < T::lit(MIN_STEP) {
                return Err(Error::Stall { iterations: n, step: eta.as_f64() });
            }
        };
        records.push(OuterRecord {
            iteration: n,
            policy: k.clone(),
            objective: current,
            grad_norm_sq: frob_sq(&g),
            eta_bar: eta,
            client_costs,
            spectral_radii,
            clients: Vec::new(),
            direction: None,
            wall_time: started.elapsed(),
        });
        k = next;
        current = value;
    }
    let final_grad_norm_sq = frob_sq(&problem.direction(&k)?);
    let policy = Policy {
        k: k.clone(),
        meta: Some(PolicyMeta { algorithm: algorithm.into(), lambda: None, iterations: Some(iters), seed: None }),
    };
    Ok((
        policy,
        RunLog {
            algorithm: algorithm.into(),
            records,
            final_policy: k,
            final_objective: current,
            final_grad_norm_sq,
            schedule: None,
        },
    ))
}

struct MeanCost<'a, T: Scalar> {
    systems: &'a [LinearSystem<T>],
    cost: &'a QuadraticCost<T>,
}

impl<T: Scalar> DescentProblem<T> for MeanCost<'_, T> {
    fn objective(&self, k: &DMatrix<T>) -> Result<Cost<T>> {
        let mut total = Cost::Finite(T::zero());
        for s in self.systems {
            total = total.add(cost_value(s, self.cost, k)?);
        }
        Ok(match total {
            Cost::Finite(v) => Cost::Finite(v / T::lit(self.systems.len() as f64)),
            Cost::Infinite => Cost::Infinite,
        })
    }

    fn direction(&self, k: &DMatrix<T>) -> Result<DMatrix<T>> {
        let mut g = DMatrix::zeros(k.nrows(), k.ncols());
        for s in self.systems {
            g += exact_gradient(s, self.cost, k)?;
        }
        Ok(g / T::lit(self.systems.len() as f64))
    }
}

/// Naive-averaging baseline: descent on the mean LQR cost `(1/V) Σ_i C_i(K)`
/// (same minimizer as the total cost).
pub fn average_train<T: Scalar>(
    systems: &[LinearSystem<T>],
    cost: &QuadraticCost<T>,
    k0: &Policy<T>,
    step: T,
    iters: usize,
) -> Result<(Policy<T>, RunLog<T>)> {
    safeguarded_descent("average", &MeanCost { systems, cost }, systems, cost, &k0.k, step, iters)
}

struct FirstOrderMaml<'a, T: Scalar> {
    systems: &'a [LinearSystem<T>],
    cost: &'a QuadraticCost<T>,
    inner_step: T,
}

impl<T: Scalar> FirstOrderMaml<'_, T> {
    /// `K - η_in ∇C_i(K)`, with `η_in` halved until the adapted policy
    /// stabilizes realization `i`.
    fn adapted(&self, system: &LinearSystem<T>, k: &DMatrix<T>) -> Result<DMatrix<T>> {
        if self.inner_step == T::zero() {
            return Ok(k.clone());
        }
        let g = exact_gradient(system, self.cost, k)?;
        let mut eta = self.inner_step;
        loop {
            let kp = k - &g * eta;
            if is_stabilizing(system, &kp) {
                return Ok(kp);
            }
            eta *= T::lit(0.5);
            if eta < T::lit(MIN_STEP) {
                return Err(Error::Stall { iterations: 0, step: eta.as_f64() });
            }
        }
    }
}

impl<T: Scalar> DescentProblem<T> for FirstOrderMaml<'_, T> {
    fn objective(&self, k: &DMatrix<T>) -> Result<Cost<T>> {
        let mut total = Cost::Finite(T::zero());
        for s in self.systems {
            if !is_stabilizing(s, k) {
                return Ok(Cost::Infinite);
            }
            total = total.add(cost_value(s, self.cost, &self.adapted(s, k)?)?);
        }
        Ok(match total {
            Cost::Finite(v) => Cost::Finite(v / T::lit(self.systems.len() as f64)),
            Cost::Infinite => Cost::Infinite,
        })
    }

    fn direction(&self, k: &DMatrix<T>) -> Result<DMatrix<T>> {
        let mut g = DMatrix::zeros(k.nrows(), k.ncols());
        for s in self.systems {
            g += exact_gradient(s, self.cost, &self.adapted(s, k)?)?;
        }
        Ok(g / T::lit(self.systems.len() as f64))
    }
}

/// First-order MAML baseline: the outer direction is the mean gradient at the
/// one-step adapted policies `K - η_in ∇C_i(K)`, dropping the Hessian term.
pub fn fomaml_train<T: Scalar>(
    systems: &[LinearSystem<T>],
    cost: &QuadraticCost<T>,
    k0: &Policy<T>,
    inner_step: T,
    outer_step: T,
    iters: usize,
) -> Result<(Policy<T>, RunLog<T>)> {
    if inner_step < T::zero() {
        return Err(Error::Argument("inner step must be nonnegative".into()));
    }
    let problem = FirstOrderMaml { systems, cost, inner_step };
    safeguarded_descent("fomaml", &problem, systems, cost, &k0.k, outer_step, iters)
}

/// Local-only training on one realization (policy-gradient descent with
/// exact gradients) with a log in the common format.
pub fn local_train<T: Scalar>(
    system: &LinearSystem<T>,
    cost: &QuadraticCost<T>,
    k0: &Policy<T>,
    step: T,
    iters: usize,
) -> Result<(Policy<T>, RunLog<T>)> {
    check_initial(std::slice::from_ref(system), &k0.k)?;
    let run = policy_gradient_descent(system, cost, &k0.k, step, iters, &GradientMode::Exact)?;
    let mut records = Vec::with_capacity(iters);
    for n in 0..iters {
        let k = &run.iterates[n];
        records.push(OuterRecord {
            iteration: n,
            policy: k.clone(),
            objective: run.costs[n],
            grad_norm_sq: frob_sq(&exact_gradient(system, cost, k)?),
            eta_bar: run.steps[n],
            client_costs: vec![Cost::Finite(run.costs[n])],
            spectral_radii: vec![closed_loop_spectral_radius(system, k)?],
            clients: Vec::new(),
            direction: None,
            wall_time: Duration::ZERO,
        });
    }
    let final_grad_norm_sq = frob_sq(&exact_gradient(system, cost, &run.k)?);
    let policy = Policy {
        k: run.k.clone(),
        meta: Some(PolicyMeta { algorithm: "local".into(), lambda: None, iterations: Some(iters), seed: None }),
    };
    Ok((
        policy,
        RunLog {
            algorithm: "local".into(),
            records,
            final_policy: run.k,
            final_objective: *run.costs.last().expect("at least the initial cost"),
            final_grad_norm_sq,
            schedule: None,
        },
    ))
}

/// Fine-tuning schedule for [`adapt`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationSettings<T: Scalar> {
    pub step: T,
    /// Number of policy-gradient iterations `N`.
    pub iters: usize,
    pub mode: GradientMode<T>,
    pub eval: AdaptationEval,
}

impl<T: Scalar> Default for AdaptationSettings<T> {
    fn default() -> Self {
        Self { step: T::lit(0.1), iters: 250, mode: GradientMode::Exact, eval: AdaptationEval::default() }
    }
}

/// How adaptation costs are measured.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationEval {
    /// Initial states averaged over in model-free mode.
    pub num_states: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl Default for AdaptationEval {
    fn default() -> Self {
        Self { num_states: 50, horizon: 200, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AdaptationOutcome {
    Completed,
    /// The initial policy does not stabilize the held-out realization.
    InitNotStabilizing { spectral_radius: f64 },
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationReport<T: Scalar> {
    pub init_label: String,
    /// `C_z(Kⁿ)` for `n = 0..=N`.
    pub costs: Vec<T>,
    /// `1 - |C_z(K^N) - C_z(Kⁿ)| / C_z(K^N)`.
    pub accuracy: Vec<T>,
    pub terminal: Option<DMatrix<T>>,
    pub outcome: AdaptationOutcome,
}

impl<T: Scalar> AdaptationReport<T> {
    /// First `n` with `accuracy(n) ≥ threshold`.
    pub fn iterations_to_accuracy(&self, threshold: T) -> Option<usize> {
        self.accuracy.iter().position(|&a| a >= threshold)
    }
}

/// Fine-tunes `init` on the held-out realization with policy-gradient descent
/// and scores each iterate against the run's own terminal policy.
///
/// Costs are exact in model-based mode and empirical averages over
/// `settings.eval.num_states` initial states otherwise. A non-stabilizing `init` is a
/// reported outcome, not an error.
pub fn adapt<T: Scalar>(
    init: &Policy<T>,
    init_label: &str,
    system_z: &LinearSystem<T>,
    cost: &QuadraticCost<T>,
    settings: &AdaptationSettings<T>,
) -> Result<AdaptationReport<T>> {
    let AdaptationSettings { step, iters, mode, eval } = settings;
    system_z.check_gain(&init.k)?;
    let failed = |outcome| AdaptationReport {
        init_label: init_label.to_string(),
        costs: Vec::new(),
        accuracy: Vec::new(),
        terminal: None,
        outcome,
    };
    if !is_stabilizing(system_z, &init.k) {
        let rho = closed_loop_spectral_radius(system_z, &init.k)?.as_f64();
        return Ok(failed(AdaptationOutcome::InitNotStabilizing { spectral_radius: rho }));
    }
    let run = match policy_gradient_descent(system_z, cost, &init.k, *step, *iters, mode) {
        Ok(run) => run,
        Err(e @ (Error::Stall { .. } | Error::TooManyRejections { .. })) => {
            return Ok(failed(AdaptationOutcome::Failed(e.to_string())))
        }
        Err(e) => return Err(e),
    };
    let costs = if mode.is_exact() {
        run.costs
    } else {
        run.iterates
            .iter()
            .map(|k| empirical_cost(system_z, cost, k, eval.num_states, eval.horizon, eval.seed))
            .collect::<Result<Vec<_>>>()?
    };
    let terminal_cost = *costs.last().expect("at least the initial cost");
    let accuracy = costs.iter().map(|&c| T::one() - (terminal_cost - c).abs() / terminal_cost).collect();
    Ok(AdaptationReport {
        init_label: init_label.to_string(),
        costs,
        accuracy,
        terminal: Some(run.k),
        outcome: AdaptationOutcome::Completed,
    })
}
