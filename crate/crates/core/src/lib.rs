//! Meta-policies for families of uncertain discrete-time linear systems.
//!
//! The crate evaluates infinite-horizon LQR costs and their policy gradients
//! through discrete Lyapunov solves, smooths each realization's cost with a
//! Moreau envelope, and trains a shared initial policy across realizations
//! with a federated proximal scheme (MEMLQR). Baseline trainers and the
//! adaptation protocol used to compare initializations live in [`meta`].
//!
//! All numerics are generic over [`Scalar`]; the `*64` aliases fix `f64`.

// `!(x < y)` is used on purpose so that NaN counts as a failure.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::should_implement_trait)]

pub mod analysis;
pub mod error;
pub mod linsys;
pub mod lqr;
pub mod lyapunov;
pub mod meta;
pub mod moreau;
pub mod presets;
pub mod scalar;
pub mod zeroth_order;

pub use analysis::{estimate_analysis_constants, probe_policies, AnalysisConstants};
pub use error::{Error, Result};
pub use linsys::{
    closed_loop, closed_loop_spectral_radius, is_stabilizing, rollout, sample_realization, sample_realizations,
    spectral_radius, InitialStateSampler, InitialStateSpec, Interval, LinearSystem, Policy, PolicyMeta, Provenance,
    Trajectory, UncertainFamily,
};
pub use lqr::{
    cost_value, evaluate, exact_gradient, lqr_cost, policy_gradient_descent, solve_dare, solve_state_correlation,
    solve_value_matrix, Cost, CostReport, DareSolution, DescentRun, GradientMode, QuadraticCost,
};
pub use meta::{
    adapt, average_train, fomaml_train, local_train, memlqr_train, meta_cost, AdaptationEval, AdaptationOutcome,
    AdaptationReport, AdaptationSettings, MemlqrConfig, RunLog,
};
pub use moreau::{envelope_gradient, envelope_value, inner_objective, local_update, prox, MoreauConfig, ProxResult};
pub use scalar::Scalar;
pub use zeroth_order::{zeroth_order_gradient, ZerothOrderConfig};

pub type UncertainFamily64 = UncertainFamily<f64>;
pub type LinearSystem64 = LinearSystem<f64>;
pub type Policy64 = Policy<f64>;
pub type QuadraticCost64 = QuadraticCost<f64>;
pub type MoreauConfig64 = MoreauConfig<f64>;
pub type MemlqrConfig64 = MemlqrConfig<f64>;
pub type RunLog64 = RunLog<f64>;
pub type AdaptationReport64 = AdaptationReport<f64>;
pub type GradientMode64 = GradientMode<f64>;
pub type ZerothOrderConfig64 = ZerothOrderConfig<f64>;
pub type AnalysisConstants64 = AnalysisConstants<f64>;
pub type Matrix64 = nalgebra::DMatrix<f64>;
