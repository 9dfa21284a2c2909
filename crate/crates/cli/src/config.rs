//! Experiment configuration. Every field has a default; the defaults
//! describe the four-realization benchmark experiment.

use std::path::{Path, PathBuf};

use memlqr::{
    presets, AdaptationEval, AdaptationSettings, GradientMode64, InitialStateSpec, MemlqrConfig64, MoreauConfig,
    QuadraticCost64, UncertainFamily64, ZerothOrderConfig64,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::files::{from_rows, read_json, shape_of, to_rows, FamilyFile, Rows};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Number of training realizations `V`.
    pub num_realizations: usize,
    pub family: FamilySource,
    pub cost: CostSpec,
    pub init_state: InitStateSpec,
    pub train: TrainSpec,
    pub adapt: AdaptSpec,
    pub zeroth_order: ZerothOrderSpec,
    pub compare: CompareSpec,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_realizations: 4,
            family: FamilySource::Inline(FamilyFile::from_family(&presets::benchmark_family())),
            cost: CostSpec::default(),
            init_state: InitStateSpec::default(),
            train: TrainSpec::default(),
            adapt: AdaptSpec::default(),
            zeroth_order: ZerothOrderSpec::default(),
            compare: CompareSpec::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Inline family or path to a family file (relative to the config file).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FamilySource {
    Path(PathBuf),
    Inline(FamilyFile),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    #[serde(rename = "Q")]
    pub q: Rows,
    #[serde(rename = "R")]
    pub r: Rows,
}

impl Default for CostSpec {
    fn default() -> Self {
        let c = presets::benchmark_cost::<f64>();
        Self { q: to_rows(&c.q), r: to_rows(&c.r) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitStateSpec {
    UniformBox { low: Vec<f64>, high: Vec<f64> },
    FixedCovariance { covariance: Rows },
}

impl Default for InitStateSpec {
    fn default() -> Self {
        Self::UniformBox { low: vec![-10.0; 4], high: vec![10.0; 4] }
    }
}

impl InitStateSpec {
    pub fn to_spec(&self) -> Result<InitialStateSpec<f64>, CliError> {
        Ok(match self {
            Self::UniformBox { low, high } => InitialStateSpec::UniformBox { low: low.clone(), high: high.clone() },
            Self::FixedCovariance { covariance } => {
                let (r, c) = shape_of(covariance, "covariance")?;
                InitialStateSpec::FixedCovariance(from_rows(covariance, r, c, "covariance")?)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Memlqr,
    Average,
    Fomaml,
    Local,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Self::Memlqr => "memlqr",
            Self::Average => "average",
            Self::Fomaml => "fomaml",
            Self::Local => "local",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GradientKind {
    #[default]
    Exact,
    ZerothOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub algorithm: Algorithm,
    /// MEMLQR outer iterations `S`.
    pub outer_iters: usize,
    /// MEMLQR local steps `P`.
    pub inner_iters: usize,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub delta: f64,
    pub inner_max_iters: usize,
    pub inner_step: f64,
    /// Baseline step size.
    pub step: f64,
    /// Baseline iterations.
    pub iters: usize,
    /// First-order MAML inner step `η_in`.
    pub maml_inner_step: f64,
    pub gradient: GradientKind,
    /// Initial gain; the Riccati gain of the nominal system when absent.
    #[serde(rename = "K0")]
    pub k0: Option<Rows>,
}

impl Default for TrainSpec {
    fn default() -> Self {
        let m = MemlqrConfig64::default();
        Self {
            algorithm: Algorithm::Memlqr,
            outer_iters: m.outer_iters,
            inner_iters: m.inner_iters,
            alpha: m.alpha,
            beta: m.beta,
            lambda: m.moreau.lambda,
            delta: m.moreau.delta,
            inner_max_iters: m.moreau.inner_max_iters,
            inner_step: m.moreau.inner_step,
            step: 0.1,
            iters: 300,
            maml_inner_step: 1e-4,
            gradient: GradientKind::Exact,
            k0: None,
        }
    }
}

impl TrainSpec {
    pub fn with_algorithm(algorithm: Algorithm) -> Self {
        Self { algorithm, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptSpec {
    /// Fine-tuning iterations `N`.
    pub iters: usize,
    pub step: f64,
    pub gradient: GradientKind,
    /// Initial states averaged over when costs are estimated from rollouts.
    pub num_eval_states: usize,
    pub eval_horizon: usize,
}

impl Default for AdaptSpec {
    fn default() -> Self {
        let s = AdaptationSettings::<f64>::default();
        Self {
            iters: s.iters,
            step: s.step,
            gradient: GradientKind::Exact,
            num_eval_states: s.eval.num_states,
            eval_horizon: s.eval.horizon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZerothOrderSpec {
    pub num_samples: usize,
    pub radius: f64,
    pub horizon: usize,
    pub antithetic: bool,
}

impl Default for ZerothOrderSpec {
    fn default() -> Self {
        let z = ZerothOrderConfig64::default();
        Self { num_samples: z.num_samples, radius: z.radius, horizon: z.horizon, antithetic: z.antithetic }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub label: String,
    pub train: TrainSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSpec {
    /// Number of held-out realizations.
    pub holdouts: usize,
    /// Accuracy level for the iterations-to-threshold summary.
    pub threshold: f64,
    pub methods: Vec<MethodSpec>,
}

impl Default for CompareSpec {
    fn default() -> Self {
        let method = |a: Algorithm| MethodSpec { label: a.name().into(), train: TrainSpec::with_algorithm(a) };
        Self {
            holdouts: 3,
            threshold: 0.95,
            methods: vec![method(Algorithm::Memlqr), method(Algorithm::Average), method(Algorithm::Fomaml)],
        }
    }
}

/// Random stream for held-out realizations, kept apart from the training
/// stream (which uses the seed directly).
pub const HOLDOUT_STREAM: u64 = 0x401d;
/// Random stream for trajectory initial states.
pub const TRAJECTORY_STREAM: u64 = 0x7a;
/// Random stream for rollout-based cost evaluation.
pub const EVAL_STREAM: u64 = 0xe7a1;

/// A configuration with every referenced file loaded and every matrix
/// converted.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub family: UncertainFamily64,
    pub cost: QuadraticCost64,
    pub init_state: InitialStateSpec<f64>,
}

impl ExperimentConfig {
    /// Reads a config file; `None` gives the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let mut cfg: Self = read_json(path)?;
        if let FamilySource::Path(p) = &cfg.family {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.family = FamilySource::Path(dir.join(p));
                }
            }
        }
        Ok(cfg)
    }

    pub fn holdout_seed(&self) -> u64 {
        memlqr::scalar::derive_seed(self.seed, &[HOLDOUT_STREAM])
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        if self.num_realizations == 0 {
            return Err(CliError::validation("num_realizations must be at least 1"));
        }
        let family = match &self.family {
            FamilySource::Inline(f) => f.to_family()?,
            FamilySource::Path(p) => read_json::<FamilyFile>(p)?.to_family()?,
        };
        let (n, m) = (family.n(), family.m());
        let init_state = self.init_state.to_spec()?;
        if init_state.dim() != n {
            return Err(CliError::validation(format!("init_state has dimension {}, family has n = {n}", init_state.dim())));
        }
        let cost = QuadraticCost64::new(
            from_rows(&self.cost.q, n, n, "Q")?,
            from_rows(&self.cost.r, m, m, "R")?,
            init_state.second_moment()?,
        )?;
        let resolved = Resolved { config: self.clone(), family, cost, init_state };
        resolved.memlqr_config(&self.train)?.validate()?;
        resolved.zeroth_order().validate()?;
        if self.adapt.step <= 0.0 || !self.adapt.step.is_finite() {
            return Err(CliError::validation("adapt.step must be positive"));
        }
        if self.adapt.num_eval_states == 0 || self.adapt.eval_horizon == 0 {
            return Err(CliError::validation("adapt.num_eval_states and adapt.eval_horizon must be positive"));
        }
        if !(self.compare.threshold > 0.0 && self.compare.threshold <= 1.0) {
            return Err(CliError::validation("compare.threshold must lie in (0, 1]"));
        }
        for method in &self.compare.methods {
            resolved.memlqr_config(&method.train)?.validate()?;
        }
        Ok(resolved)
    }
}

impl Resolved {
    pub fn zeroth_order(&self) -> ZerothOrderConfig64 {
        let z = &self.config.zeroth_order;
        ZerothOrderConfig64 {
            num_samples: z.num_samples,
            radius: z.radius,
            horizon: z.horizon,
            seed: self.config.seed,
            antithetic: z.antithetic,
        }
    }

    pub fn gradient_mode(&self, kind: GradientKind) -> GradientMode64 {
        match kind {
            GradientKind::Exact => GradientMode64::Exact,
            GradientKind::ZerothOrder => GradientMode64::ZerothOrder(self.zeroth_order()),
        }
    }

    pub fn memlqr_config(&self, train: &TrainSpec) -> Result<MemlqrConfig64, CliError> {
        Ok(MemlqrConfig64 {
            outer_iters: train.outer_iters,
            inner_iters: train.inner_iters,
            alpha: train.alpha,
            beta: train.beta,
            moreau: MoreauConfig {
                lambda: train.lambda,
                delta: train.delta,
                inner_max_iters: train.inner_max_iters,
                inner_step: train.inner_step,
                smoothness_estimate: None,
            },
            gradient: self.gradient_mode(train.gradient),
            seed: self.config.seed,
            analysis: None,
        })
    }

    pub fn adaptation_settings(&self) -> AdaptationSettings<f64> {
        let a = &self.config.adapt;
        AdaptationSettings {
            step: a.step,
            iters: a.iters,
            mode: self.gradient_mode(a.gradient),
            eval: AdaptationEval {
                num_states: a.num_eval_states,
                horizon: a.eval_horizon,
                seed: memlqr::scalar::derive_seed(self.config.seed, &[EVAL_STREAM]),
            },
        }
    }
}
