//! The five subcommands as library functions. Each writes its files into the
//! given output directory and returns what it wrote.

use std::fs;
use std::path::{Path, PathBuf};

use memlqr::meta::AdaptationOutcome;
use memlqr::scalar::derive_seed;
use memlqr::{
    adapt, average_train, closed_loop_spectral_radius, cost_value, fomaml_train, local_train, memlqr_train,
    rollout, sample_realizations, solve_dare, AdaptationReport64, LinearSystem64, Policy64, PolicyMeta, RunLog64,
    Trajectory,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Algorithm, Resolved, TrainSpec, TRAJECTORY_STREAM};
use crate::error::CliError;
use crate::files::{from_rows, write_json, EvalReport, FamilyFile, MaybeInf, PolicyFile, RealizationFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))
}

fn num(v: f64) -> String {
    MaybeInf(v).to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: usize,
    pub file: String,
    pub delta: Vec<f64>,
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub count: usize,
    pub realizations: Vec<ManifestEntry>,
}

pub fn training_realizations(r: &Resolved) -> Result<Vec<LinearSystem64>, CliError> {
    Ok(sample_realizations(&r.family, r.config.num_realizations, r.config.seed)?)
}

pub fn holdout_realizations(r: &Resolved, count: usize) -> Result<Vec<LinearSystem64>, CliError> {
    Ok(sample_realizations(&r.family, count, r.config.holdout_seed())?)
}

/// Writes `realization_<i>.json` for every training realization, the family
/// and a manifest listing `δ`, `γ` per realization.
pub fn cmd_generate(r: &Resolved, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    ensure_dir(out)?;
    let systems = training_realizations(r)?;
    let mut written = Vec::with_capacity(systems.len() + 2);
    let mut entries = Vec::with_capacity(systems.len());
    for s in &systems {
        let file = format!("realization_{}.json", s.id);
        let path = out.join(&file);
        write_json(&path, &RealizationFile::from_system(s))?;
        let prov = s.provenance.as_ref().expect("sampled realizations carry provenance");
        entries.push(ManifestEntry { id: s.id, file, delta: prov.delta.clone(), gamma: prov.gamma.clone() });
        written.push(path);
    }
    let family = out.join("family.json");
    write_json(&family, &FamilyFile::from_family(&r.family))?;
    written.push(family);
    let manifest = out.join("manifest.json");
    write_json(&manifest, &Manifest { seed: r.config.seed, count: systems.len(), realizations: entries })?;
    written.push(manifest);
    Ok(written)
}

/// `K⁰` from the config, else the Riccati gain of the nominal system.
pub fn initial_policy(r: &Resolved, spec: &TrainSpec) -> Result<Policy64, CliError> {
    let (n, m) = (r.family.n(), r.family.m());
    match &spec.k0 {
        Some(rows) => Ok(Policy64::new(from_rows(rows, m, n, "K0")?)?),
        None => Ok(Policy64::new(solve_dare(&r.family.nominal(), &r.cost)?.k)?),
    }
}

pub fn train_policy(r: &Resolved, spec: &TrainSpec, systems: &[LinearSystem64]) -> Result<(Policy64, RunLog64), CliError> {
    let k0 = initial_policy(r, spec)?;
    let (mut policy, log) = match spec.algorithm {
        Algorithm::Memlqr => memlqr_train(systems, &r.cost, &k0, &r.memlqr_config(spec)?)?,
        Algorithm::Average => average_train(systems, &r.cost, &k0, spec.step, spec.iters)?,
        Algorithm::Fomaml => fomaml_train(systems, &r.cost, &k0, spec.maml_inner_step, spec.step, spec.iters)?,
        Algorithm::Local => {
            if systems.len() != 1 {
                return Err(CliError::validation(format!(
                    "algorithm local takes exactly one realization, got {}",
                    systems.len()
                )));
            }
            local_train(&systems[0], &r.cost, &k0, spec.step, spec.iters)?
        }
    };
    let meta = policy.meta.get_or_insert_with(PolicyMeta::default);
    meta.seed = Some(r.config.seed);
    Ok((policy, log))
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub policy_path: PathBuf,
    pub log_path: PathBuf,
    pub policy: Policy64,
    pub log: RunLog64,
}

/// Trains with the configured algorithm and writes `policy.json` plus the
/// run log (`runlog.csv` or `runlog.json`).
pub fn cmd_train(r: &Resolved, systems: &[LinearSystem64], out: &Path, format: Format) -> Result<TrainOutput, CliError> {
    let (policy, log) = train_policy(r, &r.config.train, systems)?;
    ensure_dir(out)?;
    let policy_path = out.join("policy.json");
    write_json(&policy_path, &PolicyFile::from_policy(&policy))?;
    let log_path = match format {
        Format::Csv => {
            let p = out.join("runlog.csv");
            write_runlog_csv(&p, &log)?;
            p
        }
        Format::Json => {
            let p = out.join("runlog.json");
            write_json(&p, &RunLogFile::from_log(&log))?;
            p
        }
    };
    Ok(TrainOutput { policy_path, log_path, policy, log })
}

fn client_residual(log: &RunLog64, s: usize, i: usize) -> Option<f64> {
    log.records[s].clients.get(i).map(|c| c.max_inner_residual())
}

/// Columns `s, C_lambda, grad_norm_sq, eta_bar`, then `cost_i, rho_i,
/// inner_residual_i` per client. For the baselines `C_lambda` holds the
/// mean LQR cost and the residual columns are empty.
pub fn write_runlog_csv(path: &Path, log: &RunLog64) -> Result<(), CliError> {
    let v = log.num_clients();
    let mut w = csv_writer(path)?;
    let mut header = vec!["s".to_string(), "C_lambda".into(), "grad_norm_sq".into(), "eta_bar".into()];
    for i in 0..v {
        header.extend([format!("cost_{i}"), format!("rho_{i}"), format!("inner_residual_{i}")]);
    }
    w.write_record(&header)?;
    for (s, rec) in log.records.iter().enumerate() {
        let mut row = vec![rec.iteration.to_string(), num(rec.objective), num(rec.grad_norm_sq), num(rec.eta_bar)];
        for i in 0..v {
            row.push(num(rec.client_costs[i].to_f64()));
            row.push(num(rec.spectral_radii[i]));
            row.push(client_residual(log, s, i).map(num).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRow {
    pub cost: MaybeInf,
    pub rho: f64,
    pub inner_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLogRow {
    pub s: usize,
    #[serde(rename = "C_lambda")]
    pub c_lambda: f64,
    pub grad_norm_sq: f64,
    pub eta_bar: f64,
    pub clients: Vec<ClientRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLogFile {
    pub algorithm: String,
    pub records: Vec<RunLogRow>,
    pub final_objective: f64,
    pub final_grad_norm_sq: f64,
}

impl RunLogFile {
    pub fn from_log(log: &RunLog64) -> Self {
        let records = log
            .records
            .iter()
            .enumerate()
            .map(|(s, rec)| RunLogRow {
                s: rec.iteration,
                c_lambda: rec.objective,
                grad_norm_sq: rec.grad_norm_sq,
                eta_bar: rec.eta_bar,
                clients: (0..log.num_clients())
                    .map(|i| ClientRow {
                        cost: rec.client_costs[i].into(),
                        rho: rec.spectral_radii[i],
                        inner_residual: client_residual(log, s, i),
                    })
                    .collect(),
            })
            .collect();
        Self {
            algorithm: log.algorithm.clone(),
            records,
            final_objective: log.final_objective,
            final_grad_norm_sq: log.final_grad_norm_sq,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum OutcomeFile {
    Completed,
    InitNotStabilizing { spectral_radius: f64 },
    Failed { message: String },
}

impl From<&AdaptationOutcome> for OutcomeFile {
    fn from(o: &AdaptationOutcome) -> Self {
        match o {
            AdaptationOutcome::Completed => Self::Completed,
            AdaptationOutcome::InitNotStabilizing { spectral_radius } => {
                Self::InitNotStabilizing { spectral_radius: *spectral_radius }
            }
            AdaptationOutcome::Failed(m) => Self::Failed { message: m.clone() },
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdaptOutput {
    pub path: PathBuf,
    pub report: AdaptationReport64,
}

fn file_label(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Fine-tunes `policy` on `holdout` and writes `adaptation_<label>.csv` with
/// columns `n, cost, accuracy, init_label, seed`. A non-stabilizing initial
/// policy is not an error: the CSV is left with its header only and the
/// outcome goes to `adaptation_<label>.status.json`.
pub fn cmd_adapt(
    r: &Resolved,
    policy: &Policy64,
    holdout: &LinearSystem64,
    label: &str,
    out: &Path,
) -> Result<AdaptOutput, CliError> {
    let report = adapt(policy, label, holdout, &r.cost, &r.adaptation_settings())?;
    ensure_dir(out)?;
    let stem = format!("adaptation_{}", file_label(label));
    let path = out.join(format!("{stem}.csv"));
    write_adaptation_csv(&path, &report, r.config.seed)?;
    if report.outcome != AdaptationOutcome::Completed {
        log::warn!("adaptation from {label} did not complete: {:?}", report.outcome);
        write_json(&out.join(format!("{stem}.status.json")), &OutcomeFile::from(&report.outcome))?;
    }
    Ok(AdaptOutput { path, report })
}

pub fn write_adaptation_csv(path: &Path, report: &AdaptationReport64, seed: u64) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(["n", "cost", "accuracy", "init_label", "seed"])?;
    for (n, (c, a)) in report.costs.iter().zip(&report.accuracy).enumerate() {
        w.write_record([n.to_string(), num(*c), num(*a), report.init_label.clone(), seed.to_string()])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn evaluate_policy(policy: &Policy64, system: &LinearSystem64, r: &Resolved) -> Result<EvalReport, CliError> {
    let cost = cost_value(system, &r.cost, &policy.k)?;
    let rho = closed_loop_spectral_radius(system, &policy.k)?;
    Ok(EvalReport { cost: cost.into(), stable: cost.is_finite(), spectral_radius: rho })
}

/// Cost/stability report and, with `trajectory = Some(T)`, a `T`-step
/// rollout from an initial state drawn from the configured distribution.
pub fn cmd_eval(
    r: &Resolved,
    policy: &Policy64,
    system: &LinearSystem64,
    trajectory: Option<usize>,
) -> Result<(EvalReport, Option<Trajectory<f64>>), CliError> {
    let report = evaluate_policy(policy, system, r)?;
    let traj = match trajectory {
        None => None,
        Some(horizon) => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(r.config.seed, &[TRAJECTORY_STREAM]));
            let x0 = r.init_state.sample(&mut rng)?;
            Some(rollout(system, &policy.k, &x0, horizon, Some(&r.cost))?)
        }
    };
    Ok((report, traj))
}

/// Columns `t, x_0 … x_{n-1}, u_0 … u_{m-1}, stage_cost`; the final state row
/// has empty input and cost fields.
pub fn write_trajectory_csv<W: std::io::Write>(out: W, traj: &Trajectory<f64>) -> Result<(), CliError> {
    let n = traj.states.first().map_or(0, |x| x.len());
    let m = traj.inputs.first().map_or(0, |u| u.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("x_{i}")));
    header.extend((0..m).map(|i| format!("u_{i}")));
    header.push("stage_cost".into());
    w.write_record(&header)?;
    for (t, x) in traj.states.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(x.iter().map(|v| num(*v)));
        match traj.inputs.get(t) {
            Some(u) => row.extend(u.iter().map(|v| num(*v))),
            None => row.extend((0..m).map(|_| String::new())),
        }
        row.push(traj.stage_costs.get(t).map(|c| num(*c)).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::validation(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub label: String,
    pub algorithm: String,
    pub outcome: OutcomeFile,
    pub initial_cost: Option<f64>,
    pub terminal_cost: Option<f64>,
    pub iterations_to_threshold: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutSummary {
    pub id: usize,
    pub file: String,
    pub delta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub optimal_cost: f64,
    pub methods: Vec<MethodSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub seed: u64,
    pub holdout_seed: u64,
    pub threshold: f64,
    pub holdouts: Vec<HoldoutSummary>,
}

/// Trains every configured method on the training realizations, adapts each
/// result on the held-out realizations and writes one
/// `compare_holdout_<j>.csv` per holdout (columns `n, cost_<label>_init, …`)
/// plus `summary.json`.
pub fn cmd_compare(r: &Resolved, out: &Path) -> Result<(Vec<PathBuf>, CompareSummary), CliError> {
    let spec = &r.config.compare;
    if spec.methods.is_empty() {
        return Err(CliError::validation("compare needs at least one method"));
    }
    if spec.holdouts == 0 {
        return Err(CliError::validation("compare needs at least one holdout"));
    }
    for (i, m) in spec.methods.iter().enumerate() {
        if spec.methods[..i].iter().any(|o| o.label == m.label) {
            return Err(CliError::validation(format!("duplicate method label {:?}", m.label)));
        }
    }
    let systems = training_realizations(r)?;
    let policies = spec
        .methods
        .iter()
        .map(|m| train_policy(r, &m.train, &systems).map(|(p, _)| p))
        .collect::<Result<Vec<_>, _>>()?;
    let holdouts = holdout_realizations(r, spec.holdouts)?;
    ensure_dir(out)?;
    let settings = r.adaptation_settings();
    let mut written = Vec::new();
    let mut summaries = Vec::new();
    for z in &holdouts {
        let reports = spec
            .methods
            .iter()
            .zip(&policies)
            .map(|(m, p)| adapt(p, &m.label, z, &r.cost, &settings))
            .collect::<Result<Vec<_>, _>>()?;
        let file = format!("compare_holdout_{}.csv", z.id);
        let path = out.join(&file);
        let mut w = csv_writer(&path)?;
        let mut header = vec!["n".to_string()];
        header.extend(spec.methods.iter().map(|m| format!("cost_{}_init", m.label)));
        w.write_record(&header)?;
        let rows = reports.iter().map(|rep| rep.costs.len()).max().unwrap_or(0);
        for n in 0..rows {
            let mut row = vec![n.to_string()];
            row.extend(reports.iter().map(|rep| rep.costs.get(n).map(|c| num(*c)).unwrap_or_default()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        written.push(path);

        let optimal = solve_dare(z, &r.cost).and_then(|d| cost_value(z, &r.cost, &d.k))?.to_f64();
        let prov = z.provenance.as_ref().expect("sampled realizations carry provenance");
        summaries.push(HoldoutSummary {
            id: z.id,
            file,
            delta: prov.delta.clone(),
            gamma: prov.gamma.clone(),
            optimal_cost: optimal,
            methods: spec
                .methods
                .iter()
                .zip(&reports)
                .map(|(m, rep)| MethodSummary {
                    label: m.label.clone(),
                    algorithm: m.train.algorithm.name().into(),
                    outcome: OutcomeFile::from(&rep.outcome),
                    initial_cost: rep.costs.first().copied(),
                    terminal_cost: rep.costs.last().copied(),
                    iterations_to_threshold: rep.iterations_to_accuracy(spec.threshold),
                })
                .collect(),
        });
    }
    let summary = CompareSummary {
        seed: r.config.seed,
        holdout_seed: r.config.holdout_seed(),
        threshold: spec.threshold,
        holdouts: summaries,
    };
    let summary_path = out.join("summary.json");
    write_json(&summary_path, &summary)?;
    written.push(summary_path);
    Ok((written, summary))
}
