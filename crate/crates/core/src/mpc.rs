//! Receding-horizon closed loop against the true system, plus the radius
//! sweep and the paired SAA-vs-DR comparison.
//!
//! Metrics (per closed-loop run of `steps` steps, over the realized states
//! `x₁ … x_steps` after the initial one):
//! - cost: `Σ |x₍₁₎ − 1|`
//! - violations: number of steps with `x₍₁₎ > 1 + tol` or `x₍₂₎ < −tol`,
//!   `tol = 1e−9`
//!
//! Slack usage is reported separately and never enters the cost.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dro::{
    build_drmpc, build_saa, example_controller, solve_with, FhocSpec, SolveStatus, SolverSettings,
};
use crate::error::{DrmpcError, Result};
use crate::identification::{fit_multistep_ls, MultiStepPredictor};
use crate::lifting::{generate_dataset, DisturbanceSpec, LtiSystem, TrajectoryDataset};
use crate::radius::{loo_radius, theoretical_radius, AmbiguityRadius, GuaranteeConstants};

pub const VIOLATION_TOL: f64 = 1e-9;
/// `σ*` above this counts as a step that used the slack.
pub const SLACK_ACTIVE_TOL: f64 = 1e-7;

pub const STEP_SCHEMA: &str = "drmpc-steps/1";
pub const SWEEP_SCHEMA: &str = "drmpc-sweep/1";
pub const COMPARE_SCHEMA: &str = "drmpc-compare/1";
pub const SUMMARY_SCHEMA: &str = "drmpc-compare-summary/1";

/// The decades `1e−7 … 1e0`.
pub fn decade_values() -> Vec<f64> {
    (0..8).map(|k| 10f64.powi(k - 7)).collect()
}

/// Every `(eps1, eps2)` pair of `values × values`, `eps1` outer.
pub fn grid_pairs(values: &[f64]) -> Result<Vec<AmbiguityRadius>> {
    values
        .iter()
        .flat_map(|&e1| values.iter().map(move |&e2| AmbiguityRadius::new(e1, e2)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Row-major `A`.
    pub a: Vec<Vec<f64>>,
    /// Row-major `B`.
    pub b: Vec<Vec<f64>>,
    pub noise: DisturbanceSpec,
}

impl SystemConfig {
    pub fn to_system(&self) -> Result<LtiSystem> {
        LtiSystem::new(
            row_major("A", &self.a)?,
            row_major("B", &self.b)?,
            self.noise.clone(),
        )
    }
}

fn row_major(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(DrmpcError::InvalidArgument(format!(
            "matrix {name} must be a non-empty rectangular list of rows"
        )));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(r, c, &flat))
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            a: vec![vec![0.9, 0.1], vec![0.05, 0.9]],
            b: vec![vec![0.0], vec![1.0]],
            noise: DisturbanceSpec::Gaussian { std_dev: 0.03 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    /// Prediction horizon `T` (trajectory length).
    pub horizon: usize,
    /// `N` for single runs and sweeps.
    pub samples: usize,
    pub input: DisturbanceSpec,
    pub initial_state: DisturbanceSpec,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            horizon: 5,
            samples: 10,
            input: DisturbanceSpec::Gaussian { std_dev: 0.5 },
            initial_state: DisturbanceSpec::Gaussian { std_dev: 0.5 },
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum RadiusSource {
    /// All pairs of `values` (sweeps); single runs use the first pair.
    Grid { values: Vec<f64> },
    Fixed { eps1: f64, eps2: f64 },
    /// Leave-one-out estimate on the identification dataset.
    Algorithm1,
    Theoretical {
        alpha: f64,
        gamma: f64,
        c1: f64,
        c2: f64,
        a: f64,
        b: f64,
    },
    /// Sample average approximation.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorSource {
    /// Causal least squares on the whole dataset.
    #[default]
    FullFit,
    /// Average of the leave-one-out causal fits.
    LooAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub dataset: DatasetConfig,
    /// `N` values of the paired comparison.
    pub sample_sizes: Vec<usize>,
    pub radius: RadiusSource,
    pub predictor: PredictorSource,
    pub beta: f64,
    pub slack_weight: f64,
    /// Closed-loop steps per run.
    pub steps: usize,
    pub repetitions: usize,
    pub x0: Vec<f64>,
    pub noise_seed: u64,
    /// Per-step input bounds, repeated over the horizon.
    pub input_lower: Option<Vec<f64>>,
    pub input_upper: Option<Vec<f64>>,
    pub solver: SolverSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig::default(),
            dataset: DatasetConfig::default(),
            sample_sizes: vec![10, 20, 30, 40],
            radius: RadiusSource::Grid {
                values: decade_values(),
            },
            predictor: PredictorSource::FullFit,
            beta: 0.2,
            slack_weight: 1e6,
            steps: 30,
            repetitions: 50,
            x0: vec![0.9, 0.9],
            noise_seed: 7,
            input_lower: None,
            input_upper: None,
            solver: SolverSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(DrmpcError::InvalidArgument("closed-loop steps must be >= 1".into()));
        }
        if self.repetitions == 0 {
            return Err(DrmpcError::InvalidArgument("repetitions must be >= 1".into()));
        }
        let sys = self.system.to_system()?;
        if sys.state_dim() < 2 {
            return Err(DrmpcError::InvalidArgument(
                "closed-loop metrics need at least two states".into(),
            ));
        }
        crate::error::check_dim("x0", sys.state_dim(), self.x0.len())?;
        for v in [&self.input_lower, &self.input_upper].into_iter().flatten() {
            crate::error::check_dim("input bound", sys.input_dim(), v.len())?;
        }
        if self.dataset.horizon == 0 || self.dataset.samples == 0 {
            return Err(DrmpcError::InvalidArgument("dataset needs T >= 1 and N >= 1".into()));
        }
        Ok(())
    }

    pub fn true_system(&self) -> Result<LtiSystem> {
        self.system.to_system()
    }

    pub fn generate(&self, samples: usize, seed: u64) -> Result<TrajectoryDataset> {
        generate_dataset(
            &self.true_system()?,
            samples,
            self.dataset.horizon,
            &self.dataset.input,
            &self.dataset.initial_state,
            seed,
        )
    }

    pub fn x0_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x0)
    }
}

/// Predictor from `data` according to `source`.
pub fn build_predictor(source: PredictorSource, data: &TrajectoryDataset) -> Result<MultiStepPredictor> {
    match source {
        PredictorSource::FullFit => fit_multistep_ls(data, true),
        PredictorSource::LooAverage => {
            let loo = loo_radius(data)?;
            MultiStepPredictor::with_matrix(loo.l_hat_avg, data)
        }
    }
}

/// Radius from `source` for a controller identified on `data`.
pub fn resolve_radius(source: &RadiusSource, data: &TrajectoryDataset) -> Result<AmbiguityRadius> {
    match source {
        RadiusSource::Grid { values } => {
            let v = values
                .first()
                .ok_or_else(|| DrmpcError::InvalidArgument("empty radius grid".into()))?;
            AmbiguityRadius::new(*v, *v)
        }
        RadiusSource::Fixed { eps1, eps2 } => AmbiguityRadius::new(*eps1, *eps2),
        RadiusSource::Algorithm1 => Ok(loo_radius(data)?.radius),
        RadiusSource::Theoretical {
            alpha,
            gamma,
            c1,
            c2,
            a,
            b,
        } => theoretical_radius(&GuaranteeConstants::with_constant_gamma(
            *gamma,
            *alpha,
            *c1,
            *c2,
            *a,
            *b,
            data.y_dim(),
            data.len(),
        )),
        RadiusSource::Zero => Ok(AmbiguityRadius::zero()),
    }
}

/// Tracking controller for `cfg` from an identified predictor.
pub fn build_controller(
    cfg: &ExperimentConfig,
    predictor: MultiStepPredictor,
    radius: AmbiguityRadius,
) -> Result<FhocSpec> {
    let mut spec = example_controller(predictor, radius)?;
    spec.beta = cfg.beta;
    spec.slack_weight = cfg.slack_weight;
    let horizon = spec.predictor.horizon;
    let repeat = |v: &Vec<f64>| {
        DVector::from_iterator(v.len() * horizon, (0..horizon).flat_map(|_| v.iter().copied()))
    };
    spec.z_constraints.input_lower = cfg.input_lower.as_ref().map(repeat);
    spec.z_constraints.input_upper = cfg.input_upper.as_ref().map(repeat);
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub state: Vec<f64>,
    pub input: Vec<f64>,
    pub status: SolveStatus,
    pub objective: f64,
    pub sigma: f64,
    /// Applied zero input because the solve did not return an optimum.
    pub fallback: bool,
    pub next_state: Vec<f64>,
    pub stage_cost: f64,
    pub upper_violation: bool,
    pub lower_violation: bool,
}

impl StepRecord {
    pub fn violated(&self) -> bool {
        self.upper_violation || self.lower_violation
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopRecord {
    pub steps: Vec<StepRecord>,
    pub total_cost: f64,
    pub violations: usize,
    pub slack_steps: usize,
    pub fallback_steps: usize,
}

impl ClosedLoopRecord {
    fn from_steps(steps: Vec<StepRecord>) -> Self {
        let total_cost = steps.iter().map(|s| s.stage_cost).sum();
        let violations = steps.iter().filter(|s| s.violated()).count();
        let slack_steps = steps.iter().filter(|s| s.sigma > SLACK_ACTIVE_TOL).count();
        let fallback_steps = steps.iter().filter(|s| s.fallback).count();
        Self {
            steps,
            total_cost,
            violations,
            slack_steps,
            fallback_steps,
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# schema {STEP_SCHEMA}")?;
        let mut w = csv::Writer::from_writer(out);
        let n = self.steps.first().map_or(0, |s| s.state.len());
        let m = self.steps.first().map_or(0, |s| s.input.len());
        let mut header = vec!["step".to_string()];
        header.extend((0..n).map(|i| format!("x_{i}")));
        header.extend((0..m).map(|i| format!("u_{i}")));
        header.extend(
            ["status", "objective", "sigma", "fallback", "stage_cost", "violation"]
                .iter()
                .map(|s| s.to_string()),
        );
        header.extend((0..n).map(|i| format!("next_x_{i}")));
        w.write_record(&header)?;
        for s in &self.steps {
            let mut row = vec![s.step.to_string()];
            row.extend(s.state.iter().map(f64::to_string));
            row.extend(s.input.iter().map(f64::to_string));
            row.push(s.status.as_str().to_string());
            row.push(s.objective.to_string());
            row.push(s.sigma.to_string());
            row.push(u8::from(s.fallback).to_string());
            row.push(s.stage_cost.to_string());
            row.push(u8::from(s.violated()).to_string());
            row.extend(s.next_state.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `cfg.steps` receding-horizon steps of `controller` on the true system.
///
/// Solver failures never abort the run: the step applies zero input and is
/// flagged as a fallback.
pub fn run_closed_loop(cfg: &ExperimentConfig, controller: &FhocSpec, noise_seed: u64) -> Result<ClosedLoopRecord> {
    cfg.validate()?;
    controller.validate()?;
    let sys = cfg.true_system()?;
    let (n, m) = (sys.state_dim(), sys.input_dim());
    if controller.predictor.n != n || controller.predictor.m != m {
        return Err(DrmpcError::InvalidArgument(format!(
            "controller dimensions (n={}, m={}) differ from the true system (n={n}, m={m})",
            controller.predictor.n, controller.predictor.m
        )));
    }
    let use_saa = controller.radius.is_zero();
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let mut x = cfg.x0_vector();
    let mut steps = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let prog = if use_saa {
            build_saa(controller, &x)?
        } else {
            build_drmpc(controller, &x)?
        };
        let (status, objective, sigma, u) = match solve_with(&prog, &cfg.solver) {
            Ok(res) if res.is_optimal() => {
                let u = res.z_star.rows(n, m).into_owned();
                (res.status, res.objective, res.sigma.unwrap_or(0.0), Some(u))
            }
            Ok(res) => (res.status, f64::NAN, f64::NAN, None),
            Err(_) => (SolveStatus::NumericalFailure, f64::NAN, f64::NAN, None),
        };
        let fallback = u.is_none();
        let u = u.unwrap_or_else(|| DVector::zeros(m));
        let w = sys.sample_disturbance(&mut rng);
        let next = sys.step(&x, &u, &w);
        steps.push(StepRecord {
            step,
            state: x.iter().copied().collect(),
            input: u.iter().copied().collect(),
            status,
            objective,
            sigma,
            fallback,
            next_state: next.iter().copied().collect(),
            stage_cost: (next[0] - 1.0).abs(),
            upper_violation: next[0] > 1.0 + VIOLATION_TOL,
            lower_violation: next[1] < -VIOLATION_TOL,
        });
        x = next;
    }
    Ok(ClosedLoopRecord::from_steps(steps))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps1: f64,
    pub eps2: f64,
    pub cost: f64,
    pub violations: usize,
    pub slack_steps: usize,
    pub fallback_steps: usize,
    pub error: Option<String>,
}

impl SweepRow {
    fn from_result(radius: AmbiguityRadius, res: Result<ClosedLoopRecord>) -> Self {
        match res {
            Ok(rec) => Self {
                eps1: radius.eps1,
                eps2: radius.eps2,
                cost: rec.total_cost,
                violations: rec.violations,
                slack_steps: rec.slack_steps,
                fallback_steps: rec.fallback_steps,
                error: None,
            },
            Err(e) => Self {
                eps1: radius.eps1,
                eps2: radius.eps2,
                cost: f64::NAN,
                violations: 0,
                slack_steps: 0,
                fallback_steps: 0,
                error: Some(e.to_string()),
            },
        }
    }
}

/// Closed-loop cost and violations for every radius in `grid`, with one
/// dataset (`cfg.dataset.seed`, `cfg.dataset.samples`) and one noise
/// realization (`cfg.noise_seed`) shared by all cells.
pub fn sweep_radius(cfg: &ExperimentConfig, grid: &[AmbiguityRadius]) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let data = cfg.generate(cfg.dataset.samples, cfg.dataset.seed)?;
    let predictor = build_predictor(cfg.predictor, &data)?;
    let base = build_controller(cfg, predictor, AmbiguityRadius::zero())?;
    Ok(grid
        .par_iter()
        .map(|radius| {
            let res = AmbiguityRadius::new(radius.eps1, radius.eps2)
                .and_then(|r| run_closed_loop(cfg, &base.with_radius(r), cfg.noise_seed));
            SweepRow::from_result(*radius, res)
        })
        .collect())
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    writeln!(out, "# schema {SWEEP_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["eps1", "eps2", "cost", "violations", "slack_steps", "fallback_steps", "error"])?;
    for r in rows {
        w.write_record([
            r.eps1.to_string(),
            r.eps2.to_string(),
            r.cost.to_string(),
            r.violations.to_string(),
            r.slack_steps.to_string(),
            r.fallback_steps.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Saa,
    Dr,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Saa => "saa",
            Method::Dr => "dr",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub samples: usize,
    pub repetition: usize,
    pub method: Method,
    pub dataset_seed: u64,
    pub noise_seed: u64,
    pub eps1: f64,
    pub eps2: f64,
    pub cost: f64,
    pub violations: usize,
    pub slack_steps: usize,
    pub fallback_steps: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub samples: usize,
    pub method: Method,
    pub runs: usize,
    pub cost_median: f64,
    pub cost_q1: f64,
    pub cost_q3: f64,
    pub violations_median: f64,
    pub violations_q1: f64,
    pub violations_q3: f64,
}

impl CompareSummary {
    pub fn cost_iqr(&self) -> f64 {
        self.cost_q3 - self.cost_q1
    }

    pub fn violations_iqr(&self) -> f64 {
        self.violations_q3 - self.violations_q1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOutput {
    pub rows: Vec<CompareRow>,
    pub summary: Vec<CompareSummary>,
}

/// splitmix64 of the mixed inputs.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut x = base
        ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F).rotate_left(17);
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Linear-interpolation quantile of `values` (sorted copy), `p ∈ [0, 1]`.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Per-(N, method) medians and quartiles over successful rows.
pub fn summarize(rows: &[CompareRow]) -> Vec<CompareSummary> {
    let mut keys: Vec<(usize, Method)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.samples, r.method)) {
            keys.push((r.samples, r.method));
        }
    }
    keys.into_iter()
        .map(|(samples, method)| {
            let ok: Vec<&CompareRow> = rows
                .iter()
                .filter(|r| r.samples == samples && r.method == method && r.error.is_none())
                .collect();
            let cost: Vec<f64> = ok.iter().map(|r| r.cost).collect();
            let viol: Vec<f64> = ok.iter().map(|r| r.violations as f64).collect();
            CompareSummary {
                samples,
                method,
                runs: ok.len(),
                cost_median: median(&cost),
                cost_q1: quantile(&cost, 0.25),
                cost_q3: quantile(&cost, 0.75),
                violations_median: median(&viol),
                violations_q1: quantile(&viol, 0.25),
                violations_q3: quantile(&viol, 0.75),
            }
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn compare_row(
    samples: usize,
    repetition: usize,
    method: Method,
    dataset_seed: u64,
    noise_seed: u64,
    radius: Option<AmbiguityRadius>,
    res: Result<ClosedLoopRecord>,
) -> CompareRow {
    let (eps1, eps2) = radius.map_or((f64::NAN, f64::NAN), |r| (r.eps1, r.eps2));
    let mut row = CompareRow {
        samples,
        repetition,
        method,
        dataset_seed,
        noise_seed,
        eps1,
        eps2,
        cost: f64::NAN,
        violations: 0,
        slack_steps: 0,
        fallback_steps: 0,
        error: None,
    };
    match res {
        Ok(rec) => {
            row.cost = rec.total_cost;
            row.violations = rec.violations;
            row.slack_steps = rec.slack_steps;
            row.fallback_steps = rec.fallback_steps;
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

fn compare_pair(cfg: &ExperimentConfig, samples: usize, repetition: usize) -> [CompareRow; 2] {
    let dataset_seed = derive_seed(cfg.dataset.seed, samples as u64, repetition as u64);
    let noise_seed = derive_seed(cfg.noise_seed, samples as u64, repetition as u64);
    let prepared = cfg.generate(samples, dataset_seed).and_then(|data| {
        let predictor = build_predictor(cfg.predictor, &data)?;
        let dr_radius = loo_radius(&data)?.radius;
        let saa = build_controller(cfg, predictor, AmbiguityRadius::zero())?;
        Ok((saa, dr_radius))
    });
    match prepared {
        Ok((saa, dr_radius)) => {
            let dr = saa.with_radius(dr_radius);
            let saa_res = run_closed_loop(cfg, &saa, noise_seed);
            let dr_res = run_closed_loop(cfg, &dr, noise_seed);
            [
                compare_row(samples, repetition, Method::Saa, dataset_seed, noise_seed, Some(AmbiguityRadius::zero()), saa_res),
                compare_row(samples, repetition, Method::Dr, dataset_seed, noise_seed, Some(dr_radius), dr_res),
            ]
        }
        Err(e) => {
            let msg = e.to_string();
            [Method::Saa, Method::Dr].map(|method| {
                compare_row(
                    samples,
                    repetition,
                    method,
                    dataset_seed,
                    noise_seed,
                    None,
                    Err(DrmpcError::InvalidArgument(msg.clone())),
                )
            })
        }
    }
}

/// Paired SAA vs DR comparison over `cfg.sample_sizes × cfg.repetitions`.
/// Each repetition draws a fresh dataset and noise seed shared by both
/// methods; the DR radius comes from the leave-one-out estimate.
pub fn compare_saa_dr(cfg: &ExperimentConfig) -> Result<CompareOutput> {
    cfg.validate()?;
    let cells: Vec<(usize, usize)> = cfg
        .sample_sizes
        .iter()
        .flat_map(|&n| (0..cfg.repetitions).map(move |rep| (n, rep)))
        .collect();
    let rows: Vec<CompareRow> = cells
        .par_iter()
        .flat_map_iter(|&(n, rep)| compare_pair(cfg, n, rep))
        .collect();
    let summary = summarize(&rows);
    Ok(CompareOutput { rows, summary })
}

pub fn write_compare_csv<W: Write>(rows: &[CompareRow], mut out: W) -> Result<()> {
    writeln!(out, "# schema {COMPARE_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "samples",
        "repetition",
        "method",
        "dataset_seed",
        "noise_seed",
        "eps1",
        "eps2",
        "cost",
        "violations",
        "slack_steps",
        "fallback_steps",
        "error",
    ])?;
    for r in rows {
        w.write_record([
            r.samples.to_string(),
            r.repetition.to_string(),
            r.method.as_str().to_string(),
            r.dataset_seed.to_string(),
            r.noise_seed.to_string(),
            r.eps1.to_string(),
            r.eps2.to_string(),
            r.cost.to_string(),
            r.violations.to_string(),
            r.slack_steps.to_string(),
            r.fallback_steps.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(summary: &[CompareSummary], mut out: W) -> Result<()> {
    writeln!(out, "# schema {SUMMARY_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "samples",
        "method",
        "runs",
        "cost_median",
        "cost_q1",
        "cost_q3",
        "violations_median",
        "violations_q1",
        "violations_q3",
    ])?;
    for s in summary {
        w.write_record([
            s.samples.to_string(),
            s.method.as_str().to_string(),
            s.runs.to_string(),
            s.cost_median.to_string(),
            s.cost_q1.to_string(),
            s.cost_q3.to_string(),
            s.violations_median.to_string(),
            s.violations_q1.to_string(),
            s.violations_q3.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[idx[k]] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties; `NaN` when either
/// side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
