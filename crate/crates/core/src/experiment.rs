//! Seeded Monte Carlo comparison of greedy subset merging against complete
//! merging over a grid of privacy budgets.
//!
//! Each trial draws a joint distribution from a seed derived from the
//! master seed and the trial index, so trials are independent and can run
//! in any order. Aggregation always walks trials in index order.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::distribution::{format_real, DistributionError, JointDistribution, JointSampler};
use crate::lift::{compute_lift_profile, RiskSplit};
use crate::mechanism::{build_channel, nmil, HighRiskPartition, MechanismError};
use crate::partition::greedy_refine;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid sweep configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error("i/o failure on {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    num_trials: usize,
    num_secrets: usize,
    num_symbols: usize,
    epsilons: Vec<f64>,
    seed: u64,
    sampler: JointSampler,
}

impl SweepConfig {
    pub fn new(
        num_trials: usize,
        num_secrets: usize,
        num_symbols: usize,
        epsilons: Vec<f64>,
        seed: u64,
    ) -> Result<Self, ExperimentError> {
        if num_trials == 0 || num_secrets == 0 || num_symbols == 0 {
            return Err(ExperimentError::InvalidConfig(
                "trials, secrets and symbols must all be at least 1".into(),
            ));
        }
        if epsilons.is_empty() {
            return Err(ExperimentError::InvalidConfig(
                "epsilon list is empty".into(),
            ));
        }
        if let Some(e) = epsilons.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return Err(ExperimentError::InvalidConfig(format!(
                "epsilon {e} is not a positive finite number"
            )));
        }
        if epsilons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ExperimentError::InvalidConfig(
                "epsilons must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            num_trials,
            num_secrets,
            num_symbols,
            epsilons,
            seed,
            sampler: JointSampler::default(),
        })
    }

    pub fn with_sampler(mut self, sampler: JointSampler) -> Self {
        self.sampler = sampler;
        self
    }

    /// 1000 trials, `|S| = 13`, `|X| = 20`, epsilon from 0.25 to 2.5 in
    /// steps of 0.25.
    pub fn reference(seed: u64) -> Self {
        Self::new(1000, 13, 20, reference_epsilons(), seed).expect("reference config is valid")
    }

    pub fn num_trials(&self) -> usize {
        self.num_trials
    }

    pub fn num_secrets(&self) -> usize {
        self.num_secrets
    }

    pub fn num_symbols(&self) -> usize {
        self.num_symbols
    }

    pub fn epsilons(&self) -> &[f64] {
        &self.epsilons
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sampler(&self) -> JointSampler {
        self.sampler
    }
}

/// `0.25, 0.5, .., 2.5`.
pub fn reference_epsilons() -> Vec<f64> {
    (1..=10).map(|k| 0.25 * k as f64).collect()
}

/// Seed of trial `trial`: first output of ChaCha20 keyed by the master seed
/// on stream `trial`.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    let mut rng = ChaCha20Rng::seed_from_u64(master);
    rng.set_stream(trial);
    rng.next_u64()
}

pub fn trial_joint(
    cfg: &SweepConfig,
    trial: usize,
) -> Result<JointDistribution, DistributionError> {
    cfg.sampler.sample(
        cfg.num_secrets,
        cfg.num_symbols,
        trial_seed(cfg.seed, trial as u64),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Greedy,
    Complete,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Greedy, Method::Complete];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Greedy => "greedy",
            Method::Complete => "complete",
        })
    }
}

/// Metrics of one method on one distribution at one epsilon.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub partition: HighRiskPartition,
    /// `max ω(y)` over merged outputs; `None` when nothing is high-risk.
    pub merged_leakage: Option<f64>,
    /// `max ω(y)` over verbatim low-risk outputs.
    pub kept_leakage: Option<f64>,
    /// `max_y ω(y)`.
    pub overall_leakage: f64,
    pub nmil: f64,
    /// Every merged block is within epsilon.
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonOutcome {
    pub epsilon: f64,
    pub greedy: MethodOutcome,
    pub complete: MethodOutcome,
}

impl EpsilonOutcome {
    pub fn method(&self, method: Method) -> &MethodOutcome {
        match method {
            Method::Greedy => &self.greedy,
            Method::Complete => &self.complete,
        }
    }
}

fn evaluate_partition(
    j: &JointDistribution,
    partition: HighRiskPartition,
) -> Result<MethodOutcome, MechanismError> {
    let channel = build_channel(j, &partition)?;
    let merged_leakage = channel.merged_leakage();
    let eps = partition.split().epsilon();
    let nmil = if partition.is_empty() {
        0.0
    } else {
        nmil(j, &partition)?
    };
    Ok(MethodOutcome {
        feasible: merged_leakage.is_none_or(|w| w <= eps),
        merged_leakage,
        kept_leakage: channel.kept_leakage(),
        overall_leakage: channel.post_leakage(),
        nmil,
        partition,
    })
}

/// Runs both methods on `j` at every epsilon.
pub fn evaluate_joint(
    j: &JointDistribution,
    epsilons: &[f64],
) -> Result<Vec<EpsilonOutcome>, ExperimentError> {
    let profile = compute_lift_profile(j);
    epsilons
        .iter()
        .map(|&epsilon| {
            let split = RiskSplit::new(&profile, epsilon)
                .map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;
            let greedy = evaluate_partition(j, greedy_refine(j, &split).partition)?;
            let complete = evaluate_partition(j, HighRiskPartition::complete_merging(&split))?;
            Ok(EpsilonOutcome {
                epsilon,
                greedy,
                complete,
            })
        })
        .collect()
}

/// Per-trial outcomes, indexed `[trial][epsilon]`.
pub fn run_trials(cfg: &SweepConfig) -> Result<Vec<Vec<EpsilonOutcome>>, ExperimentError> {
    (0..cfg.num_trials)
        .into_par_iter()
        .map(|t| evaluate_joint(&trial_joint(cfg, t)?, &cfg.epsilons))
        .collect()
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if !mean.is_finite() {
        return Some((mean, f64::NAN));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonRecord {
    pub epsilon: f64,
    pub method: Method,
    #[serde(with = "crate::ext_real::option")]
    pub mean_hr_leakage: Option<f64>,
    #[serde(with = "crate::ext_real::option")]
    pub std_hr_leakage: Option<f64>,
    #[serde(with = "crate::ext_real")]
    pub mean_overall_leakage: f64,
    #[serde(with = "crate::ext_real")]
    pub std_overall_leakage: f64,
    pub mean_nmil: f64,
    pub std_nmil: f64,
    pub infeasible_count: usize,
    /// Trials with no high-risk symbol, left out of the high-risk leakage.
    pub excluded_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub generator: String,
    /// Ordered by epsilon, then greedy before complete.
    pub per_epsilon: Vec<EpsilonRecord>,
}

impl SweepResult {
    pub fn record(&self, epsilon: f64, method: Method) -> Option<&EpsilonRecord> {
        self.per_epsilon
            .iter()
            .find(|r| r.epsilon == epsilon && r.method == method)
    }
}

pub fn aggregate(cfg: &SweepConfig, trials: &[Vec<EpsilonOutcome>]) -> SweepResult {
    let mut per_epsilon = Vec::with_capacity(cfg.epsilons.len() * 2);
    for (k, &epsilon) in cfg.epsilons.iter().enumerate() {
        for method in Method::ALL {
            let outcomes: Vec<&MethodOutcome> =
                trials.iter().map(|t| t[k].method(method)).collect();
            let hr: Vec<f64> = outcomes.iter().filter_map(|o| o.merged_leakage).collect();
            let overall: Vec<f64> = outcomes.iter().map(|o| o.overall_leakage).collect();
            let nmil: Vec<f64> = outcomes.iter().map(|o| o.nmil).collect();
            let (mean_overall_leakage, std_overall_leakage) =
                mean_std(&overall).unwrap_or((f64::NAN, f64::NAN));
            let (mean_nmil, std_nmil) = mean_std(&nmil).unwrap_or((f64::NAN, f64::NAN));
            let hr_stats = mean_std(&hr);
            per_epsilon.push(EpsilonRecord {
                epsilon,
                method,
                mean_hr_leakage: hr_stats.map(|s| s.0),
                std_hr_leakage: hr_stats.map(|s| s.1),
                mean_overall_leakage,
                std_overall_leakage,
                mean_nmil,
                std_nmil,
                infeasible_count: outcomes.iter().filter(|o| !o.feasible).count(),
                excluded_trials: outcomes.len() - hr.len(),
            });
        }
    }
    SweepResult {
        config: cfg.clone(),
        generator: cfg.sampler.describe().to_owned(),
        per_epsilon,
    }
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult, ExperimentError> {
    let trials = run_trials(cfg)?;
    Ok(aggregate(cfg, &trials))
}

pub const CSV_COLUMNS: [&str; 10] = [
    "epsilon",
    "method",
    "mean_hr_leakage",
    "std_hr_leakage",
    "mean_overall_leakage",
    "std_overall_leakage",
    "mean_nmil",
    "std_nmil",
    "infeasible_count",
    "excluded_trials",
];

/// Renders the sweep as CSV. Lines starting with `#` carry provenance; a
/// missing high-risk leakage (no trial had a high-risk symbol) is an empty
/// field.
pub fn to_csv_string(result: &SweepResult) -> String {
    let cfg = &result.config;
    let mut out = String::new();
    out.push_str("# std_* columns are population standard deviations (divide by N)\n");
    out.push_str(&format!(
        "# trials={} secrets={} symbols={} seed={} generator={}\n",
        cfg.num_trials, cfg.num_secrets, cfg.num_symbols, cfg.seed, result.generator
    ));
    out.push_str(&CSV_COLUMNS.join(","));
    out.push('\n');
    let opt = |v: Option<f64>| v.map(format_real).unwrap_or_default();
    for r in &result.per_epsilon {
        let fields = [
            format_real(r.epsilon),
            r.method.to_string(),
            opt(r.mean_hr_leakage),
            opt(r.std_hr_leakage),
            format_real(r.mean_overall_leakage),
            format_real(r.std_overall_leakage),
            format_real(r.mean_nmil),
            format_real(r.std_nmil),
            r.infeasible_count.to_string(),
            r.excluded_trials.to_string(),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn emit_csv(result: &SweepResult, path: &Path) -> Result<(), ExperimentError> {
    fs::write(path, to_csv_string(result)).map_err(|e| ExperimentError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn emit_json(result: &SweepResult, path: &Path) -> Result<(), ExperimentError> {
    let text = serde_json::to_string_pretty(result).expect("sweep result serializes");
    fs::write(path, text + "\n").map_err(|e| ExperimentError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
