//! Log-lift leakage of symbols and symbol subsets, and the low/high risk
//! split of the public alphabet at a threshold `epsilon`.
//!
//! Leakage values live in `[0, +inf]`. A zero cell `p(s, x) = 0` gives a
//! log-lift of `-inf` and therefore an infinite symbol leakage, so such a
//! symbol is high-risk at every finite threshold.

use serde::Serialize;
use thiserror::Error;

use crate::distribution::JointDistribution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LiftError {
    #[error("subset is empty")]
    EmptySubset,
    #[error("symbol index {index} out of range for alphabet of size {size}")]
    SymbolOutOfRange { index: usize, size: usize },
    #[error("epsilon must be a non-negative number, got {0}")]
    InvalidEpsilon(f64),
}

/// `ln( (joint / prior) / marginal )`, or `-inf` when `joint` is zero.
///
/// Every leakage value in the crate goes through this function with sums
/// accumulated in ascending symbol order, so the same subset always yields
/// bit-identical leakage whichever route computed it.
#[inline]
pub(crate) fn log_lift_value(joint: f64, prior: f64, marginal: f64) -> f64 {
    if joint <= 0.0 {
        f64::NEG_INFINITY
    } else {
        (joint / prior / marginal).ln()
    }
}

/// Per-cell log-lift and per-symbol maximum leakage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiftProfile {
    num_secrets: usize,
    num_symbols: usize,
    log_lift: Vec<f64>,
    omega: Vec<f64>,
}

impl LiftProfile {
    pub fn compute(j: &JointDistribution) -> Self {
        let (ns, nx) = (j.num_secrets(), j.num_symbols());
        let (px, ps) = (j.px(), j.ps());
        let mut log_lift = Vec::with_capacity(ns * nx);
        for (s, &prior) in ps.iter().enumerate() {
            for (x, &marginal) in px.iter().enumerate() {
                log_lift.push(log_lift_value(j.mass(s, x), prior, marginal));
            }
        }
        let omega = (0..nx)
            .map(|x| {
                (0..ns)
                    .map(|s| log_lift[s * nx + x].abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        Self {
            num_secrets: ns,
            num_symbols: nx,
            log_lift,
            omega,
        }
    }

    /// `i(s, x)`.
    pub fn log_lift(&self, secret: usize, symbol: usize) -> f64 {
        self.log_lift[secret * self.num_symbols + symbol]
    }

    /// `ω(x)` for every symbol.
    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn num_secrets(&self) -> usize {
        self.num_secrets
    }

    pub fn num_symbols(&self) -> usize {
        self.num_symbols
    }

    /// Dumps the log-lift matrix as CSV, one row per secret.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for s in 0..self.num_secrets {
            let row: Vec<String> = (0..self.num_symbols)
                .map(|x| crate::distribution::format_real(self.log_lift(s, x)))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn compute_lift_profile(j: &JointDistribution) -> LiftProfile {
    LiftProfile::compute(j)
}

/// Leakage of a sorted, non-empty, in-range subset. Callers validate.
pub(crate) fn sorted_subset_omega(j: &JointDistribution, sorted: &[usize]) -> f64 {
    let px = j.px();
    let ps = j.ps();
    let p_subset = sorted.iter().fold(0.0, |acc, &x| acc + px[x]);
    (0..j.num_secrets())
        .map(|s| {
            let joint = sorted.iter().fold(0.0, |acc, &x| acc + j.mass(s, x));
            log_lift_value(joint, ps[s], p_subset).abs()
        })
        .fold(0.0, f64::max)
}

/// `ω(Q) = max_s | ln( p(Q|s) / p(Q) ) |` for a subset `Q` of symbols.
///
/// Duplicate indices are ignored and element order does not matter.
pub fn subset_omega(j: &JointDistribution, subset: &[usize]) -> Result<f64, LiftError> {
    if subset.is_empty() {
        return Err(LiftError::EmptySubset);
    }
    let size = j.num_symbols();
    if let Some(&index) = subset.iter().find(|&&x| x >= size) {
        return Err(LiftError::SymbolOutOfRange { index, size });
    }
    let mut sorted = subset.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    Ok(sorted_subset_omega(j, &sorted))
}

/// Bipartition of the alphabet into symbols safe to publish (`ω(x) <= ε`)
/// and high-risk symbols (`ω(x) > ε`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskSplit {
    epsilon: f64,
    num_symbols: usize,
    low_risk: Vec<usize>,
    high_risk: Vec<usize>,
}

impl RiskSplit {
    pub fn new(profile: &LiftProfile, epsilon: f64) -> Result<Self, LiftError> {
        if epsilon.is_nan() || epsilon < 0.0 {
            return Err(LiftError::InvalidEpsilon(epsilon));
        }
        let (low_risk, high_risk) =
            (0..profile.num_symbols()).partition(|&x| profile.omega[x] <= epsilon);
        Ok(Self {
            epsilon,
            num_symbols: profile.num_symbols(),
            low_risk,
            high_risk,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn num_symbols(&self) -> usize {
        self.num_symbols
    }

    /// `X_ε`, ascending.
    pub fn low_risk(&self) -> &[usize] {
        &self.low_risk
    }

    /// `X_ε^c`, ascending.
    pub fn high_risk(&self) -> &[usize] {
        &self.high_risk
    }

    pub fn is_high_risk(&self, symbol: usize) -> bool {
        self.high_risk.binary_search(&symbol).is_ok()
    }
}

pub fn risk_split(profile: &LiftProfile, epsilon: f64) -> Result<RiskSplit, LiftError> {
    RiskSplit::new(profile, epsilon)
}
