//! Joint distributions `p(s, x)` over a finite secret alphabet `S` and a
//! finite public alphabet `X`.
//!
//! A [`JointDistribution`] is stored row-major (`|S|` rows, `|X|` columns)
//! and is immutable once validated. Marginals are computed once at
//! construction. All logarithms in this crate are natural (nats).

use std::fs;
use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Input mass may deviate from 1 by at most this much before it is rejected.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// Rows or columns lighter than this make the sampler draw again.
pub const SAMPLER_MIN_MARGINAL: f64 = 1e-12;

/// Maximum number of draws `sample_random_joint` makes before giving up.
pub const SAMPLER_MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("joint table is empty")]
    Empty,
    #[error("joint table is not rectangular: row {row} has {found} entries, expected {expected}")]
    NotRectangular {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("entry ({secret}, {symbol}) is not a finite number")]
    NonFinite { secret: usize, symbol: usize },
    #[error("entry ({secret}, {symbol}) is negative: {value}")]
    NegativeEntry {
        secret: usize,
        symbol: usize,
        value: f64,
    },
    #[error("total mass {total} deviates from 1 by more than {NORMALIZATION_TOLERANCE}")]
    MassNotNormalizable { total: f64 },
    #[error("symbol x{} has zero marginal mass", .0 + 1)]
    DeadSymbol(usize),
    #[error("secret s{} has zero marginal mass", .0 + 1)]
    DeadSecret(usize),
    #[error("declared shape {declared_secrets}x{declared_symbols} does not match table shape {secrets}x{symbols}")]
    ShapeMismatch {
        declared_secrets: usize,
        declared_symbols: usize,
        secrets: usize,
        symbols: usize,
    },
    #[error("alphabet sizes must be at least 1")]
    ZeroSize,
    #[error("sampler failed to draw a non-degenerate joint after {SAMPLER_MAX_ATTEMPTS} attempts")]
    DegenerateSampler,
    #[error("failed to read distribution: {0}")]
    Io(String),
    #[error("failed to parse distribution: {0}")]
    Parse(String),
}

/// Marginal distributions `p(x)` and `p(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    pub px: Vec<f64>,
    pub ps: Vec<f64>,
}

/// A validated joint distribution `p(s, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    num_secrets: usize,
    num_symbols: usize,
    mass: Vec<f64>,
    marginals: Marginals,
}

/// On-disk JSON layout of a joint distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointDistributionFile {
    pub num_secrets: usize,
    pub num_symbols: usize,
    pub mass: Vec<Vec<f64>>,
}

impl JointDistribution {
    /// Validates a raw `|S| x |X|` table and renormalizes it to sum to 1.
    pub fn validate(raw: &[Vec<f64>]) -> Result<Self, DistributionError> {
        let num_secrets = raw.len();
        let num_symbols = raw.first().map_or(0, Vec::len);
        if num_secrets == 0 || num_symbols == 0 {
            return Err(DistributionError::Empty);
        }
        for (row, values) in raw.iter().enumerate() {
            if values.len() != num_symbols {
                return Err(DistributionError::NotRectangular {
                    row,
                    expected: num_symbols,
                    found: values.len(),
                });
            }
        }
        for (secret, values) in raw.iter().enumerate() {
            for (symbol, &value) in values.iter().enumerate() {
                if !value.is_finite() {
                    return Err(DistributionError::NonFinite { secret, symbol });
                }
                if value < 0.0 {
                    return Err(DistributionError::NegativeEntry {
                        secret,
                        symbol,
                        value,
                    });
                }
            }
        }
        let total: f64 = raw.iter().flatten().sum();
        if total.is_nan() || (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(DistributionError::MassNotNormalizable { total });
        }
        let mass: Vec<f64> = if total == 1.0 {
            raw.iter().flatten().copied().collect()
        } else {
            raw.iter().flatten().map(|v| v / total).collect()
        };
        Self::from_normalized(num_secrets, num_symbols, mass)
    }

    fn from_normalized(
        num_secrets: usize,
        num_symbols: usize,
        mass: Vec<f64>,
    ) -> Result<Self, DistributionError> {
        let marginals = compute_marginals(num_secrets, num_symbols, &mass);
        if let Some(x) = marginals.px.iter().position(|&p| p <= 0.0) {
            return Err(DistributionError::DeadSymbol(x));
        }
        if let Some(s) = marginals.ps.iter().position(|&p| p <= 0.0) {
            return Err(DistributionError::DeadSecret(s));
        }
        Ok(Self {
            num_secrets,
            num_symbols,
            mass,
            marginals,
        })
    }

    pub fn num_secrets(&self) -> usize {
        self.num_secrets
    }

    pub fn num_symbols(&self) -> usize {
        self.num_symbols
    }

    /// `p(s, x)`.
    #[inline]
    pub fn mass(&self, secret: usize, symbol: usize) -> f64 {
        self.mass[secret * self.num_symbols + symbol]
    }

    /// Row `s` of the table: `p(s, ·)`.
    pub fn row(&self, secret: usize) -> &[f64] {
        let start = secret * self.num_symbols;
        &self.mass[start..start + self.num_symbols]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.num_secrets)
            .map(|s| self.row(s).to_vec())
            .collect()
    }

    pub fn marginals(&self) -> &Marginals {
        &self.marginals
    }

    /// `p(x)`.
    pub fn px(&self) -> &[f64] {
        &self.marginals.px
    }

    /// `p(s)`.
    pub fn ps(&self) -> &[f64] {
        &self.marginals.ps
    }

    /// `H(X)` in nats.
    pub fn entropy_x(&self) -> f64 {
        entropy(&self.marginals.px)
    }

    pub fn to_file(&self) -> JointDistributionFile {
        JointDistributionFile {
            num_secrets: self.num_secrets,
            num_symbols: self.num_symbols,
            mass: self.rows(),
        }
    }

    pub fn from_file(file: &JointDistributionFile) -> Result<Self, DistributionError> {
        let secrets = file.mass.len();
        let symbols = file.mass.first().map_or(0, Vec::len);
        if file.num_secrets != secrets || file.num_symbols != symbols {
            return Err(DistributionError::ShapeMismatch {
                declared_secrets: file.num_secrets,
                declared_symbols: file.num_symbols,
                secrets,
                symbols,
            });
        }
        Self::validate(&file.mass)
    }

    pub fn from_json_str(text: &str) -> Result<Self, DistributionError> {
        let file: JointDistributionFile =
            serde_json::from_str(text).map_err(|e| DistributionError::Parse(e.to_string()))?;
        Self::from_file(&file)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("finite table serializes")
    }

    /// Reads a headerless CSV table with one row per secret.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, DistributionError> {
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows = Vec::new();
        for record in csv.records() {
            let record = record.map_err(|e| DistributionError::Parse(e.to_string()))?;
            if record.iter().all(str::is_empty) {
                continue;
            }
            let row = record
                .iter()
                .map(|field| {
                    field
                        .parse::<f64>()
                        .map_err(|e| DistributionError::Parse(format!("{field:?}: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Self::validate(&rows)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for s in 0..self.num_secrets {
            let line: Vec<String> = self.row(s).iter().map(|&v| format_real(v)).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// Loads a distribution from disk. JSON is recognised by a leading `{`,
    /// anything else is parsed as CSV.
    pub fn load(path: &Path) -> Result<Self, DistributionError> {
        let text = fs::read_to_string(path)
            .map_err(|e| DistributionError::Io(format!("{}: {e}", path.display())))?;
        if text.trim_start().starts_with('{') {
            Self::from_json_str(&text)
        } else {
            Self::from_csv_reader(text.as_bytes())
        }
    }
}

fn compute_marginals(num_secrets: usize, num_symbols: usize, mass: &[f64]) -> Marginals {
    let mut px = vec![0.0; num_symbols];
    let mut ps = vec![0.0; num_secrets];
    for s in 0..num_secrets {
        for x in 0..num_symbols {
            let v = mass[s * num_symbols + x];
            px[x] += v;
            ps[s] += v;
        }
    }
    Marginals { px, ps }
}

/// Shannon entropy of a probability vector in nats; zero entries contribute 0.
pub fn entropy(p: &[f64]) -> f64 {
    p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| -v * v.ln())
        .sum::<f64>()
        .max(0.0)
}

/// How random joint distributions are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JointSampler {
    /// Uniform on the `(|S|·|X| - 1)`-simplex: i.i.d. Exp(1) cells, normalized.
    #[default]
    FlatDirichlet,
    /// i.i.d. Uniform(0, 1) cells, normalized.
    UniformEntries,
}

impl JointSampler {
    pub fn describe(&self) -> &'static str {
        match self {
            JointSampler::FlatDirichlet => {
                "flat Dirichlet over the joint simplex (normalized Exp(1) cells, ChaCha20 seeded from u64)"
            }
            JointSampler::UniformEntries => {
                "normalized i.i.d. Uniform(0,1) cells (ChaCha20 seeded from u64)"
            }
        }
    }

    /// Draws a `num_secrets x num_symbols` joint. The result is a pure
    /// function of the sampler, the sizes and `seed`; draws with a row or
    /// column lighter than [`SAMPLER_MIN_MARGINAL`] are discarded.
    pub fn sample(
        &self,
        num_secrets: usize,
        num_symbols: usize,
        seed: u64,
    ) -> Result<JointDistribution, DistributionError> {
        if num_secrets == 0 || num_symbols == 0 {
            return Err(DistributionError::ZeroSize);
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let cells = num_secrets * num_symbols;
        for _ in 0..SAMPLER_MAX_ATTEMPTS {
            let draws: Vec<f64> = match self {
                JointSampler::FlatDirichlet => (0..cells).map(|_| Exp1.sample(&mut rng)).collect(),
                JointSampler::UniformEntries => (0..cells).map(|_| rng.random::<f64>()).collect(),
            };
            let total: f64 = draws.iter().sum();
            if total.is_nan() || total <= 0.0 {
                continue;
            }
            let mass: Vec<f64> = draws.iter().map(|v| v / total).collect();
            let marginals = compute_marginals(num_secrets, num_symbols, &mass);
            let degenerate = marginals
                .px
                .iter()
                .chain(&marginals.ps)
                .any(|&p| p < SAMPLER_MIN_MARGINAL);
            if degenerate {
                continue;
            }
            return Ok(JointDistribution {
                num_secrets,
                num_symbols,
                mass,
                marginals,
            });
        }
        Err(DistributionError::DegenerateSampler)
    }
}

/// Draws a joint distribution uniformly from the `(|S|·|X| - 1)`-simplex
/// (flat Dirichlet).
pub fn sample_random_joint(
    num_secrets: usize,
    num_symbols: usize,
    seed: u64,
) -> Result<JointDistribution, DistributionError> {
    JointSampler::FlatDirichlet.sample(num_secrets, num_symbols, seed)
}

/// Formats a real with 12 significant digits; non-finite values as
/// `inf`, `-inf` or `NaN`.
pub fn format_real(value: f64) -> String {
    const SIGNIFICANT: i32 = 12;
    if value.is_nan() {
        return "NaN".to_owned();
    }
    if value.is_infinite() {
        return if value > 0.0 { "inf" } else { "-inf" }.to_owned();
    }
    if value == 0.0 {
        return format!("{:.*}", (SIGNIFICANT - 1) as usize, 0.0);
    }
    let exponent = value.abs().log10().floor() as i32;
    if (-5..SIGNIFICANT).contains(&exponent) {
        let decimals = (SIGNIFICANT - 1 - exponent).max(0) as usize;
        format!("{value:.decimals$}")
    } else {
        format!("{:.*e}", (SIGNIFICANT - 1) as usize, value)
    }
}
