//! Sanitization channels built from a partition of the high-risk symbols.
//!
//! Low-risk symbols pass through unchanged. Each block of the high-risk
//! partition is merged into one super-symbol whose representative is the
//! smallest symbol index in the block. Output symbols are ordered low-risk
//! first (ascending), then one super-symbol per block in block order.

use serde::Serialize;
use thiserror::Error;

use crate::distribution::{entropy, JointDistribution};
use crate::lift::{log_lift_value, RiskSplit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MechanismError {
    #[error("partition does not match the high-risk set: {0}")]
    PartitionMismatch(String),
    #[error("X has zero entropy, normalized loss is undefined")]
    ZeroEntropy,
}

/// An ordered partition `{X_1, .., X_p}` of the high-risk set `X_ε^c`.
///
/// Blocks are stored sorted ascending; block order is preserved as given.
#[derive(Debug, Clone, PartialEq)]
pub struct HighRiskPartition {
    split: RiskSplit,
    blocks: Vec<Vec<usize>>,
}

impl HighRiskPartition {
    pub fn new(split: &RiskSplit, blocks: Vec<Vec<usize>>) -> Result<Self, MechanismError> {
        let mut seen = vec![false; split.num_symbols()];
        let mut blocks = blocks;
        for (i, block) in blocks.iter_mut().enumerate() {
            if block.is_empty() {
                return Err(MechanismError::PartitionMismatch(format!(
                    "block {i} is empty"
                )));
            }
            block.sort_unstable();
            for &x in block.iter() {
                if x >= split.num_symbols() || !split.is_high_risk(x) {
                    return Err(MechanismError::PartitionMismatch(format!(
                        "symbol {x} in block {i} is not high-risk"
                    )));
                }
                if std::mem::replace(&mut seen[x], true) {
                    return Err(MechanismError::PartitionMismatch(format!(
                        "symbol {x} appears in more than one block"
                    )));
                }
            }
        }
        if let Some(&x) = split.high_risk().iter().find(|&&x| !seen[x]) {
            return Err(MechanismError::PartitionMismatch(format!(
                "high-risk symbol {x} is not covered"
            )));
        }
        Ok(Self {
            split: split.clone(),
            blocks,
        })
    }

    /// The single-block partition that merges all high-risk symbols.
    pub fn complete_merging(split: &RiskSplit) -> Self {
        let blocks = if split.high_risk().is_empty() {
            Vec::new()
        } else {
            vec![split.high_risk().to_vec()]
        };
        Self {
            split: split.clone(),
            blocks,
        }
    }

    /// The finest partition: every high-risk symbol on its own.
    pub fn singletons(split: &RiskSplit) -> Self {
        Self {
            split: split.clone(),
            blocks: split.high_risk().iter().map(|&x| vec![x]).collect(),
        }
    }

    pub(crate) fn from_valid_blocks(split: &RiskSplit, blocks: Vec<Vec<usize>>) -> Self {
        debug_assert!(Self::new(split, blocks.clone()).is_ok());
        Self {
            split: split.clone(),
            blocks,
        }
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn split(&self) -> &RiskSplit {
        &self.split
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// `p(X_i)` for each block.
    pub fn block_masses(&self, j: &JointDistribution) -> Vec<f64> {
        self.blocks.iter().map(|b| block_mass(j.px(), b)).collect()
    }

    fn check_alphabet(&self, j: &JointDistribution) -> Result<(), MechanismError> {
        if self.split.num_symbols() != j.num_symbols() {
            return Err(MechanismError::PartitionMismatch(format!(
                "partition is over {} symbols, distribution has {}",
                self.split.num_symbols(),
                j.num_symbols()
            )));
        }
        Ok(())
    }
}

pub(crate) fn block_mass(px: &[f64], block: &[usize]) -> f64 {
    block.iter().fold(0.0, |acc, &x| acc + px[x])
}

/// One symbol of the output alphabet `Y`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutputSymbol {
    /// A low-risk symbol published verbatim.
    Kept { symbol: usize },
    /// The super-symbol of a block, represented by its smallest member.
    Merged {
        block: usize,
        representative: usize,
        members: Vec<usize>,
    },
    /// One member of a block whose mass is spread uniformly over the block.
    Spread { block: usize, symbol: usize },
}

impl OutputSymbol {
    pub fn is_kept(&self) -> bool {
        matches!(self, OutputSymbol::Kept { .. })
    }
}

/// A channel `p(y|x)` together with the induced output distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct SanitizationChannel {
    num_secrets: usize,
    num_symbols: usize,
    output_symbols: Vec<OutputSymbol>,
    /// `|X| x |Y|`, row-major.
    transition: Vec<f64>,
    input_px: Vec<f64>,
    prior: Vec<f64>,
    output_px: Vec<f64>,
    /// `|S| x |Y|`, row-major.
    output_joint: Vec<f64>,
}

/// JSON export layout of a channel.
#[derive(Debug, Clone, Serialize)]
pub struct ChannelExport {
    pub output_symbols: Vec<OutputSymbol>,
    pub transition: Vec<Vec<f64>>,
}

impl SanitizationChannel {
    fn assemble(
        j: &JointDistribution,
        output_symbols: Vec<OutputSymbol>,
        transition: Vec<f64>,
    ) -> Self {
        let (ns, nx, ny) = (j.num_secrets(), j.num_symbols(), output_symbols.len());
        // p(y) = Σ_x p(y|x) p(x) and p(s,y) = Σ_x p(y|x) p(s,x), in ascending x.
        let mut output_px = vec![0.0; ny];
        let mut output_joint = vec![0.0; ns * ny];
        for x in 0..nx {
            for y in 0..ny {
                let t = transition[x * ny + y];
                output_px[y] += t * j.px()[x];
                for s in 0..ns {
                    output_joint[s * ny + y] += t * j.mass(s, x);
                }
            }
        }
        Self {
            num_secrets: ns,
            num_symbols: nx,
            output_symbols,
            transition,
            input_px: j.px().to_vec(),
            prior: j.ps().to_vec(),
            output_px,
            output_joint,
        }
    }

    pub fn output_symbols(&self) -> &[OutputSymbol] {
        &self.output_symbols
    }

    pub fn num_outputs(&self) -> usize {
        self.output_symbols.len()
    }

    pub fn num_symbols(&self) -> usize {
        self.num_symbols
    }

    /// `p(y|x)`.
    pub fn transition(&self, symbol: usize, output: usize) -> f64 {
        self.transition[symbol * self.num_outputs() + output]
    }

    pub fn transition_row(&self, symbol: usize) -> &[f64] {
        let ny = self.num_outputs();
        &self.transition[symbol * ny..(symbol + 1) * ny]
    }

    /// `p(y)`.
    pub fn output_px(&self) -> &[f64] {
        &self.output_px
    }

    /// `p(s, y)`.
    pub fn output_joint(&self, secret: usize, output: usize) -> f64 {
        self.output_joint[secret * self.num_outputs() + output]
    }

    /// `ω(y)` computed from `p(s, y)`, `p(s)` and `p(y)`.
    pub fn output_leakage(&self, output: usize) -> f64 {
        let py = self.output_px[output];
        (0..self.num_secrets)
            .map(|s| log_lift_value(self.output_joint(s, output), self.prior[s], py).abs())
            .fold(0.0, f64::max)
    }

    /// `max_y ω(y)` over the whole output alphabet.
    pub fn post_leakage(&self) -> f64 {
        (0..self.num_outputs())
            .map(|y| self.output_leakage(y))
            .fold(0.0, f64::max)
    }

    /// `max ω(y)` over outputs produced from high-risk symbols, `None` when
    /// there are none.
    pub fn merged_leakage(&self) -> Option<f64> {
        self.leakage_where(|o| !o.is_kept())
    }

    /// `max ω(y)` over verbatim low-risk outputs, `None` when there are none.
    pub fn kept_leakage(&self) -> Option<f64> {
        self.leakage_where(OutputSymbol::is_kept)
    }

    fn leakage_where(&self, keep: impl Fn(&OutputSymbol) -> bool) -> Option<f64> {
        self.output_symbols
            .iter()
            .enumerate()
            .filter(|(_, o)| keep(o))
            .map(|(y, _)| self.output_leakage(y))
            .reduce(f64::max)
    }

    /// `I(X;Y) = Σ_{x,y} p(x) p(y|x) ln( p(y|x) / p(y) )`, summed directly
    /// over the channel.
    pub fn mutual_information(&self) -> f64 {
        let ny = self.num_outputs();
        let mut total = 0.0;
        for x in 0..self.num_symbols {
            for y in 0..ny {
                let t = self.transition[x * ny + y];
                if t > 0.0 {
                    total += self.input_px[x] * t * (t / self.output_px[y]).ln();
                }
            }
        }
        total
    }

    pub fn export(&self) -> ChannelExport {
        ChannelExport {
            output_symbols: self.output_symbols.clone(),
            transition: (0..self.num_symbols)
                .map(|x| self.transition_row(x).to_vec())
                .collect(),
        }
    }
}

/// Builds the deterministic merging channel for `part`.
pub fn build_channel(
    j: &JointDistribution,
    part: &HighRiskPartition,
) -> Result<SanitizationChannel, MechanismError> {
    part.check_alphabet(j)?;
    let mut outputs: Vec<OutputSymbol> = part
        .split()
        .low_risk()
        .iter()
        .map(|&symbol| OutputSymbol::Kept { symbol })
        .collect();
    outputs.extend(
        part.blocks()
            .iter()
            .enumerate()
            .map(|(block, members)| OutputSymbol::Merged {
                block,
                representative: members[0],
                members: members.clone(),
            }),
    );
    let ny = outputs.len();
    let mut transition = vec![0.0; j.num_symbols() * ny];
    for (y, out) in outputs.iter().enumerate() {
        match out {
            OutputSymbol::Kept { symbol } => transition[symbol * ny + y] = 1.0,
            OutputSymbol::Merged { members, .. } => {
                for &x in members {
                    transition[x * ny + y] = 1.0;
                }
            }
            OutputSymbol::Spread { .. } => unreachable!(),
        }
    }
    Ok(SanitizationChannel::assemble(j, outputs, transition))
}

/// Builds the channel where each block's mass is spread uniformly over the
/// block's own symbols (`R(y) = 1/|X_i|`) instead of a single super-symbol.
/// Leakage and utility match [`build_channel`].
pub fn build_uniform_channel(
    j: &JointDistribution,
    part: &HighRiskPartition,
) -> Result<SanitizationChannel, MechanismError> {
    part.check_alphabet(j)?;
    let mut outputs: Vec<OutputSymbol> = part
        .split()
        .low_risk()
        .iter()
        .map(|&symbol| OutputSymbol::Kept { symbol })
        .collect();
    let mut block_ranges = Vec::with_capacity(part.len());
    for (block, members) in part.blocks().iter().enumerate() {
        let start = outputs.len();
        outputs.extend(
            members
                .iter()
                .map(|&symbol| OutputSymbol::Spread { block, symbol }),
        );
        block_ranges.push(start..outputs.len());
    }
    let ny = outputs.len();
    let mut transition = vec![0.0; j.num_symbols() * ny];
    for (y, out) in outputs.iter().enumerate() {
        if let OutputSymbol::Kept { symbol } = out {
            transition[symbol * ny + y] = 1.0;
        }
    }
    for (members, range) in part.blocks().iter().zip(block_ranges) {
        let weight = 1.0 / members.len() as f64;
        for &x in members {
            for y in range.clone() {
                transition[x * ny + y] = weight;
            }
        }
    }
    Ok(SanitizationChannel::assemble(j, outputs, transition))
}

/// `H(X) - I(X;Y) = Σ_i Σ_{x ∈ X_i} p(x) ln( p(X_i) / p(x) )`.
pub fn information_loss(j: &JointDistribution, part: &HighRiskPartition) -> f64 {
    let px = j.px();
    part.blocks()
        .iter()
        .map(|block| {
            let p_block = block_mass(px, block);
            block
                .iter()
                .map(|&x| px[x] * (p_block / px[x]).ln())
                .sum::<f64>()
        })
        .sum()
}

/// `I(X;Y) = H(X) + Σ_i Σ_{x ∈ X_i} p(x) ln( p(x) / p(X_i) )` in nats.
pub fn mutual_information(j: &JointDistribution, part: &HighRiskPartition) -> f64 {
    entropy(j.px()) - information_loss(j, part)
}

/// Normalized mutual-information loss `(H(X) - I(X;Y)) / H(X)`.
pub fn nmil(j: &JointDistribution, part: &HighRiskPartition) -> Result<f64, MechanismError> {
    let h = entropy(j.px());
    if h <= 0.0 {
        return Err(MechanismError::ZeroEntropy);
    }
    // The loss can exceed H(X) by rounding when everything is merged.
    Ok((information_loss(j, part) / h).clamp(0.0, 1.0))
}
