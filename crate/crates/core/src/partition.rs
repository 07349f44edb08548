//! Partitioning the high-risk set.
//!
//! [`greedy_refine`] is the agglomerative merging heuristic: seed a block
//! with the riskiest remaining symbol, absorb whichever remaining symbol
//! lowers the block leakage the most until the block is private, repeat,
//! and finally fold a still-violating last block into earlier blocks.
//! [`brute_force_optimal`] enumerates every set partition of small
//! high-risk sets and serves as the optimality oracle.

use serde::Serialize;
use thiserror::Error;

use crate::distribution::{entropy, JointDistribution};
use crate::lift::{sorted_subset_omega, RiskSplit};
use crate::mechanism::{block_mass, HighRiskPartition};

/// Largest high-risk set the brute-force oracle accepts.
pub const ORACLE_MAX_SYMBOLS: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error("high-risk set too large for oracle: {size} symbols, limit is {ORACLE_MAX_SYMBOLS}")]
    TooLarge { size: usize },
    #[error("partitions cover different high-risk sets")]
    CoverMismatch,
}

/// Which earlier blocks the fix-up phase may merge into the last block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FixupRange {
    /// Every earlier block, including the first.
    #[default]
    AllBlocks,
    /// Earlier blocks except the first one (the literal `1 < i < p` bound).
    ExcludeFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GreedyOptions {
    pub fixup_range: FixupRange,
}

/// One step of the greedy construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum MergeStep {
    /// A new block starts from the riskiest remaining symbol.
    Seed {
        block: usize,
        symbol: usize,
        #[serde(with = "crate::ext_real")]
        omega: f64,
    },
    /// A remaining symbol joins the current block.
    Grow {
        block: usize,
        symbol: usize,
        #[serde(with = "crate::ext_real")]
        omega: f64,
    },
    /// The last block absorbs an earlier block. `absorbed` is the index of
    /// that block before removal; later blocks shift down by one.
    Fixup {
        absorbed: usize,
        members: Vec<usize>,
        #[serde(with = "crate::ext_real")]
        omega: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyTrace {
    pub partition: HighRiskPartition,
    /// Leakage `ω(X_i)` of each final block.
    pub block_omega: Vec<f64>,
    pub feasible: bool,
    pub merge_log: Vec<MergeStep>,
}

/// JSON layout of a [`GreedyTrace`].
#[derive(Debug, Clone, Serialize)]
pub struct GreedyTraceExport {
    pub blocks: Vec<Vec<usize>>,
    #[serde(with = "crate::ext_real::vec")]
    pub block_omega: Vec<f64>,
    pub feasible: bool,
    pub merge_log: Vec<MergeStep>,
}

impl GreedyTrace {
    pub fn export(&self) -> GreedyTraceExport {
        GreedyTraceExport {
            blocks: self.partition.blocks().to_vec(),
            block_omega: self.block_omega.clone(),
            feasible: self.feasible,
            merge_log: self.merge_log.clone(),
        }
    }
}

fn union_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out.sort_unstable();
    out
}

pub fn greedy_refine(j: &JointDistribution, split: &RiskSplit) -> GreedyTrace {
    greedy_refine_with(j, split, GreedyOptions::default())
}

/// Runs the greedy refinement. Ties in every argmax/argmin go to the lowest
/// symbol or block index.
pub fn greedy_refine_with(
    j: &JointDistribution,
    split: &RiskSplit,
    options: GreedyOptions,
) -> GreedyTrace {
    let eps = split.epsilon();
    let mut remaining: Vec<usize> = split.high_risk().to_vec();
    let mut blocks: Vec<(Vec<usize>, f64)> = Vec::new();
    let mut log = Vec::new();

    while !remaining.is_empty() {
        let mut seed_pos = 0;
        let mut seed_omega = sorted_subset_omega(j, &[remaining[0]]);
        for (pos, &x) in remaining.iter().enumerate().skip(1) {
            let w = sorted_subset_omega(j, &[x]);
            if w > seed_omega {
                seed_pos = pos;
                seed_omega = w;
            }
        }
        let seed = remaining.remove(seed_pos);
        let index = blocks.len();
        log.push(MergeStep::Seed {
            block: index,
            symbol: seed,
            omega: seed_omega,
        });
        let mut block = vec![seed];
        let mut omega = seed_omega;

        while omega > eps && !remaining.is_empty() {
            let mut best: Option<(usize, Vec<usize>, f64)> = None;
            for (pos, &x) in remaining.iter().enumerate() {
                let candidate = union_sorted(&block, &[x]);
                let w = sorted_subset_omega(j, &candidate);
                if best.as_ref().is_none_or(|(_, _, bw)| w < *bw) {
                    best = Some((pos, candidate, w));
                }
            }
            let (pos, candidate, w) = best.expect("remaining is non-empty");
            let symbol = remaining.remove(pos);
            block = candidate;
            omega = w;
            log.push(MergeStep::Grow {
                block: index,
                symbol,
                omega,
            });
        }
        blocks.push((block, omega));
    }

    while blocks.len() > 1 && blocks.last().is_some_and(|(_, w)| *w > eps) {
        let last = blocks.len() - 1;
        let first = match options.fixup_range {
            FixupRange::AllBlocks => 0,
            FixupRange::ExcludeFirst => 1,
        };
        let mut best: Option<(usize, Vec<usize>, f64)> = None;
        for (k, (candidate, _)) in blocks.iter().enumerate().take(last).skip(first) {
            let merged = union_sorted(&blocks[last].0, candidate);
            let w = sorted_subset_omega(j, &merged);
            if best.as_ref().is_none_or(|(_, _, bw)| w < *bw) {
                best = Some((k, merged, w));
            }
        }
        let Some((k, merged, w)) = best else { break };
        let (members, _) = blocks.remove(k);
        let last = blocks.len() - 1;
        blocks[last] = (merged, w);
        log.push(MergeStep::Fixup {
            absorbed: k,
            members,
            omega: w,
        });
    }

    let feasible = blocks.iter().all(|(_, w)| *w <= eps);
    let (blocks, block_omega): (Vec<_>, Vec<_>) = blocks.into_iter().unzip();
    GreedyTrace {
        partition: HighRiskPartition::from_valid_blocks(split, blocks),
        block_omega,
        feasible,
        merge_log: log,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleOutcome {
    Optimal {
        partition: HighRiskPartition,
        utility: f64,
    },
    /// No partition of the high-risk set keeps every block within epsilon.
    Infeasible,
}

impl OracleOutcome {
    pub fn utility(&self) -> Option<f64> {
        match self {
            OracleOutcome::Optimal { utility, .. } => Some(*utility),
            OracleOutcome::Infeasible => None,
        }
    }
}

/// Iterates restricted growth strings of length `n`: `a[0] = 0` and
/// `a[i] <= 1 + max(a[..i])`. Each string encodes one set partition.
struct RestrictedGrowth {
    labels: Vec<usize>,
    /// `prefix_max[i] = max(labels[..=i])`.
    prefix_max: Vec<usize>,
    started: bool,
}

impl RestrictedGrowth {
    fn new(n: usize) -> Self {
        Self {
            labels: vec![0; n],
            prefix_max: vec![0; n],
            started: false,
        }
    }

    fn advance(&mut self) -> Option<&[usize]> {
        let n = self.labels.len();
        if !self.started {
            self.started = true;
            return Some(&self.labels);
        }
        let i = (1..n)
            .rev()
            .find(|&i| self.labels[i] <= self.prefix_max[i - 1])?;
        self.labels[i] += 1;
        self.prefix_max[i] = self.prefix_max[i - 1].max(self.labels[i]);
        for k in i + 1..n {
            self.labels[k] = 0;
            self.prefix_max[k] = self.prefix_max[i];
        }
        Some(&self.labels)
    }
}

/// Exhaustive search for the utility-maximizing private partition.
///
/// Ties on utility prefer fewer blocks, then the lexicographically smaller
/// block list (blocks ordered by their smallest member).
pub fn brute_force_optimal(
    j: &JointDistribution,
    split: &RiskSplit,
) -> Result<OracleOutcome, PartitionError> {
    let high = split.high_risk();
    let n = high.len();
    if n > ORACLE_MAX_SYMBOLS {
        return Err(PartitionError::TooLarge { size: n });
    }
    let h = entropy(j.px());
    if n == 0 {
        return Ok(OracleOutcome::Optimal {
            partition: HighRiskPartition::from_valid_blocks(split, Vec::new()),
            utility: h,
        });
    }

    let eps = split.epsilon();
    let px = j.px();
    let members_of = |mask: usize| -> Vec<usize> {
        (0..n)
            .filter(|b| mask & (1 << b) != 0)
            .map(|b| high[b])
            .collect()
    };
    let subsets = 1usize << n;
    let mut private = vec![false; subsets];
    let mut loss = vec![0.0; subsets];
    for mask in 1..subsets {
        let members = members_of(mask);
        private[mask] = sorted_subset_omega(j, &members) <= eps;
        let p_block = block_mass(px, &members);
        loss[mask] = members
            .iter()
            .map(|&x| px[x] * (p_block / px[x]).ln())
            .sum();
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut masks = Vec::with_capacity(n);
    let mut rgs = RestrictedGrowth::new(n);
    while let Some(labels) = rgs.advance() {
        masks.clear();
        for (b, &label) in labels.iter().enumerate() {
            if label == masks.len() {
                masks.push(0usize);
            }
            masks[label] |= 1 << b;
        }
        if !masks.iter().all(|&m| private[m]) {
            continue;
        }
        let utility = h - masks.iter().map(|&m| loss[m]).sum::<f64>();
        let better = match &best {
            None => true,
            Some((bu, bm)) => {
                utility > *bu
                    || (utility == *bu
                        && (masks.len() < bm.len()
                            || (masks.len() == bm.len()
                                && block_lists(&masks, &members_of)
                                    < block_lists(bm, &members_of))))
            }
        };
        if better {
            best = Some((utility, masks.clone()));
        }
    }

    Ok(match best {
        None => OracleOutcome::Infeasible,
        Some((utility, masks)) => OracleOutcome::Optimal {
            partition: HighRiskPartition::from_valid_blocks(
                split,
                block_lists(&masks, &members_of),
            ),
            utility,
        },
    })
}

fn block_lists(masks: &[usize], members_of: &impl Fn(usize) -> Vec<usize>) -> Vec<Vec<usize>> {
    masks.iter().map(|&m| members_of(m)).collect()
}

/// Whether every block of `coarser` is a union of blocks of `finer`, with
/// block masses adding up.
pub fn is_refinement(
    j: &JointDistribution,
    finer: &HighRiskPartition,
    coarser: &HighRiskPartition,
) -> Result<bool, PartitionError> {
    if finer.split().high_risk() != coarser.split().high_risk()
        || finer.split().num_symbols() != coarser.split().num_symbols()
    {
        return Err(PartitionError::CoverMismatch);
    }
    let mut owner = vec![usize::MAX; coarser.split().num_symbols()];
    for (i, block) in coarser.blocks().iter().enumerate() {
        for &x in block {
            owner[x] = i;
        }
    }
    let mut assigned_mass = vec![0.0; coarser.len()];
    for block in finer.blocks() {
        let i = owner[block[0]];
        if block.iter().any(|&x| owner[x] != i) {
            return Ok(false);
        }
        assigned_mass[i] += block_mass(j.px(), block);
    }
    Ok(coarser
        .block_masses(j)
        .iter()
        .zip(&assigned_mass)
        .all(|(a, b)| (a - b).abs() <= 1e-12))
}
