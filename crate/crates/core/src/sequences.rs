//! Exponent sequences and their lacunarity structure.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// How a sequence was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SequenceOrigin {
    Explicit,
    Geometric,
    Power,
    Constructed,
}

/// A finite, strictly increasing list of positive exponents.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaSequence {
    values: Vec<f64>,
    origin: SequenceOrigin,
}

impl LambdaSequence {
    pub fn new(values: Vec<f64>, origin: SequenceOrigin) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("exponent sequence must have at least one element"));
        }
        for (i, &v) in values.iter().enumerate() {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("exponent {i} = {v} is not a positive finite real")));
            }
        }
        if let Some(i) = values.windows(2).position(|w| w[1] <= w[0]) {
            return Err(invalid(format!(
                "exponents must be strictly increasing (lambda[{}] = {} >= lambda[{}] = {})",
                i,
                values[i],
                i + 1,
                values[i + 1]
            )));
        }
        Ok(Self { values, origin })
    }

    pub fn explicit(values: Vec<f64>) -> Result<Self> {
        Self::new(values, SequenceOrigin::Explicit)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn origin(&self) -> SequenceOrigin {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The first `n` exponents.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.values.len() {
            return Err(invalid(format!(
                "truncation N = {n} must lie in 1..={}",
                self.values.len()
            )));
        }
        Ok(Self {
            values: self.values[..n].to_vec(),
            origin: self.origin,
        })
    }
}

/// `lambda1 * ratio^(n-1)` for `n = 1..=count`.
pub fn make_geometric(lambda1: f64, ratio: f64, count: usize) -> Result<LambdaSequence> {
    if !(ratio.is_finite() && ratio > 1.0) {
        return Err(invalid(format!("geometric ratio must exceed 1, got {ratio}")));
    }
    if count == 0 {
        return Err(invalid("count must be at least 1"));
    }
    let values = (0..count).map(|i| lambda1 * ratio.powi(i as i32)).collect();
    LambdaSequence::new(values, SequenceOrigin::Geometric)
}

/// `n^exponent` for `n = 1..=count`.
pub fn make_power(exponent: f64, count: usize) -> Result<LambdaSequence> {
    if !(exponent.is_finite() && exponent > 1.0) {
        return Err(invalid(format!(
            "power exponent must exceed 1 for a convergent reciprocal sum, got {exponent}"
        )));
    }
    if count == 0 {
        return Err(invalid("count must be at least 1"));
    }
    let values = (1..=count).map(|n| (n as f64).powf(exponent)).collect();
    LambdaSequence::new(values, SequenceOrigin::Power)
}

/// Ratio statistics of a sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LacunarityReport {
    pub n_seq: usize,
    /// Consecutive ratios `lambda[n+1] / lambda[n]`.
    pub ratios: Vec<f64>,
    /// `+inf` when there are no ratios.
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub muntz_sum: f64,
    /// Set for single-element sequences, where ratios are undefined.
    pub degenerate: bool,
}

impl LacunarityReport {
    pub fn is_lacunary(&self, gamma: f64) -> bool {
        !self.degenerate && gamma > 1.0 && self.min_ratio >= gamma
    }

    /// Largest 1-based index `n` with `lambda[n+1] / lambda[n] >= gamma`.
    pub fn last_index_with_ratio(&self, gamma: f64) -> Option<usize> {
        self.ratios.iter().rposition(|&r| r >= gamma).map(|i| i + 1)
    }
}

pub fn classify(seq: &LambdaSequence) -> LacunarityReport {
    let v = seq.values();
    let ratios: Vec<f64> = v.windows(2).map(|w| w[1] / w[0]).collect();
    let degenerate = ratios.is_empty();
    let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max_ratio = if degenerate {
        f64::INFINITY
    } else {
        ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    };
    let recips: Vec<f64> = v.iter().map(|x| 1.0 / x).collect();
    LacunarityReport {
        n_seq: v.len(),
        ratios,
        min_ratio,
        max_ratio,
        muntz_sum: crate::logspace::pairwise_sum(&recips),
        degenerate,
    }
}

/// Greedy block decomposition witnessing quasilacunarity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockStructure {
    /// 0-based start index of every complete block, plus the start of the trailing partial block.
    pub block_boundaries: Vec<usize>,
    pub gamma: f64,
    /// Longest complete block.
    pub block_bound: usize,
    /// Length of the trailing block, which has not yet reached ratio `gamma`.
    pub trailing: usize,
    pub n_seq: usize,
}

impl BlockStructure {
    /// Index ranges of all blocks, the last one possibly incomplete.
    pub fn blocks(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::with_capacity(self.block_boundaries.len());
        for (i, &start) in self.block_boundaries.iter().enumerate() {
            let end = self.block_boundaries.get(i + 1).copied().unwrap_or(self.n_seq);
            if end > start {
                out.push(start..end);
            }
        }
        out
    }
}

/// Leftmost-boundary greedy blocks: each block ends just before the first
/// index whose exponent is at least `gamma` times the block's first exponent.
///
/// Quasilacunarity can only be witnessed on a truncation, so the search fails
/// when no complete block exists, when block lengths grow (the last complete
/// block is longer than every block in the first half), or when the trailing
/// block already exceeds the bound.
pub fn find_blocks(seq: &LambdaSequence, gamma: f64) -> Result<BlockStructure> {
    if !(gamma.is_finite() && gamma > 1.0) {
        return Err(invalid(format!("gamma must exceed 1, got {gamma}")));
    }
    let v = seq.values();
    let mut boundaries = vec![0usize];
    let mut start = 0usize;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x / v[start] >= gamma {
            boundaries.push(i);
            start = i;
        }
    }
    let lengths: Vec<usize> = boundaries.windows(2).map(|w| w[1] - w[0]).collect();
    let trailing = v.len() - *boundaries.last().expect("non-empty");
    let not_witnessed = |why: String| Error::QuasilacunarityNotWitnessed(why);
    if lengths.is_empty() {
        return Err(not_witnessed(format!(
            "no index reaches ratio {gamma} relative to lambda_1 within N = {}",
            v.len()
        )));
    }
    let block_bound = *lengths.iter().max().expect("non-empty");
    if lengths.len() >= 2 {
        let half = lengths.len().div_ceil(2);
        let early = *lengths[..half].iter().max().expect("non-empty");
        let last = *lengths.last().expect("non-empty");
        if last > early {
            return Err(not_witnessed(format!(
                "block lengths grow along the truncation ({lengths:?})"
            )));
        }
    }
    if trailing > block_bound {
        return Err(not_witnessed(format!(
            "trailing block of length {trailing} exceeds the bound {block_bound}"
        )));
    }
    Ok(BlockStructure {
        block_boundaries: boundaries,
        gamma,
        block_bound,
        trailing,
        n_seq: v.len(),
    })
}

/// Sequence description as it appears in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SequenceSpec {
    Geometric { lambda1: f64, ratio: f64, count: usize },
    Power { exponent: f64, count: usize },
    Explicit { values: Vec<f64> },
}

impl SequenceSpec {
    pub fn build(&self) -> Result<LambdaSequence> {
        match self {
            SequenceSpec::Geometric { lambda1, ratio, count } => make_geometric(*lambda1, *ratio, *count),
            SequenceSpec::Power { exponent, count } => make_power(*exponent, *count),
            SequenceSpec::Explicit { values } => LambdaSequence::explicit(values.clone()),
        }
    }
}
