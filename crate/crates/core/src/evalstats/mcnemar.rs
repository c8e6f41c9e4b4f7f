use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{EvalError, Metric};
use crate::personagen::PromptStrategy;

pub const DEFAULT_ALPHA: f64 = 0.05;
/// Under the automatic policy the exact test is used below this many
/// discordant pairs.
pub const EXACT_THRESHOLD: u64 = 25;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryJudgment {
    pub evaluator_id: String,
    pub story_id: String,
    pub metric: Metric,
    pub method: PromptStrategy,
    pub response: bool,
}

/// Paired outcomes with few-shot as the row method and chain-of-thought as
/// the column method: `a` both yes, `b` few-shot yes / CoT no, `c` few-shot
/// no / CoT yes, `d` both no.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl ContingencyTable {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        Self { a, b, c, d }
    }
    pub fn n(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }
    /// Number of discordant pairs.
    pub fn n_d(&self) -> u64 {
        self.b + self.c
    }
}

/// Pairs the two methods' judgments per (evaluator, story) for one metric.
pub fn build_contingency(
    judgments: &[BinaryJudgment],
    metric: Metric,
) -> Result<ContingencyTable, EvalError> {
    let mut pairs: BTreeMap<(&str, &str), [Option<bool>; 2]> = BTreeMap::new();
    for j in judgments.iter().filter(|j| j.metric == metric) {
        let slot = match j.method {
            PromptStrategy::FewShot => 0,
            PromptStrategy::Cot => 1,
        };
        let entry = pairs
            .entry((j.evaluator_id.as_str(), j.story_id.as_str()))
            .or_default();
        if entry[slot].is_some() {
            return Err(EvalError::DuplicateJudgment(format!(
                "{}/{}/{}/{}",
                j.evaluator_id, j.story_id, metric, j.method
            )));
        }
        entry[slot] = Some(j.response);
    }
    let unpaired: Vec<String> = pairs
        .iter()
        .filter(|(_, v)| v[0].is_none() || v[1].is_none())
        .map(|((e, s), _)| format!("{e}/{s}"))
        .collect();
    if !unpaired.is_empty() {
        return Err(EvalError::UnpairedJudgment(unpaired));
    }
    let mut t = ContingencyTable::default();
    for v in pairs.values() {
        match (v[0], v[1]) {
            (Some(true), Some(true)) => t.a += 1,
            (Some(true), Some(false)) => t.b += 1,
            (Some(false), Some(true)) => t.c += 1,
            _ => t.d += 1,
        }
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McNemarVariant {
    ChiSquare,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McNemarPolicy {
    Auto,
    Exact,
    ChiSquare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    pub variant: McNemarVariant,
    pub statistic: f64,
    pub p_value: f64,
    /// Exact p-value as a reduced fraction, for the exact variant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_value_exact: Option<String>,
    pub alpha: f64,
    pub significant: bool,
}

impl McNemarResult {
    pub fn at_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self.significant = self.p_value < alpha;
        self
    }
}

/// Two-sided exact p-value `min(1, 2·Σ_{k≤min(b,c)} C(b+c, k) / 2^(b+c))`.
pub fn exact_p_value(b: u64, c: u64) -> Result<BigRational, EvalError> {
    let n = b + c;
    if n == 0 {
        return Err(EvalError::NoDiscordantPairs);
    }
    let m = b.min(c);
    let mut term = BigInt::one();
    let mut tail = BigInt::zero();
    for k in 0..=m {
        if k > 0 {
            // C(n, k) = C(n, k-1) · (n-k+1) / k, exact at every step.
            term = term * BigInt::from(n - k + 1) / BigInt::from(k);
        }
        tail += &term;
    }
    let p = BigRational::new(tail * 2, BigInt::one() << n);
    Ok(p.min(BigRational::one()))
}

pub fn mcnemar_exact(table: &ContingencyTable) -> Result<McNemarResult, EvalError> {
    let p = exact_p_value(table.b, table.c)?;
    let p_value = p.to_f64().unwrap_or(f64::NAN);
    Ok(McNemarResult {
        variant: McNemarVariant::Exact,
        statistic: table.b.min(table.c) as f64,
        p_value,
        p_value_exact: Some(p.to_string()),
        alpha: DEFAULT_ALPHA,
        significant: false,
    }
    .at_alpha(DEFAULT_ALPHA))
}

pub fn mcnemar_chi_square(table: &ContingencyTable) -> Result<McNemarResult, EvalError> {
    let nd = table.n_d();
    if nd == 0 {
        return Err(EvalError::NoDiscordantPairs);
    }
    let diff = table.b as f64 - table.c as f64;
    let statistic = diff * diff / nd as f64;
    let dist = ChiSquared::new(1.0).expect("one degree of freedom is valid");
    Ok(McNemarResult {
        variant: McNemarVariant::ChiSquare,
        statistic,
        p_value: dist.sf(statistic).clamp(0.0, 1.0),
        p_value_exact: None,
        alpha: DEFAULT_ALPHA,
        significant: false,
    }
    .at_alpha(DEFAULT_ALPHA))
}

pub fn mcnemar(table: &ContingencyTable, policy: McNemarPolicy) -> Result<McNemarResult, EvalError> {
    match policy {
        McNemarPolicy::Exact => mcnemar_exact(table),
        McNemarPolicy::ChiSquare => mcnemar_chi_square(table),
        McNemarPolicy::Auto if table.n_d() < EXACT_THRESHOLD => mcnemar_exact(table),
        McNemarPolicy::Auto => mcnemar_chi_square(table),
    }
}
