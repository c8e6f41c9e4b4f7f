use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::personagen::{GenerationRecord, PromptStrategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyEfficiency {
    pub strategy: PromptStrategy,
    pub count: usize,
    pub mean_elapsed_seconds: f64,
    pub mean_prompt_tokens: f64,
    pub mean_completion_tokens: f64,
    pub mean_total_tokens: f64,
}

/// Per-strategy means, ordered few-shot then chain-of-thought.
pub fn efficiency_summary(records: &[GenerationRecord]) -> Result<Vec<StrategyEfficiency>, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let mut groups: BTreeMap<PromptStrategy, Vec<&GenerationRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.strategy).or_default().push(r);
    }
    Ok(groups
        .into_iter()
        .map(|(strategy, rs)| {
            let n = rs.len() as f64;
            let mean = |f: &dyn Fn(&GenerationRecord) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            StrategyEfficiency {
                strategy,
                count: rs.len(),
                mean_elapsed_seconds: mean(&|r| r.elapsed_seconds),
                mean_prompt_tokens: mean(&|r| r.prompt_tokens as f64),
                mean_completion_tokens: mean(&|r| r.completion_tokens as f64),
                mean_total_tokens: mean(&|r| r.total_tokens as f64),
            }
        })
        .collect())
}

pub fn efficiency_csv(rows: &[StrategyEfficiency]) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "strategy",
        "count",
        "mean_elapsed_seconds",
        "mean_prompt_tokens",
        "mean_completion_tokens",
        "mean_total_tokens",
    ])?;
    for r in rows {
        w.write_record([
            r.strategy.as_str().to_string(),
            r.count.to_string(),
            format!("{:.4}", r.mean_elapsed_seconds),
            format!("{:.2}", r.mean_prompt_tokens),
            format!("{:.2}", r.mean_completion_tokens),
            format!("{:.2}", r.mean_total_tokens),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8"))
}

/// One row per generation run: the per-story time and token series.
pub fn records_csv(records: &[GenerationRecord]) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "record_id",
        "story_id",
        "strategy",
        "elapsed_seconds",
        "prompt_tokens",
        "completion_tokens",
        "total_tokens",
        "attempts",
    ])?;
    for r in records {
        w.write_record([
            r.record_id.clone(),
            r.story_id.clone(),
            r.strategy.as_str().to_string(),
            format!("{:.6}", r.elapsed_seconds),
            r.prompt_tokens.to_string(),
            r.completion_tokens.to_string(),
            r.total_tokens.to_string(),
            r.attempts.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8"))
}
