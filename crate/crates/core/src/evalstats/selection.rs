use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::personagen::PromptStrategy;

/// Stories to evaluate and, per evaluator, the order in which the two
/// personas of each selected story are shown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationPlan {
    pub seed: u64,
    pub subset: Vec<String>,
    /// `orders[evaluator][i]` is the presentation order for `subset[i]`.
    pub orders: BTreeMap<String, Vec<[PromptStrategy; 2]>>,
}

fn stream_id(evaluator: &str) -> u64 {
    // FNV-1a; gives every evaluator an independent ChaCha stream.
    evaluator.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seeded uniform sample of `n` distinct stories (duplicates in the input
/// are ignored) plus a seeded coin flip per evaluator and story for the
/// presentation order. Everything is reproducible from `seed`.
pub fn select_evaluation_subset(
    story_ids: &[String],
    n: usize,
    seed: u64,
    evaluators: &[String],
) -> Result<EvaluationPlan, EvalError> {
    let mut seen = BTreeSet::new();
    let mut ids: Vec<String> = story_ids
        .iter()
        .filter(|id| seen.insert(id.as_str()))
        .cloned()
        .collect();
    if n > ids.len() {
        return Err(EvalError::SubsetTooLarge {
            requested: n,
            available: ids.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    ids.truncate(n);

    let orders = evaluators
        .iter()
        .map(|e| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream_id(e));
            let order = (0..n)
                .map(|_| {
                    if rng.gen_bool(0.5) {
                        [PromptStrategy::FewShot, PromptStrategy::Cot]
                    } else {
                        [PromptStrategy::Cot, PromptStrategy::FewShot]
                    }
                })
                .collect();
            (e.clone(), order)
        })
        .collect();
    Ok(EvaluationPlan {
        seed,
        subset: ids,
        orders,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("story-{i:02}")).collect()
    }

    #[test]
    fn deterministic_subset() {
        let evals = vec!["e1".to_string(), "e2".to_string()];
        let a = select_evaluation_subset(&ids(24), 5, 42, &evals).unwrap();
        let b = select_evaluation_subset(&ids(24), 5, 42, &evals).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.subset.len(), 5);
        assert_eq!(a.subset.iter().collect::<BTreeSet<_>>().len(), 5);
        assert_ne!(a.subset, select_evaluation_subset(&ids(24), 5, 43, &evals).unwrap().subset);
        assert_eq!(a.orders["e1"].len(), 5);
    }

    #[test]
    fn full_subset_is_a_permutation() {
        let all = select_evaluation_subset(&ids(24), 24, 7, &[]).unwrap();
        let mut sorted = all.subset.clone();
        sorted.sort();
        assert_eq!(sorted, ids(24));
        assert!(matches!(
            select_evaluation_subset(&ids(24), 25, 7, &[]),
            Err(EvalError::SubsetTooLarge { requested: 25, available: 24 })
        ));
    }

    #[test]
    fn presentation_order_is_balanced() {
        let evals: Vec<String> = (0..1000).map(|i| format!("evaluator-{i}")).collect();
        let plan = select_evaluation_subset(&ids(24), 1, 2024, &evals).unwrap();
        let few_first = plan
            .orders
            .values()
            .filter(|o| o[0][0] == PromptStrategy::FewShot)
            .count();
        let freq = few_first as f64 / 1000.0;
        assert!((freq - 0.5).abs() <= 0.05, "{freq}");
    }
}
