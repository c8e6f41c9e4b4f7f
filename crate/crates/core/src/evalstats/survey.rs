use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvalError;

pub const RATING_MIN: u8 = 1;
pub const RATING_MAX: u8 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Round {
    Initial,
    Augmented,
}

impl Round {
    pub fn as_str(&self) -> &'static str {
        match self {
            Round::Initial => "initial",
            Round::Augmented => "augmented",
        }
    }
}

impl fmt::Display for Round {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Round {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "initial" | "1" | "round1" => Ok(Round::Initial),
            "augmented" | "2" | "round2" => Ok(Round::Augmented),
            other => Err(EvalError::UnknownRound(other.to_string())),
        }
    }
}

/// A rating on the 1–10 scale, a Likert/choice label (stored lowercase), or
/// no answer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum SurveyAnswer {
    Rating(u8),
    Label(String),
    Missing,
}

impl SurveyAnswer {
    /// Integers are ratings; blank, `na` and `-` are missing; anything else
    /// is a label.
    pub fn parse(raw: &str) -> Result<Self, EvalError> {
        let t = raw.trim();
        if t.is_empty() || t.eq_ignore_ascii_case("na") || t == "-" {
            return Ok(SurveyAnswer::Missing);
        }
        if let Ok(v) = t.parse::<i64>() {
            return if (RATING_MIN as i64..=RATING_MAX as i64).contains(&v) {
                Ok(SurveyAnswer::Rating(v as u8))
            } else {
                Err(EvalError::RatingOutOfRange(v))
            };
        }
        Ok(SurveyAnswer::Label(t.to_lowercase()))
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, SurveyAnswer::Missing)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub evaluator_id: String,
    pub question_id: String,
    pub answer: SurveyAnswer,
    pub round: Round,
}

fn for_question<'a>(
    responses: &'a [SurveyResponse],
    question_id: &'a str,
) -> Result<Vec<&'a SurveyAnswer>, EvalError> {
    let v: Vec<&SurveyAnswer> = responses
        .iter()
        .filter(|r| r.question_id == question_id)
        .map(|r| &r.answer)
        .collect();
    if v.is_empty() {
        return Err(EvalError::NoResponses(question_id.to_string()));
    }
    Ok(v)
}

/// Mean of the numeric ratings given for `question_id`.
pub fn mean_rating(responses: &[SurveyResponse], question_id: &str) -> Result<f64, EvalError> {
    let ratings: Vec<u64> = for_question(responses, question_id)?
        .into_iter()
        .filter_map(|a| match a {
            SurveyAnswer::Rating(r) => Some(*r as u64),
            _ => None,
        })
        .collect();
    if ratings.is_empty() {
        return Err(EvalError::NoResponses(question_id.to_string()));
    }
    Ok(ratings.iter().sum::<u64>() as f64 / ratings.len() as f64)
}

/// Count per rating value, with every value from 1 to 10 present.
pub fn rating_distribution(
    responses: &[SurveyResponse],
    question_id: &str,
) -> Result<BTreeMap<u8, usize>, EvalError> {
    let mut out: BTreeMap<u8, usize> = (RATING_MIN..=RATING_MAX).map(|r| (r, 0)).collect();
    for a in for_question(responses, question_id)? {
        if let SurveyAnswer::Rating(r) = a {
            *out.entry(*r).or_default() += 1;
        }
    }
    Ok(out)
}

/// Count per label answer.
pub fn label_distribution(
    responses: &[SurveyResponse],
    question_id: &str,
) -> Result<BTreeMap<String, usize>, EvalError> {
    let mut out = BTreeMap::new();
    for a in for_question(responses, question_id)? {
        if let SurveyAnswer::Label(l) = a {
            *out.entry(l.clone()).or_default() += 1;
        }
    }
    Ok(out)
}

/// Share of non-missing answers whose label is in `labels`
/// (case-insensitive).
pub fn proportion_at_least(
    responses: &[SurveyResponse],
    question_id: &str,
    labels: &[&str],
) -> Result<f64, EvalError> {
    let answered: Vec<&SurveyAnswer> = for_question(responses, question_id)?
        .into_iter()
        .filter(|a| !a.is_missing())
        .collect();
    if answered.is_empty() {
        return Err(EvalError::NoResponses(question_id.to_string()));
    }
    let hits = answered
        .iter()
        .filter(|a| match a {
            SurveyAnswer::Label(l) => labels.iter().any(|t| t.eq_ignore_ascii_case(l)),
            _ => false,
        })
        .count();
    Ok(hits as f64 / answered.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn responses(q: &str, answers: &[&str]) -> Vec<SurveyResponse> {
        answers
            .iter()
            .enumerate()
            .map(|(i, a)| SurveyResponse {
                evaluator_id: format!("e{i}"),
                question_id: q.into(),
                answer: SurveyAnswer::parse(a).unwrap(),
                round: Round::Initial,
            })
            .collect()
    }

    #[test]
    fn ratings() {
        let r = responses("acc", &["4", "5", "5", "5", "5", "6", "7", "10"]);
        assert_eq!(mean_rating(&r, "acc").unwrap(), 5.875);
        let d = rating_distribution(&r, "acc").unwrap();
        assert_eq!(d.len(), 10);
        assert_eq!(d[&5], 4);
        assert_eq!(mean_rating(&responses("x", &["7"]), "x").unwrap(), 7.0);
        assert!(matches!(mean_rating(&r, "other"), Err(EvalError::NoResponses(_))));
    }

    #[test]
    fn proportion_skips_missing() {
        let mut answers = vec!["Somewhat"; 6];
        answers.extend(["mostly", "mostly", "perfectly", "not at all", "not well", ""]);
        let r = responses("use", &answers);
        let p = proportion_at_least(&r, "use", &["somewhat", "mostly", "perfectly"]).unwrap();
        assert!((p - 9.0 / 11.0).abs() < 1e-12);
        assert_eq!(format!("{p:.4}"), "0.8182");
        assert_eq!(label_distribution(&r, "use").unwrap()["somewhat"], 6);
    }

    #[test]
    fn answer_parsing() {
        assert_eq!(SurveyAnswer::parse(" 10 ").unwrap(), SurveyAnswer::Rating(10));
        assert!(matches!(SurveyAnswer::parse("11"), Err(EvalError::RatingOutOfRange(11))));
        assert!(matches!(SurveyAnswer::parse("0"), Err(EvalError::RatingOutOfRange(0))));
        assert_eq!(SurveyAnswer::parse("NA").unwrap(), SurveyAnswer::Missing);
        assert_eq!("2".parse::<Round>().unwrap(), Round::Augmented);
    }
}
