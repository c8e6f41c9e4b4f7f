//! Study statistics: paired contingency tables and McNemar tests over binary
//! judgments, survey descriptives, generation efficiency, and the seeded
//! selection of the evaluation subset.

mod efficiency;
mod io;
mod mcnemar;
mod selection;
mod survey;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use efficiency::{efficiency_csv, efficiency_summary, records_csv, StrategyEfficiency};
pub use io::{
    load_judgments, load_survey, parse_judgments, parse_survey, EvaluationReport, MetricReport,
    QuestionSummary, REPORT_SCHEMA_VERSION,
};
pub use mcnemar::{
    build_contingency, exact_p_value, mcnemar, mcnemar_chi_square, mcnemar_exact, BinaryJudgment,
    ContingencyTable, McNemarPolicy, McNemarResult, McNemarVariant, DEFAULT_ALPHA,
    EXACT_THRESHOLD,
};
pub use selection::{select_evaluation_subset, EvaluationPlan};
pub use survey::{
    label_distribution, mean_rating, proportion_at_least, rating_distribution, Round,
    SurveyAnswer, SurveyResponse, RATING_MAX, RATING_MIN,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("judgments without a counterpart for the other method: {}", .0.join(", "))]
    UnpairedJudgment(Vec<String>),
    #[error("more than one judgment for {0}")]
    DuplicateJudgment(String),
    #[error("no discordant pairs (b + c = 0); McNemar's test is undefined")]
    NoDiscordantPairs,
    #[error("cannot select {requested} stories from {available}")]
    SubsetTooLarge { requested: usize, available: usize },
    #[error("no responses for question `{0}`")]
    NoResponses(String),
    #[error("no generation records")]
    NoRecords,
    #[error("rating {0} outside 1–10")]
    RatingOutOfRange(i64),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("unknown survey round `{0}`")]
    UnknownRound(String),
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("unexpected header: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Completeness,
    Relevance,
    Consistency,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Completeness, Metric::Relevance, Metric::Consistency];

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Completeness => "completeness",
            Metric::Relevance => "relevance",
            Metric::Consistency => "consistency",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "completeness" => Ok(Metric::Completeness),
            "relevance" => Ok(Metric::Relevance),
            "consistency" => Ok(Metric::Consistency),
            other => Err(EvalError::UnknownMetric(other.to_string())),
        }
    }
}
