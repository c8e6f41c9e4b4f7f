use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::efficiency::StrategyEfficiency;
use super::mcnemar::{
    build_contingency, mcnemar, mcnemar_chi_square, mcnemar_exact, BinaryJudgment,
    ContingencyTable, McNemarPolicy, McNemarResult,
};
use super::survey::{
    label_distribution, mean_rating, rating_distribution, Round, SurveyAnswer, SurveyResponse,
};
use super::{EvalError, Metric};
use crate::personagen::PromptStrategy;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

const JUDGMENT_HEADER: [&str; 5] = ["evaluator_id", "story_id", "metric", "method", "response"];
const SURVEY_HEADER: [&str; 4] = ["evaluator_id", "question_id", "answer", "round"];

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<(), EvalError> {
    let got: Vec<String> = found.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    if got != expected {
        return Err(EvalError::BadHeader {
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(())
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(input)
}

fn open(path: &Path) -> Result<std::fs::File, EvalError> {
    std::fs::File::open(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads `evaluator_id,story_id,metric,method,response` rows; response is
/// `yes` or `no`.
pub fn parse_judgments<R: Read>(input: R) -> Result<Vec<BinaryJudgment>, EvalError> {
    let mut rdr = reader(input);
    check_header(rdr.headers()?, &JUDGMENT_HEADER)?;
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let bad = |reason: String| EvalError::MalformedRow { line, reason };
        let metric: Metric = row[2].parse().map_err(|e: EvalError| bad(e.to_string()))?;
        let method: PromptStrategy = row[3].parse().map_err(|e| bad(format!("{e}")))?;
        let response = match row[4].to_ascii_lowercase().as_str() {
            "yes" => true,
            "no" => false,
            other => return Err(bad(format!("response must be yes or no, got `{other}`"))),
        };
        if row[0].is_empty() || row[1].is_empty() {
            return Err(bad("empty evaluator or story id".into()));
        }
        out.push(BinaryJudgment {
            evaluator_id: row[0].to_string(),
            story_id: row[1].to_string(),
            metric,
            method,
            response,
        });
    }
    Ok(out)
}

pub fn load_judgments(path: &Path) -> Result<Vec<BinaryJudgment>, EvalError> {
    parse_judgments(open(path)?)
}

/// Reads `evaluator_id,question_id,answer,round` rows.
pub fn parse_survey<R: Read>(input: R) -> Result<Vec<SurveyResponse>, EvalError> {
    let mut rdr = reader(input);
    check_header(rdr.headers()?, &SURVEY_HEADER)?;
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let bad = |e: EvalError| EvalError::MalformedRow { line, reason: e.to_string() };
        out.push(SurveyResponse {
            evaluator_id: row[0].to_string(),
            question_id: row[1].to_string(),
            answer: SurveyAnswer::parse(&row[2]).map_err(bad)?,
            round: row[3].parse().map_err(bad)?,
        });
    }
    Ok(out)
}

pub fn load_survey(path: &Path) -> Result<Vec<SurveyResponse>, EvalError> {
    parse_survey(open(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: Metric,
    pub table: ContingencyTable,
    pub n: u64,
    pub n_d: u64,
    /// Result under the report's policy; absent when there are no
    /// discordant pairs.
    pub selected: Option<McNemarResult>,
    pub exact: Option<McNemarResult>,
    pub chi_square: Option<McNemarResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionSummary {
    pub round: Round,
    pub question_id: String,
    pub responses: usize,
    pub missing: usize,
    pub mean_rating: Option<f64>,
    pub rating_distribution: Option<BTreeMap<u8, usize>>,
    pub label_distribution: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub policy: McNemarPolicy,
    pub alpha: f64,
    pub metrics: Vec<MetricReport>,
    pub survey: Vec<QuestionSummary>,
    pub efficiency: Vec<StrategyEfficiency>,
}

impl EvaluationReport {
    /// McNemar results for every metric that has judgments.
    pub fn from_judgments(
        judgments: &[BinaryJudgment],
        policy: McNemarPolicy,
        alpha: f64,
    ) -> Result<Self, EvalError> {
        let mut metrics = Vec::new();
        for metric in Metric::ALL {
            if !judgments.iter().any(|j| j.metric == metric) {
                continue;
            }
            let table = build_contingency(judgments, metric)?;
            let run = |r: Result<McNemarResult, EvalError>| r.ok().map(|r| r.at_alpha(alpha));
            metrics.push(MetricReport {
                metric,
                table,
                n: table.n(),
                n_d: table.n_d(),
                selected: run(mcnemar(&table, policy)),
                exact: run(mcnemar_exact(&table)),
                chi_square: run(mcnemar_chi_square(&table)),
            });
        }
        Ok(Self {
            schema_version: REPORT_SCHEMA_VERSION,
            policy,
            alpha,
            metrics,
            survey: Vec::new(),
            efficiency: Vec::new(),
        })
    }

    pub fn with_survey(mut self, responses: &[SurveyResponse]) -> Result<Self, EvalError> {
        self.survey = summarize_survey(responses)?;
        Ok(self)
    }

    pub fn with_efficiency(mut self, rows: Vec<StrategyEfficiency>) -> Self {
        self.efficiency = rows;
        self
    }

    pub fn mcnemar_csv(&self) -> Result<String, EvalError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "metric", "a", "b", "c", "d", "n", "n_d", "variant", "statistic", "p_value",
            "p_value_exact", "significant",
        ])?;
        for m in &self.metrics {
            let t = m.table;
            let mut row = vec![
                m.metric.to_string(),
                t.a.to_string(),
                t.b.to_string(),
                t.c.to_string(),
                t.d.to_string(),
                m.n.to_string(),
                m.n_d.to_string(),
            ];
            match &m.selected {
                Some(r) => row.extend([
                    serde_json::to_value(r.variant)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_default(),
                    format!("{:.4}", r.statistic),
                    format!("{:.4}", r.p_value),
                    r.p_value_exact.clone().unwrap_or_default(),
                    r.significant.to_string(),
                ]),
                None => row.extend(["none".into(), String::new(), String::new(), String::new(), "false".into()]),
            }
            w.write_record(&row)?;
        }
        Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8"))
    }

    /// Answer counts per question: the data behind the survey charts.
    pub fn survey_csv(&self) -> Result<String, EvalError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["round", "question_id", "answer", "count"])?;
        for q in &self.survey {
            if let Some(d) = &q.rating_distribution {
                for (rating, count) in d {
                    w.write_record([q.round.as_str(), &q.question_id, &rating.to_string(), &count.to_string()])?;
                }
            }
            for (label, count) in &q.label_distribution {
                w.write_record([q.round.as_str(), &q.question_id, label, &count.to_string()])?;
            }
            if q.missing > 0 {
                w.write_record([q.round.as_str(), &q.question_id, "missing", &q.missing.to_string()])?;
            }
        }
        Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8"))
    }
}

fn summarize_survey(responses: &[SurveyResponse]) -> Result<Vec<QuestionSummary>, EvalError> {
    let mut keys: Vec<(Round, &str)> = responses
        .iter()
        .map(|r| (r.round, r.question_id.as_str()))
        .collect();
    keys.sort();
    keys.dedup();
    let mut out = Vec::new();
    for (round, qid) in keys {
        let subset: Vec<SurveyResponse> = responses
            .iter()
            .filter(|r| r.round == round && r.question_id == qid)
            .cloned()
            .collect();
        let has_ratings = subset.iter().any(|r| matches!(r.answer, SurveyAnswer::Rating(_)));
        out.push(QuestionSummary {
            round,
            question_id: qid.to_string(),
            responses: subset.len(),
            missing: subset.iter().filter(|r| r.answer.is_missing()).count(),
            mean_rating: if has_ratings { Some(mean_rating(&subset, qid)?) } else { None },
            rating_distribution: if has_ratings { Some(rating_distribution(&subset, qid)?) } else { None },
            label_distribution: label_distribution(&subset, qid)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn judgments_csv() {
        let text = "evaluator_id,story_id,metric,method,response\n\
                    e1,s1,completeness,few_shot,yes\n\
                    e1,s1,completeness,cot,No\n";
        let js = parse_judgments(text.as_bytes()).unwrap();
        assert_eq!(js.len(), 2);
        let r = EvaluationReport::from_judgments(&js, McNemarPolicy::Auto, 0.05).unwrap();
        assert_eq!(r.metrics[0].table, ContingencyTable::new(0, 1, 0, 0));
        assert!(r.mcnemar_csv().unwrap().contains("completeness,0,1,0,0,1,1,exact,0.0000,1.0000,1,false"));

        let bad = "evaluator_id,story_id,metric,method,response\ne1,s1,speed,cot,yes\n";
        assert!(matches!(parse_judgments(bad.as_bytes()), Err(EvalError::MalformedRow { line: 2, .. })));
        assert!(matches!(parse_judgments("a,b\n".as_bytes()), Err(EvalError::BadHeader { .. })));
        let maybe = "evaluator_id,story_id,metric,method,response\ne1,s1,relevance,cot,maybe\n";
        assert!(parse_judgments(maybe.as_bytes()).is_err());
    }

    #[test]
    fn survey_csv() {
        let text = "evaluator_id,question_id,answer,round\n\
                    e1,accuracy,6,initial\n\
                    e2,accuracy,8,initial\n\
                    e1,usefulness,mostly,augmented\n\
                    e2,usefulness,,augmented\n";
        let rs = parse_survey(text.as_bytes()).unwrap();
        let report = EvaluationReport::from_judgments(&[], McNemarPolicy::Auto, 0.05)
            .unwrap()
            .with_survey(&rs)
            .unwrap();
        assert_eq!(report.survey.len(), 2);
        assert_eq!(report.survey[0].mean_rating, Some(7.0));
        assert_eq!(report.survey[1].missing, 1);
        let csv = report.survey_csv().unwrap();
        assert!(csv.contains("augmented,usefulness,mostly,1"));
        assert!(csv.contains("augmented,usefulness,missing,1"));
        let bad = "evaluator_id,question_id,answer,round\ne1,accuracy,12,initial\n";
        assert!(matches!(parse_survey(bad.as_bytes()), Err(EvalError::MalformedRow { line: 2, .. })));
    }
}
