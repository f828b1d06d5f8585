//! Batch evaluation of an agent over a QA dataset with exact-match scoring.
//!
//! Up to `batch_size` episodes run concurrently; results are assembled by
//! dataset position, so the report never depends on completion order.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::episode::{
    extract_final_answer, run_episode, ChatMessage, EpisodeLimits, LlmClient, LlmError, Termination, ToolExecutor,
};
use crate::graph::GraphId;
use crate::reward::exact_match;
use crate::synth::{HopCategory, QaRecord};

pub const DEFAULT_BATCH_SIZE: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("batch size must be positive")]
    ZeroBatch,
    #[error("malformed judge output: {raw}")]
    MalformedJudge { raw: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// What to do with questions whose episode could not run (transport errors).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    #[default]
    CountIncorrect,
    Exclude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub batch_size: usize,
    pub failures: FailurePolicy,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            batch_size: DEFAULT_BATCH_SIZE,
            failures: FailurePolicy::CountIncorrect,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
}

impl Tally {
    fn add(&mut self, correct: bool) {
        self.total += 1;
        self.correct += usize::from(correct);
        self.accuracy = self.correct as f64 / self.total as f64;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionResult {
    pub id: String,
    pub graph_type: String,
    pub hop_category: HopCategory,
    pub predicted: Option<String>,
    pub gold: String,
    pub exact_match: bool,
    pub termination: Option<Termination>,
    pub rounds_used: usize,
    pub error: Option<String>,
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub by_hop: BTreeMap<HopCategory, Tally>,
    pub by_graph: BTreeMap<String, Tally>,
    pub per_question: Vec<QuestionResult>,
}

impl EvalReport {
    /// Folds per-question rows into the totals, skipping excluded rows.
    pub fn from_results(per_question: Vec<QuestionResult>) -> Self {
        let mut overall = Tally::default();
        let mut by_hop: BTreeMap<HopCategory, Tally> = BTreeMap::new();
        let mut by_graph: BTreeMap<String, Tally> = BTreeMap::new();
        for r in per_question.iter().filter(|r| !r.excluded) {
            overall.add(r.exact_match);
            by_hop.entry(r.hop_category).or_default().add(r.exact_match);
            by_graph.entry(r.graph_type.clone()).or_default().add(r.exact_match);
        }
        Self {
            total: overall.total,
            correct: overall.correct,
            accuracy: overall.accuracy,
            by_hop,
            by_graph,
            per_question,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "id",
            "graph_type",
            "hop_category",
            "predicted",
            "gold",
            "exact_match",
            "termination",
            "rounds_used",
            "error",
            "excluded",
        ])?;
        for r in &self.per_question {
            let termination = r
                .termination
                .and_then(|t| serde_json::to_value(t).ok())
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            w.write_record([
                r.id.as_str(),
                r.graph_type.as_str(),
                r.hop_category.as_str(),
                r.predicted.as_deref().unwrap_or(""),
                r.gold.as_str(),
                if r.exact_match { "1" } else { "0" },
                termination.as_str(),
                &r.rounds_used.to_string(),
                r.error.as_deref().unwrap_or(""),
                if r.excluded { "1" } else { "0" },
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn evaluate_one(
    record: &QaRecord,
    llm: &dyn LlmClient,
    tools: &dyn ToolExecutor,
    limits: EpisodeLimits,
    policy: FailurePolicy,
) -> QuestionResult {
    let mut result = QuestionResult {
        id: record.id.clone(),
        graph_type: record.graph_type.clone(),
        hop_category: record.hop_category,
        predicted: None,
        gold: record.golden_answer.clone(),
        exact_match: false,
        termination: None,
        rounds_used: 0,
        error: None,
        excluded: false,
    };
    let graph = match GraphId::new(record.graph_type.clone()) {
        Ok(g) => g,
        Err(e) => {
            result.error = Some(e.to_string());
            return result;
        }
    };
    match run_episode(
        &record.question,
        &graph,
        Some(&record.golden_answer),
        llm,
        tools,
        limits,
    ) {
        Ok(episode) => {
            let predicted = extract_final_answer(&episode);
            result.exact_match = predicted
                .as_deref()
                .is_some_and(|p| exact_match(p, &record.golden_answer) == 1);
            result.predicted = predicted;
            result.termination = Some(episode.termination);
            result.rounds_used = episode.rounds_used;
        }
        Err(e) => {
            result.error = Some(e.to_string());
            result.excluded = policy == FailurePolicy::Exclude;
        }
    }
    result
}

/// Runs one episode per question and scores it by exact match.
pub fn evaluate(
    dataset: &[QaRecord],
    llm: &dyn LlmClient,
    tools: &dyn ToolExecutor,
    limits: EpisodeLimits,
    options: EvalOptions,
) -> Result<EvalReport, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    if options.batch_size == 0 {
        return Err(EvalError::ZeroBatch);
    }
    let mut results = Vec::with_capacity(dataset.len());
    for batch in dataset.chunks(options.batch_size) {
        let batch_results: Vec<QuestionResult> = std::thread::scope(|scope| {
            let handles: Vec<_> = batch
                .iter()
                .map(|rec| scope.spawn(move || evaluate_one(rec, llm, tools, limits, options.failures)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("evaluation worker panicked"))
                .collect()
        });
        results.extend(batch_results);
    }
    Ok(EvalReport::from_results(results))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub correct: bool,
    pub reason: String,
}

/// Judge prompt used by [`llm_judge`]. This wording is our own; judge scores
/// are reported separately from exact match and never mixed with it.
pub const JUDGE_TEMPLATE: &str = "\
You are grading an answer to a question about a knowledge graph.

Question: {question}
Golden answer: {gold}
Predicted answer: {predicted}

Decide whether the predicted answer refers to the same entity as the golden answer. Ignore differences in case, punctuation and phrasing, but an answer naming a different entity or several candidates is incorrect.

Output in JSON format only, don't add markdown code delimiter or anything else, only a valid json object:
{\"correct\": true or false, \"reason\": \"your reason\"}";

pub fn build_judge_prompt(question: &str, gold: &str, predicted: &str) -> String {
    JUDGE_TEMPLATE
        .replacen("{question}", question, 1)
        .replacen("{gold}", gold, 1)
        .replacen("{predicted}", predicted, 1)
}

pub fn parse_judge_verdict(text: &str) -> Result<JudgeVerdict, EvalError> {
    let body = text.trim();
    let body = body
        .strip_prefix("```json")
        .or_else(|| body.strip_prefix("```"))
        .and_then(|b| b.strip_suffix("```"))
        .map_or(body, str::trim);
    if !body.starts_with('{') {
        return Err(EvalError::MalformedJudge { raw: text.to_string() });
    }
    serde_json::from_str(body).map_err(|_| EvalError::MalformedJudge { raw: text.to_string() })
}

pub fn llm_judge(
    question: &str,
    gold: &str,
    predicted: &str,
    judge: &dyn LlmClient,
    max_tokens: usize,
) -> Result<JudgeVerdict, EvalError> {
    let prompt = build_judge_prompt(question, gold, predicted);
    let raw = judge.complete(&[ChatMessage::user(prompt)], max_tokens)?;
    parse_judge_verdict(&raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::{NoTools, ScriptedClient};
    use std::collections::HashMap;

    fn rec(i: usize, graph: &str, hop: HopCategory) -> QaRecord {
        QaRecord {
            id: format!("q{i}"),
            graph_type: graph.into(),
            path: vec!["S".into(), format!("A{i}")],
            question: format!("question {i}?"),
            golden_answer: format!("A{i}"),
            hop_category: hop,
        }
    }

    fn answer(a: &str) -> String {
        format!("<think>t</think><answer>{a}</answer>")
    }

    struct Down;

    impl LlmClient for Down {
        fn complete(&self, _: &[ChatMessage], _: usize) -> Result<String, LlmError> {
            Err(LlmError::Transport("connection refused".into()))
        }
    }

    #[test]
    fn perfect_and_never() {
        let data: Vec<_> = (0..4).map(|i| rec(i, "cs", HopCategory::OneTwo)).collect();
        let by_q: HashMap<_, _> = data
            .iter()
            .map(|r| (r.question.clone(), vec![answer(&r.golden_answer)]))
            .collect();
        let llm = ScriptedClient::keyed(vec![], by_q);
        let r = evaluate(&data, &llm, &NoTools, EpisodeLimits::default(), EvalOptions::default()).unwrap();
        assert_eq!(r.accuracy, 1.0);

        let never = ScriptedClient::new(vec![
            "<think>t</think><tool_call>node_info(node_name=\"x\", graph_type=\"cs\")</tool_call>".into(),
        ]);
        let r = evaluate(
            &data,
            &never,
            &NoTools,
            EpisodeLimits::default(),
            EvalOptions::default(),
        )
        .unwrap();
        assert_eq!(r.accuracy, 0.0);
        assert!(r
            .per_question
            .iter()
            .all(|q| q.termination == Some(Termination::RoundCap)));
    }

    #[test]
    fn transport_failures() {
        let data = vec![rec(0, "cs", HopCategory::OneTwo)];
        let r = evaluate(&data, &Down, &NoTools, EpisodeLimits::default(), EvalOptions::default()).unwrap();
        assert_eq!((r.total, r.correct), (1, 0));
        assert!(r.per_question[0]
            .error
            .as_deref()
            .unwrap()
            .contains("connection refused"));
        let opts = EvalOptions {
            failures: FailurePolicy::Exclude,
            ..EvalOptions::default()
        };
        let r = evaluate(&data, &Down, &NoTools, EpisodeLimits::default(), opts).unwrap();
        assert_eq!(r.total, 0);
        assert_eq!(r.accuracy, 0.0);
        assert!(r.per_question[0].excluded);
    }

    #[test]
    fn rejects_bad_arguments() {
        let llm = ScriptedClient::new(vec![answer("x")]);
        assert!(matches!(
            evaluate(&[], &llm, &NoTools, EpisodeLimits::default(), EvalOptions::default()),
            Err(EvalError::EmptyDataset)
        ));
        let opts = EvalOptions {
            batch_size: 0,
            ..EvalOptions::default()
        };
        assert!(evaluate(
            &[rec(0, "cs", HopCategory::OneTwo)],
            &llm,
            &NoTools,
            EpisodeLimits::default(),
            opts
        )
        .is_err());
    }

    #[test]
    fn csv_rows() {
        let data: Vec<_> = (0..3).map(|i| rec(i, "cs", HopCategory::ThreePlus)).collect();
        let llm = ScriptedClient::new(vec![answer("A1")]);
        let r = evaluate(&data, &llm, &NoTools, EpisodeLimits::default(), EvalOptions::default()).unwrap();
        assert_eq!(r.correct, 1);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().nth(2).unwrap().starts_with("q1,cs,three_plus,A1,A1,1,"));
    }

    #[test]
    fn judge() {
        let p = build_judge_prompt("Q?", "Gold", "Pred");
        assert!(
            p.contains("Question: Q?") && p.contains("Golden answer: Gold") && p.contains("Predicted answer: Pred")
        );
        let yes = ScriptedClient::sequential(vec![r#"{"correct": true, "reason": "same"}"#.into()]);
        assert!(llm_judge("q", "g", "p", &yes, 64).unwrap().correct);
        let no = ScriptedClient::sequential(vec![r#"{"correct": false, "reason": "other entity"}"#.into()]);
        assert_eq!(llm_judge("q", "g", "p", &no, 64).unwrap().reason, "other entity");
        let prose = ScriptedClient::sequential(vec!["It is correct.".into()]);
        assert!(matches!(
            llm_judge("q", "g", "p", &prose, 64),
            Err(EvalError::MalformedJudge { .. })
        ));
    }
}
