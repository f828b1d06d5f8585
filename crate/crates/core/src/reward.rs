//! Rule-based rewards computed from finished episodes.
//!
//! * Stage 1: `total = r_format * (0.1 + 0.9 * r_result)`, where `r_format` is
//!   the fraction of well-formed assistant turns and `r_result` is exact match.
//! * Stage 3: `total = (r_format + r_answer) / 2 - 0.1 * n_repetition`, with a
//!   strict all-or-nothing format score and a penalty per duplicate tool call.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::episode::{extract_final_answer, Action, Episode};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RewardError {
    #[error("r_format must lie in [0, 1], got {0}")]
    FormatOutOfRange(f64),
}

/// 1 when both strings are byte-equal after trimming surrounding whitespace.
pub fn exact_match(predicted: &str, gold: &str) -> u8 {
    u8::from(predicted.trim() == gold.trim())
}

/// Fraction of assistant turns that parse as well-formed; 0 with no turns.
pub fn format_score(episode: &Episode) -> f64 {
    let parsed = episode.parsed_assistant_turns();
    if parsed.is_empty() {
        return 0.0;
    }
    let good = parsed.iter().filter(|p| p.is_well_formed()).count();
    good as f64 / parsed.len() as f64
}

/// 1 iff every assistant turn is well-formed and the last one is an answer.
pub fn strict_format(episode: &Episode) -> u8 {
    let parsed = episode.parsed_assistant_turns();
    let all_ok = parsed.iter().all(|p| p.is_well_formed());
    let ends_with_answer = parsed.last().is_some_and(|p| matches!(p.action, Action::Answer(_)));
    u8::from(all_ok && ends_with_answer)
}

/// Tool calls minus distinct tool calls, where two calls are the same when
/// function and keyword arguments match regardless of argument order.
pub fn count_repetitions(episode: &Episode) -> u32 {
    let calls = episode.tool_calls();
    let distinct: HashSet<_> = calls.iter().map(|c| c.canonical()).collect();
    (calls.len() - distinct.len()) as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage1Reward {
    pub r_format: f64,
    pub r_result: u8,
    pub total: f64,
}

pub fn stage1_reward(r_format: f64, r_result: bool) -> Result<Stage1Reward, RewardError> {
    if !(0.0..=1.0).contains(&r_format) {
        return Err(RewardError::FormatOutOfRange(r_format));
    }
    let r_result = u8::from(r_result);
    Ok(Stage1Reward {
        r_format,
        r_result,
        total: r_format * (0.1 + 0.9 * f64::from(r_result)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage3Reward {
    pub r_format: u8,
    pub r_answer: u8,
    pub n_repetition: u32,
    pub total: f64,
}

impl Stage3Reward {
    /// The total in tenths; exact for every input.
    pub fn total_tenths(&self) -> i64 {
        5 * i64::from(self.r_format + self.r_answer) - i64::from(self.n_repetition)
    }
}

pub fn stage3_reward(r_format: bool, r_answer: bool, n_repetition: u32) -> Stage3Reward {
    let mut reward = Stage3Reward {
        r_format: u8::from(r_format),
        r_answer: u8::from(r_answer),
        n_repetition,
        total: 0.0,
    };
    // every total is a multiple of 0.1; dividing the integer count of tenths
    // gives the correctly rounded decimal
    reward.total = reward.total_tenths() as f64 / 10.0;
    reward
}

/// Everything an external trainer needs from one scored episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub question: String,
    pub graph_type: String,
    pub predicted: Option<String>,
    pub golden_answer: Option<String>,
    pub exact_match: u8,
    pub format_score: f64,
    pub strict_format: u8,
    pub n_repetition: u32,
    pub stage1: Stage1Reward,
    pub stage3: Stage3Reward,
}

/// Scores an episode against its golden answer (a missing gold scores 0).
pub fn score_episode(episode: &Episode) -> RewardRecord {
    let predicted = extract_final_answer(episode);
    let em = match (&predicted, &episode.golden_answer) {
        (Some(p), Some(g)) => exact_match(p, g),
        _ => 0,
    };
    let fmt = format_score(episode);
    let strict = strict_format(episode);
    let reps = count_repetitions(episode);
    RewardRecord {
        question: episode.question.clone(),
        graph_type: episode.graph_type.to_string(),
        predicted,
        golden_answer: episode.golden_answer.clone(),
        exact_match: em,
        format_score: fmt,
        strict_format: strict,
        n_repetition: reps,
        stage1: stage1_reward(fmt, em == 1).expect("format score lies in [0, 1]"),
        stage3: stage3_reward(strict == 1, em == 1, reps),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::{Role, Termination, Turn};
    use crate::graph::GraphId;
    use proptest::prelude::*;

    fn episode(assistant: &[&str]) -> Episode {
        let mut turns = vec![
            Turn {
                role: Role::System,
                content: "sys".into(),
            },
            Turn {
                role: Role::User,
                content: "q".into(),
            },
        ];
        for (i, a) in assistant.iter().enumerate() {
            if i > 0 {
                turns.push(Turn {
                    role: Role::ToolResponse,
                    content: "obs".into(),
                });
            }
            turns.push(Turn {
                role: Role::Assistant,
                content: a.to_string(),
            });
        }
        Episode {
            graph_type: GraphId::new("cs").unwrap(),
            question: "q".into(),
            golden_answer: Some("X".into()),
            turns,
            rounds_used: assistant.len().saturating_sub(1),
            termination: Termination::Answered,
            final_answer: None,
        }
    }

    fn call(args: &str) -> String {
        format!("<think>t</think><tool_call>{args}</tool_call>")
    }

    const ANSWER: &str = "<think>t</think><answer>X</answer>";

    #[test]
    fn exact_match_rules() {
        assert_eq!(exact_match(" Fumagilin-B ", "Fumagilin-B"), 1);
        assert_eq!(exact_match("fumagilin-b", "Fumagilin-B"), 0);
        assert_eq!(exact_match("", ""), 1);
        assert_eq!(exact_match("\n\tA\n", " A"), 1);
    }

    #[test]
    fn format_scores() {
        let a = call(r#"node_info(node_name="a", graph_type="cs")"#);
        assert_eq!(format_score(&episode(&[&a, &a, &a, ANSWER])), 1.0);
        assert_eq!(format_score(&episode(&["junk", ANSWER])), 0.5);
        assert_eq!(format_score(&episode(&[])), 0.0);
        assert_eq!(strict_format(&episode(&[&a, ANSWER])), 1);
        assert_eq!(strict_format(&episode(&[&a, &a])), 0);
        assert_eq!(strict_format(&episode(&[&a, "junk", ANSWER])), 0);
        // a call against another graph is a format failure
        let wrong = call(r#"node_info(node_name="a", graph_type="bio")"#);
        assert_eq!(format_score(&episode(&[&wrong, ANSWER])), 0.5);
    }

    #[test]
    fn repetitions() {
        let a = call(r#"node_info(node_name="a", graph_type="cs")"#);
        let b = call(r#"node_info(node_name="b", graph_type="cs")"#);
        assert_eq!(count_repetitions(&episode(&[&a, &a, ANSWER])), 1);
        assert_eq!(count_repetitions(&episode(&[&a, &b, ANSWER])), 0);
        let x1 = call(r#"entity_matcher(node_name="x",graph_type="cs")"#);
        let x2 = call(r#"entity_matcher(graph_type="cs",node_name="x")"#);
        assert_eq!(count_repetitions(&episode(&[&x1, &x2, ANSWER])), 1);
        // same args, different function
        let y = call(r#"node_info(node_name="x", graph_type="cs")"#);
        assert_eq!(count_repetitions(&episode(&[&x1, &y, ANSWER])), 0);
    }

    #[test]
    fn reward_formulas() {
        assert_eq!(stage1_reward(1.0, true).unwrap().total, 1.0);
        assert_eq!(stage1_reward(1.0, false).unwrap().total, 0.1);
        assert_eq!(stage1_reward(0.0, true).unwrap().total, 0.0);
        assert_eq!(stage1_reward(0.5, true).unwrap().total, 0.5);
        assert!(stage1_reward(1.5, true).is_err());
        assert!(stage1_reward(f64::NAN, true).is_err());
        assert_eq!(stage3_reward(true, true, 0).total, 1.0);
        assert_eq!(stage3_reward(true, false, 0).total, 0.5);
        assert_eq!(stage3_reward(true, true, 2).total, 0.8);
        assert_eq!(stage3_reward(false, false, 3).total, -0.3);
    }

    #[test]
    fn score_record() {
        let a = call(r#"node_info(node_name="a", graph_type="cs")"#);
        let rec = score_episode(&episode(&[&a, &a, ANSWER]));
        assert_eq!(rec.exact_match, 1);
        assert_eq!(rec.n_repetition, 1);
        assert_eq!(rec.stage1.total, 1.0);
        assert_eq!(rec.stage3.total, 0.9);
    }

    proptest! {
        #[test]
        fn stage1_monotone_and_bounded(f1 in 0.0f64..=1.0, f2 in 0.0f64..=1.0, r in any::<bool>()) {
            let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
            let a = stage1_reward(lo, r).unwrap().total;
            let b = stage1_reward(hi, r).unwrap().total;
            prop_assert!(a <= b);
            prop_assert!(stage1_reward(lo, false).unwrap().total <= stage1_reward(lo, true).unwrap().total);
            prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        }

        #[test]
        fn stage3_drops_a_tenth_per_repetition(f in any::<bool>(), a in any::<bool>(), n in 0u32..1000) {
            let r0 = stage3_reward(f, a, n);
            let r1 = stage3_reward(f, a, n + 1);
            prop_assert_eq!(r0.total_tenths() - 1, r1.total_tenths());
            prop_assert!((r0.total - 0.1 - r1.total).abs() < 1e-12);
        }

        #[test]
        fn exact_match_symmetric(a in ".{0,12}", b in ".{0,12}") {
            prop_assert_eq!(exact_match(&a, &b), exact_match(&b, &a));
        }
    }
}
