mod common;

use common::{fixture_service as service, run_grazing, think_call};
use kgqa_core::episode::{Role, ToolName};
use kgqa_core::reward::{count_repetitions, exact_match, format_score, strict_format};
use kgqa_core::sft::{episode_to_sharegpt_default, Speaker};
use kgqa_core::{run_episode, score_episode, validate_sharegpt, EpisodeLimits, GraphId, ScriptedClient, Termination};

#[test]
fn grazing_trace_replays_to_the_gold_answer() {
    let episode = run_grazing(&service());

    assert_eq!(episode.termination, Termination::Answered);
    assert_eq!(episode.final_answer.as_deref(), Some("Continuous Grazing"));
    assert_eq!(
        exact_match(episode.final_answer.as_deref().unwrap(), "Continuous Grazing"),
        1
    );
    assert_eq!(episode.rounds_used, 3);
    assert_eq!(format_score(&episode), 1.0);
    assert_eq!(strict_format(&episode), 1);
    assert_eq!(count_repetitions(&episode), 0);

    let calls = episode.tool_calls();
    let functions: Vec<ToolName> = calls.iter().map(|c| c.function).collect();
    assert_eq!(
        functions,
        [ToolName::EntityMatcher, ToolName::NodeInfo, ToolName::NodeInfo]
    );

    let observations: Vec<&str> = episode
        .turns
        .iter()
        .filter(|t| t.role == Role::ToolResponse)
        .map(|t| t.content.as_str())
        .collect();
    assert!(observations[0].contains("Rational Grazing"));
    assert!(observations[1].contains("Pays de Caux"));
    assert!(observations[2].contains("Continuous Grazing"));
    assert!(observations.iter().all(|o| !o.contains("Tool error")));

    let record = score_episode(&episode);
    assert_eq!(record.exact_match, 1);
    assert!((record.stage1.total - 1.0).abs() < 1e-12);
    assert_eq!(record.stage3.total, 1.0);

    let sample = episode_to_sharegpt_default(&episode).unwrap();
    let speakers: Vec<Speaker> = sample.conversations.iter().map(|m| m.from).collect();
    use Speaker::{Gpt, Human, Observation};
    assert_eq!(
        speakers,
        [Human, Gpt, Observation, Gpt, Observation, Gpt, Observation, Gpt]
    );
    let verdict = validate_sharegpt(&sample);
    assert!(verdict.valid, "{:?}", verdict.violations);
}

#[test]
fn endless_tool_calls_stop_at_the_round_cap() {
    let graph = GraphId::new("agriculture").unwrap();
    let client = ScriptedClient::new(vec![think_call("node_info", "Humus", "agriculture")]);
    let episode = run_episode(
        "What is humus?",
        &graph,
        None,
        &client,
        &service(),
        EpisodeLimits::default(),
    )
    .unwrap();
    assert_eq!(episode.termination, Termination::RoundCap);
    assert_eq!(episode.rounds_used, 7);
    let observations = episode.turns.iter().filter(|t| t.role == Role::ToolResponse).count();
    assert_eq!(observations, 7);
    assert_eq!(episode.final_answer, None);
    assert_eq!(score_episode(&episode).stage1.total, 0.1 * format_score(&episode));
    assert!(episode_to_sharegpt_default(&episode).is_err());
}

#[test]
fn unknown_entities_come_back_as_text() {
    let graph = GraphId::new("cs").unwrap();
    let client = ScriptedClient::new(vec![
        think_call("node_info", "No Such Node", "cs"),
        common::think_answer("unknown"),
    ]);
    let episode = run_episode("q", &graph, Some("x"), &client, &service(), EpisodeLimits::default()).unwrap();
    assert_eq!(episode.termination, Termination::Answered);
    let obs = &episode
        .turns
        .iter()
        .find(|t| t.role == Role::ToolResponse)
        .unwrap()
        .content;
    assert!(obs.contains("No entity named 'No Such Node'"), "{obs}");
    assert_eq!(score_episode(&episode).exact_match, 0);
}
