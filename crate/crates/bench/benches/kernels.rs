use criterion::{criterion_group, criterion_main, Criterion};
use kgqa_core::episode::parse_assistant_output;
use kgqa_core::loss_mask::weighted_sft_loss_grad;
use kgqa_core::rl::TrajectoryNumerics;
use kgqa_core::{gae_advantages, weighted_sft_loss, GraphId, TokenBatch};
use ndarray::{Array2, Array3};
use std::hint::black_box;

fn gae(c: &mut Criterion) {
    let traj = TrajectoryNumerics {
        rewards: (0..512).map(|i| (i % 7) as f64 * 0.1).collect(),
        values: (0..512).map(|i| (i % 5) as f64 * 0.2).collect(),
        bootstrap_value: 0.0,
        gamma: 0.99,
        lam: 0.95,
    };
    c.bench_function("gae_512", |b| b.iter(|| gae_advantages(black_box(&traj)).unwrap()));
}

fn loss(c: &mut Criterion) {
    let (batch, seq, vocab) = (4, 256, 512);
    let labels = Array2::from_shape_fn((batch, seq), |(i, t)| match (t + i) % 40 {
        0 if t < 8 => -100,
        3 => 1,
        9 => 2,
        k => 3 + (k as i64 * 13) % (vocab as i64 - 3),
    });
    let logits = Array3::from_shape_fn((batch, seq, vocab), |(i, t, k)| {
        ((i * 31 + t * 7 + k) % 17) as f64 * 0.1
    });
    let tokens = TokenBatch::new(labels, logits, 1, 2).unwrap();
    c.bench_function("weighted_loss_4x256x512", |b| {
        b.iter(|| weighted_sft_loss(black_box(&tokens)).unwrap())
    });
    c.bench_function("weighted_loss_grad_4x256x512", |b| {
        b.iter(|| weighted_sft_loss_grad(black_box(&tokens)).unwrap())
    });
}

fn parser(c: &mut Criterion) {
    let graph = GraphId::new("agriculture").unwrap();
    let call = "<think>\nThe node information links Rational Grazing to Pays de Caux.\n</think>\n<tool_call>\nnode_info(node_name=\"Pays de Caux\", graph_type=\"agriculture\")\n</tool_call>";
    let answer = "<think>\nPays de Caux lists Continuous Grazing.\n</think>\n<answer>Continuous Grazing</answer>";
    c.bench_function("parse_tool_call_turn", |b| {
        b.iter(|| parse_assistant_output(black_box(call), Some(&graph)))
    });
    c.bench_function("parse_answer_turn", |b| {
        b.iter(|| parse_assistant_output(black_box(answer), Some(&graph)))
    });
}

criterion_group!(benches, gae, loss, parser);
criterion_main!(benches);
