use criterion::{criterion_group, criterion_main, Criterion};
use kgqa_core::graph::{load_graph, SeedCriteria};
use kgqa_core::{EntityIndex, GraphId, HashingEmbedder, KnowledgeGraph};
use std::hint::black_box;

/// A 2000-node ring with chords every 7 nodes.
fn ring(n: usize) -> KnowledgeGraph {
    let mut text = String::new();
    for i in 0..n {
        text.push_str(&format!(
            "{{\"type\":\"node\",\"name\":\"entity {i}\",\"description\":\"node {i}\"}}\n"
        ));
    }
    for i in 0..n {
        let j = (i + 1) % n;
        text.push_str(&format!(
            "{{\"type\":\"edge\",\"source\":\"entity {i}\",\"target\":\"entity {j}\",\"description\":\"next\"}}\n"
        ));
        if i % 7 == 0 {
            let k = (i * 13 + 5) % n;
            if k != i && k != j {
                text.push_str(&format!("{{\"type\":\"edge\",\"source\":\"entity {i}\",\"target\":\"entity {k}\",\"description\":\"chord\"}}\n"));
            }
        }
    }
    load_graph(text.as_bytes(), GraphId::new("bench").unwrap()).unwrap()
}

fn graph_ops(c: &mut Criterion) {
    let graph = ring(2000);
    c.bench_function("bfs_subgraph_depth3", |b| {
        b.iter(|| graph.bfs_subgraph(black_box("entity 700"), 3).unwrap())
    });
    let criteria = SeedCriteria::default();
    c.bench_function("sample_seed_nodes_2000", |b| {
        b.iter(|| graph.sample_seed_nodes(&criteria, 10, black_box(7)))
    });
}

fn matching(c: &mut Criterion) {
    let graph = ring(2000);
    let index = EntityIndex::build(&graph, &HashingEmbedder).unwrap();
    c.bench_function("match_entities_2000", |b| {
        b.iter(|| {
            index
                .match_entities(black_box("entity 1234"), 5, &HashingEmbedder)
                .unwrap()
        })
    });
}

criterion_group!(benches, graph_ops, matching);
criterion_main!(benches);
