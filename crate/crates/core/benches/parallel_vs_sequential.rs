//! Rayon fan-out against the sequential fallback on the two batch workloads:
//! scoring simulator metrics and sweeping many research trees.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ora_core::flowgraph::{ResearchTree, TreeShape};
use ora_core::par;
use ora_core::scorelab::*;
use ora_core::soldb::BudgetStamp;
use ora_core::{FeatureSignature, MetricsRecord, SolutionId, SolutionRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_metrics(n: usize) -> Vec<MetricsRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..n)
        .map(|_| {
            [COLLISIONS, TELEPORTS, EMERGENCY_STOPS, EMERGENCY_BRAKING, CRITICAL_TTC, AVG_SPEED, SPEED_VARIANCE]
                .into_iter()
                .map(|k| (k, rng.gen_range(0.0..30.0)))
                .collect()
        })
        .collect()
}

fn record(serial: u64, score: f64) -> SolutionRecord {
    SolutionRecord {
        id: SolutionId { lead: 1, round: 1, count: serial as u32, serial },
        idea: format!("idea number {serial} with a reasonably long description"),
        code: String::new(),
        callbacks: None,
        experiment_summary: String::new(),
        metrics: MetricsRecord::default(),
        features: FeatureSignature(vec![0]),
        score,
        parent_ids: vec![],
        valid: true,
        round: 1,
        lead: 1,
        attempts: 1,
        budget: BudgetStamp::default(),
    }
}

/// Grows a full best-first tree with random child scores.
fn grow(seed: u64) -> ResearchTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = TreeShape { max_children: 3, max_depth: 6, improvement_grace_depth: 2, ..TreeShape::default() };
    let mut tree = ResearchTree::init_round(&[record(0, 0.5)], 1, 1, shape, true).unwrap();
    let mut serial = 0;
    while let Some(focus) = tree.select_best_unfinished_leaf() {
        let budget = tree.child_budget(focus).unwrap();
        if budget == 0 {
            tree.mark_terminal(focus).unwrap();
            continue;
        }
        let kids = (0..budget)
            .map(|_| {
                serial += 1;
                (format!("idea {serial}"), record(serial, rng.gen_range(0.0..1.0)))
            })
            .collect();
        tree.attach_children(focus, kids).unwrap();
    }
    tree
}

fn sweep(seed: &u64) -> usize {
    grow(*seed).render().len()
}

fn bench(c: &mut Criterion) {
    let cfg = ScoringConfig::default();
    let mut g = c.benchmark_group("score_batch");
    for n in [1_000, 100_000] {
        let batch = random_metrics(n);
        g.bench_with_input(BenchmarkId::new("parallel", n), &batch, |b, m| b.iter(|| score_batch(m, &cfg)));
        g.bench_with_input(BenchmarkId::new("sequential", n), &batch, |b, m| b.iter(|| score_batch_seq(m, &cfg)));
    }
    g.finish();

    let mut g = c.benchmark_group("tree_sweep");
    for n in [16u64, 512] {
        let seeds: Vec<u64> = (0..n).collect();
        g.bench_with_input(BenchmarkId::new("parallel", n), &seeds, |b, s| b.iter(|| par::map(s, sweep)));
        g.bench_with_input(BenchmarkId::new("sequential", n), &seeds, |b, s| b.iter(|| par::map_seq(s, sweep)));
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
