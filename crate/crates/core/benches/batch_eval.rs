//! Data-parallel batch work on the default pool versus a single worker.
//!
//! Built without the `parallel` feature both variants run sequentially,
//! which gives the fallback's numbers for comparison.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use tgxplain::evaluator::LinkScorer;
use tgxplain::event_store::{chronological_split, Query};
use tgxplain::par;
use tgxplain::synthetic::{generate, GenConfig};
use tgxplain::trainer::{batch_gradients, with_negatives, ModelState, TrainConfig};

fn bench(c: &mut Criterion) {
    let (stream, _) = generate(&GenConfig {
        num_events: 2000,
        ..GenConfig::default()
    })
    .expect("generator");
    let split = chronological_split(&stream).expect("split");
    let state = ModelState::new(TrainConfig::desk(), stream.d_n(), stream.d_e()).expect("state");
    let batch = with_negatives(&stream, split.train.start..split.train.start + 100, 0, "bench", 0);
    let queries: Vec<Query> = stream.events()[split.test.clone()].iter().map(|e| e.query()).collect();

    let mut group = c.benchmark_group(if par::PARALLEL { "parallel-build" } else { "sequential-build" });
    group.sample_size(10);
    for (label, workers) in [("all-cores", None), ("one-worker", Some(1))] {
        let pool = par::Pool::new(workers);
        group.bench_function(BenchmarkId::new("batch_gradients_200", label), |b| {
            b.iter(|| pool.install(|| batch_gradients(&state.model, &stream, &batch, 1.0, 0.4, 0.9, 0, [0, 0]).expect("batch")))
        });
        group.bench_function(BenchmarkId::new("score_test_range", label), |b| {
            b.iter(|| pool.install(|| state.model.score(&stream, &queries).expect("scores")))
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
