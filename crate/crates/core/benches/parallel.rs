//! Single-threaded vs thread-pool timings for the two heavy stages.
//! Build with `--no-default-features` to time the sequential code path.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use viralcast_core::cascade::{build_cascade, Cascade, SnapshotParams, DEFAULT_SIZES};
use viralcast_core::community::{louvain, LouvainConfig};
use viralcast_core::features::{assemble_features, extract_measures, FeatureGroup};
use viralcast_core::graph::{build_graph, EdgeSource};
use viralcast_core::ingest::{filter_window, group_cascades, GroupOptions, CASCADE_WINDOW, GRAPH_WINDOW};
use viralcast_core::learn::{cross_validate, CvConfig, LabeledDataset};
use viralcast_core::par;
use viralcast_core::synth::{generate, SynthConfig};

fn thread_counts() -> Vec<usize> {
    let all = std::thread::available_parallelism().map_or(1, |n| n.get());
    if all > 1 {
        vec![1, all]
    } else {
        vec![1]
    }
}

fn bench(c: &mut Criterion) {
    let corpus = generate(&SynthConfig {
        communities: 10,
        nodes_per_community: 300,
        p_in: 0.03,
        p_out: 0.0005,
        cascades: 3000,
        beta: 0.12,
        seed: 1,
        ..Default::default()
    })
    .unwrap();
    let g = build_graph(&filter_window(&corpus.events, &GRAPH_WINDOW), EdgeSource::Parent);
    let p = louvain(&g, &LouvainConfig::default()).unwrap();
    let grouped = group_cascades(&filter_window(&corpus.events, &CASCADE_WINDOW), &GroupOptions::default());
    let cascades: Vec<Cascade> = grouped.groups.iter().map(|grp| build_cascade(grp, &g)).collect();
    let params = SnapshotParams::default();

    let mut group = c.benchmark_group("extract_measures");
    group.sample_size(10);
    for t in thread_counts() {
        group.bench_with_input(BenchmarkId::from_parameter(t), &t, |b, &t| {
            b.iter(|| par::with_threads(t, || extract_measures(&cascades, &g, &p, &DEFAULT_SIZES, &params)))
        });
    }
    group.finish();

    let measures = extract_measures(&cascades, &g, &p, &DEFAULT_SIZES, &params);
    let ds = LabeledDataset::from_features(&assemble_features(
        &measures,
        FeatureGroup::StructuralDiversity,
        &[30, 50],
    ));
    let mut cv = CvConfig {
        repeats: 1,
        ..Default::default()
    };
    cv.forest.n_trees = 50;
    let mut group = c.benchmark_group("cross_validate");
    group.sample_size(10);
    for t in thread_counts() {
        group.bench_with_input(BenchmarkId::from_parameter(t), &t, |b, &t| {
            b.iter(|| par::with_threads(t, || cross_validate(&ds, 100, 100, &cv)))
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
