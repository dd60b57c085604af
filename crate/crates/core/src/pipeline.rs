//! End-to-end run: events in, measurement report, feature matrices,
//! cross-validated metrics, threshold sweep and feature weights out.

use std::path::Path;

use serde::Serialize;

use crate::cascade::{build_cascade, Cascade, LambdaSemantics, SnapshotParams, DEFAULT_LAMBDA, DEFAULT_SIZES};
use crate::community::{louvain, CommunityPartition, LouvainConfig};
use crate::error::{Error, Result};
use crate::features::{
    assemble_features, extract_measures, measurement_report, report_csv, sample_counts, CascadeMeasures,
    FeatureGroup, FeatureMatrix, ReportRow,
};
use crate::graph::{build_graph, graph_stats, EdgeSource, GraphStats, InfluenceGraph};
use crate::ingest::{
    filter_window, group_cascades, GroupOptions, GroupReport, RepostEvent, Window, CASCADE_WINDOW,
    GRAPH_WINDOW,
};
use crate::learn::cv::{metrics_csv, sweep_combinations, sweep_csv};
use crate::learn::{
    cross_validate, stability_weights, sweep_thresholds, CvConfig, LabeledDataset, MetricsReport,
    StabilityConfig, SweepRow, WeightReport,
};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub graph_window: Window,
    pub cascade_window: Window,
    pub edge_source: EdgeSource,
    pub allow_rootless: bool,
    pub lambda: i64,
    pub lambda_semantics: LambdaSemantics,
    /// Sizes measured for the report; the feature groups use their own
    /// sizes, which must be among these.
    pub sizes: Vec<usize>,
    pub threshold: usize,
    pub th_tr: Vec<usize>,
    pub th_ts: usize,
    pub louvain: LouvainConfig,
    pub cv: CvConfig,
    pub stability: StabilityConfig,
    /// Master seed; per-stage seeds are derived from it.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            graph_window: GRAPH_WINDOW,
            cascade_window: CASCADE_WINDOW,
            edge_source: EdgeSource::Parent,
            allow_rootless: false,
            lambda: DEFAULT_LAMBDA,
            lambda_semantics: LambdaSemantics::Recency,
            sizes: DEFAULT_SIZES.to_vec(),
            threshold: 500,
            th_tr: vec![300, 400, 500, 600, 700],
            th_ts: 500,
            louvain: LouvainConfig::default(),
            cv: CvConfig::default(),
            stability: StabilityConfig::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Copies the master seed into every stage.
    pub fn seeded(mut self) -> Self {
        self.louvain.seed = par::derive_seed(self.seed, &[1]);
        self.cv.seed = par::derive_seed(self.seed, &[2]);
        self.stability.seed = par::derive_seed(self.seed, &[3]);
        self
    }

    pub fn snapshot_params(&self) -> SnapshotParams {
        SnapshotParams {
            lambda: self.lambda,
            semantics: self.lambda_semantics,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for g in [FeatureGroup::StructuralDiversity, FeatureGroup::AvgTimeBaseline] {
            for m in g.default_sizes() {
                if !self.sizes.contains(&m) {
                    return Err(Error::Parameter(format!(
                        "size {m} needed by {} is missing from sizes",
                        g.tag()
                    )));
                }
            }
        }
        if self.sizes.iter().any(|&m| m == 0) {
            return Err(Error::Parameter("sizes must be positive".into()));
        }
        if self.lambda < 0 {
            return Err(Error::Parameter("lambda must be non-negative".into()));
        }
        Ok(())
    }
}

/// Everything a run produces, in memory.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub graph: InfluenceGraph,
    pub graph_stats: GraphStats,
    pub partition: CommunityPartition,
    pub grouping: GroupReport,
    pub measures: Vec<CascadeMeasures>,
    pub report: Vec<ReportRow>,
    pub features_a: FeatureMatrix,
    pub features_c: FeatureMatrix,
    pub cv_a: MetricsReport,
    pub cv_c: MetricsReport,
    pub sweep: Vec<SweepRow>,
    pub weights: WeightReport,
}

/// Graph, communities and per-cascade measures: the shared front half.
pub struct Measured {
    pub graph: InfluenceGraph,
    pub partition: CommunityPartition,
    pub grouping: GroupReport,
    pub measures: Vec<CascadeMeasures>,
}

/// Groups, reconstructs and measures the cascade-window events against an
/// existing graph and partition.
pub fn measure_cascades(
    events: &[RepostEvent],
    graph: &InfluenceGraph,
    partition: &CommunityPartition,
    cfg: &PipelineConfig,
) -> Result<(GroupReport, Vec<Cascade>, Vec<CascadeMeasures>)> {
    cfg.validate()?;
    let study = filter_window(events, &cfg.cascade_window);
    let grouped = group_cascades(
        &study,
        &GroupOptions {
            allow_rootless: cfg.allow_rootless,
        },
    );
    let cascades: Vec<Cascade> = par::map(&grouped.groups, |grp| build_cascade(grp, graph));
    let measures = extract_measures(&cascades, graph, partition, &cfg.sizes, &cfg.snapshot_params());
    Ok((grouped.report, cascades, measures))
}

pub fn measure_events(events: &[RepostEvent], cfg: &PipelineConfig) -> Result<Measured> {
    cfg.validate()?;
    let graph = build_graph(&filter_window(events, &cfg.graph_window), cfg.edge_source);
    let partition = louvain(&graph, &cfg.louvain)?;
    let (grouping, _, measures) = measure_cascades(events, &graph, &partition, cfg)?;
    Ok(Measured {
        graph,
        partition,
        grouping,
        measures,
    })
}

/// Runs the full flow. `cfg` should already be `seeded`.
pub fn run(events: &[RepostEvent], cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let Measured {
        graph,
        partition,
        grouping,
        measures,
    } = measure_events(events, cfg)?;
    let report = measurement_report(&measures, cfg.threshold, &cfg.sizes);
    let features_a = assemble_features(
        &measures,
        FeatureGroup::StructuralDiversity,
        &FeatureGroup::StructuralDiversity.default_sizes(),
    );
    let features_c = assemble_features(
        &measures,
        FeatureGroup::AvgTimeBaseline,
        &FeatureGroup::AvgTimeBaseline.default_sizes(),
    );
    let ds_a = LabeledDataset::from_features(&features_a);
    let ds_c = LabeledDataset::from_features(&features_c);
    let cv_a = cross_validate(&ds_a, cfg.threshold, cfg.threshold, &cfg.cv)?;
    let cv_c = cross_validate(&ds_c, cfg.threshold, cfg.threshold, &cfg.cv)?;
    let sweep = sweep_thresholds(&ds_a, &sweep_combinations(&cfg.th_tr, cfg.th_ts), &cfg.cv);
    let weights = stability_weights(&ds_a, cfg.threshold, &cfg.stability)?;
    Ok(PipelineOutput {
        graph_stats: graph_stats(&graph),
        graph,
        partition,
        grouping,
        measures,
        report,
        features_a,
        features_c,
        cv_a,
        cv_c,
        sweep,
        weights,
    })
}

/// Output file names, in the order they are written.
pub const OUTPUT_FILES: [&str; 10] = [
    "graph_stats.txt",
    "samples.csv",
    "measurement_report.csv",
    "features_A_m.csv",
    "features_C_m.csv",
    "metrics_A_m.csv",
    "metrics_C_m.csv",
    "metrics_sweep.csv",
    "sweep_summary.csv",
    "weights.csv",
];

/// Writes every artifact into `dir` and returns the paths written.
pub fn write_outputs(out: &PipelineOutput, cfg: &PipelineConfig, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let swept: Vec<&MetricsReport> = out.sweep.iter().filter_map(|r| r.result.as_ref().ok()).collect();
    let contents = [
        out.graph_stats.to_report(),
        sample_counts(&out.measures, &cfg.sizes, cfg.threshold),
        report_csv(&out.report),
        out.features_a.to_csv(cfg.threshold),
        out.features_c.to_csv(cfg.threshold),
        metrics_csv([&out.cv_a]),
        metrics_csv([&out.cv_c]),
        metrics_csv(swept),
        sweep_csv(&out.sweep),
        out.weights.to_csv(),
    ];
    let mut written = Vec::new();
    for (name, body) in OUTPUT_FILES.iter().zip(contents) {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};

    fn small_run(threads: usize) -> (PipelineOutput, PipelineConfig) {
        let corpus = generate(&SynthConfig {
            communities: 6,
            nodes_per_community: 200,
            p_in: 0.05,
            p_out: 0.006,
            cascades: 4000,
            seed: 5,
            ..Default::default()
        })
        .unwrap();
        let mut cfg = PipelineConfig {
            threshold: 100,
            th_tr: vec![80, 100, 120],
            th_ts: 100,
            seed: 9,
            ..Default::default()
        };
        cfg.cv.repeats = 2;
        cfg.cv.forest.n_trees = 20;
        cfg.stability.runs = 20;
        let cfg = cfg.seeded();
        let out = par::with_threads(threads, || run(&corpus.events, &cfg)).unwrap();
        (out, cfg)
    }

    #[test]
    fn small_corpus_end_to_end() {
        let (out, cfg) = small_run(2);
        assert_eq!(out.graph.node_count(), 1200);
        assert_eq!(out.features_a.rows.len(), out.features_c.rows.len());
        assert_eq!(out.sweep.len(), 5);
        assert_eq!(out.cv_a.folds.len(), cfg.cv.folds * cfg.cv.repeats);
        assert_eq!(out.weights.weights.len(), 22);
        let dir = tempfile::tempdir().unwrap();
        let written = write_outputs(&out, &cfg, dir.path()).unwrap();
        assert_eq!(written.len(), OUTPUT_FILES.len());
        let weights = std::fs::read_to_string(dir.path().join("weights.csv")).unwrap();
        assert!(weights.starts_with("feature,weight,selected\n"));
    }

    #[test]
    fn thread_count_does_not_change_outputs() {
        let (a, cfg) = small_run(1);
        let (b, _) = small_run(4);
        let da = tempfile::tempdir().unwrap();
        let db = tempfile::tempdir().unwrap();
        write_outputs(&a, &cfg, da.path()).unwrap();
        write_outputs(&b, &cfg, db.path()).unwrap();
        for name in OUTPUT_FILES {
            let x = std::fs::read(da.path().join(name)).unwrap();
            let y = std::fs::read(db.path().join(name)).unwrap();
            assert!(x == y, "{name} differs");
        }
    }

    #[test]
    fn missing_feature_size_rejected() {
        let cfg = PipelineConfig {
            sizes: vec![10, 30],
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Parameter(_))));
    }
}
