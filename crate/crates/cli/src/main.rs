use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use viralcast_core::cascade::{snapshot_series, snapshots_csv, LambdaSemantics};
use viralcast_core::community::{load_partition, louvain, save_partition, LouvainConfig};
use viralcast_core::features::{
    assemble_features, measurement_report, report_csv, FeatureGroup, FeatureMatrix,
};
use viralcast_core::graph::{build_graph, graph_stats, load_graph, save_graph, EdgeSource, GraphStats};
use viralcast_core::ingest::{
    filter_window, parse_events, write_events, ParseOptions, RepostEvent, Window, GRAPH_WINDOW,
};
use viralcast_core::learn::cv::{metrics_csv, sweep_csv};
use viralcast_core::learn::{
    cross_validate, stability_weights, sweep_thresholds, train_full, LabeledDataset, MetricsReport,
};
use viralcast_core::manifest::Manifest;
use viralcast_core::pipeline::{self, PipelineConfig};
use viralcast_core::synth::{generate, write_corpus, SynthConfig};
use viralcast_core::{par, Error};

mod overlay;

#[derive(Parser)]
#[command(name = "viralcast", version, about = "Predict viral microblog cascades from community structure")]
struct Cli {
    /// Worker threads; outputs do not depend on this
    #[arg(long, global = true, default_value_t = default_threads())]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Subcommand)]
enum Command {
    /// Parse, validate and window a repost event file
    Ingest(IngestArgs),
    #[command(subcommand)]
    Graph(GraphCommand),
    #[command(subcommand)]
    Communities(CommunitiesCommand),
    #[command(subcommand)]
    Features(FeaturesCommand),
    #[command(subcommand)]
    Learn(LearnCommand),
    #[command(subcommand)]
    Synth(SynthCommand),
    #[command(subcommand)]
    Pipeline(PipelineCommand),
}

#[derive(Args)]
struct IngestArgs {
    /// Event TSV: mid, uid, ts[, parent_uid]
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Keep only events in `start,end` (unix seconds, half-open)
    #[arg(long)]
    window: Option<Window>,
    /// Abort when more than this fraction of lines is malformed
    #[arg(long, default_value_t = 0.01)]
    max_error_rate: f64,
}

/// Influence graph construction and statistics
#[derive(Subcommand)]
enum GraphCommand {
    /// Build the influence graph from graph-window events
    Build {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = GRAPH_WINDOW)]
        window: Window,
        /// `parent` (direct parent) or `root` (originator) attribution
        #[arg(long, default_value = "parent")]
        edge_source: EdgeSource,
        #[arg(long, default_value_t = 0.01)]
        max_error_rate: f64,
    },
    /// Report node/edge counts, components, clustering and degree histograms
    Stats {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Also write out_degree.csv and in_degree.csv into this directory
        #[arg(long)]
        histograms: Option<PathBuf>,
    },
}

/// Community detection
#[derive(Subcommand)]
enum CommunitiesCommand {
    /// Louvain modularity optimization
    Detect {
        #[arg(long)]
        graph: PathBuf,
        /// Partition TSV: uid, community_id
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        resolution: f64,
        #[arg(long, default_value_t = 100)]
        max_passes: usize,
        /// Return singletons instead of failing on a graph without edges
        #[arg(long)]
        allow_edgeless: bool,
    },
}

#[derive(Args, Clone)]
struct MeasureInputs {
    /// Event TSV containing the cascade window
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    partition: PathBuf,
    #[command(flatten)]
    snapshot: SnapshotOpts,
    #[arg(long, default_value_t = 0.01)]
    max_error_rate: f64,
}

#[derive(Args, Clone, Default)]
struct SnapshotOpts {
    /// Cascade window `start,end` [default: 2011-08-01..2011-09-01 UTC]
    #[arg(long)]
    cascade_window: Option<Window>,
    /// λ in seconds [default: 1800]
    #[arg(long)]
    lambda: Option<i64>,
    /// `recency` or `absolute` [default: recency]
    #[arg(long)]
    lambda_semantics: Option<LambdaSemantics>,
    /// Snapshot sizes [default: 10,30,50,100,200]
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Promote the earliest event of a rootless cascade to originator
    #[arg(long)]
    allow_rootless: bool,
}

/// Snapshot measures and feature matrices
#[derive(Subcommand)]
enum FeaturesCommand {
    /// Write the A_m and C_m feature matrices
    Extract {
        #[command(flatten)]
        inputs: MeasureInputs,
        #[arg(long)]
        output_dir: PathBuf,
        /// Threshold for the informational label column
        #[arg(long, default_value_t = 500)]
        threshold: usize,
        /// Also dump every snapshot to this CSV
        #[arg(long)]
        snapshots: Option<PathBuf>,
        /// Include member uids in the snapshot dump
        #[arg(long)]
        members: bool,
    },
    /// Per-measure distribution summary, split by viral class
    Report {
        #[command(flatten)]
        inputs: MeasureInputs,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 500)]
        threshold: usize,
    },
}

#[derive(Args, Clone, Default)]
struct Tuning {
    /// Master seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// `key=value` lines applied before command-line flags
    #[arg(long)]
    config: Option<PathBuf>,
    /// Cross-validation folds [default: 10]
    #[arg(long)]
    folds: Option<usize>,
    /// Cross-validation repeats [default: 10]
    #[arg(long)]
    repeats: Option<usize>,
    /// Trees per forest [default: 100]
    #[arg(long)]
    trees: Option<usize>,
    /// Maximum tree depth [default: unlimited]
    #[arg(long)]
    max_depth: Option<usize>,
    /// Minimum rows per leaf [default: 1]
    #[arg(long)]
    min_leaf: Option<usize>,
    /// Features tried per split [default: ceil(sqrt(d))]
    #[arg(long)]
    mtry: Option<usize>,
    /// SMOTE neighbors [default: 5]
    #[arg(long)]
    smote_k: Option<usize>,
    /// SMOTE target minority/majority ratio [default: 1.0]
    #[arg(long)]
    smote_ratio: Option<f64>,
    /// Stability-selection runs [default: 100]
    #[arg(long)]
    runs: Option<usize>,
    /// L1 strength for stability selection [default: 0.01]
    #[arg(long)]
    l1: Option<f64>,
}

#[derive(Args, Clone)]
struct FeatureInput {
    /// Feature CSV from `features extract`
    #[arg(long)]
    features: PathBuf,
    /// `A_m` or `C_m`
    #[arg(long, default_value = "A_m")]
    group: FeatureGroup,
}

/// Classification: training, cross-validation, sweeps and feature weights
#[derive(Subcommand)]
enum LearnCommand {
    /// Train one forest on all rows and write it as JSON
    Train {
        #[command(flatten)]
        input: FeatureInput,
        #[arg(long, default_value_t = 500)]
        th_tr: usize,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Repeated stratified cross-validation
    Cv {
        #[command(flatten)]
        input: FeatureInput,
        #[arg(long, default_value_t = 500)]
        th_tr: usize,
        #[arg(long, default_value_t = 500)]
        th_ts: usize,
        /// Per-fold metrics CSV
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Cross-validate every training threshold; with --th-ts the test
    /// threshold is fixed, otherwise it moves with the training threshold
    Sweep {
        #[command(flatten)]
        input: FeatureInput,
        #[arg(long, value_delimiter = ',', default_value = "300,400,500,600,700")]
        th_tr: Vec<usize>,
        #[arg(long)]
        th_ts: Option<usize>,
        /// One summary row per combination
        #[arg(long)]
        output: PathBuf,
        /// Per-fold metrics of every combination
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Stability-selection feature weights
    Weights {
        #[command(flatten)]
        input: FeatureInput,
        #[arg(long, default_value_t = 500)]
        threshold: usize,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
}

/// Synthetic corpora with known ground truth
#[derive(Subcommand)]
enum SynthCommand {
    /// Write events.tsv and truth.csv
    Generate {
        #[arg(long)]
        output_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20_000)]
        cascades: usize,
        #[arg(long, default_value_t = 20)]
        communities: usize,
        #[arg(long, default_value_t = 500)]
        nodes_per_community: usize,
        #[arg(long, default_value_t = 0.02)]
        p_in: f64,
        #[arg(long, default_value_t = 0.0005)]
        p_out: f64,
        #[arg(long, default_value_t = 0.05)]
        beta: f64,
        #[arg(long, default_value_t = 4.0)]
        gamma: f64,
        #[arg(long, default_value_t = 0.02)]
        viral_fraction: f64,
        /// Mean adoption delay, seconds
        #[arg(long, default_value_t = 600.0)]
        tau: f64,
        /// Log-scale spread of per-cascade appeal
        #[arg(long, default_value_t = 0.3)]
        appeal_sd: f64,
        /// Attention lifetime in seconds; 0 disables fading
        #[arg(long, default_value_t = 20_000.0)]
        attention: f64,
    },
}

/// The full flow from raw events to metrics and weights
#[derive(Subcommand)]
enum PipelineCommand {
    Run {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output_dir: PathBuf,
        /// Graph window `start,end` [default: 2011-05-01..2011-08-01 UTC]
        #[arg(long)]
        graph_window: Option<Window>,
        /// [default: parent]
        #[arg(long)]
        edge_source: Option<EdgeSource>,
        /// Louvain resolution [default: 1.0]
        #[arg(long)]
        resolution: Option<f64>,
        /// Louvain passes [default: 100]
        #[arg(long)]
        max_passes: Option<usize>,
        #[arg(long)]
        allow_edgeless: bool,
        #[command(flatten)]
        snapshot: SnapshotOpts,
        /// Viral threshold for the report, CV and weights [default: 500]
        #[arg(long)]
        threshold: Option<usize>,
        /// Training thresholds to sweep [default: 300,400,500,600,700]
        #[arg(long, value_delimiter = ',')]
        th_tr: Option<Vec<usize>>,
        /// Fixed test threshold of the sweep [default: 500]
        #[arg(long)]
        th_ts: Option<usize>,
        #[arg(long, default_value_t = 0.01)]
        max_error_rate: f64,
        #[command(flatten)]
        tuning: Tuning,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.max(1);
    match par::with_threads(threads, || dispatch(cli.command, threads)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Parameter(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

type Result<T> = viralcast_core::Result<T>;

fn read_events(path: &Path, max_error_rate: f64) -> Result<Vec<RepostEvent>> {
    let f = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let parsed = parse_events(BufReader::new(f), &ParseOptions { max_error_rate })?;
    for d in parsed.diagnostics.iter().take(20) {
        eprintln!("warning: {}: {d}", path.display());
    }
    if parsed.diagnostics.len() > 20 {
        eprintln!(
            "warning: {}: {} more malformed lines",
            path.display(),
            parsed.diagnostics.len() - 20
        );
    }
    Ok(parsed.events)
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, body).map_err(|e| io_err(path, e))
}

fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn finish(
    command: &str,
    seed: u64,
    threads: usize,
    config: &impl Serialize,
    inputs: &[&Path],
    outputs: &[PathBuf],
    at: &Path,
) -> Result<()> {
    let mut m = Manifest::new(command, seed, threads, config)?;
    m.args = std::env::args().collect();
    for p in inputs {
        m.input(p)?;
    }
    for p in outputs {
        m.output(p)?;
    }
    m.write(at)
}

fn tuned(base: PipelineConfig, t: &Tuning) -> Result<PipelineConfig> {
    let mut cfg = base;
    if let Some(path) = &t.config {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        overlay::apply_file(&mut cfg, &text)?;
    }
    if let Some(v) = t.seed {
        cfg.seed = v;
    }
    if let Some(v) = t.folds {
        cfg.cv.folds = v;
    }
    if let Some(v) = t.repeats {
        cfg.cv.repeats = v;
    }
    if let Some(v) = t.trees {
        cfg.cv.forest.n_trees = v;
    }
    if t.max_depth.is_some() {
        cfg.cv.forest.max_depth = t.max_depth;
    }
    if let Some(v) = t.min_leaf {
        cfg.cv.forest.min_leaf = v;
    }
    if t.mtry.is_some() {
        cfg.cv.forest.features_per_split = t.mtry;
    }
    if let Some(v) = t.smote_k {
        cfg.cv.smote.k_neighbors = v;
    }
    if let Some(v) = t.smote_ratio {
        cfg.cv.smote.ratio = v;
    }
    if let Some(v) = t.runs {
        cfg.stability.runs = v;
    }
    if let Some(v) = t.l1 {
        cfg.stability.l1_strength = v;
    }
    Ok(cfg)
}

fn apply_snapshot(cfg: &mut PipelineConfig, s: &SnapshotOpts) {
    if let Some(w) = s.cascade_window {
        cfg.cascade_window = w;
    }
    if let Some(v) = s.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = s.lambda_semantics {
        cfg.lambda_semantics = v;
    }
    if let Some(v) = &s.sizes {
        cfg.sizes = v.clone();
    }
    cfg.allow_rootless |= s.allow_rootless;
}

fn load_dataset(input: &FeatureInput) -> Result<LabeledDataset> {
    let text = std::fs::read_to_string(&input.features).map_err(|e| io_err(&input.features, e))?;
    let fm = FeatureMatrix::from_csv(&text, input.group)?;
    Ok(LabeledDataset::from_features(&fm))
}

fn dispatch(command: Command, threads: usize) -> Result<()> {
    match command {
        Command::Ingest(a) => {
            let events = read_events(&a.input, a.max_error_rate)?;
            let kept = match a.window {
                Some(w) => filter_window(&events, &w),
                None => events,
            };
            let mut buf = Vec::new();
            write_events(&mut buf, &kept)?;
            write(&a.output, buf)?;
            eprintln!("kept {} events", kept.len());
            #[derive(Serialize)]
            struct Cfg {
                window: Option<Window>,
                max_error_rate: f64,
            }
            let cfg = Cfg {
                window: a.window,
                max_error_rate: a.max_error_rate,
            };
            finish("ingest", 0, threads, &cfg, &[&a.input], &[a.output.clone()], &manifest_path(&a.output))
        }
        Command::Graph(GraphCommand::Build {
            input,
            output,
            window,
            edge_source,
            max_error_rate,
        }) => {
            let events = read_events(&input, max_error_rate)?;
            let g = build_graph(&filter_window(&events, &window), edge_source);
            save_graph(&g, &output)?;
            eprintln!("{} nodes, {} edges", g.node_count(), g.edge_count());
            #[derive(Serialize)]
            struct Cfg {
                window: Window,
                edge_source: EdgeSource,
                max_error_rate: f64,
            }
            let cfg = Cfg {
                window,
                edge_source,
                max_error_rate,
            };
            finish("graph build", 0, threads, &cfg, &[&input], &[output.clone()], &manifest_path(&output))
        }
        Command::Graph(GraphCommand::Stats {
            graph,
            output,
            histograms,
        }) => {
            let g = load_graph(&graph)?;
            let stats = graph_stats(&g);
            write(&output, stats.to_report())?;
            let mut outputs = vec![output.clone()];
            if let Some(dir) = &histograms {
                let out_h = dir.join("out_degree.csv");
                let in_h = dir.join("in_degree.csv");
                write(&out_h, GraphStats::histogram_csv(&stats.out_degree_hist))?;
                write(&in_h, GraphStats::histogram_csv(&stats.in_degree_hist))?;
                outputs.extend([out_h, in_h]);
            }
            finish("graph stats", 0, threads, &(), &[&graph], &outputs, &manifest_path(&output))
        }
        Command::Communities(CommunitiesCommand::Detect {
            graph,
            output,
            seed,
            resolution,
            max_passes,
            allow_edgeless,
        }) => {
            let g = load_graph(&graph)?;
            let cfg = LouvainConfig {
                seed,
                resolution,
                max_passes,
                allow_edgeless,
            };
            let p = louvain(&g, &cfg)?;
            save_partition(&p, &g, &output)?;
            eprintln!("{} communities, modularity {:.6}", p.k(), p.modularity);
            finish("communities detect", seed, threads, &cfg, &[&graph], &[output.clone()], &manifest_path(&output))
        }
        Command::Features(cmd) => features(cmd, threads),
        Command::Learn(cmd) => learn(cmd, threads),
        Command::Synth(SynthCommand::Generate {
            output_dir,
            seed,
            cascades,
            communities,
            nodes_per_community,
            p_in,
            p_out,
            beta,
            gamma,
            viral_fraction,
            tau,
            appeal_sd,
            attention,
        }) => {
            let cfg = SynthConfig {
                communities,
                nodes_per_community,
                p_in,
                p_out,
                cascades,
                beta,
                gamma,
                viral_fraction,
                tau,
                appeal_sd,
                attention: (attention > 0.0).then_some(attention),
                seed,
            };
            let corpus = generate(&cfg)?;
            write_corpus(&corpus, &output_dir)?;
            eprintln!(
                "{} nodes, {} edges, {} cascades",
                corpus.graph.node_count(),
                corpus.graph.edge_count(),
                corpus.cascades.len()
            );
            let outputs = [output_dir.join("events.tsv"), output_dir.join("truth.csv")];
            finish("synth generate", seed, threads, &cfg, &[], &outputs, &output_dir.join("manifest.json"))
        }
        Command::Pipeline(PipelineCommand::Run {
            input,
            output_dir,
            graph_window,
            edge_source,
            resolution,
            max_passes,
            allow_edgeless,
            snapshot,
            threshold,
            th_tr,
            th_ts,
            max_error_rate,
            tuning,
        }) => {
            let mut cfg = tuned(PipelineConfig::default(), &tuning)?;
            if let Some(w) = graph_window {
                cfg.graph_window = w;
            }
            if let Some(v) = edge_source {
                cfg.edge_source = v;
            }
            if let Some(v) = resolution {
                cfg.louvain.resolution = v;
            }
            if let Some(v) = max_passes {
                cfg.louvain.max_passes = v;
            }
            cfg.louvain.allow_edgeless |= allow_edgeless;
            apply_snapshot(&mut cfg, &snapshot);
            if let Some(v) = threshold {
                cfg.threshold = v;
            }
            if let Some(v) = th_tr {
                cfg.th_tr = v;
            }
            if let Some(v) = th_ts {
                cfg.th_ts = v;
            }
            let cfg = cfg.seeded();
            let events = read_events(&input, max_error_rate)?;
            let out = pipeline::run(&events, &cfg)?;
            for row in &out.sweep {
                if let Err(e) = &row.result {
                    eprintln!("warning: sweep th_tr={} th_ts={}: {e}", row.th_tr, row.th_ts);
                }
            }
            let r = &out.grouping;
            eprintln!(
                "{} cascades ({} duplicates, {} self-reposts, {} rootless excluded); {} A_m rows",
                r.cascades,
                r.duplicates_removed,
                r.self_reposts_removed,
                r.rootless_excluded,
                out.features_a.rows.len()
            );
            eprintln!(
                "A_m F1 {:.3}, C_m F1 {:.3} at threshold {}",
                out.cv_a.f1.mean, out.cv_c.f1.mean, cfg.threshold
            );
            let written = pipeline::write_outputs(&out, &cfg, &output_dir)?;
            let mut inputs: Vec<&Path> = vec![&input];
            if let Some(c) = &tuning.config {
                inputs.push(c);
            }
            finish("pipeline run", cfg.seed, threads, &cfg, &inputs, &written, &output_dir.join("manifest.json"))
        }
    }
}

fn features(cmd: FeaturesCommand, threads: usize) -> Result<()> {
    let (inputs, threshold) = match &cmd {
        FeaturesCommand::Extract { inputs, threshold, .. } => (inputs.clone(), *threshold),
        FeaturesCommand::Report { inputs, threshold, .. } => (inputs.clone(), *threshold),
    };
    let mut cfg = PipelineConfig {
        threshold,
        ..Default::default()
    };
    apply_snapshot(&mut cfg, &inputs.snapshot);
    let g = load_graph(&inputs.graph)?;
    let p = load_partition(&inputs.partition, &g)?;
    let events = read_events(&inputs.input, inputs.max_error_rate)?;
    let (report, cascades, measures) = pipeline::measure_cascades(&events, &g, &p, &cfg)?;
    eprintln!(
        "{} cascades, {} rootless excluded, {} duplicates removed",
        report.cascades, report.rootless_excluded, report.duplicates_removed
    );
    let in_paths: [&Path; 3] = [&inputs.input, &inputs.graph, &inputs.partition];
    match cmd {
        FeaturesCommand::Extract {
            output_dir,
            snapshots,
            members,
            ..
        } => {
            let mut outputs = Vec::new();
            for group in [FeatureGroup::StructuralDiversity, FeatureGroup::AvgTimeBaseline] {
                let fm = assemble_features(&measures, group, &group.default_sizes());
                let path = output_dir.join(format!("features_{}.csv", group.tag()));
                write(&path, fm.to_csv(threshold))?;
                eprintln!("{}: {} rows, {} excluded", group.tag(), fm.rows.len(), fm.excluded);
                outputs.push(path);
            }
            if let Some(path) = snapshots {
                let params = cfg.snapshot_params();
                let snaps: Vec<_> = cascades
                    .iter()
                    .flat_map(|c| snapshot_series(c, &g, &cfg.sizes, &params))
                    .collect();
                write(&path, snapshots_csv(&snaps, &g, members))?;
                outputs.push(path);
            }
            finish("features extract", 0, threads, &cfg, &in_paths, &outputs, &output_dir.join("manifest.json"))
        }
        FeaturesCommand::Report { output, .. } => {
            let rows = measurement_report(&measures, threshold, &cfg.sizes);
            write(&output, report_csv(&rows))?;
            finish("features report", 0, threads, &cfg, &in_paths, &[output.clone()], &manifest_path(&output))
        }
    }
}

fn learn(cmd: LearnCommand, threads: usize) -> Result<()> {
    match cmd {
        LearnCommand::Train {
            input,
            th_tr,
            output,
            tuning,
        } => {
            let cfg = tuned(PipelineConfig::default(), &tuning)?.seeded();
            let ds = load_dataset(&input)?;
            let model = train_full(&ds, th_tr, &cfg.cv)?;
            let json = serde_json::to_string(&model)
                .map_err(|e| Error::Format(format!("cannot serialize model: {e}")))?;
            write(&output, json + "\n")?;
            finish("learn train", cfg.seed, threads, &cfg.cv, &[&input.features], &[output.clone()], &manifest_path(&output))
        }
        LearnCommand::Cv {
            input,
            th_tr,
            th_ts,
            output,
            tuning,
        } => {
            let cfg = tuned(PipelineConfig::default(), &tuning)?.seeded();
            let ds = load_dataset(&input)?;
            let r = cross_validate(&ds, th_tr, th_ts, &cfg.cv)?;
            write(&output, metrics_csv([&r]))?;
            eprintln!(
                "precision {:.3} ± {:.3}, recall {:.3} ± {:.3}, F1 {:.3} ± {:.3}",
                r.precision.mean, r.precision.sd, r.recall.mean, r.recall.sd, r.f1.mean, r.f1.sd
            );
            finish("learn cv", cfg.seed, threads, &cfg.cv, &[&input.features], &[output.clone()], &manifest_path(&output))
        }
        LearnCommand::Sweep {
            input,
            th_tr,
            th_ts,
            output,
            metrics,
            tuning,
        } => {
            let cfg = tuned(PipelineConfig::default(), &tuning)?.seeded();
            let ds = load_dataset(&input)?;
            let combos: Vec<(usize, usize)> = match th_ts {
                Some(ts) => th_tr.iter().map(|&t| (t, ts)).collect(),
                None => th_tr.iter().map(|&t| (t, t)).collect(),
            };
            let rows = sweep_thresholds(&ds, &combos, &cfg.cv);
            for row in &rows {
                if let Err(e) = &row.result {
                    eprintln!("warning: th_tr={} th_ts={}: {e}", row.th_tr, row.th_ts);
                }
            }
            write(&output, sweep_csv(&rows))?;
            let mut outputs = vec![output.clone()];
            if let Some(path) = metrics {
                let ok: Vec<&MetricsReport> = rows.iter().filter_map(|r| r.result.as_ref().ok()).collect();
                write(&path, metrics_csv(ok))?;
                outputs.push(path);
            }
            finish("learn sweep", cfg.seed, threads, &cfg.cv, &[&input.features], &outputs, &manifest_path(&output))
        }
        LearnCommand::Weights {
            input,
            threshold,
            output,
            tuning,
        } => {
            let cfg = tuned(PipelineConfig::default(), &tuning)?.seeded();
            let ds = load_dataset(&input)?;
            let w = stability_weights(&ds, threshold, &cfg.stability)?;
            if w.discarded > 0 {
                eprintln!("warning: {} of {} fits did not converge", w.discarded, w.runs);
            }
            write(&output, w.to_csv())?;
            finish("learn weights", cfg.seed, threads, &cfg.stability, &[&input.features], &[output.clone()], &manifest_path(&output))
        }
    }
}
