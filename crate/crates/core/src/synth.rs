//! Synthetic corpora with known ground truth: a directed stochastic block
//! model and independent-cascade diffusion with a planted virality signal.
//!
//! Planted cascades transmit across community boundaries with boosted
//! probability, which is the structural-diversity pattern the feature
//! pipeline is meant to pick up.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Exp, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{InfluenceGraph, NodeId};
use crate::ingest::{RepostEvent, CASCADE_WINDOW, GRAPH_WINDOW};
use crate::par;

const GRAPH_WINDOW_START: i64 = GRAPH_WINDOW.start_ts;
const CASCADE_WINDOW_START: i64 = CASCADE_WINDOW.start_ts;
const CASCADE_WINDOW_END: i64 = CASCADE_WINDOW.end_ts;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthConfig {
    pub communities: usize,
    pub nodes_per_community: usize,
    /// Directed edge probability inside a community.
    pub p_in: f64,
    /// Directed edge probability across communities.
    pub p_out: f64,
    pub cascades: usize,
    /// Per-edge transmission probability.
    pub beta: f64,
    /// Multiplier on `beta` for cross-community edges of planted cascades.
    pub gamma: f64,
    /// Probability that a cascade is planted viral.
    pub viral_fraction: f64,
    /// Mean adoption delay in seconds (exponential).
    pub tau: f64,
    /// Log-scale spread of a per-cascade appeal multiplier on `beta`
    /// (mean 1). Zero gives every cascade the same base probability.
    pub appeal_sd: f64,
    /// Attention lifetime in seconds: a node adopting `t` seconds after the
    /// root transmits with probability scaled by `exp(-t / attention)`.
    /// `None` keeps transmission constant over time.
    pub attention: Option<f64>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            communities: 20,
            nodes_per_community: 500,
            p_in: 0.02,
            p_out: 0.0005,
            cascades: 20_000,
            beta: 0.05,
            gamma: 4.0,
            viral_fraction: 0.02,
            tau: 600.0,
            appeal_sd: 0.3,
            attention: Some(20_000.0),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} = {p} is not a probability")))
            }
        };
        prob("p_in", self.p_in)?;
        prob("p_out", self.p_out)?;
        prob("beta", self.beta)?;
        prob("viral_fraction", self.viral_fraction)?;
        if self.communities < 2 {
            return Err(Error::Parameter("need at least 2 communities".into()));
        }
        if self.nodes_per_community == 0 {
            return Err(Error::Parameter("nodes_per_community must be positive".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Parameter("tau must be positive".into()));
        }
        if !(self.appeal_sd >= 0.0 && self.appeal_sd.is_finite()) {
            return Err(Error::Parameter("appeal_sd must be non-negative".into()));
        }
        if let Some(a) = self.attention {
            if !(a > 0.0) {
                return Err(Error::Parameter("attention must be positive".into()));
            }
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::Parameter("gamma must be non-negative".into()));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.communities * self.nodes_per_community
    }
}

pub fn uid_of(v: usize) -> String {
    format!("u{v}")
}

/// Directed SBM; node `v` belongs to community `v / nodes_per_community`.
/// Returns the graph and the planted community of each node.
pub fn gen_sbm(cfg: &SynthConfig) -> Result<(InfluenceGraph, Vec<usize>)> {
    cfg.validate()?;
    let n = cfg.node_count();
    let size = cfg.nodes_per_community;
    let labels: Vec<usize> = (0..n).map(|v| v / size).collect();
    let rows = par::map_range(n, |u| {
        let mut rng = par::rng(cfg.seed, &[0, u as u64]);
        let own = labels[u];
        let mut out: Vec<NodeId> = Vec::new();
        for c in 0..cfg.communities {
            let p = if c == own { cfg.p_in } else { cfg.p_out };
            bernoulli_run(&mut rng, c * size, (c + 1) * size, p, |v| {
                if v != u {
                    out.push(v as NodeId)
                }
            });
        }
        out
    });
    let edges: Vec<(NodeId, NodeId)> = rows
        .iter()
        .enumerate()
        .flat_map(|(u, r)| r.iter().map(move |&v| (u as NodeId, v)))
        .collect();
    let g = InfluenceGraph::from_edges((0..n).map(uid_of).collect(), edges);
    Ok((g, labels))
}

/// Calls `hit` for each index in `lo..hi` selected with probability `p`,
/// skipping ahead geometrically.
fn bernoulli_run(rng: &mut par::Rng, lo: usize, hi: usize, p: f64, mut hit: impl FnMut(usize)) {
    if p <= 0.0 {
        return;
    }
    if p >= 1.0 {
        (lo..hi).for_each(hit);
        return;
    }
    let log_q = (1.0 - p).ln();
    let mut pos = lo as f64 - 1.0;
    loop {
        let u: f64 = 1.0 - rng.random::<f64>();
        pos += 1.0 + (u.ln() / log_q).floor();
        if pos >= hi as f64 {
            break;
        }
        hit(pos as usize);
    }
}

/// One simulated cascade. `adopters` is in canonical order: originator
/// first, then by `(offset, uid)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimCascade {
    pub mid: String,
    pub planted_viral: bool,
    pub root_ts: i64,
    /// `(node, parent, offset seconds)`.
    pub adopters: Vec<(NodeId, Option<NodeId>, i64)>,
}

impl SimCascade {
    pub fn final_size(&self) -> usize {
        self.adopters.len()
    }
}

/// Continuous-time independent cascade: each adopter gets one chance to
/// transmit along each out-edge; a successful transmission lands after an
/// exponential delay and the earliest arrival wins.
pub fn simulate_cascades(
    g: &InfluenceGraph,
    labels: &[usize],
    cfg: &SynthConfig,
) -> Result<Vec<SimCascade>> {
    cfg.validate()?;
    if g.is_empty() {
        return Err(Error::EmptyGraph("cannot seed cascades on an empty graph".into()));
    }
    let spread = (CASCADE_WINDOW_END - CASCADE_WINDOW_START) as f64 * 0.6;
    Ok(par::map_range(cfg.cascades, |i| {
        let mut rng = par::rng(cfg.seed, &[1, i as u64]);
        let planted = rng.random::<f64>() < cfg.viral_fraction;
        let seed = rng.random_range(0..g.node_count()) as NodeId;
        let root_ts = CASCADE_WINDOW_START + (rng.random::<f64>() * spread) as i64;
        let z: f64 = rng.sample(StandardNormal);
        let appeal = (cfg.appeal_sd * z - cfg.appeal_sd * cfg.appeal_sd / 2.0).exp();
        let base = (cfg.beta * appeal).min(1.0);
        let boosted = (cfg.beta * appeal * cfg.gamma).min(1.0);
        let delays = Exp::new(1.0 / cfg.tau).expect("tau validated");

        let mut adopted = vec![false; g.node_count()];
        let mut heap: BinaryHeap<Reverse<(u64, NodeId, NodeId)>> = BinaryHeap::new();
        let mut adopters = vec![(seed, None, 0.0f64)];
        adopted[seed as usize] = true;
        let mut frontier = vec![(seed, 0.0f64)];
        loop {
            for (u, t) in frontier.drain(..) {
                let fade = cfg.attention.map_or(1.0, |a| (-t / a).exp());
                for &v in g.out(u) {
                    if adopted[v as usize] {
                        continue;
                    }
                    let p = if planted && labels[u as usize] != labels[v as usize] {
                        boosted
                    } else {
                        base
                    };
                    if rng.random::<f64>() < p * fade {
                        let delay: f64 = rng.sample(delays);
                        heap.push(Reverse(((t + delay).to_bits(), v, u)));
                    }
                }
            }
            let Some(Reverse((bits, v, parent))) = heap.pop() else {
                break;
            };
            if adopted[v as usize] {
                continue;
            }
            adopted[v as usize] = true;
            let t = f64::from_bits(bits);
            adopters.push((v, Some(parent), t));
            frontier.push((v, t));
        }

        let mut record: Vec<(NodeId, Option<NodeId>, i64)> = adopters
            .iter()
            .map(|&(v, p, t)| (v, p, t.floor() as i64))
            .collect();
        let uids: Vec<String> = record.iter().map(|r| uid_of(r.0 as usize)).collect();
        let mut order: Vec<usize> = (1..record.len()).collect();
        order.sort_by(|&a, &b| (record[a].2, &uids[a]).cmp(&(record[b].2, &uids[b])));
        let mut canon = vec![record[0]];
        canon.extend(order.iter().map(|&k| record[k]));
        record = canon;
        SimCascade {
            mid: format!("c{i:06}"),
            planted_viral: planted,
            root_ts,
            adopters: record,
        }
    }))
}

/// Repost events for simulated cascades, parent = transmitting node.
pub fn cascade_events(cascades: &[SimCascade]) -> Vec<RepostEvent> {
    let mut out = Vec::new();
    for c in cascades {
        for &(v, parent, offset) in &c.adopters {
            out.push(RepostEvent {
                mid: c.mid.clone(),
                uid: uid_of(v as usize),
                ts: c.root_ts + offset,
                parent_uid: parent.map(|p| uid_of(p as usize)),
            });
        }
    }
    out
}

/// Graph-window activity: one two-event microblog per edge, so building
/// the graph from these events reproduces `g` exactly.
pub fn history_events(g: &InfluenceGraph, seed: u64) -> Vec<RepostEvent> {
    let span = (CASCADE_WINDOW_START - GRAPH_WINDOW_START - 3600) as f64;
    let mut rng = par::rng(seed, &[2]);
    let mut out = Vec::with_capacity(2 * g.edge_count());
    for (k, (a, b)) in g.edges().enumerate() {
        let mid = format!("h{k:08}");
        let ts = GRAPH_WINDOW_START + (rng.random::<f64>() * span) as i64;
        let (ua, ub) = (uid_of(a as usize), uid_of(b as usize));
        out.push(RepostEvent {
            mid: mid.clone(),
            uid: ua.clone(),
            ts,
            parent_uid: None,
        });
        out.push(RepostEvent {
            mid,
            uid: ub,
            ts: ts + 1 + rng.random_range(0..600),
            parent_uid: Some(ua),
        });
    }
    out
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub graph: InfluenceGraph,
    pub labels: Vec<usize>,
    pub cascades: Vec<SimCascade>,
    /// Graph-window events followed by cascade-window events.
    pub events: Vec<RepostEvent>,
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    let (graph, labels) = gen_sbm(cfg)?;
    let cascades = simulate_cascades(&graph, &labels, cfg)?;
    let mut events = history_events(&graph, cfg.seed);
    events.extend(cascade_events(&cascades));
    Ok(SynthCorpus {
        graph,
        labels,
        cascades,
        events,
    })
}

pub fn truth_csv(cascades: &[SimCascade]) -> String {
    let mut s = String::from("mid,planted_viral,final_size\n");
    for c in cascades {
        let _ = writeln!(s, "{},{},{}", c.mid, u8::from(c.planted_viral), c.final_size());
    }
    s
}

/// Writes `events.tsv` and `truth.csv` into `dir`.
pub fn write_corpus(corpus: &SynthCorpus, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut buf = Vec::new();
    crate::ingest::write_events(&mut buf, &corpus.events)?;
    let events = dir.join("events.tsv");
    std::fs::write(&events, buf).map_err(|e| Error::io(&events, e))?;
    let truth = dir.join("truth.csv");
    std::fs::write(&truth, truth_csv(&corpus.cascades)).map_err(|e| Error::io(&truth, e))?;
    Ok(())
}
