//! Adopter sequences and size-indexed cascade snapshots.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{InfluenceGraph, NodeId};
use crate::ingest::{group_cascades, EventGroup, GroupOptions, RepostEvent};

pub const DEFAULT_LAMBDA: i64 = 1800;
pub const DEFAULT_SIZES: [usize; 5] = [10, 30, 50, 100, 200];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adopter {
    pub uid: String,
    /// `None` when the user is not in the influence graph.
    pub node: Option<NodeId>,
    /// Seconds since the original post.
    pub offset: i64,
}

/// One microblog's adopters, originator first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cascade {
    pub mid: String,
    pub root_ts: i64,
    pub adopters: Vec<Adopter>,
}

impl Cascade {
    pub fn final_size(&self) -> usize {
        self.adopters.len()
    }

    pub fn originator(&self) -> &Adopter {
        &self.adopters[0]
    }
}

/// Builds a cascade from a cleaned event group. Reposts keep the group's
/// `(ts, uid)` order, so the originator leads even on timestamp ties.
pub fn build_cascade(group: &EventGroup, g: &InfluenceGraph) -> Cascade {
    let root_ts = group.root.ts;
    let adopters = group
        .events()
        .map(|e| Adopter {
            uid: e.uid.clone(),
            node: g.node(&e.uid),
            offset: e.ts - root_ts,
        })
        .collect();
    Cascade {
        mid: group.mid.clone(),
        root_ts,
        adopters,
    }
}

/// Builds a cascade straight from the raw events of a single microblog.
pub fn build_cascade_from_events(
    events: &[RepostEvent],
    g: &InfluenceGraph,
    allow_rootless: bool,
) -> Result<Cascade> {
    let grouped = group_cascades(events, &GroupOptions { allow_rootless });
    match grouped.groups.as_slice() {
        [one] => Ok(build_cascade(one, g)),
        [] if !grouped.report.rootless_mids.is_empty() => Err(Error::Precondition(format!(
            "cascade {} has no original post",
            grouped.report.rootless_mids[0]
        ))),
        [] => Err(Error::Precondition("no events".into())),
        _ => Err(Error::Precondition("events span several microblogs".into())),
    }
}

/// How the λ window is anchored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaSemantics {
    /// Exposed at most λ seconds before the snapshot.
    #[default]
    Recency,
    /// Exposed at most λ seconds after the original post.
    Absolute,
}

impl std::str::FromStr for LambdaSemantics {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recency" => Ok(LambdaSemantics::Recency),
            "absolute" => Ok(LambdaSemantics::Absolute),
            _ => Err(Error::Parameter(format!(
                "lambda semantics must be `recency` or `absolute`, got `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SnapshotParams {
    pub lambda: i64,
    pub semantics: LambdaSemantics,
}

impl Default for SnapshotParams {
    fn default() -> Self {
        SnapshotParams {
            lambda: DEFAULT_LAMBDA,
            semantics: LambdaSemantics::Recency,
        }
    }
}

/// The cascade after its first `m` adopters. All node sets are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CascadeSnapshot {
    pub mid: String,
    pub m: usize,
    pub snapshot_time: i64,
    /// Known adopters among the first `m`.
    pub adopters: Vec<NodeId>,
    pub frontiers: Vec<NodeId>,
    /// First exposure of each frontier node, aligned with `frontiers`.
    pub exposure: Vec<i64>,
    pub lambda_frontiers: Vec<NodeId>,
    pub lambda_nonadopters: Vec<NodeId>,
    pub unknown_adopter_count: usize,
}

pub fn snapshot(
    c: &Cascade,
    g: &InfluenceGraph,
    m: usize,
    params: &SnapshotParams,
) -> Result<CascadeSnapshot> {
    if m < 1 {
        return Err(Error::Precondition("snapshot size must be at least 1".into()));
    }
    if m > c.final_size() {
        return Err(Error::Precondition(format!(
            "snapshot size {m} exceeds final size {} of cascade {}",
            c.final_size(),
            c.mid
        )));
    }
    let first = &c.adopters[..m];
    let snapshot_time = first[m - 1].offset;

    let mut adopters: Vec<NodeId> = first.iter().filter_map(|a| a.node).collect();
    let unknown_adopter_count = m - adopters.len();
    adopters.sort_unstable();

    // Adopters arrive in offset order, so the first write is the earliest
    // exposure.
    let mut exposure: HashMap<NodeId, i64> = HashMap::new();
    for a in first {
        let Some(u) = a.node else { continue };
        for &w in g.out(u) {
            if adopters.binary_search(&w).is_err() {
                exposure.entry(w).or_insert(a.offset);
            }
        }
    }
    let mut frontier: Vec<(NodeId, i64)> = exposure.into_iter().collect();
    frontier.sort_unstable();

    let mut lambda_frontiers = Vec::new();
    let mut lambda_nonadopters = Vec::new();
    for &(v, t) in &frontier {
        let fresh = match params.semantics {
            LambdaSemantics::Recency => snapshot_time - t <= params.lambda,
            LambdaSemantics::Absolute => t <= params.lambda,
        };
        if fresh {
            lambda_frontiers.push(v);
        } else {
            lambda_nonadopters.push(v);
        }
    }

    Ok(CascadeSnapshot {
        mid: c.mid.clone(),
        m,
        snapshot_time,
        adopters,
        frontiers: frontier.iter().map(|f| f.0).collect(),
        exposure: frontier.iter().map(|f| f.1).collect(),
        lambda_frontiers,
        lambda_nonadopters,
        unknown_adopter_count,
    })
}

/// Snapshots at every requested size the cascade reaches.
pub fn snapshot_series(
    c: &Cascade,
    g: &InfluenceGraph,
    sizes: &[usize],
    params: &SnapshotParams,
) -> Vec<CascadeSnapshot> {
    sizes
        .iter()
        .filter(|&&m| m >= 1 && m <= c.final_size())
        .map(|&m| snapshot(c, g, m, params).expect("size pre-checked"))
        .collect()
}

/// Debug dump, one row per snapshot. With `members`, node sets are added as
/// space-separated uids.
pub fn snapshots_csv(snaps: &[CascadeSnapshot], g: &InfluenceGraph, members: bool) -> String {
    let mut s = String::from(
        "mid,m,snapshot_time,adopters,unknown_adopters,frontiers,lambda_frontiers,lambda_nonadopters",
    );
    if members {
        s.push_str(",adopter_uids,lambda_frontier_uids,lambda_nonadopter_uids");
    }
    s.push('\n');
    let join = |v: &[NodeId]| v.iter().map(|&n| g.uid(n)).collect::<Vec<_>>().join(" ");
    for sn in snaps {
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{}",
            sn.mid,
            sn.m,
            sn.snapshot_time,
            sn.adopters.len(),
            sn.unknown_adopter_count,
            sn.frontiers.len(),
            sn.lambda_frontiers.len(),
            sn.lambda_nonadopters.len()
        );
        if members {
            let _ = write!(
                s,
                ",{},{},{}",
                join(&sn.adopters),
                join(&sn.lambda_frontiers),
                join(&sn.lambda_nonadopters)
            );
        }
        s.push('\n');
    }
    s
}
