//! Louvain modularity optimisation over the undirected projection of the
//! influence graph.
//!
//! Each directed edge contributes weight 1 to its undirected pair, so a
//! reciprocated pair weighs 2.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::graph::{InfluenceGraph, NodeId};
use crate::par;

pub type CommunityId = u32;

#[derive(Debug, Clone, PartialEq)]
pub struct CommunityPartition {
    assignment: Vec<CommunityId>,
    k: usize,
    pub modularity: f64,
    /// Modularity after each completed pass.
    pub pass_log: Vec<f64>,
}

impl CommunityPartition {
    /// Wraps an assignment, relabelling communities to `0..k` by the order
    /// of their smallest member.
    pub fn from_assignment(g: &InfluenceGraph, raw: &[usize], resolution: f64) -> Self {
        let assignment = relabel(raw);
        let k = assignment.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
        let modularity = modularity(g, &assignment, resolution);
        CommunityPartition {
            assignment,
            k,
            modularity,
            pass_log: Vec::new(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignment(&self) -> &[CommunityId] {
        &self.assignment
    }

    pub fn community_of(&self, node: usize) -> Result<CommunityId> {
        self.assignment
            .get(node)
            .copied()
            .ok_or(Error::OutOfBounds {
                index: node,
                len: self.assignment.len(),
            })
    }

    #[inline]
    pub fn of(&self, node: NodeId) -> CommunityId {
        self.assignment[node as usize]
    }

    /// The set of communities represented by `nodes`, sorted.
    pub fn communities_of(&self, nodes: &[NodeId]) -> Result<Vec<CommunityId>> {
        let mut out = nodes
            .iter()
            .map(|&v| self.community_of(v as usize))
            .collect::<Result<Vec<_>>>()?;
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &c in &self.assignment {
            s[c as usize] += 1;
        }
        s
    }
}

fn relabel(raw: &[usize]) -> Vec<CommunityId> {
    let mut map: HashMap<usize, CommunityId> = HashMap::new();
    raw.iter()
        .map(|&c| {
            let next = map.len() as CommunityId;
            *map.entry(c).or_insert(next)
        })
        .collect()
}

/// Modularity of `assignment` on the undirected projection of `g`.
///
/// `Q = sum_c [ L_c / m - resolution * (d_c / 2m)^2 ]` with `m` the total
/// projected weight (equal to the directed edge count), `L_c` the weight
/// inside community `c` and `d_c` its total degree. Zero for edgeless graphs.
pub fn modularity(g: &InfluenceGraph, assignment: &[CommunityId], resolution: f64) -> f64 {
    let m = g.edge_count() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let k = assignment.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
    let mut internal = vec![0.0; k];
    let mut degree = vec![0.0; k];
    for (a, b) in g.edges() {
        let (ca, cb) = (assignment[a as usize] as usize, assignment[b as usize] as usize);
        degree[ca] += 1.0;
        degree[cb] += 1.0;
        if ca == cb {
            internal[ca] += 1.0;
        }
    }
    internal
        .iter()
        .zip(&degree)
        .map(|(l, d)| l / m - resolution * (d / (2.0 * m)).powi(2))
        .sum()
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LouvainConfig {
    pub seed: u64,
    pub resolution: f64,
    pub max_passes: usize,
    /// Return singletons instead of failing on a graph with no edges.
    pub allow_edgeless: bool,
}

impl Default for LouvainConfig {
    fn default() -> Self {
        LouvainConfig {
            seed: 0,
            resolution: 1.0,
            max_passes: 100,
            allow_edgeless: false,
        }
    }
}

/// Weighted undirected graph used at every Louvain level. Self-loop weight
/// is kept apart from the adjacency.
struct Level {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<f64>,
    self_loops: Vec<f64>,
    degree: Vec<f64>,
    total: f64, // 2m
}

impl Level {
    fn n(&self) -> usize {
        self.degree.len()
    }

    fn from_graph(g: &InfluenceGraph) -> Self {
        let n = g.node_count();
        let mut offsets = vec![0usize; n + 1];
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        for v in 0..n {
            let v = v as NodeId;
            let (a, b) = (g.out(v), g.inn(v));
            let (mut i, mut j) = (0, 0);
            while i < a.len() || j < b.len() {
                let (t, w) = match (a.get(i), b.get(j)) {
                    (Some(&x), Some(&y)) if x == y => {
                        i += 1;
                        j += 1;
                        (x, 2.0)
                    }
                    (Some(&x), Some(&y)) if x < y => {
                        i += 1;
                        (x, 1.0)
                    }
                    (Some(_), Some(&y)) => {
                        j += 1;
                        (y, 1.0)
                    }
                    (Some(&x), None) => {
                        i += 1;
                        (x, 1.0)
                    }
                    (None, Some(&y)) => {
                        j += 1;
                        (y, 1.0)
                    }
                    (None, None) => unreachable!(),
                };
                targets.push(t);
                weights.push(w);
            }
            offsets[v as usize + 1] = targets.len();
        }
        let degree: Vec<f64> = (0..n)
            .map(|v| weights[offsets[v]..offsets[v + 1]].iter().sum())
            .collect();
        let total = degree.iter().sum();
        Level {
            offsets,
            targets,
            weights,
            self_loops: vec![0.0; n],
            degree,
            total,
        }
    }

    fn modularity(&self, comm: &[usize], resolution: f64) -> f64 {
        let k = comm.iter().max().map_or(0, |&c| c + 1);
        let mut internal = vec![0.0; k];
        let mut tot = vec![0.0; k];
        for v in 0..self.n() {
            let c = comm[v];
            tot[c] += self.degree[v];
            internal[c] += 2.0 * self.self_loops[v];
            for e in self.offsets[v]..self.offsets[v + 1] {
                if comm[self.targets[e] as usize] == c {
                    internal[c] += self.weights[e];
                }
            }
        }
        internal
            .iter()
            .zip(&tot)
            .map(|(i, t)| i / self.total - resolution * (t / self.total).powi(2))
            .sum()
    }

    /// Local moving phase. Returns the dense community of each node and
    /// whether any node moved.
    fn local_moves(&self, resolution: f64, rng: &mut par::Rng) -> (Vec<usize>, bool) {
        let n = self.n();
        let mut comm: Vec<usize> = (0..n).collect();
        let mut tot = self.degree.clone();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);

        let mut link = vec![0.0f64; n];
        let mut is_touched = vec![false; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut moved_any = false;
        let two_m = self.total;

        loop {
            let mut moved = false;
            for &v in &order {
                let kv = self.degree[v];
                let own = comm[v];
                touched.clear();
                touched.push(own);
                is_touched[own] = true;
                for e in self.offsets[v]..self.offsets[v + 1] {
                    let c = comm[self.targets[e] as usize];
                    if !is_touched[c] {
                        is_touched[c] = true;
                        touched.push(c);
                    }
                    link[c] += self.weights[e];
                }
                tot[own] -= kv;

                let gain = |c: usize| link[c] - resolution * tot[c] * kv / two_m;
                // Equal-gain alternatives never displace the current
                // community; among the others the lowest id wins.
                let mut best = own;
                let mut best_gain = gain(own);
                for &c in &touched[1..] {
                    let g = gain(c);
                    if g > best_gain + 1e-12
                        || (best != own && c < best && (g - best_gain).abs() <= 1e-12)
                    {
                        best = c;
                        best_gain = g;
                    }
                }
                tot[best] += kv;
                if best != own {
                    comm[v] = best;
                    moved = true;
                    moved_any = true;
                }
                for &c in &touched {
                    link[c] = 0.0;
                    is_touched[c] = false;
                }
            }
            if !moved {
                break;
            }
        }

        let mut dense = vec![usize::MAX; n];
        let mut next = 0;
        for c in comm.iter_mut() {
            if dense[*c] == usize::MAX {
                dense[*c] = next;
                next += 1;
            }
            *c = dense[*c];
        }
        (comm, moved_any)
    }

    fn aggregate(&self, comm: &[usize]) -> Level {
        let k = comm.iter().max().map_or(0, |&c| c + 1);
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (v, &c) in comm.iter().enumerate() {
            members[c].push(v);
        }
        let mut offsets = vec![0usize; k + 1];
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        let mut self_loops = vec![0.0; k];
        let mut degree = vec![0.0; k];
        let mut acc = vec![0.0f64; k];
        let mut seen: Vec<usize> = Vec::new();
        for c in 0..k {
            seen.clear();
            for &v in &members[c] {
                self_loops[c] += self.self_loops[v];
                degree[c] += self.degree[v];
                for e in self.offsets[v]..self.offsets[v + 1] {
                    let d = comm[self.targets[e] as usize];
                    if d == c {
                        // Each internal edge is seen from both ends.
                        self_loops[c] += self.weights[e] / 2.0;
                    } else {
                        if acc[d] == 0.0 {
                            seen.push(d);
                        }
                        acc[d] += self.weights[e];
                    }
                }
            }
            seen.sort_unstable();
            for &d in &seen {
                targets.push(d as u32);
                weights.push(acc[d]);
                acc[d] = 0.0;
            }
            offsets[c + 1] = targets.len();
        }
        Level {
            offsets,
            targets,
            weights,
            self_loops,
            degree,
            total: self.total,
        }
    }
}

/// Runs multi-level Louvain. Node visiting order within a level is a
/// seeded shuffle; the run stops when a pass moves no node or after
/// `max_passes` passes.
pub fn louvain(g: &InfluenceGraph, cfg: &LouvainConfig) -> Result<CommunityPartition> {
    if g.is_empty() {
        return Err(Error::EmptyGraph("louvain needs at least one node".into()));
    }
    if !(cfg.resolution > 0.0) {
        return Err(Error::Parameter(format!(
            "resolution must be positive, got {}",
            cfg.resolution
        )));
    }
    let n = g.node_count();
    if g.edge_count() == 0 {
        if !cfg.allow_edgeless {
            return Err(Error::EmptyGraph(
                "graph has no edges (pass --allow-edgeless for a singleton partition)".into(),
            ));
        }
        let raw: Vec<usize> = (0..n).collect();
        return Ok(CommunityPartition::from_assignment(g, &raw, cfg.resolution));
    }

    let mut level = Level::from_graph(g);
    let mut membership: Vec<usize> = (0..n).collect();
    let mut pass_log = Vec::new();
    for pass in 0..cfg.max_passes {
        let mut rng = par::rng(cfg.seed, &[pass as u64]);
        let (comm, moved) = level.local_moves(cfg.resolution, &mut rng);
        if !moved {
            break;
        }
        for m in membership.iter_mut() {
            *m = comm[*m];
        }
        pass_log.push(level.modularity(&comm, cfg.resolution));
        level = level.aggregate(&comm);
    }

    let mut p = CommunityPartition::from_assignment(g, &membership, cfg.resolution);
    if pass_log.is_empty() {
        pass_log.push(p.modularity);
    }
    p.pass_log = pass_log;
    Ok(p)
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let c2 = |x: u64| (x * x.saturating_sub(1) / 2) as f64;
    let index: f64 = table.values().map(|&v| c2(v)).sum();
    let sa: f64 = rows.values().map(|&v| c2(v)).sum();
    let sb: f64 = cols.values().map(|&v| c2(v)).sum();
    let expected = sa * sb / c2(n as u64);
    let max = (sa + sb) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Writes `uid<TAB>community_id`, one line per node in node order.
pub fn save_partition(p: &CommunityPartition, g: &InfluenceGraph, path: &Path) -> Result<()> {
    let mut s = String::with_capacity(g.node_count() * 12);
    for (v, &c) in p.assignment.iter().enumerate() {
        let _ = writeln!(s, "{}\t{}", g.uid(v as NodeId), c);
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn load_partition(path: &Path, g: &InfluenceGraph) -> Result<CommunityPartition> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut assignment: Vec<Option<CommunityId>> = vec![None; g.node_count()];
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (uid, c) = line.split_once('\t').ok_or_else(|| {
            Error::Consistency(format!("line {}: expected uid<TAB>community_id", i + 1))
        })?;
        let c: CommunityId = c.trim().parse().map_err(|_| {
            Error::Consistency(format!("line {}: bad community id `{c}`", i + 1))
        })?;
        let v = g
            .node(uid)
            .ok_or_else(|| Error::Consistency(format!("line {}: unknown node `{uid}`", i + 1)))?;
        let slot = &mut assignment[v as usize];
        if slot.is_some() {
            return Err(Error::Consistency(format!(
                "line {}: node `{uid}` listed twice",
                i + 1
            )));
        }
        *slot = Some(c);
    }
    let assignment = assignment
        .into_iter()
        .enumerate()
        .map(|(v, c)| {
            c.ok_or_else(|| {
                Error::Consistency(format!("node `{}` missing from partition", g.uid(v as NodeId)))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let k = assignment.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
    let mut used = vec![false; k];
    for &c in &assignment {
        used[c as usize] = true;
    }
    if let Some(c) = used.iter().position(|u| !u) {
        return Err(Error::Consistency(format!(
            "community ids are not dense: {c} unused below {k}"
        )));
    }
    let modularity = modularity(g, &assignment, 1.0);
    Ok(CommunityPartition {
        assignment,
        k,
        modularity,
        pass_log: Vec::new(),
    })
}
