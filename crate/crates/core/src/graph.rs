//! Directed influence graph in dual CSR form.
//!
//! An edge `(v, w)` means `w` reposted something `v` posted (or forwarded)
//! at least once during the graph window. Out- and in-adjacency are both
//! stored so frontier expansion and exposure lookups are slice reads.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::RepostEvent;
use crate::par;

pub type NodeId = u32;

/// Which user is credited as the influencer of a repost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeSource {
    /// The direct parent, or the root author when no parent is recorded.
    #[default]
    Parent,
    /// Always the author of the original post.
    Root,
}

impl std::str::FromStr for EdgeSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parent" => Ok(EdgeSource::Parent),
            "root" => Ok(EdgeSource::Root),
            _ => Err(Error::Parameter(format!(
                "edge source must be `parent` or `root`, got `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfluenceGraph {
    uids: Vec<String>,
    index: HashMap<String, NodeId>,
    out_offsets: Vec<usize>,
    out_targets: Vec<NodeId>,
    in_offsets: Vec<usize>,
    in_targets: Vec<NodeId>,
}

impl InfluenceGraph {
    /// Builds a graph from a uid table and an edge list. Self-loops and
    /// repeated edges are dropped.
    pub fn from_edges(uids: Vec<String>, mut edges: Vec<(NodeId, NodeId)>) -> Self {
        let n = uids.len();
        edges.retain(|&(a, b)| a != b);
        edges.sort_unstable();
        edges.dedup();
        debug_assert!(edges.iter().all(|&(a, b)| (a as usize) < n && (b as usize) < n));

        let (out_offsets, out_targets) = csr(n, edges.iter().copied());
        let mut rev: Vec<(NodeId, NodeId)> = edges.iter().map(|&(a, b)| (b, a)).collect();
        rev.sort_unstable();
        let (in_offsets, in_targets) = csr(n, rev.into_iter());

        let index = uids
            .iter()
            .enumerate()
            .map(|(i, u)| (u.clone(), i as NodeId))
            .collect();
        InfluenceGraph {
            uids,
            index,
            out_offsets,
            out_targets,
            in_offsets,
            in_targets,
        }
    }

    pub fn node_count(&self) -> usize {
        self.uids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.out_targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.uids.is_empty()
    }

    pub fn uid(&self, v: NodeId) -> &str {
        &self.uids[v as usize]
    }

    pub fn uids(&self) -> &[String] {
        &self.uids
    }

    pub fn node(&self, uid: &str) -> Option<NodeId> {
        self.index.get(uid).copied()
    }

    pub fn out_neighbors(&self, v: usize) -> Result<&[NodeId]> {
        self.check(v)?;
        Ok(self.out(v as NodeId))
    }

    pub fn in_neighbors(&self, v: usize) -> Result<&[NodeId]> {
        self.check(v)?;
        Ok(self.inn(v as NodeId))
    }

    /// Out-neighbors without the bounds check.
    #[inline]
    pub fn out(&self, v: NodeId) -> &[NodeId] {
        let v = v as usize;
        &self.out_targets[self.out_offsets[v]..self.out_offsets[v + 1]]
    }

    #[inline]
    pub fn inn(&self, v: NodeId) -> &[NodeId] {
        let v = v as usize;
        &self.in_targets[self.in_offsets[v]..self.in_offsets[v + 1]]
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.out(a).binary_search(&b).is_ok()
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.node_count() as NodeId).flat_map(move |v| self.out(v).iter().map(move |&w| (v, w)))
    }

    fn check(&self, v: usize) -> Result<()> {
        if v >= self.node_count() {
            return Err(Error::OutOfBounds {
                index: v,
                len: self.node_count(),
            });
        }
        Ok(())
    }

    /// Sorted, duplicate-free neighbor set of the undirected projection.
    pub fn undirected_neighbors(&self, v: NodeId) -> Vec<NodeId> {
        let (a, b) = (self.out(v), self.inn(v));
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            let next = match (a.get(i), b.get(j)) {
                (Some(&x), Some(&y)) if x == y => {
                    i += 1;
                    j += 1;
                    x
                }
                (Some(&x), Some(&y)) if x < y => {
                    i += 1;
                    x
                }
                (Some(_), Some(&y)) => {
                    j += 1;
                    y
                }
                (Some(&x), None) => {
                    i += 1;
                    x
                }
                (None, Some(&y)) => {
                    j += 1;
                    y
                }
                (None, None) => unreachable!(),
            };
            out.push(next);
        }
        out
    }

    fn validate(&self) -> Result<()> {
        let n = self.node_count();
        for (name, offsets, targets) in [
            ("out", &self.out_offsets, &self.out_targets),
            ("in", &self.in_offsets, &self.in_targets),
        ] {
            if offsets.len() != n + 1 || offsets[0] != 0 || offsets[n] != targets.len() {
                return Err(Error::Corrupt(format!("{name} offsets inconsistent")));
            }
            for v in 0..n {
                if offsets[v] > offsets[v + 1] {
                    return Err(Error::Corrupt(format!("{name} offsets not monotone")));
                }
                let row = &targets[offsets[v]..offsets[v + 1]];
                if row.iter().any(|&t| t as usize >= n || t as usize == v)
                    || row.windows(2).any(|w| w[0] >= w[1])
                {
                    return Err(Error::Corrupt(format!("{name} adjacency of node {v} invalid")));
                }
            }
        }
        if self.out_targets.len() != self.in_targets.len() {
            return Err(Error::Corrupt("out/in edge counts differ".into()));
        }
        for (a, b) in self.edges() {
            if self.inn(b).binary_search(&a).is_err() {
                return Err(Error::Corrupt(format!("edge ({a},{b}) missing from in-adjacency")));
            }
        }
        Ok(())
    }
}

fn csr(n: usize, sorted_edges: impl Iterator<Item = (NodeId, NodeId)>) -> (Vec<usize>, Vec<NodeId>) {
    let mut offsets = vec![0usize; n + 1];
    let mut targets = Vec::new();
    for (a, b) in sorted_edges {
        offsets[a as usize + 1] += 1;
        targets.push(b);
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    (offsets, targets)
}

/// Builds the influence graph from graph-window events.
///
/// Node indices follow first appearance of a user in the `uid` or
/// `parent_uid` column. One repost is enough to create an edge.
pub fn build_graph(events: &[RepostEvent], edge_source: EdgeSource) -> InfluenceGraph {
    let mut index: HashMap<&str, NodeId> = HashMap::new();
    let mut uids: Vec<String> = Vec::new();
    fn intern<'a>(u: &'a str, index: &mut HashMap<&'a str, NodeId>, uids: &mut Vec<String>) -> NodeId {
        *index.entry(u).or_insert_with(|| {
            uids.push(u.to_string());
            (uids.len() - 1) as NodeId
        })
    }

    let mut ids: Vec<(NodeId, Option<NodeId>)> = Vec::with_capacity(events.len());
    for e in events {
        let u = intern(&e.uid, &mut index, &mut uids);
        let p = e.parent_uid.as_deref().map(|p| intern(p, &mut index, &mut uids));
        ids.push((u, p));
    }

    // Earliest original post per microblog.
    let mut roots: HashMap<&str, (i64, NodeId)> = HashMap::new();
    for (e, &(u, _)) in events.iter().zip(&ids) {
        if e.is_root() {
            roots
                .entry(e.mid.as_str())
                .and_modify(|r| {
                    if e.ts < r.0 {
                        *r = (e.ts, u)
                    }
                })
                .or_insert((e.ts, u));
        }
    }

    let mut edges = Vec::with_capacity(events.len());
    for (e, &(u, p)) in events.iter().zip(&ids) {
        if e.is_root() {
            continue;
        }
        let root = roots.get(e.mid.as_str()).map(|r| r.1);
        let influencer = match edge_source {
            EdgeSource::Parent => p.or(root),
            EdgeSource::Root => root.or(p),
        };
        if let Some(v) = influencer {
            edges.push((v, u));
        }
    }
    InfluenceGraph::from_edges(uids, edges)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    pub weak_components: usize,
    /// Mean local clustering over all nodes of the undirected projection;
    /// nodes with undirected degree < 2 contribute 0.
    pub avg_clustering: f64,
    pub clustering_eligible_nodes: usize,
    pub out_degree_hist: Vec<(usize, usize)>,
    pub in_degree_hist: Vec<(usize, usize)>,
}

pub fn graph_stats(g: &InfluenceGraph) -> GraphStats {
    let n = g.node_count();
    let local = par::map_range(n, |v| local_clustering(g, v as NodeId));
    let eligible = local.iter().filter(|c| c.is_some()).count();
    let avg_clustering = if n == 0 {
        0.0
    } else {
        local.iter().map(|c| c.unwrap_or(0.0)).sum::<f64>() / n as f64
    };
    GraphStats {
        nodes: n,
        edges: g.edge_count(),
        weak_components: weak_components(g),
        avg_clustering,
        clustering_eligible_nodes: eligible,
        out_degree_hist: histogram((0..n).map(|v| g.out(v as NodeId).len())),
        in_degree_hist: histogram((0..n).map(|v| g.inn(v as NodeId).len())),
    }
}

fn local_clustering(g: &InfluenceGraph, v: NodeId) -> Option<f64> {
    let nb = g.undirected_neighbors(v);
    let d = nb.len();
    if d < 2 {
        return None;
    }
    let mut links = 0usize;
    for (i, &a) in nb.iter().enumerate() {
        let na = g.undirected_neighbors(a);
        links += count_common(&na, &nb[i + 1..]);
    }
    Some(links as f64 / (d * (d - 1) / 2) as f64)
}

fn count_common(a: &[NodeId], b: &[NodeId]) -> usize {
    let (mut i, mut j, mut c) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                c += 1;
                i += 1;
                j += 1;
            }
        }
    }
    c
}

/// Weakly connected components by union-find.
pub fn weak_components(g: &InfluenceGraph) -> usize {
    let n = g.node_count();
    let mut parent: Vec<u32> = (0..n as u32).collect();
    fn find(p: &mut [u32], mut x: u32) -> u32 {
        while p[x as usize] != x {
            p[x as usize] = p[p[x as usize] as usize];
            x = p[x as usize];
        }
        x
    }
    let mut comps = n;
    for (a, b) in g.edges() {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb) as usize] = ra.min(rb);
            comps -= 1;
        }
    }
    comps
}

/// Component label per node by BFS over the undirected projection.
pub fn component_labels(g: &InfluenceGraph) -> Vec<usize> {
    let n = g.node_count();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        label[s] = next;
        queue.push_back(s as NodeId);
        while let Some(v) = queue.pop_front() {
            for &w in g.out(v).iter().chain(g.inn(v)) {
                if label[w as usize] == usize::MAX {
                    label[w as usize] = next;
                    queue.push_back(w);
                }
            }
        }
        next += 1;
    }
    label
}

fn histogram(degrees: impl Iterator<Item = usize>) -> Vec<(usize, usize)> {
    let mut counts: Vec<usize> = Vec::new();
    for d in degrees {
        if d >= counts.len() {
            counts.resize(d + 1, 0);
        }
        counts[d] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .filter(|&(_, c)| c > 0)
        .collect()
}

impl GraphStats {
    /// Flat `key=value` report.
    pub fn to_report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# avg_clustering: mean over all nodes of the undirected projection; nodes with undirected degree < 2 contribute 0");
        let _ = writeln!(s, "nodes={}", self.nodes);
        let _ = writeln!(s, "edges={}", self.edges);
        let _ = writeln!(s, "weak_components={}", self.weak_components);
        let _ = writeln!(s, "avg_clustering={}", self.avg_clustering);
        let _ = writeln!(s, "clustering_eligible_nodes={}", self.clustering_eligible_nodes);
        let max_out = self.out_degree_hist.last().map_or(0, |h| h.0);
        let max_in = self.in_degree_hist.last().map_or(0, |h| h.0);
        let _ = writeln!(s, "max_out_degree={max_out}");
        let _ = writeln!(s, "max_in_degree={max_in}");
        s
    }

    pub fn histogram_csv(hist: &[(usize, usize)]) -> String {
        let mut s = String::from("degree,count\n");
        for (d, c) in hist {
            let _ = writeln!(s, "{d},{c}");
        }
        s
    }
}

const MAGIC: &[u8; 4] = b"CFG1";
const VERSION: u32 = 1;

/// Binary layout, all integers little-endian:
///
/// ```text
/// "CFG1" | version u32 | |V| u64 | |E| u64
/// |V| x (len u32, utf-8 bytes)
/// out offsets (|V|+1) x u64 | out targets |E| x u32
/// in offsets  (|V|+1) x u64 | in targets  |E| x u32
/// ```
pub fn save_graph(g: &InfluenceGraph, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(32 + g.edge_count() * 16);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(g.node_count() as u64).to_le_bytes());
    buf.extend_from_slice(&(g.edge_count() as u64).to_le_bytes());
    for u in &g.uids {
        buf.extend_from_slice(&(u.len() as u32).to_le_bytes());
        buf.extend_from_slice(u.as_bytes());
    }
    for (offsets, targets) in [
        (&g.out_offsets, &g.out_targets),
        (&g.in_offsets, &g.in_targets),
    ] {
        for &o in offsets {
            buf.extend_from_slice(&(o as u64).to_le_bytes());
        }
        for &t in targets {
            buf.extend_from_slice(&t.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_graph(path: &Path) -> Result<InfluenceGraph> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_graph(&bytes)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Corrupt(format!(
                "truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self, what: &str) -> Result<usize> {
        let v = self.u64()?;
        // Every element takes at least four bytes on disk.
        if v > (self.buf.len() / 4) as u64 {
            return Err(Error::Corrupt(format!("{what} {v} exceeds file size")));
        }
        Ok(v as usize)
    }
}

pub fn decode_graph(bytes: &[u8]) -> Result<InfluenceGraph> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    let magic = c.take(4)?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected CFG1")));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = c.len("node count")?;
    let m = c.len("edge count")?;
    let mut uids = Vec::with_capacity(n);
    for _ in 0..n {
        let len = c.u32()? as usize;
        let s = std::str::from_utf8(c.take(len)?)
            .map_err(|_| Error::Corrupt("uid is not valid UTF-8".into()))?;
        uids.push(s.to_string());
    }
    let read_csr = |c: &mut Cursor| -> Result<(Vec<usize>, Vec<NodeId>)> {
        let offsets = (0..=n).map(|_| c.u64().map(|o| o as usize)).collect::<Result<Vec<_>>>()?;
        let targets = (0..m).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
        Ok((offsets, targets))
    };
    let (out_offsets, out_targets) = read_csr(&mut c)?;
    let (in_offsets, in_targets) = read_csr(&mut c)?;
    if c.pos != bytes.len() {
        return Err(Error::Corrupt(format!(
            "{} trailing bytes",
            bytes.len() - c.pos
        )));
    }
    let mut index = HashMap::with_capacity(n);
    for (i, u) in uids.iter().enumerate() {
        if index.insert(u.clone(), i as NodeId).is_some() {
            return Err(Error::Corrupt(format!("duplicate uid `{u}`")));
        }
    }
    let g = InfluenceGraph {
        uids,
        index,
        out_offsets,
        out_targets,
        in_offsets,
        in_targets,
    };
    g.validate()?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn triangle() -> InfluenceGraph {
        InfluenceGraph::from_edges(
            vec!["a".into(), "b".into(), "c".into()],
            vec![(0, 1), (1, 2), (2, 0)],
        )
    }

    fn three_events() -> Vec<RepostEvent> {
        vec![
            RepostEvent::new("m1", "u1", 0, None),
            RepostEvent::new("m1", "u2", 5, Some("u1")),
            RepostEvent::new("m1", "u3", 9, Some("u2")),
        ]
    }

    fn edge_uids(g: &InfluenceGraph) -> HashSet<(String, String)> {
        g.edges()
            .map(|(a, b)| (g.uid(a).to_string(), g.uid(b).to_string()))
            .collect()
    }

    fn pair(a: &str, b: &str) -> (String, String) {
        (a.to_string(), b.to_string())
    }

    #[test]
    fn parent_mode_follows_parents() {
        let g = build_graph(&three_events(), EdgeSource::Parent);
        assert_eq!(edge_uids(&g), HashSet::from([pair("u1", "u2"), pair("u2", "u3")]));
        let u1 = g.node("u1").unwrap() as usize;
        let u2 = g.node("u2").unwrap();
        assert_eq!(g.out_neighbors(u1).unwrap(), &[u2]);
    }

    #[test]
    fn root_mode_credits_originator() {
        let g = build_graph(&three_events(), EdgeSource::Root);
        assert_eq!(edge_uids(&g), HashSet::from([pair("u1", "u2"), pair("u1", "u3")]));
    }

    #[test]
    fn repeated_pair_is_one_edge() {
        let evs = vec![
            RepostEvent::new("m1", "u1", 0, None),
            RepostEvent::new("m1", "u2", 5, Some("u1")),
            RepostEvent::new("m2", "u1", 10, None),
            RepostEvent::new("m2", "u2", 15, Some("u1")),
        ];
        let g = build_graph(&evs, EdgeSource::Parent);
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn parentless_repost_falls_back_to_root() {
        let evs = vec![
            RepostEvent::new("m1", "u1", 0, None),
            RepostEvent::new("m1", "u2", 5, Some("u1")),
            RepostEvent::new("m1", "u3", 6, None),
        ];
        // u3 is an extra parentless event; it is itself treated as a root.
        let g = build_graph(&evs, EdgeSource::Parent);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.node_count(), 3);
    }

    #[test]
    fn stats_of_empty_graph() {
        let g = InfluenceGraph::from_edges(vec![], vec![]);
        let s = graph_stats(&g);
        assert_eq!((s.nodes, s.edges, s.weak_components), (0, 0, 0));
        assert_eq!(s.avg_clustering, 0.0);
    }

    #[test]
    fn stats_of_triangle() {
        let s = graph_stats(&triangle());
        assert_eq!(s.weak_components, 1);
        assert_eq!(s.avg_clustering, 1.0);
        assert_eq!(s.out_degree_hist, vec![(1, 3)]);
    }

    #[test]
    fn two_disjoint_edges() {
        let g = InfluenceGraph::from_edges(
            (0..4).map(|i| i.to_string()).collect(),
            vec![(0, 1), (2, 3)],
        );
        assert_eq!(graph_stats(&g).weak_components, 2);
    }

    #[test]
    fn neighbor_access() {
        let g = triangle();
        assert_eq!(g.out_neighbors(0).unwrap(), &[1]);
        assert_eq!(g.in_neighbors(0).unwrap(), &[2]);
        assert!(matches!(g.out_neighbors(3), Err(Error::OutOfBounds { .. })));
        let iso = InfluenceGraph::from_edges(vec!["x".into()], vec![]);
        assert!(iso.out_neighbors(0).unwrap().is_empty());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.bin");
        let g = triangle();
        save_graph(&g, &p).unwrap();
        assert_eq!(load_graph(&p).unwrap(), g);
    }

    #[test]
    fn load_rejects_bad_files() {
        assert!(matches!(decode_graph(&[]), Err(Error::Corrupt(_))));
        assert!(matches!(
            decode_graph(b"XXXX\x01\x00\x00\x00"),
            Err(Error::Format(_))
        ));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.bin");
        save_graph(&triangle(), &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        for cut in [5, 12, 20, bytes.len() - 1] {
            assert!(matches!(decode_graph(&bytes[..cut]), Err(Error::Corrupt(_))), "cut {cut}");
        }
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(decode_graph(&v2), Err(Error::Format(_))));
    }
}
