//! Independent reference implementations used by the acceptance suite.
//!
//! Everything here works on plain strings and ordered sets and scans every
//! node; none of it calls the library's graph, snapshot or measure code.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

/// A cascade as seen by the oracle: `(uid, offset)` in adoption order.
pub struct OracleCascade {
    pub adopters: Vec<(String, i64)>,
}

pub struct OracleGraph {
    pub nodes: BTreeSet<String>,
    pub edges: BTreeSet<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSnapshot {
    pub adopters: BTreeSet<String>,
    pub unknown: usize,
    pub snapshot_time: i64,
    pub frontiers: BTreeSet<String>,
    pub lambda_frontiers: BTreeSet<String>,
    pub lambda_nonadopters: BTreeSet<String>,
}

pub fn oracle_snapshot(
    g: &OracleGraph,
    c: &OracleCascade,
    m: usize,
    lambda: i64,
    recency: bool,
) -> OracleSnapshot {
    let first: Vec<&(String, i64)> = c.adopters.iter().take(m).collect();
    let first_uids: BTreeSet<String> = first.iter().map(|a| a.0.clone()).collect();
    let adopters: BTreeSet<String> = first_uids
        .iter()
        .filter(|u| g.nodes.contains(*u))
        .cloned()
        .collect();
    let unknown = first_uids.len() - adopters.len();
    let snapshot_time = first[m - 1].1;
    let offset: HashMap<&str, i64> = first.iter().map(|a| (a.0.as_str(), a.1)).collect();

    let mut frontiers = BTreeSet::new();
    let mut fresh = BTreeSet::new();
    let mut stale = BTreeSet::new();
    for v in &g.nodes {
        if first_uids.contains(v) {
            continue;
        }
        let exposures: Vec<i64> = adopters
            .iter()
            .filter(|u| g.edges.contains(&((*u).clone(), v.clone())))
            .map(|u| offset[u.as_str()])
            .collect();
        let Some(&exposure) = exposures.iter().min() else {
            continue;
        };
        frontiers.insert(v.clone());
        let inside = if recency {
            snapshot_time - exposure <= lambda
        } else {
            exposure <= lambda
        };
        if inside {
            fresh.insert(v.clone());
        } else {
            stale.insert(v.clone());
        }
    }
    OracleSnapshot {
        adopters,
        unknown,
        snapshot_time,
        frontiers,
        lambda_frontiers: fresh,
        lambda_nonadopters: stale,
    }
}

pub fn communities(set: &BTreeSet<String>, member: &BTreeMap<String, usize>) -> BTreeSet<usize> {
    set.iter().map(|u| member[u]).collect()
}

pub fn gini(set: &BTreeSet<String>, member: &BTreeMap<String, usize>) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for u in set {
        *counts.entry(member[u]).or_default() += 1;
    }
    let n = set.len() as f64;
    1.0 - counts.values().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

/// The twelve measures in library field order:
/// k_adopters, k_frontiers, k_nonadopters, gini x3, overlap AF/AN/FN,
/// |F|, |F̄|, avg time.
pub fn oracle_measures(
    s: &OracleSnapshot,
    c: &OracleCascade,
    m: usize,
    member: &BTreeMap<String, usize>,
) -> [f64; 12] {
    let ca = communities(&s.adopters, member);
    let cf = communities(&s.lambda_frontiers, member);
    let cn = communities(&s.lambda_nonadopters, member);
    let avg = if m < 2 {
        0.0
    } else {
        c.adopters[1..m].iter().map(|a| a.1 as f64).sum::<f64>() / (m - 1) as f64
    };
    [
        ca.len() as f64,
        cf.len() as f64,
        cn.len() as f64,
        gini(&s.adopters, member),
        gini(&s.lambda_frontiers, member),
        gini(&s.lambda_nonadopters, member),
        ca.intersection(&cf).count() as f64,
        ca.intersection(&cn).count() as f64,
        cf.intersection(&cn).count() as f64,
        s.lambda_frontiers.len() as f64,
        s.lambda_nonadopters.len() as f64,
        avg,
    ]
}

/// Modularity of an undirected weighted graph given as a symmetric weight
/// map over unordered pairs `(a < b)`; `total` is the sum of all weights.
pub fn pair_modularity(n: usize, w: &BTreeMap<(usize, usize), f64>, labels: &[usize]) -> f64 {
    let total: f64 = w.values().sum();
    let mut deg = vec![0.0; n];
    for (&(a, b), &x) in w {
        deg[a] += x;
        deg[b] += x;
    }
    let k = labels.iter().max().map_or(0, |&x| x + 1);
    let mut inside = vec![0.0; k];
    let mut tot = vec![0.0; k];
    for (&(a, b), &x) in w {
        if labels[a] == labels[b] {
            inside[labels[a]] += x;
        }
    }
    for v in 0..n {
        tot[labels[v]] += deg[v];
    }
    (0..k)
        .map(|c| inside[c] / total - (tot[c] / (2.0 * total)).powi(2))
        .sum()
}

/// Maximum modularity over every partition of `n` nodes, by branch and
/// bound over restricted-growth strings. Exact: a branch is cut only when
/// an upper bound on every completion is below the incumbent.
///
/// Bound for a partial assignment: all weight not yet ruled out of being
/// internal, minus the degree penalty of the assigned nodes alone (adding
/// nodes to a community can only grow its squared degree sum).
pub fn best_modularity(n: usize, w: &BTreeMap<(usize, usize), f64>, seed: &[usize]) -> (f64, Vec<usize>) {
    let total: f64 = w.values().sum();
    let mut adj = vec![Vec::new(); n];
    let mut deg = vec![0.0; n];
    for (&(a, b), &x) in w {
        adj[a].push((b, x));
        adj[b].push((a, x));
        deg[a] += x;
        deg[b] += x;
    }
    struct St<'a> {
        n: usize,
        total: f64,
        adj: &'a [Vec<(usize, f64)>],
        deg: &'a [f64],
        labels: Vec<usize>,
        tot: Vec<f64>,
        best: f64,
        best_labels: Vec<usize>,
    }
    fn go(st: &mut St, v: usize, k: usize, inside: f64, open: f64) {
        let penalty: f64 = st.tot[..k].iter().map(|t| (t / (2.0 * st.total)).powi(2)).sum();
        if v == st.n {
            let q = inside / st.total - penalty;
            if q > st.best + 1e-15 {
                st.best = q;
                st.best_labels = st.labels.clone();
            }
            return;
        }
        if (inside + open) / st.total - penalty <= st.best + 1e-12 {
            return;
        }
        // weight from v to already-assigned nodes, per community
        let mut to = vec![0.0; k + 1];
        let mut back = 0.0;
        for &(u, x) in &st.adj[v] {
            if u < v {
                to[st.labels[u]] += x;
                back += x;
            }
        }
        for c in 0..=k {
            st.labels[v] = c;
            if c == st.tot.len() {
                st.tot.push(0.0);
            }
            st.tot[c] += st.deg[v];
            go(st, v + 1, k.max(c + 1), inside + to[c], open - back);
            st.tot[c] -= st.deg[v];
        }
        st.labels[v] = 0;
    }
    let mut st = St {
        n,
        total,
        adj: &adj,
        deg: &deg,
        labels: vec![0; n],
        tot: Vec::new(),
        best: pair_modularity(n, w, seed) - 1e-12,
        best_labels: seed.to_vec(),
    };
    go(&mut st, 0, 0, 0.0, total);
    (pair_modularity(n, w, &st.best_labels), st.best_labels)
}

/// Spearman rank correlation with average ranks for ties. NaN when either
/// side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
