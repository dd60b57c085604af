//! Structural-diversity measures over cascade snapshots and the feature
//! matrices built from them.

use std::fmt::Write as _;

use serde::Serialize;

use crate::cascade::{snapshot_series, Cascade, CascadeSnapshot, SnapshotParams};
use crate::community::{CommunityId, CommunityPartition};
use crate::error::{Error, Result};
use crate::graph::{InfluenceGraph, NodeId};
use crate::par;

fn community_set(nodes: &[NodeId], p: &CommunityPartition) -> Vec<CommunityId> {
    let mut cs: Vec<CommunityId> = nodes.iter().map(|&v| p.of(v)).collect();
    cs.sort_unstable();
    cs.dedup();
    cs
}

/// Number of distinct communities represented in `nodes`.
pub fn count_communities(nodes: &[NodeId], p: &CommunityPartition) -> usize {
    community_set(nodes, p).len()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Impurity {
    pub value: f64,
    /// Set when the node set was empty and the value is the 0 convention.
    pub degenerate: bool,
}

/// Gini impurity `1 - sum_i (|C_i ∩ V'| / |V'|)^2` of the community
/// distribution of `nodes`.
pub fn gini_impurity(nodes: &[NodeId], p: &CommunityPartition) -> Impurity {
    if nodes.is_empty() {
        return Impurity {
            value: 0.0,
            degenerate: true,
        };
    }
    let mut cs: Vec<CommunityId> = nodes.iter().map(|&v| p.of(v)).collect();
    cs.sort_unstable();
    let mut sum_sq: u64 = 0;
    let mut run = 1u64;
    for w in cs.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            sum_sq += run * run;
            run = 1;
        }
    }
    sum_sq += run * run;
    let n = nodes.len() as f64;
    Impurity {
        value: 1.0 - sum_sq as f64 / (n * n),
        degenerate: false,
    }
}

/// Number of communities represented in both sets.
pub fn overlap(a: &[NodeId], b: &[NodeId], p: &CommunityPartition) -> usize {
    let (ca, cb) = (community_set(a, p), community_set(b, p));
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < ca.len() && j < cb.len() {
        match ca[i].cmp(&cb[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Mean adoption offset, in seconds, of the reposters among the first `m`
/// adopters. The originator is left out of both sum and count.
pub fn avg_time_to_adoption(c: &Cascade, m: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::Precondition(format!(
            "average time to adoption needs m >= 2, got {m}"
        )));
    }
    if m > c.final_size() {
        return Err(Error::Precondition(format!(
            "m = {m} exceeds final size {}",
            c.final_size()
        )));
    }
    let sum: i64 = c.adopters[1..m].iter().map(|a| a.offset).sum();
    Ok(sum as f64 / (m - 1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureSet {
    pub m: usize,
    pub k_adopters: usize,
    pub k_frontiers: usize,
    pub k_nonadopters: usize,
    pub gini_adopters: f64,
    pub gini_frontiers: f64,
    pub gini_nonadopters: f64,
    pub overlap_af: usize,
    pub overlap_an: usize,
    pub overlap_fn: usize,
    pub size_frontiers: usize,
    pub size_nonadopters: usize,
    /// Seconds.
    pub avg_time: f64,
    /// Which of (adopters, λ-frontiers, λ-non-adopters) were empty.
    pub degenerate: [bool; 3],
}

/// Names of the per-snapshot measures in report order.
pub const MEASURE_NAMES: [&str; 12] = [
    "k_adopters",
    "k_frontiers",
    "k_nonadopters",
    "gini_adopters",
    "gini_frontiers",
    "gini_nonadopters",
    "overlap_af",
    "overlap_an",
    "overlap_fn",
    "size_frontiers",
    "size_nonadopters",
    "avg_time_min",
];

impl MeasureSet {
    /// Values in [`MEASURE_NAMES`] order; average time in minutes.
    pub fn report_values(&self) -> [f64; 12] {
        [
            self.k_adopters as f64,
            self.k_frontiers as f64,
            self.k_nonadopters as f64,
            self.gini_adopters,
            self.gini_frontiers,
            self.gini_nonadopters,
            self.overlap_af as f64,
            self.overlap_an as f64,
            self.overlap_fn as f64,
            self.size_frontiers as f64,
            self.size_nonadopters as f64,
            self.avg_time / 60.0,
        ]
    }
}

/// Computes every measure of a snapshot. Adopter measures only see adopters
/// present in the graph. A single-adopter snapshot has average time 0.
pub fn measure_snapshot(s: &CascadeSnapshot, c: &Cascade, p: &CommunityPartition) -> MeasureSet {
    let ga = gini_impurity(&s.adopters, p);
    let gf = gini_impurity(&s.lambda_frontiers, p);
    let gn = gini_impurity(&s.lambda_nonadopters, p);
    MeasureSet {
        m: s.m,
        k_adopters: count_communities(&s.adopters, p),
        k_frontiers: count_communities(&s.lambda_frontiers, p),
        k_nonadopters: count_communities(&s.lambda_nonadopters, p),
        gini_adopters: ga.value,
        gini_frontiers: gf.value,
        gini_nonadopters: gn.value,
        overlap_af: overlap(&s.adopters, &s.lambda_frontiers, p),
        overlap_an: overlap(&s.adopters, &s.lambda_nonadopters, p),
        overlap_fn: overlap(&s.lambda_frontiers, &s.lambda_nonadopters, p),
        size_frontiers: s.lambda_frontiers.len(),
        size_nonadopters: s.lambda_nonadopters.len(),
        avg_time: avg_time_to_adoption(c, s.m).unwrap_or(0.0),
        degenerate: [ga.degenerate, gf.degenerate, gn.degenerate],
    }
}

/// Measures of one cascade at each size it reached.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CascadeMeasures {
    pub mid: String,
    pub final_size: usize,
    pub by_size: Vec<MeasureSet>,
}

impl CascadeMeasures {
    pub fn at(&self, m: usize) -> Option<&MeasureSet> {
        self.by_size.iter().find(|s| s.m == m)
    }
}

/// Snapshots and measures every cascade, in input order.
pub fn extract_measures(
    cascades: &[Cascade],
    g: &InfluenceGraph,
    p: &CommunityPartition,
    sizes: &[usize],
    params: &SnapshotParams,
) -> Vec<CascadeMeasures> {
    par::map(cascades, |c| CascadeMeasures {
        mid: c.mid.clone(),
        final_size: c.final_size(),
        by_size: snapshot_series(c, g, sizes, params)
            .iter()
            .map(|s| measure_snapshot(s, c, p))
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FeatureGroup {
    /// Structural diversity plus average time at each size.
    #[serde(rename = "A_m")]
    StructuralDiversity,
    /// Average time only (baseline).
    #[serde(rename = "C_m")]
    AvgTimeBaseline,
}

impl FeatureGroup {
    pub fn tag(self) -> &'static str {
        match self {
            FeatureGroup::StructuralDiversity => "A_m",
            FeatureGroup::AvgTimeBaseline => "C_m",
        }
    }

    pub fn default_sizes(self) -> Vec<usize> {
        match self {
            FeatureGroup::StructuralDiversity => vec![30, 50],
            FeatureGroup::AvgTimeBaseline => vec![50],
        }
    }
}

impl std::str::FromStr for FeatureGroup {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "A_m" | "a" => Ok(FeatureGroup::StructuralDiversity),
            "C" | "C_m" | "c" => Ok(FeatureGroup::AvgTimeBaseline),
            _ => Err(Error::Parameter(format!("unknown feature group `{s}`"))),
        }
    }
}

const GROUP_A_COLUMNS: [&str; 11] = [
    "kfront", "knonad", "gini_adopt", "gini_front", "gini_nonad", "ovl_af", "ovl_an", "ovl_fn",
    "size_front", "size_nonad", "avgtime",
];

fn group_a_values(ms: &MeasureSet) -> [f64; 11] {
    [
        ms.k_frontiers as f64,
        ms.k_nonadopters as f64,
        ms.gini_adopters,
        ms.gini_frontiers,
        ms.gini_nonadopters,
        ms.overlap_af as f64,
        ms.overlap_an as f64,
        ms.overlap_fn as f64,
        ms.size_frontiers as f64,
        ms.size_nonadopters as f64,
        ms.avg_time,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureRow {
    pub mid: String,
    pub final_size: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureMatrix {
    pub group: FeatureGroup,
    pub names: Vec<String>,
    pub rows: Vec<FeatureRow>,
    /// Cascades dropped for not reaching every requested size.
    pub excluded: usize,
}

impl FeatureMatrix {
    pub fn arity(&self) -> usize {
        self.names.len()
    }

    /// `mid,final_size,label,<features...>` with `label` = 1 iff
    /// `final_size >= threshold`.
    pub fn to_csv(&self, threshold: usize) -> String {
        let mut s = String::from("mid,final_size,label");
        for n in &self.names {
            s.push(',');
            s.push_str(n);
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(
                s,
                "{},{},{}",
                r.mid,
                r.final_size,
                u8::from(r.final_size >= threshold)
            );
            for v in &r.values {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    /// Reads a matrix written by [`FeatureMatrix::to_csv`]; the label column
    /// is ignored since labels are always rederived from final size.
    pub fn from_csv(text: &str, group: FeatureGroup) -> Result<FeatureMatrix> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty features file".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 3 || cols[..3] != ["mid", "final_size", "label"] {
            return Err(Error::Format(
                "features header must start with mid,final_size,label".into(),
            ));
        }
        let names: Vec<String> = cols[3..].iter().map(|s| s.to_string()).collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != cols.len() {
                return Err(Error::Format(format!(
                    "row {}: expected {} fields, found {}",
                    i + 2,
                    cols.len(),
                    f.len()
                )));
            }
            let bad = |what: &str| Error::Format(format!("row {}: bad {what}", i + 2));
            let final_size = f[1].parse().map_err(|_| bad("final_size"))?;
            let values = f[3..]
                .iter()
                .map(|v| v.parse::<f64>().map_err(|_| bad("feature value")))
                .collect::<Result<Vec<_>>>()?;
            rows.push(FeatureRow {
                mid: f[0].to_string(),
                final_size,
                values,
            });
        }
        Ok(FeatureMatrix {
            group,
            names,
            rows,
            excluded: 0,
        })
    }
}

/// Builds the feature matrix for `group` at `sizes` (size-major columns).
/// Cascades missing any requested size are excluded and counted.
pub fn assemble_features(
    measures: &[CascadeMeasures],
    group: FeatureGroup,
    sizes: &[usize],
) -> FeatureMatrix {
    let names: Vec<String> = match group {
        FeatureGroup::StructuralDiversity => sizes
            .iter()
            .flat_map(|m| GROUP_A_COLUMNS.iter().map(move |c| format!("{c}_m{m}")))
            .collect(),
        FeatureGroup::AvgTimeBaseline => sizes.iter().map(|m| format!("avgtime_m{m}")).collect(),
    };
    let mut rows = Vec::with_capacity(measures.len());
    let mut excluded = 0;
    'cascades: for cm in measures {
        let mut values = Vec::with_capacity(names.len());
        for &m in sizes {
            let Some(ms) = cm.at(m) else {
                excluded += 1;
                continue 'cascades;
            };
            match group {
                FeatureGroup::StructuralDiversity => values.extend(group_a_values(ms)),
                FeatureGroup::AvgTimeBaseline => values.push(ms.avg_time),
            }
        }
        rows.push(FeatureRow {
            mid: cm.mid.clone(),
            final_size: cm.final_size,
            values,
        });
    }
    FeatureMatrix {
        group,
        names,
        rows,
        excluded,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub measure: &'static str,
    pub m: usize,
    pub class: &'static str,
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Five-number summary and mean of each measure, per size and class
/// (`viral` iff final size >= `threshold`). Average time is in minutes.
pub fn measurement_report(
    measures: &[CascadeMeasures],
    threshold: usize,
    sizes: &[usize],
) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for (mi, &measure) in MEASURE_NAMES.iter().enumerate() {
        for &m in sizes {
            for (class, viral) in [("nonviral", false), ("viral", true)] {
                let mut vals: Vec<f64> = measures
                    .iter()
                    .filter(|c| (c.final_size >= threshold) == viral)
                    .filter_map(|c| c.at(m))
                    .map(|ms| ms.report_values()[mi])
                    .collect();
                if vals.is_empty() {
                    continue;
                }
                vals.sort_by(f64::total_cmp);
                rows.push(ReportRow {
                    measure,
                    m,
                    class,
                    count: vals.len(),
                    min: vals[0],
                    q1: quantile(&vals, 0.25),
                    median: quantile(&vals, 0.5),
                    q3: quantile(&vals, 0.75),
                    max: vals[vals.len() - 1],
                    mean: vals.iter().sum::<f64>() / vals.len() as f64,
                });
            }
        }
    }
    rows
}

/// Cascades that reached each size, and how many of them are viral.
pub fn sample_counts(measures: &[CascadeMeasures], sizes: &[usize], threshold: usize) -> String {
    let mut s = String::from("m,samples,viral\n");
    for &m in sizes {
        let reached = measures.iter().filter(|c| c.at(m).is_some());
        let (n, v) = reached.fold((0, 0), |(n, v), c| (n + 1, v + usize::from(c.final_size >= threshold)));
        let _ = writeln!(s, "{m},{n},{v}");
    }
    s
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut s = String::from("measure,m,class,min,q1,median,q3,max,mean\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.measure, r.m, r.class, r.min, r.q1, r.median, r.q3, r.max, r.mean
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::{build_cascade_from_events, snapshot, Adopter};
    use crate::ingest::RepostEvent;
    use proptest::prelude::*;

    fn partition(labels: &[usize]) -> (InfluenceGraph, CommunityPartition) {
        let g = InfluenceGraph::from_edges(
            (0..labels.len()).map(|i| format!("n{i}")).collect(),
            vec![],
        );
        // Relabelling keeps the grouping, which is all these tests rely on.
        let p = CommunityPartition::from_assignment(&g, labels, 1.0);
        (g, p)
    }

    #[test]
    fn count_cases() {
        let (_, p) = partition(&[0, 1, 1, 4, 3, 3, 3, 3, 3]);
        assert_eq!(count_communities(&[], &p), 0);
        assert_eq!(count_communities(&[4, 5, 6, 7, 8], &p), 1);
        assert_eq!(count_communities(&[0, 1, 2, 3], &p), 3);
    }

    #[test]
    fn gini_cases() {
        let (_, p) = partition(&[0, 0, 0, 1, 1, 2]);
        assert_eq!(gini_impurity(&[0, 1, 2], &p).value, 0.0);
        assert_eq!(gini_impurity(&[0, 1, 3, 4], &p).value, 0.5);
        assert_eq!(gini_impurity(&[0, 1, 2, 3], &p).value, 0.375);
        let e = gini_impurity(&[], &p);
        assert_eq!(e.value, 0.0);
        assert!(e.degenerate);
    }

    #[test]
    fn overlap_cases() {
        let (_, p) = partition(&[1, 2, 2, 3, 4]);
        // nodes 0,1 -> {1,2}; nodes 2,3 -> {2,3}
        assert_eq!(overlap(&[0, 1], &[2, 3], &p), 1);
        assert_eq!(overlap(&[0], &[4], &p), 0);
        assert_eq!(overlap(&[0, 1, 3], &[0, 1, 3], &p), 3);
    }

    fn cascade_with_offsets(offsets: &[i64]) -> Cascade {
        Cascade {
            mid: "m".into(),
            root_ts: 0,
            adopters: offsets
                .iter()
                .enumerate()
                .map(|(i, &o)| Adopter {
                    uid: format!("u{i}"),
                    node: None,
                    offset: o,
                })
                .collect(),
        }
    }

    #[test]
    fn avg_time_cases() {
        assert_eq!(avg_time_to_adoption(&cascade_with_offsets(&[0, 60, 120]), 3).unwrap(), 90.0);
        assert_eq!(avg_time_to_adoption(&cascade_with_offsets(&[0, 0, 0]), 3).unwrap(), 0.0);
        assert_eq!(avg_time_to_adoption(&cascade_with_offsets(&[0, 45]), 2).unwrap(), 45.0);
        assert!(avg_time_to_adoption(&cascade_with_offsets(&[0, 45]), 1).is_err());
    }

    #[test]
    fn measures_on_four_node_fixture() {
        let g = InfluenceGraph::from_edges(
            ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect(),
            vec![(0, 1), (0, 2), (1, 3)],
        );
        let p = CommunityPartition::from_assignment(&g, &[0, 0, 1, 1], 1.0);
        let evs = vec![
            RepostEvent::new("m", "a", 0, None),
            RepostEvent::new("m", "b", 600, Some("a")),
        ];
        let c = build_cascade_from_events(&evs, &g, false).unwrap();
        let s = snapshot(&c, &g, 2, &SnapshotParams::default()).unwrap();
        let ms = measure_snapshot(&s, &c, &p);
        assert_eq!(ms.k_adopters, 1);
        assert_eq!(ms.k_frontiers, 1);
        assert_eq!(ms.overlap_af, 0);
        assert_eq!(ms.gini_frontiers, 0.0);
        assert_eq!(ms.k_nonadopters, 0);
        assert_eq!(ms.gini_nonadopters, 0.0);
        assert!(ms.degenerate[2]);
        assert_eq!((ms.overlap_an, ms.overlap_fn), (0, 0));

        let s1 = snapshot(&c, &g, 1, &SnapshotParams::default()).unwrap();
        assert_eq!(measure_snapshot(&s1, &c, &p).gini_adopters, 0.0);
    }

    fn fake_measures(mid: &str, final_size: usize, sizes: &[usize]) -> CascadeMeasures {
        CascadeMeasures {
            mid: mid.into(),
            final_size,
            by_size: sizes
                .iter()
                .map(|&m| MeasureSet {
                    m,
                    k_adopters: 1,
                    k_frontiers: 2,
                    k_nonadopters: 3,
                    gini_adopters: 0.0,
                    gini_frontiers: 0.5,
                    gini_nonadopters: 0.25,
                    overlap_af: 1,
                    overlap_an: 1,
                    overlap_fn: 2,
                    size_frontiers: 7,
                    size_nonadopters: 9,
                    avg_time: 120.0,
                    degenerate: [false; 3],
                })
                .collect(),
        }
    }

    #[test]
    fn assemble_groups() {
        let ms = vec![
            fake_measures("a", 60, &[10, 30, 50]),
            fake_measures("b", 40, &[10, 30]),
        ];
        let c = assemble_features(&ms, FeatureGroup::AvgTimeBaseline, &[50]);
        assert_eq!(c.names, vec!["avgtime_m50"]);
        assert_eq!(c.rows.len(), 1);
        assert_eq!(c.excluded, 1);
        let a = assemble_features(&ms, FeatureGroup::StructuralDiversity, &[30, 50]);
        assert_eq!(a.arity(), 22);
        assert_eq!(a.names[0], "kfront_m30");
        assert_eq!(a.names[21], "avgtime_m50");
        assert_eq!(a.excluded, 1);
        assert!(a.rows.iter().all(|r| r.values.len() == 22));

        let csv = a.to_csv(50);
        assert!(csv.starts_with("mid,final_size,label,kfront_m30,"));
        assert!(csv.contains("\na,60,1,2,3,0,0.5,"));
        let back = FeatureMatrix::from_csv(&csv, FeatureGroup::StructuralDiversity).unwrap();
        assert_eq!(back.rows, a.rows);
    }

    #[test]
    fn sample_counts_per_size() {
        let ms = vec![
            fake_measures("a", 40, &[10, 30]),
            fake_measures("b", 600, &[10, 30, 50]),
            fake_measures("c", 12, &[10]),
        ];
        assert_eq!(
            sample_counts(&ms, &[10, 30, 50, 100], 500),
            "m,samples,viral\n10,3,1\n30,2,1\n50,1,1\n100,0,0\n"
        );
    }

    #[test]
    fn report_quartiles() {
        let ms = vec![fake_measures("a", 600, &[10]), fake_measures("b", 20, &[10]), fake_measures("c", 30, &[10])];
        let rows = measurement_report(&ms, 500, &[10]);
        let viral = rows.iter().find(|r| r.measure == "k_frontiers" && r.class == "viral").unwrap();
        assert_eq!((viral.min, viral.q1, viral.median, viral.q3, viral.max), (2.0, 2.0, 2.0, 2.0, 2.0));
        let t = rows.iter().find(|r| r.measure == "avg_time_min" && r.class == "nonviral").unwrap();
        assert_eq!(t.q1, t.q3);
        assert_eq!(t.mean, 2.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.25), 1.75);
        let csv = report_csv(&rows);
        assert!(csv.starts_with("measure,m,class,min,q1,median,q3,max,mean\n"));
    }

    proptest! {
        #[test]
        fn gini_bounded_by_community_count(labels in proptest::collection::vec(0usize..6, 1..40)) {
            let (_, p) = partition(&labels);
            let nodes: Vec<NodeId> = (0..labels.len() as NodeId).collect();
            let k = count_communities(&nodes, &p) as f64;
            let gi = gini_impurity(&nodes, &p).value;
            prop_assert!((0.0..1.0).contains(&gi));
            prop_assert!(gi <= 1.0 - 1.0 / k + 1e-12);
            let sizes = p.sizes();
            let equal = sizes.iter().all(|&s| s == sizes[0]);
            prop_assert_eq!(equal, (gi - (1.0 - 1.0 / k)).abs() < 1e-12);
        }

        #[test]
        fn overlap_symmetric_and_bounded(
            labels in proptest::collection::vec(0usize..8, 2..40),
            split in 0usize..40,
        ) {
            let (_, p) = partition(&labels);
            let n = labels.len() as NodeId;
            let cut = (split as NodeId).min(n);
            let a: Vec<NodeId> = (0..cut).collect();
            let b: Vec<NodeId> = (cut / 2..n).collect();
            prop_assert_eq!(overlap(&a, &b, &p), overlap(&b, &a, &p));
            prop_assert_eq!(overlap(&a, &a, &p), count_communities(&a, &p));
            prop_assert!(overlap(&a, &b, &p) <= count_communities(&a, &p).min(count_communities(&b, &p)));
        }
    }
}
