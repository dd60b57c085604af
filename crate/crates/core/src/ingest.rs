//! Repost log parsing, window selection and per-microblog grouping.
//!
//! The on-disk format is a four-column TSV, one event per line:
//!
//! ```text
//! mid<TAB>uid<TAB>ts<TAB>parent_uid
//! ```
//!
//! `ts` is integer seconds since the epoch; an empty `parent_uid` marks the
//! original post of `mid`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RepostEvent {
    pub mid: String,
    pub uid: String,
    pub ts: i64,
    pub parent_uid: Option<String>,
}

impl RepostEvent {
    pub fn new(mid: &str, uid: &str, ts: i64, parent_uid: Option<&str>) -> Self {
        RepostEvent {
            mid: mid.to_string(),
            uid: uid.to_string(),
            ts,
            parent_uid: parent_uid.map(str::to_string),
        }
    }

    pub fn is_root(&self) -> bool {
        self.parent_uid.is_none()
    }
}

/// Half-open timestamp interval `[start_ts, end_ts)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Window {
    pub start_ts: i64,
    pub end_ts: i64,
}

/// Default graph-construction window: 2011-05-01 to 2011-08-01 UTC.
pub const GRAPH_WINDOW: Window = Window {
    start_ts: 1_304_208_000,
    end_ts: 1_312_156_800,
};

/// Default cascade window: 2011-08-01 to 2011-09-01 UTC.
pub const CASCADE_WINDOW: Window = Window {
    start_ts: 1_312_156_800,
    end_ts: 1_314_835_200,
};

impl Window {
    pub fn new(start_ts: i64, end_ts: i64) -> Result<Self> {
        if start_ts >= end_ts {
            return Err(Error::Parameter(format!(
                "window start {start_ts} must be before end {end_ts}"
            )));
        }
        Ok(Window { start_ts, end_ts })
    }

    /// A window covering every representable non-negative timestamp.
    pub fn all() -> Self {
        Window {
            start_ts: 0,
            end_ts: i64::MAX,
        }
    }

    pub fn contains(&self, ts: i64) -> bool {
        self.start_ts <= ts && ts < self.end_ts
    }
}

impl std::str::FromStr for Window {
    type Err = Error;

    /// Parses `start,end`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(',')
            .ok_or_else(|| Error::Parameter(format!("window `{s}` is not `start,end`")))?;
        let parse = |x: &str| {
            x.trim()
                .parse::<i64>()
                .map_err(|_| Error::Parameter(format!("window bound `{x}` is not an integer")))
        };
        Window::new(parse(a)?, parse(b)?)
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.start_ts, self.end_ts)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone)]
pub struct ParseOptions {
    /// Largest tolerated fraction of malformed lines before aborting.
    pub max_error_rate: f64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            max_error_rate: 0.01,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Parsed {
    pub events: Vec<RepostEvent>,
    pub diagnostics: Vec<Diagnostic>,
    /// Non-blank lines seen.
    pub lines: usize,
}

const SHARD_LINES: usize = 1 << 16;

/// Parses a repost log. Blank lines are skipped; malformed lines produce a
/// diagnostic. The whole parse fails if the malformed fraction exceeds
/// `opts.max_error_rate`.
pub fn parse_events<R: BufRead>(mut reader: R, opts: &ParseOptions) -> Result<Parsed> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();

    let shards: Vec<&[(usize, &str)]> = lines.chunks(SHARD_LINES).collect();
    let parsed = par::map(&shards, |shard| {
        let mut events = Vec::with_capacity(shard.len());
        let mut diags = Vec::new();
        for &(no, line) in shard.iter() {
            match parse_line(line) {
                Ok(ev) => events.push(ev),
                Err(message) => diags.push(Diagnostic { line: no, message }),
            }
        }
        (events, diags)
    });

    let mut out = Parsed {
        lines: lines.len(),
        ..Parsed::default()
    };
    for (events, diags) in parsed {
        out.events.extend(events);
        out.diagnostics.extend(diags);
    }
    let bad = out.diagnostics.len();
    if out.lines > 0 && bad as f64 / out.lines as f64 > opts.max_error_rate {
        return Err(Error::TooManyMalformed {
            bad,
            total: out.lines,
            limit: opts.max_error_rate * 100.0,
        });
    }
    Ok(out)
}

fn parse_line(line: &str) -> std::result::Result<RepostEvent, String> {
    let line = line.strip_suffix('\r').unwrap_or(line);
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 3 && cols.len() != 4 {
        return Err(format!("expected 4 tab-separated columns, found {}", cols.len()));
    }
    let (mid, uid) = (cols[0], cols[1]);
    if mid.is_empty() {
        return Err("empty mid".into());
    }
    if uid.is_empty() {
        return Err("empty uid".into());
    }
    let ts: i64 = cols[2]
        .parse()
        .map_err(|_| format!("timestamp `{}` is not an integer", cols[2]))?;
    if ts < 0 {
        return Err(format!("negative timestamp {ts}"));
    }
    let parent = cols.get(3).copied().filter(|p| !p.is_empty());
    Ok(RepostEvent::new(mid, uid, ts, parent))
}

pub fn write_events<W: Write>(mut w: W, events: &[RepostEvent]) -> std::io::Result<()> {
    for e in events {
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            e.mid,
            e.uid,
            e.ts,
            e.parent_uid.as_deref().unwrap_or("")
        )?;
    }
    Ok(())
}

/// Keeps events with `w.start_ts <= ts < w.end_ts`, in input order.
pub fn filter_window(events: &[RepostEvent], w: &Window) -> Vec<RepostEvent> {
    events.iter().filter(|e| w.contains(e.ts)).cloned().collect()
}

#[derive(Debug, Clone, Default)]
pub struct GroupOptions {
    /// Keep cascades without an original-post event, promoting their
    /// earliest event to root.
    pub allow_rootless: bool,
}

/// All events of one microblog after cleaning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventGroup {
    pub mid: String,
    pub root: RepostEvent,
    /// Sorted by `(ts, uid)`; one event per user; never the originator.
    pub reposts: Vec<RepostEvent>,
}

impl EventGroup {
    /// Root followed by reposts.
    pub fn events(&self) -> impl Iterator<Item = &RepostEvent> {
        std::iter::once(&self.root).chain(self.reposts.iter())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GroupReport {
    pub cascades: usize,
    pub duplicates_removed: usize,
    pub self_reposts_removed: usize,
    /// Extra parentless events from users other than the originator; kept
    /// as reposts.
    pub extra_roots: usize,
    /// Reposts stamped before their original post; dropped.
    pub early_reposts_dropped: usize,
    pub rootless_excluded: usize,
    pub rootless_kept: usize,
    pub rootless_mids: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct Grouped {
    /// Ordered by mid.
    pub groups: Vec<EventGroup>,
    pub report: GroupReport,
}

/// Groups events by microblog, sorts them by `(ts, uid)`, drops repeated
/// adoptions by the same user, and resolves the original post.
pub fn group_cascades(events: &[RepostEvent], opts: &GroupOptions) -> Grouped {
    let mut by_mid: BTreeMap<&str, Vec<&RepostEvent>> = BTreeMap::new();
    for e in events {
        by_mid.entry(e.mid.as_str()).or_default().push(e);
    }

    let mut report = GroupReport::default();
    let mut groups = Vec::with_capacity(by_mid.len());
    for (mid, mut evs) in by_mid {
        evs.sort_by(|a, b| (a.ts, &a.uid).cmp(&(b.ts, &b.uid)));

        let root_pos = evs.iter().position(|e| e.is_root());
        let root = match root_pos {
            Some(i) => evs.remove(i).clone(),
            None => {
                report.rootless_mids.push(mid.to_string());
                if !opts.allow_rootless {
                    report.rootless_excluded += 1;
                    continue;
                }
                report.rootless_kept += 1;
                let mut r = evs.remove(0).clone();
                r.parent_uid = None;
                r
            }
        };

        let mut seen: HashSet<&str> = HashSet::with_capacity(evs.len());
        let mut reposts = Vec::with_capacity(evs.len());
        for e in evs {
            if e.uid == root.uid {
                if e.is_root() {
                    report.duplicates_removed += 1;
                } else {
                    report.self_reposts_removed += 1;
                }
                continue;
            }
            if !seen.insert(e.uid.as_str()) {
                report.duplicates_removed += 1;
                continue;
            }
            if e.ts < root.ts {
                report.early_reposts_dropped += 1;
                continue;
            }
            if e.is_root() {
                report.extra_roots += 1;
            }
            reposts.push(e.clone());
        }
        groups.push(EventGroup {
            mid: mid.to_string(),
            root,
            reposts,
        });
    }
    report.cascades = groups.len();
    Grouped { groups, report }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse_str(s: &str) -> Result<Parsed> {
        parse_events(s.as_bytes(), &ParseOptions::default())
    }

    #[test]
    fn parses_root_and_repost() {
        let p = parse_str("m1\tu1\t100\t\nm1\tu2\t160\tu1\n").unwrap();
        assert_eq!(
            p.events,
            vec![
                RepostEvent::new("m1", "u1", 100, None),
                RepostEvent::new("m1", "u2", 160, Some("u1")),
            ]
        );
        assert!(p.diagnostics.is_empty());
    }

    #[test]
    fn empty_input() {
        let p = parse_str("").unwrap();
        assert!(p.events.is_empty());
        assert!(p.diagnostics.is_empty());
    }

    #[test]
    fn bad_timestamp_reports_line_number() {
        let mut text = String::new();
        for i in 0..200 {
            text.push_str(&format!("m{i}\tu{i}\t{i}\t\n"));
        }
        text.push_str("m9\tu9\tnoon\t\n");
        let p = parse_events(text.as_bytes(), &ParseOptions { max_error_rate: 0.01 }).unwrap();
        assert_eq!(p.events.len(), 200);
        assert_eq!(p.diagnostics.len(), 1);
        assert_eq!(p.diagnostics[0].line, 201);
        assert!(p.diagnostics[0].message.contains("noon"));
    }

    #[test]
    fn aborts_over_error_rate() {
        let err = parse_str("m1\tu1\tx\t\nm1\tu2\t5\tu1\n").unwrap_err();
        assert!(matches!(err, Error::TooManyMalformed { bad: 1, total: 2, .. }));
    }

    #[test]
    fn window_is_half_open() {
        let evs: Vec<_> = [50, 100, 150]
            .iter()
            .map(|&t| RepostEvent::new("m", &format!("u{t}"), t, None))
            .collect();
        let w = Window::new(100, 150).unwrap();
        let kept = filter_window(&evs, &w);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].ts, 100);
        assert_eq!(filter_window(&evs, &Window::all()), evs);
        assert!(filter_window(&evs, &Window::new(500, 600).unwrap()).is_empty());
        assert!(Window::new(5, 5).is_err());
        assert_eq!("3,9".parse::<Window>().unwrap(), Window::new(3, 9).unwrap());
    }

    #[test]
    fn groups_interleaved_cascades() {
        let evs = vec![
            RepostEvent::new("m2", "a", 10, None),
            RepostEvent::new("m1", "x", 5, None),
            RepostEvent::new("m2", "c", 30, Some("a")),
            RepostEvent::new("m1", "y", 7, Some("x")),
            RepostEvent::new("m2", "b", 20, Some("a")),
        ];
        let g = group_cascades(&evs, &GroupOptions::default());
        assert_eq!(g.groups.len(), 2);
        assert_eq!(g.groups[0].mid, "m1");
        let m2: Vec<_> = g.groups[1].reposts.iter().map(|e| e.uid.as_str()).collect();
        assert_eq!(m2, vec!["b", "c"]);
    }

    #[test]
    fn second_repost_by_same_user_is_dropped() {
        let evs = vec![
            RepostEvent::new("m1", "u1", 0, None),
            RepostEvent::new("m1", "u2", 5, Some("u1")),
            RepostEvent::new("m1", "u2", 9, Some("u1")),
        ];
        let g = group_cascades(&evs, &GroupOptions::default());
        assert_eq!(g.report.duplicates_removed, 1);
        assert_eq!(g.groups[0].reposts.len(), 1);
        assert_eq!(g.groups[0].reposts[0].ts, 5);
    }

    #[test]
    fn rootless_cascade_is_flagged_and_excluded() {
        let evs = vec![
            RepostEvent::new("m1", "u2", 5, Some("u1")),
            RepostEvent::new("m1", "u3", 7, Some("u2")),
            RepostEvent::new("m1", "u4", 9, Some("u2")),
        ];
        let g = group_cascades(&evs, &GroupOptions::default());
        assert!(g.groups.is_empty());
        assert_eq!(g.report.rootless_excluded, 1);
        assert_eq!(g.report.rootless_mids, vec!["m1".to_string()]);

        let g = group_cascades(&evs, &GroupOptions { allow_rootless: true });
        assert_eq!(g.groups.len(), 1);
        assert_eq!(g.groups[0].root.uid, "u2");
        assert_eq!(g.groups[0].reposts.len(), 2);
        assert_eq!(g.report.rootless_kept, 1);
    }

    #[test]
    fn originator_self_repost_ignored() {
        let evs = vec![
            RepostEvent::new("m1", "u1", 0, None),
            RepostEvent::new("m1", "u1", 3, Some("u2")),
            RepostEvent::new("m1", "u2", 2, Some("u1")),
        ];
        let g = group_cascades(&evs, &GroupOptions::default());
        assert_eq!(g.report.self_reposts_removed, 1);
        assert_eq!(g.groups[0].reposts.len(), 1);
    }

    fn arb_event() -> impl Strategy<Value = RepostEvent> {
        (
            "[a-z0-9]{1,6}",
            "[a-z0-9]{1,6}",
            0i64..1_000_000,
            proptest::option::of("[a-z0-9]{1,6}"),
        )
            .prop_map(|(m, u, t, p)| RepostEvent {
                mid: m,
                uid: u,
                ts: t,
                parent_uid: p,
            })
    }

    proptest! {
        #[test]
        fn parse_serialize_round_trip(evs in proptest::collection::vec(arb_event(), 0..50)) {
            let mut buf = Vec::new();
            write_events(&mut buf, &evs).unwrap();
            let p = parse_events(buf.as_slice(), &ParseOptions::default()).unwrap();
            prop_assert_eq!(p.events, evs);
        }

        #[test]
        fn groups_are_ordered_and_unique(
            evs in proptest::collection::vec(
                ("m[0-3]", "u[0-9]", 0i64..50, proptest::option::of("u[0-9]"))
                    .prop_map(|(m, u, t, p)| RepostEvent { mid: m, uid: u, ts: t, parent_uid: p }),
                0..80)
        ) {
            let g = group_cascades(&evs, &GroupOptions { allow_rootless: true });
            for grp in &g.groups {
                let all: Vec<&RepostEvent> = grp.events().collect();
                let mut uids = HashSet::new();
                for e in &all {
                    prop_assert!(uids.insert(e.uid.clone()));
                    prop_assert!(e.ts >= grp.root.ts);
                }
                for w in grp.reposts.windows(2) {
                    prop_assert!((w[0].ts, &w[0].uid) < (w[1].ts, &w[1].uid));
                }
            }
        }
    }
}
