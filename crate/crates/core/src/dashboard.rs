//! Statistical summaries of a case and of its development history.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::document::CaseDocument;
use crate::evaluate::{evaluate, EvalError, EvalOptions};
use crate::graph::{Phase, Resolution, Severity};
use crate::propagation::Color;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DefeaterCounts {
    pub total: usize,
    pub open: usize,
    pub resolved: usize,
    pub by_resolution: BTreeMap<Resolution, usize>,
    /// Severity as recorded; unset counts as `default`.
    pub by_severity: BTreeMap<Severity, usize>,
    /// Untagged defeaters are counted under `untagged`.
    pub by_phase: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub defeaters: DefeaterCounts,
    pub evidence_accepted: usize,
    pub evidence_pending: usize,
    pub nodes_by_color: BTreeMap<Color, usize>,
}

fn phase_key(phase: Option<Phase>) -> String {
    match phase {
        Some(Phase::Development) => "development",
        Some(Phase::Assessment) => "assessment",
        None => "untagged",
    }
    .to_owned()
}

impl Stats {
    /// Flat metric name → value view, used for deltas and selection.
    pub fn metrics(&self) -> BTreeMap<String, i64> {
        fn key<T: Serialize>(t: &T) -> String {
            serde_json::to_value(t)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default()
        }
        let d = &self.defeaters;
        let mut m = BTreeMap::new();
        m.insert("defeaters.total".to_owned(), d.total as i64);
        m.insert("defeaters.open".to_owned(), d.open as i64);
        m.insert("defeaters.resolved".to_owned(), d.resolved as i64);
        for (r, n) in &d.by_resolution {
            m.insert(format!("defeaters.resolution.{}", key(r)), *n as i64);
        }
        for (s, n) in &d.by_severity {
            m.insert(format!("defeaters.severity.{}", key(s)), *n as i64);
        }
        for (p, n) in &d.by_phase {
            m.insert(format!("defeaters.phase.{p}"), *n as i64);
        }
        m.insert(
            "evidence.accepted".to_owned(),
            self.evidence_accepted as i64,
        );
        m.insert("evidence.pending".to_owned(), self.evidence_pending as i64);
        for (c, n) in &self.nodes_by_color {
            m.insert(format!("nodes.color.{}", key(c)), *n as i64);
        }
        m
    }
}

fn zeroed() -> Stats {
    let resolutions = [
        Resolution::Open,
        Resolution::DefeatedByCounterargument,
        Resolution::AssumptionAdded,
        Resolution::CaseRevised,
        Resolution::AcceptedResidual,
    ];
    Stats {
        defeaters: DefeaterCounts {
            by_resolution: resolutions.iter().map(|&r| (r, 0)).collect(),
            by_severity: Severity::ALL.iter().map(|&s| (s, 0)).collect(),
            by_phase: ["development", "assessment", "untagged"]
                .iter()
                .map(|p| (p.to_string(), 0))
                .collect(),
            ..DefeaterCounts::default()
        },
        nodes_by_color: [Color::Red, Color::Amber, Color::Green]
            .iter()
            .map(|&c| (c, 0))
            .collect(),
        ..Stats::default()
    }
}

/// Counts for one graph of the document: the head, or a snapshot.
pub fn stats(doc: &CaseDocument, opts: &EvalOptions) -> Result<Stats, EvalError> {
    let report = evaluate(doc, opts)?;
    let graph = crate::evaluate::selected_graph(doc, opts.snapshot.as_deref())?;
    let mut s = zeroed();
    for node in graph.nodes().filter(|n| n.is_defeater()) {
        let d = &mut s.defeaters;
        let resolution = node.resolution.unwrap_or(Resolution::Open);
        d.total += 1;
        if resolution.is_open() {
            d.open += 1;
        } else {
            d.resolved += 1;
        }
        *d.by_resolution.entry(resolution).or_default() += 1;
        *d.by_severity.entry(node.effective_severity()).or_default() += 1;
        *d.by_phase.entry(phase_key(node.phase)).or_default() += 1;
    }
    s.evidence_accepted = report.confirmation.accepted.len();
    s.evidence_pending = report.confirmation.pending.len();
    for color in report.confidence.colors.values() {
        *s.nodes_by_color.entry(*color).or_default() += 1;
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotStats {
    pub label: String,
    pub stats: Stats,
    /// Change relative to the previous snapshot; only nonzero metrics.
    pub delta: BTreeMap<String, i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dashboard {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub title: String,
    pub current: Stats,
    pub snapshots: Vec<SnapshotStats>,
    /// Change from the last snapshot to the current case.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub delta_since_last_snapshot: BTreeMap<String, i64>,
}

pub fn metric_delta(before: &Stats, after: &Stats) -> BTreeMap<String, i64> {
    let a = before.metrics();
    let b = after.metrics();
    let mut out = BTreeMap::new();
    for k in a.keys().chain(b.keys()) {
        let d = b.get(k).copied().unwrap_or(0) - a.get(k).copied().unwrap_or(0);
        if d != 0 {
            out.insert(k.clone(), d);
        }
    }
    out
}

pub fn dashboard(doc: &CaseDocument, opts: &EvalOptions) -> Result<Dashboard, EvalError> {
    let head = EvalOptions {
        snapshot: None,
        ..opts.clone()
    };
    let current = stats(doc, &head)?;
    let mut snapshots: Vec<SnapshotStats> = Vec::new();
    for snap in doc.case.snapshots() {
        let o = EvalOptions {
            snapshot: Some(snap.label.clone()),
            ..opts.clone()
        };
        let st = stats(doc, &o)?;
        let delta = snapshots
            .last()
            .map(|prev| metric_delta(&prev.stats, &st))
            .unwrap_or_default();
        snapshots.push(SnapshotStats {
            label: snap.label.clone(),
            stats: st,
            delta,
        });
    }
    let delta_since_last_snapshot = snapshots
        .last()
        .map(|last| metric_delta(&last.stats, &current))
        .unwrap_or_default();
    Ok(Dashboard {
        title: doc.metadata.title.clone(),
        current,
        snapshots,
        delta_since_last_snapshot,
    })
}
