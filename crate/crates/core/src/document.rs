//! The JSON case file: parsing with diagnostics, canonical serialization.
//!
//! Fields this version does not know are kept and written back unchanged.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::confirmation::{AcceptancePolicy, EvidenceAssessment};
use crate::defeaters::ResidualDoubtLedger;
use crate::graph::{BlockKind, CaseGraph, GraphError, Link, Node, NodeId, Snapshot};
use crate::propagation::{ConfidenceAssignment, Origin, PropagationConfig};

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub name: String,
    pub uri: String,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub title: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub authors: Vec<String>,
    /// Theories, models and evidence assemblies, by URI only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub references: Vec<Reference>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

/// A human decision on an evidence step that overrides the measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceDecision {
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawGraph {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    top_claim: Option<NodeId>,
    #[serde(default)]
    nodes: Vec<Node>,
    #[serde(default)]
    links: Vec<Link>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    snapshots: Vec<RawSnapshot>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawSnapshot {
    label: String,
    graph: RawGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawDocument {
    format_version: String,
    #[serde(default)]
    metadata: Metadata,
    case: RawGraph,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    assessments: BTreeMap<NodeId, EvidenceAssessment>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    evidence_decisions: BTreeMap<NodeId, EvidenceDecision>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    confidence_inputs: Vec<ConfidenceAssignment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    propagation: Option<PropagationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    acceptance: Option<AcceptancePolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ledger: Option<ResidualDoubtLedger>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    defeated_value: Option<f64>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

/// One self-contained case: graph, assessments, inputs and settings.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseDocument {
    pub metadata: Metadata,
    pub case: CaseGraph,
    pub assessments: BTreeMap<NodeId, EvidenceAssessment>,
    pub evidence_decisions: BTreeMap<NodeId, EvidenceDecision>,
    /// Sorted by node id.
    pub confidence_inputs: Vec<ConfidenceAssignment>,
    pub propagation: Option<PropagationConfig>,
    pub acceptance: Option<AcceptancePolicy>,
    pub ledger: Option<ResidualDoubtLedger>,
    /// Value given to defeated nodes when defeaters are applied.
    pub defeated_value: Option<f64>,
    case_extra: BTreeMap<String, Value>,
    snapshot_extra: BTreeMap<String, BTreeMap<String, Value>>,
    extra: BTreeMap<String, Value>,
}

impl CaseDocument {
    pub fn new(case: CaseGraph) -> Self {
        Self {
            metadata: Metadata::default(),
            case,
            assessments: BTreeMap::new(),
            evidence_decisions: BTreeMap::new(),
            confidence_inputs: Vec::new(),
            propagation: None,
            acceptance: None,
            ledger: None,
            defeated_value: None,
            case_extra: BTreeMap::new(),
            snapshot_extra: BTreeMap::new(),
            extra: BTreeMap::new(),
        }
    }

    /// Unknown top-level fields.
    pub fn extra(&self) -> &BTreeMap<String, Value> {
        &self.extra
    }

    pub fn ledger_or_default(&self) -> ResidualDoubtLedger {
        self.ledger.clone().unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    Syntax,
    Schema,
    Invariant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
    /// Path inside the document, e.g. `case.links[3]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<String>,
}

impl Diagnostic {
    fn invariant(location: String, rule: &str, message: impl Into<String>) -> Self {
        Self {
            kind: DiagnosticKind::Invariant,
            message: message.into(),
            line: None,
            column: None,
            location: Some(location),
            rule: Some(rule.to_owned()),
        }
    }

    fn schema(message: impl Into<String>) -> Self {
        Self {
            kind: DiagnosticKind::Schema,
            message: message.into(),
            line: None,
            column: None,
            location: None,
            rule: None,
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            DiagnosticKind::Syntax => "syntax error",
            DiagnosticKind::Schema => "schema error",
            DiagnosticKind::Invariant => "invariant violation",
        };
        write!(f, "{kind}")?;
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, " at line {l}, column {c}")?;
        }
        if let Some(loc) = &self.location {
            write!(f, " at {loc}")?;
        }
        if let Some(rule) = &self.rule {
            write!(f, " [{rule}]")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}", .diagnostics.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
pub struct ParseError {
    pub diagnostics: Vec<Diagnostic>,
}

impl ParseError {
    pub fn kind(&self) -> DiagnosticKind {
        self.diagnostics
            .iter()
            .map(|d| d.kind)
            .min()
            .unwrap_or(DiagnosticKind::Schema)
    }
}

pub fn parse(bytes: &[u8]) -> Result<CaseDocument, ParseError> {
    let raw: RawDocument = serde_json::from_slice(bytes).map_err(|e| {
        let kind = match e.classify() {
            serde_json::error::Category::Data => DiagnosticKind::Schema,
            _ => DiagnosticKind::Syntax,
        };
        ParseError {
            diagnostics: vec![Diagnostic {
                kind,
                message: e.to_string(),
                line: Some(e.line()),
                column: Some(e.column()),
                location: None,
                rule: None,
            }],
        }
    })?;
    build(raw)
}

pub fn parse_str(text: &str) -> Result<CaseDocument, ParseError> {
    parse(text.as_bytes())
}

fn build_graph(raw: &RawGraph, at: &str, out: &mut Vec<Diagnostic>) -> CaseGraph {
    let mut g = CaseGraph::new();
    let err = |e: &GraphError, loc: String| Diagnostic::invariant(loc, e.rule(), e.to_string());
    for (i, node) in raw.nodes.iter().enumerate() {
        if let Err(e) = g.add_node(node.clone()) {
            out.push(err(&e, format!("{at}.nodes[{i}]")));
        }
    }
    match &raw.top_claim {
        None => out.push(Diagnostic::invariant(
            format!("{at}.top_claim"),
            "top-claim",
            "the case names no top claim",
        )),
        Some(top) => {
            if let Err(e) = g.set_top_claim(top) {
                out.push(err(&e, format!("{at}.top_claim")));
            }
        }
    }
    for (i, link) in raw.links.iter().enumerate() {
        if let Err(e) = g.add_link(link.clone()) {
            out.push(err(&e, format!("{at}.links[{i}]")));
        }
    }
    g
}

fn build(raw: RawDocument) -> Result<CaseDocument, ParseError> {
    if raw.format_version != FORMAT_VERSION {
        return Err(ParseError {
            diagnostics: vec![Diagnostic::schema(format!(
                "unsupported format_version `{}` (this reader handles `{FORMAT_VERSION}`)",
                raw.format_version
            ))],
        });
    }
    let mut diags = Vec::new();
    let mut case = build_graph(&raw.case, "case", &mut diags);
    let mut snapshot_extra = BTreeMap::new();
    for (i, snap) in raw.case.snapshots.iter().enumerate() {
        let at = format!("case.snapshots[{i}].graph");
        if !snap.graph.snapshots.is_empty() {
            diags.push(Diagnostic::invariant(
                at.clone(),
                "flat-snapshots",
                "snapshots cannot nest",
            ));
        }
        let graph = build_graph(&snap.graph, &at, &mut diags);
        if let Err(e) = case.push_snapshot(Snapshot {
            label: snap.label.clone(),
            graph,
        }) {
            diags.push(Diagnostic::invariant(
                format!("case.snapshots[{i}]"),
                e.rule(),
                e.to_string(),
            ));
        }
        if !snap.graph.extra.is_empty() {
            snapshot_extra.insert(snap.label.clone(), snap.graph.extra.clone());
        }
    }

    for id in raw.assessments.keys() {
        let is_ei = case
            .node(id)
            .is_some_and(|n| n.block == Some(BlockKind::EvidenceIncorporation));
        if !is_ei {
            diags.push(Diagnostic::invariant(
                format!("assessments.{id}"),
                "assessment-target",
                "assessments attach to evidence incorporation steps",
            ));
        }
    }
    for id in raw.evidence_decisions.keys() {
        if !case.contains(id) {
            diags.push(Diagnostic::invariant(
                format!("evidence_decisions.{id}"),
                "known-node",
                format!("unknown node `{id}`"),
            ));
        }
    }
    let mut inputs = raw.confidence_inputs.clone();
    inputs.sort_by(|a, b| a.node.cmp(&b.node));
    for (i, a) in inputs.iter().enumerate() {
        if !case.contains(&a.node) {
            diags.push(Diagnostic::invariant(
                format!("confidence_inputs.{}", a.node),
                "known-node",
                format!("unknown node `{}`", a.node),
            ));
        }
        if !(0.0..=1.0).contains(&a.value) {
            diags.push(Diagnostic::invariant(
                format!("confidence_inputs.{}", a.node),
                "probability-range",
                "confidence must lie in [0, 1]",
            ));
        }
        if a.origin == Origin::Propagated {
            diags.push(Diagnostic::invariant(
                format!("confidence_inputs.{}", a.node),
                "input-origin",
                "inputs must come from evidence, an assumption or a manual override",
            ));
        }
        if i > 0 && inputs[i - 1].node == a.node {
            diags.push(Diagnostic::invariant(
                format!("confidence_inputs.{}", a.node),
                "unique-input",
                "more than one confidence input for the node",
            ));
        }
    }
    if let Some(cfg) = &raw.propagation {
        if let Err(e) = cfg.validate() {
            diags.push(Diagnostic::invariant(
                "propagation".into(),
                "propagation-config",
                e.to_string(),
            ));
        }
        for id in cfg.factors.keys() {
            if !case.node(id).is_some_and(Node::is_step) {
                diags.push(Diagnostic::invariant(
                    format!("propagation.factors.{id}"),
                    "factor-target",
                    "factors attach to argument steps",
                ));
            }
        }
    }
    if let Some(ledger) = &raw.ledger {
        if let Err(e) = ledger.validate() {
            diags.push(Diagnostic::invariant(
                "ledger".into(),
                "ledger",
                e.to_string(),
            ));
        }
        for (i, e) in ledger.entries.iter().enumerate() {
            if !case.node(&e.defeater).is_some_and(Node::is_defeater) {
                diags.push(Diagnostic::invariant(
                    format!("ledger.entries[{i}]"),
                    "ledger-defeater",
                    format!("`{}` is not a defeater of this case", e.defeater),
                ));
            }
        }
    }
    if let Some(v) = raw.defeated_value {
        if !(0.0..=1.0).contains(&v) {
            diags.push(Diagnostic::invariant(
                "defeated_value".into(),
                "probability-range",
                "defeated_value must lie in [0, 1]",
            ));
        }
    }
    if !diags.is_empty() {
        return Err(ParseError { diagnostics: diags });
    }
    Ok(CaseDocument {
        metadata: raw.metadata,
        case,
        assessments: raw.assessments,
        evidence_decisions: raw.evidence_decisions,
        confidence_inputs: inputs,
        propagation: raw.propagation,
        acceptance: raw.acceptance,
        ledger: raw.ledger,
        defeated_value: raw.defeated_value,
        case_extra: raw.case.extra,
        snapshot_extra,
        extra: raw.extra,
    })
}

fn raw_graph(g: &CaseGraph, extra: BTreeMap<String, Value>) -> RawGraph {
    RawGraph {
        top_claim: g.top_claim().cloned(),
        nodes: g.nodes().cloned().collect(),
        links: g.links().cloned().collect(),
        snapshots: Vec::new(),
        extra,
    }
}

/// Canonical pretty-printed JSON with a trailing newline.
pub fn serialize(doc: &CaseDocument) -> String {
    let mut case = raw_graph(&doc.case, doc.case_extra.clone());
    case.snapshots = doc
        .case
        .snapshots()
        .iter()
        .map(|s| RawSnapshot {
            label: s.label.clone(),
            graph: raw_graph(
                &s.graph,
                doc.snapshot_extra
                    .get(&s.label)
                    .cloned()
                    .unwrap_or_default(),
            ),
        })
        .collect();
    let mut inputs = doc.confidence_inputs.clone();
    inputs.sort_by(|a, b| a.node.cmp(&b.node));
    let raw = RawDocument {
        format_version: FORMAT_VERSION.to_owned(),
        metadata: doc.metadata.clone(),
        case,
        assessments: doc.assessments.clone(),
        evidence_decisions: doc.evidence_decisions.clone(),
        confidence_inputs: inputs,
        propagation: doc.propagation.clone(),
        acceptance: doc.acceptance.clone(),
        ledger: doc.ledger.clone(),
        defeated_value: doc.defeated_value,
        extra: doc.extra.clone(),
    };
    let mut text = serde_json::to_string_pretty(&raw).expect("documents serialize");
    text.push('\n');
    text
}
