//! The evaluation pipeline and its report.
//!
//! structure → evidence acceptance → propagation → labeling → residual
//! bound → severity gate, in one deterministic report.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confirmation::{accept_evidence, AcceptanceDecision, AcceptancePolicy, Measure};
use crate::defeaters::{
    label, residual_bound, severity_report, unresolved_defeaters, Label, Labeling, ResidualBound,
    SeverityReport,
};
use crate::document::CaseDocument;
use crate::graph::{BlockKind, CaseGraph, NodeId, NodeKind};
use crate::propagation::{
    classify, propagate_with, Color, ConfidenceAssignment, Override, PropagationConfig, Rule,
    RuleRegistry, Threshold, Valuation,
};
use crate::structure::{assess, CaseLabel, StructuralReport};

pub const REPORT_KIND: &str = "casecalc-report";
pub const REPORT_VERSION: &str = "1";

/// How defeaters enter the valuation.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum View {
    /// Evaluate as if no defeaters were present.
    #[default]
    IgnoreDefeaters,
    /// Defeated (out) nodes take the defeated value.
    ApplyDefeaters,
}

impl std::str::FromStr for View {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "ignore" | "ignore-defeaters" | "ignore_defeaters" => Ok(View::IgnoreDefeaters),
            "apply" | "apply-defeaters" | "apply_defeaters" => Ok(View::ApplyDefeaters),
            other => Err(format!(
                "unknown view `{other}` (expected ignore-defeaters or apply-defeaters)"
            )),
        }
    }
}

/// One layer of optional settings. Layers are stacked as
/// flags > document > config file > built-in defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingsLayer {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<Rule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<Threshold>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accept_measure: Option<Measure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accept_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defeated_value: Option<f64>,
}

impl SettingsLayer {
    fn from_document(doc: &CaseDocument) -> Self {
        Self {
            rule: doc.propagation.as_ref().map(|p| p.rule.clone()),
            thresholds: doc.propagation.as_ref().map(|p| p.thresholds.clone()),
            accept_measure: doc.acceptance.as_ref().map(|a| a.measure),
            accept_threshold: doc.acceptance.as_ref().map(|a| a.threshold),
            defeated_value: doc.defeated_value,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub flags: SettingsLayer,
    pub config: SettingsLayer,
    pub view: View,
    pub snapshot: Option<String>,
    /// Session overrides; these win over everything else.
    pub overrides: BTreeMap<NodeId, Override>,
    pub registry: RuleRegistry,
}

/// The settings an evaluation actually ran with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub propagation: PropagationConfig,
    pub acceptance: AcceptancePolicy,
    pub view: View,
    pub defeated_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<String>,
}

pub fn resolve_settings(doc: &CaseDocument, opts: &EvalOptions) -> Settings {
    let document = SettingsLayer::from_document(doc);
    let layers = [&opts.flags, &document, &opts.config];
    macro_rules! pick {
        ($field:ident) => {
            layers.iter().find_map(|l| l.$field.clone())
        };
    }
    let mut propagation = doc.propagation.clone().unwrap_or_default();
    propagation.rule = pick!(rule).unwrap_or(Rule::Product);
    if let Some(t) = pick!(thresholds) {
        propagation.thresholds = t;
    }
    let mut acceptance = doc.acceptance.clone().unwrap_or_default();
    if let Some(m) = pick!(accept_measure) {
        acceptance.measure = m;
    }
    if let Some(t) = pick!(accept_threshold) {
        acceptance.threshold = t;
    }
    Settings {
        propagation,
        acceptance,
        view: opts.view,
        defeated_value: pick!(defeated_value).unwrap_or(0.0),
        snapshot: opts.snapshot.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no snapshot labelled `{0}`")]
    UnknownSnapshot(String),
    #[error("override names unknown node `{0}`")]
    UnknownOverrideNode(NodeId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum EvidenceProvenance {
    /// Decided by the acceptance policy.
    Measure { decision: AcceptanceDecision },
    /// Decided by a person, overriding any measure.
    Human { accepted: bool, note: String },
    /// Assessment present but unusable.
    Error { message: String },
    /// No assessment and no decision.
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfirmationSection {
    pub steps: BTreeMap<NodeId, EvidenceProvenance>,
    pub accepted: Vec<NodeId>,
    pub pending: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub values: BTreeMap<NodeId, ConfidenceAssignment>,
    pub colors: BTreeMap<NodeId, Color>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
    /// Overrides in force: derived from defeaters, then user overrides.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<NodeId, Override>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingSection {
    /// Every node; nodes outside any attack are in.
    pub labels: BTreeMap<NodeId, Label>,
    pub unresolved_defeaters: Vec<NodeId>,
    pub defeated_nodes: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub case_label: CaseLabel,
    pub logical_validity: bool,
    pub fully_valid: bool,
    pub sound: bool,
    pub gate_passed: bool,
    pub exit_code: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_color: Option<Color>,
    pub residual_bound: f64,
    /// Distinct defeaters in the case and all of its snapshots.
    pub defeaters_recorded: usize,
    pub unresolved_defeaters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kind: String,
    pub report_version: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub title: String,
    pub settings: Settings,
    pub summary: Summary,
    pub structure: StructuralReport,
    pub confirmation: ConfirmationSection,
    pub confidence: ConfidenceSection,
    pub labeling: LabelingSection,
    pub residual: ResidualBound,
    pub severity: SeverityReport,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}

/// 0 sound and gate passed; 1 inductive, incomplete or otherwise short of
/// that; 2 invalid. (3 is reserved for I/O and schema failures.)
pub fn exit_code(label: CaseLabel, gate_passed: bool) -> i32 {
    match label {
        CaseLabel::Invalid => 2,
        CaseLabel::Sound if gate_passed => 0,
        _ => 1,
    }
}

/// The graph an evaluation looks at: the head or a named snapshot.
pub fn selected_graph<'a>(
    doc: &'a CaseDocument,
    snapshot: Option<&str>,
) -> Result<&'a CaseGraph, EvalError> {
    match snapshot {
        None => Ok(&doc.case),
        Some(label) => doc
            .case
            .snapshot_graph(label)
            .ok_or_else(|| EvalError::UnknownSnapshot(label.to_owned())),
    }
}

fn confirmation_section(
    graph: &CaseGraph,
    doc: &CaseDocument,
    policy: &AcceptancePolicy,
) -> ConfirmationSection {
    let mut steps = BTreeMap::new();
    for node in graph
        .nodes()
        .filter(|n| n.block == Some(BlockKind::EvidenceIncorporation))
    {
        let id = &node.id;
        let prov = if let Some(d) = doc.evidence_decisions.get(id) {
            EvidenceProvenance::Human {
                accepted: d.accepted,
                note: d.note.clone(),
            }
        } else if let Some(a) = doc.assessments.get(id) {
            match accept_evidence(a, policy) {
                Ok(decision) => EvidenceProvenance::Measure { decision },
                Err(e) => EvidenceProvenance::Error {
                    message: e.to_string(),
                },
            }
        } else {
            EvidenceProvenance::Missing
        };
        steps.insert(id.clone(), prov);
    }
    let is_accepted = |p: &EvidenceProvenance| match p {
        EvidenceProvenance::Measure { decision } => decision.accepted,
        EvidenceProvenance::Human { accepted, .. } => *accepted,
        _ => false,
    };
    let accepted = steps
        .iter()
        .filter(|(_, p)| is_accepted(p))
        .map(|(id, _)| id.clone())
        .collect();
    let pending = steps
        .iter()
        .filter(|(_, p)| !is_accepted(p))
        .map(|(id, _)| id.clone())
        .collect();
    ConfirmationSection {
        steps,
        accepted,
        pending,
    }
}

/// Confidence inputs: the document's own plus P(C|E) of every assessed
/// evidence step that has no explicit input.
pub fn effective_inputs(graph: &CaseGraph, doc: &CaseDocument) -> Vec<ConfidenceAssignment> {
    let mut inputs: BTreeMap<NodeId, ConfidenceAssignment> = doc
        .confidence_inputs
        .iter()
        .filter(|a| graph.contains(&a.node))
        .map(|a| (a.node.clone(), a.clone()))
        .collect();
    for (id, a) in &doc.assessments {
        if graph.contains(id) && !inputs.contains_key(id) {
            inputs.insert(
                id.clone(),
                ConfidenceAssignment::evidence(id.clone(), a.p_c_given_e.value()),
            );
        }
    }
    inputs.into_values().collect()
}

/// Overrides that fold out-labelled main-case nodes into the defeated value.
/// A defeated evidence node takes its evidence step down with it.
pub fn defeater_overrides(
    graph: &CaseGraph,
    labeling: &Labeling,
    defeated_value: f64,
) -> BTreeMap<NodeId, Override> {
    let main = graph.main_case();
    let mut out = BTreeMap::new();
    for id in labeling
        .with_label(Label::Out)
        .filter(|id| main.contains(*id))
    {
        let Some(node) = graph.node(id) else { continue };
        let targets: Vec<NodeId> = match node.kind {
            NodeKind::Claim | NodeKind::ArgumentStep => vec![id.clone()],
            NodeKind::Evidence => graph.logical_targets(id).cloned().collect(),
            _ => Vec::new(),
        };
        for t in targets {
            out.insert(
                t,
                Override {
                    value: defeated_value,
                    note: format!("defeated: `{id}` is out"),
                },
            );
        }
    }
    out
}

/// Valuation of `graph` under a view, plus the overrides that were in force.
pub fn valuation_for_view(
    graph: &CaseGraph,
    inputs: &[ConfidenceAssignment],
    settings: &Settings,
    user_overrides: &BTreeMap<NodeId, Override>,
    registry: &RuleRegistry,
) -> (Result<Valuation, String>, BTreeMap<NodeId, Override>) {
    let mut overrides = match settings.view {
        View::IgnoreDefeaters => BTreeMap::new(),
        View::ApplyDefeaters => defeater_overrides(graph, &label(graph), settings.defeated_value),
    };
    overrides.extend(user_overrides.iter().map(|(k, v)| (k.clone(), v.clone())));
    let result = propagate_with(graph, inputs, &overrides, &settings.propagation, registry)
        .map_err(|e| e.to_string());
    (result, overrides)
}

/// Distinct defeater ids across the head graph and every snapshot.
pub fn defeaters_recorded(case: &CaseGraph) -> usize {
    let mut ids: BTreeSet<&NodeId> = BTreeSet::new();
    let graphs = std::iter::once(case).chain(case.snapshots().iter().map(|s| &s.graph));
    for g in graphs {
        ids.extend(g.nodes().filter(|n| n.is_defeater()).map(|n| &n.id));
    }
    ids.len()
}

pub fn evaluate(doc: &CaseDocument, opts: &EvalOptions) -> Result<Report, EvalError> {
    let settings = resolve_settings(doc, opts);
    let graph = selected_graph(doc, settings.snapshot.as_deref())?;
    if let Some(id) = opts.overrides.keys().find(|id| !graph.contains(id)) {
        return Err(EvalError::UnknownOverrideNode(id.clone()));
    }
    let ledger = doc.ledger_or_default();

    let confirmation = confirmation_section(graph, doc, &settings.acceptance);
    let evidence_accepted: BTreeSet<NodeId> = confirmation.accepted.iter().cloned().collect();
    let residual_accepted: BTreeSet<NodeId> = ledger
        .defeaters()
        .into_iter()
        .filter(|d| graph.contains(d))
        .collect();
    let structure = assess(graph, &residual_accepted, &evidence_accepted)
        .expect("ledger ids are filtered to the graph");

    let inputs = effective_inputs(graph, doc);
    let (valuation, overrides) =
        valuation_for_view(graph, &inputs, &settings, &opts.overrides, &opts.registry);
    let confidence = match valuation {
        Ok(v) => ConfidenceSection {
            error: None,
            colors: classify(&v, &settings.propagation),
            top_value: v.top_value(),
            values: v.values,
            diagnostics: v.diagnostics,
            overrides,
        },
        Err(e) => ConfidenceSection {
            error: Some(e),
            values: BTreeMap::new(),
            colors: BTreeMap::new(),
            top_value: None,
            diagnostics: Vec::new(),
            overrides,
        },
    };

    let labeling = label(graph);
    let main = graph.main_case();
    let labeling_section = LabelingSection {
        unresolved_defeaters: unresolved_defeaters(graph, &labeling),
        defeated_nodes: labeling
            .with_label(Label::Out)
            .filter(|id| main.contains(*id))
            .cloned()
            .collect(),
        labels: graph
            .nodes()
            .map(|n| (n.id.clone(), labeling.label_or_in(&n.id)))
            .collect(),
    };
    let residual = residual_bound(&ledger);
    let severity = severity_report(graph, &ledger);

    let top_color = graph
        .top_claim()
        .and_then(|t| confidence.colors.get(t).copied());
    let summary = Summary {
        case_label: structure.case_label,
        logical_validity: structure.logical_validity,
        fully_valid: structure.fully_valid,
        sound: structure.sound,
        gate_passed: severity.gate_passed,
        exit_code: exit_code(structure.case_label, severity.gate_passed),
        top_value: confidence.top_value,
        top_color,
        residual_bound: residual.bound,
        defeaters_recorded: defeaters_recorded(&doc.case),
        unresolved_defeaters: labeling_section.unresolved_defeaters.len(),
    };
    Ok(Report {
        kind: REPORT_KIND.to_owned(),
        report_version: REPORT_VERSION.to_owned(),
        title: doc.metadata.title.clone(),
        settings,
        summary,
        structure,
        confirmation,
        confidence,
        labeling: labeling_section,
        residual,
        severity,
    })
}
