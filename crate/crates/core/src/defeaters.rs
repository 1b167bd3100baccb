//! Defeater labeling, residual-doubt accounting and the defeater lifecycle.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    BlockKind, CaseGraph, GraphError, Link, LinkKind, Node, NodeId, NodeKind, Resolution, RoleFlag,
    Severity, Snapshot,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    In,
    Out,
    Undecided,
}

/// Grounded labeling of an abstract attack graph over nodes `0..n`.
///
/// `attacks` holds `(attacker, attacked)` pairs. The result is the unique
/// labeling with minimal `In` set that satisfies the reinstatement rule:
/// a node is in iff all its attackers are out, out iff some attacker is in,
/// and undecided otherwise.
pub fn grounded_labels(n: usize, attacks: &[(usize, usize)]) -> Vec<Label> {
    let mut targets: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut live_attackers = vec![0usize; n];
    for &(a, b) in attacks {
        targets[a].push(b);
        live_attackers[b] += 1;
    }
    let mut labels = vec![Label::Undecided; n];
    let mut queue: Vec<usize> = (0..n).filter(|&v| live_attackers[v] == 0).collect();
    for &v in &queue {
        labels[v] = Label::In;
    }
    while let Some(v) = queue.pop() {
        for &t in &targets[v] {
            if labels[t] != Label::Undecided {
                continue;
            }
            labels[t] = Label::Out;
            for &u in &targets[t] {
                live_attackers[u] -= 1;
                if live_attackers[u] == 0 && labels[u] == Label::Undecided {
                    labels[u] = Label::In;
                    queue.push(u);
                }
            }
        }
    }
    labels
}

/// Defeaters whose attacks no longer count: they were answered by editing
/// the case or consciously accepted as residual doubts.
pub fn is_inert(node: &Node) -> bool {
    node.is_defeater()
        && matches!(
            node.resolution,
            Some(
                Resolution::AssumptionAdded
                    | Resolution::CaseRevised
                    | Resolution::AcceptedResidual
            )
        )
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labeling {
    pub labels: BTreeMap<NodeId, Label>,
}

impl Labeling {
    pub fn get(&self, id: &NodeId) -> Option<Label> {
        self.labels.get(id).copied()
    }

    /// Nodes not involved in any attack are implicitly in.
    pub fn label_or_in(&self, id: &NodeId) -> Label {
        self.get(id).unwrap_or(Label::In)
    }

    pub fn with_label(&self, label: Label) -> impl Iterator<Item = &NodeId> {
        self.labels
            .iter()
            .filter(move |(_, l)| **l == label)
            .map(|(id, _)| id)
    }
}

/// Labels every attack-connected node of the case.
pub fn label(graph: &CaseGraph) -> Labeling {
    let attack_links: Vec<&Link> = graph
        .links()
        .filter(|l| l.kind == LinkKind::Attack)
        .collect();
    let ids: BTreeSet<&NodeId> = attack_links
        .iter()
        .flat_map(|l| [&l.source, &l.target])
        .collect();
    let index: BTreeMap<&NodeId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let live: Vec<(usize, usize)> = attack_links
        .iter()
        .filter(|l| !graph.node(&l.source).is_some_and(is_inert))
        .map(|l| (index[&l.source], index[&l.target]))
        .collect();
    let labels = grounded_labels(ids.len(), &live);
    Labeling {
        labels: ids.into_iter().cloned().zip(labels).collect(),
    }
}

/// Defeaters that are live, not out, and aimed at an ordinary case element.
pub fn unresolved_defeaters(graph: &CaseGraph, labeling: &Labeling) -> Vec<NodeId> {
    graph
        .nodes()
        .filter(|n| n.is_defeater() && !is_inert(n))
        .filter(|n| labeling.label_or_in(&n.id) != Label::Out)
        .filter(|n| {
            graph
                .attack_targets(&n.id)
                .any(|t| graph.node(t).is_some_and(|t| !t.is_defeater()))
        })
        .map(|n| n.id.clone())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoubtCategory {
    Deductiveness,
    Evidential,
    Interior,
}

impl DoubtCategory {
    pub const ALL: [DoubtCategory; 3] = [
        DoubtCategory::Deductiveness,
        DoubtCategory::Evidential,
        DoubtCategory::Interior,
    ];
}

/// The two kinds of interior doubt. Only the first may be left residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteriorKind {
    Unconvincing,
    Wrong,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualEntry {
    pub defeater: NodeId,
    pub category: DoubtCategory,
    pub probability: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<Severity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interior_kind: Option<InteriorKind>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub consequence_note: String,
}

impl ResidualEntry {
    pub fn new(defeater: impl Into<NodeId>, category: DoubtCategory, probability: f64) -> Self {
        Self {
            defeater: defeater.into(),
            category,
            probability,
            severity: None,
            interior_kind: None,
            consequence_note: String::new(),
        }
    }

    pub fn with_severity(mut self, severity: Severity) -> Self {
        self.severity = Some(severity);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("residual probability for `{0}` must lie in [0, 1]")]
    ProbabilityOutOfRange(NodeId),
    #[error("ledger threshold must lie in [0, 1]")]
    ThresholdOutOfRange,
    #[error("`{0}` doubts that the step is wrong must be resolved, not accepted as residual")]
    WrongInteriorDoubt(NodeId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualDoubtLedger {
    #[serde(default)]
    pub entries: Vec<ResidualEntry>,
    /// Threshold of concern for cumulative minor risks.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    0.01
}

impl Default for ResidualDoubtLedger {
    fn default() -> Self {
        Self {
            entries: Vec::new(),
            threshold: default_threshold(),
        }
    }
}

impl ResidualDoubtLedger {
    pub fn new(threshold: f64) -> Self {
        Self {
            entries: Vec::new(),
            threshold,
        }
    }

    pub fn validate(&self) -> Result<(), LedgerError> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(LedgerError::ThresholdOutOfRange);
        }
        for e in &self.entries {
            if !(0.0..=1.0).contains(&e.probability) {
                return Err(LedgerError::ProbabilityOutOfRange(e.defeater.clone()));
            }
            if e.category == DoubtCategory::Interior && e.interior_kind == Some(InteriorKind::Wrong)
            {
                return Err(LedgerError::WrongInteriorDoubt(e.defeater.clone()));
            }
        }
        Ok(())
    }

    pub fn push(&mut self, entry: ResidualEntry) -> Result<(), LedgerError> {
        let mut next = self.clone();
        next.entries.push(entry);
        next.validate()?;
        *self = next;
        Ok(())
    }

    pub fn defeaters(&self) -> BTreeSet<NodeId> {
        self.entries.iter().map(|e| e.defeater.clone()).collect()
    }
}

/// Order-independent sum: values are added smallest first.
fn stable_sum(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.into_iter().fold(0.0, |acc, v| acc + v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualBound {
    /// Upper bound on the probability that the top claim is false, capped at 1.
    pub bound: f64,
    pub uncapped: f64,
    pub per_category: BTreeMap<DoubtCategory, f64>,
}

/// Deductiveness + evidential + interior residual doubt, capped at 1.
pub fn residual_bound(ledger: &ResidualDoubtLedger) -> ResidualBound {
    let per_category: BTreeMap<DoubtCategory, f64> = DoubtCategory::ALL
        .iter()
        .map(|&c| {
            let values = ledger
                .entries
                .iter()
                .filter(|e| e.category == c)
                .map(|e| e.probability)
                .collect();
            (c, stable_sum(values))
        })
        .collect();
    let uncapped: f64 = per_category.values().fold(0.0, |acc, v| acc + v);
    ResidualBound {
        bound: uncapped.min(1.0),
        uncapped,
        per_category,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryManagement {
    pub minor_count: usize,
    pub minor_cumulative: f64,
    pub manageable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "issue", rename_all = "snake_case")]
pub enum GateIssue {
    /// Must be eliminated or mitigated.
    OpenSignificant {
        defeater: NodeId,
    },
    SignificantResidual {
        defeater: NodeId,
    },
    UndeterminedResidual {
        defeater: NodeId,
    },
    NotManageable {
        category: DoubtCategory,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityReport {
    pub counts: BTreeMap<Severity, usize>,
    pub open_significant: Vec<NodeId>,
    pub categories: BTreeMap<DoubtCategory, CategoryManagement>,
    pub issues: Vec<GateIssue>,
    pub gate_passed: bool,
}

/// Severity totals, manageability per category and the final-assessment gate.
pub fn severity_report(graph: &CaseGraph, ledger: &ResidualDoubtLedger) -> SeverityReport {
    let labeling = label(graph);
    let mut counts: BTreeMap<Severity, usize> = Severity::ALL.iter().map(|&s| (s, 0)).collect();
    for node in graph.nodes().filter(|n| n.is_defeater()) {
        *counts.entry(node.effective_severity()).or_default() += 1;
    }

    let open_significant: Vec<NodeId> = graph
        .nodes()
        .filter(|n| n.is_defeater() && !is_inert(n))
        .filter(|n| n.effective_severity() == Severity::Significant)
        .filter(|n| labeling.label_or_in(&n.id) != Label::Out)
        .map(|n| n.id.clone())
        .collect();
    let mut issues: Vec<GateIssue> = open_significant
        .iter()
        .map(|d| GateIssue::OpenSignificant {
            defeater: d.clone(),
        })
        .collect();

    let entry_severity = |e: &ResidualEntry| {
        e.severity
            .or_else(|| graph.node(&e.defeater).and_then(|n| n.severity))
            .unwrap_or(Severity::Default)
    };
    let mut categories = BTreeMap::new();
    for category in DoubtCategory::ALL {
        let minor: Vec<f64> = ledger
            .entries
            .iter()
            .filter(|e| e.category == category && entry_severity(e) == Severity::Minor)
            .map(|e| e.probability)
            .collect();
        let minor_count = minor.len();
        let minor_cumulative = stable_sum(minor);
        let manageable = minor_cumulative < ledger.threshold;
        if minor_count > 0 && !manageable {
            issues.push(GateIssue::NotManageable { category });
        }
        categories.insert(
            category,
            CategoryManagement {
                minor_count,
                minor_cumulative,
                manageable,
            },
        );
    }
    for e in &ledger.entries {
        match entry_severity(e) {
            Severity::Significant => issues.push(GateIssue::SignificantResidual {
                defeater: e.defeater.clone(),
            }),
            Severity::Default => issues.push(GateIssue::UndeterminedResidual {
                defeater: e.defeater.clone(),
            }),
            Severity::Minor | Severity::Negligible => {}
        }
    }
    SeverityReport {
        counts,
        open_significant,
        categories,
        gate_passed: issues.is_empty(),
        issues,
    }
}

/// Where an added assumption goes relative to the challenged step.
#[derive(Debug, Clone, PartialEq)]
pub enum Placement {
    /// Conjoined into the challenged step itself.
    Below,
    /// A new conjunction step above the untouched original argument. The
    /// original step is re-parented to `base_claim`, which together with the
    /// assumption supports the original parent claim through `step`.
    Above { step: NodeId, base_claim: NodeId },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Edit {
    AddNode(Node),
    ReplaceNode(Node),
    RemoveNode(NodeId),
    AddLink(Link),
    RemoveLink(Link),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResolutionPayload {
    /// The defeater is itself defeated by `counter`, optionally backed by a
    /// supporting subcase whose top steps link into `counter`.
    Counterargument {
        counter: Node,
        support: Option<CaseGraph>,
    },
    /// The defeater exposed a missing assumption.
    AssumptionAdded {
        assumption: Node,
        placement: Placement,
    },
    /// The defeater exposed a flaw; the case is edited between two snapshots.
    CaseRevised {
        before: String,
        after: String,
        edits: Vec<Edit>,
    },
    /// The doubt is accepted as residual.
    AcceptedResidual {
        category: DoubtCategory,
        probability: f64,
        severity: Option<Severity>,
        interior_kind: Option<InteriorKind>,
        consequence_note: String,
    },
}

impl ResolutionPayload {
    pub fn mode(&self) -> Resolution {
        match self {
            ResolutionPayload::Counterargument { .. } => Resolution::DefeatedByCounterargument,
            ResolutionPayload::AssumptionAdded { .. } => Resolution::AssumptionAdded,
            ResolutionPayload::CaseRevised { .. } => Resolution::CaseRevised,
            ResolutionPayload::AcceptedResidual { .. } => Resolution::AcceptedResidual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ResolveError {
    #[error("`{0}` is not a defeater in this case")]
    NotADefeater(NodeId),
    #[error("defeater `{0}` is already resolved ({1:?})")]
    AlreadyResolved(NodeId, Resolution),
    #[error("invalid resolution payload: {0}")]
    InvalidPayload(String),
}

impl From<GraphError> for ResolveError {
    fn from(e: GraphError) -> Self {
        ResolveError::InvalidPayload(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub graph: CaseGraph,
    pub ledger: ResidualDoubtLedger,
}

/// Applies one of the resolution modes to an open defeater.
pub fn resolve_defeater(
    graph: &CaseGraph,
    ledger: &ResidualDoubtLedger,
    defeater: &NodeId,
    payload: ResolutionPayload,
) -> Result<Resolved, ResolveError> {
    let node = graph
        .node(defeater)
        .filter(|n| n.is_defeater())
        .ok_or_else(|| ResolveError::NotADefeater(defeater.clone()))?;
    if let Some(r) = node.resolution.filter(|r| !r.is_open()) {
        return Err(ResolveError::AlreadyResolved(defeater.clone(), r));
    }
    let mode = payload.mode();
    let mut g = graph.clone();
    let mut ledger = ledger.clone();
    let mut resolved_node = node.clone();

    match payload {
        ResolutionPayload::Counterargument { counter, support } => {
            if counter.kind != NodeKind::Defeater {
                return Err(ResolveError::InvalidPayload(
                    "a counterargument must be a defeater node".into(),
                ));
            }
            let counter_id = counter.id.clone();
            g.add_node(counter)?;
            if let Some(support) = support {
                let mut nodes_only = CaseGraph::new();
                for n in support.nodes() {
                    nodes_only.add_node(n.clone())?;
                }
                g.merge(&nodes_only)?;
                for link in support.links() {
                    g.add_link(link.clone())?;
                }
            }
            g.add_link(Link::attack(counter_id, defeater.clone()))?;
        }
        ResolutionPayload::AssumptionAdded {
            mut assumption,
            placement,
        } => {
            if !assumption.is_claim() {
                return Err(ResolveError::InvalidPayload(
                    "the assumption must be a claim".into(),
                ));
            }
            assumption.roles.insert(RoleFlag::Assumption);
            let step = challenged_step(&g, defeater).ok_or_else(|| {
                ResolveError::InvalidPayload(format!(
                    "defeater `{defeater}` does not target an argument step or a supported claim"
                ))
            })?;
            match placement {
                Placement::Below => {
                    let block = g.node(&step).and_then(|n| n.block).expect("step has block");
                    if !matches!(block, BlockKind::Decomposition | BlockKind::Calculation) {
                        assumption.roles.insert(RoleFlag::SideClaim);
                    }
                    let id = assumption.id.clone();
                    g.add_node(assumption)?;
                    g.add_link(Link::logical(id, step))?;
                }
                Placement::Above {
                    step: new_step,
                    base_claim,
                } => {
                    let parent = g.logical_parent(&step).cloned().ok_or_else(|| {
                        ResolveError::InvalidPayload(format!("step `{step}` has no parent claim"))
                    })?;
                    let parent_node = g.node(&parent).expect("parent exists").clone();
                    if !parent_node.is_claim() {
                        return Err(ResolveError::InvalidPayload(
                            "added-above needs a claim above the challenged step".into(),
                        ));
                    }
                    let base = Node::claim(base_claim.clone(), parent_node.narrative.clone());
                    let assumption_id = assumption.id.clone();
                    g.add_node(base)?;
                    g.add_node(assumption)?;
                    g.add_node(Node::step(new_step.clone(), BlockKind::Decomposition))?;
                    g.remove_link(&Link::logical(step.clone(), parent.clone()))?;
                    g.add_link(Link::logical(step, base_claim.clone()))?;
                    g.add_link(Link::logical(base_claim, new_step.clone()))?;
                    g.add_link(Link::logical(assumption_id, new_step.clone()))?;
                    g.add_link(Link::logical(new_step, parent))?;
                }
            }
        }
        ResolutionPayload::CaseRevised {
            before,
            after,
            edits,
        } => {
            g.snapshot(before)?;
            for edit in edits {
                match edit {
                    Edit::AddNode(n) => g.add_node(n)?,
                    Edit::ReplaceNode(n) => g.replace_node(n)?,
                    Edit::RemoveNode(id) => {
                        g.remove_node(&id)?;
                    }
                    Edit::AddLink(l) => g.add_link(l)?,
                    Edit::RemoveLink(l) => g.remove_link(&l)?,
                }
            }
            let still_there = g.node(defeater).is_some_and(|n| n.is_defeater());
            if !still_there {
                return Err(ResolveError::InvalidPayload(
                    "the edit script must keep the defeater as a record".into(),
                ));
            }
            resolved_node = g.node(defeater).expect("checked").clone();
            resolved_node.resolution = Some(mode);
            g.replace_node(resolved_node)?;
            // the "after" snapshot records the resolved state
            let mut after_graph = g.clone();
            after_graph.snapshot(after.clone())?;
            let frozen = after_graph
                .snapshots()
                .last()
                .expect("just pushed")
                .graph
                .clone();
            g.push_snapshot(Snapshot {
                label: after,
                graph: frozen,
            })?;
            return Ok(Resolved { graph: g, ledger });
        }
        ResolutionPayload::AcceptedResidual {
            category,
            probability,
            severity,
            interior_kind,
            consequence_note,
        } => {
            let severity = severity.or(node.severity).unwrap_or(Severity::Default);
            if severity == Severity::Significant {
                return Err(ResolveError::InvalidPayload(
                    "a significant doubt cannot be accepted as residual".into(),
                ));
            }
            ledger
                .push(ResidualEntry {
                    defeater: defeater.clone(),
                    category,
                    probability,
                    severity: Some(severity),
                    interior_kind,
                    consequence_note,
                })
                .map_err(|e| ResolveError::InvalidPayload(e.to_string()))?;
            resolved_node.severity = Some(severity);
        }
    }

    resolved_node.resolution = Some(mode);
    g.replace_node(resolved_node)?;
    Ok(Resolved { graph: g, ledger })
}

/// The argument step a defeater challenges, directly or through the claim it attacks.
fn challenged_step(graph: &CaseGraph, defeater: &NodeId) -> Option<NodeId> {
    let targets: Vec<&NodeId> = graph.attack_targets(defeater).collect();
    targets
        .iter()
        .find(|t| graph.node(t).is_some_and(Node::is_step))
        .map(|t| (*t).clone())
        .or_else(|| {
            targets
                .iter()
                .filter(|t| graph.node(t).is_some_and(Node::is_claim))
                .find_map(|t| graph.supporting_steps(t).next().cloned())
        })
}
