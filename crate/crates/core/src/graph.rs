//! Case data model: typed nodes, logical/embedded/attack links and snapshots.
//!
//! Every mutating operation validates before it touches the graph, so a
//! `CaseGraph` reachable through this API always satisfies the node, link
//! and graph invariants. Failed operations leave the graph unchanged.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Case-unique node identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Claim,
    ArgumentStep,
    Evidence,
    Defeater,
    SubcaseNote,
    Comment,
}

/// The five argument building blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Decomposition,
    Substitution,
    Concretion,
    Calculation,
    EvidenceIncorporation,
}

impl BlockKind {
    /// Substitution and concretion derive their claim from a single subclaim.
    pub fn single_subclaim(self) -> bool {
        matches!(self, BlockKind::Substitution | BlockKind::Concretion)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleFlag {
    SideClaim,
    Assumption,
    PossiblyMissing,
    Precondition,
    Refutational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attestation {
    Unreviewed,
    FullyValid,
    SoundJustification,
}

/// Defeater severity on the 1..=4 scale (1 means "not yet determined").
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Default = 1,
    Negligible = 2,
    Minor = 3,
    Significant = 4,
}

impl Severity {
    pub fn level(self) -> u8 {
        self as u8
    }

    pub const ALL: [Severity; 4] = [
        Severity::Default,
        Severity::Negligible,
        Severity::Minor,
        Severity::Significant,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Open,
    DefeatedByCounterargument,
    AssumptionAdded,
    CaseRevised,
    AcceptedResidual,
}

impl Resolution {
    pub fn is_open(self) -> bool {
        self == Resolution::Open
    }
}

/// Lifecycle phase in which a defeater was proposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Development,
    Assessment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<BlockKind>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub narrative: String,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub roles: BTreeSet<RoleFlag>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub inductive: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attestation: Option<Attestation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<Severity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<Resolution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<Phase>,
    /// Fields this version does not know about, kept for round-tripping.
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl Node {
    fn bare(id: impl Into<NodeId>, kind: NodeKind) -> Self {
        Self {
            id: id.into(),
            kind,
            block: None,
            narrative: String::new(),
            roles: BTreeSet::new(),
            inductive: false,
            attestation: None,
            severity: None,
            resolution: None,
            phase: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn claim(id: impl Into<NodeId>, narrative: impl Into<String>) -> Self {
        Self::bare(id, NodeKind::Claim).with_narrative(narrative)
    }

    pub fn step(id: impl Into<NodeId>, block: BlockKind) -> Self {
        let mut node = Self::bare(id, NodeKind::ArgumentStep);
        node.block = Some(block);
        node
    }

    pub fn evidence(id: impl Into<NodeId>, narrative: impl Into<String>) -> Self {
        Self::bare(id, NodeKind::Evidence).with_narrative(narrative)
    }

    pub fn defeater(id: impl Into<NodeId>, narrative: impl Into<String>) -> Self {
        let mut node = Self::bare(id, NodeKind::Defeater).with_narrative(narrative);
        node.resolution = Some(Resolution::Open);
        node
    }

    pub fn subcase_note(id: impl Into<NodeId>, narrative: impl Into<String>) -> Self {
        Self::bare(id, NodeKind::SubcaseNote).with_narrative(narrative)
    }

    pub fn comment(id: impl Into<NodeId>, narrative: impl Into<String>) -> Self {
        Self::bare(id, NodeKind::Comment).with_narrative(narrative)
    }

    pub fn with_narrative(mut self, narrative: impl Into<String>) -> Self {
        self.narrative = narrative.into();
        self
    }

    pub fn with_role(mut self, role: RoleFlag) -> Self {
        self.roles.insert(role);
        self
    }

    pub fn side_claim(self) -> Self {
        self.with_role(RoleFlag::SideClaim)
    }

    pub fn assumption(self) -> Self {
        self.with_role(RoleFlag::Assumption)
    }

    pub fn marked_inductive(mut self) -> Self {
        self.inductive = true;
        self
    }

    pub fn with_attestation(mut self, attestation: Attestation) -> Self {
        self.attestation = Some(attestation);
        self
    }

    pub fn with_severity(mut self, severity: Severity) -> Self {
        self.severity = Some(severity);
        self
    }

    pub fn with_resolution(mut self, resolution: Resolution) -> Self {
        self.resolution = Some(resolution);
        self
    }

    pub fn with_phase(mut self, phase: Phase) -> Self {
        self.phase = Some(phase);
        self
    }

    pub fn has_role(&self, role: RoleFlag) -> bool {
        self.roles.contains(&role)
    }

    pub fn is_claim(&self) -> bool {
        self.kind == NodeKind::Claim
    }

    pub fn is_step(&self) -> bool {
        self.kind == NodeKind::ArgumentStep
    }

    pub fn is_defeater(&self) -> bool {
        self.kind == NodeKind::Defeater
    }

    /// Severity with "not yet determined" filled in.
    pub fn effective_severity(&self) -> Severity {
        self.severity.unwrap_or(Severity::Default)
    }

    /// Open unless a resolution other than `Open` has been recorded.
    pub fn is_open_defeater(&self) -> bool {
        self.is_defeater() && self.resolution.is_none_or(Resolution::is_open)
    }

    /// Checks the per-node field/kind invariants.
    pub fn validate(&self) -> Result<(), GraphError> {
        let malformed = |reason: &str| {
            Err(GraphError::MalformedNode {
                id: self.id.clone(),
                reason: reason.to_owned(),
            })
        };
        if self.id.as_str().is_empty() {
            return malformed("node id must not be empty");
        }
        let step = self.kind == NodeKind::ArgumentStep;
        if step != self.block.is_some() {
            return malformed("block is required for argument steps and only for them");
        }
        if !step && (self.inductive || self.attestation.is_some()) {
            return malformed("inductive marker and attestation apply to argument steps only");
        }
        if self.kind != NodeKind::Defeater
            && (self.severity.is_some() || self.resolution.is_some() || self.phase.is_some())
        {
            return malformed("severity, resolution and phase apply to defeaters only");
        }
        for role in &self.roles {
            let allowed = match role {
                RoleFlag::SideClaim
                | RoleFlag::Assumption
                | RoleFlag::PossiblyMissing
                | RoleFlag::Precondition => self.kind == NodeKind::Claim,
                RoleFlag::Refutational => matches!(
                    self.kind,
                    NodeKind::Claim | NodeKind::ArgumentStep | NodeKind::Defeater
                ),
            };
            if !allowed {
                return malformed(&format!(
                    "role {role:?} is not allowed on a {:?}",
                    self.kind
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    Logical,
    Embedded,
    Attack,
}

/// A directed link. Logical links point from supporting node to supported
/// node (subclaim to step, step to parent claim).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Link {
    pub source: NodeId,
    pub target: NodeId,
    pub kind: LinkKind,
}

impl Link {
    pub fn new(source: impl Into<NodeId>, target: impl Into<NodeId>, kind: LinkKind) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
            kind,
        }
    }

    pub fn logical(source: impl Into<NodeId>, target: impl Into<NodeId>) -> Self {
        Self::new(source, target, LinkKind::Logical)
    }

    pub fn embedded(source: impl Into<NodeId>, target: impl Into<NodeId>) -> Self {
        Self::new(source, target, LinkKind::Embedded)
    }

    pub fn attack(source: impl Into<NodeId>, target: impl Into<NodeId>) -> Self {
        Self::new(source, target, LinkKind::Attack)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("node `{0}` already exists")]
    DuplicateId(NodeId),
    #[error("malformed node `{id}`: {reason}")]
    MalformedNode { id: NodeId, reason: String },
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("link {from} -> {to} would close a logical cycle")]
    CycleIntroduced { from: NodeId, to: NodeId },
    #[error("illegal {kind:?} link {from} -> {to} ({rule})")]
    IllegalEndpoints {
        from: NodeId,
        to: NodeId,
        kind: LinkKind,
        rule: &'static str,
    },
    #[error("argument step `{step}` already has parent `{existing}`")]
    SecondParent { step: NodeId, existing: NodeId },
    #[error("link {from} -> {to} ({kind:?}) already present")]
    DuplicateLink {
        from: NodeId,
        to: NodeId,
        kind: LinkKind,
    },
    #[error("no such link {from} -> {to} ({kind:?})")]
    UnknownLink {
        from: NodeId,
        to: NodeId,
        kind: LinkKind,
    },
    #[error("snapshot label `{0}` already used")]
    DuplicateLabel(String),
    #[error("`{0}` cannot be the top claim: {1}")]
    InvalidTopClaim(NodeId, &'static str),
}

impl GraphError {
    /// Short rule name used in diagnostics.
    pub fn rule(&self) -> &'static str {
        match self {
            GraphError::DuplicateId(_) => "unique-id",
            GraphError::MalformedNode { .. } => "node-fields",
            GraphError::UnknownNode(_) => "known-endpoints",
            GraphError::CycleIntroduced { .. } => "acyclic",
            GraphError::IllegalEndpoints { rule, .. } => rule,
            GraphError::SecondParent { .. } => "single-parent",
            GraphError::DuplicateLink { .. } => "unique-link",
            GraphError::UnknownLink { .. } => "known-link",
            GraphError::DuplicateLabel(_) => "unique-snapshot-label",
            GraphError::InvalidTopClaim(..) => "top-claim",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub label: String,
    pub graph: CaseGraph,
}

/// The typed node/link graph of one assurance case.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CaseGraph {
    nodes: BTreeMap<NodeId, Node>,
    links: BTreeSet<Link>,
    top_claim: Option<NodeId>,
    snapshots: Vec<Snapshot>,
    // Derived logical adjacency, kept in sync with `links`.
    up: BTreeMap<NodeId, BTreeSet<NodeId>>,
    down: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl CaseGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// A graph holding just its top claim.
    pub fn with_top_claim(claim: Node) -> Result<Self, GraphError> {
        let mut graph = Self::new();
        let id = claim.id.clone();
        graph.add_node(claim)?;
        graph.set_top_claim(&id)?;
        Ok(graph)
    }

    pub fn top_claim(&self) -> Option<&NodeId> {
        self.top_claim.as_ref()
    }

    pub fn set_top_claim(&mut self, id: &NodeId) -> Result<(), GraphError> {
        let node = self
            .node(id)
            .ok_or_else(|| GraphError::UnknownNode(id.clone()))?;
        if !node.is_claim() {
            return Err(GraphError::InvalidTopClaim(id.clone(), "not a claim"));
        }
        if self.up.get(id).is_some_and(|t| !t.is_empty()) {
            return Err(GraphError::InvalidTopClaim(
                id.clone(),
                "it already supports another step",
            ));
        }
        self.top_claim = Some(id.clone());
        Ok(())
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    /// Nodes in id order.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    /// Links in (source, target, kind) order.
    pub fn links(&self) -> impl Iterator<Item = &Link> {
        self.links.iter()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn add_node(&mut self, node: Node) -> Result<(), GraphError> {
        node.validate()?;
        if self.nodes.contains_key(&node.id) {
            return Err(GraphError::DuplicateId(node.id));
        }
        self.nodes.insert(node.id.clone(), node);
        Ok(())
    }

    pub fn add_link(&mut self, link: Link) -> Result<(), GraphError> {
        self.check_link(&link)?;
        if link.kind == LinkKind::Logical {
            self.up
                .entry(link.source.clone())
                .or_default()
                .insert(link.target.clone());
            self.down
                .entry(link.target.clone())
                .or_default()
                .insert(link.source.clone());
        }
        self.links.insert(link);
        Ok(())
    }

    fn check_link(&self, link: &Link) -> Result<(), GraphError> {
        let source = self
            .node(&link.source)
            .ok_or_else(|| GraphError::UnknownNode(link.source.clone()))?;
        let target = self
            .node(&link.target)
            .ok_or_else(|| GraphError::UnknownNode(link.target.clone()))?;
        if self.links.contains(link) {
            return Err(GraphError::DuplicateLink {
                from: link.source.clone(),
                to: link.target.clone(),
                kind: link.kind,
            });
        }
        let illegal = |rule| {
            Err(GraphError::IllegalEndpoints {
                from: link.source.clone(),
                to: link.target.clone(),
                kind: link.kind,
                rule,
            })
        };
        use NodeKind::*;
        match link.kind {
            LinkKind::Logical => {
                match (source.kind, target.kind) {
                    (Claim, Claim) => return illegal("claim-to-claim"),
                    (Claim | Evidence, ArgumentStep) => {}
                    (ArgumentStep, Claim | Defeater) => {
                        if let Some(existing) = self.logical_parent(&link.source) {
                            return Err(GraphError::SecondParent {
                                step: link.source.clone(),
                                existing: existing.clone(),
                            });
                        }
                    }
                    _ => return illegal("logical-endpoints"),
                }
                if self.top_claim.as_ref() == Some(&link.source) {
                    return illegal("top-claim-is-root");
                }
                if link.source == link.target || self.reaches(&link.target, &link.source) {
                    return Err(GraphError::CycleIntroduced {
                        from: link.source.clone(),
                        to: link.target.clone(),
                    });
                }
            }
            LinkKind::Embedded => {
                if link.source == link.target {
                    return illegal("self-reference");
                }
            }
            LinkKind::Attack => {
                if source.kind != Defeater {
                    return illegal("attack-source");
                }
                if !matches!(target.kind, Claim | ArgumentStep | Evidence | Defeater) {
                    return illegal("attack-target");
                }
                if link.source == link.target {
                    return illegal("self-attack");
                }
            }
        }
        Ok(())
    }

    /// True when `to` is reachable from `from` following logical links upward.
    fn reaches(&self, from: &NodeId, to: &NodeId) -> bool {
        let mut stack = vec![from];
        let mut seen = BTreeSet::new();
        while let Some(id) = stack.pop() {
            if id == to {
                return true;
            }
            if !seen.insert(id) {
                continue;
            }
            if let Some(targets) = self.up.get(id) {
                stack.extend(targets.iter());
            }
        }
        false
    }

    pub fn remove_link(&mut self, link: &Link) -> Result<(), GraphError> {
        if !self.links.remove(link) {
            return Err(GraphError::UnknownLink {
                from: link.source.clone(),
                to: link.target.clone(),
                kind: link.kind,
            });
        }
        if link.kind == LinkKind::Logical {
            if let Some(t) = self.up.get_mut(&link.source) {
                t.remove(&link.target);
            }
            if let Some(s) = self.down.get_mut(&link.target) {
                s.remove(&link.source);
            }
        }
        Ok(())
    }

    /// Removes a node and every link touching it. The top claim cannot be removed.
    pub fn remove_node(&mut self, id: &NodeId) -> Result<Node, GraphError> {
        if !self.contains(id) {
            return Err(GraphError::UnknownNode(id.clone()));
        }
        if self.top_claim.as_ref() == Some(id) {
            return Err(GraphError::InvalidTopClaim(
                id.clone(),
                "the top claim cannot be removed",
            ));
        }
        let incident: Vec<Link> = self
            .links
            .iter()
            .filter(|l| &l.source == id || &l.target == id)
            .cloned()
            .collect();
        for link in &incident {
            self.remove_link(link)?;
        }
        self.up.remove(id);
        self.down.remove(id);
        Ok(self.nodes.remove(id).expect("checked above"))
    }

    /// Replaces a node in place; its incident links are re-validated.
    pub fn replace_node(&mut self, node: Node) -> Result<(), GraphError> {
        node.validate()?;
        if !self.contains(&node.id) {
            return Err(GraphError::UnknownNode(node.id));
        }
        let mut next = self.clone();
        let id = node.id.clone();
        let incident: Vec<Link> = next
            .links
            .iter()
            .filter(|l| l.source == id || l.target == id)
            .cloned()
            .collect();
        for link in &incident {
            next.remove_link(link)?;
        }
        next.nodes.insert(id.clone(), node);
        for link in incident {
            next.add_link(link)?;
        }
        if next.top_claim.as_ref() == Some(&id) && !next.nodes[&id].is_claim() {
            return Err(GraphError::InvalidTopClaim(id, "not a claim"));
        }
        *self = next;
        Ok(())
    }

    /// Adds every node and link of `fragment`; all or nothing.
    pub fn merge(&mut self, fragment: &CaseGraph) -> Result<(), GraphError> {
        let mut next = self.clone();
        for node in fragment.nodes() {
            next.add_node(node.clone())?;
        }
        for link in fragment.links() {
            next.add_link(link.clone())?;
        }
        *self = next;
        Ok(())
    }

    /// Freezes a copy of the current graph under `label`.
    pub fn snapshot(&mut self, label: impl Into<String>) -> Result<(), GraphError> {
        let label = label.into();
        if self.snapshots.iter().any(|s| s.label == label) {
            return Err(GraphError::DuplicateLabel(label));
        }
        let mut frozen = self.clone();
        frozen.snapshots.clear();
        self.snapshots.push(Snapshot {
            label,
            graph: frozen,
        });
        Ok(())
    }

    pub(crate) fn push_snapshot(&mut self, snapshot: Snapshot) -> Result<(), GraphError> {
        if self.snapshots.iter().any(|s| s.label == snapshot.label) {
            return Err(GraphError::DuplicateLabel(snapshot.label));
        }
        self.snapshots.push(snapshot);
        Ok(())
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn snapshot_graph(&self, label: &str) -> Option<&CaseGraph> {
        self.snapshots
            .iter()
            .find(|s| s.label == label)
            .map(|s| &s.graph)
    }

    /// Copy of the graph with all embedded links dropped.
    pub fn without_embedded_links(&self) -> CaseGraph {
        let mut copy = self.clone();
        copy.links.retain(|l| l.kind != LinkKind::Embedded);
        copy
    }

    /// Nodes linked logically into `id` (subclaims, side-claims, evidence, supporting steps).
    pub fn logical_children(&self, id: &NodeId) -> impl Iterator<Item = &NodeId> {
        self.down.get(id).into_iter().flatten()
    }

    /// Nodes `id` links logically into.
    pub fn logical_targets(&self, id: &NodeId) -> impl Iterator<Item = &NodeId> {
        self.up.get(id).into_iter().flatten()
    }

    /// The parent claim (or defeater) of an argument step.
    pub fn logical_parent(&self, step: &NodeId) -> Option<&NodeId> {
        let node = self.node(step)?;
        if !node.is_step() {
            return None;
        }
        self.up.get(step).and_then(|t| t.iter().next())
    }

    /// Argument steps whose parent is `claim`.
    pub fn supporting_steps<'a>(&'a self, claim: &NodeId) -> impl Iterator<Item = &'a NodeId> + 'a {
        self.logical_children(claim)
            .filter(move |c| self.node(c).is_some_and(Node::is_step))
    }

    pub fn attackers<'a>(&'a self, id: &'a NodeId) -> impl Iterator<Item = &'a NodeId> + 'a {
        self.links
            .iter()
            .filter(move |l| l.kind == LinkKind::Attack && &l.target == id)
            .map(|l| &l.source)
    }

    pub fn attack_targets<'a>(&'a self, id: &'a NodeId) -> impl Iterator<Item = &'a NodeId> + 'a {
        self.links
            .iter()
            .filter(move |l| l.kind == LinkKind::Attack && &l.source == id)
            .map(|l| &l.target)
    }

    /// Every node below the top claim along logical links, top claim included.
    pub fn main_case(&self) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let Some(top) = &self.top_claim else {
            return seen;
        };
        let mut stack = vec![top.clone()];
        while let Some(id) = stack.pop() {
            if seen.insert(id.clone()) {
                stack.extend(self.logical_children(&id).cloned());
            }
        }
        seen
    }
}
