//! Logical assessment: validity, full validity, inductive labeling and soundness.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::defeaters::{label, unresolved_defeaters};
use crate::graph::{Attestation, BlockKind, CaseGraph, NodeId, NodeKind, RoleFlag, Severity};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub node: NodeId,
    pub rule: String,
    pub message: String,
}

impl Violation {
    fn new(node: &NodeId, rule: &str, message: impl Into<String>) -> Self {
        Self {
            node: node.clone(),
            rule: rule.to_owned(),
            message: message.into(),
        }
    }
}

/// Overall verdict, from worst to best.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseLabel {
    Invalid,
    Incomplete,
    Inductive,
    FullyValid,
    Sound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralReport {
    pub logical_validity: bool,
    pub violations: Vec<Violation>,
    /// Leaf claims of the main case, assumptions included.
    pub unsupported_claims: Vec<NodeId>,
    pub assumptions: Vec<NodeId>,
    pub possibly_missing: Vec<NodeId>,
    pub inductive_steps: Vec<NodeId>,
    pub active_defeaters: Vec<NodeId>,
    /// Active defeaters excused as accepted residual doubts.
    pub excused_defeaters: Vec<NodeId>,
    pub fully_valid: bool,
    pub sound: bool,
    /// Main-case steps lacking a sound-justification attestation.
    pub unattested_steps: Vec<NodeId>,
    /// Main-case evidence-incorporation steps not accepted.
    pub pending_evidence: Vec<NodeId>,
    pub case_label: CaseLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StructureError {
    #[error("unknown node `{0}` in the residual-accepted set")]
    UnknownNodeId(NodeId),
}

/// Structural checks of every logical-link rule. Never fails; problems are
/// reported as violations.
pub fn check_validity(graph: &CaseGraph) -> StructuralReport {
    let mut violations = Vec::new();
    let top = graph.top_claim();
    if top.is_none() {
        violations.push(Violation::new(
            &NodeId::new(""),
            "top-claim",
            "the case has no top claim",
        ));
    }

    for node in graph.nodes() {
        match node.kind {
            NodeKind::ArgumentStep => {
                let parents: Vec<&NodeId> = graph.logical_targets(&node.id).collect();
                match parents.as_slice() {
                    [] => violations.push(Violation::new(
                        &node.id,
                        "single-parent",
                        "argument step supports no claim",
                    )),
                    [_] => {}
                    _ => violations.push(Violation::new(
                        &node.id,
                        "single-parent",
                        "argument step supports more than one claim",
                    )),
                }
                check_arity(
                    graph,
                    &node.id,
                    node.block.expect("steps carry a block"),
                    &mut violations,
                );
            }
            NodeKind::Claim => {
                let support = graph.supporting_steps(&node.id).count();
                if support > 1 {
                    violations.push(Violation::new(
                        &node.id,
                        "single-support",
                        format!("claim is supported by {support} argument steps"),
                    ));
                }
            }
            _ => {}
        }
    }

    if let Some(cycle_at) = find_cycle(graph) {
        violations.push(Violation::new(
            &cycle_at,
            "acyclic",
            "logical links form a cycle",
        ));
    }

    // everything must hang below the top claim or below a defeater
    let mut rooted = graph.main_case();
    for d in graph.nodes().filter(|n| n.is_defeater()) {
        collect_below(graph, &d.id, &mut rooted);
    }
    for node in graph.nodes() {
        let needs_root = matches!(
            node.kind,
            NodeKind::Claim | NodeKind::ArgumentStep | NodeKind::Evidence
        );
        if needs_root && !rooted.contains(&node.id) {
            violations.push(Violation::new(
                &node.id,
                "rooted",
                "not connected to the top claim or to a defeater",
            ));
        }
    }

    violations.sort();
    let main = graph.main_case();
    let main_claims = || {
        graph
            .nodes()
            .filter(|n| n.is_claim() && main.contains(&n.id))
    };
    let unsupported_claims: Vec<NodeId> = main_claims()
        .filter(|n| graph.supporting_steps(&n.id).next().is_none())
        .map(|n| n.id.clone())
        .collect();
    let assumptions = main_claims()
        .filter(|n| n.has_role(RoleFlag::Assumption))
        .map(|n| n.id.clone())
        .collect();
    let possibly_missing = main_claims()
        .filter(|n| n.has_role(RoleFlag::PossiblyMissing))
        .map(|n| n.id.clone())
        .collect();
    let inductive_steps = graph
        .nodes()
        .filter(|n| n.is_step() && n.inductive && main.contains(&n.id))
        .map(|n| n.id.clone())
        .collect();
    let logical_validity = violations.is_empty();
    StructuralReport {
        logical_validity,
        violations,
        unsupported_claims,
        assumptions,
        possibly_missing,
        inductive_steps,
        active_defeaters: Vec::new(),
        excused_defeaters: Vec::new(),
        fully_valid: false,
        sound: false,
        unattested_steps: Vec::new(),
        pending_evidence: Vec::new(),
        case_label: if logical_validity {
            CaseLabel::Incomplete
        } else {
            CaseLabel::Invalid
        },
    }
}

fn check_arity(graph: &CaseGraph, step: &NodeId, block: BlockKind, out: &mut Vec<Violation>) {
    let mut subclaims = 0;
    let mut evidence = 0;
    for child in graph.logical_children(step) {
        let Some(node) = graph.node(child) else {
            continue;
        };
        match node.kind {
            NodeKind::Evidence => evidence += 1,
            NodeKind::Claim if !node.has_role(RoleFlag::SideClaim) => subclaims += 1,
            _ => {}
        }
    }
    let mut flag = |rule: &str, message: String| out.push(Violation::new(step, rule, message));
    match block {
        BlockKind::Substitution | BlockKind::Concretion => {
            if subclaims != 1 {
                flag(
                    "single-subclaim",
                    format!(
                        "{block:?} step needs exactly one non-side subclaim, found {subclaims}"
                    ),
                );
            }
        }
        BlockKind::Decomposition | BlockKind::Calculation => {
            if subclaims == 0 {
                flag(
                    "subclaim-required",
                    format!("{block:?} step needs at least one non-side subclaim"),
                );
            }
        }
        BlockKind::EvidenceIncorporation => {
            if evidence == 0 {
                flag(
                    "evidence-required",
                    "evidence incorporation step has no evidence".into(),
                );
            }
            if subclaims > 0 {
                flag(
                    "evidence-step-children",
                    "evidence incorporation step may only take side-claims besides evidence".into(),
                );
            }
        }
    }
    if evidence > 0 && block != BlockKind::EvidenceIncorporation {
        flag(
            "evidence-placement",
            format!("evidence may only feed an evidence incorporation step, not a {block:?} step"),
        );
    }
}

fn collect_below(graph: &CaseGraph, root: &NodeId, seen: &mut BTreeSet<NodeId>) {
    let mut local = BTreeSet::new();
    let mut stack = vec![root.clone()];
    while let Some(id) = stack.pop() {
        if local.insert(id.clone()) {
            stack.extend(graph.logical_children(&id).cloned());
        }
    }
    seen.extend(local);
}

fn find_cycle(graph: &CaseGraph) -> Option<NodeId> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }
    let mut marks: BTreeMap<&NodeId, Mark> = BTreeMap::new();
    for start in graph.nodes().map(|n| &n.id) {
        if marks.contains_key(start) {
            continue;
        }
        let mut stack: Vec<(&NodeId, Vec<&NodeId>)> =
            vec![(start, graph.logical_targets(start).collect())];
        marks.insert(start, Mark::Active);
        while let Some((id, pending)) = stack.last_mut() {
            match pending.pop() {
                Some(next) => match marks.get(next) {
                    Some(Mark::Active) => return Some(next.clone()),
                    Some(Mark::Done) => {}
                    None => {
                        marks.insert(next, Mark::Active);
                        stack.push((next, graph.logical_targets(next).collect()));
                    }
                },
                None => {
                    marks.insert(id, Mark::Done);
                    stack.pop();
                }
            }
        }
    }
    None
}

/// Validity plus the deductiveness, completeness and defeater checks.
pub fn check_full_validity(
    graph: &CaseGraph,
    residual_accepted: &BTreeSet<NodeId>,
) -> Result<StructuralReport, StructureError> {
    if let Some(unknown) = residual_accepted.iter().find(|id| !graph.contains(id)) {
        return Err(StructureError::UnknownNodeId(unknown.clone()));
    }
    let mut report = check_validity(graph);
    let labeling = label(graph);
    let active = unresolved_defeaters(graph, &labeling);
    let (excused, remaining): (Vec<NodeId>, Vec<NodeId>) = active.iter().cloned().partition(|d| {
        residual_accepted.contains(d)
            && graph
                .node(d)
                .is_some_and(|n| n.effective_severity() != Severity::Significant)
    });
    report.active_defeaters = active;
    report.excused_defeaters = excused;

    let assumptions: BTreeSet<&NodeId> = report.assumptions.iter().collect();
    let open_leaves: Vec<&NodeId> = report
        .unsupported_claims
        .iter()
        .filter(|c| !assumptions.contains(c))
        .collect();
    report.fully_valid = report.logical_validity
        && open_leaves.is_empty()
        && report.inductive_steps.is_empty()
        && remaining.is_empty();

    let missing: BTreeSet<&NodeId> = report.possibly_missing.iter().collect();
    report.case_label = if !report.logical_validity {
        CaseLabel::Invalid
    } else if open_leaves.iter().any(|c| !missing.contains(c)) {
        CaseLabel::Incomplete
    } else if !report.inductive_steps.is_empty()
        || !report.possibly_missing.is_empty()
        || !report.assumptions.is_empty()
        || !remaining.is_empty()
    {
        CaseLabel::Inductive
    } else {
        CaseLabel::FullyValid
    };
    Ok(report)
}

/// Adds the human attestations and evidence acceptance on top of full validity.
pub fn check_soundness(
    graph: &CaseGraph,
    report: &StructuralReport,
    evidence_accepted: &BTreeSet<NodeId>,
) -> StructuralReport {
    let mut report = report.clone();
    let main = graph.main_case();
    let steps = || {
        graph
            .nodes()
            .filter(|n| n.is_step() && main.contains(&n.id))
    };
    report.unattested_steps = steps()
        .filter(|n| n.attestation != Some(Attestation::SoundJustification))
        .map(|n| n.id.clone())
        .collect();
    report.pending_evidence = steps()
        .filter(|n| n.block == Some(BlockKind::EvidenceIncorporation))
        .filter(|n| !evidence_accepted.contains(&n.id))
        .map(|n| n.id.clone())
        .collect();
    report.sound = report.fully_valid
        && report.unattested_steps.is_empty()
        && report.pending_evidence.is_empty();
    if report.sound && report.case_label == CaseLabel::FullyValid {
        report.case_label = CaseLabel::Sound;
    }
    report
}

/// The whole pipeline in one call.
pub fn assess(
    graph: &CaseGraph,
    residual_accepted: &BTreeSet<NodeId>,
    evidence_accepted: &BTreeSet<NodeId>,
) -> Result<StructuralReport, StructureError> {
    let report = check_full_validity(graph, residual_accepted)?;
    Ok(check_soundness(graph, &report, evidence_accepted))
}
