mod common;

use std::collections::{BTreeMap, BTreeSet};

use casecalc_core::defeaters::label;
use casecalc_core::graph::{
    BlockKind, CaseGraph, GraphError, Link, LinkKind, Node, NodeId, NodeKind, RoleFlag,
};
use casecalc_core::propagation::{propagate, PropagationConfig, Rule};
use casecalc_core::structure::check_validity;
use casecalc_core::template::{Template, TemplateError};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn id(s: &str) -> NodeId {
    NodeId::new(s)
}

fn two_level() -> CaseGraph {
    let mut g = CaseGraph::with_top_claim(Node::claim("C1", "system is safe")).unwrap();
    g.add_node(Node::step("A1", BlockKind::Decomposition))
        .unwrap();
    g.add_node(Node::claim("C2", "hazard one is mitigated"))
        .unwrap();
    g.add_link(Link::logical("A1", "C1")).unwrap();
    g.add_link(Link::logical("C2", "A1")).unwrap();
    g
}

#[test]
fn add_node_to_empty_graph() {
    let mut g = CaseGraph::new();
    g.add_node(Node::claim("C1", "top")).unwrap();
    assert_eq!(g.len(), 1);
    assert!(g.contains(&id("C1")));
}

#[test]
fn step_without_block_is_malformed() {
    let mut g = CaseGraph::new();
    let mut step = Node::step("A", BlockKind::Decomposition);
    step.block = None;
    assert!(matches!(
        g.add_node(step),
        Err(GraphError::MalformedNode { .. })
    ));
    assert!(g.is_empty());
}

#[test]
fn node_field_invariants() {
    let mut g = CaseGraph::new();
    let mut claim_with_block = Node::claim("C", "");
    claim_with_block.block = Some(BlockKind::Calculation);
    assert!(matches!(
        g.add_node(claim_with_block),
        Err(GraphError::MalformedNode { .. })
    ));

    let mut severe_claim = Node::claim("C", "");
    severe_claim.severity = Some(casecalc_core::graph::Severity::Minor);
    assert!(matches!(
        g.add_node(severe_claim),
        Err(GraphError::MalformedNode { .. })
    ));

    let assumed_evidence = Node::evidence("E", "").with_role(RoleFlag::Assumption);
    assert!(matches!(
        g.add_node(assumed_evidence),
        Err(GraphError::MalformedNode { .. })
    ));
    let missing_step =
        Node::step("S", BlockKind::Decomposition).with_role(RoleFlag::PossiblyMissing);
    assert!(matches!(
        g.add_node(missing_step),
        Err(GraphError::MalformedNode { .. })
    ));
    g.add_node(Node::claim("A", "").assumption()).unwrap();
    g.add_node(Node::claim("M", "").with_role(RoleFlag::PossiblyMissing))
        .unwrap();
}

#[test]
fn duplicate_id_is_rejected() {
    let mut g = CaseGraph::new();
    g.add_node(Node::claim("C1", "a")).unwrap();
    let before = g.clone();
    assert_eq!(
        g.add_node(Node::evidence("C1", "b")),
        Err(GraphError::DuplicateId(id("C1")))
    );
    assert_eq!(g, before);
}

#[test]
fn legal_logical_link_is_accepted() {
    let mut g = CaseGraph::with_top_claim(Node::claim("C1", "")).unwrap();
    g.add_node(Node::step("A1", BlockKind::Decomposition))
        .unwrap();
    g.add_node(Node::claim("C2", "")).unwrap();
    g.add_link(Link::logical("A1", "C1")).unwrap();
    g.add_link(Link::logical("C2", "A1")).unwrap();
    assert_eq!(g.links().count(), 2);
}

#[test]
fn claim_to_claim_link_is_illegal() {
    let mut g = two_level();
    g.add_node(Node::claim("C3", "")).unwrap();
    let err = g.add_link(Link::logical("C3", "C2")).unwrap_err();
    assert!(matches!(err, GraphError::IllegalEndpoints { .. }));
    assert_eq!(err.rule(), "claim-to-claim");
}

#[test]
fn closing_a_cycle_is_rejected() {
    let mut g = two_level();
    g.add_node(Node::step("A2", BlockKind::Decomposition))
        .unwrap();
    g.add_link(Link::logical("A2", "C2")).unwrap();
    g.add_node(Node::claim("C3", "")).unwrap();
    g.add_link(Link::logical("C3", "A2")).unwrap();
    g.add_node(Node::step("A3", BlockKind::Substitution))
        .unwrap();
    g.add_link(Link::logical("A3", "C3")).unwrap();
    // C2 below A3 would make C2 -> A3 -> C3 -> A2 -> C2
    let err = g.add_link(Link::logical("C2", "A3")).unwrap_err();
    assert!(matches!(err, GraphError::CycleIntroduced { .. }));
}

#[test]
fn second_parent_is_rejected() {
    let mut g = two_level();
    g.add_node(Node::claim("C3", "")).unwrap();
    assert!(matches!(
        g.add_link(Link::logical("A1", "C3")),
        Err(GraphError::SecondParent { .. })
    ));
}

#[test]
fn top_claim_cannot_support_anything() {
    let mut g = two_level();
    g.add_node(Node::step("A2", BlockKind::Decomposition))
        .unwrap();
    let err = g.add_link(Link::logical("C1", "A2")).unwrap_err();
    assert!(matches!(err, GraphError::IllegalEndpoints { .. }));
}

#[test]
fn attack_link_endpoints() {
    let mut g = two_level();
    g.add_node(Node::defeater("D1", "")).unwrap();
    g.add_node(Node::defeater("D2", "")).unwrap();
    g.add_node(Node::comment("N", "remark")).unwrap();
    for target in ["C2", "A1", "D2"] {
        g.add_link(Link::attack("D1", target)).unwrap();
    }
    // mutual attack is allowed
    g.add_link(Link::attack("D2", "D1")).unwrap();
    assert!(g.add_link(Link::attack("C2", "C1")).is_err());
    assert!(g.add_link(Link::attack("D1", "N")).is_err());
    assert!(g.add_link(Link::attack("D1", "D1")).is_err());
}

#[test]
fn evidence_can_carry_only_outgoing_logical_links_into_steps() {
    let mut g = two_level();
    g.add_node(Node::evidence("E", "")).unwrap();
    assert!(g.add_link(Link::logical("E", "C2")).is_err());
    assert!(g.add_link(Link::logical("A1", "E")).is_err());
    g.add_node(Node::step("A2", BlockKind::EvidenceIncorporation))
        .unwrap();
    g.add_link(Link::logical("E", "A2")).unwrap();
}

fn arducopter_template() -> Template {
    let mut body =
        CaseGraph::with_top_claim(Node::claim("R", "requirements for $X$ are correct")).unwrap();
    body.add_node(Node::step("S", BlockKind::Concretion))
        .unwrap();
    body.add_node(Node::claim("F", "formal requirements for $X$ are correct"))
        .unwrap();
    body.add_node(Node::claim("P", "the formalization of $X$ is faithful").side_claim())
        .unwrap();
    body.add_link(Link::logical("S", "R")).unwrap();
    body.add_link(Link::logical("F", "S")).unwrap();
    body.add_link(Link::logical("P", "S")).unwrap();
    Template::new(
        "requirements",
        vec!["X".into()],
        body,
        BTreeSet::from([id("P")]),
    )
    .unwrap()
}

#[test]
fn template_substitutes_placeholders() {
    let t = arducopter_template();
    let bindings = BTreeMap::from([("X".to_owned(), "ArduCopter AFS".to_owned())]);
    let g = t.instantiate(&bindings, "t1").unwrap();
    let top = g.node(&id("t1.R")).unwrap();
    assert_eq!(top.narrative, "requirements for ArduCopter AFS are correct");
    assert!(g.nodes().all(|n| !n.narrative.contains('$')));
    assert!(g
        .node(&id("t1.P"))
        .unwrap()
        .has_role(RoleFlag::Precondition));
    assert!(!g
        .node(&id("t1.F"))
        .unwrap()
        .has_role(RoleFlag::Precondition));
    assert_eq!(g.top_claim(), Some(&id("t1.R")));
    assert!(check_validity(&g).logical_validity);
}

#[test]
fn template_without_parameters_copies_verbatim() {
    let mut body = CaseGraph::with_top_claim(Node::claim("R", "no placeholders here")).unwrap();
    body.add_node(Node::step("S", BlockKind::EvidenceIncorporation))
        .unwrap();
    body.add_node(Node::evidence("E", "a log")).unwrap();
    body.add_link(Link::logical("S", "R")).unwrap();
    body.add_link(Link::logical("E", "S")).unwrap();
    let t = Template::new("plain", vec![], body.clone(), BTreeSet::new()).unwrap();
    let a = t.instantiate(&BTreeMap::new(), "a").unwrap();
    let b = t.instantiate(&BTreeMap::new(), "b").unwrap();
    // same shape and text, disjoint ids
    let strip = |g: &CaseGraph, prefix: &str| {
        g.nodes()
            .map(|n| {
                let mut n = n.clone();
                n.id = NodeId::new(n.id.as_str().strip_prefix(prefix).unwrap());
                n
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&a, "a."), body.nodes().cloned().collect::<Vec<_>>());
    assert_eq!(strip(&a, "a."), strip(&b, "b."));
    assert!(a.nodes().all(|n| !b.contains(&n.id)));
    assert_eq!(a.links().count(), body.links().count());
}

#[test]
fn missing_binding_is_unbound_placeholder() {
    let t = arducopter_template();
    assert_eq!(
        t.instantiate(&BTreeMap::new(), "t1"),
        Err(TemplateError::UnboundPlaceholder("X".into()))
    );
}

#[test]
fn template_declarations_are_checked() {
    let body = CaseGraph::with_top_claim(Node::claim("R", "about $Y$")).unwrap();
    assert!(matches!(
        Template::new("t", vec!["X".into()], body, BTreeSet::new()),
        Err(TemplateError::UndeclaredPlaceholder(..))
    ));
    let body = CaseGraph::with_top_claim(Node::claim("R", "")).unwrap();
    assert!(matches!(
        Template::new("t", vec![], body, BTreeSet::from([id("R")])),
        Err(TemplateError::PreconditionNotSideClaim(_))
    ));
}

#[test]
fn instantiated_fragment_merges_into_a_case() {
    let t = arducopter_template();
    let bindings = BTreeMap::from([("X".to_owned(), "ArduCopter AFS".to_owned())]);
    let fragment = t.instantiate(&bindings, "req").unwrap();
    let mut g = CaseGraph::with_top_claim(Node::claim("C0", "safe")).unwrap();
    g.add_node(Node::step("S0", BlockKind::Decomposition))
        .unwrap();
    g.add_link(Link::logical("S0", "C0")).unwrap();
    g.merge(&fragment).unwrap();
    g.add_link(Link::logical("req.R", "S0")).unwrap();
    assert!(check_validity(&g).logical_validity);
    // merging twice collides on ids and leaves the graph untouched
    let before = g.clone();
    assert!(g.merge(&fragment).is_err());
    assert_eq!(g, before);
}

#[test]
fn snapshot_then_edit_leaves_frozen_copy() {
    let mut g = two_level();
    g.snapshot("v1").unwrap();
    g.add_node(Node::claim("C3", "")).unwrap();
    let frozen = g.snapshot_graph("v1").unwrap();
    assert!(!frozen.contains(&id("C3")));
    assert!(g.contains(&id("C3")));
    assert_ne!(frozen.len(), g.len());
}

#[test]
fn duplicate_snapshot_label() {
    let mut g = two_level();
    g.snapshot("v1").unwrap();
    assert_eq!(
        g.snapshot("v1"),
        Err(GraphError::DuplicateLabel("v1".into()))
    );
    assert_eq!(g.snapshots().len(), 1);
}

#[test]
fn before_and_after_snapshots_for_a_revision() {
    use casecalc_core::defeaters::{
        resolve_defeater, Edit, ResidualDoubtLedger, ResolutionPayload,
    };
    let mut g = two_level();
    g.add_node(Node::defeater("D", "A1 ignores hazard two"))
        .unwrap();
    g.add_link(Link::attack("D", "A1")).unwrap();
    let payload = ResolutionPayload::CaseRevised {
        before: "before".into(),
        after: "after".into(),
        edits: vec![
            Edit::AddNode(Node::claim("C3", "hazard two is mitigated")),
            Edit::AddLink(Link::logical("C3", "A1")),
        ],
    };
    let out = resolve_defeater(&g, &ResidualDoubtLedger::default(), &id("D"), payload).unwrap();
    let before = out.graph.snapshot_graph("before").unwrap();
    let after = out.graph.snapshot_graph("after").unwrap();
    assert!(!before.contains(&id("C3")));
    assert!(after.contains(&id("C3")));
    assert!(out.graph.contains(&id("C3")));
}

/// Random valid case plus random embedded links and comments.
fn with_embedded(rng: &mut StdRng, g: &CaseGraph) -> CaseGraph {
    let mut out = g.clone();
    out.add_node(Node::subcase_note("NOTE", "see the hazard log"))
        .unwrap();
    out.add_node(Node::comment("REM", "reviewed")).unwrap();
    out.add_link(Link::embedded("NOTE", out.top_claim().unwrap().clone()))
        .unwrap();
    let ids: Vec<NodeId> = out.nodes().map(|n| n.id.clone()).collect();
    for _ in 0..rng.gen_range(1..8) {
        let a = &ids[rng.gen_range(0..ids.len())];
        let b = &ids[rng.gen_range(0..ids.len())];
        let _ = out.add_link(Link::embedded(a.clone(), b.clone()));
    }
    out
}

#[test]
fn embedded_links_change_no_valuation() {
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..150 {
        let case = common::random_case(&mut rng, 30);
        let mut g = case.graph.clone();
        // a few defeaters so labeling has something to do
        let targets: Vec<NodeId> = g.nodes().map(|n| n.id.clone()).collect();
        for k in 0..rng.gen_range(0..3) {
            let d = NodeId::new(format!("D{k}"));
            g.add_node(Node::defeater(d.clone(), "")).unwrap();
            let t = targets[rng.gen_range(0..targets.len())].clone();
            g.add_link(Link::attack(d, t)).unwrap();
        }
        let noisy = with_embedded(&mut rng, &g);
        assert!(noisy.links().any(|l| l.kind == LinkKind::Embedded));
        let stripped = noisy.without_embedded_links();

        assert_eq!(check_validity(&noisy), check_validity(&stripped));
        assert_eq!(label(&noisy), label(&stripped));
        for rule in [Rule::Product, Rule::SumOfDoubts] {
            let cfg = PropagationConfig::new(rule);
            assert_eq!(
                propagate(&noisy, &case.inputs, &cfg),
                propagate(&stripped, &case.inputs, &cfg)
            );
        }
    }
}

#[test]
fn every_reachable_graph_keeps_its_invariants() {
    // throw random links at a graph; whatever is accepted must keep the
    // logical subgraph acyclic, one parent per step and no claim-to-claim link
    let mut rng = StdRng::seed_from_u64(5);
    let kinds = [LinkKind::Logical, LinkKind::Embedded, LinkKind::Attack];
    for _ in 0..100 {
        let mut g = CaseGraph::with_top_claim(Node::claim("T", "")).unwrap();
        for i in 0..12 {
            let node = match rng.gen_range(0..5) {
                0 => Node::claim(format!("C{i}").as_str(), ""),
                1 => Node::step(format!("S{i}").as_str(), BlockKind::Decomposition),
                2 => Node::evidence(format!("E{i}").as_str(), ""),
                3 => Node::defeater(format!("D{i}").as_str(), ""),
                _ => Node::step(format!("X{i}").as_str(), BlockKind::EvidenceIncorporation),
            };
            g.add_node(node).unwrap();
        }
        let ids: Vec<NodeId> = g.nodes().map(|n| n.id.clone()).collect();
        for _ in 0..60 {
            let a = ids[rng.gen_range(0..ids.len())].clone();
            let b = ids[rng.gen_range(0..ids.len())].clone();
            let _ = g.add_link(Link::new(a, b, kinds[rng.gen_range(0..3)]));
        }
        let report = check_validity(&g);
        assert!(!report.violations.iter().any(|v| v.rule == "acyclic"));
        for n in g.nodes() {
            if n.kind == NodeKind::ArgumentStep {
                assert!(g.logical_targets(&n.id).count() <= 1);
            }
            if n.kind == NodeKind::Claim {
                assert!(g
                    .logical_targets(&n.id)
                    .all(|t| g.node(t).unwrap().kind == NodeKind::ArgumentStep));
            }
        }
        assert!(g.logical_targets(&id("T")).next().is_none());
        for l in g.links().filter(|l| l.kind == LinkKind::Attack) {
            assert_eq!(g.node(&l.source).unwrap().kind, NodeKind::Defeater);
        }
    }
}
