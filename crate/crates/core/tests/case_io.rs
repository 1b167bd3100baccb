mod common;

use casecalc_core::confirmation::{AcceptancePolicy, Measure};
use casecalc_core::dashboard::{dashboard, stats};
use casecalc_core::defeaters::{DoubtCategory, Label, ResidualDoubtLedger, ResidualEntry};
use casecalc_core::document::{
    parse, parse_str, serialize, CaseDocument, DiagnosticKind, EvidenceDecision,
};
use casecalc_core::evaluate::{evaluate, EvalOptions, View};
use casecalc_core::graph::{BlockKind, Link, Node, NodeId, Phase, Resolution, Severity};
use casecalc_core::propagation::{Color, PropagationConfig, Rule, Threshold};
use casecalc_core::sentencing::{skeleton, BulletStatus, SentencingError};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

fn id(s: &str) -> NodeId {
    NodeId::new(s)
}

#[test]
fn minimal_case_parses() {
    let doc = common::load("minimal");
    assert_eq!(doc.case.top_claim(), Some(&id("C")));
    assert_eq!(doc.case.len(), 3);
    let s = doc.case.node(&id("S")).unwrap();
    assert_eq!(s.block, Some(BlockKind::EvidenceIncorporation));
}

#[test]
fn claim_to_claim_names_the_rule() {
    let text = r#"{
  "format_version": "1",
  "case": {
    "top_claim": "A",
    "nodes": [
      {"id": "A", "kind": "claim"},
      {"id": "B", "kind": "claim"}
    ],
    "links": [{"source": "B", "target": "A", "kind": "logical"}]
  }
}"#;
    let err = parse_str(text).unwrap_err();
    assert_eq!(err.kind(), DiagnosticKind::Invariant);
    let d = &err.diagnostics[0];
    assert_eq!(d.rule.as_deref(), Some("claim-to-claim"));
    assert_eq!(d.location.as_deref(), Some("case.links[0]"));
}

#[test]
fn truncated_file_reports_position() {
    let bytes = common::fixture_bytes("sound_complete");
    for cut in [1, 40, bytes.len() / 2, bytes.len() - 3] {
        let err = parse(&bytes[..cut]).unwrap_err();
        assert_eq!(err.kind(), DiagnosticKind::Syntax, "cut at {cut}");
        let d = &err.diagnostics[0];
        assert!(d.line.unwrap() >= 1 && d.column.is_some());
    }
    let err = parse_str("{\n  \"format_version\": \"1\",\n  \"case\": [1,}").unwrap_err();
    assert_eq!(err.diagnostics[0].line, Some(3));
}

#[test]
fn schema_errors() {
    let err =
        parse_str(r#"{"format_version": "1", "case": {"nodes": [{"id": "X", "kind": "gadget"}]}}"#)
            .unwrap_err();
    assert_eq!(err.kind(), DiagnosticKind::Schema);
    let err = parse_str(r#"{"format_version": "2", "case": {"top_claim": "C", "nodes": [{"id": "C", "kind": "claim"}]}}"#)
        .unwrap_err();
    assert!(err.to_string().contains("format_version"), "{err}");
}

#[test]
fn corpus_has_twenty_cases() {
    assert_eq!(common::fixture_names().len(), 20);
}

#[test]
fn corpus_round_trips() {
    for name in common::fixture_names() {
        let bytes = common::fixture_bytes(&name);
        let doc = parse(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
        let text = serialize(&doc);
        // the fixtures are stored in canonical form
        assert_eq!(text.as_bytes(), &bytes[..], "{name}");
        assert_eq!(parse_str(&text).unwrap(), doc, "{name}");
    }
}

#[test]
fn unknown_fields_survive() {
    let mut v: Value = serde_json::from_slice(&common::fixture_bytes("two_snapshots")).unwrap();
    v["x_review"] = json!({"board": "SRB-7", "round": 2});
    v["case"]["x_layout"] = json!("layered");
    v["case"]["nodes"][0]["x_color_hint"] = json!([1, 2, 3]);
    v["case"]["snapshots"][0]["graph"]["x_frozen_by"] = json!("qa");
    v["metadata"]["x_project"] = json!("pump");
    let text = serde_json::to_string_pretty(&v).unwrap();
    let doc = parse_str(&text).unwrap();
    assert_eq!(doc.extra()["x_review"]["board"], "SRB-7");
    let back: Value = serde_json::from_str(&serialize(&doc)).unwrap();
    assert_eq!(back, v);
}

#[test]
fn evaluation_is_deterministic() {
    for name in common::fixture_names() {
        let doc = common::load(&name);
        for view in [View::IgnoreDefeaters, View::ApplyDefeaters] {
            let opts = EvalOptions {
                view,
                ..EvalOptions::default()
            };
            let a = evaluate(&doc, &opts).unwrap().to_json();
            let reparsed = parse_str(&serialize(&doc)).unwrap();
            let b = evaluate(&reparsed, &opts).unwrap().to_json();
            assert_eq!(a, b, "{name}");
        }
    }
}

#[test]
fn two_view_consistency_on_fixtures() {
    let mut with_in_defeater = 0;
    for name in common::fixture_names() {
        let doc = common::load(&name);
        let flags = casecalc_core::evaluate::SettingsLayer {
            rule: Some(Rule::Product),
            ..Default::default()
        };
        let run = |view| {
            evaluate(
                &doc,
                &EvalOptions {
                    view,
                    flags: flags.clone(),
                    ..EvalOptions::default()
                },
            )
            .unwrap()
        };
        let ignore = run(View::IgnoreDefeaters);
        let in_defeater = doc
            .case
            .nodes()
            .filter(|n| n.is_defeater())
            .any(|n| ignore.labeling.labels.get(&n.id) == Some(&Label::In));
        if !in_defeater {
            continue;
        }
        with_in_defeater += 1;
        let apply = run(View::ApplyDefeaters);
        let (Some(i), Some(a)) = (ignore.summary.top_value, apply.summary.top_value) else {
            continue;
        };
        assert!(a <= i, "{name}: {a} > {i}");
    }
    assert!(with_in_defeater >= 3, "{with_in_defeater}");
}

fn random_document(seed: u64) -> CaseDocument {
    let mut rng = StdRng::seed_from_u64(seed);
    let rc = common::random_case(&mut rng, 25);
    let mut g = rc.graph;
    let ids: Vec<NodeId> = g.nodes().map(|n| n.id.clone()).collect();
    let steps: Vec<NodeId> = g
        .nodes()
        .filter(|n| n.is_step())
        .map(|n| n.id.clone())
        .collect();
    let defeaters = rng.gen_range(0..4);
    for i in 0..defeaters {
        let d = format!("D{i}");
        let mut node = Node::defeater(d.as_str(), "doubt with \"quotes\" and ünïcode");
        if rng.gen_bool(0.5) {
            node = node.with_severity(
                *[Severity::Minor, Severity::Significant, Severity::Negligible]
                    .choose(&mut rng)
                    .unwrap(),
            );
        }
        if rng.gen_bool(0.5) {
            node = node.with_phase(Phase::Assessment);
        }
        if rng.gen_bool(0.3) {
            node = node.with_resolution(Resolution::AcceptedResidual);
        }
        g.add_node(node).unwrap();
        g.add_link(Link::attack(
            d.as_str(),
            ids.choose(&mut rng).unwrap().clone(),
        ))
        .unwrap();
    }
    if rng.gen_bool(0.5) {
        g.snapshot("draft").unwrap();
        g.add_node(Node::comment("N", "added after the draft"))
            .unwrap();
        g.add_link(Link::embedded("N", ids[0].clone())).unwrap();
    }
    let mut doc = CaseDocument::new(g);
    doc.metadata.title = format!("case {seed}");
    doc.metadata.authors = vec!["A. Reviewer".into()];
    doc.confidence_inputs = rc.inputs;
    doc.confidence_inputs.shuffle(&mut rng);
    for id in &ids {
        let node = doc.case.node(id).unwrap();
        if node.block == Some(BlockKind::EvidenceIncorporation) {
            let j = common::random_joint(&mut rng);
            doc.assessments.insert(id.clone(), j.assessment());
            if rng.gen_bool(0.2) {
                doc.evidence_decisions.insert(
                    id.clone(),
                    EvidenceDecision {
                        accepted: rng.gen_bool(0.5),
                        note: "board call".into(),
                    },
                );
            }
        }
    }
    if rng.gen_bool(0.7) {
        let mut cfg = PropagationConfig::new(if rng.gen_bool(0.5) {
            Rule::Product
        } else {
            Rule::SumOfDoubts
        });
        if let Some(step) = steps.choose(&mut rng) {
            cfg.factors.insert(step.clone(), rng.gen_range(0.5..1.2));
        }
        cfg.thresholds = vec![
            Threshold::new(0.0, Color::Red),
            Threshold::new(rng.gen_range(0.1..0.5), Color::Amber),
        ];
        cfg.clamp = rng.gen_bool(0.8);
        doc.propagation = Some(cfg);
    }
    if rng.gen_bool(0.5) {
        doc.acceptance = Some(AcceptancePolicy::new(
            *Measure::ALL.choose(&mut rng).unwrap(),
            rng.gen(),
        ));
    }
    if defeaters > 0 && rng.gen_bool(0.5) {
        let mut l = ResidualDoubtLedger::new(rng.gen_range(0.0..0.1));
        l.push(
            ResidualEntry::new("D0", DoubtCategory::Evidential, rng.gen_range(0.0..0.01))
                .with_severity(Severity::Minor),
        )
        .unwrap();
        doc.ledger = Some(l);
    }
    if rng.gen_bool(0.3) {
        doc.defeated_value = Some(rng.gen());
    }
    doc
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 300, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn random_documents_round_trip(seed in any::<u64>()) {
        let doc = random_document(seed);
        let text = serialize(&doc);
        let back = parse_str(&text).unwrap();
        let mut sorted = doc.clone();
        sorted.confidence_inputs.sort_by(|a, b| a.node.cmp(&b.node));
        prop_assert_eq!(&back, &sorted);
        prop_assert_eq!(serialize(&back), text);
    }
}

fn defeater_case(resolutions: &[Option<Resolution>]) -> CaseDocument {
    let (mut g, inputs) = common::conftab_case(2, 0.9, 0.9);
    for (i, r) in resolutions.iter().enumerate() {
        let d = format!("D{i}");
        let mut node = Node::defeater(d.as_str(), "");
        node.resolution = *r;
        g.add_node(node).unwrap();
        g.add_link(Link::attack(d.as_str(), "S0")).unwrap();
    }
    let mut doc = CaseDocument::new(g);
    doc.confidence_inputs = inputs;
    doc
}

#[test]
fn dashboard_counts() {
    let doc = defeater_case(&[
        Some(Resolution::AcceptedResidual),
        Some(Resolution::CaseRevised),
        Some(Resolution::AssumptionAdded),
        None,
    ]);
    let s = stats(&doc, &EvalOptions::default()).unwrap();
    assert_eq!((s.defeaters.resolved, s.defeaters.open), (3, 1));
    assert_eq!(s.defeaters.total, 4);
    assert_eq!(s.defeaters.by_phase["untagged"], 4);

    let empty = common::load("empty");
    let s = stats(&empty, &EvalOptions::default()).unwrap();
    assert_eq!(s.defeaters.total, 0);
    assert!(s.metrics().values().all(|v| *v == 0), "{:?}", s.metrics());
}

#[test]
fn dashboard_snapshot_deltas() {
    let doc = common::load("two_snapshots");
    let d = dashboard(&doc, &EvalOptions::default()).unwrap();
    assert_eq!(d.snapshots.len(), 2);
    let first = &d.snapshots[0].stats;
    let second = &d.snapshots[1].stats;
    for (k, v) in &d.snapshots[1].delta {
        let before = first.metrics().get(k).copied().unwrap_or(0);
        let after = second.metrics().get(k).copied().unwrap_or(0);
        assert_eq!(after - before, *v, "{k}");
    }
    assert!(!d.snapshots[1].delta.is_empty());
    assert!(d.snapshots[0].delta.is_empty() || d.snapshots[0].delta.values().all(|v| *v != 0));
}

fn report_for(doc: &CaseDocument) -> Value {
    serde_json::from_str(&evaluate(doc, &EvalOptions::default()).unwrap().to_json()).unwrap()
}

#[test]
fn sentencing_skeleton_for_a_sound_case() {
    let report = report_for(&common::load("sound_complete"));
    assert_eq!(report["summary"]["sound"], true);
    let s = skeleton(&report).unwrap();
    assert_eq!(s.verdict, "");
    assert!(s.bullets.iter().all(|b| b.judgment.is_empty()));
    for key in ["clear_thread", "evidence_sufficient", "explored_doubts"] {
        let b = s.bullets.iter().find(|b| b.key == key).unwrap();
        assert_eq!(b.status, BulletStatus::Satisfied, "{key}");
    }
}

#[test]
fn sentencing_flags_unexplored_doubts() {
    let report = report_for(&common::load("minimal"));
    let s = skeleton(&report).unwrap();
    let b = s
        .bullets
        .iter()
        .find(|b| b.key == "explored_doubts")
        .unwrap();
    assert_eq!(b.status, BulletStatus::Unsupported);
}

#[test]
fn sentencing_refuses_unevaluated_input() {
    let doc: Value = serde_json::from_slice(&common::fixture_bytes("minimal")).unwrap();
    assert_eq!(skeleton(&doc), Err(SentencingError::Unevaluated));
    assert_eq!(
        skeleton(&json!({"hello": 1})),
        Err(SentencingError::NotAReport)
    );
    assert!(SentencingError::Unevaluated
        .to_string()
        .contains("casecalc evaluate"));
}

#[test]
fn report_sections_and_ordering() {
    let doc = common::load("two_snapshots");
    let text = evaluate(&doc, &EvalOptions::default()).unwrap().to_json();
    let v: Value = serde_json::from_str(&text).unwrap();
    for section in [
        "structure",
        "confirmation",
        "confidence",
        "labeling",
        "residual",
        "severity",
    ] {
        assert!(v.get(section).is_some(), "{section}");
    }
    let keys: Vec<&String> = v["confidence"]["values"]
        .as_object()
        .unwrap()
        .keys()
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}
