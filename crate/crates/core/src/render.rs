//! Human-readable report text and Graphviz export.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::evaluate::{EvidenceProvenance, Report};
use crate::graph::{CaseGraph, LinkKind, NodeId, NodeKind, RoleFlag};
use crate::propagation::Color;

fn yes(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn ids(v: &[NodeId]) -> String {
    if v.is_empty() {
        "-".to_owned()
    } else {
        v.iter().map(NodeId::as_str).collect::<Vec<_>>().join(", ")
    }
}

fn name<T: serde::Serialize>(t: &T) -> String {
    match serde_json::to_value(t) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

pub fn report_text(r: &Report) -> String {
    let mut o = String::new();
    let s = &r.summary;
    if !r.title.is_empty() {
        let _ = writeln!(o, "{}", r.title);
    }
    let _ = writeln!(o, "case label:      {}", name(&s.case_label));
    let _ = writeln!(o, "exit code:       {}", s.exit_code);
    let _ = writeln!(
        o,
        "rule / view:     {} / {}",
        r.settings.propagation.rule,
        name(&r.settings.view)
    );
    match s.top_value {
        Some(v) => {
            let _ = writeln!(
                o,
                "top confidence:  {v:.6} ({})",
                s.top_color.map(|c| name(&c)).unwrap_or_default()
            );
        }
        None => {
            let _ = writeln!(o, "top confidence:  n/a");
        }
    }
    let _ = writeln!(o, "residual bound:  {:.6}", s.residual_bound);
    let _ = writeln!(
        o,
        "severity gate:   {}",
        if s.gate_passed { "passed" } else { "failed" }
    );

    let st = &r.structure;
    let _ = writeln!(o, "\n[structure]");
    let _ = writeln!(o, "  logically valid: {}", yes(st.logical_validity));
    let _ = writeln!(o, "  fully valid:     {}", yes(st.fully_valid));
    let _ = writeln!(o, "  sound:           {}", yes(st.sound));
    for v in &st.violations {
        let _ = writeln!(o, "  violation [{}] at {}: {}", v.rule, v.node, v.message);
    }
    let _ = writeln!(o, "  unsupported claims: {}", ids(&st.unsupported_claims));
    let _ = writeln!(o, "  assumptions:        {}", ids(&st.assumptions));
    let _ = writeln!(o, "  inductive steps:    {}", ids(&st.inductive_steps));
    let _ = writeln!(o, "  active defeaters:   {}", ids(&st.active_defeaters));
    let _ = writeln!(o, "  unattested steps:   {}", ids(&st.unattested_steps));

    let _ = writeln!(
        o,
        "\n[confirmation] {} {}",
        r.settings.acceptance.measure, r.settings.acceptance.threshold
    );
    for (id, p) in &r.confirmation.steps {
        let line = match p {
            EvidenceProvenance::Measure { decision } => format!(
                "{} = {:.6} -> {}",
                decision.chosen.measure,
                decision.chosen.value,
                if decision.accepted {
                    "accepted"
                } else {
                    "not accepted"
                }
            ),
            EvidenceProvenance::Human { accepted, note } => format!(
                "human decision -> {} {}",
                if *accepted {
                    "accepted"
                } else {
                    "not accepted"
                },
                note
            ),
            EvidenceProvenance::Error { message } => format!("error: {message}"),
            EvidenceProvenance::Missing => "no assessment".to_owned(),
        };
        let _ = writeln!(o, "  {id}: {}", line.trim_end());
    }

    let _ = writeln!(o, "\n[confidence]");
    if let Some(e) = &r.confidence.error {
        let _ = writeln!(o, "  error: {e}");
    }
    for (id, a) in &r.confidence.values {
        let color = r.confidence.colors.get(id).map(name).unwrap_or_default();
        let flag = if r.confidence.overrides.contains_key(id) {
            " (override)"
        } else {
            ""
        };
        let _ = writeln!(o, "  {id}: {:.6} {color}{flag}", a.value);
    }
    for d in &r.confidence.diagnostics {
        let _ = writeln!(o, "  note: {d}");
    }

    let _ = writeln!(o, "\n[labeling]");
    for (id, l) in &r.labeling.labels {
        let _ = writeln!(o, "  {id}: {}", name(l));
    }
    let _ = writeln!(o, "  unresolved: {}", ids(&r.labeling.unresolved_defeaters));

    let _ = writeln!(o, "\n[residual]");
    for (c, v) in &r.residual.per_category {
        let _ = writeln!(o, "  {}: {v:.6}", name(c));
    }
    let _ = writeln!(o, "  bound: {:.6}", r.residual.bound);

    let _ = writeln!(o, "\n[severity]");
    for (sev, n) in &r.severity.counts {
        let _ = writeln!(o, "  {}: {n}", name(sev));
    }
    for issue in &r.severity.issues {
        let _ = writeln!(
            o,
            "  issue: {}",
            serde_json::to_string(issue).unwrap_or_default()
        );
    }
    o
}

fn quote(s: &str) -> String {
    let mut q = String::with_capacity(s.len() + 2);
    q.push('"');
    for ch in s.chars() {
        match ch {
            '"' => q.push_str("\\\""),
            '\\' => q.push_str("\\\\"),
            '\n' => q.push_str("\\n"),
            c => q.push(c),
        }
    }
    q.push('"');
    q
}

fn fill(c: Color) -> &'static str {
    match c {
        Color::Red => "#f4a6a6",
        Color::Amber => "#f7d58b",
        Color::Green => "#a8dba8",
    }
}

/// Graphviz digraph. Logical links are solid, embedded links gray with the
/// arrowhead at the source end, attack links dashed. `colors` tints nodes.
pub fn dot(graph: &CaseGraph, colors: &BTreeMap<NodeId, Color>) -> String {
    let mut o =
        String::from("digraph case {\n  rankdir=BT;\n  node [style=filled, fillcolor=white];\n");
    for n in graph.nodes() {
        let shape = match n.kind {
            NodeKind::Claim if n.has_role(RoleFlag::SideClaim) => "box, peripheries=2",
            NodeKind::Claim => "box",
            NodeKind::ArgumentStep => "ellipse",
            NodeKind::Evidence => "note",
            NodeKind::Defeater => "octagon",
            NodeKind::SubcaseNote => "folder",
            NodeKind::Comment => "plaintext",
        };
        let label = if n.narrative.is_empty() {
            n.id.to_string()
        } else {
            format!("{}\n{}", n.id, n.narrative)
        };
        let mut attrs = format!("label={}, shape={shape}", quote(&label));
        if let Some(c) = colors.get(&n.id) {
            let _ = write!(attrs, ", fillcolor={}", quote(fill(*c)));
        }
        let _ = writeln!(o, "  {} [{attrs}];", quote(n.id.as_str()));
    }
    for l in graph.links() {
        let style = match l.kind {
            LinkKind::Logical => "style=solid",
            LinkKind::Embedded => "style=solid, color=gray, dir=back",
            LinkKind::Attack => "style=dashed",
        };
        let _ = writeln!(
            o,
            "  {} -> {} [{style}];",
            quote(l.source.as_str()),
            quote(l.target.as_str())
        );
    }
    o.push_str("}\n");
    o
}
