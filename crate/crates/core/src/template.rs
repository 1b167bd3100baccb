//! Theory templates: generic case fragments with `$NAME$` placeholders.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::graph::{CaseGraph, GraphError, Link, Node, NodeId, RoleFlag};

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\$([A-Za-z_][A-Za-z0-9_]*)\$").expect("valid regex"))
}

/// Placeholder names appearing in `text`, in order of first appearance.
pub fn placeholders(text: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    placeholder_re()
        .captures_iter(text)
        .map(|c| c[1].to_owned())
        .filter(|name| seen.insert(name.clone()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("placeholder `${0}$` in node `{1}` is not a declared parameter")]
    UndeclaredPlaceholder(String, NodeId),
    #[error("precondition `{0}` is not a side-claim of the template body")]
    PreconditionNotSideClaim(NodeId),
    #[error("no binding supplied for parameter `{0}`")]
    UnboundPlaceholder(String),
    #[error("instance id prefix must not be empty")]
    EmptyPrefix,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    name: String,
    parameters: Vec<String>,
    body: CaseGraph,
    preconditions: BTreeSet<NodeId>,
}

impl Template {
    pub fn new(
        name: impl Into<String>,
        parameters: Vec<String>,
        body: CaseGraph,
        preconditions: BTreeSet<NodeId>,
    ) -> Result<Self, TemplateError> {
        let declared: BTreeSet<&str> = parameters.iter().map(String::as_str).collect();
        for node in body.nodes() {
            if let Some(p) = placeholders(&node.narrative)
                .into_iter()
                .find(|p| !declared.contains(p.as_str()))
            {
                return Err(TemplateError::UndeclaredPlaceholder(p, node.id.clone()));
            }
        }
        for id in &preconditions {
            let is_side = body
                .node(id)
                .is_some_and(|n| n.is_claim() && n.has_role(RoleFlag::SideClaim));
            if !is_side {
                return Err(TemplateError::PreconditionNotSideClaim(id.clone()));
            }
        }
        Ok(Self {
            name: name.into(),
            parameters,
            body,
            preconditions,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn parameters(&self) -> &[String] {
        &self.parameters
    }

    pub fn body(&self) -> &CaseGraph {
        &self.body
    }

    pub fn preconditions(&self) -> &BTreeSet<NodeId> {
        &self.preconditions
    }

    /// Substitutes every placeholder and mints fresh ids `"{prefix}.{id}"`.
    /// Precondition side-claims come out flagged `Precondition`.
    pub fn instantiate(
        &self,
        bindings: &BTreeMap<String, String>,
        prefix: &str,
    ) -> Result<CaseGraph, TemplateError> {
        if prefix.is_empty() {
            return Err(TemplateError::EmptyPrefix);
        }
        if let Some(missing) = self.parameters.iter().find(|p| !bindings.contains_key(*p)) {
            return Err(TemplateError::UnboundPlaceholder(missing.clone()));
        }
        let fresh = |id: &NodeId| NodeId::new(format!("{prefix}.{id}"));
        let mut out = CaseGraph::new();
        for node in self.body.nodes() {
            let mut copy: Node = node.clone();
            copy.id = fresh(&node.id);
            copy.narrative = placeholder_re()
                .replace_all(&node.narrative, |c: &regex::Captures<'_>| {
                    bindings[&c[1]].clone()
                })
                .into_owned();
            if self.preconditions.contains(&node.id) {
                copy.roles.insert(RoleFlag::Precondition);
            }
            out.add_node(copy)?;
        }
        if let Some(top) = self.body.top_claim() {
            out.set_top_claim(&fresh(top))?;
        }
        for link in self.body.links() {
            out.add_link(Link::new(
                fresh(&link.source),
                fresh(&link.target),
                link.kind,
            ))?;
        }
        Ok(out)
    }
}
