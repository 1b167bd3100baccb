//! Probabilistic confidence, propagated bottom-up over the main case.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{BlockKind, CaseGraph, NodeId, NodeKind, RoleFlag};
use crate::structure::{check_validity, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Evidence,
    Assumption,
    Propagated,
    ManualOverride,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceAssignment {
    pub node: NodeId,
    pub value: f64,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub override_note: Option<String>,
    /// Value the node had before a manual override replaced it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propagated_value: Option<f64>,
    /// Value before clamping, when clamping changed it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_value: Option<f64>,
}

impl ConfidenceAssignment {
    pub fn new(node: impl Into<NodeId>, value: f64, origin: Origin) -> Self {
        Self {
            node: node.into(),
            value,
            origin,
            override_note: None,
            propagated_value: None,
            raw_value: None,
        }
    }

    pub fn evidence(node: impl Into<NodeId>, value: f64) -> Self {
        Self::new(node, value, Origin::Evidence)
    }

    pub fn assumption(node: impl Into<NodeId>, value: f64) -> Self {
        Self::new(node, value, Origin::Assumption)
    }

    pub fn manual(node: impl Into<NodeId>, value: f64, note: impl Into<String>) -> Self {
        let mut a = Self::new(node, value, Origin::ManualOverride);
        a.override_note = Some(note.into());
        a
    }
}

/// Written in files and on the command line as `product`, `sum-of-doubts`
/// or `custom:<name>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Rule {
    Product,
    SumOfDoubts,
    Custom(String),
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::Product => f.write_str("product"),
            Rule::SumOfDoubts => f.write_str("sum-of-doubts"),
            Rule::Custom(name) => write!(f, "custom:{name}"),
        }
    }
}

impl From<Rule> for String {
    fn from(r: Rule) -> String {
        r.to_string()
    }
}

impl TryFrom<String> for Rule {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl std::str::FromStr for Rule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "product" => Ok(Rule::Product),
            "sum-of-doubts" | "sum_of_doubts" => Ok(Rule::SumOfDoubts),
            other => match other.strip_prefix("custom:") {
                Some(name) if !name.is_empty() => Ok(Rule::Custom(name.to_owned())),
                _ => Err(format!(
                    "unknown rule `{other}` (expected product, sum-of-doubts or custom:<name>)"
                )),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Color {
    Red,
    Amber,
    Green,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub cutoff: f64,
    pub color: Color,
}

impl Threshold {
    pub fn new(cutoff: f64, color: Color) -> Self {
        Self { cutoff, color }
    }
}

/// Red from 0, amber from 0.5, green from 0.9.
pub fn default_thresholds() -> Vec<Threshold> {
    vec![
        Threshold::new(0.0, Color::Red),
        Threshold::new(0.5, Color::Amber),
        Threshold::new(0.9, Color::Green),
    ]
}

/// Parses `r,a,g` cutoffs.
pub fn parse_thresholds(s: &str) -> Result<Vec<Threshold>, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let (r, a, g) = match parts.as_slice() {
        [r, a, g] => (*r, *a, *g),
        // amber and green only; red starts at zero
        [a, g] => ("0", *a, *g),
        _ => {
            return Err(format!(
                "expected comma-separated cutoffs r,a,g or a,g, got `{s}`"
            ))
        }
    };
    let num = |x: &str| {
        x.parse::<f64>()
            .map_err(|e| format!("bad cutoff `{x}`: {e}"))
    };
    let out = vec![
        Threshold::new(num(r)?, Color::Red),
        Threshold::new(num(a)?, Color::Amber),
        Threshold::new(num(g)?, Color::Green),
    ];
    validate_thresholds(&out)?;
    Ok(out)
}

fn validate_thresholds(t: &[Threshold]) -> Result<(), String> {
    if t.iter().any(|t| !t.cutoff.is_finite()) {
        return Err("threshold cutoffs must be finite".into());
    }
    if t.windows(2).any(|w| w[0].cutoff >= w[1].cutoff) {
        return Err("threshold cutoffs must be strictly increasing".into());
    }
    Ok(())
}

fn default_clamp() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    pub rule: Rule,
    /// Per-step factor f; unlisted steps use 1.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub factors: BTreeMap<NodeId, f64>,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<Threshold>,
    #[serde(default = "default_clamp")]
    pub clamp: bool,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self::new(Rule::Product)
    }
}

impl PropagationConfig {
    pub fn new(rule: Rule) -> Self {
        Self {
            rule,
            factors: BTreeMap::new(),
            thresholds: default_thresholds(),
            clamp: true,
        }
    }

    pub fn factor(&self, step: &NodeId) -> f64 {
        self.factors.get(step).copied().unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<(), PropagationError> {
        validate_thresholds(&self.thresholds).map_err(PropagationError::InvalidConfig)?;
        if let Some((id, f)) = self
            .factors
            .iter()
            .find(|(_, f)| !(f.is_finite() && **f >= 0.0))
        {
            return Err(PropagationError::InvalidConfig(format!(
                "factor {f} for `{id}` must be a finite non-negative number"
            )));
        }
        Ok(())
    }
}

/// Inputs handed to a combiner for one argument step.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinerInput {
    pub factor: f64,
    pub side: Vec<f64>,
    pub subclaims: Vec<f64>,
    pub refutational: bool,
}

pub type Combiner = Arc<dyn Fn(&CombinerInput) -> f64 + Send + Sync>;

/// Named custom combiners.
#[derive(Clone, Default)]
pub struct RuleRegistry {
    rules: BTreeMap<String, Combiner>,
}

impl fmt::Debug for RuleRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.rules.keys()).finish()
    }
}

impl RuleRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        name: impl Into<String>,
        combiner: impl Fn(&CombinerInput) -> f64 + Send + Sync + 'static,
    ) {
        self.rules.insert(name.into(), Arc::new(combiner));
    }

    pub fn get(&self, name: &str) -> Option<&Combiner> {
        self.rules.get(name)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PropagationError {
    #[error("no confidence supplied for leaf `{0}`")]
    MissingLeafAssignment(NodeId),
    #[error("the case is not logically valid ({} violation(s))", .0.len())]
    UnsoundGraph(Vec<Violation>),
    #[error("assignment names unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("confidence {value} for `{node}` lies outside [0, 1]")]
    ValueOutOfRange { node: NodeId, value: f64 },
    #[error("no custom rule named `{0}` is registered")]
    UnknownRule(String),
    #[error("invalid propagation config: {0}")]
    InvalidConfig(String),
    #[error("flat form does not apply: {0}")]
    NotApplicable(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Override {
    pub value: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Valuation {
    pub values: BTreeMap<NodeId, ConfidenceAssignment>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top: Option<NodeId>,
}

impl Valuation {
    pub fn value(&self, id: &NodeId) -> Option<f64> {
        self.values.get(id).map(|a| a.value)
    }

    pub fn top_value(&self) -> Option<f64> {
        self.top.as_ref().and_then(|t| self.value(t))
    }
}

/// Propagates with manual overrides taken from `inputs` entries whose
/// origin is `ManualOverride`.
pub fn propagate(
    graph: &CaseGraph,
    inputs: &[ConfidenceAssignment],
    cfg: &PropagationConfig,
) -> Result<Valuation, PropagationError> {
    propagate_with(graph, inputs, &BTreeMap::new(), cfg, &RuleRegistry::new())
}

/// Full form: explicit override map and a registry for custom rules.
pub fn propagate_with(
    graph: &CaseGraph,
    inputs: &[ConfidenceAssignment],
    overrides: &BTreeMap<NodeId, Override>,
    cfg: &PropagationConfig,
    registry: &RuleRegistry,
) -> Result<Valuation, PropagationError> {
    cfg.validate()?;
    if let Rule::Custom(name) = &cfg.rule {
        if registry.get(name).is_none() {
            return Err(PropagationError::UnknownRule(name.clone()));
        }
    }
    let report = check_validity(graph);
    if !report.logical_validity {
        return Err(PropagationError::UnsoundGraph(report.violations));
    }
    let mut given = BTreeMap::new();
    let mut all_overrides = overrides.clone();
    for a in inputs {
        if !graph.contains(&a.node) {
            return Err(PropagationError::UnknownNode(a.node.clone()));
        }
        check_range(&a.node, a.value)?;
        if a.origin == Origin::ManualOverride && !all_overrides.contains_key(&a.node) {
            all_overrides.insert(
                a.node.clone(),
                Override {
                    value: a.value,
                    note: a.override_note.clone().unwrap_or_default(),
                },
            );
        } else if a.origin != Origin::ManualOverride {
            given.insert(a.node.clone(), a);
        }
    }
    for (id, o) in &all_overrides {
        if !graph.contains(id) {
            return Err(PropagationError::UnknownNode(id.clone()));
        }
        check_range(id, o.value)?;
    }

    let mut run = Run {
        graph,
        given: &given,
        overrides: &all_overrides,
        cfg,
        registry,
        values: BTreeMap::new(),
        diagnostics: Vec::new(),
    };
    let top = graph.top_claim().cloned();
    if let Some(top) = &top {
        run.claim(top)?;
    }
    Ok(Valuation {
        values: run.values,
        diagnostics: run.diagnostics,
        top,
    })
}

fn check_range(node: &NodeId, value: f64) -> Result<(), PropagationError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(PropagationError::ValueOutOfRange {
            node: node.clone(),
            value,
        })
    }
}

struct Run<'a> {
    graph: &'a CaseGraph,
    given: &'a BTreeMap<NodeId, &'a ConfidenceAssignment>,
    overrides: &'a BTreeMap<NodeId, Override>,
    cfg: &'a PropagationConfig,
    registry: &'a RuleRegistry,
    values: BTreeMap<NodeId, ConfidenceAssignment>,
    diagnostics: Vec<String>,
}

impl Run<'_> {
    fn store(&mut self, mut a: ConfidenceAssignment) -> f64 {
        if let Some(o) = self.overrides.get(&a.node) {
            a.propagated_value = Some(a.value);
            a.value = o.value;
            a.origin = Origin::ManualOverride;
            a.override_note = Some(o.note.clone());
        }
        let v = a.value;
        self.values.insert(a.node.clone(), a);
        v
    }

    fn leaf(&mut self, id: &NodeId) -> Result<f64, PropagationError> {
        if let Some(v) = self.values.get(id) {
            return Ok(v.value);
        }
        let node = self.graph.node(id).expect("validated graph");
        let assignment = match self.given.get(id) {
            Some(a) => (*a).clone(),
            None if self.overrides.contains_key(id) => {
                ConfidenceAssignment::new(id.clone(), 1.0, Origin::Assumption)
            }
            None if node.has_role(RoleFlag::Assumption)
                || node.has_role(RoleFlag::PossiblyMissing) =>
            {
                self.diagnostics.push(format!(
                    "no confidence supplied for `{id}`; using 1.0 until one is given"
                ));
                ConfidenceAssignment::new(id.clone(), 1.0, Origin::Assumption)
            }
            None => return Err(PropagationError::MissingLeafAssignment(id.clone())),
        };
        Ok(self.store(assignment))
    }

    fn claim(&mut self, id: &NodeId) -> Result<f64, PropagationError> {
        if let Some(v) = self.values.get(id) {
            return Ok(v.value);
        }
        let step = self.graph.supporting_steps(id).next().cloned();
        match step {
            None => self.leaf(id),
            Some(step) => {
                let v = self.step(&step)?;
                let mut a = ConfidenceAssignment::new(id.clone(), v, Origin::Propagated);
                if let Some(given) = self.given.get(id) {
                    self.diagnostics.push(format!(
                        "ignoring supplied confidence {} for `{id}`, which is supported by `{step}`",
                        given.value
                    ));
                }
                a.raw_value = self.values[&step].raw_value;
                Ok(self.store(a))
            }
        }
    }

    fn step(&mut self, id: &NodeId) -> Result<f64, PropagationError> {
        if let Some(v) = self.values.get(id) {
            return Ok(v.value);
        }
        let node = self.graph.node(id).expect("validated graph");
        let block = node.block.expect("steps carry a block");
        let refutational = node.has_role(RoleFlag::Refutational);
        let children: Vec<NodeId> = self.graph.logical_children(id).cloned().collect();
        let mut side = Vec::new();
        let mut subclaims = Vec::new();
        let step_given = self
            .given
            .get(id)
            .filter(|_| block == BlockKind::EvidenceIncorporation)
            .map(|a| a.value);
        if let Some(v) = step_given {
            subclaims.push(v);
        }
        for child in &children {
            let c = self.graph.node(child).expect("validated graph");
            match c.kind {
                NodeKind::Claim if c.has_role(RoleFlag::SideClaim) => side.push(self.claim(child)?),
                NodeKind::Claim => subclaims.push(self.claim(child)?),
                NodeKind::Evidence if step_given.is_none() => subclaims.push(self.leaf(child)?),
                _ => {}
            }
        }
        let input = CombinerInput {
            factor: self.cfg.factor(id),
            side,
            subclaims,
            refutational,
        };
        let raw = combine(&self.cfg.rule, &input, self.cfg.clamp, self.registry);
        let value = if self.cfg.clamp {
            raw.clamp(0.0, 1.0)
        } else {
            raw
        };
        let mut a = ConfidenceAssignment::new(id.clone(), value, Origin::Propagated);
        if raw != value {
            a.raw_value = Some(raw);
        }
        Ok(self.store(a))
    }
}

/// One step's value before the final clamp.
pub fn combine(rule: &Rule, input: &CombinerInput, clamp: bool, registry: &RuleRegistry) -> f64 {
    let doubt = |x: &f64| 1.0 - x;
    match rule {
        Rule::Product => {
            let w: f64 = input.side.iter().product();
            let s = if input.refutational {
                1.0 - input.subclaims.iter().map(doubt).product::<f64>()
            } else {
                input.subclaims.iter().product()
            };
            input.factor * w * s
        }
        Rule::SumOfDoubts => {
            let side_doubt: f64 = input.side.iter().map(doubt).sum();
            let sub_doubt: f64 = if input.refutational {
                input
                    .subclaims
                    .iter()
                    .map(doubt)
                    .fold(f64::INFINITY, f64::min)
                    .min(1.0)
            } else {
                input.subclaims.iter().map(doubt).sum()
            };
            let combined = 1.0 - (side_doubt + sub_doubt);
            input.factor * if clamp { combined.max(0.0) } else { combined }
        }
        Rule::Custom(name) => registry.get(name).map_or(f64::NAN, |c| c(input)),
    }
}

/// Colour of the highest cutoff the value meets; red below every cutoff.
pub fn color_for(value: f64, thresholds: &[Threshold]) -> Color {
    thresholds
        .iter()
        .rev()
        .find(|t| value >= t.cutoff)
        .map_or(Color::Red, |t| t.color)
}

pub fn classify(values: &Valuation, cfg: &PropagationConfig) -> BTreeMap<NodeId, Color> {
    values
        .values
        .iter()
        .map(|(id, a)| (id.clone(), color_for(a.value, &cfg.thresholds)))
        .collect()
}

/// Installs an override and re-propagates.
pub fn apply_override(
    graph: &CaseGraph,
    inputs: &[ConfidenceAssignment],
    overrides: &BTreeMap<NodeId, Override>,
    cfg: &PropagationConfig,
    node: &NodeId,
    value: f64,
    note: &str,
) -> Result<(BTreeMap<NodeId, Override>, Valuation), PropagationError> {
    if !graph.contains(node) {
        return Err(PropagationError::UnknownNode(node.clone()));
    }
    check_range(node, value)?;
    let mut next = overrides.clone();
    next.insert(
        node.clone(),
        Override {
            value,
            note: note.to_owned(),
        },
    );
    let valuation = propagate_with(graph, inputs, &next, cfg, &RuleRegistry::new())?;
    Ok((next, valuation))
}

/// Nodes whose value differs between two valuations, with the new value.
pub fn delta(before: &Valuation, after: &Valuation) -> BTreeMap<NodeId, f64> {
    after
        .values
        .iter()
        .filter(|(id, a)| before.value(id) != Some(a.value))
        .map(|(id, a)| (id.clone(), a.value))
        .collect()
}

/// The top-claim value written as a function of leaf confidences: every
/// leaf appears with the number of logical paths from it to the top claim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatForm {
    pub rule: Rule,
    pub leaves: BTreeMap<NodeId, usize>,
}

impl FlatForm {
    /// Product of leaf values, or one minus the summed leaf doubts (unclamped).
    pub fn evaluate(&self, values: &BTreeMap<NodeId, f64>) -> f64 {
        match self.rule {
            Rule::SumOfDoubts => {
                1.0 - self
                    .leaves
                    .iter()
                    .map(|(id, k)| *k as f64 * (1.0 - values[id]))
                    .sum::<f64>()
            }
            _ => self
                .leaves
                .iter()
                .map(|(id, k)| values[id].powi(*k as i32))
                .product(),
        }
    }
}

pub fn flat_form(
    graph: &CaseGraph,
    inputs: &[ConfidenceAssignment],
    cfg: &PropagationConfig,
) -> Result<FlatForm, PropagationError> {
    let na = |why: String| Err(PropagationError::NotApplicable(why));
    if let Rule::Custom(name) = &cfg.rule {
        return na(format!("custom rule `{name}`"));
    }
    if let Some((id, f)) = cfg.factors.iter().find(|(_, f)| **f != 1.0) {
        return na(format!("factor {f} on `{id}`"));
    }
    if let Some(a) = inputs.iter().find(|a| a.origin == Origin::ManualOverride) {
        return na(format!("manual override on `{}`", a.node));
    }
    let main = graph.main_case();
    if let Some(id) = main.iter().find(|id| {
        graph
            .node(id)
            .is_some_and(|n| n.is_step() && n.has_role(RoleFlag::Refutational))
    }) {
        return na(format!("refutational step `{id}`"));
    }
    let keyed: BTreeSet<&NodeId> = inputs.iter().map(|a| &a.node).collect();
    let mut leaves = BTreeMap::new();
    let Some(top) = graph.top_claim() else {
        return Ok(FlatForm {
            rule: cfg.rule.clone(),
            leaves,
        });
    };
    // paths from the top down, in topological order
    let mut paths: BTreeMap<NodeId, usize> = BTreeMap::new();
    paths.insert(top.clone(), 1);
    for id in topological_down(graph, top) {
        let k = paths.get(&id).copied().unwrap_or(0);
        let node = graph.node(&id).expect("main-case node");
        let is_leaf = match node.kind {
            NodeKind::Claim => graph.supporting_steps(&id).next().is_none(),
            NodeKind::Evidence => true,
            NodeKind::ArgumentStep => {
                node.block == Some(BlockKind::EvidenceIncorporation) && keyed.contains(&id)
            }
            _ => false,
        };
        if node.kind == NodeKind::ArgumentStep && is_leaf {
            *leaves.entry(id.clone()).or_insert(0) += k;
            for c in graph.logical_children(&id) {
                if graph.node(c).is_some_and(|n| n.is_claim()) {
                    *paths.entry(c.clone()).or_insert(0) += k;
                }
            }
        } else if is_leaf {
            *leaves.entry(id.clone()).or_insert(0) += k;
        } else {
            for c in graph.logical_children(&id) {
                *paths.entry(c.clone()).or_insert(0) += k;
            }
        }
    }
    leaves.retain(|_, k| *k > 0);
    Ok(FlatForm {
        rule: cfg.rule.clone(),
        leaves,
    })
}

/// Nodes below `top`, each listed after every node above it.
fn topological_down(graph: &CaseGraph, top: &NodeId) -> Vec<NodeId> {
    let main = graph.main_case();
    let mut indegree: BTreeMap<&NodeId, usize> = main
        .iter()
        .map(|id| {
            (
                id,
                graph
                    .logical_targets(id)
                    .filter(|t| main.contains(*t))
                    .count(),
            )
        })
        .collect();
    let mut ready = vec![top];
    let mut order = Vec::new();
    while let Some(id) = ready.pop() {
        order.push(id.clone());
        for c in graph.logical_children(id) {
            if let Some(d) = indegree.get_mut(c) {
                *d -= 1;
                if *d == 0 {
                    ready.push(c);
                }
            }
        }
    }
    order
}
