//! Confirmation and justification measures over elicited probabilities.
//!
//! All logarithms are natural. Probabilities may be given as numbers or as
//! one of three qualitative levels, which stand for 0.1, 0.5 and 0.9.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Qualitative {
    Low,
    Medium,
    High,
}

impl Qualitative {
    pub fn value(self) -> f64 {
        match self {
            Qualitative::Low => 0.1,
            Qualitative::Medium => 0.5,
            Qualitative::High => 0.9,
        }
    }
}

/// A probability, either numeric or qualitative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Prob {
    Value(f64),
    Level(Qualitative),
}

impl Prob {
    pub fn value(self) -> f64 {
        match self {
            Prob::Value(v) => v,
            Prob::Level(q) => q.value(),
        }
    }

    pub fn is_qualitative(self) -> bool {
        matches!(self, Prob::Level(_))
    }
}

impl From<f64> for Prob {
    fn from(v: f64) -> Self {
        Prob::Value(v)
    }
}

impl From<Qualitative> for Prob {
    fn from(q: Qualitative) -> Self {
        Prob::Level(q)
    }
}

/// Elicited probabilities for one evidence incorporation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceAssessment {
    /// Prior P(C).
    pub p_c: Prob,
    /// Posterior P(C|E).
    pub p_c_given_e: Prob,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_e: Option<Prob>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_e_given_c: Option<Prob>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_e_given_not_c: Option<Prob>,
}

impl EvidenceAssessment {
    pub fn new(p_c: impl Into<Prob>, p_c_given_e: impl Into<Prob>) -> Self {
        Self {
            p_c: p_c.into(),
            p_c_given_e: p_c_given_e.into(),
            p_e: None,
            p_e_given_c: None,
            p_e_given_not_c: None,
        }
    }

    pub fn with_p_e(mut self, p: impl Into<Prob>) -> Self {
        self.p_e = Some(p.into());
        self
    }

    pub fn with_likelihoods(
        mut self,
        given_c: impl Into<Prob>,
        given_not_c: impl Into<Prob>,
    ) -> Self {
        self.p_e_given_c = Some(given_c.into());
        self.p_e_given_not_c = Some(given_not_c.into());
        self
    }

    pub fn with_p_e_given_c(mut self, p: impl Into<Prob>) -> Self {
        self.p_e_given_c = Some(p.into());
        self
    }

    fn fields(&self) -> [(&'static str, Option<Prob>); 5] {
        [
            ("p_c", Some(self.p_c)),
            ("p_c_given_e", Some(self.p_c_given_e)),
            ("p_e", self.p_e),
            ("p_e_given_c", self.p_e_given_c),
            ("p_e_given_not_c", self.p_e_given_not_c),
        ]
    }

    pub fn uses_qualitative(&self) -> bool {
        self.fields()
            .iter()
            .any(|(_, p)| p.is_some_and(Prob::is_qualitative))
    }

    /// Qualitative fields with the numbers used in their place.
    pub fn qualitative_mapping(&self) -> BTreeMap<String, (Qualitative, f64)> {
        self.fields()
            .into_iter()
            .filter_map(|(name, p)| match p {
                Some(Prob::Level(q)) => Some((name.to_owned(), (q, q.value()))),
                _ => None,
            })
            .collect()
    }

    fn numbers(&self) -> Result<Numbers, MeasureError> {
        for (name, p) in self.fields() {
            if let Some(p) = p {
                let v = p.value();
                if !(0.0..=1.0).contains(&v) {
                    return Err(MeasureError::OutOfRange(name));
                }
            }
        }
        let pc = self.p_c.value();
        let pegc = self.p_e_given_c.map(Prob::value);
        let pegnc = self.p_e_given_not_c.map(Prob::value);
        let derived_pe = match (pegc, pegnc) {
            (Some(a), Some(b)) => Some(a * pc + b * (1.0 - pc)),
            _ => None,
        };
        Ok(Numbers {
            pc,
            pce: self.p_c_given_e.value(),
            pe: self.p_e.map(Prob::value).or(derived_pe),
            pegc,
            pegnc,
        })
    }

    /// Bayes and total-probability checks on whatever fields are present.
    pub fn check_consistency(&self, epsilon: f64) -> Result<(), MeasureError> {
        let n = self.numbers()?;
        let supplied_pe = self.p_e.map(Prob::value);
        if let (Some(pe), Some(a), Some(b)) = (supplied_pe, n.pegc, n.pegnc) {
            let total = a * n.pc + b * (1.0 - n.pc);
            let gap = (pe - total).abs();
            if gap > epsilon {
                return Err(MeasureError::InconsistentElicitation {
                    rule: "total-probability",
                    discrepancy: gap,
                });
            }
        }
        if let (Some(pe), Some(a)) = (n.pe, n.pegc) {
            if pe > 0.0 {
                let gap = (n.pce - a * n.pc / pe).abs();
                if gap > epsilon {
                    return Err(MeasureError::InconsistentElicitation {
                        rule: "bayes",
                        discrepancy: gap,
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Numbers {
    pc: f64,
    pce: f64,
    pe: Option<f64>,
    pegc: Option<f64>,
    pegnc: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Keynes,
    Eells,
    LKeynes,
    LEells,
    Good,
    KemenyOppenheim,
    Carnap,
    Shogenji,
}

impl Measure {
    pub const ALL: [Measure; 8] = [
        Measure::Keynes,
        Measure::Eells,
        Measure::LKeynes,
        Measure::LEells,
        Measure::Good,
        Measure::KemenyOppenheim,
        Measure::Carnap,
        Measure::Shogenji,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Keynes => "keynes",
            Measure::Eells => "eells",
            Measure::LKeynes => "l_keynes",
            Measure::LEells => "l_eells",
            Measure::Good => "good",
            Measure::KemenyOppenheim => "kemeny_oppenheim",
            Measure::Carnap => "carnap",
            Measure::Shogenji => "shogenji",
        }
    }

    /// Whether the measure is a function of P(C|E) and P(C) alone.
    pub fn depends_only_on_posterior_and_prior(self) -> bool {
        !matches!(self, Measure::Carnap | Measure::LEells)
    }

    pub fn compute(self, a: &EvidenceAssessment) -> Result<MeasureResult, MeasureError> {
        match self {
            Measure::Keynes => keynes(a),
            Measure::Eells => eells(a),
            Measure::LKeynes => l_keynes(a),
            Measure::LEells => l_eells(a),
            Measure::Good => good(a),
            Measure::KemenyOppenheim => kemeny_oppenheim(a),
            Measure::Carnap => carnap(a),
            Measure::Shogenji => shogenji(a),
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Measure::ALL
            .into_iter()
            .find(|m| m.name() == key || m.name().replace('_', "") == key)
            .ok_or_else(|| format!("unknown confirmation measure `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureResult {
    pub measure: Measure,
    /// Signed infinity when the measure diverges.
    pub value: f64,
    pub defined: bool,
    /// Set for measures that also depend on P(E).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub violates_condition_1: bool,
}

impl MeasureResult {
    fn new(measure: Measure, value: f64) -> Self {
        Self {
            measure,
            value,
            defined: value.is_finite(),
            violates_condition_1: !measure.depends_only_on_posterior_and_prior(),
        }
    }

    pub fn sign(&self) -> i8 {
        if self.value > 0.0 {
            1
        } else if self.value < 0.0 {
            -1
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error("{0} is singular here: {1}")]
    SingularInput(Measure, &'static str),
    #[error("{0} needs {1}")]
    InsufficientFields(Measure, &'static str),
    #[error("`{0}` must lie in [0, 1]")]
    OutOfRange(&'static str),
    #[error("elicited probabilities violate the {rule} rule by {discrepancy:e}")]
    InconsistentElicitation {
        rule: &'static str,
        discrepancy: f64,
    },
}

/// ln(x/y) with a signed infinity at x = 0.
fn log_ratio(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        f64::NEG_INFINITY
    } else {
        (x / y).ln()
    }
}

/// log(P(C|E) / P(C)).
pub fn keynes(a: &EvidenceAssessment) -> Result<MeasureResult, MeasureError> {
    let n = a.numbers()?;
    if n.pc == 0.0 {
        return Err(MeasureError::SingularInput(Measure::Keynes, "P(C) = 0"));
    }
    Ok(MeasureResult::new(Measure::Keynes, log_ratio(n.pce, n.pc)))
}

/// P(C|E) − P(C).
pub fn eells(a: &EvidenceAssessment) -> Result<MeasureResult, MeasureError> {
    let n = a.numbers()?;
    Ok(MeasureResult::new(Measure::Eells, n.pce - n.pc))
}

fn likelihood_and_pe(a: &EvidenceAssessment, measure: Measure) -> Result<(f64, f64), MeasureError> {
    let n = a.numbers()?;
    let pegc = n
        .pegc
        .ok_or(MeasureError::InsufficientFields(measure, "P(E|C)"))?;
    let pe = n.pe.ok_or(MeasureError::InsufficientFields(
        measure,
        "P(E), or both likelihoods",
    ))?;
    Ok((pegc, pe))
}

/// log(P(E|C) / P(E)).
pub fn l_keynes(a: &EvidenceAssessment) -> Result<MeasureResult, MeasureError> {
    let (pegc, pe) = likelihood_and_pe(a, Measure::LKeynes)?;
    if pe == 0.0 {
        return Err(MeasureError::SingularInput(Measure::LKeynes, "P(E) = 0"));
    }
    Ok(MeasureResult::new(Measure::LKeynes, log_ratio(pegc, pe)))
}

/// P(E|C) − P(E).
pub fn l_eells(a: &EvidenceAssessment) -> Result<MeasureResult, MeasureError> {
    let (pegc, pe) = likelihood_and_pe(a, Measure::LEells)?;
    Ok(MeasureResult::new(Measure::LEells, pegc - pe))
}

/// log(P(E|C) / P(E|¬C)), or log(O(C|E) / O(C)) when the likelihoods are absent.
pub fn good(a: &EvidenceAssessment) -> Result<MeasureResult, MeasureError> {
    let n = a.numbers()?;
    if let (Some(pegc), Some(pegnc)) = (n.pegc, n.pegnc) {
        if pegnc > 0.0 {
            return Ok(MeasureResult::new(Measure::Good, log_ratio(pegc, pegnc)));
        }
    }
    let interior = |p: f64| p > 0.0 && p < 1.0;
    if !interior(n.pc) || !interior(n.pce) {
        return Err(MeasureError::SingularInput(
            Measure::Good,
            "odds are undefined at probability 0 or 1",
        ));
    }
    let odds = |p: f64| p / (1.0 - p);
    Ok(MeasureResult::new(
        Measure::Good,
        (odds(n.pce) / odds(n.pc)).ln(),
    ))
}

/// (P(E|C) − P(E|¬C)) / (P(E|C) + P(E|¬C)).
pub fn kemeny_oppenheim(a: &EvidenceAssessment) -> Result<MeasureResult, MeasureError> {
    let n = a.numbers()?;
    let (Some(x), Some(y)) = (n.pegc, n.pegnc) else {
        return Err(MeasureError::InsufficientFields(
            Measure::KemenyOppenheim,
            "P(E|C) and P(E|¬C)",
        ));
    };
    if x + y == 0.0 {
        return Err(MeasureError::SingularInput(
            Measure::KemenyOppenheim,
            "both likelihoods are 0",
        ));
    }
    Ok(MeasureResult::new(
        Measure::KemenyOppenheim,
        (x - y) / (x + y),
    ))
}

/// P(C ∧ E) − P(C)·P(E).
pub fn carnap(a: &EvidenceAssessment) -> Result<MeasureResult, MeasureError> {
    let n = a.numbers()?;
    let pe = n.pe.ok_or(MeasureError::InsufficientFields(
        Measure::Carnap,
        "P(E), or both likelihoods",
    ))?;
    Ok(MeasureResult::new(Measure::Carnap, n.pce * pe - n.pc * pe))
}

/// 1 − log P(C|E) / log P(C).
pub fn shogenji(a: &EvidenceAssessment) -> Result<MeasureResult, MeasureError> {
    let n = a.numbers()?;
    let interior = |p: f64| p > 0.0 && p < 1.0;
    if !interior(n.pc) || !interior(n.pce) {
        return Err(MeasureError::SingularInput(
            Measure::Shogenji,
            "P(C) and P(C|E) must lie strictly between 0 and 1",
        ));
    }
    Ok(MeasureResult::new(
        Measure::Shogenji,
        1.0 - n.pce.ln() / n.pc.ln(),
    ))
}

/// Both sides of the diversity identity:
/// P(C|E2∧E1)/P(C|E1) and P(E2|C∧E1)/P(E2|E1).
pub fn diversity_boost(
    p_c_given_e1: f64,
    p_c_given_e1e2: f64,
    p_e2_given_e1: f64,
    p_e2_given_c_e1: f64,
) -> Result<(f64, f64), MeasureError> {
    if p_c_given_e1 <= 0.0 || p_e2_given_e1 <= 0.0 {
        return Err(MeasureError::SingularInput(
            Measure::Keynes,
            "P(C|E1) and P(E2|E1) must be positive",
        ));
    }
    Ok((
        p_c_given_e1e2 / p_c_given_e1,
        p_e2_given_c_e1 / p_e2_given_e1,
    ))
}

/// Every measure the supplied fields support.
pub fn all_measures(a: &EvidenceAssessment) -> Vec<MeasureResult> {
    Measure::ALL
        .iter()
        .filter_map(|m| m.compute(a).ok())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptancePolicy {
    pub measure: Measure,
    /// Inclusive lower bound on the chosen measure.
    pub threshold: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_qualitative_epsilon")]
    pub qualitative_epsilon: f64,
}

fn default_epsilon() -> f64 {
    1e-9
}

fn default_qualitative_epsilon() -> f64 {
    0.05
}

impl Default for AcceptancePolicy {
    /// Keynes ≥ ln 2, i.e. the evidence at least doubles the prior.
    fn default() -> Self {
        Self::new(Measure::Keynes, std::f64::consts::LN_2)
    }
}

impl AcceptancePolicy {
    pub fn new(measure: Measure, threshold: f64) -> Self {
        Self {
            measure,
            threshold,
            epsilon: default_epsilon(),
            qualitative_epsilon: default_qualitative_epsilon(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceDecision {
    pub accepted: bool,
    pub policy: AcceptancePolicy,
    pub chosen: MeasureResult,
    pub measures: Vec<MeasureResult>,
    pub epsilon_used: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub qualitative_mapping: BTreeMap<String, (Qualitative, f64)>,
}

/// Thresholds the policy's measure after checking the elicitation is consistent.
pub fn accept_evidence(
    a: &EvidenceAssessment,
    policy: &AcceptancePolicy,
) -> Result<AcceptanceDecision, MeasureError> {
    let epsilon = if a.uses_qualitative() {
        policy.qualitative_epsilon
    } else {
        policy.epsilon
    };
    a.check_consistency(epsilon)?;
    let chosen = policy.measure.compute(a)?;
    Ok(AcceptanceDecision {
        accepted: chosen.value >= policy.threshold,
        policy: policy.clone(),
        chosen,
        measures: all_measures(a),
        epsilon_used: epsilon,
        qualitative_mapping: a.qualitative_mapping(),
    })
}
