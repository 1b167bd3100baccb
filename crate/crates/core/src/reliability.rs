//! From confidence in nonfaultiness to failure and survival probabilities.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityScenario {
    /// Confidence that the system is nonfaulty.
    pub p_conf_top: f64,
    /// Probability of failure per demand if faulty.
    pub p_fif: f64,
    /// Future demands of exposure.
    pub n: u64,
    /// Failure-free demands already observed.
    #[serde(default)]
    pub r: u64,
    #[serde(default = "default_unit")]
    pub demand_unit: String,
}

fn default_unit() -> String {
    "demand".to_owned()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("`{0}` must lie in [0, 1]")]
    OutOfRange(&'static str),
    #[error("period {0} has zero exposure")]
    EmptyPeriod(usize),
}

impl ReliabilityScenario {
    pub fn new(p_conf_top: f64, p_fif: f64, n: u64) -> Self {
        Self {
            p_conf_top,
            p_fif,
            n,
            r: 0,
            demand_unit: default_unit(),
        }
    }

    pub fn with_r(mut self, r: u64) -> Self {
        self.r = r;
        self
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(0.0..=1.0).contains(&self.p_conf_top) {
            return Err(ScenarioError::OutOfRange("p_conf_top"));
        }
        if !(0.0..=1.0).contains(&self.p_fif) {
            return Err(ScenarioError::OutOfRange("p_fif"));
        }
        Ok(())
    }
}

/// P_fd = P_fif × (1 − P_conf).
pub fn pfd(s: &ReliabilityScenario) -> f64 {
    s.p_fif * (1.0 - s.p_conf_top)
}

/// (1 − p)^n evaluated as exp(n·ln(1 − p)), which keeps its precision for
/// tiny p and huge n.
pub fn survival_if_faulty(p_fif: f64, n: u64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    if p_fif >= 1.0 {
        return 0.0;
    }
    (n as f64 * (-p_fif).ln_1p()).exp()
}

/// P_srv(n) = P_conf + (1 − P_conf) × (1 − P_fif)^n.
pub fn psrv(s: &ReliabilityScenario) -> f64 {
    let tail = (1.0 - s.p_conf_top) * survival_if_faulty(s.p_fif, s.n);
    // never report less than the floor because of rounding
    (s.p_conf_top + tail).max(s.p_conf_top).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateResult {
    SupportedByCbi,
    NotSupported,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub result: GateResult,
    /// The survival floor P_conf.
    pub floor: f64,
}

/// The stated sufficient condition: P_conf > 0.9 and r > n/10.
pub fn cbi_gate(s: &ReliabilityScenario) -> GateResult {
    // r > n/10 without rounding: 10r > n
    let enough_experience = (s.r as u128) * 10 > s.n as u128;
    if s.p_conf_top > 0.9 && enough_experience {
        GateResult::SupportedByCbi
    } else {
        GateResult::NotSupported
    }
}

pub fn cbi_report(s: &ReliabilityScenario) -> GateReport {
    GateReport {
        result: cbi_gate(s),
        floor: s.p_conf_top,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapPeriod {
    pub period: usize,
    pub exposure: u64,
    /// Failure-free experience accumulated before this period.
    pub cumulative_r: u64,
    pub gate: GateResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSchedule {
    pub periods: Vec<BootstrapPeriod>,
    pub first_failing: Option<usize>,
}

/// Runs the gate period by period, each period's exposure adding to the
/// experience available to the next.
pub fn bootstrap_schedule(
    initial_r: u64,
    periods: &[u64],
    p_conf_top: f64,
) -> Result<BootstrapSchedule, ScenarioError> {
    if !(0.0..=1.0).contains(&p_conf_top) {
        return Err(ScenarioError::OutOfRange("p_conf_top"));
    }
    let mut r = initial_r;
    let mut out = Vec::with_capacity(periods.len());
    for (i, &n) in periods.iter().enumerate() {
        if n == 0 {
            return Err(ScenarioError::EmptyPeriod(i + 1));
        }
        let scenario = ReliabilityScenario::new(p_conf_top, 0.0, n).with_r(r);
        out.push(BootstrapPeriod {
            period: i + 1,
            exposure: n,
            cumulative_r: r,
            gate: cbi_gate(&scenario),
        });
        r = r.saturating_add(n);
    }
    let first_failing = out
        .iter()
        .find(|p| p.gate == GateResult::NotSupported)
        .map(|p| p.period);
    Ok(BootstrapSchedule {
        periods: out,
        first_failing,
    })
}

/// (n, P_srv(n)) rows for plotting.
pub fn survival_curve(base: &ReliabilityScenario, ns: &[u64]) -> Vec<(u64, f64)> {
    ns.iter()
        .map(|&n| {
            let s = ReliabilityScenario { n, ..base.clone() };
            (n, psrv(&s))
        })
        .collect()
}

/// Powers of ten from 1 up to and including `max`, plus 0.
pub fn decade_points(max: u64) -> Vec<u64> {
    let mut out = vec![0];
    let mut n: u64 = 1;
    while n <= max {
        out.push(n);
        match n.checked_mul(10) {
            Some(next) => n = next,
            None => break,
        }
    }
    out
}
