//! The evaluator's concluding statement, pre-annotated from an evaluation
//! report. Judgment fields are left blank for the human.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::evaluate::REPORT_KIND;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BulletStatus {
    /// Engine data supports the bullet.
    Satisfied,
    /// Engine data argues against it.
    Unsupported,
    /// Nothing the engine can check.
    JudgmentOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bullet {
    pub key: String,
    pub text: String,
    pub status: BulletStatus,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub annotations: Vec<String>,
    /// For the evaluator to fill in.
    pub judgment: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub kind: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub title: String,
    pub verdict_options: Vec<String>,
    /// Blank until the evaluator chooses.
    pub verdict: String,
    pub preamble: String,
    pub bullets: Vec<Bullet>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SentencingError {
    #[error("input is a case document, not an evaluation report; run `casecalc evaluate --format json` on it first and pass the report")]
    Unevaluated,
    #[error("input is not an evaluation report (missing `kind: {REPORT_KIND}`); run `casecalc evaluate` first")]
    NotAReport,
}

fn count(v: &Value, path: &str) -> Option<u64> {
    let p = v.pointer(path)?;
    p.as_u64().or_else(|| p.as_array().map(|a| a.len() as u64))
}

fn flag(v: &Value, path: &str) -> bool {
    v.pointer(path).and_then(Value::as_bool).unwrap_or(false)
}

fn judgment(key: &str, text: &str) -> Bullet {
    Bullet {
        key: key.to_owned(),
        text: text.to_owned(),
        status: BulletStatus::JudgmentOnly,
        annotations: Vec::new(),
        judgment: String::new(),
    }
}

fn checked(key: &str, text: &str, ok: bool, annotations: Vec<String>) -> Bullet {
    Bullet {
        status: if ok {
            BulletStatus::Satisfied
        } else {
            BulletStatus::Unsupported
        },
        annotations,
        ..judgment(key, text)
    }
}

pub fn skeleton(report: &Value) -> Result<Skeleton, SentencingError> {
    if report.get("kind").and_then(Value::as_str) != Some(REPORT_KIND) {
        if report.get("format_version").is_some() && report.get("case").is_some() {
            return Err(SentencingError::Unevaluated);
        }
        return Err(SentencingError::NotAReport);
    }

    let valid = flag(report, "/summary/logical_validity");
    let fully_valid = flag(report, "/summary/fully_valid");
    let violations = count(report, "/structure/violations").unwrap_or(0);
    let unsupported = count(report, "/structure/unsupported_claims").unwrap_or(0);
    let label = report
        .pointer("/summary/case_label")
        .and_then(Value::as_str)
        .unwrap_or("unknown");
    let thread = checked(
        "clear_thread",
        "I find a clear thread of reasoning from evidence to claim",
        valid && fully_valid,
        vec![
            format!("case label: {label}"),
            format!("structural violations: {violations}"),
            format!("unsupported leaf claims: {unsupported}"),
        ],
    );

    let accepted = count(report, "/confirmation/accepted").unwrap_or(0);
    let pending = count(report, "/confirmation/pending").unwrap_or(0);
    let evidence = checked(
        "evidence_sufficient",
        "The evidence provided is sufficient/insufficient to support evidence-based decision making",
        accepted > 0 && pending == 0,
        vec![
            format!("evidence steps accepted: {accepted}"),
            format!("evidence steps pending: {pending}"),
        ],
    );

    let recorded = count(report, "/summary/defeaters_recorded").unwrap_or(0);
    let open = count(report, "/summary/unresolved_defeaters").unwrap_or(0);
    let gate = flag(report, "/summary/gate_passed");
    let mut notes = vec![
        format!("defeaters recorded: {recorded}"),
        format!("unresolved defeaters: {open}"),
        format!("severity gate: {}", if gate { "passed" } else { "failed" }),
    ];
    if recorded == 0 {
        notes.push("no defeaters were ever recorded for this case".to_owned());
    }
    let doubts = checked(
        "explored_doubts",
        "I have actively explored doubts",
        recorded > 0 && open == 0 && gate,
        notes,
    );

    Ok(Skeleton {
        kind: "casecalc-sentencing".to_owned(),
        title: report
            .get("title")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_owned(),
        verdict_options: vec![
            "adequately safe".to_owned(),
            "unsafe".to_owned(),
            "the case is insufficient to make a judgment".to_owned(),
        ],
        verdict: String::new(),
        preamble: "On the basis of this assurance case and an examination of other relevant \
                   documentation, I judge the proposed system to be ... \
                   I believe my judgment of this case is sound and valid because ..."
            .to_owned(),
        bullets: vec![
            judgment(
                "context",
                "I understand the context and criticality of the decision",
            ),
            judgment("system", "I understand the system"),
            thread,
            evidence,
            doubts,
            judgment(
                "disproving_evidence",
                "I have also identified what evidence would be capable of disproving",
            ),
            judgment(
                "biases",
                "I have considered and addressed biases and fallacies",
            ),
        ],
    })
}

impl Skeleton {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if !self.title.is_empty() {
            out.push_str(&format!("Sentencing statement: {}\n\n", self.title));
        }
        out.push_str(&format!(
            "Verdict ({}): ____\n\n",
            self.verdict_options.join(" / ")
        ));
        out.push_str(&self.preamble);
        out.push_str("\n\n");
        for b in &self.bullets {
            let mark = match b.status {
                BulletStatus::Satisfied => "[x]",
                BulletStatus::Unsupported => "[!]",
                BulletStatus::JudgmentOnly => "[ ]",
            };
            out.push_str(&format!("{mark} {}\n", b.text));
            for a in &b.annotations {
                out.push_str(&format!("      - {a}\n"));
            }
            out.push_str("      judgment: ____\n");
        }
        out
    }
}
