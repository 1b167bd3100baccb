use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use casecalc_core::confirmation::Measure;
use casecalc_core::dashboard::dashboard;
use casecalc_core::document::{self, CaseDocument};
use casecalc_core::evaluate::{evaluate, selected_graph, EvalOptions, SettingsLayer, View};
use casecalc_core::propagation::{parse_thresholds, Rule};
use casecalc_core::reliability::{
    bootstrap_schedule, cbi_report, decade_points, pfd, psrv, survival_curve, ReliabilityScenario,
};
use casecalc_core::render::{dot, report_text};
use casecalc_core::sentencing::skeleton;
use casecalc_core::structure::check_validity;

/// Exit status for unreadable files, schema errors and bad configuration.
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "casecalc", version, about = "Evaluate Assurance 2.0 cases")]
struct Cli {
    /// Default settings file (JSON). Command-line flags take precedence.
    #[arg(long, env = "CASECALC_CONFIG", global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Emit {
    Report,
    Dot,
}

#[derive(Clone, Copy, ValueEnum)]
enum ViewArg {
    Ignore,
    Apply,
}

#[derive(Args, Clone, Default)]
struct EvalFlags {
    /// product, sum-of-doubts or custom:<name>
    #[arg(long, value_parser = parse_rule)]
    rule: Option<Rule>,
    /// Color cutoffs as r,a,g (or a,g).
    #[arg(long)]
    thresholds: Option<String>,
    #[arg(long, value_parser = parse_measure)]
    accept_measure: Option<Measure>,
    #[arg(long)]
    accept_threshold: Option<f64>,
    /// Evaluate a named snapshot instead of the current case.
    #[arg(long)]
    snapshot: Option<String>,
    #[arg(long, value_enum)]
    view: Option<ViewArg>,
    /// Value given to defeated nodes in the apply view.
    #[arg(long)]
    defeated_value: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse case files and check their argument structure.
    Check {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Run the full evaluation and print the report.
    Evaluate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[command(flatten)]
        flags: EvalFlags,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// `dot` prints a Graphviz graph colored by the valuation.
        #[arg(long, value_enum, default_value = "report")]
        emit: Emit,
    },
    /// Defeater, evidence and color statistics.
    Dashboard {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[command(flatten)]
        flags: EvalFlags,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Sentencing statement skeleton from an evaluation report.
    Sentencing {
        report: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Failure and survival probabilities from confidence in nonfaultiness.
    Reliability {
        /// Confidence that the system is nonfaulty.
        #[arg(long)]
        p_conf: f64,
        /// Probability of failure per demand if faulty.
        #[arg(long, default_value_t = 0.0)]
        p_fif: f64,
        /// Future demands.
        #[arg(long, default_value_t = 1)]
        n: u64,
        /// Failure-free demands already seen.
        #[arg(long, default_value_t = 0)]
        r: u64,
        /// Also print survival at decades up to n.
        #[arg(long)]
        curve: bool,
        /// Exposure per deployment period, comma separated.
        #[arg(long, value_delimiter = ',')]
        periods: Vec<u64>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Run the HTTP evaluation service.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Origin allowed by CORS (`*` for any).
        #[arg(long)]
        cors_origin: Option<String>,
        #[arg(long, default_value_t = 60)]
        idle_minutes: u64,
    },
}

fn parse_rule(s: &str) -> Result<Rule, String> {
    s.parse()
}

fn parse_measure(s: &str) -> Result<Measure, String> {
    s.parse::<Measure>().map_err(|e| e.to_string())
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("casecalc: {msg}");
    ExitCode::from(EXIT_IO)
}

fn load_config(path: Option<&Path>) -> Result<SettingsLayer, String> {
    let Some(path) = path else {
        return Ok(SettingsLayer::default());
    };
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_doc(path: &Path) -> Result<CaseDocument, String> {
    let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    document::parse(&bytes).map_err(|e| {
        e.diagnostics
            .iter()
            .map(|d| format!("{}: {d}", path.display()))
            .collect::<Vec<_>>()
            .join("\n")
    })
}

impl EvalFlags {
    fn options(&self, config: SettingsLayer) -> Result<EvalOptions, String> {
        let thresholds = match &self.thresholds {
            Some(t) => Some(parse_thresholds(t)?),
            None => None,
        };
        if let Some(v) = self.defeated_value {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("--defeated-value {v} is outside [0, 1]"));
            }
        }
        Ok(EvalOptions {
            flags: SettingsLayer {
                rule: self.rule.clone(),
                thresholds,
                accept_measure: self.accept_measure,
                accept_threshold: self.accept_threshold,
                defeated_value: self.defeated_value,
            },
            config,
            view: match self.view {
                Some(ViewArg::Apply) => View::ApplyDefeaters,
                _ => View::IgnoreDefeaters,
            },
            snapshot: self.snapshot.clone(),
            ..EvalOptions::default()
        })
    }
}

fn json_out(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("outputs serialize");
    s.push('\n');
    s
}

fn check(files: &[PathBuf], format: Format) -> ExitCode {
    let mut code = 0;
    let mut out = Vec::new();
    for f in files {
        match load_doc(f) {
            Err(e) => {
                eprintln!("{e}");
                code = code.max(EXIT_IO);
            }
            Ok(doc) => {
                let report = check_validity(&doc.case);
                if !report.logical_validity {
                    code = code.max(2);
                }
                match format {
                    Format::Json => out.push(serde_json::json!({
                        "file": f.display().to_string(),
                        "logical_validity": report.logical_validity,
                        "violations": report.violations,
                    })),
                    Format::Text => {
                        println!(
                            "{}: {}",
                            f.display(),
                            if report.logical_validity {
                                "ok"
                            } else {
                                "invalid"
                            }
                        );
                        for v in &report.violations {
                            println!("  [{}] {}: {}", v.rule, v.node, v.message);
                        }
                    }
                }
            }
        }
    }
    if format == Format::Json {
        print!("{}", json_out(&out));
    }
    ExitCode::from(code)
}

fn evaluate_cmd(
    files: &[PathBuf],
    flags: &EvalFlags,
    config: SettingsLayer,
    format: Format,
    emit: Emit,
) -> ExitCode {
    let opts = match flags.options(config) {
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    let mut code = 0u8;
    let mut reports = Vec::new();
    for f in files {
        let doc = match load_doc(f) {
            Ok(d) => d,
            Err(e) => {
                eprintln!("{e}");
                code = code.max(EXIT_IO);
                continue;
            }
        };
        let report = match evaluate(&doc, &opts) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("casecalc: {}: {e}", f.display());
                code = code.max(EXIT_IO);
                continue;
            }
        };
        code = code.max(report.summary.exit_code as u8);
        match (emit, format) {
            (Emit::Dot, _) => {
                let graph =
                    selected_graph(&doc, opts.snapshot.as_deref()).expect("evaluated above");
                print!("{}", dot(graph, &report.confidence.colors));
            }
            (Emit::Report, Format::Text) => {
                if files.len() > 1 {
                    println!("== {}", f.display());
                }
                print!("{}", report_text(&report));
            }
            (Emit::Report, Format::Json) => reports.push(report),
        }
    }
    if emit == Emit::Report && format == Format::Json {
        match reports.as_slice() {
            [] => {}
            [one] if files.len() == 1 => print!("{}", one.to_json()),
            many => print!("{}", json_out(&many)),
        }
    }
    ExitCode::from(code)
}

fn dashboard_cmd(
    files: &[PathBuf],
    flags: &EvalFlags,
    config: SettingsLayer,
    format: Format,
) -> ExitCode {
    let opts = match flags.options(config) {
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    let mut code = 0;
    let mut boards = Vec::new();
    for f in files {
        match load_doc(f).and_then(|d| dashboard(&d, &opts).map_err(|e| e.to_string())) {
            Ok(b) => boards.push((f.display().to_string(), b)),
            Err(e) => {
                eprintln!("{e}");
                code = EXIT_IO;
            }
        }
    }
    match format {
        Format::Json => {
            let v: Vec<Value> = boards
                .iter()
                .map(|(f, b)| serde_json::json!({"file": f, "dashboard": b}))
                .collect();
            print!("{}", json_out(&v));
        }
        Format::Text => {
            for (f, b) in &boards {
                println!("== {f}");
                for (k, v) in b.current.metrics() {
                    println!("  {k}: {v}");
                }
                for s in &b.snapshots {
                    println!("  snapshot {}:", s.label);
                    for (k, v) in &s.delta {
                        println!("    {k}: {v:+}");
                    }
                }
                if !b.delta_since_last_snapshot.is_empty() {
                    println!("  since last snapshot:");
                    for (k, v) in &b.delta_since_last_snapshot {
                        println!("    {k}: {v:+}");
                    }
                }
            }
        }
    }
    ExitCode::from(code)
}

fn sentencing_cmd(path: &Path, format: Format) -> ExitCode {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return fail(format!("{}: {e}", path.display())),
    };
    let value: Value = match serde_json::from_str(&text) {
        Ok(v) => v,
        Err(e) => return fail(format!("{}: {e}", path.display())),
    };
    match skeleton(&value) {
        Ok(s) => {
            match format {
                Format::Json => print!("{}", json_out(&s)),
                Format::Text => print!("{}", s.to_text()),
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}

#[allow(clippy::too_many_arguments)]
fn reliability_cmd(
    p_conf: f64,
    p_fif: f64,
    n: u64,
    r: u64,
    curve: bool,
    periods: &[u64],
    format: Format,
) -> ExitCode {
    let s = ReliabilityScenario::new(p_conf, p_fif, n).with_r(r);
    if let Err(e) = s.validate() {
        return fail(e);
    }
    let mut out = serde_json::json!({
        "scenario": s,
        "pfd": pfd(&s),
        "psrv": psrv(&s),
        "cbi": cbi_report(&s),
    });
    if curve {
        out["curve"] = serde_json::json!(survival_curve(&s, &decade_points(n)));
    }
    if !periods.is_empty() {
        match bootstrap_schedule(r, periods, p_conf) {
            Ok(b) => out["bootstrap"] = serde_json::json!(b),
            Err(e) => return fail(e),
        }
    }
    match format {
        Format::Json => print!("{}", json_out(&out)),
        Format::Text => {
            println!("pfd:   {:e}", pfd(&s));
            println!("psrv({n}): {:.9}", psrv(&s));
            println!(
                "cbi:   {}",
                out["cbi"]["result"].as_str().unwrap_or_default()
            );
            if let Some(rows) = out.get("curve").and_then(Value::as_array) {
                for row in rows {
                    println!("  n={} psrv={}", row[0], row[1]);
                }
            }
            if let Some(b) = out.get("bootstrap") {
                for p in b["periods"].as_array().into_iter().flatten() {
                    println!(
                        "  period {} exposure {} prior r {} -> {}",
                        p["period"],
                        p["exposure"],
                        p["cumulative_r"],
                        p["gate"].as_str().unwrap_or_default()
                    );
                }
            }
        }
    }
    ExitCode::SUCCESS
}

fn serve_cmd(
    host: &str,
    port: u16,
    cors_origin: Option<String>,
    idle_minutes: u64,
    config: SettingsLayer,
) -> ExitCode {
    let addr: SocketAddr = match format!("{host}:{port}").parse() {
        Ok(a) => a,
        Err(e) => return fail(format!("bad address {host}:{port}: {e}")),
    };
    let cfg = casecalc_service::ServiceConfig {
        idle: Duration::from_secs(idle_minutes * 60),
        settings: config,
        cors_origin,
    };
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => return fail(e),
    };
    match rt.block_on(casecalc_service::serve(addr, cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match load_config(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => return fail(format!("config: {e}")),
    };
    match &cli.command {
        Command::Check { files, format } => check(files, *format),
        Command::Evaluate {
            files,
            flags,
            format,
            emit,
        } => evaluate_cmd(files, flags, config, *format, *emit),
        Command::Dashboard {
            files,
            flags,
            format,
        } => dashboard_cmd(files, flags, config, *format),
        Command::Sentencing { report, format } => sentencing_cmd(report, *format),
        Command::Reliability {
            p_conf,
            p_fif,
            n,
            r,
            curve,
            periods,
            format,
        } => reliability_cmd(*p_conf, *p_fif, *n, *r, *curve, periods, *format),
        Command::Serve {
            host,
            port,
            cors_origin,
            idle_minutes,
        } => serve_cmd(host, *port, cors_origin.clone(), *idle_minutes, config),
    }
}
