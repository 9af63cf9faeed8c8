//! Operator commands behind the `meshdevs` binary.
//!
//! Exit codes: 0 success, 1 invalid model or failed run (including zero-delay
//! livelock), 2 file, bind or usage errors, 3 unreachable server, 4 run
//! aborted mid-way (the partial trace is still written).

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc::Receiver;

use meshdevs_core::frame::frame_reports;
use meshdevs_core::kernel::{trace_to_string, Coordinator, KernelConfig, RunMode, RunStatus, RunSummary};
use meshdevs_core::model::{elaborate, parse_model, validate_model, Issue, ModelDocument};
use meshdevs_core::SimTime;
use meshdevs_service::{serve, Client, ClientError, RunReport};
use serde_json::{json, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_UNREACHABLE: i32 = 3;
pub const EXIT_ABORTED: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Until(f64),
    Iterations(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: PathBuf,
    pub horizon: Horizon,
    /// Wall seconds per simulated time unit; virtual time when `None`.
    pub realtime: Option<f64>,
    /// Servers to spread unassigned components over, first one leading.
    pub servers: Vec<String>,
    /// `component -> address` overrides of the document's assignment.
    pub assign: Vec<(String, String)>,
    pub trace: Option<PathBuf>,
    pub quiet: bool,
}

impl RunConfig {
    pub fn new(model: impl Into<PathBuf>, horizon: Horizon) -> Self {
        RunConfig {
            model: model.into(),
            horizon,
            realtime: None,
            servers: Vec::new(),
            assign: Vec::new(),
            trace: None,
            quiet: true,
        }
    }

    pub fn mode(&self) -> Result<RunMode, String> {
        let time = |t: f64| SimTime::new(t).map_err(|e| e.to_string());
        match (self.horizon, self.realtime) {
            (Horizon::Iterations(n), None) => Ok(RunMode::Iterations(n)),
            (Horizon::Until(t), None) => Ok(RunMode::Until(time(t)?)),
            (Horizon::Until(t), Some(scale)) if scale.is_finite() && scale > 0.0 => {
                Ok(RunMode::Realtime { scale, until: time(t)? })
            }
            (Horizon::Until(_), Some(scale)) => Err(format!("--realtime needs a positive scale, got {scale}")),
            (Horizon::Iterations(_), Some(_)) => Err("--realtime needs --until, not --iterations".into()),
        }
    }
}

/// A failed command: exit code and the message for standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

fn report(result: Result<i32, Failure>) -> i32 {
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn read_document(path: &Path) -> Result<ModelDocument, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", path.display())))?;
    parse_model(&text).map_err(|e| Failure::new(EXIT_FAILED, format!("{}: {e}", path.display())))
}

fn issues_text(issues: &[Issue]) -> String {
    issues.iter().map(|i| format!("  - {i}")).collect::<Vec<_>>().join("\n")
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", path.display())))
}

/// Checks a model document; exit 0 iff valid.
pub fn cmd_validate(model: &Path, out: &mut dyn Write) -> i32 {
    report((|| {
        let doc = read_document(model)?;
        validate_model(&doc).map_err(|issues| {
            Failure::new(
                EXIT_FAILED,
                format!("{} is invalid:\n{}", model.display(), issues_text(&issues)),
            )
        })?;
        let _ = writeln!(out, "{}: ok ({} components)", model.display(), doc.components.len());
        Ok(EXIT_OK)
    })())
}

fn status_text(status: &RunStatus) -> String {
    match status {
        RunStatus::Completed => "completed".into(),
        RunStatus::Stopped { t, reason } => format!("stopped at {t} ({reason})"),
        RunStatus::Aborted { last_cycle, reason } => match last_cycle {
            Some(c) => format!("aborted after cycle {c}: {reason}"),
            None => format!("aborted before the first cycle: {reason}"),
        },
    }
}

/// The machine-readable summary printed as the last line of a run.
pub fn summary_value(summary: &RunSummary, frames: &BTreeMap<String, BTreeMap<String, Value>>) -> Value {
    let mut v = json!({
        "final_t": summary.final_t,
        "next_tn": summary.next_tn,
        "cycles": summary.cycles,
        "outputs": summary.last_outputs(),
        "frames": frames,
        "deadline_misses": summary.deadline_misses.len(),
    });
    let status = serde_json::to_value(&summary.status).expect("status serialises");
    if let (Value::Object(v), Value::Object(s)) = (&mut v, status) {
        v.extend(s);
    }
    v
}

fn print_summary(
    out: &mut dyn Write,
    summary: &RunSummary,
    frames: &BTreeMap<String, BTreeMap<String, Value>>,
    quiet: bool,
) -> io::Result<()> {
    if !quiet {
        writeln!(out, "{:<12} {}", "status", status_text(&summary.status))?;
        writeln!(out, "{:<12} {}", "final t", summary.final_t)?;
        writeln!(out, "{:<12} {}", "cycles", summary.cycles)?;
        writeln!(out, "{:<12} {}", "next tN", summary.next_tn)?;
        for (port, value) in summary.last_outputs() {
            writeln!(out, "{:<12} {}", format!("out {port}"), value)?;
        }
        for (frame, metrics) in frames {
            let cells: Vec<String> = metrics.iter().map(|(k, v)| format!("{k}={v}")).collect();
            writeln!(out, "{:<12} {}", format!("frame {frame}"), cells.join(" "))?;
        }
        if !summary.deadline_misses.is_empty() {
            writeln!(out, "{:<12} {}", "late events", summary.deadline_misses.len())?;
        }
    }
    writeln!(out, "{}", summary_value(summary, frames))
}

/// Runs a model in this process.
pub fn cmd_run(config: &RunConfig, out: &mut dyn Write) -> i32 {
    report(run_local(config, out))
}

fn run_local(config: &RunConfig, out: &mut dyn Write) -> Result<i32, Failure> {
    let mode = config.mode().map_err(|m| Failure::new(EXIT_USAGE, m))?;
    let doc = read_document(&config.model)?;
    let spec = elaborate(&doc).map_err(|issues| {
        Failure::new(
            EXIT_FAILED,
            format!("{} is invalid:\n{}", config.model.display(), issues_text(&issues)),
        )
    })?;
    let mut coord =
        Coordinator::new(spec, KernelConfig::default()).map_err(|e| Failure::new(EXIT_FAILED, e.to_string()))?;
    coord.initialize(SimTime::ZERO);
    let plan = mode.plan().map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
    let (summary, error) = match coord.run(&plan) {
        Ok(s) => (s, None),
        Err(i) => (*i.partial, Some(i.error)),
    };
    if let Some(path) = &config.trace {
        write_file(path, &trace_to_string(&summary.trace))?;
    }
    if let Some(e) = error {
        return Err(Failure::new(EXIT_FAILED, format!("run failed at cycle {}: {e}", summary.cycles)));
    }
    let frames = frame_reports(&summary);
    print_summary(out, &summary, &frames, config.quiet).map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
    Ok(EXIT_OK)
}

/// Serves until `stop` fires (or its sender goes away). Prints the bound
/// address first.
pub fn cmd_serve(bind: &str, out: &mut dyn Write, stop: Receiver<()>) -> i32 {
    let handle = match serve(bind, None) {
        Ok(h) => h,
        Err(e) => {
            eprintln!("error: cannot bind {bind}: {e}");
            return EXIT_USAGE;
        }
    };
    let _ = writeln!(out, "listening on {}", handle.addr());
    let _ = out.flush();
    let _ = stop.recv();
    let dropped = handle.registry().simulator_ids().len();
    handle.shutdown();
    let _ = writeln!(out, "shut down, {dropped} simulators released");
    EXIT_OK
}

/// The document's assignment with `--servers` filling gaps round-robin and
/// `--assign` overriding.
pub fn effective_assignment(doc: &ModelDocument, servers: &[String], assign: &[(String, String)]) -> BTreeMap<String, String> {
    let mut assignment = doc.assignment.clone().unwrap_or_default();
    if !servers.is_empty() {
        let mut next = servers.iter().cycle();
        for name in doc.component_names() {
            if !assignment.contains_key(name) {
                let server = next.next().expect("non-empty").clone();
                assignment.insert(name.to_owned(), server);
            }
        }
    }
    for (component, addr) in assign {
        assignment.insert(component.clone(), addr.clone());
    }
    assignment
}

fn client_failure(e: ClientError) -> Failure {
    let code = match e.code() {
        "ServerUnreachable" => EXIT_UNREACHABLE,
        "ProtocolError" => EXIT_ABORTED,
        _ => EXIT_FAILED,
    };
    Failure::new(code, e.to_string())
}

fn console_path(trace: &Path, server: &str) -> PathBuf {
    let tag: String = server
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' })
        .collect();
    let mut name = trace.as_os_str().to_owned();
    name.push(format!(".{tag}.console"));
    PathBuf::from(name)
}

/// Uploads a model to its servers and runs it there.
pub fn cmd_run_dist(config: &RunConfig, out: &mut dyn Write) -> i32 {
    report(run_distributed(config, out))
}

fn run_distributed(config: &RunConfig, out: &mut dyn Write) -> Result<i32, Failure> {
    let mode = config.mode().map_err(|m| Failure::new(EXIT_USAGE, m))?;
    let mut doc = read_document(&config.model)?;
    doc.assignment = Some(effective_assignment(&doc, &config.servers, &config.assign));
    if let Some(first) = config.servers.first() {
        doc.main_server = Some(first.clone());
    }
    validate_model(&doc).map_err(|issues| {
        Failure::new(
            EXIT_FAILED,
            format!("{} is invalid:\n{}", config.model.display(), issues_text(&issues)),
        )
    })?;
    let main = doc
        .main_server
        .clone()
        .or_else(|| doc.assignment.as_ref().and_then(|a| a.values().min().cloned()))
        .ok_or_else(|| Failure::new(EXIT_USAGE, "no servers: pass --servers or --assign"))?;

    let mut client = Client::connect(&main).map_err(client_failure)?;
    let uploaded = client
        .call(
            "uploadModel",
            None,
            json!({ "document": meshdevs_core::serialize_model(&doc) }),
        )
        .map_err(client_failure)?;
    let model = uploaded["model"].as_str().unwrap_or_default().to_owned();
    log::info!("uploaded {model}: {}", uploaded["servers"]);

    let result = client
        .call("simulateDistributed", None, json!({ "model": model, "mode": mode }))
        .map_err(client_failure)?;
    let report: RunReport =
        serde_json::from_value(result).map_err(|e| Failure::new(EXIT_ABORTED, format!("bad run report: {e}")))?;

    if let Some(path) = &config.trace {
        let mut text = report.trace.join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        write_file(path, &text)?;
        for (server, console) in &report.consoles {
            write_file(&console_path(path, server), console)?;
        }
    }
    print_summary(out, &report.summary, &report.frames, config.quiet)
        .map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
    match &report.summary.status {
        RunStatus::Aborted { .. } => Err(Failure::new(
            EXIT_ABORTED,
            format!("run aborted: {}", status_text(&report.summary.status)),
        )),
        _ => Ok(EXIT_OK),
    }
}
