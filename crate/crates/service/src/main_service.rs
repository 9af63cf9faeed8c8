//! Whole-model operations: upload, centralized runs and distributed runs.

use std::collections::BTreeMap;

use meshdevs_core::frame::frame_reports;
use meshdevs_core::kernel::{drive, Coordinator, KernelConfig, RunMode, RunStatus, RunSummary};
use meshdevs_core::model::{
    elaborate, instantiate_component, parse_model, partition_model, validate_model, Issue, ModelDocument, ModelError,
};
use meshdevs_core::SimTime;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::client::Client;
use crate::handler::{arg, opt_str, Fail};
use crate::registry::ServiceRegistry;
use crate::remote::{placement, RemoteCoordinator};

/// Result of a simulate operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Run summary with its trace moved to `trace`.
    pub summary: RunSummary,
    /// Latest metrics per experimental frame.
    pub frames: BTreeMap<String, BTreeMap<String, Value>>,
    /// Trace records, one JSON line each.
    pub trace: Vec<String>,
    /// Console text of each participating server, keyed by address.
    #[serde(default)]
    pub consoles: BTreeMap<String, String>,
}

impl RunReport {
    pub fn new(mut summary: RunSummary, consoles: BTreeMap<String, String>) -> Self {
        let frames = frame_reports(&summary);
        let trace = std::mem::take(&mut summary.trace).iter().map(|r| r.to_line()).collect();
        RunReport {
            summary,
            frames,
            trace,
            consoles,
        }
    }

    /// The summary with the trace parsed back in.
    pub fn full_summary(&self) -> Result<RunSummary, serde_json::Error> {
        let mut summary = self.summary.clone();
        summary.trace = self
            .trace
            .iter()
            .map(|l| meshdevs_core::kernel::TraceRecord::from_line(l))
            .collect::<Result<_, _>>()?;
        Ok(summary)
    }
}

fn issues_fail(issues: &[Issue]) -> Fail {
    let code = match issues {
        [Issue::UnknownBehavior { .. }] => "UnknownBehavior",
        _ => "ValidationFailed",
    };
    Fail::new(code, issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))
}

fn model_fail(e: ModelError) -> Fail {
    match e {
        ModelError::ValidationFailed(issues) => issues_fail(&issues),
        ModelError::Syntax { .. } => Fail::new("SyntaxError", e.to_string()),
        ModelError::UnsupportedVersion(_) => Fail::new("UnsupportedVersion", e.to_string()),
    }
}

/// The `document` argument, either as model text or as an inline object.
fn document_arg(args: &Value) -> Result<ModelDocument, Fail> {
    match arg(args, "document")? {
        Value::String(text) => parse_model(text).map_err(model_fail),
        other => parse_model(&other.to_string()).map_err(model_fail),
    }
}

fn forward(args: &Value) -> Result<bool, Fail> {
    match args.get("forward") {
        None | Some(Value::Null) => Ok(true),
        Some(Value::Bool(b)) => Ok(*b),
        Some(_) => Err(Fail::bad_args("`forward` must be a boolean")),
    }
}

/// `uploadModel {document, model?, forward?}`.
///
/// A forwarded upload carries one server's bundle and is only checked for
/// instantiable components. A direct upload is validated in full and, when
/// it has an assignment, partitioned with each bundle forwarded to its
/// server.
pub fn upload_model(reg: &ServiceRegistry, args: &Value) -> Result<Value, Fail> {
    let doc = document_arg(args)?;
    let requested = opt_str(args, "model")?;

    if !forward(args)? {
        let id = requested.ok_or_else(|| Fail::bad_args("forwarded upload needs `model`"))?;
        let issues: Vec<Issue> = doc
            .components
            .iter()
            .filter_map(|c| instantiate_component(c).err())
            .flatten()
            .collect();
        if !issues.is_empty() {
            return Err(issues_fail(&issues));
        }
        let names = doc.component_names().into_iter().map(String::from).collect::<Vec<_>>();
        reg.update_model(id, |m| m.bundle = Some(doc));
        return Ok(json!({ "model": id, "components": names }));
    }

    validate_model(&doc).map_err(|issues| issues_fail(&issues))?;
    let id = requested.map(str::to_owned).unwrap_or_else(|| reg.new_model_id(&doc.name));
    let plan = match doc.assignment {
        Some(_) => Some(partition_model(&doc).map_err(model_fail)?),
        None => None,
    };

    let mut servers = BTreeMap::new();
    if let Some(plan) = &plan {
        for (addr, bundle) in &plan.bundles {
            if addr == reg.self_address() {
                reg.update_model(&id, |m| m.bundle = Some(bundle.clone()));
            } else {
                let mut client = Client::connect(addr)?;
                client.call(
                    "uploadModel",
                    None,
                    json!({ "document": bundle, "model": id, "forward": false }),
                )?;
            }
        }
        servers = placement(plan);
    }
    reg.update_model(&id, |m| {
        m.document = Some(doc);
        m.plan = plan;
    });
    Ok(json!({ "model": id, "servers": servers }))
}

fn stored_document(reg: &ServiceRegistry, args: &Value) -> Result<(String, ModelDocument, Option<meshdevs_core::model::PartitionPlan>), Fail> {
    let id = opt_str(args, "model")?.ok_or_else(|| Fail::bad_args("missing `model`"))?;
    let stored = reg
        .model(id)
        .and_then(|m| m.document.map(|d| (d, m.plan)))
        .ok_or_else(|| Fail::new("UnknownModel", format!("no model `{id}` uploaded here")))?;
    Ok((id.to_owned(), stored.0, stored.1))
}

fn mode_arg(args: &Value) -> Result<RunMode, Fail> {
    serde_json::from_value(arg(args, "mode")?.clone()).map_err(|e| Fail::bad_args(format!("`mode`: {e}")))
}

fn start_arg(args: &Value) -> Result<SimTime, Fail> {
    match args.get("t0") {
        None | Some(Value::Null) => Ok(SimTime::ZERO),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| Fail::bad_args(format!("`t0`: {e}"))),
    }
}

fn report_value(report: RunReport) -> Value {
    serde_json::to_value(report).expect("reports serialise")
}

/// `simulateCentralized {model, mode, t0?}`: the whole model in this process.
pub fn simulate_centralized(reg: &ServiceRegistry, args: &Value) -> Result<Value, Fail> {
    let (_, doc, _) = stored_document(reg, args)?;
    let mode = mode_arg(args)?;
    let t0 = start_arg(args)?;
    let spec = elaborate(&doc).map_err(|issues| issues_fail(&issues))?;
    let mut coord = Coordinator::new(spec, KernelConfig::default())?;
    coord.initialize(t0);
    let summary = coord.run(&mode.plan()?).map_err(|i| Fail::from(i.error))?;
    Ok(report_value(RunReport::new(summary, BTreeMap::new())))
}

/// `simulateDistributed {model, mode, t0?, client?}`: one simulator per
/// component on its assigned server, driven from here over the wire.
///
/// Losing a server mid-run is not an error response: the run comes back
/// `aborted` with everything recorded up to the last completed cycle.
pub fn simulate_distributed(reg: &ServiceRegistry, args: &Value, client: &str) -> Result<Value, Fail> {
    let (id, _, plan) = stored_document(reg, args)?;
    let plan = plan.ok_or_else(|| Fail::new("ValidationFailed", format!("model `{id}` has no assignment")))?;
    let mode = mode_arg(args)?;
    let run_plan = mode.plan()?;
    let t0 = start_arg(args)?;

    let mut coord = RemoteCoordinator::deploy(&plan, client, meshdevs_core::kernel::DEFAULT_LIVELOCK_GUARD)
        .map_err(|e| Fail::new(e.code(), e.to_string()))?;
    let outcome = coord.initialize(t0).map_err(|error| meshdevs_core::kernel::Interrupted {
        error,
        partial: Box::new(RunSummary::new(t0)),
    });
    let outcome = outcome.and_then(|()| drive(&mut coord, &run_plan, t0));
    coord.exit_all();
    let consoles = coord.consoles(client);

    match outcome {
        Ok(summary) => Ok(report_value(RunReport::new(summary, consoles))),
        Err(i) if i.error.is_transport() => {
            log::warn!("distributed run of `{id}` aborted: {}", i.error);
            let mut summary = *i.partial;
            summary.status = RunStatus::Aborted {
                last_cycle: summary.cycles.checked_sub(1),
                reason: i.error.to_string(),
            };
            Ok(report_value(RunReport::new(summary, consoles)))
        }
        Err(i) => Err(Fail::new(i.error.code(), i.error.to_string())),
    }
}
