//! Per-request dispatch.

use std::collections::BTreeSet;

use meshdevs_core::kernel::{simulator_id, Simulator};
use meshdevs_core::message::ContentItem;
use meshdevs_core::model::{instantiate_component, ComponentEntry};
use meshdevs_core::{Error as KernelError, SimTime};
use serde_json::{json, Value};

use crate::client::ClientError;
use crate::main_service;
use crate::registry::ServiceRegistry;
use crate::wire::{kernel_code, Request, Response, OPS};

/// State of one client connection.
#[derive(Debug)]
pub struct Session {
    /// Remote address of the connection, the default client identity.
    pub peer: String,
    /// Simulators created on this connection and not yet exited.
    pub created: BTreeSet<String>,
}

impl Session {
    pub fn new(peer: &str) -> Self {
        Session {
            peer: peer.to_owned(),
            created: BTreeSet::new(),
        }
    }
}

/// An operation failure, sent back as `{code, message}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Fail {
    pub code: String,
    pub message: String,
}

impl Fail {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Fail {
            code: code.to_owned(),
            message: message.into(),
        }
    }

    pub fn bad_args(message: impl Into<String>) -> Self {
        Fail::new("BadArgs", message)
    }
}

impl From<KernelError> for Fail {
    fn from(e: KernelError) -> Self {
        Fail::new(kernel_code(&e), e.to_string())
    }
}

impl From<ClientError> for Fail {
    fn from(e: ClientError) -> Self {
        Fail::new(e.code(), e.to_string())
    }
}

pub(crate) fn arg<'a>(args: &'a Value, key: &str) -> Result<&'a Value, Fail> {
    args.get(key).ok_or_else(|| Fail::bad_args(format!("missing `{key}`")))
}

pub(crate) fn arg_str<'a>(args: &'a Value, key: &str) -> Result<&'a str, Fail> {
    arg(args, key)?
        .as_str()
        .ok_or_else(|| Fail::bad_args(format!("`{key}` must be a string")))
}

pub(crate) fn opt_str<'a>(args: &'a Value, key: &str) -> Result<Option<&'a str>, Fail> {
    match args.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(_) => Err(Fail::bad_args(format!("`{key}` must be a string"))),
    }
}

fn arg_time(args: &Value, key: &str) -> Result<SimTime, Fail> {
    serde_json::from_value(arg(args, key)?.clone()).map_err(|e| Fail::bad_args(format!("`{key}`: {e}")))
}

fn arg_cycle(args: &Value) -> Result<u64, Fail> {
    match args.get("cycle") {
        None => Ok(0),
        Some(v) => v
            .as_u64()
            .ok_or_else(|| Fail::bad_args("`cycle` must be a non-negative integer")),
    }
}

fn client_of(req: &Request, session: &Session) -> String {
    if let Some(client) = req.args.get("client").and_then(Value::as_str) {
        return client.to_owned();
    }
    if let Some((_, client)) = req.sim.as_deref().and_then(|s| s.rsplit_once('@')) {
        return client.to_owned();
    }
    session.peer.clone()
}

fn summarise(args: &Value) -> String {
    let mut text = args.to_string();
    if text.len() > 160 {
        let mut cut = 157;
        while !text.is_char_boundary(cut) {
            cut -= 1;
        }
        text.truncate(cut);
        text.push_str("...");
    }
    text
}

/// Answers one request. Every request is logged to its client's console.
pub fn handle_request(reg: &ServiceRegistry, session: &mut Session, req: Request) -> Response {
    for id in reg.sweep_idle() {
        log::info!("dropped idle simulator {id}");
        session.created.remove(&id);
    }
    let client = client_of(&req, session);
    let outcome = if OPS.contains(&req.op.as_str()) {
        dispatch(reg, session, &req, &client)
    } else {
        Err(Fail::new("UnknownOp", format!("unknown op `{}`", req.op)))
    };
    let status = match &outcome {
        Ok(_) => "ok".to_owned(),
        Err(f) => f.code.clone(),
    };
    reg.log(
        &client,
        format!(
            "#{} {} {} {} -> {}",
            req.seq,
            req.op,
            req.sim.as_deref().unwrap_or("-"),
            summarise(&req.args),
            status
        ),
    );
    match outcome {
        Ok(result) => Response::ok(req.seq, result),
        Err(f) => Response::err(Some(req.seq), &f.code, f.message),
    }
}

fn with_sim<T>(reg: &ServiceRegistry, req: &Request, f: impl FnOnce(&mut Simulator) -> Result<T, Fail>) -> Result<T, Fail> {
    let id = req.sim.as_deref().ok_or_else(|| Fail::bad_args("missing `sim`"))?;
    let handle = reg
        .get(id)
        .ok_or_else(|| Fail::new("UnknownSimulator", format!("no simulator `{id}`")))?;
    let mut sim = handle.lock().unwrap_or_else(|p| p.into_inner());
    f(&mut sim)
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("wire values serialise")
}

fn dispatch(reg: &ServiceRegistry, session: &mut Session, req: &Request, client: &str) -> Result<Value, Fail> {
    let args = &req.args;
    match req.op.as_str() {
        "newSimulator" => {
            let entry: ComponentEntry = serde_json::from_value(arg(args, "component")?.clone())
                .map_err(|e| Fail::bad_args(format!("`component`: {e}")))?;
            let client = arg_str(args, "client")?;
            let spec = instantiate_component(&entry).map_err(|issues| {
                let code = match issues.first() {
                    Some(meshdevs_core::model::Issue::UnknownBehavior { .. }) => "UnknownBehavior",
                    _ => "ValidationFailed",
                };
                Fail::new(
                    code,
                    issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
                )
            })?;
            let id = simulator_id(&spec.name, client);
            if !reg.insert(Simulator::new(spec, client)) {
                return Err(Fail::new("DuplicateSimulator", format!("`{id}` already exists")));
            }
            session.created.insert(id.clone());
            Ok(Value::String(id))
        }
        "initialize" => {
            let t = arg_time(args, "t")?;
            with_sim(reg, req, |sim| {
                sim.initialize(t);
                Ok(to_value(&sim.next_tn()))
            })
        }
        "receiveInput" => {
            let to_port = arg_str(args, "to_port")?;
            arg_str(args, "from_port")?;
            let message = arg(args, "message")?.clone();
            with_sim(reg, req, |sim| {
                sim.put_content_on_simulator(ContentItem::new(to_port, message))?;
                Ok(Value::Null)
            })
        }
        "lambda" => {
            let t = arg_time(args, "t")?;
            let cycle = arg_cycle(args)?;
            with_sim(reg, req, |sim| {
                let (output, record) = sim.compute_input_output(t, cycle)?;
                Ok(json!({ "output": output, "record": record }))
            })
        }
        "deltfcn" => {
            let t = arg_time(args, "t")?;
            let cycle = arg_cycle(args)?;
            with_sim(reg, req, |sim| {
                let out = sim.apply_delt_func(t, cycle)?;
                Ok(json!({ "tn": out.tn, "kind": out.kind, "record": out.record }))
            })
        }
        "getOutput" => with_sim(reg, req, |sim| Ok(to_value(sim.last_output()))),
        "getTN" => with_sim(reg, req, |sim| Ok(to_value(&sim.next_tn()))),
        "exit" => {
            let id = req.sim.as_deref().ok_or_else(|| Fail::bad_args("missing `sim`"))?;
            if !reg.remove(id) {
                return Err(Fail::new("UnknownSimulator", format!("no simulator `{id}`")));
            }
            session.created.remove(id);
            Ok(Value::Null)
        }
        "getConsole" => Ok(Value::String(reg.console(client))),
        "getIp" => Ok(Value::String(reg.self_address().to_owned())),
        "uploadModel" => main_service::upload_model(reg, args),
        "simulateCentralized" => main_service::simulate_centralized(reg, args),
        "simulateDistributed" => main_service::simulate_distributed(reg, args, client),
        other => Err(Fail::new("UnknownOp", format!("unknown op `{other}`"))),
    }
}
