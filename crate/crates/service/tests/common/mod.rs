#![allow(dead_code)]

use std::time::{Duration, Instant};

use meshdevs_core::model::{serialize_model, ModelDocument};
use meshdevs_service::{serve, Client, ClientError, RunReport, ServerHandle};
use serde_json::{json, Value};

pub fn start() -> ServerHandle {
    serve("127.0.0.1:0", None).expect("bind loopback")
}

pub fn addr(h: &ServerHandle) -> String {
    h.self_address().to_owned()
}

pub fn connect(h: &ServerHandle) -> Client {
    Client::connect(&addr(h)).expect("connect")
}

/// Polls `cond` for up to two seconds.
pub fn eventually(mut cond: impl FnMut() -> bool) -> bool {
    let deadline = Instant::now() + Duration::from_secs(2);
    while Instant::now() < deadline {
        if cond() {
            return true;
        }
        std::thread::sleep(Duration::from_millis(10));
    }
    cond()
}

pub fn upload(client: &mut Client, doc: &ModelDocument) -> Result<String, ClientError> {
    let r = client.call("uploadModel", None, json!({ "document": serialize_model(doc) }))?;
    Ok(r["model"].as_str().expect("model id").to_owned())
}

pub fn simulate(client: &mut Client, op: &str, model: &str, mode: Value) -> Result<RunReport, ClientError> {
    let r = client.call(op, None, json!({ "model": model, "mode": mode }))?;
    Ok(serde_json::from_value(r).expect("report shape"))
}
