//! Newline-delimited JSON request/response framing.

use meshdevs_core::Error as KernelError;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const OPS: [&str; 13] = [
    "newSimulator",
    "initialize",
    "receiveInput",
    "lambda",
    "deltfcn",
    "getOutput",
    "getTN",
    "exit",
    "getConsole",
    "getIp",
    "uploadModel",
    "simulateCentralized",
    "simulateDistributed",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Request {
    pub op: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<String>,
    #[serde(default = "empty_args")]
    pub args: Value,
    pub seq: i64,
}

fn empty_args() -> Value {
    Value::Object(Default::default())
}

impl Request {
    pub fn new(op: &str, sim: Option<&str>, args: Value, seq: i64) -> Self {
        Request {
            op: op.to_owned(),
            sim: sim.map(str::to_owned),
            args,
            seq,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireError {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    /// Echo of the request's `seq`; `null` when the request could not be
    /// read far enough to find one.
    pub seq: Option<i64>,
    pub ok: bool,
    #[serde(default)]
    pub result: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<WireError>,
}

impl Response {
    pub fn ok(seq: i64, result: Value) -> Self {
        Response {
            seq: Some(seq),
            ok: true,
            result,
            error: None,
        }
    }

    pub fn err(seq: Option<i64>, code: &str, message: impl Into<String>) -> Self {
        Response {
            seq,
            ok: false,
            result: Value::Null,
            error: Some(WireError {
                code: code.to_owned(),
                message: message.into(),
            }),
        }
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("responses serialise");
        s.push('\n');
        s
    }
}

/// Reads one request line. Malformed input yields the `BadRequest` response
/// to send back, echoing `seq` when it can be recovered.
pub fn parse_request(line: &str) -> Result<Request, Response> {
    match serde_json::from_str::<Request>(line) {
        Ok(req) if req.args.is_object() => Ok(req),
        Ok(req) => Err(Response::err(Some(req.seq), "BadRequest", "`args` must be an object")),
        Err(e) => {
            let seq = serde_json::from_str::<Value>(line)
                .ok()
                .and_then(|v| v.get("seq").and_then(Value::as_i64));
            Err(Response::err(seq, "BadRequest", e.to_string()))
        }
    }
}

/// Stable error code for a kernel error.
pub fn kernel_code(e: &KernelError) -> &'static str {
    match e {
        KernelError::InvalidTime(_) | KernelError::BadTimeLiteral(_) => "BadArgs",
        KernelError::MissingInput(_) => "MissingInput",
        KernelError::TimeContractViolation { .. } => "TimeContractViolation",
        KernelError::UnknownComponent(_) => "UnknownComponent",
        KernelError::UndeclaredPort { .. } => "UndeclaredPort",
        KernelError::RoutingUnresolvable { .. } => "RoutingUnresolvable",
        KernelError::BarrierViolation(_) => "BarrierViolation",
        KernelError::ZeroDelayLivelock { .. } => "ZeroDelayLivelock",
        KernelError::UnknownBehavior(_) => "UnknownBehavior",
        KernelError::BadParams { .. } => "BadParams",
        KernelError::ValidationFailed(_) => "ValidationFailed",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn request_round_trip() {
        let req = Request::new("getTN", Some("Gen@c"), json!({}), 4);
        let line = serde_json::to_string(&req).unwrap();
        assert_eq!(line, r#"{"op":"getTN","sim":"Gen@c","args":{},"seq":4}"#);
        assert_eq!(parse_request(&line).unwrap(), req);
    }

    #[test]
    fn malformed_lines() {
        let r = parse_request("{not json").unwrap_err();
        assert_eq!(r.seq, None);
        assert_eq!(r.error.unwrap().code, "BadRequest");
        let r = parse_request(r#"{"seq": 9, "op": 3}"#).unwrap_err();
        assert_eq!(r.seq, Some(9));
        let r = parse_request(r#"{"seq": 2, "op": "getIp", "args": [1]}"#).unwrap_err();
        assert_eq!(r.seq, Some(2));
    }

    #[test]
    fn response_line_shape() {
        assert_eq!(
            Response::ok(1, json!("x")).to_line(),
            "{\"seq\":1,\"ok\":true,\"result\":\"x\"}\n"
        );
        assert_eq!(
            Response::err(None, "BadRequest", "m").to_line(),
            "{\"seq\":null,\"ok\":false,\"result\":null,\"error\":{\"code\":\"BadRequest\",\"message\":\"m\"}}\n"
        );
    }
}
