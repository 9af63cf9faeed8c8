//! Blocking client for the wire protocol.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use serde_json::Value;
use thiserror::Error;

use crate::wire::{Request, Response};

pub const CONNECT_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClientError {
    #[error("server {addr} unreachable: {reason}")]
    Unreachable { addr: String, reason: String },

    #[error("{addr} answered {code}: {message}")]
    Remote { addr: String, code: String, message: String },

    #[error("protocol error talking to {addr}: {reason}")]
    Protocol { addr: String, reason: String },
}

impl ClientError {
    pub fn code(&self) -> &str {
        match self {
            ClientError::Unreachable { .. } => "ServerUnreachable",
            ClientError::Remote { code, .. } => code,
            ClientError::Protocol { .. } => "ProtocolError",
        }
    }
}

/// One connection (one session) to a simulation service.
#[derive(Debug)]
pub struct Client {
    addr: String,
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    seq: i64,
}

impl Client {
    pub fn connect(addr: &str) -> Result<Client, ClientError> {
        let unreachable = |reason: String| ClientError::Unreachable {
            addr: addr.to_owned(),
            reason,
        };
        let sock = addr
            .to_socket_addrs()
            .map_err(|e| unreachable(e.to_string()))?
            .next()
            .ok_or_else(|| unreachable("no address".into()))?;
        let stream = TcpStream::connect_timeout(&sock, CONNECT_TIMEOUT).map_err(|e| unreachable(e.to_string()))?;
        stream.set_nodelay(true).ok();
        let writer = stream.try_clone().map_err(|e| unreachable(e.to_string()))?;
        Ok(Client {
            addr: addr.to_owned(),
            reader: BufReader::new(stream),
            writer,
            seq: 0,
        })
    }

    pub fn addr(&self) -> &str {
        &self.addr
    }

    /// Sends one request and waits for its response.
    pub fn call(&mut self, op: &str, sim: Option<&str>, args: Value) -> Result<Value, ClientError> {
        self.seq += 1;
        let req = Request::new(op, sim, args, self.seq);
        let resp = self.round_trip(&req)?;
        if resp.seq != Some(req.seq) {
            return Err(self.protocol(format!("expected seq {}, got {:?}", req.seq, resp.seq)));
        }
        if resp.ok {
            Ok(resp.result)
        } else {
            let err = resp.error.unwrap_or_else(|| crate::wire::WireError {
                code: "Unknown".into(),
                message: String::new(),
            });
            Err(ClientError::Remote {
                addr: self.addr.clone(),
                code: err.code,
                message: err.message,
            })
        }
    }

    /// Writes a raw line and reads one response line.
    pub fn raw(&mut self, line: &str) -> Result<Response, ClientError> {
        let lost = |e: std::io::Error| ClientError::Unreachable {
            addr: self.addr.clone(),
            reason: e.to_string(),
        };
        self.writer.write_all(line.as_bytes()).map_err(lost)?;
        if !line.ends_with('\n') {
            self.writer.write_all(b"\n").map_err(lost)?;
        }
        self.read_response()
    }

    pub fn read_response(&mut self) -> Result<Response, ClientError> {
        let mut buf = String::new();
        let n = self.reader.read_line(&mut buf).map_err(|e| ClientError::Unreachable {
            addr: self.addr.clone(),
            reason: e.to_string(),
        })?;
        if n == 0 {
            return Err(ClientError::Unreachable {
                addr: self.addr.clone(),
                reason: "connection closed".into(),
            });
        }
        serde_json::from_str(&buf).map_err(|e| self.protocol(e.to_string()))
    }

    fn round_trip(&mut self, req: &Request) -> Result<Response, ClientError> {
        let line = serde_json::to_string(req).expect("requests serialise");
        self.raw(&line)
    }

    fn protocol(&self, reason: String) -> ClientError {
        ClientError::Protocol {
            addr: self.addr.clone(),
            reason,
        }
    }
}
