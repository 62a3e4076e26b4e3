use std::io::{BufReader, BufWriter};
use std::net::TcpStream;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::Value;
use thiserror::Error;

use crate::wire::{read_frame, write_frame, Op, WireError, WireRequest, WireResponse};

/// Environment variable naming the server address.
pub const ADDR_ENV: &str = "MGK_POOL_ADDR";

pub fn default_addr() -> String {
    std::env::var(ADDR_ENV).unwrap_or_else(|_| "127.0.0.1:7878".to_string())
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("pool unreachable: {0}")]
    Io(#[from] std::io::Error),
    #[error("{}: {}", .0.code, .0.message)]
    Remote(WireError),
    #[error("protocol: {0}")]
    Protocol(String),
}

impl ClientError {
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Remote(e) => Some(&e.code),
            _ => None,
        }
    }
}

static CLIENTS: AtomicU64 = AtomicU64::new(0);

/// Blocking client over one connection. Each call gets a fresh token.
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    prefix: String,
    sent: u64,
}

impl Client {
    pub fn connect(addr: &str) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let nanos = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
        let prefix = format!("{}-{nanos:x}-{}", std::process::id(), CLIENTS.fetch_add(1, Ordering::SeqCst));
        Ok(Self { reader: BufReader::new(stream.try_clone()?), writer: BufWriter::new(stream), prefix, sent: 0 })
    }

    pub fn next_token(&mut self) -> String {
        self.sent += 1;
        format!("{}-{}", self.prefix, self.sent)
    }

    /// Sends a request as is, token included.
    pub fn send(&mut self, req: &WireRequest) -> Result<WireResponse, ClientError> {
        self.send_raw(&serde_json::to_vec(req).expect("requests serialize"))
    }

    /// Sends arbitrary bytes as one frame.
    pub fn send_raw(&mut self, body: &[u8]) -> Result<WireResponse, ClientError> {
        write_frame(&mut self.writer, body)?;
        let reply = read_frame(&mut self.reader)?.ok_or_else(|| ClientError::Protocol("connection closed".into()))?;
        serde_json::from_slice(&reply).map_err(|e| ClientError::Protocol(e.to_string()))
    }

    /// One call with a fresh token; returns the payload or the remote error.
    pub fn call(&mut self, op: Op, instance_id: Option<u64>, payload: Value) -> Result<Value, ClientError> {
        let token = self.next_token();
        let resp = self.send(&WireRequest { op, instance_id, payload, token })?;
        match (resp.ok, resp.payload, resp.error) {
            (true, Some(p), _) => Ok(p),
            (false, _, Some(e)) => Err(ClientError::Remote(e)),
            _ => Err(ClientError::Protocol("response has neither payload nor error".into())),
        }
    }
}
