//! Wire protocol for an external generation service: newline-delimited JSON
//! over a TCP byte stream. One request object per line, one response object
//! per line, matched by id.
//!
//! The payload keeps the seq2seq input convention (a "connection:" suffix
//! and ordered segments) so a fine-tuned model can be dropped in behind a
//! thin shim unchanged.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{GenError, GenRequest};

/// Prompt suffix the service receives with every request.
pub const SUFFIX: &str = "connection:";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WireRequest {
    pub id: u64,
    pub direction: String,
    pub suffix: String,
    pub segments: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WireResponse {
    pub id: u64,
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct ExternalConfig {
    pub addr: String,
    pub timeout: Duration,
    pub retries: usize,
    /// Upper bound on concurrently open requests.
    pub max_in_flight: usize,
}

impl Default for ExternalConfig {
    fn default() -> Self {
        ExternalConfig {
            addr: "127.0.0.1:7469".into(),
            timeout: Duration::from_secs(5),
            retries: 1,
            max_in_flight: 4,
        }
    }
}

pub struct ExternalClient {
    config: ExternalConfig,
    next_id: AtomicU64,
    in_flight: Mutex<usize>,
    slot_freed: Condvar,
}

impl ExternalClient {
    pub fn new(config: ExternalConfig) -> Self {
        ExternalClient {
            config,
            next_id: AtomicU64::new(1),
            in_flight: Mutex::new(0),
            slot_freed: Condvar::new(),
        }
    }

    pub fn generate(&self, request: &GenRequest) -> Result<String, GenError> {
        let wire = self.to_wire(request);
        let _slot = self.acquire_slot();
        let mut last_err = GenError::ExternalProtocol("no attempts made".into());
        for _ in 0..=self.config.retries {
            match self.round_trip(&wire) {
                Ok(response) => {
                    if response.id != wire.id {
                        return Err(GenError::ExternalProtocol(format!(
                            "response id {} does not match request id {}",
                            response.id, wire.id
                        )));
                    }
                    if response.text.trim().is_empty() {
                        return Err(GenError::ExternalProtocol("empty response text".into()));
                    }
                    return Ok(response.text);
                }
                Err(e) => last_err = e,
            }
        }
        Err(last_err)
    }

    /// Send an arbitrary segment list, for n-ary deduction.
    pub fn generate_segments(&self, direction: &str, segments: &[String]) -> Result<String, GenError> {
        let wire = WireRequest {
            id: self.next_id.fetch_add(1, Ordering::Relaxed),
            direction: direction.to_string(),
            suffix: SUFFIX.to_string(),
            segments: segments.to_vec(),
        };
        let _slot = self.acquire_slot();
        let mut last_err = GenError::ExternalProtocol("no attempts made".into());
        for _ in 0..=self.config.retries {
            match self.round_trip(&wire) {
                Ok(response) if response.id == wire.id && !response.text.trim().is_empty() => {
                    return Ok(response.text);
                }
                Ok(response) => {
                    return Err(GenError::ExternalProtocol(format!(
                        "bad response for request {}: {response:?}",
                        wire.id
                    )));
                }
                Err(e) => last_err = e,
            }
        }
        Err(last_err)
    }

    fn to_wire(&self, request: &GenRequest) -> WireRequest {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let (direction, segments) = match request {
            GenRequest::Deduce { premise_a, premise_b } => {
                ("deduce", vec![premise_a.clone(), premise_b.clone()])
            }
            GenRequest::Abduce { conclusion, known_premise } => {
                ("abduce", vec![known_premise.clone(), conclusion.clone()])
            }
        };
        WireRequest {
            id,
            direction: direction.to_string(),
            suffix: SUFFIX.to_string(),
            segments,
        }
    }

    fn round_trip(&self, wire: &WireRequest) -> Result<WireResponse, GenError> {
        let timeout = self.config.timeout;
        let stream = TcpStream::connect(&self.config.addr)
            .map_err(|e| GenError::ExternalProtocol(format!("connect: {e}")))?;
        stream
            .set_read_timeout(Some(timeout))
            .and_then(|_| stream.set_write_timeout(Some(timeout)))
            .map_err(|e| GenError::ExternalProtocol(format!("socket: {e}")))?;

        let mut line = serde_json::to_string(wire)
            .map_err(|e| GenError::ExternalProtocol(format!("encode: {e}")))?;
        line.push('\n');
        let mut writer = &stream;
        writer
            .write_all(line.as_bytes())
            .map_err(|e| timeout_or_protocol(e, timeout))?;

        let mut reader = BufReader::new(&stream);
        let mut response_line = String::new();
        reader
            .read_line(&mut response_line)
            .map_err(|e| timeout_or_protocol(e, timeout))?;
        if response_line.is_empty() {
            return Err(GenError::ExternalProtocol("connection closed".into()));
        }
        serde_json::from_str(&response_line)
            .map_err(|e| GenError::ExternalProtocol(format!("decode: {e}")))
    }

    fn acquire_slot(&self) -> SlotGuard<'_> {
        let mut count = self.in_flight.lock().expect("in-flight lock poisoned");
        while *count >= self.config.max_in_flight.max(1) {
            count = self.slot_freed.wait(count).expect("in-flight lock poisoned");
        }
        *count += 1;
        SlotGuard { client: self }
    }
}

struct SlotGuard<'a> {
    client: &'a ExternalClient,
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        let mut count = self.client.in_flight.lock().expect("in-flight lock poisoned");
        *count -= 1;
        self.client.slot_freed.notify_one();
    }
}

fn timeout_or_protocol(e: std::io::Error, timeout: Duration) -> GenError {
    match e.kind() {
        std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut => {
            GenError::ExternalTimeout(timeout)
        }
        _ => GenError::ExternalProtocol(e.to_string()),
    }
}
