//! Controller side of the `asa-wire/1` protocol: newline-delimited JSON over
//! a stream socket or stdio. A hooked model sends its layer-L state, the
//! responder replies with the steering delta computed by the bundle.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::controller::{AssetBundle, Mode, OperatingPoint};
use crate::error::{Error, Result};
use crate::eval::fnv1a;
use crate::scalar::Scalar;

pub const PROTOCOL: &str = "asa-wire/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum WireMessage {
    Hello {
        dim: usize,
        layer: u32,
        model_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        protocol: Option<String>,
    },
    State {
        session: String,
        vector: Vec<f32>,
        /// Ground-truth domain, consulted only in `oracle_router` mode.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        domain: Option<String>,
    },
    Steer {
        session: String,
        gate: i8,
        alpha: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<Vec<f32>>,
    },
    Result {
        session: String,
        text: String,
    },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session: Option<String>,
        reason: String,
    },
    Bye,
}

impl WireMessage {
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("wire messages always serialize");
        s.push('\n');
        s
    }

    fn error(session: Option<&str>, reason: impl Into<String>) -> Self {
        WireMessage::Error { session: session.map(str::to_string), reason: reason.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServeConfig {
    pub mode: Mode,
    /// Overrides the bundle's own alpha and tau when set.
    pub operating_point: Option<OperatingPoint<f64>>,
    pub seed: u64,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self { mode: Mode::Full, operating_point: None, seed: 42 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub session: String,
    pub text: String,
}

/// Immutable bundle plus configuration; shared by every connection.
pub struct Responder<T> {
    bundle: AssetBundle<T>,
    config: ServeConfig,
    results: Mutex<Vec<SessionResult>>,
}

/// Per-connection protocol state.
pub struct Connection<'a, T> {
    responder: &'a Responder<T>,
    negotiated: bool,
    /// Sessions that already had their state exchange (or were aborted).
    used: HashSet<String>,
    steered: HashSet<String>,
    offset: u64,
}

impl<T: Scalar> Responder<T> {
    pub fn new(bundle: AssetBundle<T>, config: ServeConfig) -> Result<Self> {
        bundle.validate()?;
        if let Some(op) = config.operating_point {
            if !(op.alpha >= 0.0) || !(0.5..1.0).contains(&op.tau) {
                return Err(Error::InvalidParameter(format!("operating point {op:?} out of range")));
            }
        }
        Ok(Self { bundle, config, results: Mutex::new(Vec::new()) })
    }

    pub fn bundle(&self) -> &AssetBundle<T> {
        &self.bundle
    }

    pub fn connection(&self) -> Connection<'_, T> {
        Connection { responder: self, negotiated: false, used: HashSet::new(), steered: HashSet::new(), offset: 0 }
    }

    /// Drains the generation results reported so far.
    pub fn take_results(&self) -> Vec<SessionResult> {
        std::mem::take(&mut *self.results.lock().expect("results lock"))
    }

    fn steer(&self, session: &str, vector: &[f32], domain: Option<&str>) -> Result<WireMessage> {
        let h: Vec<T> = vector.iter().map(|&x| T::of(f64::from(x))).collect();
        let op = match self.config.operating_point {
            Some(op) => OperatingPoint { alpha: T::of(op.alpha), tau: T::of(op.tau) },
            None => OperatingPoint { alpha: self.bundle.alpha, tau: self.bundle.tau },
        };
        let seed = self.config.seed ^ fnv1a(session);
        let d = self.bundle.decide_at(&h, self.config.mode, domain, seed, op)?;
        Ok(WireMessage::Steer {
            session: session.to_string(),
            gate: d.gate,
            alpha: op.alpha.as_f64(),
            delta: (d.gate != 0).then(|| d.delta.iter().map(|x| x.as_f64() as f32).collect()),
        })
    }
}

/// What to do after a line has been handled.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub messages: Vec<WireMessage>,
    pub close: bool,
}

impl Reply {
    fn one(m: WireMessage) -> Self {
        Self { messages: vec![m], close: false }
    }
    fn none() -> Self {
        Self { messages: Vec::new(), close: false }
    }
    fn closing(m: WireMessage) -> Self {
        Self { messages: vec![m], close: true }
    }
}

impl<T: Scalar> Connection<'_, T> {
    /// Handles one raw line (without its terminator). `len` is the number of
    /// bytes the line occupied in the stream, terminator included.
    pub fn handle_line(&mut self, line: &[u8], len: usize) -> Reply {
        let start = self.offset;
        self.offset += len as u64;
        if line.iter().all(u8::is_ascii_whitespace) {
            return Reply::none();
        }
        let msg: WireMessage = match std::str::from_utf8(line)
            .map_err(|e| format!("invalid utf-8 at byte {}", start + e.valid_up_to() as u64))
            .and_then(|s| {
                serde_json::from_str(s).map_err(|e| {
                    let col = line_offset(s, e.line(), e.column());
                    format!("malformed message at byte {}: {e}", start + col as u64)
                })
            }) {
            Ok(m) => m,
            Err(reason) => return Reply::one(WireMessage::error(None, reason)),
        };
        self.handle(msg)
    }

    pub fn handle(&mut self, msg: WireMessage) -> Reply {
        let bundle = &self.responder.bundle;
        match msg {
            WireMessage::Hello { dim, layer, model_id, protocol } => {
                if let Some(p) = protocol.as_deref().filter(|p| *p != PROTOCOL) {
                    return Reply::closing(WireMessage::error(None, format!("unsupported protocol {p:?}")));
                }
                if dim != bundle.dim {
                    return Reply::closing(WireMessage::error(
                        None,
                        format!("dim mismatch: hello {dim}, bundle {}", bundle.dim),
                    ));
                }
                if layer != bundle.layer {
                    return Reply::closing(WireMessage::error(
                        None,
                        format!("layer mismatch: hello {layer}, bundle {}", bundle.layer),
                    ));
                }
                self.negotiated = true;
                Reply::one(WireMessage::Hello {
                    dim: bundle.dim,
                    layer: bundle.layer,
                    model_id,
                    protocol: Some(PROTOCOL.to_string()),
                })
            }
            _ if !self.negotiated => Reply::closing(WireMessage::error(None, "hello required first")),
            WireMessage::State { session, vector, domain } => {
                if !self.used.insert(session.clone()) {
                    return Reply::one(WireMessage::error(Some(&session), "duplicate state for session"));
                }
                if vector.len() != bundle.dim {
                    return Reply::one(WireMessage::error(
                        Some(&session),
                        format!("dim mismatch: state {}, bundle {}", vector.len(), bundle.dim),
                    ));
                }
                match self.responder.steer(&session, &vector, domain.as_deref()) {
                    Ok(m) => {
                        self.steered.insert(session);
                        Reply::one(m)
                    }
                    Err(e) => Reply::one(WireMessage::error(Some(&session), e.to_string())),
                }
            }
            WireMessage::Result { session, text } => {
                if !self.steered.remove(&session) {
                    return Reply::one(WireMessage::error(Some(&session), "result without a steer exchange"));
                }
                self.responder.results.lock().expect("results lock").push(SessionResult { session, text });
                Reply::none()
            }
            WireMessage::Bye => Reply::closing(WireMessage::Bye),
            WireMessage::Steer { session, .. } | WireMessage::Error { session: Some(session), .. } => {
                Reply::one(WireMessage::error(Some(&session), "unexpected message from client"))
            }
            WireMessage::Error { session: None, .. } => {
                Reply::one(WireMessage::error(None, "unexpected message from client"))
            }
        }
    }
}

/// Byte offset of a 1-based (line, column) position inside `s`.
fn line_offset(s: &str, line: usize, column: usize) -> usize {
    let before: usize = s.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (before + column.saturating_sub(1)).min(s.len())
}

/// Runs one connection to completion: until `bye`, a fatal error, or EOF.
pub fn serve_stream<T: Scalar, R: BufRead, W: Write>(responder: &Responder<T>, mut reader: R, mut writer: W) -> Result<()> {
    let mut conn = responder.connection();
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf).map_err(|e| Error::io("<wire>", e))?;
        if n == 0 {
            return Ok(());
        }
        let line = buf.strip_suffix(b"\n").unwrap_or(&buf);
        let line = line.strip_suffix(b"\r").unwrap_or(line);
        let reply = conn.handle_line(line, n);
        for m in &reply.messages {
            writer.write_all(m.to_line().as_bytes()).map_err(|e| Error::io("<wire>", e))?;
        }
        writer.flush().map_err(|e| Error::io("<wire>", e))?;
        if reply.close {
            return Ok(());
        }
    }
}

/// Accepts connections forever, one thread each.
pub fn serve_tcp<T: Scalar>(responder: Arc<Responder<T>>, listener: TcpListener) -> Result<()> {
    for stream in listener.incoming() {
        let stream = stream.map_err(|e| Error::io("<tcp>", e))?;
        let responder = Arc::clone(&responder);
        std::thread::spawn(move || {
            let _ = handle_tcp(&responder, stream);
        });
    }
    Ok(())
}

fn handle_tcp<T: Scalar>(responder: &Responder<T>, stream: TcpStream) -> Result<()> {
    // lockstep request/response: without this every reply waits on a delayed ACK
    stream.set_nodelay(true).map_err(|e| Error::io("<tcp>", e))?;
    let reader = BufReader::new(stream.try_clone().map_err(|e| Error::io("<tcp>", e))?);
    serve_stream(responder, reader, BufWriter::new(stream))
}
