//! Versioned JSON messages for driving a [`Session`], one message per line.
//!
//! Every request carries `v` (the protocol version), a client-chosen `id`
//! and a `type`. Every request gets exactly one response with the same
//! `id`. Animation steps and input requests arrive as events in between.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{channel, Sender};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::incremental::EditEvent;
use crate::session::{Control, Mode, Query, Session, SessionError};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestEnvelope {
    pub v: u32,
    #[serde(default)]
    pub id: u64,
    #[serde(flatten)]
    pub request: Request,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Request {
    /// Starts a new session on this connection, replacing any previous one.
    Open {
        #[serde(default)]
        text: String,
        #[serde(default)]
        mode: Mode,
    },
    Edit { event: EditEvent },
    SetMode { mode: Mode },
    Control { control: Control },
    Query { query: Query },
    /// Supplies the integer a suspended run is waiting for.
    Input { value: i32 },
    /// Interrupts a running command. Acted on as soon as it is read, ahead
    /// of anything still queued.
    Stop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub v: u32,
    pub id: u64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub v: u32,
    /// `animate_step` or `input_request`.
    pub event: String,
    /// The request that caused the event.
    pub id: u64,
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Outgoing {
    Response(Response),
    Event(Event),
}

impl Outgoing {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("messages serialize")
    }
}

fn ok(id: u64, result: Value) -> Outgoing {
    Outgoing::Response(Response { v: PROTOCOL_VERSION, id, ok: true, result: Some(result), error: None })
}

fn fail(id: u64, code: &str, message: impl Into<String>) -> Outgoing {
    Outgoing::Response(Response {
        v: PROTOCOL_VERSION,
        id,
        ok: false,
        result: None,
        error: Some(ErrorBody { code: code.to_string(), message: message.into() }),
    })
}

fn session_error(id: u64, e: &SessionError) -> Outgoing {
    let value = serde_json::to_value(e).expect("errors serialize");
    let code = match &value {
        Value::Object(m) => m.get("code").and_then(Value::as_str).unwrap_or("error").to_string(),
        Value::String(s) => s.clone(),
        _ => "error".to_string(),
    };
    fail(id, &code, e.to_string())
}

fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).expect("payloads serialize")
}

static SESSION_COUNTER: AtomicU64 = AtomicU64::new(1);

/// Processes requests for one connection, in order.
pub struct Handler {
    session: Option<Session>,
    interrupt: Arc<AtomicBool>,
}

impl Handler {
    pub fn new(interrupt: Arc<AtomicBool>) -> Handler {
        Handler { session: None, interrupt }
    }

    pub fn session(&self) -> Option<&Session> {
        self.session.as_ref()
    }

    pub fn handle_line(&mut self, line: &str, emit: &mut dyn FnMut(Outgoing)) {
        let value: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => return emit(fail(0, "bad_json", e.to_string())),
        };
        let id = value.get("id").and_then(Value::as_u64).unwrap_or(0);
        match value.get("v").and_then(Value::as_u64) {
            Some(v) if v == PROTOCOL_VERSION as u64 => {}
            other => {
                return emit(fail(id, "unsupported_version", format!("expected v {PROTOCOL_VERSION}, got {other:?}")));
            }
        }
        match serde_json::from_value::<RequestEnvelope>(value) {
            Ok(envelope) => self.handle(envelope, emit),
            Err(e) => emit(fail(id, "bad_request", e.to_string())),
        }
    }

    pub fn handle(&mut self, envelope: RequestEnvelope, emit: &mut dyn FnMut(Outgoing)) {
        let id = envelope.id;
        if let Request::Open { text, mode } = envelope.request {
            let name = format!("s{}", SESSION_COUNTER.fetch_add(1, Ordering::Relaxed));
            let session = Session::create(name, &text, mode);
            emit(ok(id, json!({ "session": session.id, "mode": session.mode, "diagnostics": session.diagnostics() })));
            self.session = Some(session);
            return;
        }
        if envelope.request == Request::Stop {
            // the transport raised the flag when the message arrived; by now
            // the interrupted command has finished
            self.interrupt.store(false, Ordering::Relaxed);
            return emit(ok(id, json!({})));
        }
        let Some(session) = self.session.as_mut() else {
            return emit(fail(id, "no_session", "send an open request first"));
        };
        let interrupt = &self.interrupt;
        let outcome = match envelope.request {
            Request::Open { .. } | Request::Stop => unreachable!(),
            Request::Edit { event } => session
                .apply_edit(&event)
                .map(|delta| json!({ "delta": delta, "diagnostics": session.diagnostics() })),
            Request::SetMode { mode } => {
                session.mode = mode;
                Ok(json!({ "mode": mode }))
            }
            Request::Control { control } => session
                .control(control, interrupt, |report| {
                    emit(Outgoing::Event(Event { v: PROTOCOL_VERSION, event: "animate_step".into(), id, payload: to_value(report) }))
                })
                .map(to_value),
            Request::Query { query } => session.query(&query).map(to_value),
            Request::Input { value } => session.provide_input(value, interrupt).map(to_value),
        };
        match outcome {
            Ok(result) => {
                let waiting = result.pointer("/stop/reason") == Some(&json!("input_required"));
                emit(ok(id, result));
                if waiting {
                    emit(Outgoing::Event(Event { v: PROTOCOL_VERSION, event: "input_request".into(), id, payload: json!({}) }));
                }
            }
            Err(e) => emit(session_error(id, &e)),
        }
    }
}

/// A handler on its own worker thread. Lines go in through [`submit`];
/// replies come out through the `emit` callback given to [`spawn`].
///
/// [`submit`]: Connection::submit
/// [`spawn`]: Connection::spawn
pub struct Connection {
    queue: Option<Sender<String>>,
    interrupt: Arc<AtomicBool>,
    worker: Option<JoinHandle<()>>,
}

impl Connection {
    pub fn spawn(mut emit: impl FnMut(String) + Send + 'static) -> Connection {
        let interrupt = Arc::new(AtomicBool::new(false));
        let (queue, inbox) = channel::<String>();
        let mut handler = Handler::new(interrupt.clone());
        let worker = std::thread::spawn(move || {
            for line in inbox {
                handler.handle_line(&line, &mut |out| emit(out.to_line()));
            }
        });
        Connection { queue: Some(queue), interrupt, worker: Some(worker) }
    }

    /// Queues one request line. A stop request also interrupts whatever is
    /// running right now.
    pub fn submit(&self, line: String) {
        if is_stop(&line) {
            self.interrupt.store(true, Ordering::Relaxed);
        }
        if let Some(queue) = &self.queue {
            let _ = queue.send(line);
        }
    }

    /// Waits for every queued request to be answered.
    pub fn finish(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.queue = None;
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        // unblock a running command so the worker can exit
        self.interrupt.store(true, Ordering::Relaxed);
        self.shutdown();
    }
}

fn is_stop(line: &str) -> bool {
    serde_json::from_str::<Value>(line).is_ok_and(|v| v.get("type").and_then(Value::as_str) == Some("stop"))
}
