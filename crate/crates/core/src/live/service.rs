use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::context::{resolve_followup, update_context, ContextGraph, Interaction, PartialIntent};
use super::curation::{apply_and_record, apply_curation, CurationRecord};
use super::exec::{execute_query, Row};
use super::intent::{route_intent, IntentRegistry};
use super::kgq::{expand_virtual_ops, parse_kgq_with, OperatorRegistry, DEFAULT_MAX_DEPTH};
use super::{LiveError, LiveIndexes};
use crate::kg::EntityId;

/// Everything a query reads. Replaced wholesale on every mutation.
#[derive(Clone, Debug, Default)]
pub struct LiveState {
    pub indexes: LiveIndexes,
    pub operators: OperatorRegistry,
    pub intents: IntentRegistry,
    pub max_depth: u32,
}

impl LiveState {
    pub fn new(indexes: LiveIndexes, operators: OperatorRegistry, intents: IntentRegistry) -> Self {
        Self { indexes, operators, intents, max_depth: DEFAULT_MAX_DEPTH }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Request {
    Kgq {
        query: String,
        #[serde(default)]
        session_id: Option<String>,
    },
    Intent {
        intent: PartialIntent,
        #[serde(default)]
        session_id: Option<String>,
    },
    Curate {
        record: CurationRecord,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Response {
    #[serde(default)]
    pub columns: Vec<String>,
    #[serde(default)]
    pub rows: Vec<Row>,
    /// `kgq`, `curation`, or `<intent>#<alternative>`.
    #[serde(default)]
    pub answered_by: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved: Option<super::context::CompleteIntent>,
    pub freshness_lsn: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Query front end over an atomically swapped state, with one context graph
/// per session.
#[derive(Debug, Default)]
pub struct LiveService {
    state: RwLock<Arc<LiveState>>,
    writer: Mutex<()>,
    sessions: Mutex<HashMap<String, ContextGraph>>,
    curation_stream: Option<PathBuf>,
}

impl LiveService {
    pub fn new(state: LiveState) -> Self {
        Self { state: RwLock::new(Arc::new(state)), ..Self::default() }
    }

    /// Curations accepted by the service are appended to this file.
    pub fn with_curation_stream(mut self, path: PathBuf) -> Self {
        self.curation_stream = Some(path);
        self
    }

    pub fn snapshot(&self) -> Arc<LiveState> {
        self.state.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn swap(&self, next: LiveState) {
        *self.state.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(next);
    }

    /// Copies the current state, lets `f` change it and publishes the copy.
    /// Mutators are serialized; readers keep the state they started with.
    pub fn mutate<T>(&self, f: impl FnOnce(&mut LiveState) -> Result<T, LiveError>) -> Result<T, LiveError> {
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let mut next = (*self.snapshot()).clone();
        let out = f(&mut next)?;
        self.swap(next);
        Ok(out)
    }

    pub fn context(&self, session: &str) -> Option<ContextGraph> {
        self.sessions.lock().unwrap_or_else(|e| e.into_inner()).get(session).cloned()
    }

    pub fn handle(&self, req: &Request) -> Response {
        let lsn = self.snapshot().indexes.freshness_lsn;
        match self.try_handle(req) {
            Ok(r) => r,
            Err(e) => Response { freshness_lsn: lsn, error: Some(e.to_string()), ..Response::default() },
        }
    }

    fn try_handle(&self, req: &Request) -> Result<Response, LiveError> {
        match req {
            Request::Kgq { query, .. } => {
                let st = self.snapshot();
                let q = expand_virtual_ops(&parse_kgq_with(query, st.max_depth)?, &st.operators)?;
                let r = execute_query(&q, &st.indexes)?;
                Ok(Response {
                    columns: r.columns,
                    rows: r.rows,
                    answered_by: "kgq".into(),
                    freshness_lsn: st.indexes.freshness_lsn,
                    ..Response::default()
                })
            }
            Request::Intent { intent, session_id } => {
                let st = self.snapshot();
                let key = session_id.clone().unwrap_or_default();
                let mut sessions = self.sessions.lock().unwrap_or_else(|e| e.into_inner());
                let ctx = sessions.entry(key).or_default();
                let complete = resolve_followup(intent, ctx, Some(&st.intents))?;
                let routed = route_intent(&complete.name, &complete.args, &st.indexes, &st.intents)?;
                let q = expand_virtual_ops(&routed.query, &st.operators)?;
                let r = execute_query(&q, &st.indexes)?;
                let answers = answer_entities(&st.indexes, &r.rows);
                update_context(ctx, Interaction::observe(&st.indexes, &complete.name, &complete.args, &answers));
                Ok(Response {
                    columns: r.columns,
                    rows: r.rows,
                    answered_by: format!("{}#{}", routed.intent, routed.alternative),
                    resolved: Some(complete),
                    freshness_lsn: st.indexes.freshness_lsn,
                    error: None,
                })
            }
            Request::Curate { record } => {
                let stream = self.curation_stream.clone();
                self.mutate(|st| match &stream {
                    Some(p) => apply_and_record(&mut st.indexes, record, p),
                    None => apply_curation(&mut st.indexes, record),
                })?;
                Ok(Response {
                    answered_by: "curation".into(),
                    freshness_lsn: self.snapshot().indexes.freshness_lsn,
                    ..Response::default()
                })
            }
        }
    }

    /// Serves one JSON request per line until the peer closes.
    pub fn serve_connection(&self, stream: TcpStream) -> std::io::Result<()> {
        let mut out = stream.try_clone()?;
        for line in BufReader::new(stream).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let resp = match serde_json::from_str::<Request>(&line) {
                Ok(req) => self.handle(&req),
                Err(e) => Response {
                    freshness_lsn: self.snapshot().indexes.freshness_lsn,
                    error: Some(format!("bad request: {e}")),
                    ..Response::default()
                },
            };
            let mut bytes = serde_json::to_vec(&resp)?;
            bytes.push(b'\n');
            out.write_all(&bytes)?;
        }
        Ok(())
    }

    /// Accepts connections forever, one thread each.
    pub fn serve(self: Arc<Self>, listener: TcpListener) -> std::io::Result<()> {
        for conn in listener.incoming() {
            let conn = conn?;
            let svc = Arc::clone(&self);
            std::thread::spawn(move || {
                if let Err(e) = svc.serve_connection(conn) {
                    log::warn!("connection closed: {e}");
                }
            });
        }
        Ok(())
    }
}

/// Cells of the result that name indexed entities, in row order.
fn answer_entities(idx: &LiveIndexes, rows: &[Row]) -> Vec<EntityId> {
    let mut out: Vec<EntityId> = Vec::new();
    for v in rows.iter().flatten().flatten() {
        if let Ok(e) = v.parse::<EntityId>() {
            if idx.contains(&e) && !out.contains(&e) {
                out.push(e);
            }
        }
    }
    out
}
