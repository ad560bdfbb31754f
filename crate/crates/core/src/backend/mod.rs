//! Scoring backends and their wire protocol.
//!
//! Backends answer newline-delimited JSON requests carrying a correlation id.
//! On startup a backend process emits the handshake line
//! `{"protocol":"chain-score/1"}`; every request line then gets exactly one
//! response line echoing its id:
//!
//! ```text
//! -> {"id":"r1","kind":"entailment","premise":"...","hypothesis":"..."}
//! <- {"id":"r1","scores":{"entailment":0.7,"neutral":0.2,"contradiction":0.1}}
//! -> {"id":"r2","kind":"otd","text":"..."}
//! <- {"id":"r2","scores":{"offensive":0.9,"non_offensive":0.1}}
//! -> {"id":"r3","kind":"completion","prompt":"..."}
//! <- {"id":"r3","completion":"..."}
//! <- {"id":"r4","error":"..."}
//! ```
//!
//! Responses may arrive in any order; clients match them by id.

mod client;
pub mod conformance;
mod mock;
mod server;
mod spec;

use std::collections::HashSet;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use client::{StreamBackend, DEFAULT_TIMEOUT};
pub use mock::{fnv1a64, MockBackend, MockMode, LEXICON_FLOOR};
pub use server::{handle_line, serve, serve_tcp};
pub use spec::{connect, BackendSpec};

pub const PROTOCOL_VERSION: &str = "chain-score/1";

/// Slack allowed on the sum of a returned distribution.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend reported an error: {0}")]
    Scoring(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("duplicate request id {0:?} in batch")]
    DuplicateId(String),
    #[error("invalid backend spec {0:?}")]
    InvalidSpec(String),
}

impl BackendError {
    /// Transport failures are the only ones worth a retry.
    pub fn is_transport(&self) -> bool {
        matches!(self, BackendError::Transport(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestKind {
    Entailment,
    Otd,
    /// Text completion; used by the knowledge probe.
    Completion,
}

impl fmt::Display for RequestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RequestKind::Entailment => "entailment",
            RequestKind::Otd => "otd",
            RequestKind::Completion => "completion",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub id: String,
    pub kind: RequestKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub premise: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypothesis: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
}

impl ScoreRequest {
    fn bare(id: String, kind: RequestKind) -> Self {
        Self {
            id,
            kind,
            premise: None,
            hypothesis: None,
            text: None,
            prompt: None,
        }
    }

    pub fn entailment(id: impl Into<String>, premise: impl Into<String>, hypothesis: impl Into<String>) -> Self {
        Self {
            premise: Some(premise.into()),
            hypothesis: Some(hypothesis.into()),
            ..Self::bare(id.into(), RequestKind::Entailment)
        }
    }

    pub fn otd(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            text: Some(text.into()),
            ..Self::bare(id.into(), RequestKind::Otd)
        }
    }

    pub fn completion(id: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self {
            prompt: Some(prompt.into()),
            ..Self::bare(id.into(), RequestKind::Completion)
        }
    }

    /// Check that the fields required by `kind` are present and non-empty.
    pub fn validate(&self) -> Result<(), BackendError> {
        fn need(field: &Option<String>, name: &str, kind: RequestKind) -> Result<(), BackendError> {
            match field.as_deref() {
                Some(s) if !s.trim().is_empty() => Ok(()),
                Some(_) => Err(BackendError::Precondition(format!("{kind} request has empty {name}"))),
                None => Err(BackendError::Precondition(format!("{kind} request lacks {name}"))),
            }
        }
        match self.kind {
            RequestKind::Entailment => {
                need(&self.premise, "premise", self.kind)?;
                need(&self.hypothesis, "hypothesis", self.kind)
            }
            RequestKind::Otd => need(&self.text, "text", self.kind),
            RequestKind::Completion => need(&self.prompt, "prompt", self.kind),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntailmentScores {
    pub entailment: f64,
    pub neutral: f64,
    pub contradiction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OtdScores {
    pub offensive: f64,
    pub non_offensive: f64,
}

impl OtdScores {
    /// Argmax decision; an exact tie counts as non-offensive.
    pub fn is_offensive(&self) -> bool {
        self.offensive > self.non_offensive
    }
}

fn check_distribution(values: &[(&str, f64)]) -> Result<(), BackendError> {
    for (name, v) in values {
        if !v.is_finite() || !(0.0..=1.0).contains(v) {
            return Err(BackendError::Protocol(format!("{name} score {v} outside [0, 1]")));
        }
    }
    let sum: f64 = values.iter().map(|(_, v)| v).sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(BackendError::Protocol(format!("scores sum to {sum}, not 1")));
    }
    Ok(())
}

impl EntailmentScores {
    pub fn validate(&self) -> Result<(), BackendError> {
        check_distribution(&[
            ("entailment", self.entailment),
            ("neutral", self.neutral),
            ("contradiction", self.contradiction),
        ])
    }
}

impl OtdScores {
    pub fn validate(&self) -> Result<(), BackendError> {
        check_distribution(&[("offensive", self.offensive), ("non_offensive", self.non_offensive)])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scores {
    Entailment(EntailmentScores),
    Otd(OtdScores),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Scores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ScoreResponse {
    pub fn scores(id: impl Into<String>, scores: Scores) -> Self {
        Self {
            id: id.into(),
            scores: Some(scores),
            completion: None,
            error: None,
        }
    }

    pub fn completion(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            scores: None,
            completion: Some(text.into()),
            error: None,
        }
    }

    pub fn error(id: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            scores: None,
            completion: None,
            error: Some(message.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handshake {
    pub protocol: String,
}

impl Handshake {
    pub fn current() -> Self {
        Self {
            protocol: PROTOCOL_VERSION.to_string(),
        }
    }

    pub fn line() -> String {
        serde_json::to_string(&Self::current()).expect("handshake serializes")
    }
}

/// A model service answering protocol requests. Handles are shared across
/// threads; every call is an independent request/response pair.
pub trait Backend: Send + Sync {
    /// Identifier recorded in run manifests and report labels.
    fn name(&self) -> &str;

    /// Send one request and wait for its response. `Err` is reserved for
    /// failures that produced no response at all; backend-reported errors
    /// come back as a response carrying `error`.
    fn call(&self, request: &ScoreRequest) -> Result<ScoreResponse, BackendError>;
}

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

pub fn next_request_id() -> String {
    format!("r{}", NEXT_ID.fetch_add(1, Ordering::Relaxed))
}

enum Payload {
    Scores(Scores),
    Completion(String),
}

fn dispatch(backend: &dyn Backend, request: &ScoreRequest) -> Result<Payload, BackendError> {
    request.validate()?;
    let response = backend.call(request)?;
    check_response(request, &response)?;
    if let Some(err) = response.error {
        return Err(BackendError::Scoring(err));
    }
    match (request.kind, response.scores, response.completion) {
        (RequestKind::Completion, None, Some(text)) => Ok(Payload::Completion(text)),
        (_, Some(scores), None) => Ok(Payload::Scores(scores)),
        _ => unreachable!("check_response enforces the payload shape"),
    }
}

/// Verify that a response is well formed for its request: id echoed, exactly
/// one payload, payload matching the request kind, distributions normalized.
pub fn check_response(request: &ScoreRequest, response: &ScoreResponse) -> Result<(), BackendError> {
    if response.id != request.id {
        return Err(BackendError::Protocol(format!(
            "response id {:?} does not echo request id {:?}",
            response.id, request.id
        )));
    }
    let present = [
        response.scores.is_some(),
        response.completion.is_some(),
        response.error.is_some(),
    ]
    .iter()
    .filter(|&&b| b)
    .count();
    if present != 1 {
        return Err(BackendError::Protocol(format!(
            "response {:?} must carry exactly one of scores/completion/error",
            response.id
        )));
    }
    if response.error.is_some() {
        return Ok(());
    }
    match (request.kind, &response.scores, &response.completion) {
        (RequestKind::Entailment, Some(Scores::Entailment(s)), _) => s.validate(),
        (RequestKind::Otd, Some(Scores::Otd(s)), _) => s.validate(),
        (RequestKind::Completion, _, Some(_)) => Ok(()),
        (kind, _, _) => Err(BackendError::Protocol(format!(
            "response {:?} carries the wrong payload for a {kind} request",
            response.id
        ))),
    }
}

pub fn score_entailment(
    backend: &dyn Backend,
    premise: &str,
    hypothesis: &str,
) -> Result<EntailmentScores, BackendError> {
    let req = ScoreRequest::entailment(next_request_id(), premise, hypothesis);
    match dispatch(backend, &req)? {
        Payload::Scores(Scores::Entailment(s)) => Ok(s),
        _ => unreachable!(),
    }
}

pub fn score_otd(backend: &dyn Backend, text: &str) -> Result<OtdScores, BackendError> {
    let req = ScoreRequest::otd(next_request_id(), text);
    match dispatch(backend, &req)? {
        Payload::Scores(Scores::Otd(s)) => Ok(s),
        _ => unreachable!(),
    }
}

pub fn complete(backend: &dyn Backend, prompt: &str) -> Result<String, BackendError> {
    let req = ScoreRequest::completion(next_request_id(), prompt);
    match dispatch(backend, &req)? {
        Payload::Completion(text) => Ok(text),
        _ => unreachable!(),
    }
}

/// Score a batch of requests with up to `parallelism` in flight.
///
/// Responses are returned in request order. A request failing its
/// preconditions, or rejected by the backend, yields an error response for
/// its id while the rest proceed. Transport failures abort the batch.
pub fn batch_score(
    backend: &dyn Backend,
    requests: &[ScoreRequest],
    parallelism: usize,
) -> Result<Vec<ScoreResponse>, BackendError> {
    let mut ids = HashSet::with_capacity(requests.len());
    for r in requests {
        if !ids.insert(r.id.as_str()) {
            return Err(BackendError::DuplicateId(r.id.clone()));
        }
    }
    let one = |req: &ScoreRequest| -> Result<ScoreResponse, BackendError> {
        if let Err(e) = req.validate() {
            return Ok(ScoreResponse::error(&req.id, e.to_string()));
        }
        let resp = backend.call(req)?;
        match check_response(req, &resp) {
            Ok(()) => Ok(resp),
            Err(e) => Ok(ScoreResponse::error(&req.id, e.to_string())),
        }
    };
    crate::exec::run_indexed(parallelism, requests, one)
}
