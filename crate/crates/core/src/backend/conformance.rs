//! Protocol conformance runner for backend processes.
//!
//! Sends a fixed request corpus over a raw line stream and checks the
//! handshake, id echoing, score normalization and per-request error
//! isolation. The corpus deliberately includes an incomplete request and a
//! non-JSON line.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::client::Link;
use super::{
    check_response, serve, BackendError, BackendSpec, Handshake, MockBackend, RequestKind, ScoreRequest, ScoreResponse,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expect {
    Scores,
    Error,
}

/// Golden request lines and the response shape each must produce.
pub const GOLDEN_REQUESTS: &[(&str, Expect)] = &[
    (
        r#"{"id":"conf-entail","kind":"entailment","premise":"A man is sleeping.","hypothesis":"A man is running."}"#,
        Expect::Scores,
    ),
    (
        r#"{"id":"conf-otd","kind":"otd","text":"You are fat."}"#,
        Expect::Scores,
    ),
    (
        r#"{"id":"conf-missing","kind":"entailment","premise":"A man is sleeping."}"#,
        Expect::Error,
    ),
    (r#"{"id":"conf-empty","kind":"otd","text":""}"#, Expect::Error),
    ("{this is not json", Expect::Error),
    (
        r#"{"id":"conf-after-error","kind":"otd","text":"Have a nice day."}"#,
        Expect::Scores,
    ),
    (
        r#"{"id":"conf-entail-2","kind":"entailment","premise":"You look like someone who could use more exercise.","hypothesis":"You are fat."}"#,
        Expect::Scores,
    ),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ConformanceReport {
    pub checks: Vec<CheckResult>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    fn record(&mut self, name: impl Into<String>, result: Result<(), String>) {
        let (passed, detail) = match result {
            Ok(()) => (true, String::new()),
            Err(d) => (false, d),
        };
        self.checks.push(CheckResult {
            name: name.into(),
            passed,
            detail,
        });
    }
}

fn expected_id(line: &str) -> String {
    serde_json::from_str::<serde_json::Value>(line)
        .ok()
        .and_then(|v| v.get("id").and_then(|i| i.as_str()).map(String::from))
        .unwrap_or_default()
}

/// Run the golden corpus against a backend described by `spec`.
pub fn run_spec(spec: &BackendSpec, timeout: Duration) -> Result<ConformanceReport, BackendError> {
    let link = match spec {
        BackendSpec::Command(argv) => Link::spawn(argv).map_err(|e| BackendError::Transport(format!("{spec}: {e}")))?,
        BackendSpec::Tcp(addr) => Link::tcp(addr).map_err(|e| BackendError::Transport(format!("{spec}: {e}")))?,
        BackendSpec::MockHash | BackendSpec::MockLexicon(_) => {
            let backend = super::connect(spec, timeout)?;
            let (req_rx, req_tx) = std::io::pipe().map_err(|e| BackendError::Transport(e.to_string()))?;
            let (resp_rx, resp_tx) = std::io::pipe().map_err(|e| BackendError::Transport(e.to_string()))?;
            thread::spawn(move || serve(backend.as_ref(), BufReader::new(req_rx), resp_tx));
            Link::from_parts(Box::new(BufReader::new(resp_rx)), Box::new(req_tx))
        }
    };
    let (reader, writer, _closer) = link.into_parts();
    Ok(run_streams(reader, writer, timeout))
}

/// Run the golden corpus over an already-open line stream.
pub fn run_streams(
    reader: Box<dyn BufRead + Send>,
    mut writer: Box<dyn Write + Send>,
    timeout: Duration,
) -> ConformanceReport {
    let mut report = ConformanceReport::default();
    let (tx, rx) = mpsc::channel::<String>();
    thread::spawn(move || {
        for line in reader.lines() {
            match line {
                Ok(l) => {
                    if tx.send(l).is_err() {
                        return;
                    }
                }
                Err(_) => return,
            }
        }
    });

    let deadline = Instant::now() + timeout;
    let next_line = |deadline: Instant| rx.recv_timeout(deadline.saturating_duration_since(Instant::now())).ok();

    let handshake = next_line(deadline);
    let hs_ok = match &handshake {
        Some(l) => match serde_json::from_str::<Handshake>(l) {
            Ok(h) if h == Handshake::current() => Ok(()),
            _ => Err(format!("got {l:?}, expected {}", Handshake::line())),
        },
        None => Err("no handshake line before timeout".into()),
    };
    let hs_failed = hs_ok.is_err();
    report.record("handshake", hs_ok);
    if hs_failed {
        return report;
    }

    for (line, _) in GOLDEN_REQUESTS {
        if let Err(e) = writeln!(writer, "{line}").and_then(|_| writer.flush()) {
            report.record("send", Err(e.to_string()));
            return report;
        }
    }

    let mut by_id: HashMap<String, Vec<ScoreResponse>> = HashMap::new();
    let mut unparseable = Vec::new();
    let mut received = 0;
    while received < GOLDEN_REQUESTS.len() {
        let Some(line) = next_line(deadline) else { break };
        received += 1;
        match serde_json::from_str::<ScoreResponse>(&line) {
            Ok(r) => by_id.entry(r.id.clone()).or_default().push(r),
            Err(e) => unparseable.push(format!("{line:?}: {e}")),
        }
    }

    report.record(
        "one response per request",
        if received == GOLDEN_REQUESTS.len() {
            Ok(())
        } else {
            Err(format!("received {received} of {} responses", GOLDEN_REQUESTS.len()))
        },
    );
    report.record(
        "responses parse",
        if unparseable.is_empty() {
            Ok(())
        } else {
            Err(unparseable.join("; "))
        },
    );

    for (line, expect) in GOLDEN_REQUESTS {
        let id = expected_id(line);
        let label = if id.is_empty() {
            "<malformed line>".to_string()
        } else {
            id.clone()
        };
        let result = match by_id
            .get_mut(&id)
            .and_then(|v| if v.is_empty() { None } else { Some(v.remove(0)) })
        {
            None => Err("no response with this id".to_string()),
            Some(resp) => check_one(line, *expect, &resp),
        };
        report.record(format!("response {label}"), result);
    }
    report
}

fn check_one(line: &str, expect: Expect, resp: &ScoreResponse) -> Result<(), String> {
    match expect {
        Expect::Error => match (&resp.error, &resp.scores, &resp.completion) {
            (Some(_), None, None) => Ok(()),
            _ => Err(format!("expected an error response, got {resp:?}")),
        },
        Expect::Scores => {
            let request: ScoreRequest = serde_json::from_str(line).map_err(|e| e.to_string())?;
            debug_assert!(request.kind != RequestKind::Completion);
            if let Some(err) = &resp.error {
                return Err(format!("backend error: {err}"));
            }
            check_response(&request, resp).map_err(|e| e.to_string())
        }
    }
}

/// Convenience used by tests: conformance of the in-process hash mock.
pub fn run_mock() -> ConformanceReport {
    let backend = MockBackend::hash();
    let input: String = GOLDEN_REQUESTS.iter().map(|(l, _)| format!("{l}\n")).collect();
    let mut out = Vec::new();
    serve(&backend, input.as_bytes(), &mut out).expect("in-memory serve");
    run_streams(
        Box::new(std::io::Cursor::new(out)),
        Box::new(std::io::sink()),
        Duration::from_secs(5),
    )
}
