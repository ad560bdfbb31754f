use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use super::{Backend, BackendError, MockBackend, StreamBackend};
use crate::chain::Blocklist;

/// Where a backend lives.
///
/// * `cmd:<program> <args…>` spawns a process and talks over its standard
///   streams. Arguments split on whitespace; single or double quotes group.
/// * `url:<host:port>` (optionally `url:tcp://host:port`) connects over TCP.
/// * `mock:hash` and `mock:lexicon[:<blocklist file>]` run the deterministic
///   in-process mock.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Command(Vec<String>),
    Tcp(String),
    MockHash,
    MockLexicon(Option<PathBuf>),
}

impl FromStr for BackendSpec {
    type Err = BackendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let invalid = || BackendError::InvalidSpec(s.to_string());
        let (scheme, rest) = s.split_once(':').ok_or_else(invalid)?;
        match scheme {
            "cmd" => {
                let argv = split_args(rest).ok_or_else(invalid)?;
                if argv.is_empty() {
                    return Err(invalid());
                }
                Ok(BackendSpec::Command(argv))
            }
            "url" => {
                let addr = rest.strip_prefix("tcp://").unwrap_or(rest).trim();
                if addr.is_empty() || addr.contains("://") {
                    return Err(invalid());
                }
                Ok(BackendSpec::Tcp(addr.to_string()))
            }
            "mock" => match rest.split_once(':') {
                None if rest == "hash" => Ok(BackendSpec::MockHash),
                None if rest == "lexicon" => Ok(BackendSpec::MockLexicon(None)),
                Some(("lexicon", path)) if !path.is_empty() => Ok(BackendSpec::MockLexicon(Some(path.into()))),
                _ => Err(invalid()),
            },
            _ => Err(invalid()),
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Command(argv) => write!(f, "cmd:{}", argv.join(" ")),
            BackendSpec::Tcp(addr) => write!(f, "url:{addr}"),
            BackendSpec::MockHash => f.write_str("mock:hash"),
            BackendSpec::MockLexicon(None) => f.write_str("mock:lexicon"),
            BackendSpec::MockLexicon(Some(p)) => write!(f, "mock:lexicon:{}", p.display()),
        }
    }
}

fn split_args(s: &str) -> Option<Vec<String>> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut in_token = false;
    let mut quote: Option<char> = None;
    for c in s.chars() {
        match (quote, c) {
            (Some(q), c) if c == q => quote = None,
            (Some(_), c) => cur.push(c),
            (None, '"' | '\'') => {
                quote = Some(c);
                in_token = true;
            }
            (None, c) if c.is_whitespace() => {
                if in_token {
                    out.push(std::mem::take(&mut cur));
                    in_token = false;
                }
            }
            (None, c) => {
                cur.push(c);
                in_token = true;
            }
        }
    }
    if quote.is_some() {
        return None;
    }
    if in_token {
        out.push(cur);
    }
    Some(out)
}

/// Build a backend handle for `spec`. Stream backends connect eagerly so an
/// unreachable backend is reported before any work starts.
pub fn connect(spec: &BackendSpec, timeout: Duration) -> Result<Arc<dyn Backend>, BackendError> {
    let name = spec.to_string();
    Ok(match spec {
        BackendSpec::Command(argv) => {
            let b = StreamBackend::process(argv.clone()).with_timeout(timeout);
            b.connect()?;
            Arc::new(b)
        }
        BackendSpec::Tcp(addr) => {
            let b = StreamBackend::tcp(addr.clone()).with_timeout(timeout);
            b.connect()?;
            Arc::new(b)
        }
        BackendSpec::MockHash => Arc::new(MockBackend::hash().with_name(name)),
        BackendSpec::MockLexicon(path) => {
            let blocklist = match path {
                Some(p) => Blocklist::parse(
                    &fs::read_to_string(p)
                        .map_err(|e| BackendError::Transport(format!("reading blocklist {}: {e}", p.display())))?,
                ),
                None => Blocklist::default(),
            };
            Arc::new(MockBackend::lexicon(blocklist).with_name(name))
        }
    })
}
