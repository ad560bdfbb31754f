use std::collections::HashMap;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{Shutdown, TcpStream};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use super::{Backend, BackendError, Handshake, ScoreRequest, ScoreResponse, PROTOCOL_VERSION};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

type Pending = Arc<Mutex<HashMap<String, Sender<ScoreResponse>>>>;
type Connector = Box<dyn Fn() -> io::Result<Link> + Send + Sync>;

/// Raw halves of a transport before the handshake.
pub(crate) struct Link {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
    closer: Closer,
}

enum Closer {
    Child(Child),
    Tcp(TcpStream),
    None,
}

impl Link {
    pub(crate) fn spawn(argv: &[String]) -> io::Result<Link> {
        let (program, args) = argv
            .split_first()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "empty command"))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(Link {
            reader: Box::new(BufReader::new(stdout)),
            writer: Box::new(stdin),
            closer: Closer::Child(child),
        })
    }

    pub(crate) fn tcp(address: &str) -> io::Result<Link> {
        let stream = TcpStream::connect(address)?;
        stream.set_nodelay(true)?;
        Ok(Link {
            reader: Box::new(BufReader::new(stream.try_clone()?)),
            writer: Box::new(stream.try_clone()?),
            closer: Closer::Tcp(stream),
        })
    }

    pub(crate) fn from_parts(reader: Box<dyn BufRead + Send>, writer: Box<dyn Write + Send>) -> Link {
        Link {
            reader,
            writer,
            closer: Closer::None,
        }
    }

    pub(crate) fn into_parts(self) -> (Box<dyn BufRead + Send>, Box<dyn Write + Send>, CloseOnDrop) {
        (self.reader, self.writer, CloseOnDrop(self.closer))
    }
}

pub(crate) struct CloseOnDrop(Closer);

impl Drop for CloseOnDrop {
    fn drop(&mut self) {
        match &mut self.0 {
            Closer::Child(child) => {
                let _ = child.kill();
                let _ = child.wait();
            }
            Closer::Tcp(stream) => {
                let _ = stream.shutdown(Shutdown::Both);
            }
            Closer::None => {}
        }
    }
}

/// A live, handshaken connection with a reader thread routing responses to
/// waiting callers by id.
struct Connection {
    writer: Mutex<Box<dyn Write + Send>>,
    pending: Pending,
    alive: Arc<AtomicBool>,
    _closer: CloseOnDrop,
}

impl Connection {
    fn open(link: Link, timeout: Duration) -> Result<Connection, BackendError> {
        let (mut reader, writer, closer) = link.into_parts();
        let pending: Pending = Arc::default();
        let alive = Arc::new(AtomicBool::new(true));
        let (hs_tx, hs_rx) = mpsc::channel::<io::Result<String>>();

        {
            let pending = Arc::clone(&pending);
            let alive = Arc::clone(&alive);
            thread::spawn(move || {
                let mut first = String::new();
                let res = reader.read_line(&mut first).map(|_| first);
                let ok = matches!(&res, Ok(l) if !l.is_empty());
                let _ = hs_tx.send(res);
                if ok {
                    route_responses(reader, &pending);
                }
                alive.store(false, Ordering::SeqCst);
                pending.lock().unwrap().clear();
            });
        }

        let line = match hs_rx.recv_timeout(timeout) {
            Ok(Ok(line)) if !line.is_empty() => line,
            Ok(Ok(_)) => return Err(BackendError::Transport("backend closed before handshake".into())),
            Ok(Err(e)) => return Err(BackendError::Transport(format!("reading handshake: {e}"))),
            Err(_) => return Err(BackendError::Transport("timed out waiting for handshake".into())),
        };
        match serde_json::from_str::<Handshake>(line.trim_end()) {
            Ok(hs) if hs.protocol == PROTOCOL_VERSION => {}
            _ => {
                return Err(BackendError::Protocol(format!(
                    "expected handshake {}, got {:?}",
                    Handshake::line(),
                    line.trim_end()
                )))
            }
        }

        Ok(Connection {
            writer: Mutex::new(writer),
            pending,
            alive,
            _closer: closer,
        })
    }

    fn request(&self, request: &ScoreRequest, timeout: Duration) -> Result<ScoreResponse, BackendError> {
        if !self.alive.load(Ordering::SeqCst) {
            return Err(BackendError::Transport("connection closed".into()));
        }
        let (tx, rx) = mpsc::channel();
        self.pending.lock().unwrap().insert(request.id.clone(), tx);
        let line = serde_json::to_string(request).expect("requests serialize");
        let sent = {
            let mut w = self.writer.lock().unwrap();
            w.write_all(line.as_bytes())
                .and_then(|_| w.write_all(b"\n"))
                .and_then(|_| w.flush())
        };
        if let Err(e) = sent {
            self.pending.lock().unwrap().remove(&request.id);
            return Err(BackendError::Transport(format!("sending request: {e}")));
        }
        match rx.recv_timeout(timeout) {
            Ok(resp) => Ok(resp),
            Err(RecvTimeoutError::Timeout) => {
                self.pending.lock().unwrap().remove(&request.id);
                Err(BackendError::Transport(format!(
                    "timed out after {:?} waiting for {:?}",
                    timeout, request.id
                )))
            }
            Err(RecvTimeoutError::Disconnected) => Err(BackendError::Transport("backend closed the connection".into())),
        }
    }
}

fn route_responses(mut reader: Box<dyn BufRead + Send>, pending: &Pending) {
    let mut line = String::new();
    loop {
        line.clear();
        match reader.read_line(&mut line) {
            Ok(0) | Err(_) => return,
            Ok(_) => {}
        }
        let Ok(resp) = serde_json::from_str::<ScoreResponse>(line.trim_end()) else {
            continue;
        };
        if let Some(tx) = pending.lock().unwrap().remove(&resp.id) {
            let _ = tx.send(resp);
        }
    }
}

/// A backend reached over a byte stream: a spawned child process talking on
/// its standard streams, or a TCP endpoint. Connects lazily, reconnects and
/// retries once after a transport failure.
pub struct StreamBackend {
    name: String,
    connector: Connector,
    conn: Mutex<Option<Arc<Connection>>>,
    timeout: Duration,
}

impl StreamBackend {
    pub fn process(argv: Vec<String>) -> Self {
        let name = format!("cmd:{}", argv.join(" "));
        Self::with_connector(name, Box::new(move || Link::spawn(&argv)))
    }

    pub fn tcp(address: impl Into<String>) -> Self {
        let address = address.into();
        let name = format!("url:{address}");
        Self::with_connector(name, Box::new(move || Link::tcp(&address)))
    }

    fn with_connector(name: String, connector: Connector) -> Self {
        Self {
            name,
            connector,
            conn: Mutex::new(None),
            timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Establish the connection now instead of on first use.
    pub fn connect(&self) -> Result<(), BackendError> {
        self.connection().map(|_| ())
    }

    fn connection(&self) -> Result<Arc<Connection>, BackendError> {
        let mut slot = self.conn.lock().unwrap();
        if let Some(c) = slot.as_ref() {
            if c.alive.load(Ordering::SeqCst) {
                return Ok(Arc::clone(c));
            }
        }
        let link = (self.connector)().map_err(|e| BackendError::Transport(format!("{}: {e}", self.name)))?;
        let conn = Arc::new(Connection::open(link, self.timeout)?);
        *slot = Some(Arc::clone(&conn));
        Ok(conn)
    }

    fn discard(&self, stale: &Arc<Connection>) {
        let mut slot = self.conn.lock().unwrap();
        if slot.as_ref().is_some_and(|c| Arc::ptr_eq(c, stale)) {
            *slot = None;
        }
    }
}

impl Backend for StreamBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn call(&self, request: &ScoreRequest) -> Result<ScoreResponse, BackendError> {
        let conn = self.connection()?;
        match conn.request(request, self.timeout) {
            Err(e) if e.is_transport() => {
                self.discard(&conn);
                let conn = self.connection()?;
                conn.request(request, self.timeout)
            }
            other => other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{score_entailment, serve_tcp, MockBackend};
    use std::net::TcpListener;

    #[test]
    fn tcp_round_trip_with_concurrent_callers() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let mock: Arc<dyn Backend> = Arc::new(MockBackend::hash());
        let server_backend = Arc::clone(&mock);
        thread::spawn(move || serve_tcp(server_backend, listener));

        let client = Arc::new(StreamBackend::tcp(&addr));
        let handles: Vec<_> = (0..8)
            .map(|i| {
                let client = Arc::clone(&client);
                let mock = Arc::clone(&mock);
                thread::spawn(move || {
                    for j in 0..20 {
                        let p = format!("premise {i} {j}");
                        let remote = score_entailment(client.as_ref(), &p, "hyp").unwrap();
                        let local = score_entailment(mock.as_ref(), &p, "hyp").unwrap();
                        assert_eq!(remote, local);
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        drop(listener);
        let client = StreamBackend::tcp(addr).with_timeout(Duration::from_secs(2));
        let err = score_entailment(&client, "a", "b").unwrap_err();
        assert!(err.is_transport(), "{err:?}");
    }

    #[test]
    fn missing_program_is_transport_error() {
        let client = StreamBackend::process(vec!["/nonexistent/backend-binary".into()]);
        assert!(client.connect().unwrap_err().is_transport());
    }

    #[test]
    fn bad_handshake_is_protocol_error() {
        let client = StreamBackend::process(vec![
            "sh".into(),
            "-c".into(),
            "echo '{\"protocol\":\"other/9\"}'; sleep 5".into(),
        ])
        .with_timeout(Duration::from_secs(5));
        assert!(matches!(client.connect(), Err(BackendError::Protocol(_))));
    }

    #[test]
    fn silent_backend_times_out() {
        let client = StreamBackend::process(vec![
            "sh".into(),
            "-c".into(),
            "echo '{\"protocol\":\"chain-score/1\"}'; sleep 30".into(),
        ])
        .with_timeout(Duration::from_millis(200));
        let err = score_entailment(&client, "a", "b").unwrap_err();
        assert!(err.is_transport(), "{err:?}");
    }
}
