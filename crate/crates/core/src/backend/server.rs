use std::io::{self, BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::Arc;
use std::thread;

use serde_json::Value;

use super::{Backend, Handshake, ScoreRequest, ScoreResponse};

/// Answer one request line. Unparseable lines get an error response with an
/// empty id; structurally invalid requests echo their id when one is present.
pub fn handle_line(backend: &dyn Backend, line: &str) -> ScoreResponse {
    let value: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return ScoreResponse::error("", format!("malformed request: {e}")),
    };
    let id = value.get("id").and_then(Value::as_str).unwrap_or_default().to_string();
    let request: ScoreRequest = match serde_json::from_value(value) {
        Ok(r) => r,
        Err(e) => return ScoreResponse::error(id, format!("invalid request: {e}")),
    };
    match backend.call(&request) {
        Ok(resp) => resp,
        Err(e) => ScoreResponse::error(id, e.to_string()),
    }
}

/// Serve the protocol over a line stream until EOF: handshake first, then
/// one response line per non-blank request line.
pub fn serve<R: BufRead, W: Write>(backend: &dyn Backend, reader: R, mut writer: W) -> io::Result<()> {
    writeln!(writer, "{}", Handshake::line())?;
    writer.flush()?;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = handle_line(backend, &line);
        serde_json::to_writer(&mut writer, &resp)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}

/// Accept connections forever, serving each on its own thread.
pub fn serve_tcp(backend: Arc<dyn Backend>, listener: TcpListener) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let backend = Arc::clone(&backend);
        thread::spawn(move || {
            let reader = match stream.try_clone() {
                Ok(s) => BufReader::new(s),
                Err(_) => return,
            };
            let _ = serve(backend.as_ref(), reader, stream);
        });
    }
    Ok(())
}
