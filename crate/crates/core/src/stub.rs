//! Scripted local completion server for tests and offline demos.
//!
//! Speaks just enough HTTP/1.1 for the remote client: one request per connection, JSON
//! body `{"prompt": ...}`, reply `{"completion": ...}`. Replies are taken from a script in
//! order, then the fallback reply is used for every further request.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub enum StubReply {
    Completion(String),
    /// Waits before answering, to provoke client timeouts.
    Delayed(Duration, String),
    Status(u16),
    /// A 200 reply whose completion is not in the response layout.
    Garbage,
    /// Replies with the prompt itself as the completion.
    Echo,
}

impl StubReply {
    pub fn completion(text: impl Into<String>) -> Self {
        StubReply::Completion(text.into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StubRequest {
    pub prompt: String,
    pub authorization: Option<String>,
}

struct Shared {
    script: Mutex<VecDeque<StubReply>>,
    fallback: StubReply,
    log: Mutex<Vec<StubRequest>>,
    stop: AtomicBool,
}

pub struct StubServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    /// Binds an ephemeral localhost port and serves in a background thread until dropped.
    pub fn start(script: Vec<StubReply>, fallback: StubReply) -> Result<StubServer> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            script: Mutex::new(script.into()),
            fallback,
            log: Mutex::new(Vec::new()),
            stop: AtomicBool::new(false),
        });
        let worker = shared.clone();
        let handle = std::thread::spawn(move || {
            for conn in listener.incoming() {
                if worker.stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = conn else { continue };
                let shared = worker.clone();
                std::thread::spawn(move || {
                    if let Err(e) = serve(stream, &shared) {
                        log::debug!("stub connection ended: {e}");
                    }
                });
            }
        });
        Ok(StubServer {
            addr,
            shared,
            handle: Some(handle),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}/complete", self.addr)
    }

    /// Requests received so far, in arrival order.
    pub fn requests(&self) -> Vec<StubRequest> {
        self.shared.log.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve(stream: TcpStream, shared: &Shared) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.trim().is_empty() {
        return Ok(());
    }
    let mut length = 0usize;
    let mut authorization = None;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 || line.trim().is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            let name = name.trim().to_ascii_lowercase();
            if name == "content-length" {
                length = value.trim().parse().unwrap_or(0);
            } else if name == "authorization" {
                authorization = Some(value.trim().to_string());
            }
        }
    }
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body)?;
    let prompt = serde_json::from_slice::<serde_json::Value>(&body)
        .ok()
        .and_then(|v| v.get("prompt").and_then(|p| p.as_str()).map(String::from))
        .unwrap_or_default();
    shared
        .log
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .push(StubRequest {
            prompt: prompt.clone(),
            authorization,
        });
    let reply = shared
        .script
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .pop_front()
        .unwrap_or_else(|| shared.fallback.clone());

    let (status, completion) = match reply {
        StubReply::Completion(c) => (200, Some(c)),
        StubReply::Delayed(d, c) => {
            std::thread::sleep(d);
            (200, Some(c))
        }
        StubReply::Status(s) => (s, None),
        StubReply::Garbage => (200, Some("I would rather not say.".to_string())),
        StubReply::Echo => (200, Some(prompt)),
    };
    let payload = match completion {
        Some(c) => serde_json::json!({ "completion": c }).to_string(),
        None => serde_json::json!({ "error": status }).to_string(),
    };
    let mut out = stream;
    write!(
        out,
        "HTTP/1.1 {status} {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        if status == 200 { "OK" } else { "Error" },
        payload.len()
    )?;
    out.flush()
}
