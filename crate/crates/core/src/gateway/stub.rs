//! A scriptable chat-completions server for tests.
//!
//! Replies are served from a queue; once it is exhausted the last reply is
//! repeated. Every request's arrival time, departure time and body are
//! recorded so callers can audit concurrency and rate limits.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StubReply {
    pub status: u16,
    pub body: String,
    pub delay: Duration,
}

impl StubReply {
    /// A 200 answer whose single choice carries `content`.
    pub fn ok(content: &str) -> Self {
        StubReply {
            status: 200,
            body: completion_body(content, "stop"),
            delay: Duration::ZERO,
        }
    }

    pub fn status(status: u16) -> Self {
        StubReply {
            status,
            body: format!(r#"{{"error":{{"message":"stub status {status}"}}}}"#),
            delay: Duration::ZERO,
        }
    }

    pub fn raw(status: u16, body: impl Into<String>) -> Self {
        StubReply {
            status,
            body: body.into(),
            delay: Duration::ZERO,
        }
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }
}

pub fn completion_body(content: &str, finish_reason: &str) -> String {
    serde_json::json!({
        "id": "stub",
        "object": "chat.completion",
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": content},
            "finish_reason": finish_reason,
        }],
    })
    .to_string()
}

#[derive(Debug, Clone)]
pub struct RecordedRequest {
    pub arrived: Instant,
    pub departed: Instant,
    pub body: String,
    pub authorization: Option<String>,
}

#[derive(Default)]
struct Shared {
    replies: Mutex<(Vec<StubReply>, usize)>,
    log: Mutex<Vec<RecordedRequest>>,
    inflight: AtomicUsize,
    max_inflight: AtomicUsize,
    stop: AtomicBool,
}

pub struct StubServer {
    addr: std::net::SocketAddr,
    shared: Arc<Shared>,
    acceptor: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start(replies: Vec<StubReply>) -> std::io::Result<Self> {
        assert!(!replies.is_empty(), "stub server needs at least one reply");
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            replies: Mutex::new((replies, 0)),
            ..Shared::default()
        });
        let accept_shared = Arc::clone(&shared);
        let acceptor = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if accept_shared.stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let shared = Arc::clone(&accept_shared);
                std::thread::spawn(move || {
                    let _ = handle(stream, &shared);
                });
            }
        });
        Ok(StubServer {
            addr,
            shared,
            acceptor: Some(acceptor),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}/v1/chat/completions", self.addr)
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        let mut log = self.shared.log.lock().unwrap().clone();
        log.sort_by_key(|r| r.arrived);
        log
    }

    pub fn request_count(&self) -> usize {
        self.shared.log.lock().unwrap().len()
    }

    /// Highest number of requests the server was handling at once.
    pub fn max_concurrent(&self) -> usize {
        self.shared.max_inflight.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        // wake the acceptor so it notices the flag
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.acceptor.take() {
            let _ = handle.join();
        }
    }
}

fn next_reply(shared: &Shared) -> StubReply {
    let mut guard = shared.replies.lock().unwrap();
    let (replies, cursor) = &mut *guard;
    let reply = replies[(*cursor).min(replies.len() - 1)].clone();
    *cursor += 1;
    reply
}

fn handle(stream: TcpStream, shared: &Shared) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    if reader.read_line(&mut request_line)? == 0 {
        return Ok(());
    }
    let arrived = Instant::now();
    let now_inflight = shared.inflight.fetch_add(1, Ordering::SeqCst) + 1;
    shared.max_inflight.fetch_max(now_inflight, Ordering::SeqCst);

    let mut content_length = 0usize;
    let mut authorization = None;
    loop {
        let mut header = String::new();
        if reader.read_line(&mut header)? == 0 || header == "\r\n" || header == "\n" {
            break;
        }
        if let Some((name, value)) = header.split_once(':') {
            let value = value.trim();
            if name.eq_ignore_ascii_case("content-length") {
                content_length = value.parse().unwrap_or(0);
            } else if name.eq_ignore_ascii_case("authorization") {
                authorization = Some(value.to_string());
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;

    let reply = next_reply(shared);
    if !reply.delay.is_zero() {
        std::thread::sleep(reply.delay);
    }
    // Leave the in-flight count before answering: the client cannot have
    // started a follow-up request yet, so the recorded peak never overstates
    // client-side concurrency.
    let departed = Instant::now();
    shared.inflight.fetch_sub(1, Ordering::SeqCst);
    shared.log.lock().unwrap().push(RecordedRequest {
        arrived,
        departed,
        body: String::from_utf8_lossy(&body).into_owned(),
        authorization,
    });
    let mut out = stream;
    let response = format!(
        "HTTP/1.1 {} Stub\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        reply.status,
        reply.body.len(),
        reply.body
    );
    out.write_all(response.as_bytes())?;
    out.flush()
}
