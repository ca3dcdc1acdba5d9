//! A scripted HTTP endpoint for tests and dry runs.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::json;

#[derive(Debug, Clone)]
pub struct MockReply {
    pub status: u16,
    pub body: String,
    pub delay: Duration,
}

impl MockReply {
    pub fn status(status: u16) -> Self {
        MockReply {
            status,
            body: "{}".into(),
            delay: Duration::ZERO,
        }
    }

    /// A 200 response carrying `text` in both chat and completion shapes.
    pub fn text(text: &str) -> Self {
        let body = json!({
            "choices": [{ "index": 0, "message": { "role": "assistant", "content": text }, "text": text }]
        });
        MockReply {
            status: 200,
            body: body.to_string(),
            delay: Duration::ZERO,
        }
    }

    pub fn delayed(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }
}

#[derive(Debug, Clone)]
pub struct RecordedRequest {
    pub method: String,
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl RecordedRequest {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn json(&self) -> serde_json::Value {
        serde_json::from_str(&self.body).unwrap_or(serde_json::Value::Null)
    }
}

type Responder = Box<dyn Fn(&RecordedRequest) -> MockReply + Send + Sync>;

struct Shared {
    script: Mutex<VecDeque<MockReply>>,
    fallback: Responder,
    requests: Mutex<Vec<RecordedRequest>>,
    stop: AtomicBool,
}

/// Replies are served in script order; once the script runs out every
/// request gets the fallback (or the responder's answer).
pub struct MockServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    handle: Option<thread::JoinHandle<()>>,
}

impl MockServer {
    pub fn scripted(script: Vec<MockReply>, fallback: MockReply) -> std::io::Result<Self> {
        Self::start(script, Box::new(move |_| fallback.clone()))
    }

    /// Answer every request by calling `f` on it.
    pub fn respond_with<F>(f: F) -> std::io::Result<Self>
    where
        F: Fn(&RecordedRequest) -> MockReply + Send + Sync + 'static,
    {
        Self::start(Vec::new(), Box::new(f))
    }

    /// A deterministic stand-in for a model: the reply is built from the
    /// prompt (the completion prompt, or the last chat message). The model
    /// name selects the variant: names ending in `reversed` return the
    /// sentences in reverse order, names ending in `plain` drop commas and
    /// semicolons, anything else echoes the prompt verbatim.
    pub fn echo() -> std::io::Result<Self> {
        Self::respond_with(echo_reply)
    }

    fn start(script: Vec<MockReply>, fallback: Responder) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            script: Mutex::new(script.into()),
            fallback,
            requests: Mutex::new(Vec::new()),
            stop: AtomicBool::new(false),
        });
        let s = shared.clone();
        let handle = thread::spawn(move || {
            for stream in listener.incoming() {
                if s.stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let s = s.clone();
                thread::spawn(move || {
                    let _ = serve(stream, &s);
                });
            }
        });
        Ok(MockServer {
            addr,
            shared,
            handle: Some(handle),
        })
    }

    pub fn always(reply: MockReply) -> std::io::Result<Self> {
        Self::scripted(Vec::new(), reply)
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.shared.requests.lock().unwrap().clone()
    }

    pub fn hits(&self) -> usize {
        self.shared.requests.lock().unwrap().len()
    }
}

impl Drop for MockServer {
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
    if reader.read_line(&mut line)? == 0 {
        return Ok(());
    }
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();
    let mut headers = Vec::new();
    let mut length = 0usize;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        if let Some((k, v)) = l.split_once(':') {
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if k.eq_ignore_ascii_case("content-length") {
                length = v.parse().unwrap_or(0);
            }
            headers.push((k, v));
        }
    }
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body)?;
    let request = RecordedRequest {
        method,
        path,
        headers,
        body: String::from_utf8_lossy(&body).into_owned(),
    };
    let scripted = shared.script.lock().unwrap().pop_front();
    let reply = scripted.unwrap_or_else(|| (shared.fallback)(&request));
    shared.requests.lock().unwrap().push(request);
    if !reply.delay.is_zero() {
        thread::sleep(reply.delay);
    }
    let mut out = stream;
    let head = format!(
        "HTTP/1.1 {} Mock\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        reply.status,
        reply.body.len()
    );
    out.write_all(head.as_bytes())?;
    out.write_all(reply.body.as_bytes())?;
    out.flush()
}

fn echo_reply(req: &RecordedRequest) -> MockReply {
    let body = req.json();
    let prompt = body["prompt"]
        .as_str()
        .or_else(|| body["messages"].as_array().and_then(|m| m.last()).and_then(|m| m["content"].as_str()))
        .unwrap_or_default();
    let model = body["model"].as_str().unwrap_or_default();
    let text = if model.ends_with("reversed") {
        let mut sentences = split_sentences(prompt);
        sentences.reverse();
        sentences.join(" ")
    } else if model.ends_with("plain") {
        prompt.replace([',', ';'], "")
    } else {
        prompt.to_string()
    };
    MockReply::text(&text)
}

fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = text.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if matches!(b, b'.' | b'?' | b'!') && bytes.get(i + 1).is_none_or(|c| c.is_ascii_whitespace()) {
            let s = text[start..=i].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = i + 1;
        }
    }
    let rest = text[start..].trim();
    if !rest.is_empty() {
        out.push(rest);
    }
    out
}
