//! Stand-in for the haptic wristband's REST interface.
//!
//! `POST /vibrate` with `{"bpm":…, "intensity":…, "pulse_ms":…}` answers
//! `{"ok":true}`; anything unparsable gets a 400. Every request is logged
//! with its receipt time.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use neuresonance_core::HapticPattern;
use tiny_http::{Header, Method, Response, Server};

#[derive(Debug, Clone, PartialEq)]
pub struct MockRequest {
    /// Time since the server started.
    pub received: Duration,
    pub method: String,
    pub path: String,
    pub body: String,
    pub status: u16,
    /// The decoded pattern for accepted requests.
    pub pattern: Option<HapticPattern>,
}

/// Running mock device; dropping it stops the server.
pub struct MockHapticServer {
    addr: SocketAddr,
    log: Arc<Mutex<Vec<MockRequest>>>,
    server: Arc<Server>,
    worker: Option<JoinHandle<()>>,
}

impl MockHapticServer {
    /// Binds `127.0.0.1:port` (0 picks a free port) and starts serving.
    pub fn start(port: u16) -> std::io::Result<Self> {
        Self::start_with_delay(port, Duration::ZERO)
    }

    /// Like [`start`](Self::start) but holds every response for `delay`.
    pub fn start_with_delay(port: u16, delay: Duration) -> std::io::Result<Self> {
        let server = Server::http(("127.0.0.1", port)).map_err(std::io::Error::other)?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("mock server is not on an IP socket"))?;
        let server = Arc::new(server);
        let log = Arc::new(Mutex::new(Vec::new()));
        let worker = {
            let server = Arc::clone(&server);
            let log = Arc::clone(&log);
            let started = Instant::now();
            thread::Builder::new()
                .name("mock-haptic".into())
                .spawn(move || serve(&server, &log, started, delay))?
        };
        Ok(Self {
            addr,
            log,
            server,
            worker: Some(worker),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL to configure as the haptic endpoint.
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn requests(&self) -> Vec<MockRequest> {
        self.log.lock().expect("request log poisoned").clone()
    }

    /// Patterns of the accepted requests, in arrival order.
    pub fn patterns(&self) -> Vec<HapticPattern> {
        self.requests().into_iter().filter_map(|r| r.pattern).collect()
    }
}

impl Drop for MockHapticServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct VibrateBody {
    bpm: u32,
    intensity: u32,
    pulse_ms: u32,
}

fn serve(server: &Server, log: &Mutex<Vec<MockRequest>>, started: Instant, delay: Duration) {
    for mut request in server.incoming_requests() {
        let received = started.elapsed();
        let mut body = String::new();
        let readable = request.as_reader().read_to_string(&mut body).is_ok();
        let method = request.method().clone();
        let path = request.url().to_owned();

        let (status, pattern, reply) = if path != "/vibrate" {
            (404, None, r#"{"ok":false,"error":"not found"}"#)
        } else if method != Method::Post {
            (405, None, r#"{"ok":false,"error":"method not allowed"}"#)
        } else {
            match serde_json::from_str::<VibrateBody>(&body) {
                Ok(b) if readable && b.intensity <= 100 => (
                    200,
                    Some(HapticPattern {
                        bpm: b.bpm,
                        intensity: b.intensity,
                        pulse_ms: b.pulse_ms,
                    }),
                    r#"{"ok":true}"#,
                ),
                _ => (400, None, r#"{"ok":false,"error":"malformed body"}"#),
            }
        };
        log.lock().expect("request log poisoned").push(MockRequest {
            received,
            method: method.to_string(),
            path,
            body,
            status,
            pattern,
        });
        if !delay.is_zero() {
            thread::sleep(delay);
        }
        let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
        let _ = request.respond(Response::from_string(reply).with_status_code(status).with_header(header));
    }
}
