//! Feedback delivery: OSC over UDP and the haptic device's REST endpoint.
//!
//! Haptic requests run on their own thread behind a single-slot mailbox, so
//! a slow or dead device never stalls the processing loop; a newer pattern
//! replaces one still waiting to be sent.

use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use neuresonance_core::feedback::encode_osc;
use neuresonance_core::HapticPattern;

#[derive(Debug, thiserror::Error)]
pub enum DispatchError {
    #[error("cannot resolve {0}")]
    Resolve(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("haptic request failed: {0}")]
    Http(String),
    #[error("haptic device answered {status}: {body}")]
    Status { status: u16, body: String },
}

/// Sends `(metric, level)` OSC messages to one UDP target.
pub struct OscSender {
    socket: UdpSocket,
    target: SocketAddr,
}

impl OscSender {
    pub fn connect(target: &str) -> Result<Self, DispatchError> {
        let target = target
            .to_socket_addrs()
            .map_err(|_| DispatchError::Resolve(target.to_owned()))?
            .next()
            .ok_or_else(|| DispatchError::Resolve(target.to_owned()))?;
        let bind: SocketAddr = if target.is_ipv4() {
            "0.0.0.0:0".parse().expect("literal")
        } else {
            "[::]:0".parse().expect("literal")
        };
        let socket = UdpSocket::bind(bind)?;
        socket.set_nonblocking(true)?;
        Ok(Self { socket, target })
    }

    pub fn target(&self) -> SocketAddr {
        self.target
    }

    pub fn send(&self, metric: f32, level: i32) -> Result<(), DispatchError> {
        self.socket.send_to(&encode_osc(metric, level), self.target)?;
        Ok(())
    }
}

/// One blocking `POST {endpoint}/vibrate`.
pub fn send_haptic(
    pattern: &HapticPattern,
    endpoint: &str,
    timeout: Duration,
) -> Result<(), DispatchError> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into();
    send_with(&agent, pattern, endpoint)
}

fn send_with(agent: &ureq::Agent, pattern: &HapticPattern, endpoint: &str) -> Result<(), DispatchError> {
    let url = format!("{}/vibrate", endpoint.trim_end_matches('/'));
    let body = serde_json::json!({
        "bpm": pattern.bpm,
        "intensity": pattern.intensity,
        "pulse_ms": pattern.pulse_ms,
    });
    let mut response = agent
        .post(&url)
        .send_json(&body)
        .map_err(|e| DispatchError::Http(e.to_string()))?;
    let status = response.status().as_u16();
    if (200..300).contains(&status) {
        Ok(())
    } else {
        let body = response.body_mut().read_to_string().unwrap_or_default();
        Err(DispatchError::Status { status, body })
    }
}

#[derive(Debug, Default)]
struct Mailbox {
    slot: Mutex<(Option<HapticPattern>, bool)>,
    ready: Condvar,
}

/// Counters shared with the haptic worker thread.
#[derive(Debug, Default)]
pub struct HapticCounters {
    pub sent: AtomicU64,
    pub failed: AtomicU64,
    /// Patterns replaced in the mailbox before the worker picked them up.
    pub superseded: AtomicU64,
}

/// Background haptic sender with change-only filtering.
pub struct HapticDispatcher {
    mailbox: Arc<Mailbox>,
    counters: Arc<HapticCounters>,
    last_queued: Option<HapticPattern>,
    worker: Option<JoinHandle<()>>,
}

impl HapticDispatcher {
    pub fn spawn(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let endpoint = endpoint.into();
        let mailbox = Arc::new(Mailbox::default());
        let counters = Arc::new(HapticCounters::default());
        let worker = {
            let mailbox = Arc::clone(&mailbox);
            let counters = Arc::clone(&counters);
            thread::Builder::new()
                .name("haptic-dispatch".into())
                .spawn(move || haptic_worker(&endpoint, timeout, &mailbox, &counters))
                .expect("spawn haptic dispatcher")
        };
        Self {
            mailbox,
            counters,
            last_queued: None,
            worker: Some(worker),
        }
    }

    /// Queues `pattern` unless it equals the last one queued. Never blocks on
    /// the network. Returns whether a request was queued.
    pub fn submit(&mut self, pattern: HapticPattern) -> bool {
        if self.last_queued == Some(pattern) {
            return false;
        }
        self.last_queued = Some(pattern);
        let mut slot = self.mailbox.slot.lock().expect("haptic mailbox poisoned");
        if slot.0.replace(pattern).is_some() {
            self.counters.superseded.fetch_add(1, Ordering::Relaxed);
        }
        self.mailbox.ready.notify_one();
        true
    }

    /// Forgets the last pattern so the next one is sent even if unchanged.
    pub fn reset_dedupe(&mut self) {
        self.last_queued = None;
    }

    pub fn counters(&self) -> Arc<HapticCounters> {
        Arc::clone(&self.counters)
    }

    /// Waits for the queued pattern, if any, to be attempted and stops the worker.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        {
            let mut slot = self.mailbox.slot.lock().expect("haptic mailbox poisoned");
            slot.1 = true;
            self.mailbox.ready.notify_one();
        }
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

impl Drop for HapticDispatcher {
    fn drop(&mut self) {
        self.stop();
    }
}

fn haptic_worker(endpoint: &str, timeout: Duration, mailbox: &Mailbox, counters: &HapticCounters) {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into();
    loop {
        let pattern = {
            let mut slot = mailbox.slot.lock().expect("haptic mailbox poisoned");
            loop {
                if let Some(p) = slot.0.take() {
                    break p;
                }
                if slot.1 {
                    return;
                }
                slot = mailbox.ready.wait(slot).expect("haptic mailbox poisoned");
            }
        };
        match send_with(&agent, &pattern, endpoint) {
            Ok(()) => {
                counters.sent.fetch_add(1, Ordering::Relaxed);
            }
            Err(e) => {
                counters.failed.fetch_add(1, Ordering::Relaxed);
                log::warn!("haptic dispatch to {endpoint} failed: {e}");
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::mock_haptic::MockHapticServer;
    use std::time::Instant;

    fn pattern(bpm: u32) -> HapticPattern {
        HapticPattern {
            bpm,
            intensity: 50,
            pulse_ms: 150,
        }
    }

    #[test]
    fn direct_send_and_error_status() {
        let server = MockHapticServer::start(0).unwrap();
        send_haptic(&pattern(120), &server.url(), Duration::from_secs(2)).unwrap();
        let bad = HapticPattern {
            intensity: 300,
            ..pattern(1)
        };
        assert!(matches!(
            send_haptic(&bad, &server.url(), Duration::from_secs(2)),
            Err(DispatchError::Status { status: 400, .. })
        ));
        assert_eq!(server.patterns(), vec![pattern(120)]);
    }

    #[test]
    fn dedupe_and_non_blocking() {
        let server = MockHapticServer::start_with_delay(0, Duration::from_millis(300)).unwrap();
        let mut d = HapticDispatcher::spawn(server.url(), Duration::from_secs(2));
        let t = Instant::now();
        assert!(d.submit(pattern(180)));
        assert!(!d.submit(pattern(180)));
        assert!(d.submit(pattern(50)));
        assert!(t.elapsed() < Duration::from_millis(50));
        d.shutdown();
        let seen = server.patterns();
        assert!(seen.last() == Some(&pattern(50)), "{seen:?}");
    }

    #[test]
    fn osc_datagram_arrives() {
        let rx = UdpSocket::bind("127.0.0.1:0").unwrap();
        rx.set_read_timeout(Some(Duration::from_secs(2))).unwrap();
        let tx = OscSender::connect(&rx.local_addr().unwrap().to_string()).unwrap();
        tx.send(0.5, 3).unwrap();
        let mut buf = [0u8; 64];
        let n = rx.recv(&mut buf).unwrap();
        assert_eq!(&buf[..n], &encode_osc(0.5, 3)[..]);
    }
}
