//! Control/console channel: line-delimited JSON over TCP.
//!
//! Inbound lines are [`Command`]s. Outbound lines are tagged by `type`:
//! `"ack"` answers one command, `"update"` carries every [`IbsUpdate`].
//! A newly connected client first receives the latest update, if any.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crossbeam::channel::{unbounded, Receiver, Sender};
use serde::Serialize;

use super::session::{Ack, Command};
use super::{IbsUpdate, UpdateSink};

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Outbound<'a> {
    Ack(&'a Ack),
    Update(&'a IbsUpdate),
    Error { message: String },
}

fn line(message: &Outbound<'_>) -> Arc<str> {
    let mut s = serde_json::to_string(message).expect("outbound message serializes");
    s.push('\n');
    s.into()
}

pub fn ack_line(ack: &Ack) -> Arc<str> {
    line(&Outbound::Ack(ack))
}

pub fn update_line(update: &IbsUpdate) -> Arc<str> {
    line(&Outbound::Update(update))
}

/// A command line received from one client, with that client's reply path.
pub struct ControlRequest {
    pub line: String,
    pub reply: Sender<Arc<str>>,
}

impl ControlRequest {
    pub fn parse(&self) -> Result<Command, String> {
        serde_json::from_str(self.line.trim()).map_err(|e| e.to_string())
    }

    pub fn answer(&self, ack: &Ack) {
        let _ = self.reply.send(ack_line(ack));
    }

    pub fn reject_unparsable(&self, error: &str) {
        let _ = self.reply.send(line(&Outbound::Error {
            message: format!("unparsable command: {error}"),
        }));
    }
}

#[derive(Default)]
struct Hub {
    clients: Mutex<Vec<Sender<Arc<str>>>>,
    last: Mutex<Option<Arc<str>>>,
}

impl Hub {
    fn broadcast(&self, message: Arc<str>) {
        *self.last.lock().expect("hub poisoned") = Some(Arc::clone(&message));
        self.clients
            .lock()
            .expect("hub poisoned")
            .retain(|c| c.send(Arc::clone(&message)).is_ok());
    }
}

/// Update sink feeding every connected client.
pub struct ControlSink(Arc<Hub>);

impl UpdateSink for ControlSink {
    fn publish(&mut self, update: &Arc<IbsUpdate>) {
        self.0.broadcast(update_line(update));
    }
}

pub struct ControlServer {
    addr: SocketAddr,
    hub: Arc<Hub>,
    requests: Receiver<ControlRequest>,
    shutdown: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
}

impl ControlServer {
    pub fn bind(addr: &str) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let hub = Arc::new(Hub::default());
        let shutdown = Arc::new(AtomicBool::new(false));
        let (tx, requests) = unbounded();
        let acceptor = {
            let hub = Arc::clone(&hub);
            let shutdown = Arc::clone(&shutdown);
            thread::Builder::new()
                .name("control-accept".into())
                .spawn(move || accept_loop(&listener, &hub, &tx, &shutdown))?
        };
        Ok(Self {
            addr,
            hub,
            requests,
            shutdown,
            acceptor: Some(acceptor),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn sink(&self) -> ControlSink {
        ControlSink(Arc::clone(&self.hub))
    }

    /// Commands waiting to be handled; never blocks.
    pub fn pending(&self) -> impl Iterator<Item = ControlRequest> + '_ {
        self.requests.try_iter()
    }
}

impl Drop for ControlServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::Relaxed);
        self.hub.clients.lock().expect("hub poisoned").clear();
        if let Some(a) = self.acceptor.take() {
            let _ = a.join();
        }
    }
}

fn accept_loop(
    listener: &TcpListener,
    hub: &Arc<Hub>,
    requests: &Sender<ControlRequest>,
    shutdown: &AtomicBool,
) {
    while !shutdown.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, peer)) => {
                if let Err(e) = attach_client(stream, hub, requests.clone()) {
                    log::warn!("control client {peer}: {e}");
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                thread::sleep(Duration::from_millis(20));
            }
            Err(e) => {
                log::warn!("control accept: {e}");
                thread::sleep(Duration::from_millis(20));
            }
        }
    }
}

fn attach_client(
    stream: TcpStream,
    hub: &Arc<Hub>,
    requests: Sender<ControlRequest>,
) -> std::io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    stream.set_write_timeout(Some(Duration::from_secs(1)))?;
    let mut writer = stream.try_clone()?;
    let (tx, rx) = unbounded::<Arc<str>>();
    if let Some(last) = hub.last.lock().expect("hub poisoned").clone() {
        let _ = tx.send(last);
    }
    hub.clients.lock().expect("hub poisoned").push(tx.clone());

    thread::Builder::new()
        .name("control-write".into())
        .spawn(move || {
            for message in rx {
                if writer.write_all(message.as_bytes()).is_err() {
                    break;
                }
            }
            let _ = writer.shutdown(std::net::Shutdown::Both);
        })?;
    thread::Builder::new()
        .name("control-read".into())
        .spawn(move || {
            for line in BufReader::new(stream).lines() {
                let Ok(line) = line else { break };
                if line.trim().is_empty() {
                    continue;
                }
                let request = ControlRequest {
                    line,
                    reply: tx.clone(),
                };
                if requests.send(request).is_err() {
                    break;
                }
            }
        })?;
    Ok(())
}
