mod common;

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::time::{Duration, Instant};

use common::synth;
use neuresonance::config::EngineConfig;
use neuresonance::engine::control::ControlServer;
use neuresonance::engine::runner::{run, RunOptions, Source};
use neuresonance::stream::recording::MarkerKind;
use neuresonance::stream::replay::Pacing;
use serde_json::Value;

struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Client {
    fn connect(addr: std::net::SocketAddr) -> Self {
        let stream = TcpStream::connect(addr).unwrap();
        stream.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
        Self {
            reader: BufReader::new(stream.try_clone().unwrap()),
            writer: stream,
        }
    }

    fn next(&mut self) -> Value {
        let mut line = String::new();
        self.reader.read_line(&mut line).unwrap();
        serde_json::from_str(&line).unwrap_or_else(|e| panic!("{e}: {line:?}"))
    }

    /// Sends one line and returns the first non-update reply.
    fn send(&mut self, line: &str) -> Value {
        writeln!(self.writer, "{line}").unwrap();
        loop {
            let v = self.next();
            if v["type"] != "update" {
                return v;
            }
        }
    }

    fn next_update(&mut self) -> Value {
        loop {
            let v = self.next();
            if v["type"] == "update" {
                return v;
            }
        }
    }
}

#[test]
fn console_drives_a_live_session() {
    let server = ControlServer::bind("127.0.0.1:0").unwrap();
    let addr = server.addr();
    let dir = tempfile::tempdir().unwrap();
    let record = dir.path().join("session");
    let record_in_thread = record.clone();
    let started = Instant::now();
    let engine = std::thread::spawn(move || {
        run(
            EngineConfig::default(),
            Source::Synth(synth(60.0, 0.2, 11)),
            RunOptions {
                pacing: Pacing::Speed(6.0),
                record: Some(record_in_thread),
                control: Some(server),
                ..Default::default()
            },
        )
        .unwrap()
    });

    let mut c = Client::connect(addr);
    let ack = c.send(r#"{"type":"set_condition","label":"Auditory"}"#);
    assert_eq!(ack["type"], "ack");
    assert_eq!(ack["ok"], true);
    assert_eq!(ack["state"]["condition"], "Auditory");

    let ack = c.send(r#"{"type":"mark_trial","action":"start"}"#);
    assert_eq!(ack["ok"], true);
    assert_eq!(ack["state"]["trial_open"], true);

    let refused = c.send(r#"{"type":"set_condition","label":"Visual"}"#);
    assert_eq!(refused["ok"], false);
    assert!(refused["message"].as_str().unwrap().contains("trial"));
    assert_eq!(refused["state"]["condition"], "Auditory");

    let error = c.send("not json");
    assert_eq!(error["type"], "error");

    let update = loop {
        let u = c.next_update();
        if u["trial_open"] == true {
            break u;
        }
    };
    assert!(update["chord"].is_object());
    assert!(update["ring"].is_null());

    assert_eq!(c.send(r#"{"type":"set_synth_coupling","value":0.9}"#)["ok"], true);
    assert_eq!(c.send(r#"{"type":"set_synth_coupling","value":1.5}"#)["ok"], false);
    assert_eq!(c.send(r#"{"type":"status"}"#)["state"]["running"], true);

    drop(c);
    let mut c = Client::connect(addr);
    let snapshot = c.next();
    assert_eq!(snapshot["type"], "update");

    assert_eq!(c.send(r#"{"type":"mark_trial","action":"stop"}"#)["ok"], true);
    let second = c.send(r#"{"type":"mark_trial","action":"stop"}"#);
    assert_eq!(second["ok"], true);
    assert!(second["message"].is_string());
    assert_eq!(c.send(r#"{"type":"stop"}"#)["ok"], true);

    let summary = engine.join().unwrap();
    assert!(started.elapsed() < Duration::from_secs(9), "stop ignored");
    let manifest = summary.manifest.unwrap();
    let kinds: Vec<_> = manifest.markers.iter().map(|m| m.kind).collect();
    assert_eq!(kinds, [MarkerKind::Start, MarkerKind::Stop]);
    assert!(manifest.markers[0].timestamp_us < manifest.markers[1].timestamp_us);
    assert_eq!(manifest.coupling_trace.last().unwrap().kappa, 0.9);
    assert!(record.join("manifest.json").exists());
}
