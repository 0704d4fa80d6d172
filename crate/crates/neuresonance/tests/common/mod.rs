#![allow(dead_code)]

use std::net::UdpSocket;
use std::sync::Arc;
use std::time::Duration;

use neuresonance::config::EngineConfig;
use neuresonance::engine::runner::{run, RunOptions, RunSummary, Source};
use neuresonance::engine::IbsUpdate;
use neuresonance::session::Condition;
use neuresonance::stream::synth::SynthConfig;

pub fn synth(seconds: f64, coupling: f64, seed: u64) -> SynthConfig {
    SynthConfig {
        duration_s: seconds,
        coupling,
        seed,
        ..Default::default()
    }
}

/// Batch run of a synthetic session inside one trial.
pub fn run_trial(config: EngineConfig, synth: SynthConfig, condition: Condition) -> RunSummary {
    run(
        config,
        Source::Synth(synth),
        RunOptions {
            auto_trial: Some(condition),
            ..Default::default()
        },
    )
    .expect("run")
}

pub fn valid_values(updates: &[Arc<IbsUpdate>]) -> Vec<f64> {
    updates
        .iter()
        .filter(|u| u.metric.valid && !u.metric.held)
        .map(|u| u.metric.value)
        .collect()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// UDP socket collecting OSC datagrams.
pub fn osc_listener() -> (UdpSocket, String) {
    let socket = UdpSocket::bind("127.0.0.1:0").unwrap();
    socket.set_read_timeout(Some(Duration::from_millis(300))).unwrap();
    let addr = socket.local_addr().unwrap().to_string();
    (socket, addr)
}

pub fn drain_datagrams(socket: &UdpSocket) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut buf = [0u8; 1500];
    while let Ok(n) = socket.recv(&mut buf) {
        out.push(buf[..n].to_vec());
    }
    out
}

/// Binomial upper tail P(X ≥ k) for X ~ Bin(n, 1/2).
pub fn sign_test_p(successes: usize, n: usize) -> f64 {
    let mut total = 0.0;
    for k in successes..=n {
        let mut c = 1.0f64;
        for i in 0..k {
            c *= (n - i) as f64 / (i + 1) as f64;
        }
        total += c;
    }
    total / 2f64.powi(n as i32)
}
