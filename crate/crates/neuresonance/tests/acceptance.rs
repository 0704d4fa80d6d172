//! Pass/fail report over the engine's acceptance criteria.
//!
//! Runs without the libtest harness so every line reaches the terminal under
//! plain `cargo test`. Exits non-zero if any criterion fails.

mod common;

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Cursor;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use common::{mean, run_trial, sign_test_p, synth};
use neuresonance::analysis::{analyze, epoch_metrics, reject_noisy_epochs, AnalysisConfig};
use neuresonance::bench::run_bench;
use neuresonance::config::EngineConfig;
use neuresonance::core::feedback::encode_osc;
use neuresonance::core::metric::{ccorr, fisher_z, inverse_fisher_z, pool_top_k, ChannelCorrelations};
use neuresonance::core::motion::{classify_segment, MotionGate, MotionThresholds, MotionVerdict, Velocity};
use neuresonance::core::{
    map_audio, map_haptic, map_visual, slide_windows, AudioPreset, FeedbackLevel, HapticTable, IbsMetric,
    Participant, SampleFrame, VisualConfig,
};
use neuresonance::engine::runner::{run, RunOptions, Source};
use neuresonance::engine::IbsUpdate;
use neuresonance::session::Condition;
use neuresonance::stream::mock_haptic::MockHapticServer;
use neuresonance::stream::recording::Recording;
use neuresonance::stream::replay::Pacing;
use neuresonance::stream::synth::{synth_session, ArtifactBurst, SynthConfig, TrialPlan};
use neuresonance::stream::wire::{decode_frame, decode_frame_prefix, encode_frame, FrameReader, StreamLayout};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rosc::{OscPacket, OscType};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_phases(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut p: f64 = rng.random_range(-PI..PI);
    (0..n)
        .map(|_| {
            p += rng.random_range(0.0..0.5);
            p.sin().atan2(p.cos())
        })
        .collect()
}

fn metric_correctness() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut self_err: f64 = 0.0;
    let mut anti_err: f64 = 0.0;
    let mut rot_err: f64 = 0.0;
    for _ in 0..50 {
        let a = random_phases(&mut rng, 768);
        let b = random_phases(&mut rng, 768);
        let neg: Vec<f64> = a.iter().map(|p| -p).collect();
        self_err = self_err.max((ccorr(&a, &a).unwrap() - 1.0).abs());
        anti_err = anti_err.max((ccorr(&a, &neg).unwrap() + 1.0).abs());
        let shift: f64 = rng.random_range(-PI..PI);
        let rotate = |x: &[f64]| -> Vec<f64> { x.iter().map(|p| (p + shift).sin().atan2((p + shift).cos())).collect() };
        rot_err = rot_err.max((ccorr(&rotate(&a), &rotate(&b)).unwrap() - ccorr(&a, &b).unwrap()).abs());
    }
    let fisher_err = (0..1000)
        .map(|_| {
            let r: f64 = rng.random_range(-0.999..0.999);
            (inverse_fisher_z(fisher_z(r)) - r).abs()
        })
        .fold(0.0, f64::max);
    let top = [0.9, 0.8, 0.7, 0.6, 0.5];
    let oracle = (top.iter().map(|r: &f64| 0.5 * ((1.0 + r) / (1.0 - r)).ln()).sum::<f64>() / 5.0).tanh();
    let mut shuffled = vec![0.1, 0.5, -0.3, 0.9, 0.6, 0.2, 0.8, 0.7, 0.05];
    shuffled.rotate_left(3);
    let pooled = pool_top_k(&ChannelCorrelations::from_values(&shuffled), 5).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    let ok = self_err <= 1e-12
        && anti_err <= 1e-12
        && rot_err <= 1e-9
        && fisher_err < 1e-12
        && (pooled - 0.7335).abs() <= 1e-3
        && (oracle - 0.7335).abs() <= 1e-3
        && (pooled - oracle).abs() <= 1e-12
        && elapsed < 1.0;
    check(
        ok,
        format!(
            "self {self_err:.1e}, anti {anti_err:.1e}, rotation {rot_err:.1e}, fisher {fisher_err:.1e}, \
             pooled {pooled:.4} (oracle {oracle:.4}), {elapsed:.2} s"
        ),
    )
}

fn mean_ibs(coupling: f64, seed: u64) -> f64 {
    let s = run(EngineConfig::default(), Source::Synth(synth(60.0, coupling, seed)), RunOptions::default())
        .expect("synthetic run");
    let v: Vec<f64> = s.updates.iter().filter(|u| u.metric.valid).map(|u| u.metric.value).collect();
    mean(&v)
}

fn discrimination() -> Outcome {
    const SEEDS: u64 = 20;
    let started = Instant::now();
    let results = Mutex::new(HashMap::new());
    let next = AtomicUsize::new(0);
    let jobs: Vec<(u64, f64)> = (0..SEEDS).flat_map(|s| [(s, 0.0), (s, 0.8)]).collect();
    let workers = std::thread::available_parallelism().map_or(2, |n| n.get()).min(jobs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                while let Some(&(seed, k)) = jobs.get(next.fetch_add(1, Ordering::Relaxed)) {
                    let m = mean_ibs(k, 1000 + seed);
                    results.lock().unwrap().insert((seed, k.to_bits()), m);
                }
            });
        }
    });
    let results = results.into_inner().unwrap();
    let pairs: Vec<(f64, f64)> = (0..SEEDS)
        .map(|s| (results[&(s, 0f64.to_bits())], results[&(s, 0.8f64.to_bits())]))
        .collect();
    let independent = mean(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let coupled = mean(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
    let wins = pairs.iter().filter(|p| p.1 > p.0).count();
    let p = sign_test_p(wins, pairs.len());
    let gain = coupled / independent - 1.0;
    let elapsed = started.elapsed().as_secs_f64();
    check(
        gain >= 0.10 && p < 0.05 && elapsed < 120.0,
        format!(
            "{SEEDS} seeds: κ=0 {independent:.3}, κ=0.8 {coupled:.3}, +{:.0} %, {wins}/{SEEDS} wins, \
             sign p {p:.1e}, {elapsed:.1} s",
            100.0 * gain
        ),
    )
}

fn windowing() -> Outcome {
    let frames: Vec<SampleFrame> = (0..6 * 256u64)
        .map(|i| SampleFrame::new(0, i * 1_000_000 / 256, vec![i as f32; 14]))
        .collect();
    let w = slide_windows(&frames, Participant::A, 14, 256.0, 3.0, 1.5).map_err(|e| e.to_string())?;
    let sizes: Vec<usize> = w.windows.iter().map(|w| w.sample_count()).collect();

    let plan = [TrialPlan {
        condition: Condition::Visual,
        coupling: 0.5,
        seconds: 30.0,
    }];
    let rec = synth_session(&SynthConfig { seed: 3, ..Default::default() }, &plan).map_err(|e| e.to_string())?;
    let report = analyze(&rec, &AnalysisConfig::default()).map_err(|e| e.to_string())?;
    let t = &report.trials[0];
    check(
        sizes == [768, 768, 768] && t.total == 55 && t.analyzable == 49,
        format!("live windows {sizes:?}; offline {} epochs, {} after trim", t.total, t.analyzable),
    )
}

fn verdict(linear: f64, angular: f64) -> MotionVerdict {
    let v = [Velocity {
        timestamp_us: 0,
        linear_mm_s: linear,
        angular_rad_s: angular,
    }];
    classify_segment(&v, MotionThresholds::default())
}

fn motion_gate() -> Outcome {
    let mut cfg = synth(60.0, 0.5, 7);
    cfg.burst_speed_mm_s = 250.0;
    cfg.artifact_schedule = vec![ArtifactBurst {
        start_s: 30.0,
        duration_s: 2.0,
        participant: Participant::B,
    }];
    let updates = run_trial(EngineConfig::default(), cfg, Condition::Visual).updates;
    let mut last_valid = None;
    let mut held = 0;
    let mut exact = true;
    for u in &updates {
        if u.metric.held {
            held += 1;
            exact &= Some(u.metric.value) == last_valid;
        } else if u.metric.valid {
            last_valid = Some(u.metric.value);
        }
    }

    let strict = !verdict(200.0, 0.0).rejected
        && verdict(200.0f64.next_up(), 0.0).rejected
        && !verdict(0.0, 1.0).rejected
        && verdict(0.0, 1.0f64.next_up()).rejected;

    let still = MotionVerdict::accepted(0, 1);
    let moving = verdict(250.0, 0.0);
    let mut gate = MotionGate::default();
    gate.apply(IbsMetric::valid(0.42, 0), &still, &still);
    let trace: Vec<IbsMetric> = (1..=6).map(|i| gate.apply(IbsMetric::valid(0.9, i), &still, &moving)).collect();
    let capped = trace[..5].iter().all(|m| m.held && m.value == 0.42) && !trace[5].valid && !trace[5].held;

    check(
        held > 0 && exact && strict && capped,
        format!(
            "{held} held updates equal the last valid value: {exact}; strict thresholds: {strict}; \
             invalid on the 6th hold: {capped}"
        ),
    )
}

fn latency() -> Outcome {
    let report = run_bench(EngineConfig::default(), 200, 11).map_err(|e| e.to_string())?;
    check(
        report.updates >= 200 && report.passed(),
        format!(
            "{} updates: compute p95 {:.2} ms (budget {:.0}), motion p95 {:.3} ms (budget {:.0})",
            report.updates, report.compute.p95, report.budget_ms, report.motion.p95, report.motion_budget_ms
        ),
    )
}

fn feedback_mappings() -> Outcome {
    let levels: Vec<FeedbackLevel> = FeedbackLevel::all().collect();
    let mut ratios = true;
    for &l in &levels {
        for preset in [AudioPreset::Linear, AudioPreset::Geometric] {
            let c = map_audio(l, preset);
            ratios &= (c.fifth_hz / c.root_hz - 1.5).abs() <= 1e-12;
        }
    }
    let top = map_audio(FeedbackLevel::HIGHEST, AudioPreset::Linear);
    let triad = (top.middle_hz / top.root_hz - 1.25).abs() <= 1e-12 && (top.fifth_hz / top.root_hz - 1.5).abs() <= 1e-12;
    let linear: Vec<f64> = levels.iter().map(|&l| map_audio(l, AudioPreset::Linear).middle_hz).collect();
    let geometric: Vec<f64> = levels.iter().map(|&l| map_audio(l, AudioPreset::Geometric).middle_hz).collect();
    let presets = linear == [547.0, 575.0, 603.0, 631.0, 659.0]
        && geometric.windows(2).all(|w| w[0] < w[1])
        && geometric[4] == 659.0
        && (geometric[3] - 626.05).abs() < 1e-9;

    let visual = VisualConfig::default();
    let amp: Vec<f64> = levels.iter().map(|&l| map_visual(l, &visual).wave_amplitude).collect();
    let ring = amp.windows(2).all(|w| w[0] > w[1]) && amp[4] == 0.0;
    let table = HapticTable::default();
    let haptic = levels.windows(2).all(|w| {
        let (lo, hi) = (map_haptic(w[0], &table), map_haptic(w[1], &table));
        lo.bpm > hi.bpm && lo.intensity > hi.intensity
    });
    check(
        ratios && triad && presets && ring && haptic,
        format!(
            "root:fifth 2:3 {ratios}; level-5 triad 4:5:6 {triad}; middle notes {linear:?} / geometric {:.1?}: {presets}; \
             ring {amp:?}: {ring}; haptic monotone {haptic}",
            geometric
        ),
    )
}

fn fuzz_frames(count: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let layout = StreamLayout::new().with_stream(0, 14).with_stream(1, 14).with_stream(2, 7).with_stream(3, 7);
    let mut decoded = 0;
    let mut stream = Vec::new();
    for i in 0..count {
        let channels = rng.random_range(0..20);
        let frame = SampleFrame::new(
            rng.random_range(0..6),
            rng.random(),
            (0..channels).map(|_| f32::from_bits(rng.random())).collect(),
        );
        let mut bytes = encode_frame(&frame).expect("encodable");
        match i % 4 {
            0 => {}
            1 => {
                let at = rng.random_range(0..bytes.len());
                bytes[at] = rng.random();
            }
            2 => bytes.truncate(rng.random_range(0..bytes.len())),
            _ => bytes = (0..rng.random_range(0..80)).map(|_| rng.random()).collect(),
        }
        decoded += usize::from(decode_frame(&bytes).is_ok());
        let _ = layout.decode(&bytes);
        let _ = decode_frame_prefix(&bytes);
        stream.extend_from_slice(&bytes);
        if stream.len() > 1 << 16 {
            let mut reader = FrameReader::new(Cursor::new(std::mem::take(&mut stream)), layout.clone());
            while let Ok(Some(_)) = reader.read_frame() {}
        }
    }
    decoded
}

fn wire_protocol() -> Outcome {
    let packet = encode_osc(0.5, 3);
    let mut image = b"/neuresonance/ibs\0\0\0,fi\0".to_vec();
    image.extend_from_slice(&0.5f32.to_be_bytes());
    image.extend_from_slice(&3i32.to_be_bytes());
    let osc = packet == image
        && matches!(
            rosc::decoder::decode_udp(&packet),
            Ok((_, OscPacket::Message(ref m)))
                if m.addr == "/neuresonance/ibs" && m.args == [OscType::Float(0.5), OscType::Int(3)]
        );

    let started = Instant::now();
    let fuzz = std::panic::catch_unwind(|| fuzz_frames(1_000_000));
    let fuzz_secs = started.elapsed().as_secs_f64();

    let mock = MockHapticServer::start(0).map_err(|e| e.to_string())?;
    let mut config = EngineConfig::default();
    config.endpoints.haptic = Some(mock.url());
    let s = run(
        config,
        Source::Synth(synth(24.0, 0.6, 5)),
        RunOptions {
            pacing: Pacing::Speed(8.0),
            auto_trial: Some(Condition::Haptic),
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let mut expected = Vec::new();
    for p in s.updates.iter().filter_map(|u| u.haptic) {
        if expected.last() != Some(&p) {
            expected.push(p);
        }
    }
    let received = mock.patterns();
    let haptic = expected.len() >= 2 && received == expected;

    check(
        osc && fuzz.is_ok() && haptic,
        format!(
            "OSC image and independent decode: {osc}; 10^6-frame fuzz {} in {fuzz_secs:.1} s; \
             mock haptic got {} change-only requests for {} updates: {haptic}",
            match fuzz {
                Ok(n) => format!("survived ({n} decodable)"),
                Err(_) => "panicked".into(),
            },
            received.len(),
            s.updates.len()
        ),
    )
}

fn untimed(updates: &[Arc<IbsUpdate>]) -> Vec<IbsUpdate> {
    updates.iter().map(|u| u.untimed()).collect()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let options = |record: Option<std::path::PathBuf>| RunOptions {
        record,
        auto_trial: Some(Condition::Visual),
        ..Default::default()
    };
    let live = run(EngineConfig::default(), Source::Synth(synth(30.0, 0.7, 44)), options(Some(dir.path().into())))
        .map_err(|e| e.to_string())?;
    let replayed =
        run(EngineConfig::default(), Source::Replay(dir.path().into()), options(None)).map_err(|e| e.to_string())?;
    let identical = !live.updates.is_empty() && untimed(&live.updates) == untimed(&replayed.updates);

    let rec = Recording::load(dir.path()).map_err(|e| e.to_string())?;
    let mut config = AnalysisConfig::default().causal();
    config.motion = None;
    let offline: HashMap<u64, f64> = epoch_metrics(&rec, &config)
        .map_err(|e| e.to_string())?
        .into_iter()
        .filter(|m| m.valid)
        .map(|m| (m.epoch_start_us, m.value))
        .collect();
    let mut worst: f64 = 0.0;
    let mut shared = 0;
    for u in live.updates.iter().filter(|u| u.metric.valid && !u.metric.held) {
        if let Some(o) = offline.get(&u.metric.epoch_start_us) {
            worst = worst.max((o - u.metric.value).abs());
            shared += 1;
        }
    }
    check(
        identical && shared >= 15 && worst <= 1e-6,
        format!(
            "replay of {} updates identical: {identical}; causal offline vs live on {shared} shared windows, \
             max diff {worst:.1e}",
            live.updates.len()
        ),
    )
}

fn offline_rejection() -> Outcome {
    let mut scores: Vec<f64> = (0..48).map(|i| 100.0 + ((i * 37) % 17) as f64).collect();
    scores.insert(11, 10.0 * scores[11]);
    scores.insert(40, 10.0 * scores[39]);
    let rejected: Vec<usize> =
        reject_noisy_epochs(&scores, 3.0).epochs.iter().filter(|e| !e.valid).map(|e| e.index).collect();

    let plan = [TrialPlan {
        condition: Condition::Visual,
        coupling: 0.5,
        seconds: 17.5,
    }];
    let synth_cfg = SynthConfig {
        artifact_schedule: vec![ArtifactBurst {
            start_s: 9.2,
            duration_s: 8.2,
            participant: Participant::A,
        }],
        burst_deflection_uv: 0.0,
        burst_noise_uv: 0.0,
        seed: 41,
        ..Default::default()
    };
    let rec = synth_session(&synth_cfg, &plan).map_err(|e| e.to_string())?;
    let config = AnalysisConfig {
        threshold_k: 1e9,
        ..Default::default()
    };
    let report = analyze(&rec, &config).map_err(|e| e.to_string())?;
    let t = &report.trials[0];
    check(
        rejected == [11, 40] && t.valid == 10 && t.analyzable == 24 && !t.trial_valid,
        format!(
            "outliers rejected at {rejected:?}; trial with {}/{} valid epochs rejected: {}",
            t.valid, t.analyzable, !t.trial_valid
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("metric correctness", metric_correctness),
        ("synchrony discrimination", discrimination),
        ("windowing arithmetic", windowing),
        ("motion gate", motion_gate),
        ("latency budget", latency),
        ("feedback mappings", feedback_mappings),
        ("wire and protocol", wire_protocol),
        ("determinism and equivalence", determinism),
        ("offline rejection", offline_rejection),
    ];
    let mut failed = 0;
    for (name, criterion) in criteria {
        let outcome = std::panic::catch_unwind(criterion).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
