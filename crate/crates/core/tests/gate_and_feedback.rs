use neuresonance_core::feedback::{
    decode_osc, encode_osc, map_audio, map_haptic, map_visual, quantize_level, AudioPreset,
    BinEdges, FeedbackLevel, HapticTable, VisualConfig,
};
use neuresonance_core::metric::IbsMetric;
use neuresonance_core::motion::{classify_segment, MotionGate, MotionThresholds, MotionVerdict, Velocity};
use proptest::prelude::*;
use rosc::{OscPacket, OscType};

fn velocities(peaks: &[(f64, f64)]) -> Vec<Velocity> {
    peaks
        .iter()
        .enumerate()
        .map(|(i, &(l, a))| Velocity {
            timestamp_us: i as u64 * 10_000,
            linear_mm_s: l,
            angular_rad_s: a,
        })
        .collect()
}

proptest! {
    #[test]
    fn stricter_thresholds_never_accept_a_rejected_segment(
        peaks in proptest::collection::vec((0.0f64..500.0, 0.0f64..3.0), 1..50),
        linear in 1.0f64..400.0,
        angular in 0.1f64..2.0,
        tighten in 0.0f64..1.0,
    ) {
        let v = velocities(&peaks);
        let loose = MotionThresholds { linear_mm_s: linear, angular_rad_s: angular };
        let strict = MotionThresholds { linear_mm_s: linear * tighten, angular_rad_s: angular * tighten };
        if classify_segment(&v, loose).rejected {
            prop_assert!(classify_segment(&v, strict).rejected);
        }
    }

    #[test]
    fn gate_output_is_finite_and_held_values_were_emitted(
        steps in proptest::collection::vec((-1.0f64..1.0, any::<bool>(), any::<bool>(), any::<bool>()), 1..60),
    ) {
        let ok = MotionVerdict::accepted(0, 1);
        let moved = MotionVerdict { rejected: true, ..ok };
        let mut gate = MotionGate::default();
        let mut emitted_valid = Vec::new();
        for (i, (value, valid, rejected_a, rejected_b)) in steps.into_iter().enumerate() {
            let metric = if valid { IbsMetric::valid(value, i as u64) } else { IbsMetric::invalid(i as u64) };
            let out = gate.apply(
                metric,
                if rejected_a { &moved } else { &ok },
                if rejected_b { &moved } else { &ok },
            );
            prop_assert!(out.value.is_finite());
            if out.held {
                prop_assert!(emitted_valid.contains(&out.value.to_bits()));
            } else if out.valid {
                emitted_valid.push(out.value.to_bits());
            }
        }
    }

    #[test]
    fn quantize_is_monotone(a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let edges = BinEdges::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(
            quantize_level(&IbsMetric::valid(lo, 0), &edges) <= quantize_level(&IbsMetric::valid(hi, 0), &edges)
        );
    }

    #[test]
    fn osc_packets_are_word_aligned_and_decode_independently(value in any::<f32>(), level in any::<i32>()) {
        prop_assume!(value.is_finite());
        let packet = encode_osc(value, level);
        prop_assert_eq!(packet.len() % 4, 0);
        let (_, decoded) = rosc::decoder::decode_udp(&packet).unwrap();
        match decoded {
            OscPacket::Message(msg) => {
                prop_assert_eq!(msg.addr.as_str(), "/neuresonance/ibs");
                prop_assert_eq!(msg.args, vec![OscType::Float(value), OscType::Int(level)]);
            }
            OscPacket::Bundle(_) => prop_assert!(false, "expected a message"),
        }
        prop_assert_eq!(decode_osc(&packet).unwrap(), (value, level));
    }
}

#[test]
fn modality_maps_are_monotone_in_level() {
    let levels: Vec<FeedbackLevel> = FeedbackLevel::all().collect();
    let visual = VisualConfig::default();
    let table = HapticTable::default();
    for pair in levels.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        assert!(map_visual(lo, &visual).wave_amplitude > map_visual(hi, &visual).wave_amplitude);
        for preset in [AudioPreset::Linear, AudioPreset::Geometric] {
            assert!(map_audio(lo, preset).middle_hz < map_audio(hi, preset).middle_hz);
        }
        let (p_lo, p_hi) = (map_haptic(lo, &table), map_haptic(hi, &table));
        assert!(p_lo.bpm > p_hi.bpm && p_lo.intensity > p_hi.intensity);
    }
    for level in levels {
        for preset in [AudioPreset::Linear, AudioPreset::Geometric] {
            let chord = map_audio(level, preset);
            assert!((chord.fifth_hz / chord.root_hz - 1.5).abs() < 1e-12);
        }
        let linear = map_audio(level, AudioPreset::Linear);
        assert!((547.0..=659.0).contains(&linear.middle_hz));
    }
    let top = map_audio(FeedbackLevel::HIGHEST, AudioPreset::Linear);
    assert!((top.middle_hz / top.root_hz - 5.0 / 4.0).abs() < 1e-12);
    assert!((top.fifth_hz / top.root_hz - 6.0 / 4.0).abs() < 1e-12);
}
