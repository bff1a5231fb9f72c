#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uwcrlb::waveform::{generate, WaveformConfig, WaveformFamily};
use uwcrlb::{SampledWaveform, Scenario, SensorNode, TargetState, Vec2};

pub const FS: f64 = 24_000.0;

/// Two tones, two symbols: about 36 samples at 24 kHz.
pub fn toy_waveform_config(energy: f64) -> WaveformConfig {
    WaveformConfig {
        family: WaveformFamily::PcMfskLike,
        mary: 2,
        frame_length: 2,
        guard_fraction: 0.01,
        tones: 2,
        num_bits: 1,
        center_frequency: 6000.0,
        bandwidth: 4000.0,
        energy,
        seed: 1,
        sample_rate: FS,
        tone_spacing: None,
        ramp_fraction: 0.1,
        codec_label: None,
    }
}

pub fn toy_waveform(energy: f64) -> SampledWaveform<f64> {
    generate(&toy_waveform_config(energy)).unwrap()
}

/// Nodes on the x axis, target at least 100 m from either node and off the
/// baseline, random speed and heading.
pub fn random_scenario(rng: &mut ChaCha8Rng, num_samples: usize) -> Scenario<f64> {
    let half = rng.random_range(200.0..1500.0);
    let m1 = rng.random_range(2..=5);
    let m2 = rng.random_range(2..=5);
    let d1 = rng.random_range(0.05..0.5);
    let d2 = rng.random_range(0.05..0.5);
    let node1 = SensorNode::new(Vec2::new(-half, 0.0), m1, d1);
    let node2 = SensorNode::new(Vec2::new(half, 0.0), m2, d2);
    let p = loop {
        let x = rng.random_range(-2000.0..2000.0);
        let y = rng.random_range(200.0..2000.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let p = Vec2::new(x, y);
        if (p - node1.origin).norm() > 100.0 && (p - node2.origin).norm() > 100.0 {
            break p;
        }
    };
    let speed = rng.random_range(2.0..15.0);
    let heading = rng.random_range(0.0..360.0);
    Scenario {
        node1,
        node2,
        target: TargetState::from_knots(p, speed, heading, 1.0),
        sound_speed: 1500.0,
        sample_rate: FS,
        num_samples,
        passive_sample_rate: 2000.0,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// ‖a − b‖ / ‖b‖, falling back to ‖a − b‖ when ‖b‖ vanishes.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if norm > 0.0 {
        diff / norm
    } else {
        diff
    }
}
