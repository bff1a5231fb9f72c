//! FSK-family communication waveforms used as the bistatic sensing signal.
//!
//! Two seeded generators share the same tone grid: `Y` tones spaced
//! `Δf = B/(Y+1)` around the carrier so that the null-to-null occupancy of
//! the orthogonal tone set (symbol length `1/Δf`) is exactly `B`.
//!
//! * [`WaveformFamily::SpfskLike`] hops through concatenated seeded
//!   permutations of the `Y` tones, one tone per symbol.
//! * [`WaveformFamily::PcMfskLike`] draws seeded uniform `M`-ary symbols.
//!
//! A frame carries `frame_length` coded bits at `log₂ Y` bits per symbol.
//! Each symbol is followed by a silent guard of `guard_fraction` symbol
//! lengths and shaped with raised-cosine ramps.

pub mod interp;
pub mod io;
pub mod wbaf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub use interp::{BandlimitedSignal, InterpolationMode};
pub use wbaf::{wbaf, MainlobeMetrics, WbafResult};

pub const DEFAULT_SAMPLE_RATE: f64 = 24_000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveformFamily {
    #[serde(alias = "spfsk")]
    SpfskLike,
    #[serde(alias = "pcmfsk", alias = "pc-mfsk")]
    PcMfskLike,
}

impl WaveformFamily {
    pub fn label(self) -> &'static str {
        match self {
            WaveformFamily::SpfskLike => "spfsk",
            WaveformFamily::PcMfskLike => "pcmfsk",
        }
    }
}

fn default_ramp_fraction() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveformConfig {
    pub family: WaveformFamily,
    /// Alphabet size; 1 for the permutation-hopping family.
    pub mary: usize,
    /// Coded bits per frame.
    pub frame_length: usize,
    /// Guard duration as a fraction of the symbol duration.
    pub guard_fraction: f64,
    /// Number of tones Y.
    pub tones: usize,
    /// Information bits (metadata; the frame length sets the duration).
    pub num_bits: usize,
    pub center_frequency: f64,
    /// Null-to-null bandwidth, Hz.
    pub bandwidth: f64,
    /// Total energy Σ s².
    pub energy: f64,
    pub seed: u64,
    pub sample_rate: f64,
    /// Overrides the default tone spacing B/(Y+1).
    #[serde(default)]
    pub tone_spacing: Option<f64>,
    /// Raised-cosine ramp length per symbol edge, fraction of the symbol.
    #[serde(default = "default_ramp_fraction")]
    pub ramp_fraction: f64,
    /// Opaque codec setting carried through to metadata.
    #[serde(default)]
    pub codec_label: Option<String>,
}

impl WaveformConfig {
    /// Super-permutation FSK parameter set: Mary 1, 2048-bit frame, ε = 0.2,
    /// 256 tones, 1024 information bits.
    pub fn spfsk_like(sample_rate: f64) -> Self {
        Self {
            family: WaveformFamily::SpfskLike,
            mary: 1,
            frame_length: 2048,
            guard_fraction: 0.2,
            tones: 256,
            num_bits: 1024,
            center_frequency: 6000.0,
            bandwidth: 4000.0,
            energy: 40.0,
            seed: 1,
            sample_rate,
            tone_spacing: None,
            ramp_fraction: default_ramp_fraction(),
            codec_label: Some("G=2".into()),
        }
    }

    /// Polar-coded MFSK parameter set: Mary 16, 128-bit frame, ε = 0.01,
    /// 16 tones, 64 information bits.
    pub fn pcmfsk_like(sample_rate: f64) -> Self {
        Self {
            family: WaveformFamily::PcMfskLike,
            mary: 16,
            frame_length: 128,
            guard_fraction: 0.01,
            tones: 16,
            num_bits: 64,
            center_frequency: 6000.0,
            bandwidth: 4000.0,
            energy: 40.0,
            seed: 1,
            sample_rate,
            tone_spacing: None,
            ramp_fraction: default_ramp_fraction(),
            codec_label: Some("R2-S".into()),
        }
    }

    pub fn tone_spacing_hz(&self) -> f64 {
        self.tone_spacing
            .unwrap_or(self.bandwidth / (self.tones as f64 + 1.0))
    }

    pub fn symbol_duration(&self) -> f64 {
        1.0 / self.tone_spacing_hz()
    }

    pub fn bits_per_symbol(&self) -> usize {
        (usize::BITS - 1 - self.tones.leading_zeros()).max(1) as usize
    }

    pub fn num_symbols(&self) -> usize {
        self.frame_length.div_ceil(self.bits_per_symbol())
    }

    pub fn duration(&self) -> f64 {
        self.num_symbols() as f64 * self.symbol_duration() * (1.0 + self.guard_fraction)
    }

    pub fn tone_frequencies(&self) -> Vec<f64> {
        let df = self.tone_spacing_hz();
        let mid = (self.tones as f64 - 1.0) / 2.0;
        (0..self.tones)
            .map(|i| self.center_frequency + (i as f64 - mid) * df)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.tones < 2 {
            return bad(format!("tones must be >= 2, got {}", self.tones));
        }
        if self.mary == 0 || self.mary > self.tones {
            return bad(format!("mary must be in 1..={}, got {}", self.tones, self.mary));
        }
        if self.family == WaveformFamily::PcMfskLike && !self.tones.is_multiple_of(self.mary) {
            return bad("tones must be a multiple of mary".into());
        }
        if self.frame_length == 0 {
            return bad("frame_length must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.guard_fraction) {
            return bad(format!("guard_fraction must be in [0, 1), got {}", self.guard_fraction));
        }
        if !(self.ramp_fraction >= 0.0 && self.ramp_fraction <= 0.5) {
            return bad("ramp_fraction must be in [0, 0.5]".into());
        }
        if !(self.energy > 0.0) || !self.energy.is_finite() {
            return bad("energy must be > 0".into());
        }
        if !(self.bandwidth > 0.0) || !(self.sample_rate > 0.0) {
            return bad("bandwidth and sample_rate must be > 0".into());
        }
        if self.center_frequency - self.bandwidth / 2.0 <= 0.0 {
            return bad("band must lie above 0 Hz".into());
        }
        if self.sample_rate <= 2.0 * (self.center_frequency + self.bandwidth / 2.0) {
            return bad(format!(
                "sample_rate {} Hz must exceed 2·(f_c + B/2) = {} Hz",
                self.sample_rate,
                2.0 * (self.center_frequency + self.bandwidth / 2.0)
            ));
        }
        let df = self.tone_spacing_hz();
        if !(df > 0.0) {
            return bad("tone spacing must be > 0".into());
        }
        if (self.tones as f64 + 1.0) * df > self.bandwidth * (1.0 + 1e-12) {
            return bad(format!(
                "{} tones spaced {df} Hz occupy {} Hz, exceeding the {} Hz bandwidth",
                self.tones,
                (self.tones as f64 + 1.0) * df,
                self.bandwidth
            ));
        }
        Ok(())
    }

    /// Tone index per symbol, deterministic in `seed`.
    pub fn tone_sequence(&self) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n = self.num_symbols();
        match self.family {
            WaveformFamily::SpfskLike => {
                let mut seq = Vec::with_capacity(n);
                let mut perm: Vec<usize> = (0..self.tones).collect();
                while seq.len() < n {
                    perm.shuffle(&mut rng);
                    seq.extend(perm.iter().copied().take(n - seq.len()));
                }
                seq
            }
            WaveformFamily::PcMfskLike => {
                let stride = self.tones / self.mary;
                (0..n).map(|_| rng.random_range(0..self.mary) * stride).collect()
            }
        }
    }
}

/// Real passband samples with their sample rate and energy.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledWaveform<T> {
    pub samples: Vec<T>,
    pub sample_rate: T,
    pub energy: T,
    pub family: String,
}

impl<T: Real> SampledWaveform<T> {
    pub fn from_samples(samples: Vec<T>, sample_rate: T, family: impl Into<String>) -> Self {
        let energy = samples.iter().map(|&s| s * s).sum();
        Self {
            samples,
            sample_rate,
            energy,
            family: family.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_period(&self) -> T {
        T::one() / self.sample_rate
    }

    pub fn duration(&self) -> T {
        T::from_usize_lossy(self.samples.len()) / self.sample_rate
    }

    /// Rescales so that Σ s² = `energy`. A zero signal stays zero.
    pub fn normalized_to(mut self, energy: T) -> Self {
        let current: T = self.samples.iter().map(|&s| s * s).sum();
        if current > T::zero() {
            let g = (energy / current).sqrt();
            for s in &mut self.samples {
                *s = *s * g;
            }
            self.energy = self.samples.iter().map(|&s| s * s).sum();
        }
        self
    }

    pub fn scaled(&self, gain: T) -> Self {
        Self::from_samples(
            self.samples.iter().map(|&s| s * gain).collect(),
            self.sample_rate,
            self.family.clone(),
        )
    }

    /// ds/dt at the sample instants by spectral differentiation of the
    /// sample block taken as one period.
    pub fn derivative(&self) -> Vec<T> {
        spectral_derivative(&self.samples, self.sample_rate, 1)
    }

    pub fn interpolator(&self, mode: InterpolationMode) -> BandlimitedSignal<T> {
        BandlimitedSignal::new(self, mode)
    }
}

/// Generates the waveform described by `config`, normalized to its energy.
pub fn generate<T: Real>(config: &WaveformConfig) -> Result<SampledWaveform<T>> {
    config.validate()?;
    let fs = config.sample_rate;
    let t_sym = config.symbol_duration();
    let slot = t_sym * (1.0 + config.guard_fraction);
    let ramp = config.ramp_fraction * t_sym;
    let tones = config.tone_frequencies();
    let seq = config.tone_sequence();
    let len = (config.duration() * fs).round() as usize;

    let mut phase_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut samples = vec![0.0f64; len];
    for (j, &tone) in seq.iter().enumerate() {
        let t0 = j as f64 * slot;
        let phase: f64 = phase_rng.random_range(0.0..std::f64::consts::TAU);
        let f = tones[tone];
        let first = (t0 * fs).ceil() as usize;
        let last = (((t0 + t_sym) * fs).floor() as usize).min(len.saturating_sub(1));
        for (n, out) in samples.iter_mut().enumerate().take(last + 1).skip(first) {
            let tau = n as f64 / fs - t0;
            let w = ramp_weight(tau, t_sym, ramp);
            *out += w * (std::f64::consts::TAU * f * tau + phase).cos();
        }
    }
    let samples = samples.into_iter().map(T::lit).collect();
    let wf = SampledWaveform::from_samples(samples, T::lit(fs), config.family.label());
    Ok(wf.normalized_to(T::lit(config.energy)))
}

fn ramp_weight(tau: f64, t_sym: f64, ramp: f64) -> f64 {
    if !(0.0..=t_sym).contains(&tau) {
        return 0.0;
    }
    if ramp <= 0.0 {
        return 1.0;
    }
    let edge = tau.min(t_sym - tau);
    if edge >= ramp {
        1.0
    } else {
        0.5 * (1.0 - (std::f64::consts::PI * edge / ramp).cos())
    }
}

/// Spectrum of a real sequence (forward DFT, unnormalized).
pub(crate) fn dft<T: Real>(x: &[T]) -> Vec<Complex<T>> {
    let mut buf: Vec<Complex<T>> = x.iter().map(|&v| Complex::new(v, T::zero())).collect();
    if !buf.is_empty() {
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    }
    buf
}

/// Angular frequency of DFT bin `k` of a length-`n` block, rad/s, with the
/// Nyquist bin mapped to zero.
pub(crate) fn bin_omega<T: Real>(k: usize, n: usize, sample_rate: T) -> T {
    let two_pi = T::PI() + T::PI();
    let signed = if 2 * k < n {
        k as f64
    } else if 2 * k == n {
        0.0
    } else {
        k as f64 - n as f64
    };
    two_pi * T::lit(signed) * sample_rate / T::from_usize_lossy(n)
}

/// `order`-th time derivative of a periodic sequence via the DFT.
pub fn spectral_derivative<T: Real>(x: &[T], sample_rate: T, order: u32) -> Vec<T> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut spec = dft(x);
    for (k, c) in spec.iter_mut().enumerate() {
        let w = bin_omega(k, n, sample_rate);
        // (jω)^order
        let mut factor = Complex::new(T::one(), T::zero());
        for _ in 0..order {
            factor = factor * Complex::new(T::zero(), w);
        }
        *c = *c * factor;
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
    let scale = T::one() / T::from_usize_lossy(n);
    spec.into_iter().map(|c| c.re * scale).collect()
}

/// Fraction of energy inside `[lo, hi]` Hz from the periodogram of the
/// zero-padded signal.
pub fn in_band_energy_fraction<T: Real>(wf: &SampledWaveform<T>, lo: f64, hi: f64) -> f64 {
    let n = (wf.len() * 2).next_power_of_two();
    let mut x: Vec<T> = wf.samples.clone();
    x.resize(n, T::zero());
    let spec = dft(&x);
    let fs = wf.sample_rate.to_f64_lossy();
    let (mut inside, mut total) = (0.0, 0.0);
    for (k, c) in spec.iter().enumerate().take(n / 2 + 1) {
        let p = c.norm_sqr().to_f64_lossy();
        let f = k as f64 * fs / n as f64;
        total += p;
        if f >= lo && f <= hi {
            inside += p;
        }
    }
    if total > 0.0 {
        inside / total
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short_pcmfsk() -> WaveformConfig {
        let mut c = WaveformConfig::pcmfsk_like(DEFAULT_SAMPLE_RATE);
        c.frame_length = 32;
        c
    }

    #[test]
    fn energy_is_normalized() {
        let wf: SampledWaveform<f64> = generate(&short_pcmfsk()).unwrap();
        let e: f64 = wf.samples.iter().map(|s| s * s).sum();
        assert!((e - 40.0).abs() < 1e-8);
        assert!((wf.energy - 40.0).abs() < 1e-8);
    }

    #[test]
    fn generation_is_deterministic() {
        let a: SampledWaveform<f64> = generate(&short_pcmfsk()).unwrap();
        let b: SampledWaveform<f64> = generate(&short_pcmfsk()).unwrap();
        assert_eq!(a.samples, b.samples);
        let mut other = short_pcmfsk();
        other.seed = 2;
        let c: SampledWaveform<f64> = generate(&other).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn pcmfsk_stays_in_band() {
        let wf: SampledWaveform<f64> = generate(&WaveformConfig::pcmfsk_like(DEFAULT_SAMPLE_RATE)).unwrap();
        let frac = in_band_energy_fraction(&wf, 4000.0, 8000.0);
        assert!(frac >= 0.99, "in-band fraction {frac}");
    }

    #[test]
    fn spfsk_permutation_covers_every_tone_once() {
        let c = WaveformConfig::spfsk_like(DEFAULT_SAMPLE_RATE);
        let mut seq = c.tone_sequence();
        assert_eq!(seq.len(), 256);
        seq.sort_unstable();
        assert_eq!(seq, (0..256).collect::<Vec<_>>());
    }

    #[test]
    fn spfsk_is_longer_than_pcmfsk() {
        let s = WaveformConfig::spfsk_like(DEFAULT_SAMPLE_RATE);
        let p = WaveformConfig::pcmfsk_like(DEFAULT_SAMPLE_RATE);
        assert!(s.duration() > p.duration());
        assert_eq!(p.num_symbols(), 32);
        assert_eq!(s.num_symbols(), 256);
    }

    #[test]
    fn config_errors() {
        let mut c = short_pcmfsk();
        c.tone_spacing = Some(500.0);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = short_pcmfsk();
        c.sample_rate = 15_000.0;
        assert!(c.validate().is_err());
        let mut c = short_pcmfsk();
        c.tones = 1;
        c.mary = 1;
        assert!(c.validate().is_err());
        let mut c = short_pcmfsk();
        c.energy = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn derivative_of_periodic_tone() {
        let fs = 1000.0;
        let n = 200;
        let f = 35.0; // 7 whole cycles
        let x: Vec<f64> = (0..n)
            .map(|i| (std::f64::consts::TAU * f * i as f64 / fs).cos())
            .collect();
        let wf = SampledWaveform::from_samples(x, fs, "tone");
        let d = wf.derivative();
        let w = std::f64::consts::TAU * f;
        for (i, v) in d.iter().enumerate().take(n - 10).skip(10) {
            let expected = -w * (w * i as f64 / fs).sin();
            assert!((v - expected).abs() <= 1e-6 * w, "sample {i}");
        }
        let zero = SampledWaveform::from_samples(vec![0.0; 16], fs, "zero");
        assert!(zero.derivative().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn derivative_parseval() {
        let wf: SampledWaveform<f64> = generate(&short_pcmfsk()).unwrap();
        let d = wf.derivative();
        let lhs: f64 = d.iter().map(|v| v * v).sum();
        let n = wf.len();
        let spec = dft(&wf.samples);
        let rhs: f64 = spec
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let w = bin_omega(k, n, wf.sample_rate);
                w * w * c.norm_sqr()
            })
            .sum::<f64>()
            / n as f64;
        assert!((lhs - rhs).abs() <= 1e-8 * rhs);
    }

    #[test]
    fn derivative_is_linear() {
        let a: SampledWaveform<f64> = generate(&short_pcmfsk()).unwrap();
        let mut cb = short_pcmfsk();
        cb.seed = 9;
        let b: SampledWaveform<f64> = generate(&cb).unwrap();
        let (alpha, beta) = (0.75, -2.0);
        let mix: Vec<f64> = a
            .samples
            .iter()
            .zip(&b.samples)
            .map(|(x, y)| alpha * x + beta * y)
            .collect();
        let d_mix = SampledWaveform::from_samples(mix, a.sample_rate, "mix").derivative();
        let (da, db) = (a.derivative(), b.derivative());
        let scale = da.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..d_mix.len() {
            assert!((d_mix[i] - (alpha * da[i] + beta * db[i])).abs() <= 1e-12 * scale);
        }
    }
}
