//! Wideband ambiguity function
//! χ(τ, η) = √η Σₙ s(tₙ) s(η(tₙ − τ)) T_s
//! with linear (zero outside support) correlation.

use rayon::prelude::*;

use super::interp::BandlimitedSignal;
use crate::linalg::Matrix;
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct WbafResult<T> {
    pub delays: Vec<T>,
    pub etas: Vec<T>,
    /// |χ|, one row per η, one column per τ.
    pub magnitude: Matrix<T>,
    /// χ(0, 1).
    pub peak: T,
    /// (row, col) of the largest grid magnitude.
    pub argmax: (usize, usize),
    /// |χ(τ, η*)| along the row through the grid maximum.
    pub delay_cut: Vec<T>,
    /// |χ(τ*, η)| along the column through the grid maximum.
    pub doppler_cut: Vec<T>,
}

impl<T: Real> WbafResult<T> {
    /// |χ| / χ(0, 1).
    pub fn normalized(&self) -> Matrix<T> {
        if self.peak > T::zero() {
            self.magnitude.scale(T::one() / self.peak)
        } else {
            self.magnitude.clone()
        }
    }
}

/// χ(τ, η) for one cell.
pub fn chi<T: Real>(signal: &BandlimitedSignal<T>, samples: &[T], tau: T, eta: T) -> T {
    let ts = signal.sample_period();
    let mut acc = T::zero();
    for (n, &s) in samples.iter().enumerate() {
        if s == T::zero() {
            continue;
        }
        let t = T::from_usize_lossy(n) * ts;
        acc = acc + s * signal.value(eta * (t - tau));
    }
    eta.sqrt() * acc * ts
}

/// Evaluates |χ| over the `delay_grid` × `eta_grid`, cells in parallel.
pub fn wbaf<T: Real>(
    signal: &BandlimitedSignal<T>,
    samples: &[T],
    delay_grid: &[T],
    eta_grid: &[T],
) -> WbafResult<T> {
    let cols = delay_grid.len();
    let rows = eta_grid.len();
    let cells: Vec<T> = (0..rows * cols)
        .into_par_iter()
        .map(|idx| chi(signal, samples, delay_grid[idx % cols], eta_grid[idx / cols]).abs())
        .collect();
    let magnitude = Matrix::from_row_major(rows, cols, cells);
    let mut argmax = (0, 0);
    let mut best = T::neg_infinity();
    for r in 0..rows {
        for c in 0..cols {
            if magnitude[(r, c)] > best {
                best = magnitude[(r, c)];
                argmax = (r, c);
            }
        }
    }
    let delay_cut = if rows > 0 { magnitude.row(argmax.0).to_vec() } else { Vec::new() };
    let doppler_cut = (0..rows).map(|r| magnitude[(r, argmax.1)]).collect();
    WbafResult {
        delays: delay_grid.to_vec(),
        etas: eta_grid.to_vec(),
        magnitude,
        peak: chi(signal, samples, T::zero(), T::one()),
        argmax,
        delay_cut,
        doppler_cut,
    }
}

/// Resolution figures of the ambiguity mainlobe through χ(0, 1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MainlobeMetrics {
    /// Full width in η where |χ(0, η)|² ≥ ½ χ(0, 1)².
    pub doppler_width_3db: f64,
    /// Full width in seconds where |χ(τ, 1)|² ≥ ½ χ(0, 1)².
    pub delay_width_3db: f64,
    /// Largest |χ(τ, 1)| outside the delay mainlobe, dB re the peak.
    pub delay_sidelobe_db: f64,
}

/// Distance from the peak along one axis to the first −3 dB crossing,
/// found by geometric stepping then bisection.
fn half_power_offset(f: impl Fn(f64) -> f64, peak: f64, initial_step: f64) -> f64 {
    let level = peak / std::f64::consts::SQRT_2;
    let mut lo = 0.0;
    let mut hi = initial_step;
    let mut guard = 0;
    while f(hi) >= level && guard < 200 {
        lo = hi;
        hi *= 1.5;
        guard += 1;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn mainlobe_metrics(
    signal: &BandlimitedSignal<f64>,
    samples: &[f64],
    center_frequency: f64,
    bandwidth: f64,
) -> MainlobeMetrics {
    let peak = chi(signal, samples, 0.0, 1.0).abs();
    let duration = samples.len() as f64 * signal.sample_period();
    let doppler_step = 0.05 / (center_frequency * duration).max(1.0);
    let cut_eta = |d: f64| chi(signal, samples, 0.0, 1.0 + d).abs();
    let cut_eta_neg = |d: f64| chi(signal, samples, 0.0, 1.0 - d).abs();
    let doppler_width = half_power_offset(cut_eta, peak, doppler_step)
        + half_power_offset(cut_eta_neg, peak, doppler_step);

    let delay_step = 0.05 / bandwidth;
    let cut_tau = |d: f64| chi(signal, samples, d, 1.0).abs();
    let half_delay = half_power_offset(cut_tau, peak, delay_step);
    let delay_width = 2.0 * half_delay;

    // near-in sidelobes: scan 40/B of delay past the first null
    let ts = signal.sample_period();
    let max_lag = ((40.0 / bandwidth / ts).ceil() as usize).clamp(4, samples.len().max(4));
    let stride = (max_lag / 200).max(1);
    let mut prev = peak;
    let mut past_null = false;
    let mut sidelobe: f64 = 0.0;
    let mut lag = ((half_delay / ts).ceil() as usize).max(1);
    while lag <= max_lag {
        let v = chi(signal, samples, lag as f64 * ts, 1.0).abs();
        if !past_null && v > prev {
            past_null = true;
        }
        if past_null {
            sidelobe = sidelobe.max(v);
        }
        prev = v;
        lag += if past_null { stride } else { 1 };
    }
    MainlobeMetrics {
        doppler_width_3db: doppler_width,
        delay_width_3db: delay_width,
        delay_sidelobe_db: 20.0 * (sidelobe.max(1e-300) / peak).log10(),
    }
}
