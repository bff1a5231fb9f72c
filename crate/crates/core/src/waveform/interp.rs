//! Band-limited continuous-time evaluation of a sampled waveform.
//!
//! The samples are zero-padded by `pad` samples on both sides and the padded
//! block of length `P` is treated as one period of a trigonometric
//! polynomial. Inside the padded window the signal is that polynomial; outside
//! it is zero. Grid-aligned arguments reproduce the samples exactly.
//!
//! Two evaluation paths give the same function:
//! * `Exact` sums all `P/2` harmonics per call, O(P).
//! * `Hermite` precomputes value and derivative tables on an oversampled grid
//!   by FFT and interpolates with quintic Hermite polynomials, O(1).

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{bin_omega, dft, SampledWaveform};
use crate::scalar::Real;

pub const DEFAULT_PAD: usize = 256;
pub const DEFAULT_OVERSAMPLE: usize = 4;
/// `Auto` picks the exact path at or below this padded length.
pub const EXACT_MAX_LEN: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InterpolationMode {
    Auto,
    Exact,
    Hermite { oversample: usize },
}

#[derive(Clone, Debug)]
enum Kernel<T> {
    Exact {
        spectrum: Vec<Complex<T>>,
    },
    Hermite {
        oversample: usize,
        /// s, s', s'', s''' on the oversampled grid.
        tables: [Vec<T>; 4],
    },
}

#[derive(Clone, Debug)]
pub struct BandlimitedSignal<T> {
    sample_period: T,
    len: usize,
    pad: usize,
    period: usize,
    kernel: Kernel<T>,
}

impl<T: Real> BandlimitedSignal<T> {
    pub fn new(wf: &SampledWaveform<T>, mode: InterpolationMode) -> Self {
        Self::with_pad(wf, mode, DEFAULT_PAD)
    }

    pub fn with_pad(wf: &SampledWaveform<T>, mode: InterpolationMode, pad: usize) -> Self {
        let len = wf.len();
        let period = len + 2 * pad;
        let mut padded = vec![T::zero(); period];
        padded[pad..pad + len].copy_from_slice(&wf.samples);
        let mode = match mode {
            InterpolationMode::Auto if period <= EXACT_MAX_LEN => InterpolationMode::Exact,
            InterpolationMode::Auto => InterpolationMode::Hermite {
                oversample: DEFAULT_OVERSAMPLE,
            },
            m => m,
        };
        let kernel = match mode {
            InterpolationMode::Exact => Kernel::Exact {
                spectrum: dft(&padded),
            },
            InterpolationMode::Hermite { oversample } => Kernel::Hermite {
                oversample: oversample.max(1),
                tables: oversampled_tables(&padded, wf.sample_rate, oversample.max(1)),
            },
            InterpolationMode::Auto => unreachable!(),
        };
        Self {
            sample_period: wf.sample_period(),
            len,
            pad,
            period,
            kernel,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    pub fn sample_period(&self) -> T {
        self.sample_period
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.kernel, Kernel::Exact { .. })
    }

    /// Position in padded-sample units, or `None` outside the support.
    #[inline]
    fn padded_index(&self, t: T) -> Option<T> {
        let x = t / self.sample_period + T::from_usize_lossy(self.pad);
        let last = T::from_usize_lossy(self.period - 1);
        if x >= T::zero() && x <= last {
            Some(x)
        } else {
            None
        }
    }

    /// s(t), `t` in seconds from the first sample.
    pub fn value(&self, t: T) -> T {
        self.eval(t, 0)
    }

    /// ds/dt at `t`.
    pub fn derivative(&self, t: T) -> T {
        self.eval(t, 1)
    }

    /// (s(t), s'(t)).
    pub fn value_and_derivative(&self, t: T) -> (T, T) {
        (self.eval(t, 0), self.eval(t, 1))
    }

    fn eval(&self, t: T, order: usize) -> T {
        let Some(x) = self.padded_index(t) else {
            return T::zero();
        };
        match &self.kernel {
            Kernel::Exact { spectrum } => self.exact(spectrum, x, order),
            Kernel::Hermite { oversample, tables } => {
                let r = *oversample;
                let xf = x * T::from_usize_lossy(r);
                let last = tables[0].len() - 1;
                let i = xf.floor().to_usize().unwrap_or(0).min(last.saturating_sub(1));
                let u = xf - T::from_usize_lossy(i);
                let h = self.sample_period / T::from_usize_lossy(r);
                let (f, d1, d2) = (&tables[order], &tables[order + 1], &tables[order + 2]);
                quintic_hermite(
                    u,
                    h,
                    [f[i], d1[i], d2[i]],
                    [f[i + 1], d1[i + 1], d2[i + 1]],
                )
            }
        }
    }

    fn exact(&self, spectrum: &[Complex<T>], x: T, order: usize) -> T {
        let p = self.period;
        let two_pi = T::PI() + T::PI();
        let step = Complex::from_polar(T::one(), two_pi * x / T::from_usize_lossy(p));
        let mut rot = step;
        let mut acc = T::zero();
        let fs = T::one() / self.sample_period;
        let two = T::lit(2.0);
        for (k, s) in spectrum.iter().enumerate().take(p.div_ceil(2)).skip(1) {
            let term = *s * rot;
            acc = acc
                + match order {
                    0 => two * term.re,
                    _ => -two * bin_omega::<T>(k, p, fs) * term.im,
                };
            rot = rot * step;
        }
        if order == 0 {
            acc = acc + spectrum[0].re;
        }
        if p.is_multiple_of(2) {
            let nyq = spectrum[p / 2].re;
            let arg = T::PI() * x;
            acc = acc
                + match order {
                    0 => nyq * arg.cos(),
                    _ => -nyq * T::PI() * fs * arg.sin(),
                };
        }
        acc / T::from_usize_lossy(p)
    }

    /// s(η(t_n − τ)) at each sample time.
    pub fn scaled_delayed(&self, eta: T, tau: T, times: &[T]) -> Vec<T> {
        times.iter().map(|&t| self.value(eta * (t - tau))).collect()
    }
}

/// s(η(t_n − τ)) for a waveform; builds the interpolator in `Auto` mode.
pub fn evaluate_scaled_delayed<T: Real>(wf: &SampledWaveform<T>, eta: T, tau: T, times: &[T]) -> Vec<T> {
    BandlimitedSignal::new(wf, InterpolationMode::Auto).scaled_delayed(eta, tau, times)
}

fn oversampled_tables<T: Real>(padded: &[T], sample_rate: T, r: usize) -> [Vec<T>; 4] {
    let p = padded.len();
    let spec = dft(padded);
    let big = p * r;
    let fs = sample_rate;
    let mut planner = FftPlanner::new();
    let inverse = planner.plan_fft_inverse(big);
    let scale = T::one() / T::from_usize_lossy(p);
    let half = T::lit(0.5);

    let mut tables: [Vec<T>; 4] = Default::default();
    for (order, table) in tables.iter_mut().enumerate() {
        let mut ext = vec![Complex::new(T::zero(), T::zero()); big];
        let two_pi = T::PI() + T::PI();
        let deriv = |signed: f64| {
            let w = two_pi * T::lit(signed) * fs / T::from_usize_lossy(p);
            let mut f = Complex::new(T::one(), T::zero());
            for _ in 0..order {
                f = f * Complex::new(T::zero(), w);
            }
            f
        };
        for k in 0..p.div_ceil(2) {
            ext[k] = spec[k] * deriv(k as f64);
            if k > 0 {
                ext[big - k] = spec[p - k] * deriv(-(k as f64));
            }
        }
        if p.is_multiple_of(2) && r > 1 {
            // split the Nyquist bin across ±P/2 so the interpolant stays real
            let nyq = spec[p / 2] * half;
            ext[p / 2] = nyq * deriv((p / 2) as f64);
            ext[big - p / 2] = nyq * deriv(-((p / 2) as f64));
        } else if p.is_multiple_of(2) {
            ext[p / 2] = if order == 0 { spec[p / 2] } else { Complex::new(T::zero(), T::zero()) };
        }
        inverse.process(&mut ext);
        *table = ext.into_iter().map(|c| c.re * scale).collect();
    }
    tables
}

/// Quintic Hermite interpolation on `[0, h]` at `u ∈ [0, 1]` from value,
/// first and second derivative at both ends.
#[inline]
fn quintic_hermite<T: Real>(u: T, h: T, left: [T; 3], right: [T; 3]) -> T {
    let u2 = u * u;
    let u3 = u2 * u;
    let u4 = u3 * u;
    let u5 = u4 * u;
    let c = |v: f64| T::lit(v);
    let h0 = T::one() - c(10.0) * u3 + c(15.0) * u4 - c(6.0) * u5;
    let h1 = u - c(6.0) * u3 + c(8.0) * u4 - c(3.0) * u5;
    let h2 = (u2 - c(3.0) * u3 + c(3.0) * u4 - u5) * c(0.5);
    let h3 = c(10.0) * u3 - c(15.0) * u4 + c(6.0) * u5;
    let h4 = -c(4.0) * u3 + c(7.0) * u4 - c(3.0) * u5;
    let h5 = (u3 - c(2.0) * u4 + u5) * c(0.5);
    h0 * left[0] + h1 * h * left[1] + h2 * h * h * left[2] + h3 * right[0] + h4 * h * right[1] + h5 * h * h * right[2]
}
