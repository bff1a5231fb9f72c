//! Bistatic echo of the communication waveform.
//!
//! The receiving array samples `μ_m[n] = g · s(η (t_n − τ₀ − τ_m))` in
//! AR(1) noise, where `g` is the echo amplitude set by the active sonar
//! equation. The direct transmitter-to-receiver path is not modelled.

use crate::crlb::FimMatrix;
use crate::error::{Error, Result};
use crate::noise::{Ar1Precision, NoiseModel};
use crate::scalar::Real;
use crate::scenario::{NodeId, Scenario};
use crate::sonar::{active_snr_db, snr_db_to_signal_power, Environment};
use crate::waveform::BandlimitedSignal;

/// Extra samples kept on each side of the echo inside the window.
pub const WINDOW_GUARD: usize = 64;

/// Receive window `t_n = start + n T_s`, n = 0..len, shared by all sensors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BistaticWindow<T> {
    pub start: T,
    pub len: usize,
    pub sample_period: T,
}

impl<T: Real> BistaticWindow<T> {
    #[inline]
    pub fn time(&self, n: usize) -> T {
        self.start + T::from_usize_lossy(n) * self.sample_period
    }

    pub fn times(&self) -> Vec<T> {
        (0..self.len).map(|n| self.time(n)).collect()
    }

    /// Window covering the whole echo of a `signal_len`-sample waveform at
    /// every sensor of `receiver`, plus [`WINDOW_GUARD`] samples each side.
    pub fn for_scenario(scenario: &Scenario<T>, receiver: NodeId, signal_len: usize) -> Result<Self> {
        let ts = scenario.sample_period();
        let eta = scenario.doppler_scale()?;
        if !(eta > T::zero()) {
            return Err(Error::Domain(format!(
                "Doppler scale must be positive, got {}",
                eta.to_f64_lossy()
            )));
        }
        let tau0 = scenario.bistatic_delay()?;
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for m in 1..=scenario.node(receiver).num_sensors {
            let tm = scenario.intersensor_delay(receiver, m)?;
            lo = lo.min(tm);
            hi = hi.max(tm);
        }
        let guard = T::from_usize_lossy(WINDOW_GUARD) * ts;
        let start = ((tau0 + lo) / ts).floor() * ts - guard;
        let span = T::from_usize_lossy(signal_len.saturating_sub(1)) * ts / eta;
        let end = tau0 + hi + span + guard;
        let len = ((end - start) / ts).ceil().to_usize().unwrap_or(0) + 1;
        Ok(Self {
            start,
            len,
            sample_period: ts,
        })
    }
}

/// Everything but the geometry needed to evaluate the echo.
#[derive(Clone, Copy, Debug)]
pub struct BistaticModel<'a, T> {
    pub signal: &'a BandlimitedSignal<T>,
    pub amplitude: T,
    pub receiver: NodeId,
    pub window: BistaticWindow<T>,
}

impl<'a, T: Real> BistaticModel<'a, T> {
    /// Model with the window fitted to `scenario`.
    pub fn new(scenario: &Scenario<T>, signal: &'a BandlimitedSignal<T>, amplitude: T, receiver: NodeId) -> Result<Self> {
        let window = BistaticWindow::for_scenario(scenario, receiver, signal.len())?;
        Ok(Self {
            signal,
            amplitude,
            receiver,
            window,
        })
    }

    pub fn with_window(mut self, window: BistaticWindow<T>) -> Self {
        self.window = window;
        self
    }

    pub fn num_sensors(&self, scenario: &Scenario<T>) -> usize {
        scenario.node(self.receiver).num_sensors
    }
}

/// Echo amplitude √(10^(SNR/10)/(1 − a²)) for a waveform normalized to the
/// reference energy.
pub fn active_amplitude<T: Real>(
    scenario: &Scenario<T>,
    power_watt: T,
    env: &Environment<T>,
    noise: &NoiseModel<T>,
) -> Result<T> {
    let r1 = scenario.geometry(NodeId::One)?.range;
    let r2 = scenario.geometry(NodeId::Two)?.range;
    let snr = active_snr_db(power_watt, r1, r2, env.listening_frequency_khz, env.wind_speed_knots)?;
    Ok(snr_db_to_signal_power(snr, noise).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct BistaticMean<T> {
    /// Sensor-major: `values[m * len + n]`.
    pub values: Vec<T>,
    /// The echo falls entirely outside the window.
    pub support_exhausted: bool,
}

/// Mean echo with the Doppler scale perturbed to η + `delta`.
pub fn bistatic_mean_with_deviation<T: Real>(scenario: &Scenario<T>, model: &BistaticModel<'_, T>, delta: T) -> Result<BistaticMean<T>> {
    let w = model.window;
    let mut values = Vec::with_capacity(w.len * model.num_sensors(scenario));
    for m in 1..=model.num_sensors(scenario) {
        for n in 0..w.len {
            let k = scenario.k_value(model.receiver, m, w.time(n), delta)?;
            values.push(model.amplitude * model.signal.value(k));
        }
    }
    let support_exhausted = values.iter().all(|&v| v == T::zero());
    Ok(BistaticMean {
        values,
        support_exhausted,
    })
}

pub fn bistatic_mean<T: Real>(scenario: &Scenario<T>, model: &BistaticModel<'_, T>) -> Result<BistaticMean<T>> {
    bistatic_mean_with_deviation(scenario, model, T::zero())
}

/// Per-sensor ∂μ/∂θ columns for θ = [x, y, η].
#[derive(Clone, Debug, PartialEq)]
pub struct SensorJacobian<T> {
    pub columns: [Vec<T>; 3],
}

fn sensor_jacobian<T: Real>(scenario: &Scenario<T>, model: &BistaticModel<'_, T>, m: usize) -> Result<SensorJacobian<T>> {
    let id = model.receiver;
    let grads = scenario.signal_param_gradients(id, m)?;
    let eta = scenario.doppler_scale()?;
    let offset = scenario.bistatic_delay()? + scenario.intersensor_delay(id, m)?;
    let static_p = (grads.tau0 + grads.tau_m) * eta;
    let w = model.window;
    let mut cols = [
        Vec::with_capacity(w.len),
        Vec::with_capacity(w.len),
        Vec::with_capacity(w.len),
    ];
    for n in 0..w.len {
        let lag = w.time(n) - offset;
        let ds = model.amplitude * model.signal.derivative(eta * lag);
        cols[0].push(ds * (grads.eta.x * lag - static_p.x));
        cols[1].push(ds * (grads.eta.y * lag - static_p.y));
        cols[2].push(ds * lag);
    }
    Ok(SensorJacobian { columns: cols })
}

/// ∂μ/∂θ for every sensor of the receiver.
pub fn bistatic_jacobian<T: Real>(scenario: &Scenario<T>, model: &BistaticModel<'_, T>) -> Result<Vec<SensorJacobian<T>>> {
    (1..=model.num_sensors(scenario))
        .map(|m| sensor_jacobian(scenario, model, m))
        .collect()
}

/// `Σ_m J_mᵀ R⁻¹ J_m` with the tridiagonal AR(1) precision, accumulated
/// sample by sample without storing J.
pub fn fim_bistatic<T: Real>(scenario: &Scenario<T>, model: &BistaticModel<'_, T>, noise: &NoiseModel<T>) -> Result<FimMatrix<T>> {
    noise.validate()?;
    let w = model.window;
    let prec = Ar1Precision::new(noise.ar_coefficient, w.len);
    let a = prec.off_diag();
    let id = model.receiver;
    let eta = scenario.doppler_scale()?;
    let tau0 = scenario.bistatic_delay()?;
    let mut acc = [[T::zero(); 3]; 3];
    for m in 1..=model.num_sensors(scenario) {
        let grads = scenario.signal_param_gradients(id, m)?;
        let offset = tau0 + scenario.intersensor_delay(id, m)?;
        let static_p = (grads.tau0 + grads.tau_m) * eta;
        let mut prev = [T::zero(); 3];
        for n in 0..w.len {
            let lag = w.time(n) - offset;
            let ds = model.amplitude * model.signal.derivative(eta * lag);
            let cur = [
                ds * (grads.eta.x * lag - static_p.x),
                ds * (grads.eta.y * lag - static_p.y),
                ds * lag,
            ];
            let d = prec.diag(n);
            for i in 0..3 {
                for j in i..3 {
                    acc[i][j] = acc[i][j] + d * cur[i] * cur[j] + a * (cur[i] * prev[j] + prev[i] * cur[j]);
                }
            }
            prev = cur;
        }
    }
    let mut fim = FimMatrix::zeros();
    for i in 0..3 {
        for j in i..3 {
            fim.0[i][j] = acc[i][j];
            fim.0[j][i] = acc[i][j];
        }
    }
    Ok(fim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{SensorNode, TargetState, Vec2};
    use crate::waveform::{InterpolationMode, SampledWaveform};

    fn scenario() -> Scenario<f64> {
        Scenario {
            node1: SensorNode::new(Vec2::new(-300.0, 0.0), 3, 0.5),
            node2: SensorNode::new(Vec2::new(300.0, 0.0), 3, 0.5),
            target: TargetState::from_knots(Vec2::new(120.0, 400.0), 10.0, 60.0, 1.0),
            sound_speed: 1500.0,
            sample_rate: 8000.0,
            num_samples: 16,
            passive_sample_rate: 320.0,
        }
    }

    fn chirp(n: usize, fs: f64) -> SampledWaveform<f64> {
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                let w = (std::f64::consts::PI * i as f64 / (n - 1) as f64).sin().powi(2);
                w * (std::f64::consts::TAU * (800.0 * t + 6000.0 * t * t)).cos()
            })
            .collect();
        SampledWaveform::from_samples(samples, fs, "chirp").normalized_to(40.0)
    }

    #[test]
    fn window_covers_echo() {
        let s = scenario();
        let wf = chirp(200, s.sample_rate);
        let sig = wf.interpolator(InterpolationMode::Exact);
        let model = BistaticModel::new(&s, &sig, 1.0, NodeId::Two).unwrap();
        let mean = bistatic_mean(&s, &model).unwrap();
        assert!(!mean.support_exhausted);
        let energy: f64 = mean.values.iter().map(|v| v * v).sum();
        // three sensors, each receiving ≈ E/η
        let eta = s.doppler_scale().unwrap();
        assert!((energy - 3.0 * 40.0 / eta).abs() < 0.05 * energy, "{energy}");
    }

    #[test]
    fn far_window_exhausts_support() {
        let s = scenario();
        let wf = chirp(64, s.sample_rate);
        let sig = wf.interpolator(InterpolationMode::Exact);
        let model = BistaticModel::new(&s, &sig, 1.0, NodeId::Two).unwrap().with_window(BistaticWindow {
            start: 100.0,
            len: 32,
            sample_period: s.sample_period(),
        });
        assert!(bistatic_mean(&s, &model).unwrap().support_exhausted);
        assert_eq!(fim_bistatic(&s, &model, &NoiseModel::new(0.5, 1).unwrap()).unwrap(), FimMatrix::zeros());
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let s = scenario();
        let wf = chirp(160, s.sample_rate);
        let sig = wf.interpolator(InterpolationMode::Exact);
        let model = BistaticModel::new(&s, &sig, 2.0, NodeId::One).unwrap();
        let jac = bistatic_jacobian(&s, &model).unwrap();
        let len = model.window.len;
        let fd = |plus: &[f64], minus: &[f64], h: f64| -> Vec<f64> {
            plus.iter().zip(minus).map(|(a, b)| (a - b) / (2.0 * h)).collect()
        };
        let hp = 1e-3;
        let shift = |dx: f64, dy: f64| s.with_target_position(s.target.position + Vec2::new(dx, dy));
        let cols = [
            fd(
                &bistatic_mean(&shift(hp, 0.0), &model).unwrap().values,
                &bistatic_mean(&shift(-hp, 0.0), &model).unwrap().values,
                hp,
            ),
            fd(
                &bistatic_mean(&shift(0.0, hp), &model).unwrap().values,
                &bistatic_mean(&shift(0.0, -hp), &model).unwrap().values,
                hp,
            ),
            fd(
                &bistatic_mean_with_deviation(&s, &model, 1e-7).unwrap().values,
                &bistatic_mean_with_deviation(&s, &model, -1e-7).unwrap().values,
                1e-7,
            ),
        ];
        for (i, col) in cols.iter().enumerate() {
            let analytic: Vec<f64> = jac.iter().flat_map(|j| j.columns[i].iter().copied()).collect();
            assert_eq!(analytic.len(), 3 * len);
            let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let err = analytic.iter().zip(col).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err < 1e-4 * scale, "column {i}: err {err} scale {scale}");
        }
    }

    #[test]
    fn fim_is_quadratic_in_amplitude() {
        let s = scenario();
        let wf = chirp(120, s.sample_rate);
        let sig = wf.interpolator(InterpolationMode::Exact);
        let noise = NoiseModel::new(0.5, 1).unwrap();
        let m1 = BistaticModel::new(&s, &sig, 1.0, NodeId::Two).unwrap();
        let m3 = BistaticModel { amplitude: 3.0, ..m1 };
        let f1 = fim_bistatic(&s, &m1, &noise).unwrap();
        let f3 = fim_bistatic(&s, &m3, &noise).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((f3.0[i][j] - 9.0 * f1.0[i][j]).abs() <= 1e-10 * f3.0[i][i].abs().max(f3.0[j][j].abs()));
            }
        }
        assert!(f1.is_symmetric_psd());
    }

    #[test]
    fn streaming_fim_equals_explicit_quadratic_form() {
        let s = scenario();
        let wf = chirp(90, s.sample_rate);
        let sig = wf.interpolator(InterpolationMode::Exact);
        let noise = NoiseModel::new(-0.4, 1).unwrap();
        let model = BistaticModel::new(&s, &sig, 1.5, NodeId::Two).unwrap();
        let fim = fim_bistatic(&s, &model, &noise).unwrap();
        let prec = Ar1Precision::new(-0.4, model.window.len);
        let jac = bistatic_jacobian(&s, &model).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = jac.iter().map(|jm| prec.bilinear(&jm.columns[i], &jm.columns[j])).sum();
                assert!((v - fim.0[i][j]).abs() <= 1e-12 * fim.0[i][i].max(fim.0[j][j]));
            }
        }
    }

    #[test]
    fn amplitude_tracks_active_snr() {
        let s = scenario();
        let env = Environment {
            wind_speed_knots: 6.0,
            listening_frequency_khz: 6.0,
        };
        let noise = NoiseModel::new(0.5, 1).unwrap();
        let g = active_amplitude(&s, 1.0, &env, &noise).unwrap();
        let r1 = s.geometry(NodeId::One).unwrap().range;
        let r2 = s.geometry(NodeId::Two).unwrap().range;
        let snr = active_snr_db(1.0, r1, r2, 6.0, 6.0).unwrap();
        assert!((10.0 * (g * g * (1.0 - 0.25)).log10() - snr).abs() < 1e-10);
    }
}
