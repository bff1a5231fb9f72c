//! Monte-Carlo check that a maximum-likelihood estimator respects the CRLB
//! on small instances.

use std::fmt;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bistatic::{active_amplitude, bistatic_mean, bistatic_mean_with_deviation, fim_bistatic, BistaticModel, BistaticWindow};
use crate::crlb::{fuse, FimMatrix, FusionCase};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::noise::{Ar1Precision, NoiseModel};
use crate::passive::{build_delay_operator, fim_passive, passive_sigma};
use crate::scenario::{NodeId, Scenario, Vec2};
use crate::sonar::{passive_snr_db, snr_db_to_signal_power};
use crate::sweep::{resolve_waveforms, ResolvedWaveform, SweepConfig};

fn default_case() -> u8 {
    3
}
fn default_grid_points() -> usize {
    5
}
fn default_span() -> f64 {
    4.0
}
fn default_iterations() -> usize {
    30
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    #[serde(default = "default_case")]
    pub case: u8,
    /// Waveform name; the first configured waveform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waveform: Option<String>,
    /// Coarse search points per parameter.
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// Coarse search half-width in CRLB standard deviations.
    #[serde(default = "default_span")]
    pub grid_span_std: f64,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            case: default_case(),
            waveform: None,
            grid_points: default_grid_points(),
            grid_span_std: default_span(),
            max_iterations: default_iterations(),
        }
    }
}

/// Stationary AR(1) noise `e_t = −a e_{t−1} + w_t`, unit innovations.
pub fn ar1_noise(rng: &mut ChaCha8Rng, a: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut prev = 0.0;
    for t in 0..n {
        let w: f64 = StandardNormal.sample(rng);
        let e = if t == 0 { w / (1.0 - a * a).sqrt() } else { -a * prev + w };
        out.push(e);
        prev = e;
    }
    out
}

/// One draw of every measurement component.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurements {
    /// Per node, sensor-major MN samples.
    pub passive: [Vec<f64>; 2],
    /// Sensor-major samples over the fixed bistatic window.
    pub bistatic: Vec<f64>,
}

/// A fixed truth plus everything the likelihood needs.
pub struct McInstance<'a> {
    pub truth: Scenario<f64>,
    pub noise: NoiseModel<f64>,
    pub case: FusionCase,
    pub model: BistaticModel<'a, f64>,
    /// σ_s² per node at the true ranges, held fixed by the estimator.
    pub passive_power: [f64; 2],
}

impl<'a> McInstance<'a> {
    /// The bistatic window has the passive sample count N and is centered on
    /// the true echo.
    pub fn new(config: &SweepConfig, waveform: &'a ResolvedWaveform, case: FusionCase) -> Result<Self> {
        let truth = config.scenario_template()?;
        let noise = config.noise_model()?;
        let env = config.environment();
        let receiver = match config.bistatic_receivers.as_slice() {
            [1] => NodeId::One,
            [2] => NodeId::Two,
            _ => return Err(Error::Config("mc: bistatic_receivers must name exactly one node".into())),
        };
        let n = truth.num_samples;
        let ts = truth.sample_period();
        let eta = truth.doppler_scale()?;
        let tau0 = truth.bistatic_delay()?;
        let m = truth.node(receiver).num_sensors;
        let mid_tm = 0.5 * truth.intersensor_delay(receiver, m)?;
        let echo_len = (waveform.waveform.len().saturating_sub(1)) as f64 * ts / eta;
        let center = tau0 + mid_tm + 0.5 * echo_len;
        let start = (center / ts).floor() * ts - (n / 2) as f64 * ts;
        let window = BistaticWindow {
            start,
            len: n,
            sample_period: ts,
        };
        let covered = BistaticWindow::for_scenario(&truth, receiver, waveform.waveform.len())?;
        let guard = crate::bistatic::WINDOW_GUARD as f64 * ts;
        let (lo, hi) = (covered.start + guard, covered.time(covered.len - 1) - guard);
        if lo < start || hi > window.time(n - 1) {
            return Err(Error::Config(format!(
                "mc: the echo spans {:.3e} s but the {n}-sample window covers {:.3e} s",
                hi - lo,
                (n - 1) as f64 * ts
            )));
        }
        let amplitude = active_amplitude(&truth, config.transmit_power_w, &env, &noise)?;
        let model = BistaticModel {
            signal: &waveform.signal,
            amplitude,
            receiver,
            window,
        };
        let speed = truth.target.speed_knots();
        let mut passive_power = [0.0; 2];
        for (k, id) in NodeId::BOTH.into_iter().enumerate() {
            if speed > 0.0 {
                let r = truth.geometry(id)?.range;
                let snr = passive_snr_db(r, env.listening_frequency_khz, speed, truth.target.weight_tonnes, env.wind_speed_knots)?;
                passive_power[k] = snr_db_to_signal_power(snr, &noise);
            }
        }
        Ok(Self {
            truth,
            noise,
            case,
            model,
            passive_power,
        })
    }

    pub fn num_params(&self) -> usize {
        if self.case == FusionCase::PassiveOnly {
            2
        } else {
            3
        }
    }

    pub fn truth_params(&self) -> Result<Vec<f64>> {
        let p = self.truth.param_vector()?.to_array();
        Ok(p[..self.num_params()].to_vec())
    }

    pub fn fim(&self) -> Result<FimMatrix<f64>> {
        let p1 = fim_passive(&self.truth, NodeId::One, self.passive_power[0], &self.noise)?;
        let p2 = fim_passive(&self.truth, NodeId::Two, self.passive_power[1], &self.noise)?;
        let bs = fim_bistatic(&self.truth, &self.model, &self.noise)?;
        Ok(fuse(self.case, &p1, &p2, &bs))
    }

    /// The CRLB over the estimated parameters. The FIM treats η as a
    /// deviation riding on η(x, y); the estimator reports absolute η, so
    /// the bound is mapped through `[I 0; ∇ηᵀ 1]`.
    pub fn crlb_matrix(&self) -> Result<Matrix<f64>> {
        let p = self.num_params();
        let fim = self.fim()?;
        let f = Matrix::from_fn(p, p, |i, j| fim.get(i, j));
        let crlb = crate::crlb::crlb(&fim, self.case);
        if crlb.sqrt_crlb_position.is_none() || (p == 3 && crlb.sqrt_crlb_eta.is_none()) {
            return Err(Error::Singular(
                self.case.id(),
                format!("FIM condition number {:.3e}; the bound does not exist", crlb.condition_number),
            ));
        }
        let c = f.cholesky("mc FIM")?.inverse();
        if p == 2 {
            return Ok(c);
        }
        let g = self.truth.signal_param_gradients(NodeId::One, 1)?.eta;
        let a = Matrix::from_row_major(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, g.x, g.y, 1.0]);
        Ok(a.matmul(&c).matmul(&a.transpose()))
    }

    pub fn simulate(&self, rng: &mut ChaCha8Rng) -> Result<Measurements> {
        let a = self.noise.ar_coefficient;
        let n = self.truth.num_samples;
        let mut passive: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for (k, id) in NodeId::BOTH.into_iter().enumerate() {
            let sigma = self.passive_power[k].sqrt();
            let s: Vec<f64> = (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut *rng);
                    sigma * z
                })
                .collect();
            let mut y = build_delay_operator(&self.truth, id)?.apply(&s);
            for block in y.chunks_mut(n) {
                for (v, e) in block.iter_mut().zip(ar1_noise(rng, a, n)) {
                    *v += e;
                }
            }
            passive[k] = y;
        }
        let mut bistatic = bistatic_mean(&self.truth, &self.model)?.values;
        for block in bistatic.chunks_mut(self.model.window.len) {
            for (v, e) in block.iter_mut().zip(ar1_noise(rng, a, self.model.window.len)) {
                *v += e;
            }
        }
        Ok(Measurements { passive, bistatic })
    }

    /// Negative log-likelihood up to a constant.
    pub fn nll(&self, y: &Measurements, theta: &[f64]) -> Result<f64> {
        let s = self.truth.with_target_position(Vec2::new(theta[0], theta[1]));
        let mut total = 0.0;
        if self.case != FusionCase::BistaticOnly {
            for (k, id) in NodeId::BOTH.into_iter().enumerate() {
                let chol = passive_sigma(&s, id, self.passive_power[k], &self.noise)?.cholesky("mc passive covariance")?;
                total += 0.5 * (chol.log_det() + chol.quad_form_inv(&y.passive[k]));
            }
        }
        if self.case != FusionCase::PassiveOnly {
            let delta = theta[2] - s.doppler_scale()?;
            let mu = bistatic_mean_with_deviation(&s, &self.model, delta)?.values;
            let len = self.model.window.len;
            let prec = Ar1Precision::new(self.noise.ar_coefficient, len);
            let r: Vec<f64> = y.bistatic.iter().zip(&mu).map(|(a, b)| a - b).collect();
            total += 0.5 * r.chunks(len).map(|c| prec.bilinear(c, c)).sum::<f64>();
        }
        Ok(total)
    }

    /// Coarse grid around the truth, then damped Newton steps. Both run in
    /// the whitened coordinates `θ = θ₀ + L z` with `L Lᵀ` the CRLB.
    /// Returns the estimate and whether the final step was below 1e−6.
    pub fn estimate(&self, y: &Measurements, crlb: &Matrix<f64>, settings: &McSettings) -> Result<(Vec<f64>, bool)> {
        let p = self.num_params();
        let truth = self.truth_params()?;
        let chol = crlb.cholesky("mc CRLB")?;
        let at = |z: &[f64]| -> Vec<f64> { chol.mul_l(z).iter().zip(&truth).map(|(d, t)| t + d).collect() };
        let nll = |z: &[f64]| self.nll(y, &at(z));
        let g = settings.grid_points.max(1);
        let offset = |k: usize| if g == 1 { 0.0 } else { settings.grid_span_std * (2.0 * k as f64 / (g - 1) as f64 - 1.0) };
        let mut z = vec![0.0; p];
        let mut value = f64::INFINITY;
        for flat in 0..g.pow(p as u32) {
            let mut idx = flat;
            let cand: Vec<f64> = (0..p)
                .map(|_| {
                    let k = idx % g;
                    idx /= g;
                    offset(k)
                })
                .collect();
            let v = nll(&cand)?;
            if v < value {
                value = v;
                z = cand;
            }
        }

        let h = 1e-3;
        let mut converged = false;
        for _ in 0..settings.max_iterations {
            let f0 = value;
            let shifted = |i: usize, di: f64, j: usize, dj: f64| {
                let mut c = z.clone();
                c[i] += di;
                c[j] += dj;
                nll(&c)
            };
            let mut grad = vec![0.0; p];
            let mut hess = Matrix::zeros(p, p);
            for i in 0..p {
                let (fp, fm) = (shifted(i, h, i, 0.0)?, shifted(i, -h, i, 0.0)?);
                grad[i] = (fp - fm) / (2.0 * h);
                hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
                for j in 0..i {
                    let v = (shifted(i, h, j, h)? - shifted(i, h, j, -h)? - shifted(i, -h, j, h)? + shifted(i, -h, j, -h)?) / (4.0 * h * h);
                    hess[(i, j)] = v;
                    hess[(j, i)] = v;
                }
            }
            // Newton on the observed curvature, scoring when it is indefinite
            let step: Vec<f64> = match hess.cholesky("mc observed information") {
                Ok(c) => c.solve(&grad).iter().map(|g| -g).collect(),
                Err(_) => grad.iter().map(|g| -g).collect(),
            };
            let size = step.iter().map(|s| s * s).sum::<f64>().sqrt();
            if size < 1e-6 {
                converged = true;
                break;
            }
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..20 {
                let cand: Vec<f64> = z.iter().zip(&step).map(|(a, s)| a + scale * s).collect();
                let v = nll(&cand)?;
                if v <= value {
                    z = cand;
                    value = v;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                converged = size < 1e-3;
                break;
            }
        }
        Ok((at(&z), converged))
    }
}

/// Per-trial generator: the master seed with the trial index as stream.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

pub fn simulate_measurements(instance: &McInstance<'_>, seed: u64) -> Result<Measurements> {
    instance.simulate(&mut trial_rng(seed, 0))
}

#[derive(Clone, Debug, Serialize)]
pub struct McReport {
    pub case: u8,
    pub num_trials: usize,
    pub converged_trials: usize,
    pub truth: Vec<f64>,
    pub mean_error: Vec<f64>,
    /// Mean-square error matrix of the estimates about the truth.
    pub empirical_covariance: Vec<Vec<f64>>,
    pub crlb: Vec<Vec<f64>>,
    /// Empirical variance / CRLB per parameter.
    pub efficiency_ratios: Vec<f64>,
    /// Smallest eigenvalue of CRLB^{-1/2} C CRLB^{-1/2} − I.
    pub whitened_min_eigenvalue: f64,
    /// 3 standard errors of a sample variance, 3·√(2/n).
    pub tolerance: f64,
    pub wall_time_s: f64,
}

impl McReport {
    pub fn bound_respected(&self) -> bool {
        self.whitened_min_eigenvalue > -self.tolerance
    }
}

impl fmt::Display for McReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = ["x", "y", "eta"];
        writeln!(f, "Monte-Carlo CRLB check, case {}", self.case)?;
        writeln!(f, "trials {} (converged {}), {:.1} s", self.num_trials, self.converged_trials, self.wall_time_s)?;
        for (i, r) in self.efficiency_ratios.iter().enumerate() {
            writeln!(
                f,
                "  {:<4} truth {:>14.8} bias {:>11.3e} var {:>11.4e} crlb {:>11.4e} ratio {:.3}",
                names[i], self.truth[i], self.mean_error[i], self.empirical_covariance[i][i], self.crlb[i][i], r
            )?;
        }
        writeln!(
            f,
            "whitened min eigenvalue {:.4} (tolerance -{:.4}): {}",
            self.whitened_min_eigenvalue,
            self.tolerance,
            if self.bound_respected() { "bound respected" } else { "BOUND VIOLATED" }
        )
    }
}

pub fn mc_crlb_check(instance: &McInstance<'_>, num_trials: usize, seed: u64, settings: &McSettings) -> Result<McReport> {
    if num_trials == 0 {
        return Err(Error::Config("num_trials must be >= 1".into()));
    }
    let started = Instant::now();
    let crlb = instance.crlb_matrix()?;
    let truth = instance.truth_params()?;
    let p = truth.len();
    let outcomes: Vec<Result<(Vec<f64>, bool)>> = (0..num_trials)
        .into_par_iter()
        .map(|t| {
            let y = instance.simulate(&mut trial_rng(seed, t as u64))?;
            instance.estimate(&y, &crlb, settings)
        })
        .collect();
    let mut errors = Vec::with_capacity(num_trials);
    let mut converged = 0;
    for o in outcomes {
        let (est, ok) = o?;
        converged += ok as usize;
        errors.push(est.iter().zip(&truth).map(|(a, b)| a - b).collect::<Vec<f64>>());
    }
    let n = num_trials as f64;
    let mean_error: Vec<f64> = (0..p).map(|i| errors.iter().map(|e| e[i]).sum::<f64>() / n).collect();
    let cov = Matrix::from_fn(p, p, |i, j| errors.iter().map(|e| e[i] * e[j]).sum::<f64>() / n);
    let l = crlb.cholesky("mc CRLB")?;
    // L⁻¹ C L⁻ᵀ has the eigenvalues of CRLB^{-1/2} C CRLB^{-1/2}
    let half = l.solve_lower(&cov);
    let whitened = l.solve_lower(&half.transpose());
    let eig = whitened.sub(&Matrix::identity(p)).symmetric_eigenvalues();
    let rows = |m: &Matrix<f64>| (0..p).map(|i| m.row(i).to_vec()).collect::<Vec<_>>();
    Ok(McReport {
        case: instance.case.id(),
        num_trials,
        converged_trials: converged,
        truth,
        mean_error,
        efficiency_ratios: (0..p).map(|i| cov[(i, i)] / crlb[(i, i)]).collect(),
        empirical_covariance: rows(&cov),
        crlb: rows(&crlb),
        whitened_min_eigenvalue: eig[0],
        tolerance: 3.0 * (2.0 / n).sqrt(),
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// Builds the instance described by `config` (its `mc` section and the
/// target position) and runs the check.
pub fn mc_check_from_config(config: &SweepConfig, num_trials: usize, seed: u64) -> Result<McReport> {
    config.validate()?;
    let settings = config.mc.clone().unwrap_or_default();
    let case = FusionCase::try_from(settings.case)?;
    let waveforms = resolve_waveforms(config)?;
    let wf = match &settings.waveform {
        Some(name) => waveforms
            .iter()
            .find(|w| &w.name == name)
            .ok_or_else(|| Error::Config(format!("mc.waveform: no waveform named {name:?}")))?,
        None => &waveforms[0],
    };
    let instance = McInstance::new(config, wf, case)?;
    mc_crlb_check(&instance, num_trials, seed, &settings)
}
