//! Grid sweeps over target position: configuration, parallel evaluation and
//! CSV/JSON output.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bistatic::{active_amplitude, fim_bistatic, BistaticModel};
use crate::crlb::{crlb, fuse, CrlbFlag, CrlbResult, FimMatrix, FusionCase};
use crate::error::{Error, Result};
use crate::mc::McSettings;
use crate::noise::NoiseModel;
use crate::passive::fim_passive;
use crate::scenario::{NodeId, Scenario, SensorNode, TargetState, Vec2, DEFAULT_SOUND_SPEED};
use crate::sonar::{passive_snr_db, snr_db_to_signal_power, Environment};
use crate::waveform::wbaf::{mainlobe_metrics, wbaf, MainlobeMetrics};
use crate::waveform::{self, BandlimitedSignal, InterpolationMode, SampledWaveform, WaveformConfig, WaveformFamily};

pub const CASE_HEADER: &str = "x_m,y_m,sqrt_crlb_p_m,sqrt_crlb_eta,flag";
pub const RATIO_HEADER: &str = "x_m,y_m,ratio,flag";

fn default_sound_speed() -> f64 {
    DEFAULT_SOUND_SPEED
}
fn default_sample_rate() -> f64 {
    waveform::DEFAULT_SAMPLE_RATE
}
fn default_num_sensors() -> usize {
    4
}
fn default_spacing() -> f64 {
    0.125
}
fn default_axis() -> [f64; 2] {
    [0.0, 1.0]
}
fn default_heading() -> f64 {
    90.0
}
fn default_ar() -> f64 {
    0.5
}
fn default_wind() -> f64 {
    6.0
}
fn default_listen_khz() -> f64 {
    6.0
}
fn default_power() -> f64 {
    1.0
}
fn default_receivers() -> Vec<usize> {
    vec![2]
}
fn default_cases() -> Vec<u8> {
    vec![1, 2, 3]
}
fn default_grid() -> GridSpec {
    GridSpec {
        x_min: -3000.0,
        x_max: 3000.0,
        y_min: -3000.0,
        y_max: 3000.0,
        nx: 21,
        ny: 21,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub position: [f64; 2],
    #[serde(default = "default_num_sensors")]
    pub num_sensors: usize,
    /// Element spacing d, meters.
    #[serde(default = "default_spacing")]
    pub element_spacing: f64,
    /// Array axis e; τ_m grows with the direction cosine eᵀu.
    #[serde(default = "default_axis")]
    pub steering_axis: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetConfig {
    pub position: [f64; 2],
    pub speed_knots: f64,
    /// Degrees counter-clockwise from +x.
    #[serde(default = "default_heading")]
    pub heading_deg: f64,
    pub weight_tonnes: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassiveConfig {
    pub num_samples: usize,
    /// Observation window, seconds; the passive sample rate is N / window.
    pub window_s: f64,
}

impl Default for PassiveConfig {
    fn default() -> Self {
        Self {
            num_samples: 128,
            window_s: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub nodes: Vec<NodeConfig>,
    pub target: TargetConfig,
    #[serde(default = "default_sound_speed")]
    pub sound_speed: f64,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: f64,
    #[serde(default)]
    pub passive: PassiveConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    #[serde(default = "default_ar")]
    pub ar_coefficient: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            ar_coefficient: default_ar(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentConfig {
    #[serde(default = "default_wind")]
    pub wind_speed_knots: f64,
    #[serde(default = "default_listen_khz")]
    pub listening_frequency_khz: f64,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        Self {
            wind_speed_knots: default_wind(),
            listening_frequency_khz: default_listen_khz(),
        }
    }
}

/// One waveform to sweep. Exactly one of `preset`, `config` or `raw_path`
/// selects the source; `energy`, `seed` and `frame_length` override preset
/// fields.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WaveformEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<WaveformFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<WaveformConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_length: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![lo];
        }
        let step = (hi - lo) / (n - 1) as f64;
        (0..n).map(|i| lo + step * i as f64).collect()
    }

    pub fn xs(&self) -> Vec<f64> {
        Self::axis(self.x_min, self.x_max, self.nx)
    }

    pub fn ys(&self) -> Vec<f64> {
        Self::axis(self.y_min, self.y_max, self.ny)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ambiguity-surface grid for the `wbaf` driver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WbafGridConfig {
    /// Half-span of the delay axis in units of 1/B.
    pub delay_span_bandwidths: f64,
    pub num_delays: usize,
    /// Half-span of the η axis in units of 1/(f_c T).
    pub eta_span_resolutions: f64,
    pub num_etas: usize,
}

impl Default for WbafGridConfig {
    fn default() -> Self {
        Self {
            delay_span_bandwidths: 5.0,
            num_delays: 41,
            eta_span_resolutions: 5.0,
            num_etas: 41,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub environment: EnvironmentConfig,
    /// Active transmit power P, watts.
    #[serde(default = "default_power")]
    pub transmit_power_w: f64,
    /// Nodes (1 and/or 2) whose arrays observe the bistatic echo.
    #[serde(default = "default_receivers")]
    pub bistatic_receivers: Vec<usize>,
    pub waveforms: Vec<WaveformEntry>,
    #[serde(default = "default_grid")]
    pub grid: GridSpec,
    #[serde(default = "default_cases")]
    pub cases: Vec<u8>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wbaf: Option<WbafGridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McSettings>,
}

fn finite_positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

fn file_safe(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text)?;
        // raw waveform paths are relative to the config file
        if let Some(dir) = path.parent() {
            for w in &mut cfg.waveforms {
                if let Some(p) = &w.raw_path {
                    if p.is_relative() {
                        w.raw_path = Some(dir.join(p));
                    }
                }
            }
        }
        Ok(cfg)
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut bad: Vec<String> = Vec::new();
        let sc = &self.scenario;
        if sc.nodes.len() != 2 {
            bad.push(format!("scenario.nodes: expected 2 nodes, got {}", sc.nodes.len()));
        }
        for (i, n) in sc.nodes.iter().enumerate() {
            if !n.position.iter().all(|v| v.is_finite()) {
                bad.push(format!("scenario.nodes[{i}].position: must be finite"));
            }
            if n.num_sensors == 0 {
                bad.push(format!("scenario.nodes[{i}].num_sensors: must be >= 1"));
            }
            if !finite_positive(n.element_spacing) {
                bad.push(format!("scenario.nodes[{i}].element_spacing: must be > 0"));
            }
            let norm = n.steering_axis[0].hypot(n.steering_axis[1]);
            if !((norm - 1.0).abs() < 1e-9) {
                bad.push(format!("scenario.nodes[{i}].steering_axis: must be a unit vector"));
            }
        }
        if sc.nodes.len() == 2 && sc.nodes[0].position == sc.nodes[1].position {
            bad.push("scenario.nodes: node positions must differ".into());
        }
        let t = &sc.target;
        if !(t.speed_knots.is_finite() && t.speed_knots >= 0.0) {
            bad.push("scenario.target.speed_knots: must be >= 0".into());
        }
        if !finite_positive(t.weight_tonnes) {
            bad.push("scenario.target.weight_tonnes: must be > 0".into());
        }
        if !t.heading_deg.is_finite() || !t.position.iter().all(|v| v.is_finite()) {
            bad.push("scenario.target: position and heading_deg must be finite".into());
        }
        if !finite_positive(sc.sound_speed) {
            bad.push("scenario.sound_speed: must be > 0".into());
        }
        if !finite_positive(sc.sample_rate) {
            bad.push("scenario.sample_rate: must be > 0".into());
        }
        if sc.passive.num_samples < 2 || !sc.passive.num_samples.is_multiple_of(2) {
            bad.push(format!(
                "scenario.passive.num_samples: must be even and >= 2, got {}",
                sc.passive.num_samples
            ));
        }
        if !finite_positive(sc.passive.window_s) {
            bad.push("scenario.passive.window_s: must be > 0".into());
        }
        if !(self.noise.ar_coefficient.abs() < 1.0) {
            bad.push(format!(
                "noise.ar_coefficient: |a| must be < 1, got {}",
                self.noise.ar_coefficient
            ));
        }
        if !(self.environment.wind_speed_knots.is_finite() && self.environment.wind_speed_knots >= 0.0) {
            bad.push("environment.wind_speed_knots: must be >= 0".into());
        }
        if !finite_positive(self.environment.listening_frequency_khz) {
            bad.push("environment.listening_frequency_khz: must be > 0".into());
        }
        if !finite_positive(self.transmit_power_w) {
            bad.push("transmit_power_w: must be > 0".into());
        }
        if self.bistatic_receivers.is_empty() || self.bistatic_receivers.iter().any(|&r| r != 1 && r != 2) {
            bad.push("bistatic_receivers: must be a non-empty subset of [1, 2]".into());
        }
        if self.waveforms.is_empty() {
            bad.push("waveforms: at least one waveform is required".into());
        }
        let mut names = BTreeSet::new();
        for (i, w) in self.waveforms.iter().enumerate() {
            if !file_safe(&w.name) {
                bad.push(format!("waveforms[{i}].name: use letters, digits, '_' or '-'"));
            } else if !names.insert(w.name.as_str()) {
                bad.push(format!("waveforms[{i}].name: duplicate name {:?}", w.name));
            }
            let sources = w.preset.is_some() as u8 + w.config.is_some() as u8 + w.raw_path.is_some() as u8;
            if sources != 1 {
                bad.push(format!("waveforms[{i}]: set exactly one of preset, config, raw_path"));
            }
            if let Some(e) = w.energy {
                if !finite_positive(e) {
                    bad.push(format!("waveforms[{i}].energy: must be > 0"));
                }
            }
            if let Ok(Some(cfg)) = self.waveform_config(w) {
                if let Err(e) = cfg.validate() {
                    bad.push(format!("waveforms[{i}]: {e}"));
                }
                if (cfg.sample_rate - sc.sample_rate).abs() > 1e-9 * sc.sample_rate {
                    bad.push(format!("waveforms[{i}].sample_rate: must equal scenario.sample_rate"));
                }
            }
        }
        let g = &self.grid;
        if g.nx == 0 || g.ny == 0 {
            bad.push("grid: nx and ny must be >= 1".into());
        }
        if ![g.x_min, g.x_max, g.y_min, g.y_max].iter().all(|v| v.is_finite()) || g.x_max < g.x_min || g.y_max < g.y_min {
            bad.push("grid: extents must be finite with max >= min".into());
        }
        if self.cases.is_empty() || self.cases.iter().any(|c| FusionCase::try_from(*c).is_err()) {
            bad.push("cases: must be a non-empty subset of [1, 2, 3]".into());
        }
        if let Some(mc) = &self.mc {
            if FusionCase::try_from(mc.case).is_err() {
                bad.push("mc.case: must be 1, 2 or 3".into());
            }
            if mc.grid_points == 0 || !finite_positive(mc.grid_span_std) {
                bad.push("mc: grid_points must be >= 1 and grid_span_std > 0".into());
            }
        }
        if self.workers == Some(0) {
            bad.push("workers: must be >= 1".into());
        }
        if let Some(wb) = &self.wbaf {
            if wb.num_delays == 0 || wb.num_etas == 0 || !finite_positive(wb.delay_span_bandwidths) || !finite_positive(wb.eta_span_resolutions) {
                bad.push("wbaf: spans must be > 0 and counts >= 1".into());
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    /// The generator config for a preset or explicit entry; `None` for raw.
    pub fn waveform_config(&self, entry: &WaveformEntry) -> Result<Option<WaveformConfig>> {
        let mut cfg = match (&entry.preset, &entry.config) {
            (Some(WaveformFamily::SpfskLike), None) => WaveformConfig::spfsk_like(self.scenario.sample_rate),
            (Some(WaveformFamily::PcMfskLike), None) => WaveformConfig::pcmfsk_like(self.scenario.sample_rate),
            (None, Some(c)) => c.clone(),
            (None, None) => return Ok(None),
            (Some(_), Some(_)) => return Err(Error::Config(format!("waveform {:?}: preset and config both set", entry.name))),
        };
        cfg.seed = entry.seed.unwrap_or(self.seed);
        if let Some(e) = entry.energy {
            cfg.energy = e;
        }
        if let Some(n) = entry.frame_length {
            cfg.frame_length = n;
        }
        Ok(Some(cfg))
    }

    /// Scenario at the configured target position.
    pub fn scenario_template(&self) -> Result<Scenario<f64>> {
        let sc = &self.scenario;
        let node = |i: usize| {
            let n = &sc.nodes[i];
            let mut s = SensorNode::new(Vec2::new(n.position[0], n.position[1]), n.num_sensors, n.element_spacing);
            s.steering_axis = Vec2::new(n.steering_axis[0], n.steering_axis[1]);
            s
        };
        let t = &sc.target;
        let scenario = Scenario {
            node1: node(0),
            node2: node(1),
            target: TargetState::from_knots(Vec2::new(t.position[0], t.position[1]), t.speed_knots, t.heading_deg, t.weight_tonnes),
            sound_speed: sc.sound_speed,
            sample_rate: sc.sample_rate,
            num_samples: sc.passive.num_samples,
            passive_sample_rate: sc.passive.num_samples as f64 / sc.passive.window_s,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn noise_model(&self) -> Result<NoiseModel<f64>> {
        NoiseModel::new(self.noise.ar_coefficient, self.scenario.passive.num_samples)
    }

    pub fn environment(&self) -> Environment<f64> {
        Environment {
            wind_speed_knots: self.environment.wind_speed_knots,
            listening_frequency_khz: self.environment.listening_frequency_khz,
        }
    }

    pub fn fusion_cases(&self) -> Vec<FusionCase> {
        let set: BTreeSet<FusionCase> = self.cases.iter().filter_map(|&c| FusionCase::try_from(c).ok()).collect();
        set.into_iter().collect()
    }

    fn receivers(&self) -> Vec<NodeId> {
        let set: BTreeSet<usize> = self.bistatic_receivers.iter().copied().collect();
        set.into_iter()
            .map(|r| if r == 1 { NodeId::One } else { NodeId::Two })
            .collect()
    }
}

/// A waveform ready for evaluation.
pub struct ResolvedWaveform {
    pub name: String,
    pub config: Option<WaveformConfig>,
    pub waveform: SampledWaveform<f64>,
    pub signal: BandlimitedSignal<f64>,
}

impl ResolvedWaveform {
    /// (f_c, B): from the generator config, else the spectral centroid and
    /// twice the RMS bandwidth.
    pub fn band(&self) -> (f64, f64) {
        if let Some(c) = &self.config {
            return (c.center_frequency, c.bandwidth);
        }
        let spec = waveform::dft(&self.waveform.samples);
        let n = spec.len();
        let fs = self.waveform.sample_rate;
        let (mut p, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for (k, c) in spec.iter().enumerate().take(n / 2 + 1) {
            let f = k as f64 * fs / n as f64;
            let w = c.norm_sqr();
            p += w;
            m1 += w * f;
            m2 += w * f * f;
        }
        if p == 0.0 {
            return (fs / 4.0, fs / 4.0);
        }
        let fc = m1 / p;
        let rms = (m2 / p - fc * fc).max(0.0).sqrt();
        (fc, (2.0 * rms).max(fs / n as f64))
    }
}

pub fn resolve_waveforms(config: &SweepConfig) -> Result<Vec<ResolvedWaveform>> {
    config
        .waveforms
        .iter()
        .map(|entry| {
            let cfg = config.waveform_config(entry)?;
            let wf = match (&cfg, &entry.raw_path) {
                (Some(c), _) => waveform::generate::<f64>(c)?,
                (None, Some(path)) => {
                    let wf = waveform::io::load(path)?;
                    if (wf.sample_rate - config.scenario.sample_rate).abs() > 1e-9 * config.scenario.sample_rate {
                        return Err(Error::Config(format!(
                            "waveform {:?}: raw sample rate {} differs from scenario.sample_rate {}",
                            entry.name, wf.sample_rate, config.scenario.sample_rate
                        )));
                    }
                    match entry.energy {
                        Some(e) => wf.normalized_to(e),
                        None => wf,
                    }
                }
                (None, None) => return Err(Error::Config(format!("waveform {:?}: no source", entry.name))),
            };
            let signal = wf.interpolator(InterpolationMode::Auto);
            Ok(ResolvedWaveform {
                name: entry.name.clone(),
                config: cfg,
                waveform: wf,
                signal,
            })
        })
        .collect()
}

/// Overrides applied on top of the config file.
#[derive(Clone, Debug, Default)]
pub struct SweepOptions {
    pub workers: Option<usize>,
    pub cases: Option<Vec<u8>>,
    pub seed: Option<u64>,
}

impl SweepOptions {
    pub fn apply(&self, config: &SweepConfig) -> SweepConfig {
        let mut c = config.clone();
        if let Some(w) = self.workers {
            c.workers = Some(w);
        }
        if let Some(cases) = &self.cases {
            c.cases = cases.clone();
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        c
    }
}

/// √CRLB maps of one waveform, row-major with y outer.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveformMaps {
    pub name: String,
    pub per_case: Vec<(FusionCase, Vec<CrlbResult<f64>>)>,
}

impl WaveformMaps {
    pub fn case(&self, case: FusionCase) -> Option<&[CrlbResult<f64>]> {
        self.per_case.iter().find(|(c, _)| *c == case).map(|(_, v)| v.as_slice())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrlbGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub cases: Vec<FusionCase>,
    pub maps: Vec<WaveformMaps>,
}

impl CrlbGrid {
    pub fn waveform(&self, name: &str) -> Option<&WaveformMaps> {
        self.maps.iter().find(|m| m.name == name)
    }

    /// (x, y) of flat index `i`.
    pub fn point(&self, i: usize) -> (f64, f64) {
        let nx = self.xs.len();
        (self.xs[i % nx], self.ys[i / nx])
    }

    pub fn len(&self) -> usize {
        self.xs.len() * self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn singular(case: FusionCase) -> CrlbResult<f64> {
    CrlbResult {
        sqrt_crlb_position: None,
        sqrt_crlb_eta: None,
        case,
        condition_number: f64::INFINITY,
    }
}

/// Shared read-only state for evaluating single grid points.
pub struct PointEvaluator<'a> {
    pub template: Scenario<f64>,
    pub noise: NoiseModel<f64>,
    pub env: Environment<f64>,
    pub power_w: f64,
    pub receivers: Vec<NodeId>,
    pub cases: Vec<FusionCase>,
    pub waveforms: &'a [ResolvedWaveform],
}

impl<'a> PointEvaluator<'a> {
    pub fn new(config: &SweepConfig, waveforms: &'a [ResolvedWaveform]) -> Result<Self> {
        Ok(Self {
            template: config.scenario_template()?,
            noise: config.noise_model()?,
            env: config.environment(),
            power_w: config.transmit_power_w,
            receivers: config.receivers(),
            cases: config.fusion_cases(),
            waveforms,
        })
    }

    fn passive_fims(&self, s: &Scenario<f64>) -> Result<[FimMatrix<f64>; 2]> {
        let speed = s.target.speed_knots();
        let mut out = [FimMatrix::zeros(); 2];
        for (k, id) in NodeId::BOTH.into_iter().enumerate() {
            let range = s.geometry(id)?.range;
            // a stationary target radiates nothing
            let sigma_s2 = if speed > 0.0 {
                let snr = passive_snr_db(range, self.env.listening_frequency_khz, speed, s.target.weight_tonnes, self.env.wind_speed_knots)?;
                snr_db_to_signal_power(snr, &self.noise)
            } else {
                0.0
            };
            out[k] = fim_passive(s, id, sigma_s2, &self.noise)?;
        }
        Ok(out)
    }

    fn bistatic_fim(&self, s: &Scenario<f64>, wf: &ResolvedWaveform) -> Result<FimMatrix<f64>> {
        let amplitude = active_amplitude(s, self.power_w, &self.env, &self.noise)?;
        let mut total = FimMatrix::zeros();
        for &rx in &self.receivers {
            let model = BistaticModel::new(s, &wf.signal, amplitude, rx)?;
            total = total + fim_bistatic(s, &model, &self.noise)?;
        }
        Ok(total)
    }

    /// Results for every waveform (outer) and case (inner) at (x, y).
    /// Numerical failures become singular flags.
    pub fn evaluate(&self, x: f64, y: f64) -> Vec<Vec<CrlbResult<f64>>> {
        let s = self.template.with_target_position(Vec2::new(x, y));
        let passive = self.passive_fims(&s).ok();
        self.waveforms
            .iter()
            .map(|wf| {
                let bs = self.bistatic_fim(&s, wf).ok();
                self.cases
                    .iter()
                    .map(|&case| {
                        let parts = match case {
                            FusionCase::PassiveOnly => passive.map(|p| (p, FimMatrix::zeros())),
                            FusionCase::Fused => passive.zip(bs),
                            FusionCase::BistaticOnly => bs.map(|b| ([FimMatrix::zeros(); 2], b)),
                        };
                        match parts {
                            Some((p, b)) => {
                                let fim = fuse(case, &p[0], &p[1], &b);
                                if fim.is_finite() {
                                    crlb(&fim, case)
                                } else {
                                    singular(case)
                                }
                            }
                            None => singular(case),
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("workers: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Evaluates every grid point for every waveform and case.
pub fn run_sweep(config: &SweepConfig) -> Result<CrlbGrid> {
    config.validate()?;
    let waveforms = resolve_waveforms(config)?;
    sweep_with_waveforms(config, &waveforms)
}

pub fn sweep_with_waveforms(config: &SweepConfig, waveforms: &[ResolvedWaveform]) -> Result<CrlbGrid> {
    let eval = PointEvaluator::new(config, waveforms)?;
    let xs = config.grid.xs();
    let ys = config.grid.ys();
    let nx = xs.len();
    let points: Vec<Vec<Vec<CrlbResult<f64>>>> = with_workers(config.workers, || {
        (0..xs.len() * ys.len())
            .into_par_iter()
            .map(|i| eval.evaluate(xs[i % nx], ys[i / nx]))
            .collect()
    })?;
    let cases = eval.cases.clone();
    let maps = waveforms
        .iter()
        .enumerate()
        .map(|(w, wf)| WaveformMaps {
            name: wf.name.clone(),
            per_case: cases
                .iter()
                .enumerate()
                .map(|(c, &case)| (case, points.iter().map(|p| p[w][c]).collect()))
                .collect(),
        })
        .collect();
    Ok(CrlbGrid { xs, ys, cases, maps })
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x}"),
        _ => String::new(),
    }
}

pub fn case_csv(grid: &CrlbGrid, results: &[CrlbResult<f64>]) -> String {
    let mut out = String::with_capacity(64 * results.len());
    out.push_str(CASE_HEADER);
    out.push('\n');
    for (i, r) in results.iter().enumerate() {
        let (x, y) = grid.point(i);
        let _ = writeln!(
            out,
            "{x},{y},{},{},{}",
            fmt_opt(r.sqrt_crlb_position),
            fmt_opt(r.sqrt_crlb_eta),
            r.flag().as_str()
        );
    }
    out
}

/// Elementwise numerator/denominator of a √CRLB field; empty where either
/// is singular.
pub fn ratio_values(num: &[CrlbResult<f64>], den: &[CrlbResult<f64>], position: bool) -> Vec<Option<f64>> {
    let pick = |r: &CrlbResult<f64>| if position { r.sqrt_crlb_position } else { r.sqrt_crlb_eta };
    num.iter()
        .zip(den)
        .map(|(a, b)| match (pick(a), pick(b)) {
            (Some(a), Some(b)) if b > 0.0 && (a / b).is_finite() => Some(a / b),
            _ => None,
        })
        .collect()
}

pub fn ratio_csv(grid: &CrlbGrid, ratios: &[Option<f64>]) -> String {
    let mut out = String::with_capacity(48 * ratios.len());
    out.push_str(RATIO_HEADER);
    out.push('\n');
    for (i, r) in ratios.iter().enumerate() {
        let (x, y) = grid.point(i);
        let flag = if r.is_some() { CrlbFlag::Ok } else { CrlbFlag::Singular };
        let _ = writeln!(out, "{x},{y},{},{}", fmt_opt(*r), flag.as_str());
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct RunMetadata {
    pub crate_name: &'static str,
    pub crate_version: &'static str,
    pub seed: u64,
    pub workers: Option<usize>,
    pub wall_time_s: f64,
    pub grid_points: usize,
    pub files: Vec<String>,
    pub config: SweepConfig,
}

/// Writes `case{c}_{name}.csv`, the case-3/case-2 ratio maps and
/// `run_metadata.json` into `out_dir`; returns the file names.
pub fn write_outputs(grid: &CrlbGrid, out_dir: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    for maps in &grid.maps {
        for (case, results) in &maps.per_case {
            let name = format!("case{}_{}.csv", case.id(), maps.name);
            fs::write(out_dir.join(&name), case_csv(grid, results))?;
            files.push(name);
        }
        if let (Some(c3), Some(c2)) = (maps.case(FusionCase::BistaticOnly), maps.case(FusionCase::Fused)) {
            for (label, position) in [("p", true), ("eta", false)] {
                let name = format!("ratio_{label}_case3_case2_{}.csv", maps.name);
                fs::write(out_dir.join(&name), ratio_csv(grid, &ratio_values(c3, c2, position)))?;
                files.push(name);
            }
        }
    }
    Ok(files)
}

/// [`run_sweep`] plus all files, including the metadata record.
pub fn run_sweep_to_dir(config: &SweepConfig, out_dir: &Path) -> Result<CrlbGrid> {
    let started = Instant::now();
    let grid = run_sweep(config)?;
    let mut files = write_outputs(&grid, out_dir)?;
    files.push("run_metadata.json".into());
    let meta = RunMetadata {
        crate_name: env!("CARGO_PKG_NAME"),
        crate_version: env!("CARGO_PKG_VERSION"),
        seed: config.seed,
        workers: config.workers,
        wall_time_s: started.elapsed().as_secs_f64(),
        grid_points: grid.len(),
        files,
        config: config.clone(),
    };
    fs::write(out_dir.join("run_metadata.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(grid)
}

/// Median of the finite entries; `None` if there are none.
pub fn median(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub name: String,
    pub median_sqrt_crlb_eta: Option<f64>,
    pub max_sqrt_crlb_eta: Option<f64>,
    pub median_sqrt_crlb_p: Option<f64>,
    pub duration_s: f64,
    pub mainlobe: MainlobeMetrics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonTable {
    /// Case the √CRLB statistics come from.
    pub case: FusionCase,
    pub rows: Vec<ComparisonRow>,
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4e}"));
        writeln!(f, "waveform statistics over the grid ({})", self.case)?;
        writeln!(
            f,
            "{:<12} {:>12} {:>12} {:>12} {:>10} {:>12} {:>12} {:>10}",
            "name", "med_eta", "max_eta", "med_p_m", "dur_s", "dop_3dB", "delay_3dB_s", "sidelobe"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<12} {:>12} {:>12} {:>12} {:>10.4} {:>12.4e} {:>12.4e} {:>10.2}",
                r.name,
                o(r.median_sqrt_crlb_eta),
                o(r.max_sqrt_crlb_eta),
                o(r.median_sqrt_crlb_p),
                r.duration_s,
                r.mainlobe.doppler_width_3db,
                r.mainlobe.delay_width_3db,
                r.mainlobe.delay_sidelobe_db
            )?;
        }
        Ok(())
    }
}

/// Per-waveform Doppler accuracy summary (case 2) and WBAF mainlobe metrics.
pub fn compare_waveforms(config: &SweepConfig) -> Result<ComparisonTable> {
    let mut cfg = config.clone();
    cfg.cases = vec![FusionCase::Fused.id()];
    cfg.validate()?;
    if cfg.waveforms.len() < 2 {
        return Err(Error::Config("compare needs at least 2 waveforms".into()));
    }
    let waveforms = resolve_waveforms(&cfg)?;
    let grid = sweep_with_waveforms(&cfg, &waveforms)?;
    let rows = waveforms
        .iter()
        .zip(&grid.maps)
        .map(|(wf, maps)| {
            let results = maps.case(FusionCase::Fused).unwrap_or(&[]);
            let etas: Vec<f64> = results.iter().filter_map(|r| r.sqrt_crlb_eta).collect();
            let (fc, bw) = wf.band();
            ComparisonRow {
                name: wf.name.clone(),
                median_sqrt_crlb_eta: median(etas.iter().copied()),
                max_sqrt_crlb_eta: etas.iter().copied().reduce(f64::max),
                median_sqrt_crlb_p: median(results.iter().filter_map(|r| r.sqrt_crlb_position)),
                duration_s: wf.waveform.duration(),
                mainlobe: mainlobe_metrics(&wf.signal, &wf.waveform.samples, fc, bw),
            }
        })
        .collect();
    Ok(ComparisonTable {
        case: FusionCase::Fused,
        rows,
    })
}

/// Writes `wbaf_{name}.csv` (`delay_s,eta,chi_abs,chi_norm`), the two
/// marginal cuts and the mainlobe metrics for each waveform.
pub fn run_wbaf_to_dir(config: &SweepConfig, out_dir: &Path) -> Result<Vec<String>> {
    config.validate()?;
    let grid_cfg = config.wbaf.unwrap_or_default();
    let waveforms = resolve_waveforms(config)?;
    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    for wf in &waveforms {
        let (fc, bw) = wf.band();
        let axis = |center: f64, half: f64, n: usize| -> Vec<f64> {
            if n == 1 {
                return vec![center];
            }
            (0..n).map(|i| center - half + 2.0 * half * i as f64 / (n - 1) as f64).collect()
        };
        let delays = axis(0.0, grid_cfg.delay_span_bandwidths / bw, grid_cfg.num_delays);
        let etas = axis(1.0, grid_cfg.eta_span_resolutions / (fc * wf.waveform.duration()), grid_cfg.num_etas);
        let res = with_workers(config.workers, || wbaf(&wf.signal, &wf.waveform.samples, &delays, &etas))?;
        let norm = res.normalized();
        let mut csv = String::from("delay_s,eta,chi_abs,chi_norm\n");
        for (r, eta) in etas.iter().enumerate() {
            for (c, tau) in delays.iter().enumerate() {
                let _ = writeln!(csv, "{tau},{eta},{},{}", res.magnitude[(r, c)], norm[(r, c)]);
            }
        }
        let name = format!("wbaf_{}.csv", wf.name);
        fs::write(out_dir.join(&name), csv)?;
        files.push(name);

        let mut cut = String::from("delay_s,chi_abs\n");
        for (tau, v) in delays.iter().zip(&res.delay_cut) {
            let _ = writeln!(cut, "{tau},{v}");
        }
        let name = format!("wbaf_{}_delay_cut.csv", wf.name);
        fs::write(out_dir.join(&name), cut)?;
        files.push(name);

        let mut cut = String::from("eta,chi_abs\n");
        for (eta, v) in etas.iter().zip(&res.doppler_cut) {
            let _ = writeln!(cut, "{eta},{v}");
        }
        let name = format!("wbaf_{}_doppler_cut.csv", wf.name);
        fs::write(out_dir.join(&name), cut)?;
        files.push(name);

        let m = mainlobe_metrics(&wf.signal, &wf.waveform.samples, fc, bw);
        let json = serde_json::json!({
            "name": wf.name,
            "peak": res.peak,
            "doppler_width_3db": m.doppler_width_3db,
            "delay_width_3db_s": m.delay_width_3db,
            "delay_sidelobe_db": m.delay_sidelobe_db,
        });
        let name = format!("wbaf_{}_metrics.json", wf.name);
        fs::write(out_dir.join(&name), serde_json::to_string_pretty(&json)?)?;
        files.push(name);
    }
    Ok(files)
}

/// Default desk-scale configuration: nodes at (±1000, 0), 21×21 grid over
/// ±3 km, both waveform families at E_s = 40.
pub fn default_config() -> SweepConfig {
    let node = |x: f64| NodeConfig {
        position: [x, 0.0],
        num_sensors: default_num_sensors(),
        element_spacing: default_spacing(),
        steering_axis: default_axis(),
    };
    SweepConfig {
        scenario: ScenarioConfig {
            nodes: vec![node(-1000.0), node(1000.0)],
            target: TargetConfig {
                position: [0.0, 1000.0],
                speed_knots: 9.72,
                heading_deg: default_heading(),
                weight_tonnes: 1.0,
            },
            sound_speed: default_sound_speed(),
            sample_rate: default_sample_rate(),
            passive: PassiveConfig::default(),
        },
        noise: NoiseConfig::default(),
        environment: EnvironmentConfig::default(),
        transmit_power_w: default_power(),
        bistatic_receivers: default_receivers(),
        waveforms: vec![
            WaveformEntry {
                name: "spfsk".into(),
                preset: Some(WaveformFamily::SpfskLike),
                ..Default::default()
            },
            WaveformEntry {
                name: "pcmfsk".into(),
                preset: Some(WaveformFamily::PcMfskLike),
                ..Default::default()
            },
        ],
        grid: default_grid(),
        cases: default_cases(),
        seed: 1,
        workers: None,
        wbaf: None,
        mc: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> SweepConfig {
        let mut c = default_config();
        c.waveforms = vec![WaveformEntry {
            name: "short".into(),
            config: Some(WaveformConfig {
                frame_length: 16,
                ..WaveformConfig::pcmfsk_like(c.scenario.sample_rate)
            }),
            ..Default::default()
        }];
        c.scenario.passive.num_samples = 16;
        c.grid = GridSpec {
            x_min: -500.0,
            x_max: 500.0,
            y_min: 200.0,
            y_max: 800.0,
            nx: 3,
            ny: 2,
        };
        c
    }

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let c = default_config();
        c.validate().unwrap();
        let back = SweepConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn validation_lists_every_offending_field() {
        let mut c = default_config();
        c.noise.ar_coefficient = 1.5;
        c.grid.nx = 0;
        c.cases = vec![4];
        c.scenario.passive.num_samples = 7;
        let Err(Error::Config(msg)) = c.validate() else {
            panic!("expected config error")
        };
        for field in ["noise.ar_coefficient", "grid", "cases", "scenario.passive.num_samples"] {
            assert!(msg.contains(field), "{msg}");
        }
    }

    #[test]
    fn grid_axes() {
        let g = GridSpec {
            x_min: -1.0,
            x_max: 1.0,
            y_min: 5.0,
            y_max: 5.0,
            nx: 5,
            ny: 1,
        };
        assert_eq!(g.xs(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(g.ys(), vec![5.0]);
    }

    #[test]
    fn small_sweep_shapes_and_csv() {
        let c = small_config();
        let grid = run_sweep(&c).unwrap();
        assert_eq!(grid.len(), 6);
        let maps = grid.waveform("short").unwrap();
        for (_, results) in &maps.per_case {
            assert_eq!(results.len(), 6);
        }
        let csv = case_csv(&grid, maps.case(FusionCase::Fused).unwrap());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CASE_HEADER);
        assert_eq!(lines.len(), 7);
        assert!(lines[1].starts_with("-500,200,"), "{}", lines[1]);
        assert!(!csv.contains("NaN") && !csv.contains("inf"));
    }

    #[test]
    fn median_of_finite_values() {
        assert_eq!(median([3.0, 1.0, f64::NAN, 2.0]), Some(2.0));
        assert_eq!(median([4.0, 1.0]), Some(2.5));
        assert_eq!(median(std::iter::empty()), None);
    }
}
