//! Cramér-Rao lower bounds for localizing a moving underwater target with a
//! two-node bistatic network of uniform linear arrays, where the sensing
//! signal is the network's own FSK communication waveform.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar to `f64`, which is what the sweep and the
//! CLI use.

// `!(x > 0)` is deliberate throughout: NaN must take the error branch.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bistatic;
pub mod crlb;
pub mod error;
pub mod linalg;
pub mod mc;
pub mod noise;
pub mod passive;
pub mod scalar;
pub mod scenario;
pub mod sonar;
pub mod sweep;
pub mod waveform;

pub use bistatic::{active_amplitude, bistatic_mean, fim_bistatic, BistaticModel, BistaticWindow};
pub use crlb::{crlb, fuse, CrlbFlag, CrlbResult, FimMatrix, FusionCase};
pub use error::{Error, Result};
pub use mc::{mc_check_from_config, mc_crlb_check, simulate_measurements, McInstance, McReport};
pub use noise::NoiseModel;
pub use passive::{build_delay_operator, fim_passive, passive_covariance};
pub use scalar::Real;
pub use scenario::{NodeId, Position2D, Scenario, SensorNode, TargetState, Vec2};
pub use sonar::Environment;
pub use sweep::{compare_waveforms, run_sweep, run_sweep_to_dir, CrlbGrid, SweepConfig};
pub use waveform::{BandlimitedSignal, InterpolationMode, SampledWaveform, WaveformConfig, WaveformFamily};

pub type Scenario64 = Scenario<f64>;
pub type SensorNode64 = SensorNode<f64>;
pub type TargetState64 = TargetState<f64>;
pub type Vec2f64 = Vec2<f64>;
pub type NoiseModel64 = NoiseModel<f64>;
pub type Environment64 = Environment<f64>;
pub type FimMatrix64 = FimMatrix<f64>;
pub type CrlbResult64 = CrlbResult<f64>;
pub type SampledWaveform64 = SampledWaveform<f64>;
pub type BandlimitedSignal64 = BandlimitedSignal<f64>;
