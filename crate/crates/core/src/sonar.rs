//! Passive and active sonar equations. All levels in dB; `log` is log₁₀.
//! Frequencies in kHz, speeds in knots, ranges in meters, weight in tonnes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::scalar::Real;

/// Target reflective strength, dB.
pub const TARGET_STRENGTH_DB: f64 = -16.0;
/// Active source level at 1 W, dB re 1 µPa² m².
pub const ACTIVE_SOURCE_LEVEL_1W_DB: f64 = 171.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment<T> {
    pub wind_speed_knots: T,
    pub listening_frequency_khz: T,
}

impl<T: Real> Environment<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.wind_speed_knots >= T::zero()) {
            return Err(Error::Config("wind_speed_knots must be >= 0".into()));
        }
        if !(self.listening_frequency_khz > T::zero()) {
            return Err(Error::Config("listening_frequency_khz must be > 0".into()));
        }
        Ok(())
    }
}

fn positive<T: Real>(name: &str, v: T) -> Result<T> {
    if v > T::zero() && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain(format!("{name} must be positive and finite, got {v}")))
    }
}

/// SL = 60 log v + 9 log W − 20 log f + 35.
pub fn passive_source_level_db<T: Real>(speed_knots: T, weight_tonnes: T, frequency_khz: T) -> Result<T> {
    let v = positive("speed", speed_knots)?;
    let w = positive("weight", weight_tonnes)?;
    let f = positive("frequency", frequency_khz)?;
    Ok(T::lit(60.0) * v.log10() + T::lit(9.0) * w.log10() - T::lit(20.0) * f.log10() + T::lit(35.0))
}

/// TL = 17 log r.
pub fn transmission_loss_db<T: Real>(range_m: T) -> Result<T> {
    Ok(T::lit(17.0) * positive("range", range_m)?.log10())
}

/// NL = 35 + 24 log(1 + w_s) − 17 log f.
pub fn noise_level_db<T: Real>(wind_speed_knots: T, frequency_khz: T) -> Result<T> {
    if !(wind_speed_knots >= T::zero()) {
        return Err(Error::Domain(format!("wind speed must be >= 0, got {wind_speed_knots}")));
    }
    let f = positive("frequency", frequency_khz)?;
    Ok(T::lit(35.0) + T::lit(24.0) * (T::one() + wind_speed_knots).log10() - T::lit(17.0) * f.log10())
}

/// SL_active = 171 + 10 log P.
pub fn active_source_level_db<T: Real>(power_watt: T) -> Result<T> {
    Ok(T::lit(ACTIVE_SOURCE_LEVEL_1W_DB) + T::lit(10.0) * positive("power", power_watt)?.log10())
}

/// SNR = SL(v, W, f) − TL(r) − NL(w_s, f).
pub fn passive_snr_db<T: Real>(
    range_m: T,
    frequency_khz: T,
    speed_knots: T,
    weight_tonnes: T,
    wind_speed_knots: T,
) -> Result<T> {
    Ok(passive_source_level_db(speed_knots, weight_tonnes, frequency_khz)?
        - transmission_loss_db(range_m)?
        - noise_level_db(wind_speed_knots, frequency_khz)?)
}

/// SNR = SL_active + TS − TL(r₁) − TL(r₂) − NL.
pub fn active_snr_db<T: Real>(
    power_watt: T,
    r1_m: T,
    r2_m: T,
    frequency_khz: T,
    wind_speed_knots: T,
) -> Result<T> {
    Ok(active_source_level_db(power_watt)? + T::lit(TARGET_STRENGTH_DB)
        - transmission_loss_db(r1_m)?
        - transmission_loss_db(r2_m)?
        - noise_level_db(wind_speed_knots, frequency_khz)?)
}

/// Linear signal power giving `snr_db` against the AR(1) per-sample noise
/// variance: `10^(snr/10) / (1 − a²)`.
pub fn snr_db_to_signal_power<T: Real>(snr_db: T, noise: &NoiseModel<T>) -> T {
    T::lit(10.0).powf(snr_db / T::lit(10.0)) * noise.lag0_variance()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn passive_spot_values() {
        let sl = passive_source_level_db(9.72f64, 1.0, 6.0).unwrap();
        assert!((sl - 78.695).abs() < 0.01, "{sl}");
        let nl = noise_level_db(6.0f64, 6.0).unwrap();
        assert!((nl - 42.055).abs() < 0.01, "{nl}");
        assert!((transmission_loss_db(1000.0f64).unwrap() - 51.0).abs() < 1e-12);
        let snr = passive_snr_db(1000.0f64, 6.0, 9.72, 1.0, 6.0).unwrap();
        assert!((snr - (-14.36)).abs() < 0.01, "{snr}");
    }

    #[test]
    fn active_spot_values() {
        assert_eq!(active_source_level_db(1.0).unwrap(), 171.0);
        assert!((active_source_level_db(10.0f64).unwrap() - 181.0).abs() < 1e-12);
        let snr = active_snr_db(1.0f64, 1000.0, 1000.0, 6.0, 6.0).unwrap();
        assert!((snr - 10.94).abs() < 0.01, "{snr}");
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(transmission_loss_db(0.0), Err(Error::Domain(_))));
        assert!(matches!(passive_snr_db(1000.0, -6.0, 9.72, 1.0, 6.0), Err(Error::Domain(_))));
        assert!(matches!(active_snr_db(0.0, 1.0, 1.0, 6.0, 6.0), Err(Error::Domain(_))));
        assert!(noise_level_db(-1.0, 6.0).is_err());
    }

    #[test]
    fn snr_to_power() {
        let white = NoiseModel::new(0.0f64, 4).unwrap();
        assert!((snr_db_to_signal_power(0.0, &white) - 1.0).abs() < 1e-15);
        assert!((snr_db_to_signal_power(10.0, &white) - 10.0).abs() < 1e-12);
        let colored = NoiseModel::new(0.5f64, 4).unwrap();
        assert!((snr_db_to_signal_power(0.0, &colored) - 4.0 / 3.0).abs() < 1e-15);
    }
}
