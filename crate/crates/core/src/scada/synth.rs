//! Synthetic SCADA generator.
//!
//! Wind is the magnitude of a 2-D vector: a seasonally scaled prevailing
//! component plus two independent AR(1) Gaussian components, which yields a
//! Rice-distributed, temporally correlated speed and a consistent direction.
//! Air temperature is an annual plus a diurnal cosine with AR(1) noise.
//!
//! Each component temperature follows the ground-truth relation
//!
//! ```text
//! T = base + power · g(v) + air · T_air + ε
//! ```
//!
//! where `g` is the normalized power curve (0 below cut-in, cubic ramp from
//! cut-in to rated, 1 up to cut-out, 0 beyond) and `ε` is AR(1) noise with a
//! short correlation time. The three targets share inputs and so are correlated.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ScadaRecord, ScadaSeries, STEPS_PER_DAY, STEPS_PER_MONTH};
use crate::error::{Error, Result};
use crate::seeds;

/// Upper clamp for generated wind speed, m/s.
const MAX_WIND_SPEED: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerCurve {
    pub cut_in: f64,
    pub rated: f64,
    pub cut_out: f64,
}

impl Default for PowerCurve {
    fn default() -> Self {
        Self {
            cut_in: 3.0,
            rated: 13.0,
            cut_out: 25.0,
        }
    }
}

/// Normalized power-curve shape `g(v)` in [0, 1].
pub fn power_curve(v: f64, pc: &PowerCurve) -> f64 {
    if v < pc.cut_in || v > pc.cut_out {
        0.0
    } else if v < pc.rated {
        ((v - pc.cut_in) / (pc.rated - pc.cut_in)).powi(3)
    } else {
        1.0
    }
}

/// Coefficients of one target's ground-truth relation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetCoefficients {
    /// °C
    pub base: f64,
    /// °C at full load
    pub power: f64,
    /// °C per °C of air temperature
    pub air: f64,
}

/// Noise-free component temperature for wind speed `v` and air temperature `t_air`.
pub fn ground_truth(coef: &TargetCoefficients, pc: &PowerCurve, v: f64, t_air: f64) -> f64 {
    coef.base + coef.power * power_curve(v, pc) + coef.air * t_air
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_months: usize,
    pub seed: u64,
    /// Day of year (0 = 1 January) of the first record.
    pub start_day_of_year: f64,
    pub power_curve: PowerCurve,

    /// Mean wind vector (east, north), m/s.
    pub prevailing_wind: [f64; 2],
    /// Stationary standard deviation of each fluctuating wind component, m/s.
    pub wind_sd: f64,
    /// e-folding time of wind fluctuations, in steps.
    pub wind_correlation_steps: f64,
    /// Relative winter strengthening of the prevailing wind.
    pub wind_seasonal_amplitude: f64,

    pub air_temp_mean: f64,
    pub air_temp_seasonal_amplitude: f64,
    pub air_temp_diurnal_amplitude: f64,
    pub air_temp_noise_sd: f64,
    pub air_temp_correlation_steps: f64,

    pub gear: TargetCoefficients,
    pub oil: TargetCoefficients,
    pub transformer: TargetCoefficients,
    /// Standard deviation of the component-temperature noise ε, °C.
    pub target_noise_sd: f64,
    pub target_noise_correlation_steps: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_months: 14,
            seed: 0,
            start_day_of_year: 0.0,
            power_curve: PowerCurve::default(),
            prevailing_wind: [3.0, 2.0],
            wind_sd: 4.0,
            wind_correlation_steps: 36.0,
            wind_seasonal_amplitude: 0.2,
            air_temp_mean: 9.0,
            air_temp_seasonal_amplitude: 9.0,
            air_temp_diurnal_amplitude: 3.0,
            air_temp_noise_sd: 1.5,
            air_temp_correlation_steps: 72.0,
            gear: TargetCoefficients {
                base: 35.0,
                power: 30.0,
                air: 0.5,
            },
            oil: TargetCoefficients {
                base: 30.0,
                power: 15.0,
                air: 0.7,
            },
            transformer: TargetCoefficients {
                base: 40.0,
                power: 45.0,
                air: 0.4,
            },
            target_noise_sd: 0.8,
            target_noise_correlation_steps: 3.0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_months < 1 {
            return Err(Error::config("n_months", "must be at least 1"));
        }
        let pc = &self.power_curve;
        if !(pc.cut_in >= 0.0 && pc.cut_in < pc.rated && pc.rated < pc.cut_out) {
            return Err(Error::config(
                "power_curve",
                "requires 0 <= cut_in < rated < cut_out",
            ));
        }
        let non_negative = [
            ("wind_sd", self.wind_sd),
            ("wind_seasonal_amplitude", self.wind_seasonal_amplitude),
            ("air_temp_noise_sd", self.air_temp_noise_sd),
            ("target_noise_sd", self.target_noise_sd),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be finite and non-negative"));
            }
        }
        let positive = [
            ("wind_correlation_steps", self.wind_correlation_steps),
            ("air_temp_correlation_steps", self.air_temp_correlation_steps),
            (
                "target_noise_correlation_steps",
                self.target_noise_correlation_steps,
            ),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be finite and positive"));
            }
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        self.n_months * STEPS_PER_MONTH
    }
}

/// Stationary AR(1) Gaussian process with a given standard deviation and e-folding time.
struct Ar1 {
    phi: f64,
    innovation_sd: f64,
    state: f64,
    rng: ChaCha8Rng,
}

impl Ar1 {
    fn new(sd: f64, correlation_steps: f64, seed: u64) -> Self {
        let phi = (-1.0 / correlation_steps).exp();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: f64 = StandardNormal.sample(&mut rng);
        Self {
            phi,
            innovation_sd: sd * (1.0 - phi * phi).sqrt(),
            state: sd * z,
            rng,
        }
    }

    /// Returns the current value, then advances.
    fn next(&mut self) -> f64 {
        let out = self.state;
        let z: f64 = StandardNormal.sample(&mut self.rng);
        self.state = self.phi * self.state + self.innovation_sd * z;
        out
    }
}

/// Generates `n_months` of ten-minute records starting at step 0.
pub fn synthesize_scada(config: &SyntheticConfig) -> Result<ScadaSeries> {
    config.validate()?;
    let stream = |label: &str| seeds::derive(config.seed, label, 0);
    let mut wind_e = Ar1::new(config.wind_sd, config.wind_correlation_steps, stream("synth/wind-east"));
    let mut wind_n = Ar1::new(config.wind_sd, config.wind_correlation_steps, stream("synth/wind-north"));
    let mut air = Ar1::new(
        config.air_temp_noise_sd,
        config.air_temp_correlation_steps,
        stream("synth/air-temp"),
    );
    let mut eps: Vec<Ar1> = ["synth/gear", "synth/oil", "synth/transformer"]
        .iter()
        .map(|l| Ar1::new(config.target_noise_sd, config.target_noise_correlation_steps, stream(l)))
        .collect();
    let pc = &config.power_curve;

    let records = (0..config.n_steps())
        .map(|step| {
            let day = config.start_day_of_year + step as f64 / STEPS_PER_DAY as f64;
            // coldest and windiest around 15 January
            let season = (2.0 * PI * (day - 15.0) / 365.0).cos();
            let hour = (step % STEPS_PER_DAY) as f64 / 6.0;

            let boost = 1.0 + config.wind_seasonal_amplitude * season;
            let east = config.prevailing_wind[0] * boost + wind_e.next();
            let north = config.prevailing_wind[1] * boost + wind_n.next();
            let wind_speed = east.hypot(north).min(MAX_WIND_SPEED);
            let mut wind_dir = east.atan2(north).to_degrees().rem_euclid(360.0);
            if wind_dir >= 360.0 {
                wind_dir = 0.0;
            }

            let air_temp = config.air_temp_mean - config.air_temp_seasonal_amplitude * season
                + config.air_temp_diurnal_amplitude * (2.0 * PI * (hour - 15.0) / 24.0).cos()
                + air.next();

            let gear = ground_truth(&config.gear, pc, wind_speed, air_temp) + eps[0].next();
            let oil = ground_truth(&config.oil, pc, wind_speed, air_temp) + eps[1].next();
            let tr = ground_truth(&config.transformer, pc, wind_speed, air_temp) + eps[2].next();

            ScadaRecord {
                step,
                wind_speed,
                wind_dir,
                air_temp,
                gear_bearing_temp: gear,
                hydraulic_oil_temp: oil,
                transformer_winding_temp: tr,
            }
        })
        .collect();
    ScadaSeries::new(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scada::Channel;

    fn small(seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            n_months: 1,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = synthesize_scada(&small(3)).unwrap();
        let b = synthesize_scada(&small(3)).unwrap();
        assert_eq!(a, b);
        let c = synthesize_scada(&small(4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn ranges_and_length() {
        let s = synthesize_scada(&small(1)).unwrap();
        assert_eq!(s.len(), 4320);
        assert!(s.records().iter().all(|r| (0.0..=30.0).contains(&r.wind_speed)));
        assert!(s.records().iter().all(|r| (0.0..360.0).contains(&r.wind_dir)));
    }

    #[test]
    fn zero_noise_matches_ground_truth() {
        let cfg = SyntheticConfig {
            target_noise_sd: 0.0,
            ..small(9)
        };
        let s = synthesize_scada(&cfg).unwrap();
        for r in s.records() {
            assert_eq!(
                r.gear_bearing_temp,
                ground_truth(&cfg.gear, &cfg.power_curve, r.wind_speed, r.air_temp)
            );
            assert_eq!(
                r.transformer_winding_temp,
                ground_truth(&cfg.transformer, &cfg.power_curve, r.wind_speed, r.air_temp)
            );
        }
    }

    #[test]
    fn below_cut_in_has_no_load_term() {
        let cfg = SyntheticConfig::default();
        assert_eq!(power_curve(2.0, &cfg.power_curve), 0.0);
        assert_eq!(
            ground_truth(&cfg.gear, &cfg.power_curve, 2.0, 10.0),
            cfg.gear.base + cfg.gear.air * 10.0
        );
    }

    #[test]
    fn power_curve_shape() {
        let pc = PowerCurve::default();
        assert_eq!(power_curve(3.0, &pc), 0.0);
        assert_eq!(power_curve(8.0, &pc), 0.125);
        assert_eq!(power_curve(13.0, &pc), 1.0);
        assert_eq!(power_curve(25.0, &pc), 1.0);
        assert_eq!(power_curve(25.5, &pc), 0.0);
    }

    #[test]
    fn targets_are_correlated() {
        let s = synthesize_scada(&small(2)).unwrap();
        let g = s.channel(Channel::GearTemp);
        let t = s.channel(Channel::TrTemp);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (mg, mt) = (mean(&g), mean(&t));
        let cov: f64 = g.iter().zip(&t).map(|(a, b)| (a - mg) * (b - mt)).sum();
        let vg: f64 = g.iter().map(|a| (a - mg).powi(2)).sum();
        let vt: f64 = t.iter().map(|b| (b - mt).powi(2)).sum();
        assert!(cov / (vg * vt).sqrt() > 0.8);
    }

    #[test]
    fn invalid_configs() {
        assert!(synthesize_scada(&SyntheticConfig { n_months: 0, ..Default::default() }).is_err());
        let bad_pc = SyntheticConfig {
            power_curve: PowerCurve { cut_in: 5.0, rated: 4.0, cut_out: 25.0 },
            ..small(0)
        };
        assert!(synthesize_scada(&bad_pc).is_err());
    }
}
