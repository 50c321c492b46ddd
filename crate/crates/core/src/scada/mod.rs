//! SCADA record model: ten-minute multichannel turbine records, CSV ingestion,
//! min-max normalization, period splitting and a synthetic data generator.

mod csv_io;
mod normalize;
mod split;
mod synth;

pub use csv_io::{load_scada_csv, read_scada_csv, write_scada_csv, CSV_HEADER};
pub use normalize::{apply_normalization, fit_normalization, invert_normalization, ChannelRange, NormalizationParams};
pub use split::{split_series, SplitRanges, StepRange};
pub use synth::{ground_truth, power_curve, synthesize_scada, PowerCurve, SyntheticConfig, TargetCoefficients};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minutes between consecutive records.
pub const STEP_MINUTES: u32 = 10;
/// Ten-minute steps in one day.
pub const STEPS_PER_DAY: usize = 144;
/// Ten-minute steps in one 30-day month.
pub const STEPS_PER_MONTH: usize = 30 * STEPS_PER_DAY;

/// A value channel of a [`ScadaRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    WindSpeed,
    WindDir,
    AirTemp,
    GearTemp,
    OilTemp,
    TrTemp,
}

impl Channel {
    pub const ALL: [Channel; 6] = [
        Channel::WindSpeed,
        Channel::WindDir,
        Channel::AirTemp,
        Channel::GearTemp,
        Channel::OilTemp,
        Channel::TrTemp,
    ];

    /// Model inputs, in feature order.
    pub const INPUTS: [Channel; 3] = [Channel::WindSpeed, Channel::WindDir, Channel::AirTemp];

    /// Model targets, in output order. The gear bearing temperature is always first.
    pub const TARGETS: [Channel; 3] = [Channel::GearTemp, Channel::OilTemp, Channel::TrTemp];

    /// Column name used in the CSV interchange format.
    pub fn column(self) -> &'static str {
        match self {
            Channel::WindSpeed => "wind_speed",
            Channel::WindDir => "wind_dir",
            Channel::AirTemp => "air_temp",
            Channel::GearTemp => "gear_temp",
            Channel::OilTemp => "oil_temp",
            Channel::TrTemp => "tr_temp",
        }
    }
}

/// One ten-minute SCADA record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScadaRecord {
    pub step: usize,
    /// m/s
    pub wind_speed: f64,
    /// degrees in [0, 360)
    pub wind_dir: f64,
    /// °C
    pub air_temp: f64,
    pub gear_bearing_temp: f64,
    pub hydraulic_oil_temp: f64,
    pub transformer_winding_temp: f64,
}

impl ScadaRecord {
    pub fn get(&self, channel: Channel) -> f64 {
        match channel {
            Channel::WindSpeed => self.wind_speed,
            Channel::WindDir => self.wind_dir,
            Channel::AirTemp => self.air_temp,
            Channel::GearTemp => self.gear_bearing_temp,
            Channel::OilTemp => self.hydraulic_oil_temp,
            Channel::TrTemp => self.transformer_winding_temp,
        }
    }

    pub fn set(&mut self, channel: Channel, value: f64) {
        let slot = match channel {
            Channel::WindSpeed => &mut self.wind_speed,
            Channel::WindDir => &mut self.wind_dir,
            Channel::AirTemp => &mut self.air_temp,
            Channel::GearTemp => &mut self.gear_bearing_temp,
            Channel::OilTemp => &mut self.hydraulic_oil_temp,
            Channel::TrTemp => &mut self.transformer_winding_temp,
        };
        *slot = value;
    }

    pub fn inputs(&self) -> [f64; 3] {
        [self.wind_speed, self.wind_dir, self.air_temp]
    }

    pub fn targets(&self) -> [f64; 3] {
        [
            self.gear_bearing_temp,
            self.hydraulic_oil_temp,
            self.transformer_winding_temp,
        ]
    }

    /// Physical-domain checks; `row` is only used for error context.
    fn validate_raw(&self, row: usize) -> Result<()> {
        for ch in Channel::ALL {
            let v = self.get(ch);
            if !v.is_finite() {
                return Err(Error::Domain {
                    row,
                    field: ch.column(),
                    value: v,
                });
            }
        }
        if self.wind_speed < 0.0 {
            return Err(Error::Domain {
                row,
                field: "wind_speed",
                value: self.wind_speed,
            });
        }
        if !(0.0..360.0).contains(&self.wind_dir) {
            return Err(Error::Domain {
                row,
                field: "wind_dir",
                value: self.wind_dir,
            });
        }
        Ok(())
    }
}

/// A non-empty, uniformly spaced sequence of ten-minute records.
#[derive(Debug, Clone, PartialEq)]
pub struct ScadaSeries {
    records: Vec<ScadaRecord>,
    normalized: bool,
}

impl ScadaSeries {
    /// Builds a series in physical units, checking spacing and channel domains.
    pub fn new(records: Vec<ScadaRecord>) -> Result<Self> {
        Self::checked(records, false)
    }

    /// Builds a series whose channels are already normalized (only spacing and
    /// finiteness are checked).
    pub fn new_normalized(records: Vec<ScadaRecord>) -> Result<Self> {
        Self::checked(records, true)
    }

    fn checked(records: Vec<ScadaRecord>, normalized: bool) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidArgument("SCADA series must not be empty".into()));
        }
        for (i, rec) in records.iter().enumerate() {
            let row = i + 1;
            if i > 0 {
                let expected = records[i - 1].step + 1;
                if rec.step != expected {
                    return Err(Error::Spacing {
                        row,
                        expected: expected as i64,
                        found: rec.step as i64,
                    });
                }
            }
            if normalized {
                for ch in Channel::ALL {
                    if !rec.get(ch).is_finite() {
                        return Err(Error::Domain {
                            row,
                            field: ch.column(),
                            value: rec.get(ch),
                        });
                    }
                }
            } else {
                rec.validate_raw(row)?;
            }
        }
        Ok(Self {
            records,
            normalized,
        })
    }

    /// Internal constructor for transformations that preserve the invariants.
    pub(crate) fn from_parts(records: Vec<ScadaRecord>, normalized: bool) -> Self {
        debug_assert!(!records.is_empty());
        Self {
            records,
            normalized,
        }
    }

    pub fn records(&self) -> &[ScadaRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn step_minutes(&self) -> u32 {
        STEP_MINUTES
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn first_step(&self) -> usize {
        self.records[0].step
    }

    /// One past the last step.
    pub fn end_step(&self) -> usize {
        self.first_step() + self.records.len()
    }

    /// Values of one channel, in step order.
    pub fn channel(&self, channel: Channel) -> Vec<f64> {
        self.records.iter().map(|r| r.get(channel)).collect()
    }

    /// Model feature vectors (wind speed, wind direction, air temperature).
    pub fn features(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.inputs().to_vec()).collect()
    }

    /// Record at an absolute step index, if inside the series.
    pub fn at_step(&self, step: usize) -> Option<&ScadaRecord> {
        step.checked_sub(self.first_step())
            .and_then(|i| self.records.get(i))
    }

    pub fn into_records(self) -> Vec<ScadaRecord> {
        self.records
    }
}
