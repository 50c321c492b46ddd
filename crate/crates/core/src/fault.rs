//! Synthetic fault injection: linear temperature trends overlaid on the
//! normalized gear bearing temperature, and the slope × onset experiment grid.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scada::{Channel, ScadaSeries, STEPS_PER_DAY, STEPS_PER_MONTH};
use crate::seeds;

/// Normalized temperature units per day for slope index 1.
pub const DEFAULT_UNIT_SCALE: f64 = 0.05;
pub const MIN_SLOPE: u32 = 1;
pub const MAX_SLOPE: u32 = 10;
/// Two weeks of ten-minute steps.
pub const TWO_WEEKS: usize = 14 * STEPS_PER_DAY;

/// One linear trend: `slope_index · unit_scale` normalized units per day from `onset_step` on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultTrend {
    pub slope_index: u32,
    pub onset_step: usize,
    pub unit_scale: f64,
}

impl FaultTrend {
    /// `unit_scale` may be zero, which describes a null trend.
    pub fn new(slope_index: u32, onset_step: usize, unit_scale: f64) -> Result<Self> {
        if !(MIN_SLOPE..=MAX_SLOPE).contains(&slope_index) {
            return Err(Error::InvalidArgument(format!(
                "slope index {slope_index} outside {MIN_SLOPE}..={MAX_SLOPE}"
            )));
        }
        if !(unit_scale >= 0.0 && unit_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("unit scale {unit_scale} must be >= 0")));
        }
        Ok(Self {
            slope_index,
            onset_step,
            unit_scale,
        })
    }

    /// Normalized units per day.
    pub fn rate_per_day(&self) -> f64 {
        self.slope_index as f64 * self.unit_scale
    }
}

/// Additive trend at step `t`; zero up to and including the onset step.
pub fn trend_value(trend: &FaultTrend, t: usize) -> f64 {
    let elapsed = t.saturating_sub(trend.onset_step);
    trend.rate_per_day() * elapsed as f64 / STEPS_PER_DAY as f64
}

/// Adds `trend` to `channel` of a normalized series. Other
/// channels, and every step before the onset, are left untouched.
pub fn inject(series: &ScadaSeries, channel: Channel, trend: &FaultTrend) -> Result<ScadaSeries> {
    if !series.is_normalized() {
        return Err(Error::InvalidArgument("fault injection needs a normalized series".into()));
    }
    if !(series.first_step()..series.end_step()).contains(&trend.onset_step) {
        return Err(Error::InvalidArgument(format!(
            "onset {} outside series [{}, {})",
            trend.onset_step,
            series.first_step(),
            series.end_step()
        )));
    }
    let mut records = series.records().to_vec();
    for r in records.iter_mut().filter(|r| r.step > trend.onset_step) {
        r.set(channel, r.get(channel) + trend_value(trend, r.step));
    }
    Ok(ScadaSeries::from_parts(records, true))
}

/// Inclusive window `[start_step, end_step]` from which onsets are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnsetWindow {
    pub start_step: usize,
    pub end_step: usize,
}

impl OnsetWindow {
    pub fn new(start_step: usize, end_step: usize) -> Result<Self> {
        if end_step < start_step {
            return Err(Error::InvalidArgument(format!(
                "empty onset window [{start_step}, {end_step}]"
            )));
        }
        Ok(Self {
            start_step,
            end_step,
        })
    }

    /// 2016-step window beginning at `start_step`.
    pub fn two_weeks(start_step: usize) -> Self {
        Self {
            start_step,
            end_step: start_step + TWO_WEEKS - 1,
        }
    }

    pub fn len(&self) -> usize {
        self.end_step - self.start_step + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl Default for OnsetWindow {
    /// Two weeks centred on the boundary between months 12 and 13.
    fn default() -> Self {
        Self::two_weeks(12 * STEPS_PER_MONTH - TWO_WEEKS / 2)
    }
}

/// `n` onsets drawn uniformly with replacement from the window.
pub fn sample_onsets(window: &OnsetWindow, n: usize, seed: u64) -> Result<Vec<usize>> {
    if window.end_step < window.start_step {
        return Err(Error::InvalidArgument("empty onset window".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one onset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| rng.random_range(window.start_step..=window.end_step))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentCase {
    pub slope_index: u32,
    /// Position of this onset among the draws for its slope.
    pub onset_ordinal: usize,
    pub onset_step: usize,
    pub case_seed: u64,
}

impl ExperimentCase {
    pub fn fault(&self, unit_scale: f64) -> Result<FaultTrend> {
        FaultTrend::new(self.slope_index, self.onset_step, unit_scale)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub cases: Vec<ExperimentCase>,
    pub master_seed: u64,
}

fn case_seed(master_seed: u64, slope_index: u32, ordinal: usize) -> u64 {
    seeds::derive(
        seeds::derive(master_seed, "grid/case", slope_index as u64),
        "onset",
        ordinal as u64,
    )
}

/// Cases ordered by (slope, onset ordinal). Each slope draws its onsets from
/// an independent stream derived from `master_seed`.
pub fn build_grid(window: &OnsetWindow, slopes: &[u32], n_onsets: usize, master_seed: u64) -> Result<ExperimentGrid> {
    let mut cases = Vec::with_capacity(slopes.len() * n_onsets);
    for &slope in slopes {
        FaultTrend::new(slope, window.start_step, DEFAULT_UNIT_SCALE)?;
        let onsets = sample_onsets(
            window,
            n_onsets,
            seeds::derive(master_seed, "grid/onsets", slope as u64),
        )?;
        cases.extend(onsets.into_iter().enumerate().map(|(ordinal, onset_step)| {
            ExperimentCase {
                slope_index: slope,
                onset_ordinal: ordinal,
                onset_step,
                case_seed: case_seed(master_seed, slope, ordinal),
            }
        }));
    }
    Ok(ExperimentGrid { cases, master_seed })
}

pub const MANIFEST_HEADER: &str = "slope_index,onset_ordinal,onset_step,case_seed";

/// One CSV row per case, enough to re-run any case exactly.
pub fn write_grid_manifest(grid: &ExperimentGrid, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{MANIFEST_HEADER}")?;
    for c in &grid.cases {
        writeln!(
            out,
            "{},{},{},{}",
            c.slope_index, c.onset_ordinal, c.onset_step, c.case_seed
        )?;
    }
    out.flush()
}
