//! Residuals, the 99.9th-percentile threshold and the two windowed alarm criteria.
//!
//! Criterion 1 fires when more than 8 hours (48 steps) of the past 24 hours
//! (144 steps, current step included) had residuals strictly above the
//! threshold. Criterion 2 fires when the mean residual of the past 8 hours
//! strictly exceeds the threshold. Only positive (over-temperature) deviations
//! can alarm, and no flag is raised before a full window of history exists.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scada::StepRange;

pub const CRITERION_1_WINDOW: usize = 144;
/// Exceedance count that must be strictly surpassed within the criterion-1 window.
pub const CRITERION_1_MIN_EXCEEDANCES: usize = 48;
pub const CRITERION_2_WINDOW: usize = 48;
pub const THRESHOLD_QUANTILE: f64 = 0.999;
pub const MIN_CALIBRATION_SAMPLES: usize = 1000;
pub const RECOMMENDED_CALIBRATION_SAMPLES: usize = 10_000;

/// Observed minus predicted values, aligned to consecutive steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSeries {
    pub values: Vec<f64>,
    pub start_step: usize,
}

impl ResidualSeries {
    pub fn new(values: Vec<f64>, start_step: usize) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite residual at step {}",
                start_step + i
            )));
        }
        Ok(Self { values, start_step })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn steps(&self) -> StepRange {
        StepRange::new(self.start_step, self.start_step + self.values.len())
    }
}

/// `observed[i] − predicted[i]`; positive means hotter than expected.
pub fn residuals(observed: &[f64], predicted: &[f64], start_step: usize) -> Result<ResidualSeries> {
    if observed.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: observed.len(),
            right: predicted.len(),
        });
    }
    ResidualSeries::new(
        observed.iter().zip(predicted).map(|(o, p)| o - p).collect(),
        start_step,
    )
}

/// Empirical quantile with linear interpolation between order statistics:
/// `h = q·(n−1)`, result `v[⌊h⌋] + (h−⌊h⌋)·(v[⌊h⌋+1] − v[⌊h⌋])`.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("percentile of an empty sample".into()));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidArgument(format!("quantile {q} outside (0, 1)")));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("percentile of a sample containing NaN".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    Ok(match sorted.get(lo + 1) {
        Some(&hi) if frac > 0.0 => sorted[lo] + frac * (hi - sorted[lo]),
        _ => sorted[lo],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub q999: f64,
    pub calibrated_on: StepRange,
    pub n_calibration: usize,
}

impl Threshold {
    /// A threshold with a fixed level, for tests and replays.
    pub fn fixed(q999: f64) -> Self {
        Self {
            q999,
            calibrated_on: StepRange::new(0, 0),
            n_calibration: 0,
        }
    }

    /// Fewer than the recommended number of samples back the 99.9th percentile.
    pub fn is_thin(&self) -> bool {
        self.n_calibration < RECOMMENDED_CALIBRATION_SAMPLES
    }
}

/// 99.9th percentile of residuals from a fault-free period. The caller is
/// responsible for the period actually being fault-free.
pub fn calibrate_threshold(calibration: &ResidualSeries) -> Result<Threshold> {
    if calibration.len() < MIN_CALIBRATION_SAMPLES {
        return Err(Error::TooFewSamples {
            found: calibration.len(),
            required: MIN_CALIBRATION_SAMPLES,
        });
    }
    Ok(Threshold {
        q999: percentile(&calibration.values, THRESHOLD_QUANTILE)?,
        calibrated_on: calibration.steps(),
        n_calibration: calibration.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// More than 8 h of exceedances in the past 24 h.
    #[serde(rename = "criterion_1")]
    Criterion1,
    /// 8-hour rolling mean above the threshold.
    #[serde(rename = "criterion_2")]
    Criterion2,
}

impl Criterion {
    pub const BOTH: [Criterion; 2] = [Criterion::Criterion1, Criterion::Criterion2];

    pub fn window(self) -> usize {
        match self {
            Criterion::Criterion1 => CRITERION_1_WINDOW,
            Criterion::Criterion2 => CRITERION_2_WINDOW,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Criterion1 => "criterion_1",
            Criterion::Criterion2 => "criterion_2",
        }
    }

    pub fn evaluate(self, residuals: &ResidualSeries, thr: &Threshold) -> Result<AlarmSeries> {
        match self {
            Criterion::Criterion1 => alarm_criterion_1(residuals, thr),
            Criterion::Criterion2 => alarm_criterion_2(residuals, thr),
        }
    }
}

/// Per-step alarm flags aligned with the residual series they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmSeries {
    pub flags: Vec<bool>,
    pub start_step: usize,
    pub criterion: Criterion,
    /// Window length of the criterion. The first `warmup − 1` steps lack a
    /// full window and their flags are false.
    pub warmup: usize,
}

impl AlarmSeries {
    pub fn end_step(&self) -> usize {
        self.start_step + self.flags.len()
    }

    /// Flag at an absolute step; `None` outside the series.
    pub fn flag_at(&self, step: usize) -> Option<bool> {
        step.checked_sub(self.start_step)
            .and_then(|i| self.flags.get(i).copied())
    }

    /// First absolute step at which flags are defined.
    pub fn first_defined_step(&self) -> usize {
        (self.start_step + self.warmup).saturating_sub(1)
    }
}

fn check_window(residuals: &ResidualSeries, window: usize) -> Result<()> {
    if residuals.len() < window {
        return Err(Error::InvalidArgument(format!(
            "residual series of {} steps is shorter than the {window}-step window",
            residuals.len()
        )));
    }
    Ok(())
}

pub fn alarm_criterion_1(residuals: &ResidualSeries, thr: &Threshold) -> Result<AlarmSeries> {
    let w = CRITERION_1_WINDOW;
    check_window(residuals, w)?;
    let exceed: Vec<bool> = residuals.values.iter().map(|&r| r > thr.q999).collect();
    let mut flags = vec![false; exceed.len()];
    let mut count = exceed[..w - 1].iter().filter(|&&e| e).count();
    for t in w - 1..exceed.len() {
        count += exceed[t] as usize;
        flags[t] = count > CRITERION_1_MIN_EXCEEDANCES;
        count -= exceed[t + 1 - w] as usize;
    }
    Ok(AlarmSeries {
        flags,
        start_step: residuals.start_step,
        criterion: Criterion::Criterion1,
        warmup: w,
    })
}

pub fn alarm_criterion_2(residuals: &ResidualSeries, thr: &Threshold) -> Result<AlarmSeries> {
    let w = CRITERION_2_WINDOW;
    check_window(residuals, w)?;
    let v = &residuals.values;
    let mut flags = vec![false; v.len()];
    // Each window is summed afresh so flags do not depend on where a series starts.
    for (t, window) in v.windows(w).enumerate() {
        let mean = window.iter().sum::<f64>() / w as f64;
        flags[t + w - 1] = mean > thr.q999;
    }
    Ok(AlarmSeries {
        flags,
        start_step: residuals.start_step,
        criterion: Criterion::Criterion2,
        warmup: w,
    })
}

/// Smallest step `>= from_step` with a raised flag.
pub fn first_alarm(alarms: &AlarmSeries, from_step: usize) -> Option<usize> {
    let from = from_step.max(alarms.start_step) - alarms.start_step;
    alarms
        .flags
        .iter()
        .skip(from)
        .position(|&f| f)
        .map(|i| alarms.start_step + from + i)
}

pub const TRACE_HEADER: &str = "step,residual,threshold,flag_c1,flag_c2";

/// Residual and both criteria's flags per step, for plotting.
pub fn write_alarm_trace(
    residuals: &ResidualSeries,
    thr: &Threshold,
    c1: &AlarmSeries,
    c2: &AlarmSeries,
    mut out: impl Write,
) -> std::io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for (i, r) in residuals.values.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{}",
            residuals.start_step + i,
            r,
            thr.q999,
            c1.flags[i] as u8,
            c2.flags[i] as u8
        )?;
    }
    out.flush()
}
