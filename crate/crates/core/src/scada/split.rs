use serde::{Deserialize, Serialize};

use super::{ScadaSeries, STEPS_PER_MONTH};
use crate::error::{Error, Result};

/// Half-open step interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRange {
    pub start: usize,
    pub end: usize,
}

impl StepRange {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, step: usize) -> bool {
        (self.start..self.end).contains(&step)
    }

    /// Steps covered by whole 30-day months `first..=last` (1-based) of a series starting at step 0.
    pub fn months(first: usize, last: usize) -> Self {
        Self {
            start: (first - 1) * STEPS_PER_MONTH,
            end: last * STEPS_PER_MONTH,
        }
    }
}

/// Training, threshold-calibration and monitoring periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRanges {
    pub train: StepRange,
    pub calibration: StepRange,
    pub monitoring: StepRange,
}

impl Default for SplitRanges {
    /// Months 1–10 train, month 11 calibration, months 12–14 monitoring.
    fn default() -> Self {
        Self {
            train: StepRange::months(1, 10),
            calibration: StepRange::months(11, 11),
            monitoring: StepRange::months(12, 14),
        }
    }
}

impl SplitRanges {
    /// Checks non-emptiness, ordering/disjointness and, when given, containment
    /// in the series span `[first, end)`.
    pub fn validate(&self, span: Option<StepRange>) -> Result<()> {
        let parts = [
            ("train", self.train),
            ("calibration", self.calibration),
            ("monitoring", self.monitoring),
        ];
        for (name, r) in parts {
            if r.is_empty() {
                return Err(Error::InvalidSplit(format!("{name} range [{}, {}) is empty", r.start, r.end)));
            }
            if let Some(span) = span {
                if r.start < span.start || r.end > span.end {
                    return Err(Error::InvalidSplit(format!(
                        "{name} range [{}, {}) lies outside the series [{}, {})",
                        r.start, r.end, span.start, span.end
                    )));
                }
            }
        }
        if self.train.end > self.calibration.start {
            return Err(Error::InvalidSplit("train overlaps or follows calibration".into()));
        }
        if self.calibration.end > self.monitoring.start {
            return Err(Error::InvalidSplit("calibration overlaps or follows monitoring".into()));
        }
        Ok(())
    }
}

fn slice(series: &ScadaSeries, range: StepRange) -> ScadaSeries {
    let offset = series.first_step();
    let records = series.records()[range.start - offset..range.end - offset].to_vec();
    ScadaSeries::from_parts(records, series.is_normalized())
}

/// Splits a series into its training, calibration and monitoring parts.
pub fn split_series(series: &ScadaSeries, ranges: &SplitRanges) -> Result<(ScadaSeries, ScadaSeries, ScadaSeries)> {
    ranges.validate(Some(StepRange::new(series.first_step(), series.end_step())))?;
    Ok((
        slice(series, ranges.train),
        slice(series, ranges.calibration),
        slice(series, ranges.monitoring),
    ))
}
