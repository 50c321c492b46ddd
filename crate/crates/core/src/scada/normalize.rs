use serde::{Deserialize, Serialize};

use super::{Channel, ScadaSeries};
use crate::error::{Error, Result};

/// Observed range of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelRange {
    pub channel: Channel,
    pub min: f64,
    pub max: f64,
}

/// Per-channel min-max parameters mapping the fitted range onto [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    ranges: Vec<ChannelRange>,
}

impl NormalizationParams {
    pub fn new(ranges: Vec<ChannelRange>) -> Result<Self> {
        for r in &ranges {
            if !(r.min.is_finite() && r.max.is_finite()) || r.max <= r.min {
                return Err(Error::DegenerateRange(r.channel.column()));
            }
        }
        Ok(Self { ranges })
    }

    pub fn ranges(&self) -> &[ChannelRange] {
        &self.ranges
    }

    pub fn range(&self, channel: Channel) -> Option<&ChannelRange> {
        self.ranges.iter().find(|r| r.channel == channel)
    }

    fn require(&self, channel: Channel) -> Result<&ChannelRange> {
        self.range(channel)
            .ok_or(Error::MissingChannel(channel.column()))
    }

    pub fn normalize_value(&self, channel: Channel, value: f64) -> Result<f64> {
        let r = self.require(channel)?;
        Ok((value - r.min) / (r.max - r.min))
    }

    pub fn denormalize_value(&self, channel: Channel, value: f64) -> Result<f64> {
        let r = self.require(channel)?;
        Ok(value * (r.max - r.min) + r.min)
    }
}

/// Fits min-max parameters for `channels` over the whole of `series`.
pub fn fit_normalization(series: &ScadaSeries, channels: &[Channel]) -> Result<NormalizationParams> {
    let ranges = channels
        .iter()
        .map(|&channel| {
            let (min, max) = series
                .records()
                .iter()
                .map(|r| r.get(channel))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
            ChannelRange { channel, min, max }
        })
        .collect();
    NormalizationParams::new(ranges)
}

/// Normalizes every value channel. `params` must cover all six channels.
pub fn apply_normalization(series: &ScadaSeries, params: &NormalizationParams) -> Result<ScadaSeries> {
    if series.is_normalized() {
        return Err(Error::InvalidArgument("series is already normalized".into()));
    }
    transform(series, params, true)
}

/// Maps a normalized series back to physical units.
pub fn invert_normalization(series: &ScadaSeries, params: &NormalizationParams) -> Result<ScadaSeries> {
    if !series.is_normalized() {
        return Err(Error::InvalidArgument("series is not normalized".into()));
    }
    transform(series, params, false)
}

fn transform(series: &ScadaSeries, params: &NormalizationParams, forward: bool) -> Result<ScadaSeries> {
    let ranges: Vec<ChannelRange> = Channel::ALL
        .iter()
        .map(|&ch| params.require(ch).copied())
        .collect::<Result<_>>()?;
    let records = series
        .records()
        .iter()
        .map(|rec| {
            let mut out = *rec;
            for r in &ranges {
                let v = rec.get(r.channel);
                let mapped = if forward {
                    (v - r.min) / (r.max - r.min)
                } else {
                    v * (r.max - r.min) + r.min
                };
                out.set(r.channel, mapped);
            }
            out
        })
        .collect();
    Ok(ScadaSeries::from_parts(records, forward))
}
