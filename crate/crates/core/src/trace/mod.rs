//! Battery trace ingestion, quality filtering, uniform resampling and
//! time-zone augmentation.

mod io;
mod pchip;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{parse_traces, write_corpus, write_rejections, TRACE_HEADER};
pub use pchip::Pchip;

pub const SECONDS_PER_DAY: i64 = 86_400;
pub const SECONDS_PER_HOUR: i64 = 3_600;
pub const DEFAULT_GRID_SECONDS: i64 = 600;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: battery_level {value} outside [0, 100]")]
    LevelOutOfRange { line: u64, value: f64 },
    #[error("insufficient_samples: need at least 2, have {have}")]
    InsufficientSamples { have: usize },
    #[error("invalid filter criteria: {0}")]
    InvalidCriteria(String),
    #[error("interpolation: {0}")]
    Interpolation(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Charging direction as logged by the device (or derived from level deltas).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BatteryState {
    Charging,
    NotDischarging,
    Discharging,
}

impl BatteryState {
    pub fn code(self) -> i8 {
        match self {
            BatteryState::Charging => 1,
            BatteryState::NotDischarging => 0,
            BatteryState::Discharging => -1,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            1 => Some(BatteryState::Charging),
            0 => Some(BatteryState::NotDischarging),
            -1 => Some(BatteryState::Discharging),
            _ => None,
        }
    }

    fn from_delta(delta: f64) -> Self {
        if delta > 0.0 {
            BatteryState::Charging
        } else if delta < 0.0 {
            BatteryState::Discharging
        } else {
            BatteryState::NotDischarging
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    pub timestamp: i64,
    /// Percent in `[0, 100]`; integral in raw logs, fractional after resampling.
    pub battery_level: f64,
    pub battery_state: Option<BatteryState>,
    pub temperature: Option<f64>,
    pub screen_on: Option<bool>,
}

impl RawSample {
    pub fn new(timestamp: i64, battery_level: f64) -> Self {
        Self {
            timestamp,
            battery_level,
            battery_state: None,
            temperature: None,
            screen_on: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceTrace {
    pub device_id: String,
    pub samples: Vec<RawSample>,
    /// 0 for raw (non-uniform) traces.
    pub grid_seconds: i64,
}

impl DeviceTrace {
    pub fn raw(device_id: impl Into<String>, samples: Vec<RawSample>) -> Self {
        Self {
            device_id: device_id.into(),
            samples,
            grid_seconds: 0,
        }
    }

    pub fn first_timestamp(&self) -> Option<i64> {
        self.samples.first().map(|s| s.timestamp)
    }

    pub fn last_timestamp(&self) -> Option<i64> {
        self.samples.last().map(|s| s.timestamp)
    }

    pub fn span_seconds(&self) -> i64 {
        match (self.first_timestamp(), self.last_timestamp()) {
            (Some(a), Some(b)) => b - a,
            _ => 0,
        }
    }

    pub fn is_resampled(&self) -> bool {
        self.grid_seconds > 0
    }

    /// Returns the grid spacing if every adjacent gap is identical.
    pub fn detect_grid(&self) -> Option<i64> {
        let mut gaps = self.samples.windows(2).map(|w| w[1].timestamp - w[0].timestamp);
        let first = gaps.next()?;
        (first > 0 && gaps.all(|g| g == first)).then_some(first)
    }
}

/// Quality thresholds a raw trace must meet to enter the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterCriteria {
    pub min_period_days: f64,
    pub min_avg_samples_per_day: f64,
    pub max_gap_hours: f64,
    pub large_gap_hours: f64,
    pub max_large_gaps: usize,
}

impl Default for FilterCriteria {
    fn default() -> Self {
        Self {
            min_period_days: 28.0,
            min_avg_samples_per_day: 100.0,
            max_gap_hours: 24.0,
            large_gap_hours: 6.0,
            max_large_gaps: 15,
        }
    }
}

impl FilterCriteria {
    pub fn validate(&self) -> Result<(), TraceError> {
        let positive = [
            ("min_period_days", self.min_period_days),
            ("min_avg_samples_per_day", self.min_avg_samples_per_day),
            ("max_gap_hours", self.max_gap_hours),
            ("large_gap_hours", self.large_gap_hours),
            ("max_large_gaps", self.max_large_gaps as f64),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(TraceError::InvalidCriteria(format!("{name} must be > 0")));
            }
        }
        if self.large_gap_hours >= self.max_gap_hours {
            return Err(TraceError::InvalidCriteria(
                "large_gap_hours must be below max_gap_hours".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectReason {
    TooShort,
    ShortPeriod,
    LowSampleRate,
    GapTooLong,
    TooManyLargeGaps,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::TooShort => "too_short",
            RejectReason::ShortPeriod => "short_period",
            RejectReason::LowSampleRate => "low_sample_rate",
            RejectReason::GapTooLong => "gap_too_long",
            RejectReason::TooManyLargeGaps => "too_many_large_gaps",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub device_id: String,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default)]
pub struct FilterOutcome {
    pub accepted: Vec<DeviceTrace>,
    pub rejected: Vec<Rejection>,
}

/// Checks one trace; `None` means it passes every criterion.
pub fn rejection_reason(trace: &DeviceTrace, criteria: &FilterCriteria) -> Option<RejectReason> {
    if trace.samples.len() < 2 {
        return Some(RejectReason::TooShort);
    }
    let span = trace.span_seconds() as f64;
    let span_days = span / SECONDS_PER_DAY as f64;
    if span_days < criteria.min_period_days {
        return Some(RejectReason::ShortPeriod);
    }
    if (trace.samples.len() as f64) / span_days < criteria.min_avg_samples_per_day {
        return Some(RejectReason::LowSampleRate);
    }
    let max_gap = criteria.max_gap_hours * SECONDS_PER_HOUR as f64;
    let large_gap = criteria.large_gap_hours * SECONDS_PER_HOUR as f64;
    let mut large = 0usize;
    for w in trace.samples.windows(2) {
        let gap = (w[1].timestamp - w[0].timestamp) as f64;
        if gap > max_gap {
            return Some(RejectReason::GapTooLong);
        }
        if gap > large_gap {
            large += 1;
        }
    }
    (large > criteria.max_large_gaps).then_some(RejectReason::TooManyLargeGaps)
}

pub fn filter_traces(traces: Vec<DeviceTrace>, criteria: &FilterCriteria) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for trace in traces {
        match rejection_reason(&trace, criteria) {
            None => out.accepted.push(trace),
            Some(reason) => out.rejected.push(Rejection {
                device_id: trace.device_id,
                reason,
            }),
        }
    }
    out
}

/// Resamples onto a uniform grid anchored at the first timestamp.
///
/// Battery level goes through the monotone cubic interpolant and is clamped to
/// `[0, 100]`. Temperature and screen state are held from the latest knot at or
/// before each grid point. Logged battery state is discarded; see
/// [`derive_battery_state`].
pub fn pchip_resample(trace: &DeviceTrace, grid_seconds: i64) -> Result<DeviceTrace, TraceError> {
    if trace.samples.len() < 2 {
        return Err(TraceError::InsufficientSamples {
            have: trace.samples.len(),
        });
    }
    if grid_seconds <= 0 {
        return Err(TraceError::Interpolation("grid_seconds must be > 0".into()));
    }
    let t0 = trace.samples[0].timestamp;
    let xs: Vec<f64> = trace.samples.iter().map(|s| (s.timestamp - t0) as f64).collect();
    let ys: Vec<f64> = trace.samples.iter().map(|s| s.battery_level).collect();
    let interp = Pchip::new(&xs, &ys)?;

    let span = trace.span_seconds();
    let mut samples = Vec::with_capacity((span / grid_seconds + 1) as usize);
    let mut knot = 0usize;
    let mut offset = 0i64;
    while offset <= span {
        let ts = t0 + offset;
        while knot + 1 < trace.samples.len() && trace.samples[knot + 1].timestamp <= ts {
            knot += 1;
        }
        let held = &trace.samples[knot];
        samples.push(RawSample {
            timestamp: ts,
            battery_level: interp.eval(offset as f64).clamp(0.0, 100.0),
            battery_state: None,
            temperature: held.temperature,
            screen_on: held.screen_on,
        });
        offset += grid_seconds;
    }
    Ok(DeviceTrace {
        device_id: trace.device_id.clone(),
        samples,
        grid_seconds,
    })
}

/// Fills `battery_state` from the sign of consecutive level differences.
pub fn derive_battery_state(mut trace: DeviceTrace) -> DeviceTrace {
    for i in 1..trace.samples.len() {
        let delta = trace.samples[i].battery_level - trace.samples[i - 1].battery_level;
        trace.samples[i].battery_state = Some(BatteryState::from_delta(delta));
    }
    let first_state = trace
        .samples
        .get(1)
        .and_then(|s| s.battery_state)
        .unwrap_or(BatteryState::NotDischarging);
    if let Some(first) = trace.samples.first_mut() {
        first.battery_state = Some(first_state);
    }
    trace
}

/// Suffix used on shifted copies, e.g. `"dev7+3h"`.
pub fn shifted_id(device_id: &str, k: u32) -> String {
    format!("{device_id}+{k}h")
}

/// Recovers the hour shift from an id produced by [`augment_timezones`].
pub fn shift_hours_of(device_id: &str) -> u32 {
    device_id
        .rsplit_once('+')
        .and_then(|(_, tail)| tail.strip_suffix('h'))
        .and_then(|h| h.parse().ok())
        .unwrap_or(0)
}

/// Base device id with any time-zone suffix removed.
pub fn base_id_of(device_id: &str) -> &str {
    match device_id.rsplit_once('+') {
        Some((base, tail)) if tail.strip_suffix('h').is_some_and(|h| h.parse::<u32>().is_ok()) => base,
        _ => device_id,
    }
}

/// Emits each trace followed by `shifts` copies displaced by `k * shift_step_seconds`.
pub fn augment_timezones(
    traces: &[DeviceTrace],
    shifts: u32,
    shift_step_seconds: i64,
) -> Vec<DeviceTrace> {
    let mut out = Vec::with_capacity(traces.len() * (shifts as usize + 1));
    for trace in traces {
        out.push(trace.clone());
        for k in 1..=shifts {
            let delta = i64::from(k) * shift_step_seconds;
            let mut copy = trace.clone();
            copy.device_id = shifted_id(&trace.device_id, k);
            for s in &mut copy.samples {
                s.timestamp += delta;
            }
            out.push(copy);
        }
    }
    out
}
