//! Simulated clients: trace lookup, foreground usage, interference and the
//! coordinator's exploration split.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::energy::EnergyLedger;
use crate::engine::{DeviceStatus, EngineState};
use crate::soc::{ClassSet, CoreClass, ExecutionChoice};
use crate::trace::{BatteryState, DeviceTrace, RawSample, SECONDS_PER_DAY, SECONDS_PER_HOUR};

use super::task::Sample;

pub const DEFAULT_TEMPERATURE_CELSIUS: f64 = 30.0;

/// Classes a foreground app occupies while the user is active.
pub const FOREGROUND_CLASSES: ClassSet = ClassSet::EMPTY
    .with(CoreClass::LowLatency)
    .with(CoreClass::Prime);

/// Half-open interval of foreground use, in trace timestamps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BusyInterval {
    pub start: i64,
    pub end: i64,
    pub contended: ClassSet,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForegroundSessions {
    intervals: Vec<BusyInterval>,
}

impl ForegroundSessions {
    pub fn intervals(&self) -> &[BusyInterval] {
        &self.intervals
    }

    /// Contended classes at `ts`, or `None` when the device is idle.
    pub fn contention_at(&self, ts: i64) -> Option<ClassSet> {
        let idx = self.intervals.partition_point(|iv| iv.end <= ts);
        self.intervals
            .get(idx)
            .filter(|iv| iv.start <= ts)
            .map(|iv| iv.contended)
    }

    fn push_slot(&mut self, start: i64, end: i64) {
        match self.intervals.last_mut() {
            Some(last) if last.end == start => last.end = end,
            _ => self.intervals.push(BusyInterval {
                start,
                end,
                contended: FOREGROUND_CLASSES,
            }),
        }
    }
}

// Diurnal foreground model: per grid slot, chance of starting a session and of
// an ongoing one continuing.
const DAY_START_HOUR: i64 = 8;
const DAY_END_HOUR: i64 = 23;
const DAY_SESSION_START: f64 = 0.06;
const NIGHT_SESSION_START: f64 = 0.005;
const SESSION_CONTINUE: f64 = 0.6;

/// Busy intervals for a resampled trace.
///
/// When the trace logs screen state, every screen-on slot is busy. Otherwise a
/// seeded two-state model runs over local hours, more active 08:00–23:00.
/// `local_offset_seconds` maps trace timestamps back to the device's local clock.
pub fn derive_foreground_sessions(trace: &DeviceTrace, rng_seed: u64, local_offset_seconds: i64) -> ForegroundSessions {
    let mut sessions = ForegroundSessions::default();
    let grid = trace.grid_seconds.max(1);
    let logged = trace.samples.iter().any(|s| s.screen_on.is_some());
    if logged {
        for s in &trace.samples {
            if s.screen_on == Some(true) {
                sessions.push_slot(s.timestamp, s.timestamp + grid);
            }
        }
        return sessions;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut busy = false;
    for s in &trace.samples {
        let local = s.timestamp - local_offset_seconds;
        let hour = local.rem_euclid(SECONDS_PER_DAY) / SECONDS_PER_HOUR;
        let start_p = if (DAY_START_HOUR..DAY_END_HOUR).contains(&hour) {
            DAY_SESSION_START
        } else {
            NIGHT_SESSION_START
        };
        let u: f64 = rng.random();
        busy = if busy { u < SESSION_CONTINUE } else { u < start_p };
        if busy {
            sessions.push_slot(s.timestamp, s.timestamp + grid);
        }
    }
    sessions
}

/// Slowdown of a training step that shares cores with foreground work.
pub fn latency_inflation(choice: &ExecutionChoice, busy: bool, contended: ClassSet, factor: f64) -> f64 {
    if busy && choice.uses_any(contended) {
        factor
    } else {
        1.0
    }
}

/// Splits each SoC's choice list round-robin over that SoC's clients.
///
/// `groups` maps an SoC to its client indices (in canonical order). Walking
/// `max(choices, clients)` positions means every choice gets a client and,
/// when clients outnumber choices, every client gets a choice.
pub fn assign_exploration(
    groups: &BTreeMap<usize, Vec<usize>>,
    choices: &BTreeMap<usize, Vec<ExecutionChoice>>,
    total_clients: usize,
) -> Vec<Vec<ExecutionChoice>> {
    let mut out = vec![Vec::new(); total_clients];
    for (soc, members) in groups {
        let Some(list) = choices.get(soc) else { continue };
        if members.is_empty() || list.is_empty() {
            continue;
        }
        for i in 0..list.len().max(members.len()) {
            out[members[i % members.len()]].push(list[i % list.len()]);
        }
    }
    out
}

/// One simulated device.
#[derive(Debug, Clone)]
pub struct ClientSim {
    pub device_id: String,
    pub trace: DeviceTrace,
    /// How far this copy's timestamps were shifted from local time.
    pub local_offset_seconds: i64,
    pub soc_index: usize,
    pub engine: EngineState,
    /// The engine's ladder covers every choice of the SoC.
    pub has_full_ladder: bool,
    pub ledger: EnergyLedger,
    pub dataset_shard: Vec<Sample>,
    pub foreground_sessions: ForegroundSessions,
}

impl ClientSim {
    /// Maps an absolute time onto the trace, wrapping once the trace runs out.
    pub fn trace_time(&self, abs_seconds: i64) -> i64 {
        let first = self.trace.samples[0].timestamp;
        let grid = self.trace.grid_seconds.max(1);
        let period = self.trace.span_seconds() + grid;
        first + (abs_seconds - first).rem_euclid(period)
    }

    pub fn sample_at(&self, abs_seconds: i64) -> &RawSample {
        let ts = self.trace_time(abs_seconds);
        let first = self.trace.samples[0].timestamp;
        let grid = self.trace.grid_seconds.max(1);
        let idx = (((ts - first) / grid) as usize).min(self.trace.samples.len() - 1);
        &self.trace.samples[idx]
    }

    pub fn contention_at(&self, abs_seconds: i64) -> Option<ClassSet> {
        self.foreground_sessions.contention_at(self.trace_time(abs_seconds))
    }

    pub fn local_day(&self, abs_seconds: i64) -> i64 {
        (abs_seconds - self.local_offset_seconds).div_euclid(SECONDS_PER_DAY)
    }

    pub fn status_at(&self, abs_seconds: i64) -> DeviceStatus {
        let s = self.sample_at(abs_seconds);
        let contention = self.contention_at(abs_seconds);
        DeviceStatus {
            battery_level: s.battery_level,
            battery_state: s.battery_state.unwrap_or(BatteryState::NotDischarging),
            temperature_celsius: s.temperature.unwrap_or(DEFAULT_TEMPERATURE_CELSIUS),
            is_idle: contention.is_none(),
            contended_classes: contention.unwrap_or(ClassSet::EMPTY),
        }
    }
}
