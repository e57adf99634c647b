//! Desk-scale corpus and config shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use socsim::flsim::{SimConfig, SocFleet};
use socsim::soc::{ClassMap, SocSpec, WorkloadModel};
use socsim::trace::{
    augment_timezones, derive_battery_state, filter_traces, pchip_resample, DeviceTrace, FilterCriteria, RawSample,
    SECONDS_PER_DAY, SECONDS_PER_HOUR,
};

pub const UNPLUG_HOUR: f64 = 7.0;
pub const PLUG_HOUR: f64 = 23.0;
pub const FULL: f64 = 98.0;
pub const EMPTY: f64 = 5.0;

/// Charge level of a phone that charges 00:00-07:00, drains at `drain` %/h
/// through the day and sits idle from 23:00.
pub fn daily_level(t: f64, drain: f64) -> f64 {
    let h = (t / 3600.0).rem_euclid(24.0);
    let evening = (FULL - drain * (PLUG_HOUR - UNPLUG_HOUR)).max(EMPTY);
    if h < UNPLUG_HOUR {
        evening + (FULL - evening) * h / UNPLUG_HOUR
    } else if h < PLUG_HOUR {
        (FULL - drain * (h - UNPLUG_HOUR)).max(EMPTY)
    } else {
        evening
    }
}

/// Raw log sampled roughly every ten minutes with jittered timestamps.
pub fn raw_trace(id: &str, days: i64, drain: f64, rng: &mut ChaCha8Rng) -> DeviceTrace {
    let n = days * SECONDS_PER_DAY / 600;
    let samples = (0..=n)
        .map(|k| {
            let jitter = if k == 0 || k == n { 0 } else { rng.random_range(-120..=120) };
            let t = k * 600 + jitter;
            RawSample {
                temperature: Some(28.0),
                ..RawSample::new(t, daily_level(t as f64, drain))
            }
        })
        .collect();
    DeviceTrace::raw(id, samples)
}

pub fn raw_corpus(devices: usize, days: i64, seed: u64) -> Vec<DeviceTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..devices)
        .map(|i| {
            let drain = rng.random_range(5.5..8.5);
            raw_trace(&format!("dev{i:03}"), days, drain, &mut rng)
        })
        .collect()
}

/// filter -> resample -> derive -> augment, as `simctl preprocess` does.
pub fn preprocessed(raw: Vec<DeviceTrace>, shifts: u32) -> Vec<DeviceTrace> {
    let outcome = filter_traces(raw, &FilterCriteria::default());
    assert!(outcome.rejected.is_empty(), "{:?}", outcome.rejected);
    let resampled: Vec<_> = outcome
        .accepted
        .iter()
        .map(|t| derive_battery_state(pchip_resample(t, 600).unwrap()))
        .collect();
    augment_timezones(&resampled, shifts, SECONDS_PER_HOUR)
}

pub fn pixel3() -> SocSpec {
    SocSpec::clustered("pixel3", 4, 4, 0, 2915.0 * 3.6, 3.85, 0.2).unwrap()
}

/// Memory-bound: one big core is 6x faster per step than all four, and a
/// little core still spends more energy per step than a big one.
pub fn shufflenet_like() -> WorkloadModel {
    WorkloadModel::new(
        "shufflenet",
        10.0,
        ClassMap::new(10.0 / 3.0, 10.0, 0.0),
        23.0 / 3.0,
        ClassMap::new(0.45, 1.2, 0.0),
    )
    .unwrap()
}

/// Compute-bound: more cores are always faster.
pub fn resnet_like() -> WorkloadModel {
    WorkloadModel::new("resnet34", 40.0, ClassMap::new(10.0 / 4.5, 10.0, 0.0), 0.05, ClassMap::new(0.45, 1.2, 0.0)).unwrap()
}

pub fn desk_fleet() -> Vec<SocFleet> {
    vec![SocFleet::from_model(pixel3(), &shufflenet_like(), false)]
}

/// Starts late morning for the base devices, with tight budgets and a task
/// slow enough that accuracy is still climbing late in the run.
pub fn desk_config(seed: u64) -> SimConfig {
    let mut c = SimConfig::new(seed);
    c.fl.max_rounds = 100;
    c.fl.local_steps = 20;
    c.task.feature_scale = 0.25;
    c.task.eval_samples = 5000;
    c.fl.start_offset_seconds = 11 * SECONDS_PER_HOUR;
    c.energy.daily_budget_joules_min = 500.0;
    c.energy.daily_budget_joules_max = 1500.0;
    c
}
