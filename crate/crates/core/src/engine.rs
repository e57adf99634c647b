//! Per-device training engine: admission, execution-choice exploration and
//! interference-driven migration along the pruned ladder.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{discharge_intervals, interval_energy_sum};
use crate::soc::{prune_dominated, simulate_profile, ClassSet, ExecutionChoice, PerfProfile, SocSpec, WorkloadModel};
use crate::trace::{BatteryState, RawSample};

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("exploration_complete: no unexplored choices left")]
    ExplorationComplete,
    #[error("not_explored: the profile ladder is empty")]
    NotExplored,
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceStatus {
    pub battery_level: f64,
    pub battery_state: BatteryState,
    pub temperature_celsius: f64,
    pub is_idle: bool,
    pub contended_classes: ClassSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRequest {
    pub workload_name: String,
    pub min_real_batches: u32,
    pub steps_requested: u32,
}

impl TrainingRequest {
    pub fn new(workload_name: impl Into<String>, min_real_batches: u32, steps_requested: u32) -> Result<Self, EngineError> {
        if min_real_batches < 1 {
            return Err(EngineError::InvalidRequest("min_real_batches must be >= 1".into()));
        }
        if steps_requested < min_real_batches {
            return Err(EngineError::InvalidRequest(
                "steps_requested must be >= min_real_batches".into(),
            ));
        }
        Ok(Self {
            workload_name: workload_name.into(),
            min_real_batches,
            steps_requested,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnginePolicy {
    pub max_temp_celsius: f64,
    pub min_battery_percent: f64,
    /// Downgrade when the smoothed latency exceeds this multiple of the rung's expectation.
    pub downgrade_ratio: f64,
    pub downgrade_window: u32,
    /// Upgrade once the smoothed latency stays within this multiple.
    pub upgrade_ratio: f64,
    pub upgrade_cooldown: u32,
    pub ema_alpha: f64,
    /// Steps benchmarked per choice during exploration.
    pub benchmark_batches: u32,
}

impl Default for EnginePolicy {
    fn default() -> Self {
        Self {
            max_temp_celsius: 35.0,
            min_battery_percent: 40.0,
            downgrade_ratio: 1.25,
            downgrade_window: 3,
            upgrade_ratio: 1.05,
            upgrade_cooldown: 30,
            ema_alpha: 0.3,
            benchmark_batches: 8,
        }
    }
}

impl EnginePolicy {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::InvalidPolicy(m.into()));
        if !(self.upgrade_ratio >= 1.0 && self.downgrade_ratio > self.upgrade_ratio) {
            return bad("need downgrade_ratio > upgrade_ratio >= 1");
        }
        if self.downgrade_window < 1 {
            return bad("downgrade_window must be >= 1");
        }
        if !(self.ema_alpha > 0.0 && self.ema_alpha <= 1.0) {
            return bad("ema_alpha must be in (0, 1]");
        }
        if !(0.0..=100.0).contains(&self.min_battery_percent) {
            return bad("min_battery_percent must be in [0, 100]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeclineReason {
    Hot,
    Battery,
}

impl DeclineReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DeclineReason::Hot => "hot",
            DeclineReason::Battery => "battery",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    AcceptTrain,
    AcceptExplore,
    Decline(DeclineReason),
}

impl Admission {
    pub fn accepted(self) -> bool {
        !matches!(self, Admission::Decline(_))
    }
}

pub fn admit(status: &DeviceStatus, policy: &EnginePolicy, exploration_complete: bool) -> Admission {
    if status.temperature_celsius > policy.max_temp_celsius {
        return Admission::Decline(DeclineReason::Hot);
    }
    if !exploration_complete && status.is_idle && status.battery_state == BatteryState::Discharging {
        return Admission::AcceptExplore;
    }
    if status.battery_state == BatteryState::Charging || status.battery_level >= policy.min_battery_percent {
        return Admission::AcceptTrain;
    }
    Admission::Decline(DeclineReason::Battery)
}

/// Background draw inferred from the charge lost over an idle, discharging
/// window. Falls back to the SoC's idle power when the window is too short.
pub fn estimate_background_power(window: &[RawSample], soc: &SocSpec) -> f64 {
    let (Some(first), Some(last)) = (window.first(), window.last()) else {
        return soc.idle_power_watts;
    };
    let span = (last.timestamp - first.timestamp) as f64;
    if window.len() < 2 || span <= 0.0 {
        return soc.idle_power_watts;
    }
    let intervals = discharge_intervals(window, soc.battery_capacity_coulombs, soc.nominal_voltage);
    let joules = interval_energy_sum(&intervals, (first.timestamp as f64, last.timestamp as f64))
        .expect("discharge intervals have positive length");
    joules / span
}

/// Steps spent benchmarking one choice.
pub fn benchmark_steps(request: &TrainingRequest, policy: &EnginePolicy) -> u32 {
    request.min_real_batches.max(policy.benchmark_batches)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MigrationAction {
    Stay,
    Downgrade,
    Upgrade,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineState {
    pub explored: BTreeMap<ExecutionChoice, PerfProfile>,
    pub unexplored: VecDeque<ExecutionChoice>,
    pub pruned_ladder: Vec<PerfProfile>,
    pub current_rung: usize,
    pub latency_ema: f64,
    /// Consecutive steps above the downgrade threshold.
    pub hot_steps: u32,
    /// Consecutive steps within the upgrade threshold.
    pub calm_steps: u32,
    pub background_power_watts: f64,
}

impl EngineState {
    pub fn new(to_explore: impl IntoIterator<Item = ExecutionChoice>, background_power_watts: f64) -> Self {
        Self {
            explored: BTreeMap::new(),
            unexplored: to_explore.into_iter().collect(),
            pruned_ladder: Vec::new(),
            current_rung: 0,
            latency_ema: 0.0,
            hot_steps: 0,
            calm_steps: 0,
            background_power_watts,
        }
    }

    /// A device that starts from an already-complete profile set.
    pub fn from_profiles(profiles: &[PerfProfile], background_power_watts: f64) -> Self {
        let mut state = Self::new([], background_power_watts);
        state.adopt_profiles(profiles);
        state
    }

    pub fn exploration_complete(&self) -> bool {
        self.unexplored.is_empty() && !self.pruned_ladder.is_empty()
    }

    /// Merges profiles reported by other devices, drops any pending
    /// exploration and restarts from the fastest rung.
    pub fn adopt_profiles(&mut self, profiles: &[PerfProfile]) {
        for p in profiles {
            self.explored.entry(p.choice).or_insert(*p);
        }
        self.unexplored.clear();
        self.rebuild_ladder();
    }

    fn rebuild_ladder(&mut self) {
        let all: Vec<PerfProfile> = self.explored.values().copied().collect();
        self.pruned_ladder = prune_dominated(&all);
        self.current_rung = 0;
        self.reset_counters();
    }

    fn reset_counters(&mut self) {
        self.hot_steps = 0;
        self.calm_steps = 0;
        self.latency_ema = self
            .pruned_ladder
            .get(self.current_rung)
            .map_or(0.0, |p| p.step_latency_seconds);
    }

    /// Records one benchmark after removing the estimated background draw.
    /// The recorded power never drops below 1% of what was measured.
    pub fn record_measurement(&mut self, choice: ExecutionChoice, step_latency_seconds: f64, measured_power_watts: f64) -> PerfProfile {
        let power = (measured_power_watts - self.background_power_watts).max(0.01 * measured_power_watts);
        let profile = PerfProfile::new(choice, step_latency_seconds, power);
        self.explored.insert(choice, profile);
        profile
    }

    /// Benchmarks the next unexplored choice. Returns the recorded profile and
    /// the number of steps spent on it. The ladder is built once the last
    /// pending choice has been measured.
    pub fn explore_step(
        &mut self,
        request: &TrainingRequest,
        workload: &WorkloadModel,
        soc: &SocSpec,
        policy: &EnginePolicy,
        ambient_watts: f64,
    ) -> Result<(PerfProfile, u32), EngineError> {
        // the synthetic model is deterministic, so the amortised per-step cost
        // over the benchmark equals the single-step profile
        self.explore_with(request, policy, |choice, _| {
            let truth = simulate_profile(workload, &choice, soc);
            (truth.step_latency_seconds, truth.avg_power_watts + ambient_watts)
        })
    }

    /// Like [`Self::explore_step`], with the measurement supplied by `measure`,
    /// which gets the choice and the benchmark length and returns the mean step
    /// latency and the total measured power.
    pub fn explore_with(
        &mut self,
        request: &TrainingRequest,
        policy: &EnginePolicy,
        measure: impl FnOnce(ExecutionChoice, u32) -> (f64, f64),
    ) -> Result<(PerfProfile, u32), EngineError> {
        let choice = self.unexplored.pop_front().ok_or(EngineError::ExplorationComplete)?;
        let steps = benchmark_steps(request, policy);
        let (latency, power) = measure(choice, steps);
        let profile = self.record_measurement(choice, latency, power);
        if self.unexplored.is_empty() {
            self.rebuild_ladder();
        }
        Ok((profile, steps))
    }

    pub fn current_choice(&self) -> Result<&PerfProfile, EngineError> {
        self.pruned_ladder.get(self.current_rung).ok_or(EngineError::NotExplored)
    }

    /// Feeds one observed step latency into the migration loop.
    pub fn control_loop_step(&mut self, observed_latency: f64, policy: &EnginePolicy) -> Result<MigrationAction, EngineError> {
        let expected = self.current_choice()?.step_latency_seconds;
        let a = policy.ema_alpha;
        self.latency_ema = a * observed_latency + (1.0 - a) * self.latency_ema;

        if self.latency_ema > policy.downgrade_ratio * expected {
            self.hot_steps += 1;
            self.calm_steps = 0;
        } else {
            self.hot_steps = 0;
            if self.latency_ema <= policy.upgrade_ratio * expected {
                self.calm_steps += 1;
            } else {
                self.calm_steps = 0;
            }
        }

        if self.hot_steps >= policy.downgrade_window && self.current_rung + 1 < self.pruned_ladder.len() {
            self.current_rung += 1;
            self.reset_counters();
            return Ok(MigrationAction::Downgrade);
        }
        if self.current_rung > 0 && self.calm_steps >= policy.upgrade_cooldown {
            self.current_rung -= 1;
            self.reset_counters();
            return Ok(MigrationAction::Upgrade);
        }
        Ok(MigrationAction::Stay)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::soc::{enumerate_choices, ClassMap};

    fn status(level: f64, state: BatteryState, temp: f64, idle: bool) -> DeviceStatus {
        DeviceStatus {
            battery_level: level,
            battery_state: state,
            temperature_celsius: temp,
            is_idle: idle,
            contended_classes: ClassSet::EMPTY,
        }
    }

    #[test]
    fn admission_rules() {
        let p = EnginePolicy::default();
        use BatteryState::*;
        assert_eq!(admit(&status(90.0, Charging, 36.0, true), &p, false), Admission::Decline(DeclineReason::Hot));
        assert_eq!(admit(&status(90.0, Discharging, 30.0, true), &p, false), Admission::AcceptExplore);
        assert_eq!(admit(&status(20.0, Charging, 30.0, false), &p, true), Admission::AcceptTrain);
        assert_eq!(admit(&status(39.0, Discharging, 30.0, true), &p, true), Admission::Decline(DeclineReason::Battery));
        assert_eq!(admit(&status(40.0, Discharging, 30.0, true), &p, true), Admission::AcceptTrain);
        // busy devices never explore
        assert_eq!(admit(&status(90.0, Discharging, 30.0, false), &p, false), Admission::AcceptTrain);
        assert_eq!(admit(&status(35.0, NotDischarging, 30.0, true), &p, false), Admission::Decline(DeclineReason::Battery));
    }

    #[test]
    fn policy_validation() {
        assert!(EnginePolicy::default().validate().is_ok());
        let bad = EnginePolicy { upgrade_ratio: 1.3, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = EnginePolicy { downgrade_window: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(TrainingRequest::new("w", 0, 5).is_err());
        assert!(TrainingRequest::new("w", 6, 5).is_err());
    }

    fn soc() -> SocSpec {
        SocSpec::clustered("p3", 4, 4, 0, 10800.0, 3.95, 0.2).unwrap()
    }

    #[test]
    fn background_power_estimates() {
        let s = soc();
        let window = [RawSample::new(0, 50.5), RawSample::new(3600, 49.5)];
        assert!((estimate_background_power(&window, &s) - 0.1185).abs() < 1e-9);
        let flat = [RawSample::new(0, 50.0), RawSample::new(3600, 50.0)];
        assert_eq!(estimate_background_power(&flat, &s), 0.0);
        assert_eq!(estimate_background_power(&[], &s), 0.2);
    }

    #[test]
    fn background_subtraction_and_clamp() {
        let mut st = EngineState::new([], 0.5);
        let p = st.record_measurement(ExecutionChoice::new(0, 1, 0), 1.0, 3.0);
        assert_eq!(p.avg_power_watts, 2.5);
        let mut st = EngineState::new([], 5.0);
        let p = st.record_measurement(ExecutionChoice::new(0, 1, 0), 1.0, 3.0);
        assert!((p.avg_power_watts - 0.03).abs() < 1e-12);
    }

    #[test]
    fn exploration_builds_ladder() {
        let s = soc();
        let w = WorkloadModel::new("w", 100.0, ClassMap::new(2.0, 10.0, 0.0), 0.05, ClassMap::new(0.3, 1.0, 0.0)).unwrap();
        let choices = enumerate_choices(&s, false);
        let mut st = EngineState::new(choices.clone(), 0.0);
        let req = TrainingRequest::new("w", 2, 10).unwrap();
        let policy = EnginePolicy::default();
        assert!(st.current_choice().is_err());
        for i in 0..choices.len() {
            assert!(!st.exploration_complete(), "complete early at {i}");
            let (_, steps) = st.explore_step(&req, &w, &s, &policy, 0.0).unwrap();
            assert_eq!(steps, 8);
        }
        assert!(st.exploration_complete());
        assert_eq!(st.explored.len(), 8);
        assert_eq!(
            st.explore_step(&req, &w, &s, &policy, 0.0),
            Err(EngineError::ExplorationComplete)
        );
        let fastest = st
            .explored
            .values()
            .min_by(|a, b| a.step_latency_seconds.total_cmp(&b.step_latency_seconds))
            .unwrap();
        assert_eq!(st.current_choice().unwrap().choice, fastest.choice);
    }

    fn two_rung() -> EngineState {
        EngineState::from_profiles(
            &[
                PerfProfile::new(ExecutionChoice::new(0, 1, 0), 1.0, 1.0),
                PerfProfile::new(ExecutionChoice::new(1, 0, 0), 4.0, 0.3),
            ],
            0.0,
        )
    }

    #[test]
    fn downgrade_after_three_slow_steps() {
        let p = EnginePolicy::default();
        let mut st = two_rung();
        assert_eq!(st.control_loop_step(2.0, &p).unwrap(), MigrationAction::Stay);
        assert!((st.latency_ema - 1.3).abs() < 1e-12);
        assert_eq!(st.control_loop_step(2.0, &p).unwrap(), MigrationAction::Stay);
        assert!((st.latency_ema - 1.51).abs() < 1e-12);
        assert_eq!(st.control_loop_step(2.0, &p).unwrap(), MigrationAction::Downgrade);
        assert_eq!(st.current_rung, 1);
        assert!(st.current_choice().unwrap().choice < st.pruned_ladder[0].choice);
    }

    #[test]
    fn steady_latency_stays_put() {
        let p = EnginePolicy::default();
        let mut st = two_rung();
        for _ in 0..1000 {
            assert_eq!(st.control_loop_step(1.0, &p).unwrap(), MigrationAction::Stay);
        }
        assert_eq!(st.current_rung, 0);
    }

    #[test]
    fn upgrade_after_cooldown() {
        let p = EnginePolicy::default();
        let mut st = two_rung();
        while st.control_loop_step(2.0, &p).unwrap() != MigrationAction::Downgrade {}
        for i in 1..=30 {
            let act = st.control_loop_step(4.0, &p).unwrap();
            assert_eq!(act == MigrationAction::Upgrade, i == 30, "step {i}");
        }
        assert_eq!(st.current_rung, 0);
    }

    #[test]
    fn single_rung_never_moves() {
        let p = EnginePolicy::default();
        let mut st = EngineState::from_profiles(&[PerfProfile::new(ExecutionChoice::new(0, 1, 0), 1.0, 1.0)], 0.0);
        for _ in 0..50 {
            assert_eq!(st.control_loop_step(10.0, &p).unwrap(), MigrationAction::Stay);
        }
        let mut empty = EngineState::new([], 0.0);
        assert_eq!(empty.control_loop_step(1.0, &p), Err(EngineError::NotExplored));
    }
}
