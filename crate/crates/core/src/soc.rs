//! SoC core inventories, execution choices, their cost order and the
//! latency/cost pruning that yields the migration ladder.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SocError {
    #[error("SoC `{0}` has no cores")]
    NoCores(String),
    #[error("SoC `{name}`: core ids must be unique and contiguous from 0")]
    CoreIds { name: String },
    #[error("SoC `{name}`: prime cores must form a single cluster")]
    SplitPrimeCluster { name: String },
    #[error("SoC `{name}`: {field} must be > 0")]
    NonPositive { name: String, field: &'static str },
    #[error("workload `{name}`: {reason}")]
    Workload { name: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CoreClass {
    LowPower,
    LowLatency,
    Prime,
}

impl CoreClass {
    pub const ALL: [CoreClass; 3] = [CoreClass::LowPower, CoreClass::LowLatency, CoreClass::Prime];
}

/// One value per core class.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassMap<T> {
    pub low_power: T,
    pub low_latency: T,
    #[serde(default)]
    pub prime: T,
}

impl<T: Copy> ClassMap<T> {
    pub fn new(low_power: T, low_latency: T, prime: T) -> Self {
        Self {
            low_power,
            low_latency,
            prime,
        }
    }

    pub fn get(&self, class: CoreClass) -> T {
        match class {
            CoreClass::LowPower => self.low_power,
            CoreClass::LowLatency => self.low_latency,
            CoreClass::Prime => self.prime,
        }
    }
}

/// Small set of core classes, e.g. the ones a foreground app is loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ClassSet(u8);

impl ClassSet {
    pub const EMPTY: ClassSet = ClassSet(0);

    pub fn of(classes: &[CoreClass]) -> Self {
        classes.iter().fold(Self::EMPTY, |s, &c| s.with(c))
    }

    pub const fn with(self, class: CoreClass) -> Self {
        ClassSet(self.0 | 1 << class as u8)
    }

    pub fn contains(self, class: CoreClass) -> bool {
        self.0 & (1 << class as u8) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Core {
    pub id: u32,
    pub class: CoreClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocSpec {
    pub name: String,
    pub cores: Vec<Core>,
    pub battery_capacity_coulombs: f64,
    pub nominal_voltage: f64,
    pub idle_power_watts: f64,
}

impl SocSpec {
    /// Builds a spec with cores numbered low-power first, then low-latency,
    /// then prime (the usual big.LITTLE numbering).
    pub fn clustered(
        name: impl Into<String>,
        low_power: u32,
        low_latency: u32,
        prime: u32,
        battery_capacity_coulombs: f64,
        nominal_voltage: f64,
        idle_power_watts: f64,
    ) -> Result<Self, SocError> {
        let classes = std::iter::repeat_n(CoreClass::LowPower, low_power as usize)
            .chain(std::iter::repeat_n(CoreClass::LowLatency, low_latency as usize))
            .chain(std::iter::repeat_n(CoreClass::Prime, prime as usize));
        let cores = classes
            .enumerate()
            .map(|(id, class)| Core { id: id as u32, class })
            .collect();
        Self::from_cores(
            name,
            cores,
            battery_capacity_coulombs,
            nominal_voltage,
            idle_power_watts,
        )
    }

    pub fn from_cores(
        name: impl Into<String>,
        mut cores: Vec<Core>,
        battery_capacity_coulombs: f64,
        nominal_voltage: f64,
        idle_power_watts: f64,
    ) -> Result<Self, SocError> {
        let name = name.into();
        if cores.is_empty() {
            return Err(SocError::NoCores(name));
        }
        cores.sort_by_key(|c| c.id);
        if cores.iter().enumerate().any(|(i, c)| c.id != i as u32) {
            return Err(SocError::CoreIds { name });
        }
        let prime_ids: Vec<u32> = cores
            .iter()
            .filter(|c| c.class == CoreClass::Prime)
            .map(|c| c.id)
            .collect();
        if prime_ids.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(SocError::SplitPrimeCluster { name });
        }
        for (field, v) in [
            ("battery_capacity_coulombs", battery_capacity_coulombs),
            ("nominal_voltage", nominal_voltage),
            ("idle_power_watts", idle_power_watts),
        ] {
            if !(v > 0.0) {
                return Err(SocError::NonPositive { name, field });
            }
        }
        Ok(Self {
            name,
            cores,
            battery_capacity_coulombs,
            nominal_voltage,
            idle_power_watts,
        })
    }

    pub fn inventory(&self) -> ClassMap<u32> {
        let count = |class| self.cores.iter().filter(|c| c.class == class).count() as u32;
        ClassMap::new(
            count(CoreClass::LowPower),
            count(CoreClass::LowLatency),
            count(CoreClass::Prime),
        )
    }

    pub fn admits(&self, choice: &ExecutionChoice) -> bool {
        let inv = self.inventory();
        choice.total() >= 1
            && CoreClass::ALL
                .iter()
                .all(|&c| choice.count(c) <= inv.get(c))
    }

    /// The thread-per-fast-core default: every low-latency and prime core, or
    /// every core when the SoC has no fast cores.
    pub fn greedy_choice(&self) -> ExecutionChoice {
        let inv = self.inventory();
        if inv.low_latency + inv.prime == 0 {
            ExecutionChoice::new(inv.low_power, 0, 0)
        } else {
            ExecutionChoice::new(0, inv.low_latency, inv.prime)
        }
    }
}

/// A canonical set of cores to train on, identified by per-class counts.
///
/// `Ord` is the cost order: the more a choice takes away from foreground
/// work, the greater it compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExecutionChoice {
    pub low_power: u32,
    pub low_latency: u32,
    pub prime: u32,
}

impl ExecutionChoice {
    pub fn new(low_power: u32, low_latency: u32, prime: u32) -> Self {
        Self {
            low_power,
            low_latency,
            prime,
        }
    }

    pub fn count(&self, class: CoreClass) -> u32 {
        match class {
            CoreClass::LowPower => self.low_power,
            CoreClass::LowLatency => self.low_latency,
            CoreClass::Prime => self.prime,
        }
    }

    pub fn total(&self) -> u32 {
        self.low_power + self.low_latency + self.prime
    }

    pub fn uses(&self, class: CoreClass) -> bool {
        self.count(class) > 0
    }

    pub fn uses_any(&self, classes: ClassSet) -> bool {
        CoreClass::ALL
            .iter()
            .any(|&c| classes.contains(c) && self.uses(c))
    }

    fn cost_key(&self) -> (u32, u32, u32) {
        (self.prime, self.low_latency, self.low_power)
    }

    /// Core-id label such as `"4567"`, taking the lowest-numbered cores of
    /// each class. Ids are comma separated once any id needs two digits.
    pub fn label(&self, soc: &SocSpec) -> String {
        let mut ids = Vec::with_capacity(self.total() as usize);
        for class in CoreClass::ALL {
            ids.extend(
                soc.cores
                    .iter()
                    .filter(|c| c.class == class)
                    .take(self.count(class) as usize)
                    .map(|c| c.id),
            );
        }
        ids.sort_unstable();
        let sep = if ids.iter().any(|&i| i >= 10) { "," } else { "" };
        ids.iter().map(u32::to_string).collect::<Vec<_>>().join(sep)
    }
}

impl Ord for ExecutionChoice {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost_key().cmp(&other.cost_key())
    }
}

impl PartialOrd for ExecutionChoice {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for ExecutionChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "lp{}-ll{}-p{}", self.low_power, self.low_latency, self.prime)
    }
}

pub fn compare_cost(a: &ExecutionChoice, b: &ExecutionChoice) -> Ordering {
    a.cmp(b)
}

/// Lists the candidate choices in ascending cost order.
///
/// Without `allow_cross_cluster` a choice stays inside the low-power cluster
/// or inside the low-latency+prime cluster.
pub fn enumerate_choices(soc: &SocSpec, allow_cross_cluster: bool) -> Vec<ExecutionChoice> {
    let inv = soc.inventory();
    let mut out = Vec::new();
    if allow_cross_cluster {
        for lp in 0..=inv.low_power {
            for ll in 0..=inv.low_latency {
                for p in 0..=inv.prime {
                    if lp + ll + p > 0 {
                        out.push(ExecutionChoice::new(lp, ll, p));
                    }
                }
            }
        }
    } else {
        out.extend((1..=inv.low_power).map(|lp| ExecutionChoice::new(lp, 0, 0)));
        for ll in 0..=inv.low_latency {
            for p in 0..=inv.prime {
                if ll + p > 0 {
                    out.push(ExecutionChoice::new(0, ll, p));
                }
            }
        }
    }
    out.sort();
    out
}

/// Per-workload performance model on one SoC's core classes.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadModel {
    pub name: String,
    pub base_work_units: f64,
    /// Work units per second per core.
    pub class_speed: ClassMap<f64>,
    /// Multi-thread contention factor; each extra core stretches a step by this much.
    pub memory_intensity: f64,
    /// Watts per active core.
    pub class_power: ClassMap<f64>,
}

impl WorkloadModel {
    pub fn new(
        name: impl Into<String>,
        base_work_units: f64,
        class_speed: ClassMap<f64>,
        memory_intensity: f64,
        class_power: ClassMap<f64>,
    ) -> Result<Self, SocError> {
        let name = name.into();
        let bad = |reason: &str| SocError::Workload {
            name: name.clone(),
            reason: reason.into(),
        };
        if !(base_work_units > 0.0) {
            return Err(bad("base_work_units must be > 0"));
        }
        if !(memory_intensity >= 0.0) {
            return Err(bad("memory_intensity must be >= 0"));
        }
        let s = class_speed;
        if !(s.low_power > 0.0 && s.low_latency >= s.low_power) {
            return Err(bad("class speeds must satisfy low_latency >= low_power > 0"));
        }
        if !(s.prime == 0.0 || s.prime >= s.low_latency) {
            return Err(bad("prime speed must be >= low_latency speed"));
        }
        let p = class_power;
        if !(p.low_power > 0.0 && p.low_latency > 0.0 && p.prime >= 0.0) {
            return Err(bad("class powers must be > 0"));
        }
        Ok(Self {
            name,
            base_work_units,
            class_speed,
            memory_intensity,
            class_power,
        })
    }
}

/// Per-local-step cost of running a workload on one choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfProfile {
    pub choice: ExecutionChoice,
    pub step_latency_seconds: f64,
    pub avg_power_watts: f64,
    pub energy_per_step_joules: f64,
}

impl PerfProfile {
    pub fn new(choice: ExecutionChoice, step_latency_seconds: f64, avg_power_watts: f64) -> Self {
        Self {
            choice,
            step_latency_seconds,
            avg_power_watts,
            energy_per_step_joules: step_latency_seconds * avg_power_watts,
        }
    }
}

/// Synthetic stand-in for benchmarking a choice on the device.
///
/// Latency is the compute time at aggregate speed stretched linearly by
/// contention; power counts only the active cores (idle draw excluded).
pub fn simulate_profile(
    workload: &WorkloadModel,
    choice: &ExecutionChoice,
    soc: &SocSpec,
) -> PerfProfile {
    debug_assert!(soc.admits(choice), "{choice} not valid on {}", soc.name);
    let mut speed = 0.0;
    let mut power = 0.0;
    for class in CoreClass::ALL {
        let n = f64::from(choice.count(class));
        speed += n * workload.class_speed.get(class);
        power += n * workload.class_power.get(class);
    }
    let contention = 1.0 + workload.memory_intensity * f64::from(choice.total() - 1);
    PerfProfile::new(*choice, workload.base_work_units / speed * contention, power)
}

/// Keeps the latency-ascending profiles whose cost undercuts every faster kept
/// profile. The result is the migration ladder: rung 0 is the fastest, and
/// each later rung is slower but strictly cheaper.
pub fn prune_dominated(profiles: &[PerfProfile]) -> Vec<PerfProfile> {
    let mut sorted = profiles.to_vec();
    sorted.sort_by(|a, b| {
        a.step_latency_seconds
            .total_cmp(&b.step_latency_seconds)
            .then_with(|| a.choice.cmp(&b.choice))
    });
    let mut kept: Vec<PerfProfile> = Vec::new();
    for p in sorted {
        match kept.last() {
            Some(last) if p.choice >= last.choice => {}
            _ => kept.push(p),
        }
    }
    kept
}
