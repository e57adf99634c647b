//! Round loop: availability, selection, local training, aggregation and the
//! two-policy comparison.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{EnergyLedger, DEFAULT_CRITICAL_LEVEL_PERCENT};
use crate::engine::{
    admit, benchmark_steps, estimate_background_power, Admission, EnginePolicy, EngineState, TrainingRequest,
};
use crate::soc::{enumerate_choices, simulate_profile, ClassSet, ExecutionChoice, PerfProfile, SocSpec, WorkloadModel};
use crate::trace::{base_id_of, shift_hours_of, BatteryState, DeviceTrace, SECONDS_PER_DAY, SECONDS_PER_HOUR};

use super::client::{assign_exploration, derive_foreground_sessions, latency_inflation, ClientSim};
use super::task::{fedavg_aggregate, LogisticModel, ModelParams, Sample, SyntheticTask, TaskConfig};
use super::{SchedulingPolicy, SimError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlConfig {
    pub clients_per_round: usize,
    pub round_deadline_seconds: f64,
    pub local_steps: u32,
    pub lr: f64,
    pub batch: usize,
    pub max_rounds: u32,
    /// Stop once the global model reaches this accuracy.
    pub target_accuracy: Option<f64>,
    pub inflation_factor: f64,
    /// First round starts this long after the latest trace start.
    pub start_offset_seconds: i64,
    pub min_real_batches: u32,
}

impl Default for FlConfig {
    fn default() -> Self {
        Self {
            clients_per_round: 10,
            round_deadline_seconds: 600.0,
            local_steps: 50,
            lr: 0.05,
            batch: 16,
            max_rounds: 100,
            target_accuracy: None,
            inflation_factor: 2.0,
            start_offset_seconds: 0,
            min_real_batches: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyConfig {
    pub critical_level_percent: f64,
    /// Daily budgets are drawn uniformly per device from this range.
    pub daily_budget_joules_min: f64,
    pub daily_budget_joules_max: f64,
    /// Draws budgets from their own generator instead of the run's.
    pub seed: Option<u64>,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            critical_level_percent: DEFAULT_CRITICAL_LEVEL_PERCENT,
            daily_budget_joules_min: 2000.0,
            daily_budget_joules_max: 6000.0,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    #[serde(default)]
    pub fl: FlConfig,
    #[serde(default)]
    pub engine_policy: EnginePolicy,
    #[serde(default)]
    pub energy: EnergyConfig,
    #[serde(default)]
    pub task: TaskConfig,
}

impl SimConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            fl: FlConfig::default(),
            engine_policy: EnginePolicy::default(),
            energy: EnergyConfig::default(),
            task: TaskConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.into()));
        let fl = &self.fl;
        if fl.clients_per_round < 1 {
            return bad("fl.clients_per_round must be >= 1");
        }
        if !(fl.round_deadline_seconds > 0.0) {
            return bad("fl.round_deadline_seconds must be > 0");
        }
        if fl.local_steps < 1 || fl.min_real_batches < 1 {
            return bad("fl.local_steps and fl.min_real_batches must be >= 1");
        }
        if !(fl.lr > 0.0) {
            return bad("fl.lr must be > 0");
        }
        if fl.batch < 1 {
            return bad("fl.batch must be >= 1");
        }
        if !(fl.inflation_factor >= 1.0) {
            return bad("fl.inflation_factor must be >= 1");
        }
        let e = &self.energy;
        if !(e.daily_budget_joules_min >= 0.0 && e.daily_budget_joules_min <= e.daily_budget_joules_max) {
            return bad("energy budgets need 0 <= daily_budget_joules_min <= daily_budget_joules_max");
        }
        if !(0.0..100.0).contains(&e.critical_level_percent) {
            return bad("energy.critical_level_percent must be in [0, 100)");
        }
        self.engine_policy.validate()?;
        Ok(())
    }
}

/// One SoC model with the per-choice behaviour its devices observe.
#[derive(Debug, Clone, PartialEq)]
pub struct SocFleet {
    pub soc: SocSpec,
    /// Choices Swan explores on this SoC.
    pub choices: Vec<ExecutionChoice>,
    /// What a benchmark measures, for every explorable choice and the greedy one.
    pub truth: BTreeMap<ExecutionChoice, PerfProfile>,
}

impl SocFleet {
    pub fn from_model(soc: SocSpec, workload: &WorkloadModel, allow_cross_cluster: bool) -> Self {
        let choices = enumerate_choices(&soc, allow_cross_cluster);
        let truth = choices
            .iter()
            .chain(std::iter::once(&soc.greedy_choice()))
            .map(|c| (*c, simulate_profile(workload, c, &soc)))
            .collect();
        Self { soc, choices, truth }
    }

    pub fn from_profiles(soc: SocSpec, choices: Vec<ExecutionChoice>, profiles: &[PerfProfile]) -> Result<Self, SimError> {
        let fleet = Self {
            truth: profiles.iter().map(|p| (p.choice, *p)).collect(),
            soc,
            choices,
        };
        for c in fleet.choices.iter().chain(std::iter::once(&fleet.soc.greedy_choice())) {
            fleet.truth_of(c)?;
        }
        Ok(fleet)
    }

    fn truth_of(&self, choice: &ExecutionChoice) -> Result<&PerfProfile, SimError> {
        self.truth.get(choice).ok_or_else(|| SimError::MissingProfile {
            soc: self.soc.name.clone(),
            choice: choice.to_string(),
        })
    }
}

/// Profiles reported per SoC model.
#[derive(Debug, Clone, Default)]
pub(crate) struct Coordinator {
    reported: Vec<BTreeMap<ExecutionChoice, PerfProfile>>,
    wanted: Vec<BTreeSet<ExecutionChoice>>,
}

impl Coordinator {
    pub(crate) fn new(fleets: &[SocFleet]) -> Self {
        Self {
            reported: vec![BTreeMap::new(); fleets.len()],
            wanted: fleets.iter().map(|f| f.choices.iter().copied().collect()).collect(),
        }
    }

    /// Keeps the first report per choice.
    pub(crate) fn report(&mut self, soc: usize, profiles: &[PerfProfile]) {
        for p in profiles {
            self.reported[soc].entry(p.choice).or_insert(*p);
        }
    }

    pub(crate) fn is_complete(&self, soc: usize) -> bool {
        self.wanted[soc].iter().all(|c| self.reported[soc].contains_key(c))
    }

    pub(crate) fn profiles(&self, soc: usize) -> Vec<PerfProfile> {
        self.reported[soc].values().copied().collect()
    }

    /// Engine for a device that joins now: the merged set when it is complete,
    /// otherwise its own share of the exploration.
    pub(crate) fn engine_for(&self, soc: usize, to_explore: Vec<ExecutionChoice>, background_watts: f64) -> (EngineState, bool) {
        if self.is_complete(soc) {
            (EngineState::from_profiles(&self.profiles(soc), background_watts), true)
        } else {
            (EngineState::new(to_explore, background_watts), false)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round_index: u32,
    /// Elapsed simulated time at the end of the round.
    pub sim_time_seconds: f64,
    pub selected: usize,
    pub online: usize,
    pub completed: usize,
    pub round_duration_seconds: f64,
    pub round_energy_joules: f64,
    pub eval_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRecord {
    pub round_index: u32,
    pub device_id: String,
    /// Last choice trained on, empty when no step ran.
    pub choice: String,
    pub steps: u32,
    pub wall_seconds: f64,
    pub joules: f64,
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRun {
    pub policy: SchedulingPolicy,
    pub reports: Vec<RoundReport>,
    pub clients: Vec<ClientRecord>,
}

impl SimRun {
    pub fn total_energy_joules(&self) -> f64 {
        self.reports.iter().map(|r| r.round_energy_joules).sum()
    }
}

struct LocalOutcome {
    delta: Option<ModelParams>,
    steps: u32,
    wall_seconds: f64,
    joules: f64,
    last_choice: Option<ExecutionChoice>,
    benchmarks: Vec<PerfProfile>,
}

struct RoundContext<'a> {
    fleet: &'a SocFleet,
    model: LogisticModel,
    config: &'a SimConfig,
    policy: SchedulingPolicy,
}

/// Runs `steps` minibatch SGD steps from `global` on the client's shard.
///
/// Swan benchmarks pending choices first when admitted to explore, then trains
/// on its ladder under the migration loop; the baseline always runs the greedy
/// choice. The update is dropped if the client hits the deadline or its ledger
/// becomes unavailable.
fn local_training(
    ctx: &RoundContext<'_>,
    client: &mut ClientSim,
    global: &ModelParams,
    steps: u32,
    admission: Admission,
    round_start: i64,
    rng: &mut ChaCha8Rng,
) -> Result<LocalOutcome, SimError> {
    let fl = &ctx.config.fl;
    let policy = &ctx.config.engine_policy;
    let request = TrainingRequest::new("task", fl.min_real_batches, fl.local_steps.max(fl.min_real_batches))?;
    let bench_len = benchmark_steps(&request, policy);
    let greedy = ctx.fleet.soc.greedy_choice();
    let explore = ctx.policy == SchedulingPolicy::Swan && admission == Admission::AcceptExplore;

    let mut params = global.clone();
    let mut out = LocalOutcome {
        delta: None,
        steps: 0,
        wall_seconds: 0.0,
        joules: 0.0,
        last_choice: None,
        benchmarks: Vec::new(),
    };
    let mut completed = true;
    // (choice, steps done, summed latency)
    let mut bench: Option<(ExecutionChoice, u32, f64)> = None;

    while out.steps < steps {
        if explore && bench.is_none() {
            bench = client.engine.unexplored.front().map(|&c| (c, 0, 0.0));
        }
        let (choice, on_ladder) = match (bench, ctx.policy) {
            (Some((c, _, _)), _) => (c, false),
            (None, SchedulingPolicy::Swan) => match client.engine.current_choice() {
                Ok(p) => (p.choice, true),
                Err(_) => (greedy, false),
            },
            (None, SchedulingPolicy::GreedyBaseline) => (greedy, false),
        };
        let truth = *ctx.fleet.truth_of(&choice)?;
        let now = round_start + out.wall_seconds as i64;
        let contention = client.contention_at(now);
        let inflation = latency_inflation(
            &choice,
            contention.is_some(),
            contention.unwrap_or(ClassSet::EMPTY),
            fl.inflation_factor,
        );
        let latency = truth.step_latency_seconds * inflation;
        let energy = truth.energy_per_step_joules * inflation;
        out.last_choice = Some(choice);

        if out.wall_seconds + latency > fl.round_deadline_seconds {
            // straggler: charge the part of the step that fits
            let spent = energy * (fl.round_deadline_seconds - out.wall_seconds) / latency;
            out.joules += spent;
            client.ledger.accrue_loan(spent)?;
            out.wall_seconds = fl.round_deadline_seconds;
            completed = false;
            break;
        }

        let shard = &client.dataset_shard;
        let batch: Vec<&Sample> = (0..fl.batch).map(|_| &shard[rng.random_range(0..shard.len())]).collect();
        ctx.model.sgd_step(&mut params, &batch, fl.lr);
        out.steps += 1;
        out.wall_seconds += latency;
        out.joules += energy;
        client.ledger.accrue_loan(energy)?;

        if let Some((_, done, sum)) = bench.as_mut() {
            *done += 1;
            *sum += latency;
            if *done == bench_len {
                let mean = *sum / f64::from(*done);
                let measured = truth.avg_power_watts + client.engine.background_power_watts;
                let (profile, _) = client.engine.explore_with(&request, policy, |_, _| (mean, measured))?;
                out.benchmarks.push(profile);
                bench = None;
            }
        } else if on_ladder {
            client.engine.control_loop_step(latency, policy)?;
        }

        let level = client.sample_at(round_start + out.wall_seconds as i64).battery_level;
        if !client.ledger.is_available(level) {
            completed = false;
            break;
        }
    }

    if completed {
        out.delta = Some(params.diff(global));
    }
    Ok(out)
}

/// Longest discharging stretch within the trace's first day.
fn idle_window(trace: &DeviceTrace) -> &[crate::trace::RawSample] {
    let first = trace.samples[0].timestamp;
    let day: Vec<_> = trace
        .samples
        .iter()
        .take_while(|s| s.timestamp < first + SECONDS_PER_DAY)
        .collect();
    let (mut best, mut run_start) = ((0, 0), 0);
    for (i, s) in day.iter().enumerate() {
        if s.battery_state != Some(BatteryState::Discharging) {
            run_start = i + 1;
        } else if i + 1 - run_start > best.1 - best.0 {
            best = (run_start, i + 1);
        }
    }
    &trace.samples[best.0..best.1]
}

#[allow(clippy::too_many_arguments)]
fn build_clients(
    traces: &[DeviceTrace],
    fleets: &[SocFleet],
    config: &SimConfig,
    policy: SchedulingPolicy,
    task: &SyntheticTask,
    start: i64,
    coordinator: &Coordinator,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ClientSim>, SimError> {
    let mut order: Vec<&DeviceTrace> = traces.iter().collect();
    order.sort_by(|a, b| a.device_id.cmp(&b.device_id));

    let bases: BTreeSet<&str> = order.iter().map(|t| base_id_of(&t.device_id)).collect();
    let soc_of_base: BTreeMap<&str, usize> = bases.into_iter().enumerate().map(|(i, b)| (b, i % fleets.len())).collect();
    let socs: Vec<usize> = order.iter().map(|t| soc_of_base[base_id_of(&t.device_id)]).collect();

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &s) in socs.iter().enumerate() {
        groups.entry(s).or_default().push(i);
    }
    let choices: BTreeMap<usize, Vec<ExecutionChoice>> =
        fleets.iter().enumerate().map(|(i, f)| (i, f.choices.clone())).collect();
    let mut assignments = assign_exploration(&groups, &choices, order.len());

    let e = &config.energy;
    let mut budget_rng = e.seed.map(ChaCha8Rng::seed_from_u64);
    let mut clients = Vec::with_capacity(order.len());
    for (i, trace) in order.into_iter().enumerate() {
        let fleet = &fleets[socs[i]];
        let shard = task.shard(rng);
        let budget = if e.daily_budget_joules_max > e.daily_budget_joules_min {
            let range = e.daily_budget_joules_min..=e.daily_budget_joules_max;
            match budget_rng.as_mut() {
                Some(r) => r.random_range(range),
                None => rng.random_range(range),
            }
        } else {
            e.daily_budget_joules_min
        };
        let session_seed: u64 = rng.random();

        let offset = i64::from(shift_hours_of(&trace.device_id)) * SECONDS_PER_HOUR;
        let background = estimate_background_power(idle_window(trace), &fleet.soc);
        let (engine, full) = match policy {
            SchedulingPolicy::Swan => coordinator.engine_for(socs[i], std::mem::take(&mut assignments[i]), background),
            SchedulingPolicy::GreedyBaseline => (EngineState::new([], background), false),
        };
        let ledger = EnergyLedger::new(
            budget,
            e.critical_level_percent,
            fleet.soc.nominal_voltage,
            fleet.soc.battery_capacity_coulombs,
            (start - offset).div_euclid(SECONDS_PER_DAY),
        );
        clients.push(ClientSim {
            device_id: trace.device_id.clone(),
            foreground_sessions: derive_foreground_sessions(trace, session_seed, offset),
            trace: trace.clone(),
            local_offset_seconds: offset,
            soc_index: socs[i],
            engine,
            has_full_ladder: full,
            ledger,
            dataset_shard: shard,
        });
    }
    Ok(clients)
}

/// Simulates federated training of the synthetic task over `traces`.
///
/// Base devices are assigned to `fleets` round-robin in id order; shifted
/// copies share their base device's SoC. All randomness comes from one
/// generator seeded with `config.seed`, so both policies see the same shards,
/// budgets and foreground sessions.
pub fn run_simulation(
    traces: &[DeviceTrace],
    fleets: &[SocFleet],
    config: &SimConfig,
    policy: SchedulingPolicy,
) -> Result<SimRun, SimError> {
    config.validate()?;
    if fleets.is_empty() {
        return Err(SimError::Config("at least one soc is required".into()));
    }
    if traces.is_empty() || traces.iter().any(|t| t.samples.is_empty()) {
        return Err(SimError::Config("corpus is empty".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let task = SyntheticTask::new(&config.task, &mut rng)?;
    let eval = task.eval_set(&mut rng);
    let epoch = traces.iter().map(|t| t.samples[0].timestamp).max().expect("non-empty corpus");
    let start = epoch + config.fl.start_offset_seconds;

    let mut coordinator = Coordinator::new(fleets);
    let mut clients = build_clients(traces, fleets, config, policy, &task, start, &coordinator, &mut rng)?;

    let fl = &config.fl;
    let mut global = ModelParams::zeros(task.model.dim());
    let mut elapsed = 0.0_f64;
    let mut reports = Vec::new();
    let mut records = Vec::new();

    for round in 0..fl.max_rounds {
        let now = start + elapsed as i64;
        for c in clients.iter_mut() {
            let day = c.local_day(now);
            if day > c.ledger.last_settlement_day {
                c.ledger.settle_day(day)?;
            }
        }

        let mut online = Vec::new();
        for (i, c) in clients.iter().enumerate() {
            let status = c.status_at(now);
            let explored = match policy {
                SchedulingPolicy::GreedyBaseline => true,
                SchedulingPolicy::Swan => c.engine.exploration_complete(),
            };
            let admission = admit(&status, &config.engine_policy, explored);
            if admission.accepted() && c.ledger.is_available(status.battery_level) {
                online.push((i, admission));
            }
        }

        if online.is_empty() {
            elapsed += fl.round_deadline_seconds;
            reports.push(RoundReport {
                round_index: round,
                sim_time_seconds: elapsed,
                selected: 0,
                online: 0,
                completed: 0,
                round_duration_seconds: fl.round_deadline_seconds,
                round_energy_joules: 0.0,
                eval_accuracy: task.model.accuracy(&global, &eval),
            });
            continue;
        }

        let k = fl.clients_per_round.min(online.len());
        let mut picks = sample_indices(&mut rng, online.len(), k).into_vec();
        picks.sort_unstable();
        let selected: Vec<(usize, Admission, u64)> = picks
            .into_iter()
            .map(|p| (online[p].0, online[p].1, rng.random()))
            .collect();

        let mut updates = Vec::new();
        let mut duration = 0.0_f64;
        let mut energy = 0.0;
        for &(i, admission, seed) in &selected {
            let client = &mut clients[i];
            let ctx = RoundContext {
                fleet: &fleets[client.soc_index],
                model: task.model,
                config,
                policy,
            };
            let loan_before = client.ledger.loan_joules;
            let mut client_rng = ChaCha8Rng::seed_from_u64(seed);
            let out = local_training(&ctx, client, &global, fl.local_steps, admission, now, &mut client_rng)?;
            if (client.ledger.loan_joules - loan_before - out.joules).abs() > 1e-6 * out.joules.max(1.0) {
                return Err(SimError::Invariant(format!("{}: loan delta != round energy", client.device_id)));
            }
            coordinator.report(client.soc_index, &out.benchmarks);
            duration = duration.max(out.wall_seconds);
            energy += out.joules;
            records.push(ClientRecord {
                round_index: round,
                device_id: client.device_id.clone(),
                choice: out.last_choice.map(|c| c.to_string()).unwrap_or_default(),
                steps: out.steps,
                wall_seconds: out.wall_seconds,
                joules: out.joules,
                completed: out.delta.is_some(),
            });
            if let Some(delta) = out.delta {
                updates.push((delta, client.dataset_shard.len()));
            }
        }

        let completed = updates.len();
        if !updates.is_empty() {
            global.add_assign(&fedavg_aggregate(&updates)?);
            if !global.is_finite() {
                return Err(SimError::Invariant("global model is not finite".into()));
            }
        }
        elapsed += duration;
        let accuracy = task.model.accuracy(&global, &eval);
        reports.push(RoundReport {
            round_index: round,
            sim_time_seconds: elapsed,
            selected: selected.len(),
            online: online.len(),
            completed,
            round_duration_seconds: duration,
            round_energy_joules: energy,
            eval_accuracy: accuracy,
        });

        if policy == SchedulingPolicy::Swan {
            for c in clients.iter_mut() {
                if !c.has_full_ladder && coordinator.is_complete(c.soc_index) {
                    c.engine.adopt_profiles(&coordinator.profiles(c.soc_index));
                    c.has_full_ladder = true;
                }
            }
        }
        if fl.target_accuracy.is_some_and(|t| accuracy >= t) {
            break;
        }
    }

    Ok(SimRun {
        policy,
        reports,
        clients: records,
    })
}

/// Time and energy for two runs to reach the lower of their best accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub target_accuracy: f64,
    pub seconds_a: Option<f64>,
    pub seconds_b: Option<f64>,
    /// `seconds_b / seconds_a`.
    pub speedup: Option<f64>,
    /// When only one run reaches the target: whether that was `a`.
    pub a_wins_outright: Option<bool>,
    pub joules_a: Option<f64>,
    pub joules_b: Option<f64>,
    /// `joules_b / joules_a`.
    pub energy_efficiency: Option<f64>,
}

fn reach(reports: &[RoundReport], target: f64) -> Option<(f64, f64)> {
    let mut joules = 0.0;
    for r in reports {
        joules += r.round_energy_joules;
        if r.eval_accuracy >= target {
            return Some((r.sim_time_seconds, joules));
        }
    }
    None
}

pub fn time_to_accuracy(a: &[RoundReport], b: &[RoundReport]) -> Option<Comparison> {
    let best = |rs: &[RoundReport]| rs.iter().map(|r| r.eval_accuracy).reduce(f64::max);
    let target = best(a)?.min(best(b)?);
    let (ra, rb) = (reach(a, target), reach(b, target));
    let ratio = |x: Option<f64>, y: Option<f64>| match (x, y) {
        (Some(x), Some(y)) if x > 0.0 => Some(y / x),
        _ => None,
    };
    Some(Comparison {
        target_accuracy: target,
        seconds_a: ra.map(|r| r.0),
        seconds_b: rb.map(|r| r.0),
        speedup: ratio(ra.map(|r| r.0), rb.map(|r| r.0)),
        a_wins_outright: match (ra, rb) {
            (Some(_), None) => Some(true),
            (None, Some(_)) => Some(false),
            _ => None,
        },
        joules_a: ra.map(|r| r.1),
        joules_b: rb.map(|r| r.1),
        energy_efficiency: ratio(ra.map(|r| r.1), rb.map(|r| r.1)),
    })
}
