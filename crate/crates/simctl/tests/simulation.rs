mod common;

use common::*;
use proptest::prelude::*;
use socsim::flsim::{run_simulation, time_to_accuracy, SchedulingPolicy, SimConfig, SocFleet};
use socsim::soc::{SocSpec, WorkloadModel};
use socsim::trace::DeviceTrace;

fn small_corpus() -> Vec<DeviceTrace> {
    preprocessed(raw_corpus(8, 28, 4), 2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn round_reports_are_consistent(seed in any::<u64>(), swan in any::<bool>(), per_round in 1usize..12) {
        let traces = small_corpus();
        let mut config = desk_config(seed);
        config.fl.max_rounds = 15;
        config.fl.clients_per_round = per_round;
        let policy = if swan { SchedulingPolicy::Swan } else { SchedulingPolicy::GreedyBaseline };
        let run = run_simulation(&traces, &desk_fleet(), &config, policy).unwrap();
        let mut last_time = 0.0;
        for r in &run.reports {
            prop_assert!(r.completed <= r.selected && r.selected <= r.online && r.online <= traces.len());
            prop_assert!(r.selected <= per_round);
            prop_assert!(r.round_duration_seconds <= config.fl.round_deadline_seconds);
            prop_assert!(r.sim_time_seconds > last_time);
            last_time = r.sim_time_seconds;
            let joules: f64 = run.clients.iter().filter(|c| c.round_index == r.round_index).map(|c| c.joules).sum();
            prop_assert!((joules - r.round_energy_joules).abs() <= 1e-9 * joules.max(1.0));
        }
    }
}

/// Without foreground interference and with energy out of the picture both
/// policies train the same clients on the same batches, so only step time
/// separates them.
#[test]
fn interference_free_speedup_tracks_per_step_speedup() {
    let traces = preprocessed(raw_corpus(20, 28, 8), 1);
    let soc = SocSpec::clustered("roomy", 4, 4, 0, 1e9, 3.85, 0.2).unwrap();
    let workload: WorkloadModel = shufflenet_like();
    let fleet = SocFleet::from_model(soc.clone(), &workload, false);
    let greedy = fleet.truth.get(&soc.greedy_choice()).unwrap().step_latency_seconds;
    let best = fleet.truth.values().map(|p| p.step_latency_seconds).fold(f64::INFINITY, f64::min);
    let k = greedy / best;

    let mut config = SimConfig::new(3);
    config.fl.inflation_factor = 1.0;
    config.fl.local_steps = 50;
    config.fl.round_deadline_seconds = 1000.0;
    config.fl.max_rounds = 200;
    config.fl.start_offset_seconds = 11 * 3600;
    config.engine_policy.min_battery_percent = 0.0;
    config.energy.critical_level_percent = 0.0;
    config.task.feature_scale = 0.1;

    let base = run_simulation(&traces, std::slice::from_ref(&fleet), &config, SchedulingPolicy::GreedyBaseline).unwrap();
    let swan = run_simulation(&traces, &[fleet], &config, SchedulingPolicy::Swan).unwrap();
    let accuracy = |run: &socsim::flsim::SimRun| run.reports.iter().map(|r| r.eval_accuracy).collect::<Vec<_>>();
    assert_eq!(accuracy(&base), accuracy(&swan));

    let cmp = time_to_accuracy(&swan.reports, &base.reports).unwrap();
    let speedup = cmp.speedup.unwrap();
    assert!((speedup - k).abs() <= 0.2 * k, "speedup {speedup:.2} vs per-step {k:.2}");
}
