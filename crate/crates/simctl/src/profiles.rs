//! Profile database: every (soc, workload, choice) with its ladder membership.

use std::path::Path;

use serde::{Deserialize, Serialize};
use socsim::flsim::SocFleet;
use socsim::soc::{enumerate_choices, prune_dominated, simulate_profile, ExecutionChoice, PerfProfile, SocSpec, WorkloadModel};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileEntry {
    pub label: String,
    pub choice: ExecutionChoice,
    pub step_latency_seconds: f64,
    pub avg_power_watts: f64,
    pub energy_per_step_joules: f64,
    /// 1 is the cheapest choice.
    pub cost_rank: usize,
    /// Survives pruning.
    pub ladder: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSet {
    pub soc: String,
    pub workload: String,
    pub profiles: Vec<ProfileEntry>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileDb {
    pub sets: Vec<ProfileSet>,
}

impl ProfileSet {
    pub fn build(soc: &SocSpec, workload: &WorkloadModel, allow_cross_cluster: bool) -> Self {
        let choices = enumerate_choices(soc, allow_cross_cluster);
        let measured: Vec<PerfProfile> = choices.iter().map(|c| simulate_profile(workload, c, soc)).collect();
        let ladder: Vec<ExecutionChoice> = prune_dominated(&measured).iter().map(|p| p.choice).collect();
        let profiles = measured
            .iter()
            .enumerate()
            .map(|(i, p)| ProfileEntry {
                label: p.choice.label(soc),
                choice: p.choice,
                step_latency_seconds: p.step_latency_seconds,
                avg_power_watts: p.avg_power_watts,
                energy_per_step_joules: p.energy_per_step_joules,
                cost_rank: i + 1,
                ladder: ladder.contains(&p.choice),
            })
            .collect();
        Self {
            soc: soc.name.clone(),
            workload: workload.name.clone(),
            profiles,
        }
    }

    pub fn fleet(&self, soc: SocSpec) -> Result<SocFleet, CliError> {
        let choices = self.profiles.iter().map(|p| p.choice).collect();
        let profiles: Vec<PerfProfile> = self
            .profiles
            .iter()
            .map(|p| PerfProfile {
                choice: p.choice,
                step_latency_seconds: p.step_latency_seconds,
                avg_power_watts: p.avg_power_watts,
                energy_per_step_joules: p.energy_per_step_joules,
            })
            .collect();
        SocFleet::from_profiles(soc, choices, &profiles).map_err(|e| CliError::Config(format!("profiles: {e}")))
    }
}

impl ProfileDb {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::input(path, e))
    }

    pub fn find(&self, soc: &str, workload: &str) -> Option<&ProfileSet> {
        self.sets.iter().find(|s| s.soc == soc && s.workload == workload)
    }
}
