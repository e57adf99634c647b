//! Experiment configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use socsim::engine::EnginePolicy;
use socsim::flsim::{EnergyConfig, FlConfig, SchedulingPolicy, SimConfig, TaskConfig};
use socsim::soc::{ClassMap, SocSpec, WorkloadModel};

use crate::CliError;

pub const COULOMBS_PER_MAH: f64 = 3.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusPaths {
    /// Directory written by `preprocess`.
    pub dir: PathBuf,
    /// Profile database written by `profile`.
    pub profiles: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SocConfig {
    pub name: String,
    pub low_power_cores: u32,
    pub low_latency_cores: u32,
    #[serde(default)]
    pub prime_cores: u32,
    pub battery_mah: f64,
    pub nominal_voltage: f64,
    pub idle_power_watts: f64,
}

impl SocConfig {
    pub fn spec(&self) -> Result<SocSpec, CliError> {
        SocSpec::clustered(
            &self.name,
            self.low_power_cores,
            self.low_latency_cores,
            self.prime_cores,
            self.battery_mah * COULOMBS_PER_MAH,
            self.nominal_voltage,
            self.idle_power_watts,
        )
        .map_err(|e| CliError::Config(format!("socs.{}: {e}", self.name)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadConfig {
    pub name: String,
    pub base_work_units: f64,
    pub class_speed: ClassMap<f64>,
    pub memory_intensity: f64,
    pub class_power: ClassMap<f64>,
}

impl WorkloadConfig {
    pub fn model(&self) -> Result<WorkloadModel, CliError> {
        WorkloadModel::new(
            &self.name,
            self.base_work_units,
            self.class_speed,
            self.memory_intensity,
            self.class_power,
        )
        .map_err(|e| CliError::Config(format!("workloads.{}: {e}", self.name)))
    }
}

fn all_policies() -> Vec<SchedulingPolicy> {
    SchedulingPolicy::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub corpus: CorpusPaths,
    pub socs: Vec<SocConfig>,
    pub workloads: Vec<WorkloadConfig>,
    /// Workload trained in `simulate`.
    pub workload: String,
    /// Also explore choices that span clusters.
    #[serde(default)]
    pub allow_cross_cluster: bool,
    #[serde(default)]
    pub engine_policy: EnginePolicy,
    #[serde(default)]
    pub energy: EnergyConfig,
    #[serde(default)]
    pub fl: FlConfig,
    #[serde(default)]
    pub task: TaskConfig,
    #[serde(default = "all_policies")]
    pub policies: Vec<SchedulingPolicy>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let config: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Corpus paths with relative entries taken from the config file's directory.
    pub fn resolved_corpus(&self, config_path: &Path) -> CorpusPaths {
        let base = config_path.parent().unwrap_or(Path::new("."));
        CorpusPaths {
            dir: base.join(&self.corpus.dir),
            profiles: base.join(&self.corpus.profiles),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.socs.is_empty() {
            return Err(CliError::Config("socs: at least one soc is required".into()));
        }
        for (i, s) in self.socs.iter().enumerate() {
            if self.socs[..i].iter().any(|o| o.name == s.name) {
                return Err(CliError::Config(format!("socs.{}: duplicate name", s.name)));
            }
            s.spec()?;
        }
        for (i, w) in self.workloads.iter().enumerate() {
            if self.workloads[..i].iter().any(|o| o.name == w.name) {
                return Err(CliError::Config(format!("workloads.{}: duplicate name", w.name)));
            }
            w.model()?;
        }
        if !self.workloads.iter().any(|w| w.name == self.workload) {
            return Err(CliError::Config(format!("workload: `{}` is not in workloads", self.workload)));
        }
        if self.policies.is_empty() {
            return Err(CliError::Config("policies: at least one policy is required".into()));
        }
        self.sim_config()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            seed: self.seed,
            fl: self.fl.clone(),
            engine_policy: self.engine_policy.clone(),
            energy: self.energy.clone(),
            task: self.task.clone(),
        }
    }

    pub fn specs(&self) -> Result<Vec<SocSpec>, CliError> {
        self.socs.iter().map(SocConfig::spec).collect()
    }
}
