//! The four subcommands. Each returns a one-line summary for stdout.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use socsim::flsim::{run_simulation, time_to_accuracy, SchedulingPolicy, SimError, SimRun};
use socsim::trace::{
    augment_timezones, derive_battery_state, filter_traces, parse_traces, pchip_resample, write_corpus,
    write_rejections, FilterCriteria, SECONDS_PER_HOUR,
};

use crate::config::ExperimentConfig;
use crate::profiles::{ProfileDb, ProfileSet};
use crate::CliError;

pub const CORPUS_FILE: &str = "corpus.csv";
pub const REJECTIONS_FILE: &str = "rejections.csv";
pub const ROUNDS_FILE: &str = "rounds.csv";
pub const CLIENTS_FILE: &str = "clients.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.json";

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Invariant(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(path, e))
}

#[derive(Debug, Clone)]
pub struct PreprocessArgs {
    pub input: PathBuf,
    pub out: PathBuf,
    pub shifts: u32,
    pub grid_seconds: i64,
    pub criteria: FilterCriteria,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreprocessSummary {
    pub accepted: usize,
    pub rejected: usize,
    pub clients: usize,
}

/// parse -> filter -> resample -> derive states -> augment, then write the
/// corpus and the rejection list.
pub fn preprocess(args: &PreprocessArgs) -> Result<PreprocessSummary, CliError> {
    if args.grid_seconds <= 0 {
        return Err(CliError::Usage("--grid-seconds must be > 0".into()));
    }
    args.criteria
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let file = File::open(&args.input).map_err(|e| CliError::io(&args.input, e))?;
    let traces = parse_traces(BufReader::new(file)).map_err(|e| CliError::input(&args.input, e))?;

    let outcome = filter_traces(traces, &args.criteria);
    let resampled = outcome
        .accepted
        .iter()
        .map(|t| pchip_resample(t, args.grid_seconds).map(derive_battery_state))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::input(&args.input, e))?;
    let corpus = augment_timezones(&resampled, args.shifts, SECONDS_PER_HOUR);

    create_dir(&args.out)?;
    let corpus_path = args.out.join(CORPUS_FILE);
    write_corpus(create(&corpus_path)?, &corpus).map_err(|e| CliError::input(&corpus_path, e))?;
    let rejections_path = args.out.join(REJECTIONS_FILE);
    write_rejections(create(&rejections_path)?, &outcome.rejected).map_err(|e| CliError::input(&rejections_path, e))?;

    Ok(PreprocessSummary {
        accepted: outcome.accepted.len(),
        rejected: outcome.rejected.len(),
        clients: corpus.len(),
    })
}

/// Profiles every choice of every (soc, workload) pair.
pub fn profile(config_path: &Path, out: &Path) -> Result<ProfileDb, CliError> {
    let config = ExperimentConfig::load(config_path)?;
    let mut db = ProfileDb::default();
    for soc in config.specs()? {
        for w in &config.workloads {
            db.sets.push(ProfileSet::build(&soc, &w.model()?, config.allow_cross_cluster));
        }
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_json(out, &db)?;
    Ok(db)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RoundRow {
    round: u32,
    sim_time_s: f64,
    selected: usize,
    online: usize,
    completed: usize,
    duration_s: f64,
    energy_j: f64,
    accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClientRow {
    round: u32,
    device_id: String,
    choice: String,
    steps: u32,
    wall_s: f64,
    joules: f64,
    completed: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub rounds: usize,
    pub final_accuracy: f64,
    pub best_accuracy: f64,
    pub total_energy_joules: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seed: u64,
    pub workload: String,
    pub policies: BTreeMap<SchedulingPolicy, PolicySummary>,
    /// Present when both policies ran.
    pub target_accuracy: Option<f64>,
    pub time_to_target_seconds: BTreeMap<SchedulingPolicy, Option<f64>>,
    pub energy_at_target_joules: BTreeMap<SchedulingPolicy, Option<f64>>,
    /// Baseline time over Swan time.
    pub speedup: Option<f64>,
    /// Baseline energy over Swan energy, both at the target.
    pub energy_efficiency: Option<f64>,
    /// Set when only one policy reached the target: whether it was Swan.
    pub swan_wins_outright: Option<bool>,
}

impl Summary {
    pub fn from_runs(seed: u64, workload: &str, runs: &[SimRun]) -> Self {
        let policies = runs
            .iter()
            .map(|r| {
                let acc = r.reports.iter().map(|x| x.eval_accuracy);
                (
                    r.policy,
                    PolicySummary {
                        rounds: r.reports.len(),
                        final_accuracy: r.reports.last().map_or(0.0, |x| x.eval_accuracy),
                        best_accuracy: acc.fold(0.0, f64::max),
                        total_energy_joules: r.total_energy_joules(),
                    },
                )
            })
            .collect();
        let mut summary = Summary {
            seed,
            workload: workload.to_string(),
            policies,
            target_accuracy: None,
            time_to_target_seconds: BTreeMap::new(),
            energy_at_target_joules: BTreeMap::new(),
            speedup: None,
            energy_efficiency: None,
            swan_wins_outright: None,
        };
        let find = |p| runs.iter().find(|r| r.policy == p);
        if let (Some(swan), Some(base)) = (find(SchedulingPolicy::Swan), find(SchedulingPolicy::GreedyBaseline)) {
            if let Some(c) = time_to_accuracy(&swan.reports, &base.reports) {
                summary.target_accuracy = Some(c.target_accuracy);
                summary.time_to_target_seconds = BTreeMap::from([
                    (SchedulingPolicy::Swan, c.seconds_a),
                    (SchedulingPolicy::GreedyBaseline, c.seconds_b),
                ]);
                summary.energy_at_target_joules = BTreeMap::from([
                    (SchedulingPolicy::Swan, c.joules_a),
                    (SchedulingPolicy::GreedyBaseline, c.joules_b),
                ]);
                summary.speedup = c.speedup;
                summary.energy_efficiency = c.energy_efficiency;
                summary.swan_wins_outright = c.a_wins_outright;
            }
        }
        summary
    }
}

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::Config(_) | SimError::MissingProfile { .. } => CliError::Config(e.to_string()),
        _ => CliError::Invariant(e.to_string()),
    }
}

fn write_run(dir: &Path, run: &SimRun) -> Result<(), CliError> {
    create_dir(dir)?;
    let path = dir.join(ROUNDS_FILE);
    let mut w = csv::Writer::from_writer(create(&path)?);
    for r in &run.reports {
        w.serialize(RoundRow {
            round: r.round_index,
            sim_time_s: r.sim_time_seconds,
            selected: r.selected,
            online: r.online,
            completed: r.completed,
            duration_s: r.round_duration_seconds,
            energy_j: r.round_energy_joules,
            accuracy: r.eval_accuracy,
        })
        .map_err(|e| CliError::input(&path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    let path = dir.join(CLIENTS_FILE);
    let mut w = csv::Writer::from_writer(create(&path)?);
    for c in &run.clients {
        w.serialize(ClientRow {
            round: c.round_index,
            device_id: c.device_id.clone(),
            choice: c.choice.clone(),
            steps: c.steps,
            wall_s: c.wall_seconds,
            joules: c.joules,
            completed: u8::from(c.completed),
        })
        .map_err(|e| CliError::input(&path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))
}

/// Runs every configured policy over the preprocessed corpus.
pub fn simulate(config_path: &Path, out: &Path) -> Result<Summary, CliError> {
    let config = ExperimentConfig::load(config_path)?;
    let paths = config.resolved_corpus(config_path);
    let db = ProfileDb::load(&paths.profiles)?;
    let corpus_path = paths.dir.join(CORPUS_FILE);
    let file = File::open(&corpus_path).map_err(|e| CliError::io(&corpus_path, e))?;
    let traces = parse_traces(BufReader::new(file)).map_err(|e| CliError::input(&corpus_path, e))?;
    if traces.is_empty() {
        return Err(CliError::input(&corpus_path, "corpus has no traces"));
    }

    let fleets = config
        .specs()?
        .into_iter()
        .map(|soc| {
            db.find(&soc.name, &config.workload)
                .ok_or_else(|| {
                    CliError::Config(format!("profiles: no entry for soc `{}`, workload `{}`", soc.name, config.workload))
                })?
                .fleet(soc)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let sim_config = config.sim_config();
    let mut runs = Vec::new();
    for &policy in &config.policies {
        let run = run_simulation(&traces, &fleets, &sim_config, policy).map_err(sim_error)?;
        write_run(&out.join(policy.as_str()), &run)?;
        runs.push(run);
    }
    let summary = Summary::from_runs(config.seed, &config.workload, &runs);
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    write_json(&out.join(CONFIG_FILE), &config)?;
    Ok(summary)
}

/// The parts of a config that must agree for runs to be comparable.
fn comparable(mut c: ExperimentConfig) -> ExperimentConfig {
    c.seed = 0;
    c.corpus.dir = PathBuf::new();
    c.corpus.profiles = PathBuf::new();
    c
}

fn run_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Collates simulate outputs into `compare.csv` plus plot-ready series.
pub fn report(dirs: &[PathBuf], out: Option<&Path>) -> Result<PathBuf, CliError> {
    let first = dirs.first().ok_or_else(|| CliError::Usage("report needs at least one directory".into()))?;
    let out = out.unwrap_or(first).to_path_buf();

    let mut reference: Option<ExperimentConfig> = None;
    let mut compare = vec![
        "run,seed,target_accuracy,swan_time_s,baseline_time_s,speedup,swan_energy_j,baseline_energy_j,energy_efficiency"
            .to_string(),
    ];
    let mut accuracy = vec!["run,policy,round,sim_time_s,accuracy".to_string()];
    let mut online = vec!["run,policy,round,online".to_string()];

    for dir in dirs {
        let config: ExperimentConfig = read_json(&dir.join(CONFIG_FILE))?;
        let key = comparable(config.clone());
        match &reference {
            None => reference = Some(key),
            Some(r) if *r != key => {
                return Err(CliError::Config(format!(
                    "{} was run with a different configuration than {}",
                    dir.display(),
                    first.display()
                )))
            }
            Some(_) => {}
        }
        let summary: Summary = read_json(&dir.join(SUMMARY_FILE))?;
        let name = run_name(dir);
        let t = &summary.time_to_target_seconds;
        let e = &summary.energy_at_target_joules;
        compare.push(format!(
            "{name},{},{},{},{},{},{},{},{}",
            summary.seed,
            opt(summary.target_accuracy),
            opt(t.get(&SchedulingPolicy::Swan).copied().flatten()),
            opt(t.get(&SchedulingPolicy::GreedyBaseline).copied().flatten()),
            opt(summary.speedup),
            opt(e.get(&SchedulingPolicy::Swan).copied().flatten()),
            opt(e.get(&SchedulingPolicy::GreedyBaseline).copied().flatten()),
            opt(summary.energy_efficiency),
        ));

        for policy in &config.policies {
            let path = dir.join(policy.as_str()).join(ROUNDS_FILE);
            let file = File::open(&path).map_err(|e| CliError::io(&path, e))?;
            for row in csv::Reader::from_reader(BufReader::new(file)).deserialize::<RoundRow>() {
                let r = row.map_err(|e| CliError::input(&path, e))?;
                accuracy.push(format!("{name},{policy},{},{},{}", r.round, r.sim_time_s, r.accuracy));
                online.push(format!("{name},{policy},{},{}", r.round, r.online));
            }
        }
    }

    create_dir(&out)?;
    for (file, lines) in [
        ("compare.csv", &compare),
        ("accuracy_vs_time.csv", &accuracy),
        ("online_vs_round.csv", &online),
    ] {
        let path = out.join(file);
        let mut w = create(&path)?;
        for line in lines {
            writeln!(w, "{line}").map_err(|e| CliError::io(&path, e))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
    }
    Ok(out.join("compare.csv"))
}
