//! Campaign driver: round clock, combination selection, power schedule,
//! mutate/execute loop, NIC triggering and telemetry.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{is_good_seed, Origin, SeedPool};
use crate::error::{Error, Result};
use crate::mpmab::{self, CombinationId, CombinationSelector, Selection};
use crate::mutation::{self, CreditTable};
use crate::nic::{self, NicConfig, NicContext, NicOutcome};
use crate::objectives::{neutral_ratio, ObjectiveRegistry, ObjectiveVector, RoundStats, SPEED};
use crate::power::{self, FuzzState, DEFAULT_ENERGY_CAP};
use crate::simtarget::{
    encode_hex, AdapterConfig, AdapterConnection, ExecutionRecord, Executor, TargetSpec,
};

pub const SNAPSHOT_VERSION: u32 = 1;
const SNAPSHOT_FILE: &str = "state.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSource {
    Spec(TargetSpec),
    Adapter {
        addr: String,
        cmp_total: Option<u64>,
        timeout_ms: u64,
    },
}

impl TargetSource {
    pub fn name(&self) -> String {
        match self {
            TargetSource::Spec(s) => s.name.clone(),
            TargetSource::Adapter { addr, .. } => addr.clone(),
        }
    }

    pub fn connect(&self) -> Result<Box<dyn Executor>> {
        Ok(match self {
            TargetSource::Spec(s) => Box::new(s.clone()),
            TargetSource::Adapter {
                addr,
                cmp_total,
                timeout_ms,
            } => Box::new(AdapterConnection::open(
                addr,
                AdapterConfig {
                    timeout: Duration::from_millis(*timeout_ms),
                    cmp_total: *cmp_total,
                },
            )?),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub num_objectives: usize,
    pub lambda: f64,
    pub gamma: f64,
    /// Executions per round.
    pub round_budget: u64,
    /// Wall-clock round length; when set it replaces the execution budget
    /// and runs are no longer reproducible.
    pub round_seconds: Option<f64>,
    pub total_rounds: u64,
    pub seed: u64,
    pub nic: NicConfig,
    pub nic_enabled: bool,
    pub energy_cap: u64,
    /// Consecutive failed executions tolerated before the campaign aborts.
    pub max_consecutive_failures: u32,
    pub target: TargetSource,
}

impl CampaignConfig {
    pub fn new(target: TargetSource, seed: u64) -> Self {
        Self {
            num_objectives: 3,
            lambda: 0.10,
            gamma: 0.01,
            round_budget: 1000,
            round_seconds: None,
            total_rounds: 1440,
            seed,
            nic: NicConfig::default(),
            nic_enabled: true,
            energy_cap: DEFAULT_ENERGY_CAP,
            max_consecutive_failures: 16,
            target,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ObjectiveRegistry::standard(self.num_objectives)?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if self.round_budget == 0 {
            return Err(Error::Config("round budget must be at least 1".into()));
        }
        if self.round_seconds.is_some_and(|s| s.is_nan() || s <= 0.0) {
            return Err(Error::Config("round length must be positive".into()));
        }
        if self.energy_cap == 0 {
            return Err(Error::Config("energy cap must be at least 1".into()));
        }
        if let TargetSource::Spec(s) = &self.target {
            s.validate()?;
        }
        self.nic.validate()
    }
}

/// Everything needed to continue a campaign, minus the target connection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignState {
    pub stats: RoundStats,
    pub selector: CombinationSelector,
    pub pool: SeedPool,
    pub credits: CreditTable,
    pub fuzz_state: FuzzState,
    pub current: Option<CombinationId>,
    pub rng: ChaCha8Rng,
    pub main_execs: u64,
    pub nic_execs: u64,
    pub nic_invocations: u64,
    pub failed_execs: u64,
    pub good_seed_history: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    version: u32,
    config: CampaignConfig,
    state: CampaignState,
}

/// One closed round as written to `rounds.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: u64,
    pub combo: CombinationId,
    pub pioneer: bool,
    pub state: FuzzState,
    pub per_round_avg: Vec<f64>,
    pub cumulative_avg: Vec<f64>,
    pub execs: u64,
    pub main_execs: u64,
    pub nic_execs: u64,
    pub cumulative_execs: u64,
    pub assignments: u64,
    pub exploration_assignments: u64,
    pub mean_trials: f64,
    pub max_trials: u64,
    pub nic_fired: bool,
    pub nic_generations: u32,
    pub pool_size: usize,
    pub good_seed_fraction: f64,
    pub reward: f64,
}

impl RoundSummary {
    pub fn csv_header(n: usize) -> String {
        let mut cols: Vec<String> = ["round", "combo_mask", "pioneer", "state"]
            .map(String::from)
            .to_vec();
        cols.extend((0..n).map(|i| format!("avg_{i}")));
        cols.extend((0..n).map(|i| format!("cum_{i}")));
        cols.extend(
            [
                "execs",
                "main_execs",
                "nic_execs",
                "cumulative_execs",
                "assignments",
                "exploration_assignments",
                "mean_trials",
                "max_trials",
                "nic_fired",
                "nic_generations",
                "pool_size",
                "good_seed_fraction",
                "reward",
            ]
            .map(String::from),
        );
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![
            self.round.to_string(),
            self.combo.mask().to_string(),
            u8::from(self.pioneer).to_string(),
            self.state.as_str().to_string(),
        ];
        cols.extend(self.per_round_avg.iter().map(|v| v.to_string()));
        cols.extend(self.cumulative_avg.iter().map(|v| v.to_string()));
        cols.extend([
            self.execs.to_string(),
            self.main_execs.to_string(),
            self.nic_execs.to_string(),
            self.cumulative_execs.to_string(),
            self.assignments.to_string(),
            self.exploration_assignments.to_string(),
            self.mean_trials.to_string(),
            self.max_trials.to_string(),
            u8::from(self.nic_fired).to_string(),
            self.nic_generations.to_string(),
            self.pool_size.to_string(),
            self.good_seed_fraction.to_string(),
            self.reward.to_string(),
        ]);
        cols.join(",")
    }
}

/// Telemetry produced by one round.
#[derive(Clone, Debug)]
pub struct RoundOutput {
    pub summary: RoundSummary,
    pub selection: Selection,
    pub energy_rows: Vec<String>,
    pub nic_log: Option<serde_json::Value>,
}

/// Fraction of pool seeds that beat the running average under the current
/// combination.
pub fn good_seed_fraction(state: &CampaignState) -> Result<f64> {
    let Some(combo) = state.current else {
        return Ok(0.0);
    };
    let executed: Vec<_> = state
        .pool
        .seeds()
        .iter()
        .filter(|s| s.best_objectives.is_some())
        .collect();
    if executed.is_empty() {
        return Ok(0.0);
    }
    let mut good = 0usize;
    for s in &executed {
        if is_good_seed(s, &state.stats, combo)? {
            good += 1;
        }
    }
    Ok(good as f64 / executed.len() as f64)
}

/// Aggregate normalized value of `values` over `combo`'s members.
fn normalized_value(values: &[f64], stats: &RoundStats, combo: CombinationId) -> f64 {
    let members = combo.members();
    let avg = stats.cumulative_avg();
    members
        .iter()
        .map(|&i| neutral_ratio(values[i], avg[i]))
        .sum::<f64>()
        / members.len() as f64
}

pub struct Campaign<E: Executor> {
    config: CampaignConfig,
    state: CampaignState,
    executor: E,
    consecutive_failures: u32,
}

impl<E: Executor> Campaign<E> {
    /// Executes the initial seeds (counted in round 1) and builds the pool.
    pub fn new(config: CampaignConfig, initial_seeds: &[Vec<u8>], mut executor: E) -> Result<Self> {
        config.validate()?;
        let seeds: Vec<&Vec<u8>> = initial_seeds.iter().filter(|s| !s.is_empty()).collect();
        if seeds.is_empty() {
            return Err(Error::Config("at least one non-empty initial seed is required".into()));
        }
        let n = config.num_objectives;
        let mut stats = RoundStats::new(n);
        let mut pool = SeedPool::new();
        let mut main_execs = 0;
        for bytes in seeds {
            let record = executor.execute(bytes)?;
            let obs = ObjectiveVector::from_record(&record, n);
            stats.record_execution(&obs)?;
            main_execs += 1;
            pool.insert(bytes.clone(), &record, &obs, Origin::Initial, 1);
        }
        let state = CampaignState {
            stats,
            selector: CombinationSelector::new(n, config.gamma),
            pool,
            credits: CreditTable::new(),
            fuzz_state: FuzzState::Exploration,
            current: None,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            main_execs,
            nic_execs: 0,
            nic_invocations: 0,
            failed_execs: 0,
            good_seed_history: Vec::new(),
        };
        Ok(Self {
            config,
            state,
            executor,
            consecutive_failures: 0,
        })
    }

    pub fn from_state(config: CampaignConfig, state: CampaignState, executor: E) -> Result<Self> {
        config.validate()?;
        if state.stats.num_objectives() != config.num_objectives {
            return Err(Error::Snapshot(
                "objective count differs between config and state".into(),
            ));
        }
        Ok(Self {
            config,
            state,
            executor,
            consecutive_failures: 0,
        })
    }

    pub fn config(&self) -> &CampaignConfig {
        &self.config
    }

    pub fn state(&self) -> &CampaignState {
        &self.state
    }

    pub fn rounds_done(&self) -> u64 {
        self.state.stats.closed_rounds()
    }

    pub fn is_finished(&self) -> bool {
        self.rounds_done() >= self.config.total_rounds
    }

    /// Extends the round horizon, for resuming into a longer run.
    pub fn set_total_rounds(&mut self, rounds: u64) {
        self.config.total_rounds = rounds;
    }

    /// Runs one input, retrying once. `Ok(None)` means both attempts
    /// failed and the input is skipped.
    fn execute_with_retry(&mut self, input: &[u8]) -> Result<Option<ExecutionRecord>> {
        for attempt in 0..2 {
            match self.executor.execute(input) {
                Ok(r) => {
                    self.consecutive_failures = 0;
                    return Ok(Some(r));
                }
                Err(e) => warn!("execution attempt {} failed: {e}", attempt + 1),
            }
        }
        self.state.failed_execs += 1;
        self.consecutive_failures += 1;
        if self.consecutive_failures >= self.config.max_consecutive_failures {
            return Err(Error::Execution(format!(
                "{} consecutive executions failed",
                self.consecutive_failures
            )));
        }
        Ok(None)
    }

    pub fn step_round(&mut self) -> Result<RoundOutput> {
        let round = self.state.stats.round();
        let selection = self.state.selector.select()?;
        let combo = selection.combo;
        self.state.current = Some(combo);
        debug!("round {round}: combination {:#05b}", combo.mask());

        let started = Instant::now();
        let budget = self.config.round_budget;
        let wall = self.config.round_seconds.map(Duration::from_secs_f64);
        let round_over = |stats: &RoundStats| match wall {
            Some(d) => started.elapsed() >= d,
            None => stats.execs_in_round() >= budget,
        };

        let members = combo.members();
        let n = self.config.num_objectives;
        let main_before = self.state.main_execs;
        let mut energy_rows = Vec::new();
        let mut exploration = 0u64;
        let mut trials_sum = 0u64;
        let mut max_trials = 0u64;

        while !round_over(&self.state.stats) {
            let st = &mut self.state;
            st.fuzz_state = power::update_state(&st.pool);
            let id = st.pool.pick_next_seed(&mut st.rng)?;
            let seed = st.pool.get(id).expect("picked id exists");
            let energy =
                power::assign_energy(seed, st.fuzz_state, &st.stats, combo, self.config.energy_cap)?;
            let parent_values = seed.objectives()?.project(&members);
            let parent_bytes = seed.bytes.clone();
            st.pool.get_mut(id).expect("picked id exists").fuzz_count += 1;
            energy_rows.push(power::energy_csv_row(round, combo, &energy));
            if energy.state == FuzzState::Exploration {
                exploration += 1;
            }
            trials_sum += energy.trials;
            max_trials = max_trials.max(energy.trials);

            for _ in 0..energy.trials {
                if round_over(&self.state.stats) {
                    break;
                }
                let st = &mut self.state;
                let donor_idx = st.rng.gen_range(0..st.pool.len());
                let (bytes, steps) = mutation::havoc(
                    &st.credits,
                    combo,
                    &parent_bytes,
                    Some(&st.pool.seeds()[donor_idx].bytes),
                    &mut st.rng,
                );
                let Some(record) = self.execute_with_retry(&bytes)? else {
                    continue;
                };
                let st = &mut self.state;
                st.main_execs += 1;
                let obs = ObjectiveVector::from_record(&record, n);
                st.stats.record_execution(&obs)?;
                st.pool
                    .add_if_new_coverage(&bytes, &record, &obs, Origin::MainLoop, round);
                let improved = obs
                    .project(&members)
                    .iter()
                    .zip(&parent_values)
                    .any(|(v, p)| v > p);
                for step in steps {
                    mutation::credit_update(&mut st.credits, combo, step.op, step.bucket, improved);
                }
            }
        }
        let main_execs = self.state.main_execs - main_before;

        let mut nic_outcome = None;
        if self.config.nic_enabled {
            if let Some(prev) = self.state.stats.last_round_avg() {
                let st = &self.state;
                let prev_v = normalized_value(prev, &st.stats, combo);
                let cur_v = normalized_value(st.stats.per_round_avg(), &st.stats, combo);
                if nic::should_start(prev_v, cur_v, self.config.nic.start_threshold) {
                    let allowance = (self.config.nic.budget_fraction * st.main_execs as f64).floor()
                        as u64;
                    let budget = allowance.saturating_sub(st.nic_execs);
                    nic_outcome = Some((prev_v, cur_v, budget, self.run_nic(combo, budget, round)?));
                }
            }
        }

        let record = self.state.stats.close_round();
        let reward = mpmab::combination_reward(combo, &self.state.stats, self.config.lambda)?;
        self.state.selector.record_reward(combo, reward)?;
        let good = good_seed_fraction(&self.state)?;
        self.state.good_seed_history.push(good);

        let assignments = energy_rows.len() as u64;
        let (nic_fired, nic_generations, nic_execs) = nic_outcome
            .as_ref()
            .map_or((false, 0, 0), |(_, _, _, o)| (true, o.generations, o.execs));
        let nic_log = nic_outcome.map(|(prev_v, cur_v, budget, o)| {
            nic_log_entry(round, combo, prev_v, cur_v, budget, &o, &self.state.pool)
        });
        let summary = RoundSummary {
            round,
            combo,
            pioneer: selection.pioneer,
            state: self.state.fuzz_state,
            per_round_avg: record.per_round_avg,
            cumulative_avg: record.cumulative_avg,
            execs: record.execs,
            main_execs,
            nic_execs,
            cumulative_execs: self.state.stats.cumulative_execs(),
            assignments,
            exploration_assignments: exploration,
            mean_trials: if assignments == 0 {
                0.0
            } else {
                trials_sum as f64 / assignments as f64
            },
            max_trials,
            nic_fired,
            nic_generations,
            pool_size: self.state.pool.len(),
            good_seed_fraction: good,
            reward,
        };
        Ok(RoundOutput {
            summary,
            selection,
            energy_rows,
            nic_log,
        })
    }

    fn run_nic(&mut self, combo: CombinationId, budget: u64, round: u64) -> Result<NicOutcome> {
        let st = &mut self.state;
        let out = nic::run_nic(
            NicContext {
                executor: &mut self.executor,
                pool: &mut st.pool,
                stats: &mut st.stats,
                credits: &mut st.credits,
                round,
            },
            combo,
            &self.config.nic,
            budget,
            &mut st.rng,
        )?;
        st.nic_execs += out.execs;
        st.nic_invocations += 1;
        debug!(
            "round {round}: NIC ran {} generations, {} executions",
            out.generations, out.execs
        );
        Ok(out)
    }

    pub fn snapshot(&self) -> Result<String> {
        let snap = Snapshot {
            version: SNAPSHOT_VERSION,
            config: self.config.clone(),
            state: self.state.clone(),
        };
        Ok(serde_json::to_string(&snap)?)
    }

    pub fn save_snapshot(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = self.snapshot()?;
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }
}

/// Parses a snapshot, refusing other versions.
pub fn load_snapshot(text: &str) -> Result<(CampaignConfig, CampaignState)> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Snapshot(format!("unreadable: {e}")))?;
    let version = value.get("version").and_then(|v| v.as_u64());
    if version != Some(SNAPSHOT_VERSION as u64) {
        return Err(Error::Snapshot(format!(
            "version {} is not supported (expected {SNAPSHOT_VERSION})",
            version.map_or("missing".to_string(), |v| v.to_string())
        )));
    }
    let snap: Snapshot =
        serde_json::from_value(value).map_err(|e| Error::Snapshot(format!("malformed: {e}")))?;
    Ok((snap.config, snap.state))
}

fn nic_log_entry(
    round: u64,
    combo: CombinationId,
    prev_v: f64,
    cur_v: f64,
    budget: u64,
    out: &NicOutcome,
    pool: &SeedPool,
) -> serde_json::Value {
    let inputs = |ids: &[u64]| -> Vec<serde_json::Value> {
        ids.iter()
            .filter_map(|id| pool.get(*id))
            .map(|s| serde_json::json!({ "id": s.id, "input": encode_hex(&s.bytes) }))
            .collect()
    };
    serde_json::json!({
        "round": round,
        "combo_mask": combo.mask(),
        "prev_value": prev_v,
        "cur_value": cur_v,
        "budget": budget,
        "generations": out.generations,
        "execs": out.execs,
        "novel_inputs": out.novel_inputs.iter().map(|b| encode_hex(b)).collect::<Vec<_>>(),
        "admitted": inputs(&out.admitted),
        "front_added": inputs(&out.front_added),
        "front": out.front.iter().map(|i| &i.objectives).collect::<Vec<_>>(),
        "log": out.log,
    })
}

/// Report file names inside a campaign directory.
pub mod files {
    pub const ROUNDS: &str = "rounds.csv";
    pub const SELECTIONS: &str = "selections.csv";
    pub const ENERGY: &str = "energy.csv";
    pub const NIC: &str = "nic.jsonl";
    pub const SUMMARY: &str = "summary.json";
    pub const CREDITS: &str = "credits.json";
    pub const QUEUE: &str = "queue";
}

struct ReportWriter {
    rounds: BufWriter<File>,
    selections: BufWriter<File>,
    energy: BufWriter<File>,
    nic: BufWriter<File>,
}

fn open_log(dir: &Path, name: &str, header: Option<&str>, append: bool) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = if append {
        OpenOptions::new().append(true).open(&path)
    } else {
        File::create(&path)
    }
    .map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    if let (false, Some(h)) = (append, header) {
        writeln!(w, "{h}").map_err(|e| Error::io(&path, e))?;
    }
    Ok(w)
}

impl ReportWriter {
    fn open(dir: &Path, n: usize, append: bool) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            rounds: open_log(dir, files::ROUNDS, Some(&RoundSummary::csv_header(n)), append)?,
            selections: open_log(
                dir,
                files::SELECTIONS,
                Some(&mpmab::selection_csv_header(n)),
                append,
            )?,
            energy: open_log(dir, files::ENERGY, Some(power::ENERGY_CSV_HEADER), append)?,
            nic: open_log(dir, files::NIC, None, append)?,
        })
    }

    fn write(&mut self, out: &RoundOutput, num_arms: usize) -> std::io::Result<()> {
        writeln!(self.rounds, "{}", out.summary.csv_row())?;
        writeln!(
            self.selections,
            "{}",
            mpmab::selection_csv_row(out.summary.round, &out.selection, num_arms)
        )?;
        for row in &out.energy_rows {
            writeln!(self.energy, "{row}")?;
        }
        if let Some(entry) = &out.nic_log {
            writeln!(self.nic, "{entry}")?;
        }
        Ok(())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.rounds.flush()?;
        self.selections.flush()?;
        self.energy.flush()?;
        self.nic.flush()
    }
}

/// Final campaign statistics, written as `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub target: String,
    pub seed: u64,
    pub lambda: f64,
    pub gamma: f64,
    pub nic_enabled: bool,
    pub rounds: u64,
    pub objectives: Vec<String>,
    pub cumulative_avg: Vec<f64>,
    pub per_objective_max: Vec<f64>,
    pub total_execs: u64,
    pub main_execs: u64,
    pub nic_execs: u64,
    pub nic_share: f64,
    pub nic_invocations: u64,
    pub failed_execs: u64,
    pub pool_size: usize,
    pub nic_seeds: usize,
    pub good_seed_fraction: f64,
    pub mean_good_seed_fraction: f64,
    /// Selections per combination mask, in mask order.
    pub selections: Vec<u64>,
    pub speed_selection_fraction: f64,
}

impl CampaignReport {
    pub fn from_campaign<E: Executor>(c: &Campaign<E>) -> Result<Self> {
        let st = c.state();
        let cfg = c.config();
        let registry = ObjectiveRegistry::standard(cfg.num_objectives)?;
        let total = st.stats.cumulative_execs();
        let selections: Vec<u64> = st.selector.arms().iter().map(|a| a.n_l).collect();
        let picked: u64 = selections.iter().sum();
        let with_speed: u64 = st
            .selector
            .arms()
            .iter()
            .filter(|a| a.combo.contains(SPEED))
            .map(|a| a.n_l)
            .sum();
        let history = &st.good_seed_history;
        Ok(Self {
            target: cfg.target.name(),
            seed: cfg.seed,
            lambda: cfg.lambda,
            gamma: cfg.gamma,
            nic_enabled: cfg.nic_enabled,
            rounds: c.rounds_done(),
            objectives: registry.specs().iter().map(|s| s.name.clone()).collect(),
            cumulative_avg: st.stats.cumulative_avg().to_vec(),
            per_objective_max: st.stats.per_objective_max().to_vec(),
            total_execs: total,
            main_execs: st.main_execs,
            nic_execs: st.nic_execs,
            nic_share: if total == 0 {
                0.0
            } else {
                st.nic_execs as f64 / total as f64
            },
            nic_invocations: st.nic_invocations,
            failed_execs: st.failed_execs,
            pool_size: st.pool.len(),
            nic_seeds: st
                .pool
                .seeds()
                .iter()
                .filter(|s| s.origin == Origin::Nic)
                .count(),
            good_seed_fraction: history.last().copied().unwrap_or(0.0),
            mean_good_seed_fraction: if history.is_empty() {
                0.0
            } else {
                history.iter().sum::<f64>() / history.len() as f64
            },
            selections,
            speed_selection_fraction: if picked == 0 {
                0.0
            } else {
                with_speed as f64 / picked as f64
            },
        })
    }
}

fn write_outputs<E: Executor>(c: &Campaign<E>, dir: &Path) -> Result<CampaignReport> {
    let report = CampaignReport::from_campaign(c)?;
    let summary_path = dir.join(files::SUMMARY);
    let text = serde_json::to_string_pretty(&report)?;
    fs::write(&summary_path, text).map_err(|e| Error::io(&summary_path, e))?;
    let credits_path = dir.join(files::CREDITS);
    let text = serde_json::to_string_pretty(&c.state().credits.to_json())?;
    fs::write(&credits_path, text).map_err(|e| Error::io(&credits_path, e))?;
    let queue = dir.join(files::QUEUE);
    if queue.exists() {
        fs::remove_dir_all(&queue).map_err(|e| Error::io(&queue, e))?;
    }
    c.state().pool.save_dir(&queue)?;
    c.save_snapshot(dir.join(SNAPSHOT_FILE))?;
    Ok(report)
}

/// Runs `campaign` to its horizon, streaming telemetry into `dir`.
/// `append` continues logs from an earlier (resumed) run. On failure the
/// state at the last round boundary is saved for resume.
pub fn drive<E: Executor>(
    campaign: &mut Campaign<E>,
    dir: &Path,
    append: bool,
) -> Result<CampaignReport> {
    let n = campaign.config().num_objectives;
    let arms = CombinationId::all(n).len();
    let mut writer = ReportWriter::open(dir, n, append)?;
    while !campaign.is_finished() {
        let checkpoint = campaign.snapshot()?;
        let out = match campaign.step_round() {
            Ok(out) => out,
            Err(e) => {
                let path = dir.join(SNAPSHOT_FILE);
                fs::write(&path, checkpoint).map_err(|err| Error::io(&path, err))?;
                writer.flush().map_err(|err| Error::io(dir, err))?;
                warn!("campaign aborted; state saved to {}", path.display());
                return Err(e);
            }
        };
        writer.write(&out, arms).map_err(|e| Error::io(dir, e))?;
        if out.summary.round % 100 == 0 {
            info!(
                "round {} / {}: pool {}, execs {}",
                out.summary.round,
                campaign.config().total_rounds,
                out.summary.pool_size,
                out.summary.cumulative_execs
            );
        }
    }
    writer.flush().map_err(|e| Error::io(dir, e))?;
    write_outputs(campaign, dir)
}

/// Creates a campaign from `config` and runs it into `dir`.
pub fn run_campaign(config: CampaignConfig, initial_seeds: &[Vec<u8>], dir: &Path) -> Result<CampaignReport> {
    let executor = config.target.connect()?;
    let mut campaign = Campaign::new(config, initial_seeds, executor)?;
    drive(&mut campaign, dir, false)
}

/// Continues the campaign saved in `dir`, optionally to a new horizon.
pub fn resume_campaign(dir: &Path, total_rounds: Option<u64>) -> Result<CampaignReport> {
    let path = dir.join(SNAPSHOT_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let (config, state) = load_snapshot(&text)?;
    let executor = config.target.connect()?;
    let mut campaign = Campaign::from_state(config, state, executor)?;
    if let Some(t) = total_rounds {
        campaign.set_total_rounds(t);
    }
    truncate_logs_to(dir, campaign.rounds_done())?;
    drive(&mut campaign, dir, true)
}

/// Drops log lines past `rounds`, so that logs written after the last
/// snapshot (e.g. by an aborted round) are not duplicated on resume.
fn truncate_logs_to(dir: &Path, rounds: u64) -> Result<()> {
    for name in [files::ROUNDS, files::SELECTIONS, files::ENERGY] {
        let path = dir.join(name);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let kept: Vec<&str> = text
            .lines()
            .enumerate()
            .filter(|(i, line)| {
                *i == 0
                    || line
                        .split(',')
                        .next()
                        .and_then(|r| r.parse::<u64>().ok())
                        .is_some_and(|r| r <= rounds)
            })
            .map(|(_, l)| l)
            .collect();
        write_lines(&path, &kept)?;
    }
    let path = dir.join(files::NIC);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let kept: Vec<&str> = text
        .lines()
        .filter(|line| {
            serde_json::from_str::<serde_json::Value>(line)
                .ok()
                .and_then(|v| v.get("round").and_then(|r| r.as_u64()))
                .is_some_and(|r| r <= rounds)
        })
        .collect();
    write_lines(&path, &kept)
}

fn write_lines(path: &PathBuf, lines: &[&str]) -> Result<()> {
    let mut text = lines.join("\n");
    if !lines.is_empty() {
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Seeds bundled with a target source; adapters bring none.
pub fn default_seeds(target: &TargetSource) -> Vec<Vec<u8>> {
    match target {
        TargetSource::Spec(s) => s.seeds.clone(),
        TargetSource::Adapter { .. } => Vec::new(),
    }
}
