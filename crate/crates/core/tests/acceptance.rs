//! Acceptance suite. Runs every exit criterion, prints one PASS/FAIL line
//! per criterion and exits non-zero if any fails.
//!
//! Expected values are recomputed here from raw logs and random data by
//! straight re-derivations that do not call into the code under test.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use mobsched::corpus::{Origin, Seed, SeedPool};
use mobsched::engine::{self, files, Campaign, CampaignConfig, TargetSource};
use mobsched::mpmab::{self, CombinationId, CombinationSelector};
use mobsched::nic;
use mobsched::objectives::{self, ObjectiveVector, RoundStats};
use mobsched::power::{self, FuzzState, DEFAULT_ENERGY_CAP};
use mobsched::simtarget::{decode_hex, TargetSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REL_TOL: f64 = 1e-9;
const ROUNDS: u64 = 200;
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const TARGETS: [&str; 3] = ["shallow-magic", "nested-magic-deep-stack", "cmp-heavy"];

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        1.0
    } else {
        num / den
    }
}

// ---------------------------------------------------------------------------
// Campaign fixtures

#[derive(Clone)]
struct RunSpec {
    target: &'static str,
    seed: u64,
    lambda: f64,
    gamma: f64,
    nic: bool,
}

impl RunSpec {
    fn new(target: &'static str, seed: u64) -> Self {
        Self {
            target,
            seed,
            lambda: 0.10,
            gamma: 0.01,
            nic: true,
        }
    }

    fn dir_name(&self) -> String {
        format!(
            "{}-s{}-l{}-g{}-{}",
            self.target,
            self.seed,
            self.lambda,
            self.gamma,
            if self.nic { "nic" } else { "nonic" }
        )
    }
}

struct Run {
    spec: RunSpec,
    dir: PathBuf,
    rounds: Rounds,
}

fn run_all(specs: &[RunSpec], root: &Path) -> Vec<Run> {
    let workers = std::thread::available_parallelism().map_or(4, |n| n.get());
    let mut runs = Vec::new();
    for chunk in specs.chunks(workers) {
        let done: Vec<Run> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|spec| {
                    s.spawn(move || {
                        let target = TargetSpec::builtin(spec.target).expect("built-in target");
                        let seeds = target.seeds.clone();
                        let mut cfg = CampaignConfig::new(TargetSource::Spec(target), spec.seed);
                        cfg.total_rounds = ROUNDS;
                        cfg.lambda = spec.lambda;
                        cfg.gamma = spec.gamma;
                        cfg.nic_enabled = spec.nic;
                        let dir = root.join(spec.dir_name());
                        engine::run_campaign(cfg, &seeds, &dir).expect("campaign runs");
                        let rounds = Rounds::load(&dir);
                        Run {
                            spec: spec.clone(),
                            dir,
                            rounds,
                        }
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("campaign thread")).collect()
        });
        runs.extend(done);
    }
    runs
}

/// `rounds.csv` as columns of numbers (text columns parse to NaN).
struct Rounds {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Rounds {
    fn load(dir: &Path) -> Self {
        let text = fs::read_to_string(dir.join(files::ROUNDS)).expect("rounds.csv");
        let mut lines = text.lines();
        let header = lines.next().expect("header").split(',').map(String::from).collect();
        let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
        Self { header, rows }
    }

    fn col(&self, name: &str) -> Vec<f64> {
        let c = self.header.iter().position(|h| h == name).unwrap_or_else(|| panic!("column {name}"));
        self.rows.iter().map(|r| r[c].parse().unwrap_or(f64::NAN)).collect()
    }

    /// Mean of the per-round averages of objective `i` over the campaign.
    fn mean_objective(&self, i: usize) -> f64 {
        let v = self.col(&format!("avg_{i}"));
        v.iter().sum::<f64>() / v.len() as f64
    }
}

// ---------------------------------------------------------------------------
// 1. Formula oracles

/// Straight evaluation of every scheduling formula from a raw log of
/// per-execution observations.
struct Replay {
    rounds: Vec<Vec<Vec<f64>>>,
    n: usize,
}

impl Replay {
    fn round_avg(&self, k: usize) -> Vec<f64> {
        let obs = &self.rounds[k];
        (0..self.n)
            .map(|i| {
                if obs.is_empty() {
                    0.0
                } else {
                    obs.iter().map(|o| o[i]).sum::<f64>() / obs.len() as f64
                }
            })
            .collect()
    }

    /// Mean of the per-round averages over rounds 0..=k.
    fn prefix_mean(&self, k: usize) -> Vec<f64> {
        let mut acc = vec![0.0; self.n];
        for r in 0..=k {
            for (a, v) in acc.iter_mut().zip(self.round_avg(r)) {
                *a += v;
            }
        }
        acc.iter().map(|a| a / (k + 1) as f64).collect()
    }

    fn execs_through(&self, k: usize) -> usize {
        self.rounds[..=k].iter().map(Vec::len).sum()
    }

    fn objective_reward(&self, k: usize, i: usize, lambda: f64) -> f64 {
        let t = (k + 1) as f64;
        let cur = self.round_avg(k);
        let mean = self.prefix_mean(k);
        t * (ratio(cur[i], mean[i]) - lambda * ratio(cur[0], mean[0]))
    }

    fn combination_reward(&self, k: usize, mask: u32, lambda: f64) -> f64 {
        let members: Vec<usize> = (0..self.n).filter(|i| mask & (1 << i) != 0).collect();
        let l = members.len() as f64;
        members.iter().map(|&i| self.objective_reward(k, i, lambda)).sum::<f64>() / l
            + (k + 1) as f64 * l
    }

    fn combination_energy(&self, k: usize, mask: u32, cap: f64) -> f64 {
        let execs = self.execs_through(k) as f64;
        let mean = self.prefix_mean(k);
        let members: Vec<usize> = (0..self.n).filter(|i| mask & (1 << i) != 0).collect();
        members
            .iter()
            .map(|&i| if mean[i] == 0.0 { cap } else { execs / mean[i] })
            .sum::<f64>()
            / members.len() as f64
    }
}

fn criterion_formulas() -> Verdict {
    let start = Instant::now();
    let n = 3;
    let lambda = 0.1;
    let gamma = 0.7;
    let cap = DEFAULT_ENERGY_CAP;
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce);
    let mut stats = RoundStats::new(n);
    let mut selector = CombinationSelector::new(n, gamma);
    let mut replay = Replay {
        rounds: Vec::new(),
        n,
    };
    let mut selections: Vec<u32> = Vec::new();
    let mut observed: Vec<Vec<f64>> = vec![Vec::new(); 8];
    let mut worst: f64 = 0.0;
    let mut mismatched = 0usize;
    let mut checked = 0usize;

    // Incremental prefix sums keep the replay linear in rounds; the
    // quadratic `prefix_mean` is spot-checked below against them.
    let mut avg_sums = vec![0.0; n];
    let mut execs = 0usize;

    for k in 0..1000usize {
        // Selection replay before the round runs.
        let sel = selector.select().expect("select");
        let counts: Vec<usize> = (1..8).map(|m| observed[m].len()).collect();
        let expected_mask = match counts.iter().position(|&c| c == 0) {
            Some(first) => first as u32 + 1,
            None => {
                let total: usize = counts.iter().sum();
                if sel.scores.len() != 7 {
                    mismatched += 1;
                }
                let mut best = (f64::NEG_INFINITY, 0u32);
                for m in 1..8u32 {
                    let h = &observed[m as usize];
                    let score = h.iter().sum::<f64>() / h.len() as f64
                        + gamma * ((total as f64).ln() / h.len() as f64).sqrt();
                    if let Some(got) = sel.scores.get(m as usize - 1) {
                        worst = worst.max(rel_err(*got, score));
                    }
                    if score > best.0 {
                        best = (score, m);
                    }
                }
                best.1
            }
        };
        if sel.combo.mask() != expected_mask {
            mismatched += 1;
        }
        selections.push(sel.combo.mask());

        let mut obs_round = Vec::new();
        for _ in 0..rng.gen_range(0..6) {
            let v: Vec<f64> = (0..n)
                .map(|i| if i == 2 && rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..500.0) })
                .collect();
            stats
                .record_execution(&ObjectiveVector::new(v.clone()).expect("valid"))
                .expect("record");
            obs_round.push(v);
        }
        execs += obs_round.len();
        replay.rounds.push(obs_round);
        stats.close_round();

        let cur = replay.round_avg(k);
        for (s, v) in avg_sums.iter_mut().zip(&cur) {
            *s += v;
        }
        let mean: Vec<f64> = avg_sums.iter().map(|s| s / (k + 1) as f64).collect();
        for i in 0..n {
            worst = worst.max(rel_err(stats.cumulative_avg()[i], mean[i]));
        }
        if k % 97 == 0 {
            for (a, b) in replay.prefix_mean(k).iter().zip(&mean) {
                worst = worst.max(rel_err(*a, *b));
            }
        }
        assert_eq!(stats.cumulative_execs() as usize, execs);

        let t = (k + 1) as f64;
        for mask in 1..8u32 {
            let combo = CombinationId::new(mask, n).expect("mask");
            let members: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let l = members.len() as f64;
            let rewards: Vec<f64> = members
                .iter()
                .map(|&i| t * (ratio(cur[i], mean[i]) - lambda * ratio(cur[0], mean[0])))
                .collect();
            for (&i, r) in members.iter().zip(&rewards) {
                worst = worst.max(rel_err(
                    objectives::objective_reward(&stats, i, lambda).expect("reward"),
                    *r,
                ));
            }
            let want = rewards.iter().sum::<f64>() / l + t * l;
            worst = worst.max(rel_err(
                mpmab::combination_reward(combo, &stats, lambda).expect("reward"),
                want,
            ));
            if k % 97 == 0 {
                worst = worst.max(rel_err(replay.combination_reward(k, mask, lambda), want));
            }

            let energies: Vec<f64> = members
                .iter()
                .map(|&i| if mean[i] == 0.0 { cap as f64 } else { execs as f64 / mean[i] })
                .collect();
            for (&i, e) in members.iter().zip(&energies) {
                worst = worst.max(rel_err(
                    power::average_objective_energy(&stats, i, cap).expect("energy"),
                    *e,
                ));
            }
            let combo_e = energies.iter().sum::<f64>() / l;
            worst = worst.max(rel_err(power::combination_energy(&stats, combo, cap).expect("energy"), combo_e));
            if k % 97 == 0 {
                worst = worst.max(rel_err(replay.combination_energy(k, mask, cap as f64), combo_e));
            }

            // Per-seed energy in both states for a random seed.
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..800.0)).collect();
            let seed = Seed {
                id: 0,
                bytes: vec![0],
                best_objectives: Some(ObjectiveVector::new(values.clone()).expect("valid")),
                coverage: Default::default(),
                exec_cost_us: 1,
                fuzz_count: 1,
                origin: Origin::Initial,
                discovered_round: 1,
            };
            let clamp = |basis: f64| (basis.min(cap as f64).ceil() as u64).clamp(1, cap);
            let explore = power::assign_energy(&seed, FuzzState::Exploration, &stats, combo, cap)
                .expect("energy");
            worst = worst.max(rel_err(explore.basis, combo_e));
            if explore.trials != clamp(combo_e) {
                mismatched += 1;
            }
            let agg = members.iter().map(|&i| ratio(values[i], mean[i])).sum::<f64>() / l;
            let maxima = stats.per_objective_max();
            let bonus = members.iter().filter(|&&i| values[i] >= maxima[i]).count() as f64;
            let exploit = power::assign_energy(&seed, FuzzState::Exploitation, &stats, combo, cap)
                .expect("energy");
            let basis = combo_e * (agg + bonus);
            worst = worst.max(rel_err(exploit.basis, basis));
            if exploit.trials != clamp(basis) {
                mismatched += 1;
            }
            checked += 1;
        }

        let reward = mpmab::combination_reward(sel.combo, &stats, lambda).expect("reward");
        observed[sel.combo.mask() as usize].push(reward);
        selector.record_reward(sel.combo, reward).expect("record");
    }
    let elapsed = start.elapsed();
    verdict(
        worst <= REL_TOL && mismatched == 0 && elapsed < Duration::from_secs(10),
        format!(
            "1000 rounds, {checked} combination checks: max rel err {worst:.2e}, {mismatched} mismatches, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. Pioneer stage

fn criterion_pioneer() -> Verdict {
    let mut bad = Vec::new();
    for seed in 0..100u64 {
        let target = TargetSpec::builtin(TARGETS[(seed % 3) as usize]).expect("target");
        let seeds = target.seeds.clone();
        let mut cfg = CampaignConfig::new(TargetSource::Spec(target.clone()), seed);
        cfg.total_rounds = 7;
        cfg.round_budget = 50;
        let mut c = Campaign::new(cfg, &seeds, target).expect("campaign");
        let mut masks = BTreeSet::new();
        while !c.is_finished() {
            masks.insert(c.step_round().expect("round").summary.combo.mask());
        }
        if masks != (1..=7).collect() {
            bad.push(seed);
        }
    }
    verdict(bad.is_empty(), format!("100 seeds, first 7 rounds cover all 7 combinations; failures {bad:?}"))
}

// ---------------------------------------------------------------------------
// 3. Non-dominated sorting

fn brute_force_fronts(points: &[Vec<f64>]) -> Vec<BTreeSet<usize>> {
    let dominates = |a: &[f64], b: &[f64]| {
        a.iter().zip(b).all(|(x, y)| x >= y) && a.iter().zip(b).any(|(x, y)| x > y)
    };
    let mut left: Vec<usize> = (0..points.len()).collect();
    let mut fronts = Vec::new();
    while !left.is_empty() {
        let front: BTreeSet<usize> = left
            .iter()
            .copied()
            .filter(|&i| !left.iter().any(|&j| dominates(&points[j], &points[i])))
            .collect();
        left.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

fn criterion_sorting() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x50e7);
    let mut mismatches = 0;
    for inst in 0..500 {
        let n = rng.gen_range(1..=200);
        let m = rng.gen_range(1..=4);
        // Alternate coarse integer grids (many ties) with continuous values.
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..m)
                    .map(|_| if inst % 2 == 0 { rng.gen_range(0..6) as f64 } else { rng.gen::<f64>() })
                    .collect()
            })
            .collect();
        let got: Vec<BTreeSet<usize>> = nic::non_dominated_fronts(&points)
            .expect("fronts")
            .into_iter()
            .map(|f| f.into_iter().collect())
            .collect();
        if got != brute_force_fronts(&points) {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        mismatches == 0 && elapsed < Duration::from_secs(30),
        format!("500 instances, {mismatches} mismatches, {:.2}s", elapsed.as_secs_f64()),
    )
}

// ---------------------------------------------------------------------------
// 4 and 5. Hyper-parameter trends on cmp-heavy

fn find(runs: &[Run], f: impl Fn(&RunSpec) -> bool) -> &Run {
    runs.iter().find(|r| f(&r.spec)).expect("run present")
}

fn criterion_lambda(runs: &[Run], elapsed: Duration) -> Verdict {
    let lambdas = [0.0, 0.1, 10.0];
    let mut ok_seeds = 0;
    let mut rows = Vec::new();
    for seed in SEEDS {
        let r: Vec<&Run> = lambdas
            .iter()
            .map(|&l| find(runs, |s| s.seed == seed && s.lambda == l && s.gamma == 0.01))
            .collect();
        let speed: Vec<f64> = r.iter().map(|r| r.rounds.mean_objective(0)).collect();
        let cmp: Vec<f64> = r.iter().map(|r| r.rounds.mean_objective(2)).collect();
        let ok = speed.windows(2).all(|w| w[0] <= w[1]) && cmp.windows(2).all(|w| w[0] >= w[1]);
        ok_seeds += ok as usize;
        rows.push(format!(
            "seed {seed}: speed {:.1}/{:.1}/{:.1} cmp {:.4}/{:.4}/{:.4}{}",
            speed[0],
            speed[1],
            speed[2],
            cmp[0],
            cmp[1],
            cmp[2],
            if ok { "" } else { " x" }
        ));
    }
    verdict(
        ok_seeds >= 4 && elapsed < Duration::from_secs(300),
        format!("{ok_seeds}/5 seeds monotone, {:.1}s; {}", elapsed.as_secs_f64(), rows.join("; ")),
    )
}

fn criterion_gamma(runs: &[Run]) -> Verdict {
    let mut ok_seeds = 0;
    let mut rows = Vec::new();
    for seed in SEEDS {
        let g0 = find(runs, |s| s.seed == seed && s.gamma == 0.0).rounds.mean_objective(2);
        let g10 = find(runs, |s| s.seed == seed && s.gamma == 10.0).rounds.mean_objective(2);
        ok_seeds += (g0 > g10) as usize;
        rows.push(format!("seed {seed}: cmp {g0:.4} vs {g10:.4}"));
    }
    verdict(ok_seeds >= 4, format!("{ok_seeds}/5 seeds with cmp(0) > cmp(10); {}", rows.join("; ")))
}

// ---------------------------------------------------------------------------
// 6. Good-seed uplift

fn criterion_good_seeds(runs: &[Run]) -> Verdict {
    let mut targets_ok = 0;
    let mut rows = Vec::new();
    for target in TARGETS {
        let mean = |nic: bool| {
            let v: Vec<f64> = SEEDS
                .iter()
                .map(|&seed| {
                    let r = find(runs, |s| {
                        s.target == target && s.seed == seed && s.nic == nic && s.lambda == 0.1 && s.gamma == 0.01
                    });
                    *r.rounds.col("good_seed_fraction").last().expect("rounds")
                })
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let (on, off) = (mean(true), mean(false));
        let ok = on >= 1.3 * off;
        targets_ok += ok as usize;
        rows.push(format!("{target}: {on:.3} vs {off:.3}"));
    }
    verdict(targets_ok >= 2, format!("{targets_ok}/3 targets with >= 1.3x uplift; {}", rows.join("; ")))
}

// ---------------------------------------------------------------------------
// 7. NIC execution share

fn criterion_nic_share(runs: &[Run]) -> Verdict {
    let mut worst: f64 = 0.0;
    let mut accounting_errors = 0;
    for r in runs.iter().filter(|r| r.spec.nic) {
        let execs = r.rounds.col("execs");
        let main = r.rounds.col("main_execs");
        let nic = r.rounds.col("nic_execs");
        let cum = r.rounds.col("cumulative_execs");
        let initial = TargetSpec::builtin(r.spec.target).expect("target").seeds.len() as f64;
        let mut running = 0.0;
        for k in 0..execs.len() {
            running += execs[k];
            // Round 1 also carries the initial seed executions.
            let seeds = if k == 0 { initial } else { 0.0 };
            if execs[k] != main[k] + nic[k] + seeds || cum[k] != running {
                accounting_errors += 1;
            }
        }
        let share = nic.iter().sum::<f64>() / execs.iter().sum::<f64>();
        worst = worst.max(share);
    }
    verdict(
        worst <= 0.10 && accounting_errors == 0,
        format!("max NIC share {:.2}% over NIC-enabled campaigns, {accounting_errors} accounting errors", 100.0 * worst),
    )
}

// ---------------------------------------------------------------------------
// 8. Shared-pool invariant

fn criterion_shared_pool(runs: &[Run]) -> Verdict {
    let mut audited = 0;
    let mut missing = 0;
    let mut campaigns = 0;
    for r in runs.iter().filter(|r| r.spec.nic) {
        campaigns += 1;
        let pool = SeedPool::load_dir(r.dir.join(files::QUEUE)).expect("queue");
        let text = fs::read_to_string(r.dir.join(files::NIC)).expect("nic log");
        for line in text.lines() {
            let entry: serde_json::Value = serde_json::from_str(line).expect("nic entry");
            for hex in entry["novel_inputs"].as_array().expect("novel_inputs") {
                let bytes = decode_hex(hex.as_str().expect("hex")).expect("hex");
                audited += 1;
                let found = pool
                    .seeds()
                    .iter()
                    .any(|s| s.bytes == bytes && s.origin == Origin::Nic);
                missing += (!found) as usize;
            }
        }
    }
    verdict(
        missing == 0 && audited > 0,
        format!("{audited} NIC inputs with new coverage audited over {campaigns} campaigns, {missing} missing from the final pool"),
    )
}

// ---------------------------------------------------------------------------
// 9. Energy schedule

fn criterion_energy(runs: &[Run]) -> Verdict {
    let cap = DEFAULT_ENERGY_CAP as f64;
    let mut rows = 0;
    let mut exploit_checked = 0;
    let mut violations = 0;
    for r in runs {
        let text = fs::read_to_string(r.dir.join(files::ENERGY)).expect("energy log");
        for line in text.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let mask: u32 = f[3].parse().expect("mask");
            let trials: u64 = f[8].parse().expect("trials");
            let execs: f64 = f[9].parse().expect("execs");
            let avgs: Vec<f64> = f[10].split(';').map(|v| v.parse().expect("avg")).collect();
            let members: Vec<usize> = (0..avgs.len()).filter(|i| mask & (1 << i) != 0).collect();
            let combo_e = members
                .iter()
                .map(|&i| if avgs[i] == 0.0 { cap } else { execs / avgs[i] })
                .sum::<f64>()
                / members.len() as f64;
            let explore_trials = (combo_e.min(cap).ceil() as u64).clamp(1, cap as u64);
            rows += 1;
            match f[2] {
                "exploration" => violations += (trials != explore_trials) as usize,
                "exploitation" => {
                    let agg: f64 = f[5].parse().expect("ratio");
                    if agg >= 1.0 {
                        exploit_checked += 1;
                        violations += (trials < explore_trials) as usize;
                    }
                }
                other => panic!("unknown state {other}"),
            }
        }
    }
    verdict(
        violations == 0 && exploit_checked > 0,
        format!("{rows} assignments replayed ({exploit_checked} exploitation with ratio >= 1), {violations} violations"),
    )
}

// ---------------------------------------------------------------------------
// 10. Determinism and resume

fn criterion_determinism(root: &Path) -> Verdict {
    let target = TargetSpec::builtin("nested-magic-deep-stack").expect("target");
    let seeds = target.seeds.clone();
    let config = |rounds| {
        let mut cfg = CampaignConfig::new(TargetSource::Spec(target.clone()), 7);
        cfg.total_rounds = rounds;
        cfg
    };
    let (a, b, c) = (root.join("det-a"), root.join("det-b"), root.join("det-resume"));
    engine::run_campaign(config(60), &seeds, &a).expect("run a");
    engine::run_campaign(config(60), &seeds, &b).expect("run b");
    engine::run_campaign(config(25), &seeds, &c).expect("run c");
    engine::resume_campaign(&c, Some(60)).expect("resume");

    let read = |dir: &Path, name: &str| fs::read(dir.join(name)).expect("report file");
    let identical = read(&a, files::ROUNDS) == read(&b, files::ROUNDS);
    let mut resumed_diff = Vec::new();
    for name in [files::ROUNDS, files::SELECTIONS, files::ENERGY, files::NIC, "state.json"] {
        if read(&a, name) != read(&c, name) {
            resumed_diff.push(name);
        }
    }
    verdict(
        identical && resumed_diff.is_empty(),
        format!("repeat run identical: {identical}; 25+35 resume differs in {resumed_diff:?}"),
    )
}

fn main() {
    let root = tempfile::tempdir().expect("temp dir");
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();

    results.push((1, "formula oracles", criterion_formulas()));
    results.push((2, "pioneer stage", criterion_pioneer()));
    results.push((3, "non-dominated sorting", criterion_sorting()));

    let mut trend_specs = Vec::new();
    for seed in SEEDS {
        for lambda in [0.0, 0.1, 10.0] {
            trend_specs.push(RunSpec {
                lambda,
                ..RunSpec::new("cmp-heavy", seed)
            });
        }
    }
    let start = Instant::now();
    let lambda_runs = run_all(&trend_specs, root.path());
    let lambda_elapsed = start.elapsed();
    results.push((4, "lambda trend", criterion_lambda(&lambda_runs, lambda_elapsed)));

    let gamma_specs: Vec<RunSpec> = SEEDS
        .iter()
        .flat_map(|&seed| {
            [0.0, 10.0].map(|gamma| RunSpec {
                gamma,
                ..RunSpec::new("cmp-heavy", seed)
            })
        })
        .collect();
    let gamma_runs = run_all(&gamma_specs, root.path());
    results.push((5, "gamma trend", criterion_gamma(&gamma_runs)));

    let mut nic_specs = Vec::new();
    for target in TARGETS {
        for seed in SEEDS {
            for nic in [true, false] {
                if target == "cmp-heavy" && nic {
                    continue; // the lambda sweep already ran this one
                }
                nic_specs.push(RunSpec {
                    nic,
                    ..RunSpec::new(target, seed)
                });
            }
        }
    }
    let mut all_runs = run_all(&nic_specs, root.path());
    all_runs.extend(lambda_runs);
    all_runs.extend(gamma_runs);
    results.push((6, "good-seed uplift", criterion_good_seeds(&all_runs)));
    results.push((7, "NIC execution share", criterion_nic_share(&all_runs)));
    results.push((8, "shared seed pool", criterion_shared_pool(&all_runs)));
    results.push((9, "energy schedule", criterion_energy(&all_runs)));
    results.push((10, "determinism and resume", criterion_determinism(root.path())));

    println!();
    for (n, name, v) in &results {
        println!(
            "{} criterion {n:>2} {name}: {}",
            if v.passed { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.passed).map(|r| r.0).collect();
    println!(
        "\nacceptance: {} passed, {} failed{}",
        results.len() - failed.len(),
        failed.len(),
        if failed.is_empty() { String::new() } else { format!(" ({failed:?})") }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
