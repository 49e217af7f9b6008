//! Self-checks that compare the scheduler's formulas against straight
//! re-derivations on random data. Backs the `oracle` subcommand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::mpmab::{self, CombinationId, CombinationSelector};
use crate::nic;
use crate::objectives::{ObjectiveVector, RoundStats};
use crate::power;

pub const TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct OracleOptions {
    pub seed: u64,
    /// Added to the exploration weight used by the selector under test but
    /// not by the replay; any non-zero value must make the UCB check fail.
    pub gamma_perturbation: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            gamma_perturbation: 0.0,
        }
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn check(name: &'static str, worst: f64, what: &str) -> OracleCheck {
    OracleCheck {
        name,
        passed: worst <= TOLERANCE,
        detail: format!("{what}: max relative error {worst:.3e}"),
    }
}

fn random_stats(rng: &mut ChaCha8Rng, rounds: usize, n: usize) -> Result<RoundStats> {
    let mut stats = RoundStats::new(n);
    for _ in 0..rounds {
        for _ in 0..rng.gen_range(0..8) {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..100.0)).collect();
            stats.record_execution(&ObjectiveVector::new(v)?)?;
        }
        stats.close_round();
    }
    Ok(stats)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        1.0
    } else {
        num / den
    }
}

/// Cumulative averages recomputed as prefix means of the round history.
pub fn prefix_mean(opts: &OracleOptions) -> Result<OracleCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n = 3;
    let mut stats = RoundStats::new(n);
    let mut worst: f64 = 0.0;
    let mut sums = vec![0.0; n];
    for t in 1..=1000u64 {
        let k = rng.gen_range(0..6);
        let mut round_sum = vec![0.0; n];
        for _ in 0..k {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1000.0)).collect();
            for i in 0..n {
                round_sum[i] += v[i];
            }
            stats.record_execution(&ObjectiveVector::new(v)?)?;
        }
        stats.close_round();
        for i in 0..n {
            let avg = if k == 0 { 0.0 } else { round_sum[i] / k as f64 };
            sums[i] += avg;
            worst = worst.max(rel_err(stats.cumulative_avg()[i], sums[i] / t as f64));
        }
    }
    Ok(check("prefix-mean", worst, "1000 rounds of cumulative averages"))
}

/// Combination rewards recomputed from raw per-round averages.
pub fn reward_replay(opts: &OracleOptions) -> Result<OracleCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    let n = 3;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let rounds = rng.gen_range(1..40);
        let stats = random_stats(&mut rng, rounds, n)?;
        let lambda = rng.gen_range(0.0..2.0);
        let t = stats.history().len() as f64;
        let last = stats.history().last().expect("at least one round");
        let mean: Vec<f64> = (0..n)
            .map(|i| stats.history().iter().map(|r| r[i]).sum::<f64>() / t)
            .collect();
        for combo in CombinationId::all(n) {
            let members = combo.members();
            let l = members.len() as f64;
            let speed = ratio(last[0], mean[0]);
            let expected = members
                .iter()
                .map(|&i| t * (ratio(last[i], mean[i]) - lambda * speed))
                .sum::<f64>()
                / l
                + t * l;
            let got = mpmab::combination_reward(combo, &stats, lambda)?;
            worst = worst.max(rel_err(got, expected));
        }
    }
    Ok(check("reward-replay", worst, "combination rewards on 50 histories"))
}

/// Runs the selector for 200 rounds of random rewards and replays every
/// score from the logged rewards.
pub fn ucb_replay(opts: &OracleOptions) -> Result<OracleCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xcb);
    let n = 3;
    let gamma = 0.5;
    let mut selector = CombinationSelector::new(n, gamma + opts.gamma_perturbation);
    let arms = CombinationId::all(n);
    let mut history: Vec<Vec<f64>> = vec![Vec::new(); arms.len()];
    let mut worst: f64 = 0.0;
    let mut mismatched = 0usize;
    for _ in 0..200 {
        let counts: Vec<usize> = history.iter().map(Vec::len).collect();
        let sel = selector.select()?;
        let expected = if let Some(first) = counts.iter().position(|&c| c == 0) {
            first
        } else {
            let total: usize = counts.iter().sum();
            let scores: Vec<f64> = history
                .iter()
                .map(|h| {
                    let avg = h.iter().sum::<f64>() / h.len() as f64;
                    avg + gamma * ((total as f64).ln() / h.len() as f64).sqrt()
                })
                .collect();
            for (got, want) in sel.scores.iter().zip(&scores) {
                worst = worst.max(rel_err(*got, *want));
            }
            let mut best = 0;
            for i in 1..scores.len() {
                if scores[i] > scores[best] {
                    best = i;
                }
            }
            best
        };
        if arms[expected] != sel.combo {
            mismatched += 1;
        }
        let idx = arms.iter().position(|c| *c == sel.combo).expect("known arm");
        let reward = rng.gen_range(0.0..3.0);
        history[idx].push(reward);
        selector.record_reward(sel.combo, reward)?;
    }
    let mut c = check("ucb-replay", worst, "200 selections");
    c.passed &= mismatched == 0;
    c.detail.push_str(&format!(", {mismatched} mismatched selections"));
    Ok(c)
}

fn brute_force_fronts(points: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let dominated = |a: &[f64], b: &[f64]| {
        a.iter().zip(b).all(|(x, y)| x >= y) && a.iter().zip(b).any(|(x, y)| x > y)
    };
    let mut left: Vec<usize> = (0..points.len()).collect();
    let mut fronts = Vec::new();
    while !left.is_empty() {
        let front: Vec<usize> = left
            .iter()
            .copied()
            .filter(|&i| !left.iter().any(|&j| dominated(&points[j], &points[i])))
            .collect();
        left.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

/// Fronts of 200 random 4-objective points against pairwise dominance.
pub fn dominance(opts: &OracleOptions) -> Result<OracleCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xd0);
    let points: Vec<Vec<f64>> = (0..200)
        .map(|_| (0..4).map(|_| rng.gen_range(0..8) as f64).collect())
        .collect();
    let mut got = nic::non_dominated_fronts(&points)?;
    for f in &mut got {
        f.sort_unstable();
    }
    let want = brute_force_fronts(&points);
    Ok(OracleCheck {
        name: "dominance",
        passed: got == want,
        detail: format!("200x4 points, {} fronts", want.len()),
    })
}

/// Hypervolume by inclusion-exclusion over all subsets of a small front.
fn hypervolume_inclusion_exclusion(points: &[Vec<f64>], reference: &[f64]) -> f64 {
    let n = points.len();
    let mut total = 0.0;
    for mask in 1u32..(1 << n) {
        let mut corner: Vec<f64> = vec![f64::INFINITY; reference.len()];
        for (i, p) in points.iter().enumerate() {
            if mask & (1 << i) != 0 {
                for (c, x) in corner.iter_mut().zip(p) {
                    *c = c.min(*x);
                }
            }
        }
        let vol: f64 = corner
            .iter()
            .zip(reference)
            .map(|(c, r)| (c - r).max(0.0))
            .product();
        if mask.count_ones() % 2 == 1 {
            total += vol;
        } else {
            total -= vol;
        }
    }
    total
}

pub fn hypervolume(opts: &OracleOptions) -> Result<OracleCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x4f);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let m = rng.gen_range(1..=4);
        let k = rng.gen_range(1..=8);
        let points: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..m).map(|_| rng.gen_range(0.0..10.0)).collect())
            .collect();
        let reference = vec![0.0; m];
        worst = worst.max(rel_err(
            nic::hypervolume(&points, &reference),
            hypervolume_inclusion_exclusion(&points, &reference),
        ));
    }
    Ok(check("hypervolume", worst, "100 random fronts"))
}

/// Exploration and exploitation energy against a direct evaluation.
pub fn energy(opts: &OracleOptions) -> Result<OracleCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xe4);
    let n = 3;
    let cap = power::DEFAULT_ENERGY_CAP;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let rounds = rng.gen_range(1..30);
        let stats = random_stats(&mut rng, rounds, n)?;
        let execs = stats.cumulative_execs() as f64;
        let avg = stats.cumulative_avg();
        for combo in CombinationId::all(n) {
            let members = combo.members();
            let e: f64 = members
                .iter()
                .map(|&i| if avg[i] == 0.0 { cap as f64 } else { execs / avg[i] })
                .sum::<f64>()
                / members.len() as f64;
            worst = worst.max(rel_err(power::combination_energy(&stats, combo, cap)?, e));
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..150.0)).collect();
            let r: f64 = members.iter().map(|&i| ratio(v[i], avg[i])).sum::<f64>()
                / members.len() as f64;
            let values = ObjectiveVector::new(v)?;
            worst = worst.max(rel_err(power::aggregate_ratio(&values, &stats, combo)?, r));
        }
    }
    Ok(check("energy", worst, "combination energy and aggregate ratio"))
}

pub fn run_all(opts: &OracleOptions) -> Result<Vec<OracleCheck>> {
    Ok(vec![
        prefix_mean(opts)?,
        reward_replay(opts)?,
        ucb_replay(opts)?,
        dominance(opts)?,
        hypervolume(opts)?,
        energy(opts)?,
    ])
}
