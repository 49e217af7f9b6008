//! In-loop evolutionary optimizer over the active objective combination.
//!
//! A sample of the pool is evolved with keep-both two-point crossover and
//! credit-weighted mutation; survivors are chosen by non-dominated rank and
//! crowding distance. Everything it executes feeds the shared round
//! statistics and pool.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{classify, Origin, SeedPool};
use crate::error::{Error, Result};
use crate::mpmab::CombinationId;
use crate::mutation::{self, CreditTable};
use crate::objectives::{ObjectiveVector, RoundStats};
use crate::simtarget::{ExecutionRecord, Executor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NicConfig {
    pub population_fraction: f64,
    pub pop_min: usize,
    pub pop_max: usize,
    pub generations: u32,
    pub start_threshold: f64,
    /// Cap on NIC executions as a fraction of main-loop executions.
    pub budget_fraction: f64,
}

impl Default for NicConfig {
    fn default() -> Self {
        Self {
            population_fraction: 0.10,
            pop_min: 4,
            pop_max: 256,
            generations: 100,
            start_threshold: -0.15,
            budget_fraction: 0.06,
        }
    }
}

impl NicConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.population_fraction > 0.0 && self.population_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "population fraction must be in (0, 1], got {}",
                self.population_fraction
            )));
        }
        if self.pop_min < 2 || self.pop_min > self.pop_max {
            return Err(Error::Config(format!(
                "population bounds {}..{} are invalid",
                self.pop_min, self.pop_max
            )));
        }
        if !(self.budget_fraction >= 0.0 && self.budget_fraction.is_finite()) {
            return Err(Error::Config(format!(
                "NIC budget fraction must be non-negative, got {}",
                self.budget_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub bytes: Vec<u8>,
    /// Values of the active combination's members only.
    pub objectives: Vec<f64>,
    /// Full record when this individual was executed by NIC.
    pub record: Option<ExecutionRecord>,
    /// Pool id when sampled from the pool.
    pub seed_id: Option<u64>,
    pub rank: usize,
    pub crowding: f64,
}

impl Individual {
    pub fn new(bytes: Vec<u8>, objectives: Vec<f64>) -> Self {
        Self {
            bytes,
            objectives,
            record: None,
            seed_id: None,
            rank: 0,
            crowding: 0.0,
        }
    }
}

const GRADIENT_EPS: f64 = 1e-9;

/// True when the relative change from `prev` to `cur` drops below
/// `threshold`.
pub fn should_start(prev: f64, cur: f64, threshold: f64) -> bool {
    (cur - prev) / prev.max(GRADIENT_EPS) < threshold
}

pub fn population_size(pool_len: usize, cfg: &NicConfig) -> usize {
    let raw = (cfg.population_fraction * pool_len as f64).round() as usize;
    let size = raw.clamp(cfg.pop_min, cfg.pop_max);
    if size.is_multiple_of(2) {
        size
    } else if size < cfg.pop_max {
        size + 1
    } else {
        size - 1
    }
}

/// Samples without replacement, or with replacement when the pool is
/// smaller than the population.
pub fn sample_population(
    pool: &SeedPool,
    combo: CombinationId,
    cfg: &NicConfig,
    rng: &mut impl Rng,
) -> Result<Vec<Individual>> {
    if pool.is_empty() {
        return Err(Error::precondition("NIC needs a non-empty pool"));
    }
    let size = population_size(pool.len(), cfg);
    let ids: Vec<usize> = if pool.len() >= size {
        rand::seq::index::sample(rng, pool.len(), size).into_vec()
    } else {
        (0..size).map(|_| rng.gen_range(0..pool.len())).collect()
    };
    let members = combo.members();
    ids.into_iter()
        .map(|i| {
            let seed = &pool.seeds()[i];
            let mut ind = Individual::new(seed.bytes.clone(), seed.objectives()?.project(&members));
            ind.seed_id = Some(seed.id);
            Ok(ind)
        })
        .collect()
}

/// `a` dominates `b` when it is no worse everywhere and better somewhere
/// (maximization).
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strictly = true;
        }
    }
    strictly
}

/// Fronts of indices into `points`, best first.
pub fn non_dominated_fronts(points: &[Vec<f64>]) -> Result<Vec<Vec<usize>>> {
    let Some(first) = points.first() else {
        return Ok(Vec::new());
    };
    let m = first.len();
    if let Some(p) = points.iter().find(|p| p.len() != m) {
        return Err(Error::structural(format!(
            "objective dimension mismatch: {} vs {m}",
            p.len()
        )));
    }
    let n = points.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut counts = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates(&points[i], &points[j]) {
                dominated_by[i].push(j);
                counts[j] += 1;
            } else if dominates(&points[j], &points[i]) {
                dominated_by[j].push(i);
                counts[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| counts[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by[i] {
                counts[j] -= 1;
                if counts[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    Ok(fronts)
}

/// Sorts `pop` into fronts and writes 1-based ranks.
pub fn non_dominated_sort(pop: &mut [Individual]) -> Result<Vec<Vec<usize>>> {
    let points: Vec<Vec<f64>> = pop.iter().map(|i| i.objectives.clone()).collect();
    let fronts = non_dominated_fronts(&points)?;
    for (r, front) in fronts.iter().enumerate() {
        for &i in front {
            pop[i].rank = r + 1;
        }
    }
    Ok(fronts)
}

/// Crowding distance of each member of `front`; boundary points are
/// infinite.
pub fn crowding_distance(points: &[Vec<f64>], front: &[usize]) -> Vec<f64> {
    let k = front.len();
    let mut dist = vec![0.0; k];
    if k <= 2 {
        return vec![f64::INFINITY; k];
    }
    let m = points[front[0]].len();
    for obj in 0..m {
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            points[front[a]][obj]
                .partial_cmp(&points[front[b]][obj])
                .unwrap_or(Ordering::Equal)
        });
        let lo = points[front[order[0]]][obj];
        let hi = points[front[order[k - 1]]][obj];
        dist[order[0]] = f64::INFINITY;
        dist[order[k - 1]] = f64::INFINITY;
        if hi > lo {
            for w in 1..k - 1 {
                let prev = points[front[order[w - 1]]][obj];
                let next = points[front[order[w + 1]]][obj];
                dist[order[w]] += (next - prev) / (hi - lo);
            }
        }
    }
    dist
}

/// Fills `n` slots by ascending rank, breaking the boundary front by
/// descending crowding distance (stable on index).
pub fn select_next_parents(mut pop: Vec<Individual>, n: usize) -> Result<Vec<Individual>> {
    if pop.len() < n {
        return Err(Error::precondition(format!(
            "cannot select {n} parents from {}",
            pop.len()
        )));
    }
    let fronts = non_dominated_sort(&mut pop)?;
    let points: Vec<Vec<f64>> = pop.iter().map(|i| i.objectives.clone()).collect();
    let mut chosen = Vec::with_capacity(n);
    for front in fronts {
        let dist = crowding_distance(&points, &front);
        for (slot, &i) in front.iter().enumerate() {
            pop[i].crowding = dist[slot];
        }
        if chosen.len() + front.len() <= n {
            chosen.extend(front);
        } else {
            let mut order: Vec<usize> = (0..front.len()).collect();
            order.sort_by(|&a, &b| dist[b].partial_cmp(&dist[a]).unwrap_or(Ordering::Equal));
            chosen.extend(order.into_iter().take(n - chosen.len()).map(|s| front[s]));
        }
        if chosen.len() == n {
            break;
        }
    }
    let mut slots: Vec<Option<Individual>> = pop.into_iter().map(Some).collect();
    Ok(chosen
        .into_iter()
        .map(|i| slots[i].take().expect("each index chosen once"))
        .collect())
}

/// Exact hypervolume dominated by `points` above `reference`
/// (maximization). Points not strictly above the reference contribute
/// nothing.
pub fn hypervolume(points: &[Vec<f64>], reference: &[f64]) -> f64 {
    let pts: Vec<&[f64]> = points
        .iter()
        .map(|p| p.as_slice())
        .filter(|p| p.iter().zip(reference).all(|(x, r)| x > r))
        .collect();
    hv_slices(&pts, reference)
}

fn hv_slices(points: &[&[f64]], reference: &[f64]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let m = reference.len();
    if m == 1 {
        let best = points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        return best - reference[0];
    }
    let last = m - 1;
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| b[last].partial_cmp(&a[last]).unwrap_or(Ordering::Equal));
    let mut volume = 0.0;
    for i in 0..sorted.len() {
        let floor = sorted.get(i + 1).map_or(reference[last], |p| p[last]);
        let height = sorted[i][last] - floor;
        if height > 0.0 {
            let slice: Vec<&[f64]> = sorted[..=i].iter().map(|p| &p[..last]).collect();
            volume += hv_slices(&slice, &reference[..last]) * height;
        }
    }
    volume
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationLog {
    pub generation: u32,
    pub front_sizes: Vec<usize>,
    pub front: Vec<Vec<f64>>,
    pub execs: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NicOutcome {
    pub front: Vec<Individual>,
    pub generations: u32,
    pub execs: u64,
    /// Executed inputs that showed new coverage, recorded before admission.
    pub novel_inputs: Vec<Vec<u8>>,
    /// Pool ids of executed inputs admitted for new coverage.
    pub admitted: Vec<u64>,
    /// Pool ids added for Pareto membership.
    pub front_added: Vec<u64>,
    pub log: Vec<GenerationLog>,
}

/// Context the NIC shares with the main loop.
pub struct NicContext<'a, E: Executor> {
    pub executor: &'a mut E,
    pub pool: &'a mut SeedPool,
    pub stats: &'a mut RoundStats,
    pub credits: &'a mut CreditTable,
    pub round: u64,
}

fn front_log(pop: &[Individual], fronts: &[Vec<usize>], generation: u32, execs: u64) -> GenerationLog {
    GenerationLog {
        generation,
        front_sizes: fronts.iter().map(Vec::len).collect(),
        front: fronts
            .first()
            .map(|f| f.iter().map(|&i| pop[i].objectives.clone()).collect())
            .unwrap_or_default(),
        execs,
    }
}

/// Runs up to `cfg.generations` generations, never exceeding `budget`
/// executions, and returns the final rank-1 front. Front members and every
/// executed input with new coverage end up in the pool.
pub fn run_nic<E: Executor>(
    ctx: NicContext<'_, E>,
    combo: CombinationId,
    cfg: &NicConfig,
    budget: u64,
    rng: &mut impl Rng,
) -> Result<NicOutcome> {
    let NicContext {
        executor,
        pool,
        stats,
        credits,
        round,
    } = ctx;
    let members = combo.members();
    let n_obj = stats.num_objectives();
    let mut parents = sample_population(pool, combo, cfg, rng)?;
    let size = parents.len();
    let mut fronts = non_dominated_sort(&mut parents)?;
    let mut log = vec![front_log(&parents, &fronts, 0, 0)];
    let mut execs = 0u64;
    let mut admitted = Vec::new();
    let mut novel_inputs = Vec::new();
    let mut generations = 0;

    while generations < cfg.generations && execs + size as u64 <= budget {
        let mut order: Vec<usize> = (0..size).collect();
        order.shuffle(rng);
        let mut offspring = Vec::with_capacity(size);
        for pair in order.chunks_exact(2) {
            let (a, b) = (&parents[pair[0]], &parents[pair[1]]);
            let (x, y) = mutation::crossover(&a.bytes, &b.bytes, rng);
            for (child, parent) in [(x, pair[0]), (y, pair[1])] {
                let op = mutation::pick_operator(credits, combo, rng);
                let pos = mutation::pick_position(credits, combo, child.len(), rng);
                let donor = &parents[rng.gen_range(0..size)].bytes;
                let bytes = mutation::apply_operator(op, &child, pos, Some(donor), rng);
                let record = executor.execute(&bytes)?;
                execs += 1;
                let obs = ObjectiveVector::from_record(&record, n_obj);
                stats.record_execution(&obs)?;
                if pool.is_novel(&classify(&record.edges)) {
                    novel_inputs.push(bytes.clone());
                }
                if let Some(seed) =
                    pool.add_if_new_coverage(&bytes, &record, &obs, Origin::Nic, round)
                {
                    admitted.push(seed.id);
                }
                let values = obs.project(&members);
                let improved = values
                    .iter()
                    .zip(&parents[parent].objectives)
                    .any(|(v, p)| v > p);
                mutation::credit_update(
                    credits,
                    combo,
                    op,
                    mutation::decile(pos, child.len()),
                    improved,
                );
                let mut ind = Individual::new(bytes, values);
                ind.record = Some(record);
                offspring.push(ind);
            }
        }
        parents.extend(offspring);
        parents = select_next_parents(parents, size)?;
        generations += 1;
        fronts = non_dominated_sort(&mut parents)?;
        log.push(front_log(&parents, &fronts, generations, execs));
    }

    let front: Vec<Individual> = fronts
        .first()
        .map(|f| f.iter().map(|&i| parents[i].clone()).collect())
        .unwrap_or_default();
    // Members with equal objective vectors are interchangeable; one
    // representative per distinct vector joins the pool.
    let mut front_added = Vec::new();
    let mut added_values: Vec<&[f64]> = Vec::new();
    for ind in &front {
        if added_values.contains(&ind.objectives.as_slice()) {
            continue;
        }
        added_values.push(&ind.objectives);
        if let Some(record) = &ind.record {
            let obs = ObjectiveVector::from_record(record, n_obj);
            if let Some(id) = pool.insert(ind.bytes.clone(), record, &obs, Origin::Nic, round) {
                front_added.push(id);
            }
        }
    }
    Ok(NicOutcome {
        front,
        generations,
        execs,
        novel_inputs,
        admitted,
        front_added,
        log,
    })
}
