//! The shared seed pool.
//!
//! Coverage is an AFL-style edge map: each edge keeps the highest hit-count
//! bucket seen so far, and an input is interesting when it reaches a new
//! edge or a higher bucket on a known one. The main loop and the
//! evolutionary optimizer both admit into the same pool.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpmab::CombinationId;
use crate::objectives::{ObjectiveVector, RoundStats};
use crate::power::aggregate_ratio;
use crate::simtarget::ExecutionRecord;

/// Probability that a non-favored seed is skipped when its turn comes.
pub const SKIP_NON_FAVORED: f64 = 0.9;

/// Edge id → hit-count bucket.
pub type Coverage = BTreeMap<u32, u8>;

/// AFL hit-count bucket: 1, 2, 3, 4-7, 8-15, 16-31, 32-127, 128+ map to 1..=8.
pub fn bucket(hits: u32) -> u8 {
    match hits {
        0 => 0,
        1 => 1,
        2 => 2,
        3 => 3,
        4..=7 => 4,
        8..=15 => 5,
        16..=31 => 6,
        32..=127 => 7,
        _ => 8,
    }
}

pub fn classify(edges: &[u32]) -> Coverage {
    let mut hits: BTreeMap<u32, u32> = BTreeMap::new();
    for e in edges {
        *hits.entry(*e).or_default() += 1;
    }
    hits.into_iter().map(|(e, h)| (e, bucket(h))).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    Initial,
    MainLoop,
    Nic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    pub id: u64,
    pub bytes: Vec<u8>,
    /// Best value seen per objective; `None` until first executed.
    pub best_objectives: Option<ObjectiveVector>,
    pub coverage: Coverage,
    pub exec_cost_us: u64,
    pub fuzz_count: u64,
    pub origin: Origin,
    pub discovered_round: u64,
}

impl Seed {
    /// Folds a new observation into the best-so-far values.
    pub fn observe(&mut self, obs: &ObjectiveVector) -> bool {
        match &mut self.best_objectives {
            Some(best) => best.absorb_max(obs),
            None => {
                self.best_objectives = Some(obs.clone());
                true
            }
        }
    }

    pub fn objectives(&self) -> Result<&ObjectiveVector> {
        self.best_objectives
            .as_ref()
            .ok_or_else(|| Error::precondition(format!("seed {} was never executed", self.id)))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedPool {
    seeds: Vec<Seed>,
    global_coverage: Coverage,
    /// Edge → id of the seed minimizing `exec_cost * len` among those
    /// covering it.
    top_rated: BTreeMap<u32, u64>,
    favored: BTreeSet<u64>,
    known_inputs: BTreeSet<Vec<u8>>,
    cursor: usize,
}

impl SeedPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn seeds(&self) -> &[Seed] {
        &self.seeds
    }

    pub fn get(&self, id: u64) -> Option<&Seed> {
        self.seeds.get(id as usize)
    }

    pub fn get_mut(&mut self, id: u64) -> Option<&mut Seed> {
        self.seeds.get_mut(id as usize)
    }

    pub fn global_coverage(&self) -> &Coverage {
        &self.global_coverage
    }

    pub fn favored(&self) -> &BTreeSet<u64> {
        &self.favored
    }

    pub fn contains_input(&self, bytes: &[u8]) -> bool {
        self.known_inputs.contains(bytes)
    }

    /// True if `coverage` reaches an unseen edge or a higher bucket.
    pub fn is_novel(&self, coverage: &Coverage) -> bool {
        coverage
            .iter()
            .any(|(e, b)| self.global_coverage.get(e).is_none_or(|g| b > g))
    }

    /// Adds a seed unconditionally (initial corpus, Pareto members).
    /// Identical inputs are stored once.
    pub fn insert(
        &mut self,
        bytes: Vec<u8>,
        record: &ExecutionRecord,
        obs: &ObjectiveVector,
        origin: Origin,
        round: u64,
    ) -> Option<u64> {
        if bytes.is_empty() || self.known_inputs.contains(&bytes) {
            return None;
        }
        let coverage = classify(&record.edges);
        for (e, b) in &coverage {
            let g = self.global_coverage.entry(*e).or_insert(0);
            if b > g {
                *g = *b;
            }
        }
        let id = self.seeds.len() as u64;
        self.known_inputs.insert(bytes.clone());
        self.seeds.push(Seed {
            id,
            bytes,
            best_objectives: Some(obs.clone()),
            coverage,
            exec_cost_us: record.exec_cost_us,
            fuzz_count: 0,
            origin,
            discovered_round: round,
        });
        self.update_favored(id);
        Some(id)
    }

    /// Admits `bytes` iff its execution produced new coverage.
    pub fn add_if_new_coverage(
        &mut self,
        bytes: &[u8],
        record: &ExecutionRecord,
        obs: &ObjectiveVector,
        origin: Origin,
        round: u64,
    ) -> Option<&Seed> {
        if !self.is_novel(&classify(&record.edges)) {
            return None;
        }
        let id = self.insert(bytes.to_vec(), record, obs, origin, round)?;
        self.get(id)
    }

    fn update_favored(&mut self, id: u64) {
        let seed = &self.seeds[id as usize];
        let score = |s: &Seed| s.exec_cost_us as u128 * s.bytes.len() as u128;
        let mine = score(seed);
        for e in seed.coverage.keys() {
            match self.top_rated.get(e) {
                Some(&cur) if score(&self.seeds[cur as usize]) <= mine => {}
                _ => {
                    self.top_rated.insert(*e, id);
                }
            }
        }
        self.favored = self.top_rated.values().copied().collect();
    }

    /// Cycles through the pool; favored seeds are always taken, others are
    /// skipped with probability [`SKIP_NON_FAVORED`].
    pub fn pick_next_seed(&mut self, rng: &mut impl Rng) -> Result<u64> {
        if self.seeds.is_empty() {
            return Err(Error::precondition("cannot pick from an empty pool"));
        }
        loop {
            let id = self.cursor as u64;
            self.cursor = (self.cursor + 1) % self.seeds.len();
            if self.favored.contains(&id) || rng.gen::<f64>() >= SKIP_NON_FAVORED {
                return Ok(id);
            }
        }
    }

    /// Recomputes the edge map from the stored seeds alone.
    pub fn replay_coverage(&self) -> Coverage {
        let mut map = Coverage::new();
        for s in &self.seeds {
            for (e, b) in &s.coverage {
                let g = map.entry(*e).or_insert(0);
                *g = (*g).max(*b);
            }
        }
        map
    }

    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let seed_dir = dir.join("seeds");
        fs::create_dir_all(&seed_dir).map_err(|e| Error::io(&seed_dir, e))?;
        let mut index = Vec::with_capacity(self.seeds.len());
        for s in &self.seeds {
            let path = seed_dir.join(format!("id_{:06}", s.id));
            fs::write(&path, &s.bytes).map_err(|e| Error::io(&path, e))?;
            index.push(IndexEntry {
                id: s.id,
                file: format!("seeds/id_{:06}", s.id),
                origin: s.origin,
                round: s.discovered_round,
                objectives: s.best_objectives.clone(),
                edges: s.coverage.iter().map(|(e, b)| (*e, *b)).collect(),
                exec_cost_us: s.exec_cost_us,
                fuzz_count: s.fuzz_count,
            });
        }
        let path = dir.join("index.json");
        fs::write(&path, serde_json::to_string_pretty(&index)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("index.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let index: Vec<IndexEntry> = serde_json::from_str(&text)?;
        let mut pool = SeedPool::new();
        for entry in index {
            let p = dir.join(&entry.file);
            let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            if entry.id != pool.seeds.len() as u64 {
                return Err(Error::structural(format!(
                    "pool index is not dense at id {}",
                    entry.id
                )));
            }
            let coverage: Coverage = entry.edges.into_iter().collect();
            for (e, b) in &coverage {
                let g = pool.global_coverage.entry(*e).or_insert(0);
                *g = (*g).max(*b);
            }
            pool.known_inputs.insert(bytes.clone());
            pool.seeds.push(Seed {
                id: entry.id,
                bytes,
                best_objectives: entry.objectives,
                coverage,
                exec_cost_us: entry.exec_cost_us,
                fuzz_count: entry.fuzz_count,
                origin: entry.origin,
                discovered_round: entry.round,
            });
            pool.update_favored(entry.id);
        }
        Ok(pool)
    }
}

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    id: u64,
    file: String,
    origin: Origin,
    round: u64,
    objectives: Option<ObjectiveVector>,
    edges: Vec<(u32, u8)>,
    exec_cost_us: u64,
    fuzz_count: u64,
}

/// A seed is good when its aggregate ratio under `combo` exceeds 1.
pub fn is_good_seed(seed: &Seed, stats: &RoundStats, combo: CombinationId) -> Result<bool> {
    Ok(aggregate_ratio(seed.objectives()?, stats, combo)? > 1.0)
}
