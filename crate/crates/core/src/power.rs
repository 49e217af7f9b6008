//! Objective-aware power schedule.
//!
//! While the pool holds never-fuzzed seeds every seed gets the average
//! combination energy. Once every seed has been fuzzed, energy is scaled
//! by how far the seed sits above the running averages, plus one unit per
//! member objective on which the seed holds the global maximum.

use serde::{Deserialize, Serialize};

use crate::corpus::{Seed, SeedPool};
use crate::error::{Error, Result};
use crate::mpmab::CombinationId;
use crate::objectives::{neutral_ratio, ObjectiveVector, RoundStats};

pub const DEFAULT_ENERGY_CAP: u64 = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FuzzState {
    Exploration,
    Exploitation,
}

impl FuzzState {
    pub fn as_str(self) -> &'static str {
        match self {
            FuzzState::Exploration => "exploration",
            FuzzState::Exploitation => "exploitation",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyAssignment {
    pub seed_id: u64,
    pub state: FuzzState,
    /// Average combination energy, the exploration value.
    pub combo_energy: f64,
    /// Aggregate ratio of the seed; only computed when exploiting.
    pub ratio: Option<f64>,
    /// Number of member objectives on which the seed holds the maximum.
    pub max_bonus: u32,
    /// Pre-rounding energy.
    pub basis: f64,
    pub trials: u64,
    /// Inputs the energy was computed from, kept so logs can be replayed.
    pub cumulative_execs: u64,
    pub cumulative_avg: Vec<f64>,
}

/// `execs / avg`, or `cap` when the average is still zero.
pub fn objective_energy(execs: u64, avg: f64, cap: u64) -> f64 {
    if avg == 0.0 {
        cap as f64
    } else {
        execs as f64 / avg
    }
}

pub fn average_objective_energy(stats: &RoundStats, i: usize, cap: u64) -> Result<f64> {
    let avg = stats
        .cumulative_avg()
        .get(i)
        .ok_or_else(|| Error::structural(format!("unknown objective id {i}")))?;
    Ok(objective_energy(stats.cumulative_execs(), *avg, cap))
}

pub fn combination_energy(stats: &RoundStats, combo: CombinationId, cap: u64) -> Result<f64> {
    if combo.is_empty() {
        return Err(Error::structural("empty combination"));
    }
    let members = combo.members();
    let mut sum = 0.0;
    for &i in &members {
        sum += average_objective_energy(stats, i, cap)?;
    }
    Ok(sum / members.len() as f64)
}

/// Mean over the members of `value_i / v̄_i`, each ratio neutral (1) while
/// its average is zero. This is how differently scaled objectives are
/// combined into one seed-versus-average ratio.
pub fn aggregate_ratio(
    values: &ObjectiveVector,
    stats: &RoundStats,
    combo: CombinationId,
) -> Result<f64> {
    let members = combo.members();
    if members.is_empty() {
        return Err(Error::structural("empty combination"));
    }
    let avg = stats.cumulative_avg();
    let mut sum = 0.0;
    for &i in &members {
        if i >= values.len() || i >= avg.len() {
            return Err(Error::structural(format!("unknown objective id {i}")));
        }
        sum += neutral_ratio(values.get(i), avg[i]);
    }
    Ok(sum / members.len() as f64)
}

/// Tie-inclusive: matching the running maximum counts.
pub fn is_max(value: f64, running_max: f64) -> bool {
    value >= running_max
}

pub fn trials_from_basis(basis: f64, cap: u64) -> u64 {
    let capped = basis.min(cap as f64);
    (capped.ceil() as u64).clamp(1, cap.max(1))
}

pub fn assign_energy(
    seed: &Seed,
    state: FuzzState,
    stats: &RoundStats,
    combo: CombinationId,
    cap: u64,
) -> Result<EnergyAssignment> {
    let combo_energy = combination_energy(stats, combo, cap)?;
    let (basis, ratio, max_bonus) = match state {
        FuzzState::Exploration => (combo_energy, None, 0),
        FuzzState::Exploitation => {
            let values = seed.objectives()?;
            let ratio = aggregate_ratio(values, stats, combo)?;
            let maxima = stats.per_objective_max();
            let bonus = combo
                .members()
                .into_iter()
                .filter(|&i| is_max(values.get(i), maxima[i]))
                .count() as u32;
            (combo_energy * (ratio + bonus as f64), Some(ratio), bonus)
        }
    };
    Ok(EnergyAssignment {
        seed_id: seed.id,
        state,
        combo_energy,
        ratio,
        max_bonus,
        basis,
        trials: trials_from_basis(basis, cap),
        cumulative_execs: stats.cumulative_execs(),
        cumulative_avg: stats.cumulative_avg().to_vec(),
    })
}

/// Exploration while any seed is still unfuzzed (or the pool is empty).
pub fn update_state(pool: &SeedPool) -> FuzzState {
    if pool.is_empty() || pool.seeds().iter().any(|s| s.fuzz_count == 0) {
        FuzzState::Exploration
    } else {
        FuzzState::Exploitation
    }
}

pub const ENERGY_CSV_HEADER: &str =
    "round,seed_id,state,combo_mask,combo_energy,ratio,max_bonus,basis,trials,cum_execs,cum_avgs";

/// One `energy.csv` row; `cum_avgs` is `;`-separated.
pub fn energy_csv_row(round: u64, combo: CombinationId, e: &EnergyAssignment) -> String {
    let avgs: Vec<String> = e.cumulative_avg.iter().map(|v| v.to_string()).collect();
    format!(
        "{round},{},{},{},{},{},{},{},{},{},{}",
        e.seed_id,
        e.state.as_str(),
        combo.mask(),
        e.combo_energy,
        e.ratio.map(|r| r.to_string()).unwrap_or_default(),
        e.max_bonus,
        e.basis,
        e.trials,
        e.cumulative_execs,
        avgs.join(";")
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Origin, SeedPool};
    use crate::simtarget::ExecutionRecord;
    use proptest::prelude::*;

    fn rec(edge: u32) -> ExecutionRecord {
        ExecutionRecord {
            edges: vec![edge],
            exec_cost_us: 10,
            stack_bytes: 0,
            cmp_matched: 0,
        }
    }

    /// One closed round with the given per-round averages and `execs`
    /// identical executions.
    fn stats_with(avgs: &[f64], execs: u64) -> RoundStats {
        let mut s = RoundStats::new(avgs.len());
        for _ in 0..execs {
            s.record_execution(&ObjectiveVector::new(avgs.to_vec()).unwrap())
                .unwrap();
        }
        s.close_round();
        s
    }

    #[test]
    fn objective_energy_quotient() {
        assert_eq!(objective_energy(10_000, 500.0, 1024), 20.0);
        assert_eq!(objective_energy(10_000, 0.0, 1024), 1024.0);
        let s = stats_with(&[500.0, 0.0], 10_000);
        assert_eq!(average_objective_energy(&s, 0, 1024).unwrap(), 20.0);
        assert_eq!(average_objective_energy(&s, 1, 1024).unwrap(), 1024.0);
    }

    #[test]
    fn combination_energy_is_member_mean() {
        // Execs 100, averages 5 and 10 give energies 20 and 10.
        let s = stats_with(&[5.0, 10.0], 100);
        let c = CombinationId::new(0b11, 2).unwrap();
        assert_eq!(combination_energy(&s, c, 1024).unwrap(), 15.0);
        let single = CombinationId::new(0b01, 2).unwrap();
        assert_eq!(
            combination_energy(&s, single, 1024).unwrap(),
            average_objective_energy(&s, 0, 1024).unwrap()
        );
    }

    fn seed_with(values: &[f64]) -> Seed {
        let mut pool = SeedPool::new();
        pool.insert(
            b"s".to_vec(),
            &rec(1),
            &ObjectiveVector::new(values.to_vec()).unwrap(),
            Origin::Initial,
            0,
        );
        pool.get(0).unwrap().clone()
    }

    #[test]
    fn exploration_uses_combination_energy() {
        let s = stats_with(&[10.0, 10.0], 100);
        let c = CombinationId::new(0b11, 2).unwrap();
        let e = assign_energy(&seed_with(&[1.0, 1.0]), FuzzState::Exploration, &s, c, 1024).unwrap();
        assert_eq!(e.basis, 10.0);
        assert_eq!(e.trials, 10);
    }

    #[test]
    fn exploitation_adds_max_bonus() {
        // 100 executions averaging (10, 10) with maxima (30, 12): combination
        // energy 10. A seed at (30, 0) has ratio (3 + 0) / 2 = 1.5 and holds
        // one maximum, so the basis is 10 * (1.5 + 1) = 25.
        let mut s = RoundStats::new(2);
        let mut push = |v: [f64; 2], k: usize| {
            for _ in 0..k {
                s.record_execution(&ObjectiveVector::new(v.to_vec()).unwrap())
                    .unwrap();
            }
        };
        push([30.0, 12.0], 1);
        push([0.0, 9.0], 2);
        push([10.0, 10.0], 97);
        s.close_round();
        let c = CombinationId::new(0b11, 2).unwrap();
        let e = assign_energy(&seed_with(&[30.0, 0.0]), FuzzState::Exploitation, &s, c, 1024).unwrap();
        assert!((e.combo_energy - 10.0).abs() < 1e-12);
        assert!((e.ratio.unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(e.max_bonus, 1);
        assert!((e.basis - 25.0).abs() < 1e-9);
        assert_eq!(e.trials, 25);
    }

    #[test]
    fn average_seed_gets_exploration_energy() {
        let mut s = RoundStats::new(2);
        for v in [[10.0, 10.0], [10.0, 10.0], [20.0, 20.0], [0.0, 0.0]] {
            s.record_execution(&ObjectiveVector::new(v.to_vec()).unwrap())
                .unwrap();
        }
        s.close_round();
        let c = CombinationId::new(0b11, 2).unwrap();
        let seed = seed_with(&[10.0, 10.0]);
        let explore = assign_energy(&seed, FuzzState::Exploration, &s, c, 1024).unwrap();
        let exploit = assign_energy(&seed, FuzzState::Exploitation, &s, c, 1024).unwrap();
        assert_eq!(exploit.max_bonus, 0);
        assert_eq!(exploit.basis, explore.basis);
    }

    #[test]
    fn exploiting_unexecuted_seed_fails() {
        let s = stats_with(&[1.0], 1);
        let mut seed = seed_with(&[1.0]);
        seed.best_objectives = None;
        let c = CombinationId::new(1, 1).unwrap();
        assert!(matches!(
            assign_energy(&seed, FuzzState::Exploitation, &s, c, 1024),
            Err(Error::Precondition(_))
        ));
        assert!(assign_energy(&seed, FuzzState::Exploration, &s, c, 1024).is_ok());
    }

    #[test]
    fn state_follows_unfuzzed_seeds() {
        let mut pool = SeedPool::new();
        assert_eq!(update_state(&pool), FuzzState::Exploration);
        pool.insert(b"a".to_vec(), &rec(1), &ObjectiveVector::zeros(1), Origin::Initial, 0);
        assert_eq!(update_state(&pool), FuzzState::Exploration);
        pool.get_mut(0).unwrap().fuzz_count = 1;
        assert_eq!(update_state(&pool), FuzzState::Exploitation);
        pool.insert(b"b".to_vec(), &rec(2), &ObjectiveVector::zeros(1), Origin::MainLoop, 1);
        assert_eq!(update_state(&pool), FuzzState::Exploration);
    }

    #[test]
    fn trials_are_clamped() {
        assert_eq!(trials_from_basis(0.0, 1024), 1);
        assert_eq!(trials_from_basis(0.2, 1024), 1);
        assert_eq!(trials_from_basis(9.01, 1024), 10);
        assert_eq!(trials_from_basis(1e9, 1024), 1024);
    }

    proptest! {
        #[test]
        fn exploitation_never_below_exploration_when_ratio_at_least_one(
            avgs in proptest::collection::vec(0.5f64..1e4, 3),
            factors in proptest::collection::vec(1.0f64..5.0, 3),
            execs in 1u64..200,
            mask in 1u32..8,
            cap in 1u64..4096,
        ) {
            let s = stats_with(&avgs, execs);
            let values: Vec<f64> = avgs.iter().zip(&factors).map(|(a, f)| a * f).collect();
            let seed = seed_with(&values);
            let c = CombinationId::new(mask, 3).unwrap();
            let explore = assign_energy(&seed, FuzzState::Exploration, &s, c, cap).unwrap();
            let exploit = assign_energy(&seed, FuzzState::Exploitation, &s, c, cap).unwrap();
            prop_assert!(exploit.ratio.unwrap() >= 1.0 - 1e-12);
            prop_assert!(exploit.trials >= explore.trials);
            prop_assert!((1..=cap).contains(&exploit.trials));
            prop_assert!((1..=cap).contains(&explore.trials));
        }

        #[test]
        fn doubling_execs_doubles_energy(avg in 0.1f64..1e4, execs in 1u64..1_000_000) {
            let a = objective_energy(execs, avg, 1024);
            let b = objective_energy(execs * 2, avg, 1024);
            prop_assert!((b - 2.0 * a).abs() <= 1e-9 * b.abs());
        }
    }
}
