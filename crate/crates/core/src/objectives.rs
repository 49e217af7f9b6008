//! Objective registry and per-round statistics.
//!
//! Round `t` averages every execution recorded while it was open. Closing a
//! round folds that average into the cumulative mean over rounds `1..=t`,
//! which is what the reward and energy formulas divide by.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simtarget::ExecutionRecord;

/// Index of the speed objective. It is always objective 0.
pub const SPEED: usize = 0;
pub const STACK: usize = 1;
pub const CMP: usize = 2;

/// Virtual microseconds per virtual second.
const MICROS_PER_SECOND: f64 = 1_000_000.0;

const STANDARD_NAMES: [&str; 3] = ["speed", "stack", "cmp"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub id: usize,
    pub name: String,
    pub is_speed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectiveRegistry {
    specs: Vec<ObjectiveSpec>,
}

impl ObjectiveRegistry {
    pub fn new(specs: Vec<ObjectiveSpec>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::structural("at least one objective is required"));
        }
        for (idx, spec) in specs.iter().enumerate() {
            if spec.id != idx {
                return Err(Error::structural(format!(
                    "objective ids must be dense: position {idx} holds id {}",
                    spec.id
                )));
            }
        }
        let speed: Vec<_> = specs.iter().filter(|s| s.is_speed).collect();
        if speed.len() != 1 || speed[0].id != SPEED {
            return Err(Error::structural(
                "exactly one speed objective is required and it must have id 0",
            ));
        }
        Ok(Self { specs })
    }

    /// The first `n` of (speed, stack, cmp).
    pub fn standard(n: usize) -> Result<Self> {
        if n == 0 || n > STANDARD_NAMES.len() {
            return Err(Error::Config(format!(
                "objective count must be in 1..={}, got {n}",
                STANDARD_NAMES.len()
            )));
        }
        Self::new(
            STANDARD_NAMES[..n]
                .iter()
                .enumerate()
                .map(|(id, name)| ObjectiveSpec {
                    id,
                    name: (*name).to_string(),
                    is_speed: id == SPEED,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn specs(&self) -> &[ObjectiveSpec] {
        &self.specs
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.specs.get(id).map(|s| s.name.as_str())
    }
}

/// Per-execution measurements, one entry per objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectiveVector(Vec<f64>);

impl ObjectiveVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::structural(format!(
                "objective {i} must be finite and non-negative, got {v}"
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    /// Measures the first `n` standard objectives from an execution.
    /// Speed is executions per virtual second of this single execution.
    pub fn from_record(record: &ExecutionRecord, n: usize) -> Self {
        let all = [
            MICROS_PER_SECOND / record.exec_cost_us.max(1) as f64,
            record.stack_bytes as f64,
            record.cmp_matched as f64,
        ];
        Self(all[..n.min(all.len())].to_vec())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    /// Elementwise max in place; returns true if any entry grew.
    pub fn absorb_max(&mut self, other: &ObjectiveVector) -> bool {
        let mut grew = false;
        for (mine, theirs) in self.0.iter_mut().zip(&other.0) {
            if *theirs > *mine {
                *mine = *theirs;
                grew = true;
            }
        }
        grew
    }

    /// Restriction to the listed objective ids, in the given order.
    pub fn project(&self, ids: &[usize]) -> Vec<f64> {
        ids.iter().map(|&i| self.0[i]).collect()
    }
}

/// `numerator / denominator`, or 1 when the denominator is zero.
pub fn neutral_ratio(numerator: f64, denominator: f64) -> f64 {
    if denominator == 0.0 {
        1.0
    } else {
        numerator / denominator
    }
}

/// One closed round, as written to the per-round CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    pub per_round_avg: Vec<f64>,
    pub cumulative_avg: Vec<f64>,
    pub execs: u64,
}

impl RoundRecord {
    pub fn csv_header(n: usize) -> String {
        let mut cols = vec!["round".to_string()];
        cols.extend((0..n).map(|i| format!("avg_{i}")));
        cols.extend((0..n).map(|i| format!("cum_{i}")));
        cols.push("execs".into());
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![self.round.to_string()];
        cols.extend(self.per_round_avg.iter().map(|v| format!("{v}")));
        cols.extend(self.cumulative_avg.iter().map(|v| format!("{v}")));
        cols.push(self.execs.to_string());
        cols.join(",")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    /// The currently open round (1-based).
    round: u64,
    round_sums: Vec<f64>,
    per_round_avg: Vec<f64>,
    cumulative_sum: Vec<f64>,
    cumulative_avg: Vec<f64>,
    execs_in_round: u64,
    cumulative_execs: u64,
    per_objective_max: Vec<f64>,
    /// Per-round averages of every closed round, oldest first.
    history: Vec<Vec<f64>>,
}

impl RoundStats {
    pub fn new(n: usize) -> Self {
        Self {
            round: 1,
            round_sums: vec![0.0; n],
            per_round_avg: vec![0.0; n],
            cumulative_sum: vec![0.0; n],
            cumulative_avg: vec![0.0; n],
            execs_in_round: 0,
            cumulative_execs: 0,
            per_objective_max: vec![0.0; n],
            history: Vec::new(),
        }
    }

    pub fn num_objectives(&self) -> usize {
        self.per_round_avg.len()
    }

    pub fn record_execution(&mut self, obs: &ObjectiveVector) -> Result<()> {
        if obs.len() != self.num_objectives() {
            return Err(Error::structural(format!(
                "observation has {} objectives, stats track {}",
                obs.len(),
                self.num_objectives()
            )));
        }
        self.execs_in_round += 1;
        self.cumulative_execs += 1;
        let count = self.execs_in_round as f64;
        for (i, &v) in obs.values().iter().enumerate() {
            self.round_sums[i] += v;
            self.per_round_avg[i] = self.round_sums[i] / count;
            if v > self.per_objective_max[i] {
                self.per_objective_max[i] = v;
            }
        }
        Ok(())
    }

    /// Closes the open round. An empty round contributes zeros.
    pub fn close_round(&mut self) -> RoundRecord {
        let t = self.round;
        let n = self.num_objectives();
        let closed = std::mem::replace(&mut self.per_round_avg, vec![0.0; n]);
        for (i, v) in closed.iter().enumerate() {
            self.cumulative_sum[i] += v;
            self.cumulative_avg[i] = self.cumulative_sum[i] / t as f64;
        }
        let record = RoundRecord {
            round: t,
            per_round_avg: closed.clone(),
            cumulative_avg: self.cumulative_avg.clone(),
            execs: self.execs_in_round,
        };
        self.history.push(closed);
        self.round_sums.iter_mut().for_each(|s| *s = 0.0);
        self.execs_in_round = 0;
        self.round += 1;
        record
    }

    /// The round currently accumulating executions.
    pub fn round(&self) -> u64 {
        self.round
    }

    /// Number of closed rounds, i.e. the `t` the reward formulas use.
    pub fn closed_rounds(&self) -> u64 {
        self.history.len() as u64
    }

    pub fn per_round_avg(&self) -> &[f64] {
        &self.per_round_avg
    }

    pub fn cumulative_avg(&self) -> &[f64] {
        &self.cumulative_avg
    }

    pub fn execs_in_round(&self) -> u64 {
        self.execs_in_round
    }

    pub fn cumulative_execs(&self) -> u64 {
        self.cumulative_execs
    }

    pub fn per_objective_max(&self) -> &[f64] {
        &self.per_objective_max
    }

    pub fn history(&self) -> &[Vec<f64>] {
        &self.history
    }

    /// Per-round average of the most recently closed round.
    pub fn last_round_avg(&self) -> Option<&[f64]> {
        self.history.last().map(Vec::as_slice)
    }

    /// `v^t / v̄^t` for objective `i` over the last closed round.
    pub fn round_ratio(&self, i: usize) -> Result<f64> {
        let last = self
            .last_round_avg()
            .ok_or_else(|| Error::precondition("no closed round yet"))?;
        let cur = last
            .get(i)
            .ok_or_else(|| Error::structural(format!("unknown objective id {i}")))?;
        Ok(neutral_ratio(*cur, self.cumulative_avg[i]))
    }
}

/// Reward for having optimized objective `i` during the last closed round:
/// `t * (v_i / v̄_i - lambda * v_0 / v̄_0)`.
pub fn objective_reward(stats: &RoundStats, i: usize, lambda: f64) -> Result<f64> {
    let t = stats.closed_rounds() as f64;
    let own = stats.round_ratio(i)?;
    let speed = stats.round_ratio(SPEED)?;
    Ok(t * (own - lambda * speed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vec3(a: f64, b: f64, c: f64) -> ObjectiveVector {
        ObjectiveVector::new(vec![a, b, c]).unwrap()
    }

    #[test]
    fn registry_rejects_bad_layouts() {
        assert!(ObjectiveRegistry::new(vec![]).is_err());
        let no_speed = vec![ObjectiveSpec {
            id: 0,
            name: "stack".into(),
            is_speed: false,
        }];
        assert!(ObjectiveRegistry::new(no_speed).is_err());
        let sparse = vec![
            ObjectiveSpec {
                id: 0,
                name: "speed".into(),
                is_speed: true,
            },
            ObjectiveSpec {
                id: 2,
                name: "cmp".into(),
                is_speed: false,
            },
        ];
        assert!(ObjectiveRegistry::new(sparse).is_err());
        assert_eq!(ObjectiveRegistry::standard(3).unwrap().len(), 3);
        assert!(ObjectiveRegistry::standard(4).is_err());
    }

    #[test]
    fn vector_rejects_negative_and_nan() {
        assert!(ObjectiveVector::new(vec![1.0, -1.0]).is_err());
        assert!(ObjectiveVector::new(vec![f64::NAN]).is_err());
        assert!(ObjectiveVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn first_observation_is_the_mean() {
        let mut s = RoundStats::new(3);
        s.record_execution(&vec3(10.0, 5.0, 3.0)).unwrap();
        assert_eq!(s.per_round_avg(), &[10.0, 5.0, 3.0]);
        assert_eq!(s.execs_in_round(), 1);
        assert_eq!(s.cumulative_execs(), 1);
    }

    #[test]
    fn two_observations_average() {
        let mut s = RoundStats::new(3);
        s.record_execution(&vec3(10.0, 0.0, 0.0)).unwrap();
        s.record_execution(&vec3(20.0, 0.0, 0.0)).unwrap();
        assert_eq!(s.per_round_avg()[0], 15.0);
    }

    #[test]
    fn length_mismatch_is_structural() {
        let mut s = RoundStats::new(3);
        let err = s
            .record_execution(&ObjectiveVector::new(vec![1.0]).unwrap())
            .unwrap_err();
        assert!(matches!(err, Error::Structural(_)));
    }

    #[test]
    fn running_mean_matches_independent_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut s = RoundStats::new(3);
        let mut obs = Vec::new();
        for _ in 0..100 {
            let v = vec3(
                rng.gen_range(0.0..1e4),
                rng.gen_range(0.0..1e3),
                rng.gen_range(0.0..50.0),
            );
            s.record_execution(&v).unwrap();
            obs.push(v);
        }
        for i in 0..3 {
            // Kahan summation as an independent route.
            let (mut sum, mut c) = (0.0f64, 0.0f64);
            for o in &obs {
                let y = o.get(i) - c;
                let t = sum + y;
                c = (t - sum) - y;
                sum = t;
            }
            let oracle = sum / obs.len() as f64;
            assert!((s.per_round_avg()[i] - oracle).abs() <= 1e-9 * oracle.abs().max(1.0));
        }
    }

    #[test]
    fn cumulative_average_of_two_rounds() {
        let mut s = RoundStats::new(1);
        s.record_execution(&ObjectiveVector::new(vec![10.0]).unwrap())
            .unwrap();
        s.close_round();
        s.record_execution(&ObjectiveVector::new(vec![20.0]).unwrap())
            .unwrap();
        let rec = s.close_round();
        assert_eq!(rec.round, 2);
        assert_eq!(s.cumulative_avg(), &[15.0]);
        assert_eq!(s.round(), 3);
    }

    #[test]
    fn empty_rounds_average_to_zero() {
        let mut s = RoundStats::new(2);
        for _ in 0..4 {
            s.close_round();
        }
        assert_eq!(s.cumulative_avg(), &[0.0, 0.0]);
        assert_eq!(s.closed_rounds(), 4);
    }

    #[test]
    fn reward_direct_evaluation() {
        // t = 5, own ratio 1.2, speed ratio 1.0.
        let mut s = RoundStats::new(2);
        let per_round = [1.0, 1.0, 1.0, 1.0];
        for v in per_round {
            s.record_execution(&ObjectiveVector::new(vec![1.0, v]).unwrap())
                .unwrap();
            s.close_round();
        }
        // Fifth value x with x / ((4 + x) / 5) = 1.2  =>  x = 4.8 / 3.8.
        let x = 4.8 / 3.8;
        s.record_execution(&ObjectiveVector::new(vec![1.0, x]).unwrap())
            .unwrap();
        s.close_round();
        assert!((s.round_ratio(1).unwrap() - 1.2).abs() < 1e-12);
        let r = objective_reward(&s, 1, 0.1).unwrap();
        assert!((r - 5.5).abs() < 1e-9, "{r}");
    }

    #[test]
    fn speed_reward_self_penalty() {
        let mut s = RoundStats::new(3);
        s.record_execution(&vec3(100.0, 1.0, 1.0)).unwrap();
        s.close_round();
        let r = objective_reward(&s, SPEED, 0.1).unwrap();
        assert!((r - 0.9).abs() < 1e-12);
    }

    #[test]
    fn zero_history_ratio_is_neutral() {
        let mut s = RoundStats::new(2);
        s.close_round();
        assert_eq!(s.round_ratio(1).unwrap(), 1.0);
        assert!((objective_reward(&s, 1, 0.1).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn reward_errors() {
        let mut s = RoundStats::new(2);
        assert!(matches!(
            objective_reward(&s, 0, 0.1),
            Err(Error::Precondition(_))
        ));
        s.close_round();
        assert!(matches!(
            objective_reward(&s, 5, 0.1),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn csv_row_layout() {
        let rec = RoundRecord {
            round: 3,
            per_round_avg: vec![1.5, 2.0],
            cumulative_avg: vec![1.0, 0.5],
            execs: 10,
        };
        assert_eq!(RoundRecord::csv_header(2), "round,avg_0,avg_1,cum_0,cum_1,execs");
        assert_eq!(rec.csv_row(), "3,1.5,2,1,0.5,10");
    }
}
