//! Objective-combination bandit.
//!
//! Every nonempty subset of the objectives is an arm. After a pioneer stage
//! that plays each arm once in ascending mask order, the arm with the
//! highest UCB1 score is played; ties go to the smaller mask.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::{objective_reward, ObjectiveRegistry, RoundStats};

/// A nonempty set of objective ids, stored as a bitmask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CombinationId(u32);

impl CombinationId {
    pub fn new(mask: u32, num_objectives: usize) -> Result<Self> {
        if mask == 0 {
            return Err(Error::structural("the empty combination is not an arm"));
        }
        if num_objectives < 32 && mask >> num_objectives != 0 {
            return Err(Error::structural(format!(
                "mask {mask:#b} references objectives beyond {num_objectives}"
            )));
        }
        Ok(Self(mask))
    }

    /// Every nonempty combination over `n` objectives, ascending by mask.
    pub fn all(n: usize) -> Vec<Self> {
        (1..(1u32 << n)).map(Self).collect()
    }

    pub fn mask(self) -> u32 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, objective: usize) -> bool {
        objective < 32 && self.0 & (1 << objective) != 0
    }

    pub fn members(self) -> Vec<usize> {
        (0..32).filter(|&i| self.contains(i)).collect()
    }

    /// e.g. `speed/cmp`
    pub fn label(self, registry: &ObjectiveRegistry) -> String {
        self.members()
            .iter()
            .map(|&i| registry.name(i).unwrap_or("?"))
            .collect::<Vec<_>>()
            .join("/")
    }
}

/// Reward of a combination for the last closed round: the mean member
/// objective reward plus `t * L`, favouring larger combinations.
pub fn combination_reward(combo: CombinationId, stats: &RoundStats, lambda: f64) -> Result<f64> {
    if combo.is_empty() {
        return Err(Error::structural("empty combination"));
    }
    let members = combo.members();
    let mut sum = 0.0;
    for &i in &members {
        sum += objective_reward(stats, i, lambda)?;
    }
    let l = members.len() as f64;
    let t = stats.closed_rounds() as f64;
    Ok(sum / l + t * l)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombinationStats {
    pub combo: CombinationId,
    pub n_l: u64,
    pub reward_history: Vec<f64>,
    pub avg_reward: f64,
}

impl CombinationStats {
    pub fn new(combo: CombinationId) -> Self {
        Self {
            combo,
            n_l: 0,
            reward_history: Vec::new(),
            avg_reward: 0.0,
        }
    }

    pub fn push_reward(&mut self, reward: f64) {
        self.reward_history.push(reward);
        self.avg_reward = self.reward_history.iter().sum::<f64>() / self.reward_history.len() as f64;
    }
}

/// UCB1 score `R̄ + gamma * sqrt(ln(Σ n) / n_l)`.
pub fn ucb_score(cs: &CombinationStats, total_selections: u64, gamma: f64) -> Result<f64> {
    if cs.n_l == 0 {
        return Err(Error::precondition(format!(
            "combination {:#b} has never been selected; it belongs to the pioneer stage",
            cs.combo.mask()
        )));
    }
    let bonus = ((total_selections as f64).ln() / cs.n_l as f64).sqrt();
    Ok(cs.avg_reward + gamma * bonus)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub combo: CombinationId,
    /// Score of every arm in mask order; empty during the pioneer stage.
    pub scores: Vec<f64>,
    pub pioneer: bool,
}

/// Picks the next combination and increments its `n_l`.
///
/// `all` must hold every arm in ascending mask order.
pub fn select_combination(all: &mut [CombinationStats], gamma: f64) -> Result<Selection> {
    if all.is_empty() {
        return Err(Error::structural("no combinations to select from"));
    }
    if let Some(idx) = all.iter().position(|cs| cs.n_l == 0) {
        all[idx].n_l += 1;
        return Ok(Selection {
            combo: all[idx].combo,
            scores: Vec::new(),
            pioneer: true,
        });
    }
    let total: u64 = all.iter().map(|cs| cs.n_l).sum();
    let scores = all
        .iter()
        .map(|cs| ucb_score(cs, total, gamma))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    all[best].n_l += 1;
    Ok(Selection {
        combo: all[best].combo,
        scores,
        pioneer: false,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombinationSelector {
    arms: Vec<CombinationStats>,
    gamma: f64,
}

impl CombinationSelector {
    pub fn new(num_objectives: usize, gamma: f64) -> Self {
        Self {
            arms: CombinationId::all(num_objectives)
                .into_iter()
                .map(CombinationStats::new)
                .collect(),
            gamma,
        }
    }

    pub fn select(&mut self) -> Result<Selection> {
        select_combination(&mut self.arms, self.gamma)
    }

    pub fn record_reward(&mut self, combo: CombinationId, reward: f64) -> Result<()> {
        let arm = self
            .arms
            .iter_mut()
            .find(|a| a.combo == combo)
            .ok_or_else(|| Error::structural(format!("unknown combination {:#b}", combo.mask())))?;
        arm.push_reward(reward);
        Ok(())
    }

    pub fn arms(&self) -> &[CombinationStats] {
        &self.arms
    }

    pub fn total_selections(&self) -> u64 {
        self.arms.iter().map(|a| a.n_l).sum()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

pub fn selection_csv_header(num_objectives: usize) -> String {
    let mut cols = vec!["round".to_string(), "chosen_mask".into(), "pioneer".into()];
    cols.extend(CombinationId::all(num_objectives).iter().map(|c| format!("score_{}", c.mask())));
    cols.join(",")
}

pub fn selection_csv_row(round: u64, sel: &Selection, num_arms: usize) -> String {
    let mut cols = vec![
        round.to_string(),
        sel.combo.mask().to_string(),
        u8::from(sel.pioneer).to_string(),
    ];
    if sel.scores.is_empty() {
        cols.extend(std::iter::repeat_n(String::new(), num_arms));
    } else {
        cols.extend(sel.scores.iter().map(|s| format!("{s}")));
    }
    cols.join(",")
}
