//! Stochastic wrappers that turn a model's scores into slates.
//!
//! Policies are written as config strings: `greedy`, `eps:<ε>` and
//! `ts:<p>` (power sampling with φ(r) = r^p).

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recs::{greedy_select, rank_order};
use crate::rng::Stream;
use crate::types::{ItemId, UserId};

/// Scores are floored here before exponentiation.
pub const SCORE_FLOOR: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ExplorationPolicy {
    Greedy,
    EpsilonGreedy { epsilon: f64 },
    Power { p: f64, floor: f64 },
}

impl ExplorationPolicy {
    pub fn epsilon(epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::param("epsilon", format!("must lie in [0, 1], got {epsilon}")));
        }
        Ok(ExplorationPolicy::EpsilonGreedy { epsilon })
    }

    pub fn power(p: f64) -> Result<Self> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::param("p", format!("must be a positive number, got {p}")));
        }
        Ok(ExplorationPolicy::Power { p, floor: SCORE_FLOOR })
    }

    /// Single-item selection probabilities over `scores`.
    pub fn probabilities(&self, scores: &[f64]) -> Result<Vec<f64>> {
        if scores.is_empty() {
            return Err(Error::Empty("candidate set"));
        }
        let n = scores.len();
        Ok(match *self {
            ExplorationPolicy::Greedy => {
                let mut v = vec![0.0; n];
                v[argmax(scores)] = 1.0;
                v
            }
            ExplorationPolicy::EpsilonGreedy { epsilon } => {
                let mut v = vec![epsilon / n as f64; n];
                v[argmax(scores)] += 1.0 - epsilon;
                v
            }
            ExplorationPolicy::Power { p, floor } => {
                let w = power_weights(scores, p, floor);
                let total: f64 = w.iter().sum();
                w.into_iter().map(|x| x / total).collect()
            }
        })
    }
}

impl fmt::Display for ExplorationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExplorationPolicy::Greedy => f.write_str("greedy"),
            ExplorationPolicy::EpsilonGreedy { epsilon } => write!(f, "eps:{epsilon}"),
            ExplorationPolicy::Power { p, .. } => write!(f, "ts:{p}"),
        }
    }
}

impl FromStr for ExplorationPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Config(format!(
                "unknown policy '{s}'; expected greedy, eps:<epsilon> or ts:<p>"
            ))
        };
        if s == "greedy" {
            return Ok(ExplorationPolicy::Greedy);
        }
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        let value: f64 = value.trim().parse().map_err(|_| bad())?;
        match kind {
            "eps" => ExplorationPolicy::epsilon(value),
            "ts" => ExplorationPolicy::power(value),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for ExplorationPolicy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ExplorationPolicy> for String {
    fn from(p: ExplorationPolicy) -> String {
        p.to_string()
    }
}

/// Position of the highest score; ties go to the earlier position.
fn argmax(scores: &[f64]) -> usize {
    (0..scores.len())
        .min_by(|&a, &b| rank_order((a, scores[a]), (b, scores[b])))
        .expect("nonempty")
}

/// Unnormalized `max(s, floor)^p`, rescaled by the largest weight.
fn power_weights(scores: &[f64], p: f64, floor: f64) -> Vec<f64> {
    let logs: Vec<f64> = scores.iter().map(|s| p * s.max(floor).ln()).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    logs.into_iter().map(|l| (l - top).exp()).collect()
}

/// Index into `scores` picked ε-greedily.
pub fn epsilon_greedy_select(scores: &[f64], epsilon: f64, rng: &mut Stream) -> Result<usize> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::param("epsilon", format!("must lie in [0, 1], got {epsilon}")));
    }
    if scores.is_empty() {
        return Err(Error::Empty("candidate set"));
    }
    if rng.random::<f64>() < epsilon {
        Ok(rng.random_range(0..scores.len()))
    } else {
        Ok(argmax(scores))
    }
}

/// Index into `scores` drawn with probability ∝ `max(score, floor)^p`.
pub fn power_sample_select(scores: &[f64], p: f64, floor: f64, rng: &mut Stream) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::Empty("candidate set"));
    }
    if !(p > 0.0) || !(floor > 0.0) {
        return Err(Error::Contract(format!("power sampling needs p > 0 and floor > 0, got {p}, {floor}")));
    }
    let w = power_weights(scores, p, floor);
    let dist = WeightedIndex::new(&w).map_err(|e| Error::Numerical(format!("power weights: {e}")))?;
    Ok(dist.sample(rng))
}

/// Ranked slate of up to `n` unrated items for `user`.
///
/// Non-greedy policies sample sequentially without replacement.
pub fn select_slate(
    policy: &ExplorationPolicy,
    user: UserId,
    scores: &[f64],
    rated: &[bool],
    n: usize,
    rng: &mut Stream,
) -> Result<Vec<ItemId>> {
    if let ExplorationPolicy::Greedy = policy {
        return greedy_select(user, scores, rated, n);
    }
    if n == 0 {
        return Err(Error::Contract("slate size must be at least 1".into()));
    }
    let mut cand: Vec<(ItemId, f64)> = scores
        .iter()
        .enumerate()
        .filter(|&(i, _)| !rated.get(i).copied().unwrap_or(false))
        .map(|(i, &s)| (ItemId::from(i), s))
        .collect();
    if cand.is_empty() {
        return Err(Error::Exhausted(user.idx()));
    }
    let mut slate = Vec::with_capacity(n.min(cand.len()));
    while slate.len() < n && !cand.is_empty() {
        let s: Vec<f64> = cand.iter().map(|c| c.1).collect();
        let pick = match *policy {
            ExplorationPolicy::EpsilonGreedy { epsilon } => epsilon_greedy_select(&s, epsilon, rng)?,
            ExplorationPolicy::Power { p, floor } => power_sample_select(&s, p, floor, rng)?,
            ExplorationPolicy::Greedy => unreachable!(),
        };
        // keep ascending id order so argmax ties still favour low ids
        slate.push(cand.remove(pick).0);
    }
    Ok(slate)
}
