//! Slate-choice environments.
//!
//! `latent-score`: the true value of an item is a latent-model rating whose
//! noise splits into a part the user knows (variance `ρσ²`) and a part they
//! do not (`(1 − ρ)σ²`). The user takes the slate item maximizing
//! recommender score plus known noise, and reports the realized value.
//!
//! `beta-rank`: users and items carry Dirichlet-drawn nonnegative factors so
//! that `μ = p_u·q_i` lies in (0, 1). Ratings are Beta draws with mean `μ`
//! and a fixed variance. Each user knows a private utility per item (also a
//! Beta draw around `μ`) and picks slate position `r` with probability
//! proportional to `utility · 1/log2(r + 1)`.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Normal};

use super::latent::LatentState;
use super::{Environment, Slate};
use crate::error::{Error, Result};
use crate::rng::{RngSeed, Stream};
use crate::types::{ItemId, Observation, RatingMatrix, RatingRange, UserId};

/// Index of the slate entry maximizing `score + known`; exact ties are
/// broken uniformly with `rng`.
pub fn choose_by_known_noise(scores: &[f64], known: &[f64], rng: &mut Stream) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::Empty("slate"));
    }
    let totals: Vec<f64> = scores.iter().zip(known).map(|(s, k)| s + k).collect();
    let best = totals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..totals.len()).filter(|&j| totals[j] == best).collect();
    Ok(if tied.len() == 1 {
        tied[0]
    } else {
        tied[rng.random_range(0..tied.len())]
    })
}

#[derive(Clone, Debug)]
pub struct LatentScoreEnv {
    name: String,
    state: LatentState,
    slate_size: usize,
    known_fraction: f64,
    /// Persistent known noise per (user, item).
    known: RatingMatrix,
    unknown: Normal<f64>,
    rng: Stream,
}

impl LatentScoreEnv {
    pub fn new(
        name: &str,
        n_users: usize,
        n_items: usize,
        dim: usize,
        noise_std: f64,
        known_fraction: f64,
        slate_size: usize,
        seed: &RngSeed,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&known_fraction) {
            return Err(Error::Config(format!("known_fraction {known_fraction} outside [0, 1]")));
        }
        if slate_size == 0 || n_users == 0 || n_items == 0 {
            return Err(Error::Config("latent-score needs users, items and a slate size >= 1".into()));
        }
        let state = LatentState {
            dim,
            global_bias: 0.0,
            user_bias: vec![0.0; n_users],
            item_bias: vec![0.0; n_items],
            user_factors: vec![0.0; n_users * dim],
            item_factors: vec![0.0; n_items * dim],
            noise_std,
        };
        let unknown = Normal::new(0.0, ((1.0 - known_fraction) * noise_std * noise_std).sqrt())
            .map_err(|e| Error::Config(e.to_string()))?;
        let mut env = LatentScoreEnv {
            name: name.to_string(),
            state,
            slate_size,
            known_fraction,
            known: RatingMatrix::from_fn(0, 0, |_, _| 0.0),
            unknown,
            rng: seed.stream(),
        };
        env.reset(seed)?;
        Ok(env)
    }

    pub fn state(&self) -> &LatentState {
        &self.state
    }

    pub fn known_noise(&self, user: UserId, item: ItemId) -> f64 {
        self.known.get(user, item)
    }

    /// The chosen item and its realized value.
    pub fn latent_score_choose(&mut self, slate: &Slate) -> Result<(ItemId, f64)> {
        if slate.items.is_empty() {
            return Err(Error::Empty("slate"));
        }
        let known: Vec<f64> = slate.items.iter().map(|&i| self.known.get(slate.user, i)).collect();
        let j = choose_by_known_noise(&slate.scores, &known, &mut self.rng)?;
        let item = slate.items[j];
        let eps = known[j] + self.unknown.sample(&mut self.rng);
        Ok((item, self.state.latent_rate(slate.user, item, eps)))
    }
}

impl Environment for LatentScoreEnv {
    fn name(&self) -> &str {
        &self.name
    }

    fn n_users(&self) -> usize {
        self.state.n_users()
    }

    fn n_items(&self) -> usize {
        self.state.n_items()
    }

    fn rating_range(&self) -> RatingRange {
        RatingRange::STARS
    }

    fn slate_size(&self) -> usize {
        self.slate_size
    }

    fn reset(&mut self, seed: &RngSeed) -> Result<()> {
        let (nu, ni) = (self.n_users(), self.n_items());
        let mut init = seed.derive("init").stream();
        self.state = LatentState::generate(nu, ni, self.state.dim, self.state.noise_std, &mut init);
        let sd = (self.known_fraction * self.state.noise_std * self.state.noise_std).sqrt();
        let known = Normal::new(0.0, sd).map_err(|e| Error::Config(e.to_string()))?;
        self.known = RatingMatrix::from_fn(nu, ni, |_, _| known.sample(&mut init));
        self.rng = seed.derive("noise").stream();
        Ok(())
    }

    fn rate_static(&mut self, user: UserId, item: ItemId) -> f64 {
        let eps = self.known.get(user, item) + self.unknown.sample(&mut self.rng);
        self.state.latent_rate(user, item, eps)
    }

    fn online_step(&mut self, slates: &[Slate], timestep: u32) -> Result<Vec<Observation>> {
        slates
            .iter()
            .map(|s| {
                let (item, r) = self.latent_score_choose(s)?;
                Ok(Observation::new(s.user, item, r, timestep))
            })
            .collect()
    }

    fn true_rating(&self, user: UserId, item: ItemId) -> f64 {
        RatingRange::STARS.clip(self.state.value(user, item))
    }
}

/// Beta shape parameters with the given mean and variance.
pub fn beta_params(mean: f64, var: f64) -> Result<(f64, f64)> {
    if !(mean > 0.0 && mean < 1.0) {
        return Err(Error::Numerical(format!("beta mean {mean} outside (0, 1)")));
    }
    if !(var > 0.0) || var >= mean * (1.0 - mean) {
        return Err(Error::Numerical(format!(
            "beta variance {var} infeasible for mean {mean} (needs 0 < var < {})",
            mean * (1.0 - mean)
        )));
    }
    let nu = mean * (1.0 - mean) / var - 1.0;
    Ok((mean * nu, (1.0 - mean) * nu))
}

/// Position weight for 1-based rank `r`.
pub fn rank_discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// Choice probabilities over a slate given the user's utilities in slate order.
pub fn rank_choice_probs(utilities: &[f64]) -> Vec<f64> {
    let w: Vec<f64> = utilities
        .iter()
        .enumerate()
        .map(|(k, &u)| u.max(0.0) * rank_discount(k + 1))
        .collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 && total.is_finite() {
        w.iter().map(|x| x / total).collect()
    } else {
        vec![1.0 / utilities.len() as f64; utilities.len()]
    }
}

#[derive(Clone, Debug)]
pub struct BetaRankEnv {
    name: String,
    n_users: usize,
    n_items: usize,
    dim: usize,
    concentration: f64,
    variance: f64,
    known_variance: f64,
    slate_size: usize,
    user_factors: Vec<f64>,
    item_factors: Vec<f64>,
    known_utility: RatingMatrix,
    rng: Stream,
}

const MAX_RESAMPLE_ROUNDS: usize = 10_000;

fn dirichlet(dim: usize, concentration: f64, rng: &mut Stream) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    loop {
        let x: Vec<f64> = (0..dim).map(|_| gamma.sample(rng)).collect();
        let s: f64 = x.iter().sum();
        if s > 0.0 {
            return x.into_iter().map(|v| v / s).collect();
        }
    }
}

impl BetaRankEnv {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        n_users: usize,
        n_items: usize,
        dim: usize,
        concentration: f64,
        variance: f64,
        known_variance: f64,
        slate_size: usize,
        seed: &RngSeed,
    ) -> Result<Self> {
        if dim == 0 || !(concentration > 0.0) || !(variance > 0.0) || !(known_variance > 0.0) {
            return Err(Error::Config(
                "beta-rank needs dim >= 1 and positive concentration and variances".into(),
            ));
        }
        if slate_size == 0 || n_users == 0 || n_items == 0 {
            return Err(Error::Config("beta-rank needs users, items and a slate size >= 1".into()));
        }
        let mut env = BetaRankEnv {
            name: name.to_string(),
            n_users,
            n_items,
            dim,
            concentration,
            variance,
            known_variance,
            slate_size,
            user_factors: Vec::new(),
            item_factors: Vec::new(),
            known_utility: RatingMatrix::from_fn(0, 0, |_, _| 0.0),
            rng: seed.stream(),
        };
        env.reset(seed)?;
        Ok(env)
    }

    pub fn mean(&self, user: UserId, item: ItemId) -> f64 {
        let d = self.dim;
        self.user_factors[user.idx() * d..(user.idx() + 1) * d]
            .iter()
            .zip(&self.item_factors[item.idx() * d..(item.idx() + 1) * d])
            .map(|(a, b)| a * b)
            .sum()
    }

    fn feasible(&self, mean: f64) -> bool {
        let cap = mean * (1.0 - mean);
        mean > 0.0 && mean < 1.0 && self.variance < cap && self.known_variance < cap
    }

    fn first_violation(&self) -> Option<(usize, usize)> {
        for u in 0..self.n_users {
            for i in 0..self.n_items {
                if !self.feasible(self.mean(UserId::from(u), ItemId::from(i))) {
                    return Some((u, i));
                }
            }
        }
        None
    }

    fn draw(&mut self, mean: f64, var: f64) -> f64 {
        let (a, b) = beta_params(mean, var).expect("feasibility checked at construction");
        Beta::new(a, b).expect("positive shapes").sample(&mut self.rng)
    }

    pub fn known_utility(&self, user: UserId, item: ItemId) -> f64 {
        self.known_utility.get(user, item)
    }

    /// Samples the user's pick from the slate and a fresh rating for it.
    pub fn beta_rank_choose(&mut self, slate: &Slate) -> Result<(ItemId, f64)> {
        if slate.items.is_empty() {
            return Err(Error::Empty("slate"));
        }
        let utilities: Vec<f64> = slate.items.iter().map(|&i| self.known_utility.get(slate.user, i)).collect();
        let probs = rank_choice_probs(&utilities);
        let x: f64 = self.rng.random();
        let mut acc = 0.0;
        let mut pick = probs.len() - 1;
        for (k, p) in probs.iter().enumerate() {
            acc += p;
            if x < acc {
                pick = k;
                break;
            }
        }
        let item = slate.items[pick];
        let mean = self.mean(slate.user, item);
        let r = self.draw(mean, self.variance);
        Ok((item, r))
    }
}

impl Environment for BetaRankEnv {
    fn name(&self) -> &str {
        &self.name
    }

    fn n_users(&self) -> usize {
        self.n_users
    }

    fn n_items(&self) -> usize {
        self.n_items
    }

    fn rating_range(&self) -> RatingRange {
        RatingRange::UNIT
    }

    fn slate_size(&self) -> usize {
        self.slate_size
    }

    fn reset(&mut self, seed: &RngSeed) -> Result<()> {
        let mut init = seed.derive("init").stream();
        let d = self.dim;
        self.user_factors = (0..self.n_users).flat_map(|_| dirichlet(d, self.concentration, &mut init)).collect();
        self.item_factors = (0..self.n_items).flat_map(|_| dirichlet(d, self.concentration, &mut init)).collect();
        let mut rounds = 0;
        while let Some((u, i)) = self.first_violation() {
            rounds += 1;
            if rounds > MAX_RESAMPLE_ROUNDS {
                return Err(Error::Config(format!(
                    "beta-rank variance {} infeasible for the drawn factors",
                    self.variance
                )));
            }
            // alternate which side gets redrawn
            if rounds % 2 == 1 {
                let v = dirichlet(d, self.concentration, &mut init);
                self.user_factors[u * d..(u + 1) * d].copy_from_slice(&v);
            } else {
                let v = dirichlet(d, self.concentration, &mut init);
                self.item_factors[i * d..(i + 1) * d].copy_from_slice(&v);
            }
        }
        let (nu, ni) = (self.n_users, self.n_items);
        let mut utilities = Vec::with_capacity(nu * ni);
        for u in 0..nu {
            for i in 0..ni {
                let (a, b) = beta_params(self.mean(UserId::from(u), ItemId::from(i)), self.known_variance)?;
                utilities.push(Beta::new(a, b).map_err(|e| Error::Numerical(e.to_string()))?.sample(&mut init));
            }
        }
        self.known_utility = RatingMatrix::from_fn(nu, ni, |u, i| utilities[u * ni + i]);
        self.rng = seed.derive("noise").stream();
        Ok(())
    }

    fn rate_static(&mut self, user: UserId, item: ItemId) -> f64 {
        let mean = self.mean(user, item);
        self.draw(mean, self.variance)
    }

    fn online_step(&mut self, slates: &[Slate], timestep: u32) -> Result<Vec<Observation>> {
        slates
            .iter()
            .map(|s| {
                let (item, r) = self.beta_rank_choose(s)?;
                Ok(Observation::new(s.user, item, r, timestep))
            })
            .collect()
    }

    fn true_rating(&self, user: UserId, item: ItemId) -> f64 {
        self.mean(user, item)
    }
}
