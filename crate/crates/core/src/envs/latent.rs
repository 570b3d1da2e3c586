//! Latent-factor environments: `latent-static` and the dataset-fitted `ml-100k`.

use rand_distr::{Distribution, Normal};

use super::{Environment, Slate};
use crate::error::{Error, Result};
use crate::recs::{MfModel, MfParams};
use crate::rng::{RngSeed, Stream};
use crate::types::{ItemId, Observation, ObservationSet, RatingRange, UserId};

pub const GLOBAL_BIAS: f64 = 3.0;

/// Biases and factors of a latent rating model.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentState {
    pub dim: usize,
    pub global_bias: f64,
    pub user_bias: Vec<f64>,
    pub item_bias: Vec<f64>,
    /// Row-major `n_users × dim`.
    pub user_factors: Vec<f64>,
    /// Row-major `n_items × dim`.
    pub item_factors: Vec<f64>,
    pub noise_std: f64,
}

impl LatentState {
    /// Draws a state with bias std 0.25 and factor-coordinate std √(0.5/d).
    pub fn generate(n_users: usize, n_items: usize, dim: usize, noise_std: f64, rng: &mut Stream) -> Self {
        let bias = Normal::new(0.0, 0.25).expect("valid std");
        let factor_std = if dim == 0 { 0.0 } else { (0.5 / dim as f64).sqrt() };
        let factor = Normal::new(0.0, factor_std).expect("valid std");
        let user_bias = (0..n_users).map(|_| bias.sample(rng)).collect();
        let item_bias = (0..n_items).map(|_| bias.sample(rng)).collect();
        let user_factors = (0..n_users * dim).map(|_| factor.sample(rng)).collect();
        let item_factors = (0..n_items * dim).map(|_| factor.sample(rng)).collect();
        LatentState {
            dim,
            global_bias: GLOBAL_BIAS,
            user_bias,
            item_bias,
            user_factors,
            item_factors,
            noise_std,
        }
    }

    pub fn n_users(&self) -> usize {
        self.user_bias.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_bias.len()
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim;
        if self.user_factors.len() != self.n_users() * d || self.item_factors.len() != self.n_items() * d {
            return Err(Error::Config("latent factor tables do not match dimension".into()));
        }
        let finite = std::iter::once(&self.global_bias)
            .chain(&self.user_bias)
            .chain(&self.item_bias)
            .chain(&self.user_factors)
            .chain(&self.item_factors)
            .all(|x| x.is_finite());
        if !finite || !(self.noise_std >= 0.0) {
            return Err(Error::Config("latent parameters must be finite".into()));
        }
        Ok(())
    }

    /// μ0 + c_u + b_i + p_u·q_i before noise and clipping.
    pub fn value(&self, user: UserId, item: ItemId) -> f64 {
        let (u, i, d) = (user.idx(), item.idx(), self.dim);
        let dot: f64 = self.user_factors[u * d..(u + 1) * d]
            .iter()
            .zip(&self.item_factors[i * d..(i + 1) * d])
            .map(|(a, b)| a * b)
            .sum();
        self.global_bias + self.user_bias[u] + self.item_bias[i] + dot
    }

    pub fn latent_rate(&self, user: UserId, item: ItemId, noise: f64) -> f64 {
        RatingRange::STARS.clip(self.value(user, item) + noise)
    }
}

/// Fits biased MF to a dataset and lifts its parameters into a ground truth.
pub fn init_latent_from_dataset(
    data: &ObservationSet,
    dim: usize,
    fit: &MfParams,
    noise_std: f64,
    seed: &RngSeed,
) -> Result<LatentState> {
    if data.is_empty() {
        return Err(Error::Empty("dataset for latent initialization"));
    }
    let params = MfParams { dim, ..fit.clone() };
    let model = MfModel::fit(data, &params, RatingRange::STARS, &mut seed.stream())?;
    Ok(LatentState {
        dim,
        global_bias: model.mu,
        user_bias: model.user_bias,
        item_bias: model.item_bias,
        user_factors: model.user_factors,
        item_factors: model.item_factors,
        noise_std,
    })
}

#[derive(Clone, Debug)]
pub struct LatentEnv {
    name: String,
    state: LatentState,
    /// Redraw the state on reset (`latent-static`) or keep it (`ml-100k`).
    regenerate: bool,
    noise: Normal<f64>,
    rng: Stream,
}

impl LatentEnv {
    pub fn generated(name: &str, n_users: usize, n_items: usize, dim: usize, noise_std: f64, seed: &RngSeed) -> Result<Self> {
        if n_users == 0 || n_items == 0 {
            return Err(Error::Config("environment must have users and items".into()));
        }
        let state = LatentState::generate(n_users, n_items, dim, noise_std, &mut seed.derive("init").stream());
        let mut env = LatentEnv::from_state(name, state, seed)?;
        env.regenerate = true;
        Ok(env)
    }

    pub fn from_state(name: &str, state: LatentState, seed: &RngSeed) -> Result<Self> {
        state.validate()?;
        let noise = Normal::new(0.0, state.noise_std).map_err(|e| Error::Config(e.to_string()))?;
        Ok(LatentEnv {
            name: name.to_string(),
            state,
            regenerate: false,
            noise,
            rng: seed.derive("noise").stream(),
        })
    }

    pub fn state(&self) -> &LatentState {
        &self.state
    }
}

impl Environment for LatentEnv {
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
        1
    }

    fn reset(&mut self, seed: &RngSeed) -> Result<()> {
        if self.regenerate {
            let (nu, ni, d, s) = (self.n_users(), self.n_items(), self.state.dim, self.state.noise_std);
            self.state = LatentState::generate(nu, ni, d, s, &mut seed.derive("init").stream());
        }
        self.rng = seed.derive("noise").stream();
        Ok(())
    }

    fn rate_static(&mut self, user: UserId, item: ItemId) -> f64 {
        let eps = self.noise.sample(&mut self.rng);
        self.state.latent_rate(user, item, eps)
    }

    fn online_step(&mut self, slates: &[Slate], timestep: u32) -> Result<Vec<Observation>> {
        slates
            .iter()
            .map(|s| {
                let item = *s
                    .items
                    .first()
                    .ok_or(Error::Empty("slate for a consume-directly environment"))?;
                Ok(Observation::new(s.user, item, self.rate_static(s.user, item), timestep))
            })
            .collect()
    }

    fn true_rating(&self, user: UserId, item: ItemId) -> f64 {
        RatingRange::STARS.clip(self.state.value(user, item))
    }
}
