//! Biased matrix factorization trained by per-observation SGD.
//!
//! Objective over the training set Ω:
//!
//! ```text
//! Σ (r − μ − c_u − b_i − p_u·q_i)² + ω (‖p_u‖² + ‖q_i‖² + c_u² + b_i²)
//! ```
//!
//! with μ fixed to the training mean. Each step moves the touched parameters
//! by `−η/2` times the gradient of that observation's term, i.e.
//! `c_u += η (e − ω c_u)` and likewise for the other blocks.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use super::params::{get_int, get_real, ParamSpec, Params};
use super::{Recommender, TrainContext};
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::types::{ItemId, Observation, ObservationSet, RatingRange, UserId};

#[derive(Clone, Debug, PartialEq)]
pub struct MfParams {
    pub dim: usize,
    pub lr: f64,
    pub reg: f64,
    pub epochs: usize,
    pub init_std: f64,
}

impl Default for MfParams {
    fn default() -> Self {
        MfParams {
            dim: 16,
            lr: 0.01,
            reg: 0.1,
            epochs: 50,
            init_std: 0.1,
        }
    }
}

impl MfParams {
    pub fn schema() -> Vec<ParamSpec> {
        let d = MfParams::default();
        vec![
            ParamSpec::int("dim", 0, d.dim as i64),
            ParamSpec::real("lr", 0.0, true, d.lr),
            ParamSpec::real("reg", 0.0, false, d.reg),
            ParamSpec::int("epochs", 1, d.epochs as i64),
            ParamSpec::real("init_std", 0.0, false, d.init_std),
        ]
    }

    pub fn from_params(p: &Params) -> Result<Self> {
        Ok(MfParams {
            dim: get_int(p, "dim")? as usize,
            lr: get_real(p, "lr")?,
            reg: get_real(p, "reg")?,
            epochs: get_int(p, "epochs")? as usize,
            init_std: get_real(p, "init_std")?,
        })
    }
}

/// Gradient of the objective, laid out like the model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct MfGradient {
    pub user_bias: Vec<f64>,
    pub item_bias: Vec<f64>,
    pub user_factors: Vec<f64>,
    pub item_factors: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct MfModel {
    pub params: MfParams,
    pub n_users: usize,
    pub n_items: usize,
    pub mu: f64,
    pub user_bias: Vec<f64>,
    pub item_bias: Vec<f64>,
    /// Row-major `n_users × dim`.
    pub user_factors: Vec<f64>,
    /// Row-major `n_items × dim`.
    pub item_factors: Vec<f64>,
    pub range: RatingRange,
}

impl MfModel {
    /// Zero biases and factors drawn from N(0, init_std²).
    pub fn init(n_users: usize, n_items: usize, mu: f64, params: &MfParams, range: RatingRange, rng: &mut Stream) -> Self {
        let d = params.dim;
        let mut draw = |n: usize| -> Vec<f64> {
            if params.init_std == 0.0 {
                return vec![0.0; n];
            }
            let normal = Normal::new(0.0, params.init_std).expect("finite std");
            (0..n).map(|_| normal.sample(rng)).collect()
        };
        let user_factors = draw(n_users * d);
        let item_factors = draw(n_items * d);
        MfModel {
            params: params.clone(),
            n_users,
            n_items,
            mu,
            user_bias: vec![0.0; n_users],
            item_bias: vec![0.0; n_items],
            user_factors,
            item_factors,
            range,
        }
    }

    pub fn fit(data: &ObservationSet, params: &MfParams, range: RatingRange, rng: &mut Stream) -> Result<Self> {
        let mu = data.mean_rating().ok_or(Error::Empty("mf training data"))?;
        let mut model = MfModel::init(data.n_users(), data.n_items(), mu, params, range, rng);
        let obs = data.as_slice();
        let mut order: Vec<usize> = (0..obs.len()).collect();
        for epoch in 0..params.epochs {
            order.shuffle(rng);
            for &k in &order {
                model.sgd_step(&obs[k]);
            }
            if !model.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite parameters after epoch {} (lr={}, reg={}, dim={})",
                    epoch + 1,
                    params.lr,
                    params.reg,
                    params.dim
                )));
            }
        }
        model.zero_unseen(data);
        Ok(model)
    }

    fn zero_unseen(&mut self, data: &ObservationSet) {
        let d = self.params.dim;
        let mut user_seen = vec![false; self.n_users];
        let mut item_seen = vec![false; self.n_items];
        for o in data.iter() {
            user_seen[o.user.idx()] = true;
            item_seen[o.item.idx()] = true;
        }
        for (u, _) in user_seen.iter().enumerate().filter(|(_, s)| !**s) {
            self.user_bias[u] = 0.0;
            self.user_factors[u * d..(u + 1) * d].fill(0.0);
        }
        for (i, _) in item_seen.iter().enumerate().filter(|(_, s)| !**s) {
            self.item_bias[i] = 0.0;
            self.item_factors[i * d..(i + 1) * d].fill(0.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.user_bias
            .iter()
            .chain(&self.item_bias)
            .chain(&self.user_factors)
            .chain(&self.item_factors)
            .all(|x| x.is_finite())
    }

    #[inline]
    fn dot(&self, u: usize, i: usize) -> f64 {
        let d = self.params.dim;
        let p = &self.user_factors[u * d..(u + 1) * d];
        let q = &self.item_factors[i * d..(i + 1) * d];
        p.iter().zip(q).map(|(a, b)| a * b).sum()
    }

    /// μ + c_u + b_i + p_u·q_i without clipping.
    pub fn predict_raw(&self, user: UserId, item: ItemId) -> f64 {
        let (u, i) = (user.idx(), item.idx());
        self.mu + self.user_bias[u] + self.item_bias[i] + self.dot(u, i)
    }

    pub fn predict(&self, user: UserId, item: ItemId) -> f64 {
        self.range.clip(self.predict_raw(user, item))
    }

    /// One SGD update on a single observation.
    pub fn sgd_step(&mut self, o: &Observation) {
        let (u, i) = (o.user.idx(), o.item.idx());
        let (lr, reg, d) = (self.params.lr, self.params.reg, self.params.dim);
        let e = o.rating - self.predict_raw(o.user, o.item);
        self.user_bias[u] += lr * (e - reg * self.user_bias[u]);
        self.item_bias[i] += lr * (e - reg * self.item_bias[i]);
        for f in 0..d {
            let p = self.user_factors[u * d + f];
            let q = self.item_factors[i * d + f];
            self.user_factors[u * d + f] += lr * (e * q - reg * p);
            self.item_factors[i * d + f] += lr * (e * p - reg * q);
        }
    }

    pub fn objective(&self, data: &[Observation]) -> f64 {
        let d = self.params.dim;
        let reg = self.params.reg;
        data.iter()
            .map(|o| {
                let (u, i) = (o.user.idx(), o.item.idx());
                let e = o.rating - self.predict_raw(o.user, o.item);
                let pp: f64 = self.user_factors[u * d..(u + 1) * d].iter().map(|x| x * x).sum();
                let qq: f64 = self.item_factors[i * d..(i + 1) * d].iter().map(|x| x * x).sum();
                e * e + reg * (pp + qq + self.user_bias[u].powi(2) + self.item_bias[i].powi(2))
            })
            .sum()
    }

    /// Analytic gradient of [`MfModel::objective`].
    pub fn gradient(&self, data: &[Observation]) -> MfGradient {
        let d = self.params.dim;
        let reg = self.params.reg;
        let mut g = MfGradient {
            user_bias: vec![0.0; self.n_users],
            item_bias: vec![0.0; self.n_items],
            user_factors: vec![0.0; self.user_factors.len()],
            item_factors: vec![0.0; self.item_factors.len()],
        };
        for o in data {
            let (u, i) = (o.user.idx(), o.item.idx());
            let e = o.rating - self.predict_raw(o.user, o.item);
            g.user_bias[u] += -2.0 * e + 2.0 * reg * self.user_bias[u];
            g.item_bias[i] += -2.0 * e + 2.0 * reg * self.item_bias[i];
            for f in 0..d {
                let p = self.user_factors[u * d + f];
                let q = self.item_factors[i * d + f];
                g.user_factors[u * d + f] += -2.0 * e * q + 2.0 * reg * p;
                g.item_factors[i * d + f] += -2.0 * e * p + 2.0 * reg * q;
            }
        }
        g
    }

    pub fn rmse(&self, data: &[Observation]) -> f64 {
        let se: f64 = data
            .iter()
            .map(|o| (o.rating - self.predict_raw(o.user, o.item)).powi(2))
            .sum();
        (se / data.len() as f64).sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct MfRecommender {
    params: MfParams,
    model: Option<MfModel>,
}

impl MfRecommender {
    pub fn new(params: MfParams) -> Self {
        MfRecommender { params, model: None }
    }

    pub fn model(&self) -> Option<&MfModel> {
        self.model.as_ref()
    }
}

impl Recommender for MfRecommender {
    fn name(&self) -> &str {
        "mf"
    }

    fn fit(&mut self, data: &ObservationSet, ctx: &TrainContext<'_>, rng: &mut Stream) -> Result<()> {
        self.model = None;
        self.model = Some(MfModel::fit(data, &self.params, ctx.range, rng)?);
        Ok(())
    }

    fn predict(&self, user: UserId, item: ItemId) -> f64 {
        self.model.as_ref().expect("mf used before fit").predict(user, item)
    }

    fn n_items(&self) -> usize {
        self.model.as_ref().map_or(0, |m| m.n_items)
    }
}
