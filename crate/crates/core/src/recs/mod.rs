//! Rating-prediction recommenders and the greedy top-n selector.
//!
//! Every model implements [`Recommender`]. The harness refits a fresh model
//! from scratch on the whole observation log at every timestep and then asks
//! it for per-item scores; models that do not live in rating space (EASE)
//! report `predicts_ratings() == false` and are left out of RMSE.
//!
//! Out-of-tree models plug in through [`RecommenderFactory`].

mod ease;
mod knn;
mod mf;
mod oracle;
mod params;
mod random;
mod toppop;

use std::cmp::Ordering;

pub use ease::{ease_fit, EaseModel, EaseRecommender};
pub use knn::{knn_fit, KnnModel, KnnParams, KnnRecommender, Orientation, Similarity};
pub use mf::{MfGradient, MfModel, MfParams, MfRecommender};
pub use oracle::OracleRecommender;
pub use params::{ParamKind, ParamSpec, ParamValue, Params};
pub use random::RandomRecommender;
pub use toppop::TopPopRecommender;

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::types::{ItemId, ObservationSet, RatingMatrix, RatingRange, UserId};

/// Names accepted by [`build_recommender`].
pub const RECOMMENDERS: &[&str] = &["random", "toppop", "itemknn", "userknn", "mf", "ease", "oracle"];

/// What a model may know about the world besides the observations.
#[derive(Clone, Copy, Debug)]
pub struct TrainContext<'a> {
    pub n_users: usize,
    pub n_items: usize,
    pub range: RatingRange,
    /// Noiseless ratings at fit time; only the oracle reads this.
    pub truth: Option<&'a RatingMatrix>,
}

pub trait Recommender: Send {
    fn name(&self) -> &str;

    /// Fits from scratch, discarding any previous state.
    fn fit(&mut self, data: &ObservationSet, ctx: &TrainContext<'_>, rng: &mut Stream) -> Result<()>;

    fn predict(&self, user: UserId, item: ItemId) -> f64;

    fn n_items(&self) -> usize;

    fn predict_pairs(&self, pairs: &[(UserId, ItemId)]) -> Vec<f64> {
        pairs.iter().map(|&(u, i)| self.predict(u, i)).collect()
    }

    /// Scores for every item, indexed by item id.
    fn score_items(&self, user: UserId) -> Vec<f64> {
        (0..self.n_items()).map(|i| self.predict(user, ItemId::from(i))).collect()
    }

    /// `n` best items the user has not rated (`rated[i]` marks rated items).
    fn recommend(&self, user: UserId, rated: &[bool], n: usize) -> Result<Vec<ItemId>> {
        greedy_select(user, &self.score_items(user), rated, n)
    }

    /// False for models whose scores are relevances, not ratings.
    fn predicts_ratings(&self) -> bool {
        true
    }

    /// True if `fit` reads [`TrainContext::truth`].
    fn needs_truth(&self) -> bool {
        false
    }
}

/// Builds a model from a name and its (possibly partial) hyperparameters.
pub trait RecommenderFactory: Sync {
    fn build(&self, name: &str, params: &Params) -> Result<Box<dyn Recommender>>;

    fn schema(&self, name: &str) -> Result<Vec<ParamSpec>>;
}

/// The built-in registry.
#[derive(Clone, Copy, Debug, Default)]
pub struct BuiltinFactory;

impl RecommenderFactory for BuiltinFactory {
    fn build(&self, name: &str, params: &Params) -> Result<Box<dyn Recommender>> {
        build_recommender(name, params)
    }

    fn schema(&self, name: &str) -> Result<Vec<ParamSpec>> {
        schema(name)
    }
}

fn unknown(name: &str) -> Error {
    Error::UnknownName {
        kind: "recommender",
        name: name.to_string(),
        valid: RECOMMENDERS.join(", "),
    }
}

/// Hyperparameter schema of a built-in recommender.
pub fn schema(name: &str) -> Result<Vec<ParamSpec>> {
    Ok(match name {
        "random" | "toppop" | "oracle" => Vec::new(),
        "itemknn" | "userknn" => KnnParams::schema(),
        "mf" => MfParams::schema(),
        "ease" => EaseRecommender::schema(),
        _ => return Err(unknown(name)),
    })
}

/// Fills defaults and checks names and types against the schema.
pub fn resolve_params(specs: &[ParamSpec], params: &Params) -> Result<Params> {
    for key in params.keys() {
        if !specs.iter().any(|s| s.name == key) {
            let valid: Vec<_> = specs.iter().map(|s| s.name).collect();
            return Err(Error::param(
                key,
                format!("unknown parameter; valid: [{}]", valid.join(", ")),
            ));
        }
    }
    let mut out = Params::new();
    for spec in specs {
        let value = match params.get(spec.name) {
            Some(v) => spec.check(v)?,
            None => spec.default.clone(),
        };
        out.insert(spec.name.to_string(), value);
    }
    Ok(out)
}

pub fn build_recommender(name: &str, params: &Params) -> Result<Box<dyn Recommender>> {
    let resolved = resolve_params(&schema(name)?, params)?;
    Ok(match name {
        "random" => Box::new(RandomRecommender::new()),
        "toppop" => Box::new(TopPopRecommender::new()),
        "oracle" => Box::new(OracleRecommender::new()),
        "itemknn" => Box::new(KnnRecommender::new(
            Orientation::Item,
            KnnParams::from_params(&resolved)?,
        )),
        "userknn" => Box::new(KnnRecommender::new(
            Orientation::User,
            KnnParams::from_params(&resolved)?,
        )),
        "mf" => Box::new(MfRecommender::new(MfParams::from_params(&resolved)?)),
        "ease" => Box::new(EaseRecommender::from_params(&resolved)?),
        _ => return Err(unknown(name)),
    })
}

/// Orders by score descending, then by lower item id.
#[inline]
pub(crate) fn rank_order(a: (usize, f64), b: (usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Top-`n` unrated items by score; ties go to the lower item id.
pub fn greedy_select(user: UserId, scores: &[f64], rated: &[bool], n: usize) -> Result<Vec<ItemId>> {
    if n == 0 {
        return Err(Error::Contract("slate size must be at least 1".into()));
    }
    let mut cand: Vec<(usize, f64)> = scores
        .iter()
        .enumerate()
        .filter(|&(i, _)| !rated.get(i).copied().unwrap_or(false))
        .map(|(i, &s)| (i, s))
        .collect();
    if cand.is_empty() {
        return Err(Error::Exhausted(user.idx()));
    }
    if n < cand.len() {
        cand.select_nth_unstable_by(n - 1, |&a, &b| rank_order(a, b));
        cand.truncate(n);
    }
    cand.sort_unstable_by(|&a, &b| rank_order(a, b));
    Ok(cand.into_iter().map(|(i, _)| ItemId::from(i)).collect())
}
