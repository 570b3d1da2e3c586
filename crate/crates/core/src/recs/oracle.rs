use super::{Recommender, TrainContext};
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::types::{ItemId, ObservationSet, RatingMatrix, UserId};

/// Scores with the environment's noiseless ratings at fit time.
#[derive(Clone, Debug, Default)]
pub struct OracleRecommender {
    truth: Option<RatingMatrix>,
}

impl OracleRecommender {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Recommender for OracleRecommender {
    fn name(&self) -> &str {
        "oracle"
    }

    fn fit(&mut self, _data: &ObservationSet, ctx: &TrainContext<'_>, _rng: &mut Stream) -> Result<()> {
        let truth = ctx.truth.ok_or(Error::NoSnapshot)?;
        self.truth = Some(truth.clone());
        Ok(())
    }

    fn predict(&self, user: UserId, item: ItemId) -> f64 {
        self.truth.as_ref().expect("oracle used before fit").get(user, item)
    }

    fn n_items(&self) -> usize {
        self.truth.as_ref().map_or(0, |t| t.n_items())
    }

    fn score_items(&self, user: UserId) -> Vec<f64> {
        self.truth.as_ref().expect("oracle used before fit").row(user).to_vec()
    }

    fn needs_truth(&self) -> bool {
        true
    }
}
