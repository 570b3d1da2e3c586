use super::{Recommender, TrainContext};
use crate::error::Result;
use crate::rng::Stream;
use crate::types::{ItemId, ObservationSet, UserId};

/// Item popularity measured as mean observed rating, the same for every user.
#[derive(Clone, Debug, Default)]
pub struct TopPopRecommender {
    scores: Vec<f64>,
}

impl TopPopRecommender {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Recommender for TopPopRecommender {
    fn name(&self) -> &str {
        "toppop"
    }

    fn fit(&mut self, data: &ObservationSet, ctx: &TrainContext<'_>, _rng: &mut Stream) -> Result<()> {
        let fallback = data.mean_rating().unwrap_or_else(|| ctx.range.midpoint());
        let mut sum = vec![0.0; ctx.n_items];
        let mut count = vec![0usize; ctx.n_items];
        for o in data.iter() {
            sum[o.item.idx()] += o.rating;
            count[o.item.idx()] += 1;
        }
        self.scores = sum
            .iter()
            .zip(&count)
            .map(|(&s, &c)| if c == 0 { fallback } else { s / c as f64 })
            .collect();
        Ok(())
    }

    fn predict(&self, _user: UserId, item: ItemId) -> f64 {
        self.scores[item.idx()]
    }

    fn n_items(&self) -> usize {
        self.scores.len()
    }

    fn score_items(&self, _user: UserId) -> Vec<f64> {
        self.scores.clone()
    }
}
