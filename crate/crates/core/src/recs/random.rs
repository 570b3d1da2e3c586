use rand::Rng;

use super::{Recommender, TrainContext};
use crate::error::Result;
use crate::rng::Stream;
use crate::types::{ItemId, ObservationSet, RatingRange, UserId};

/// Uniform random scores, redrawn at every fit.
///
/// The score table is implicit: each fit draws a fresh 64-bit nonce and a
/// pair's score is a hash of (nonce, user, item) mapped onto the rating range.
#[derive(Clone, Debug)]
pub struct RandomRecommender {
    nonce: u64,
    range: RatingRange,
    n_items: usize,
}

impl RandomRecommender {
    pub fn new() -> Self {
        RandomRecommender {
            nonce: 0,
            range: RatingRange::STARS,
            n_items: 0,
        }
    }
}

impl Default for RandomRecommender {
    fn default() -> Self {
        Self::new()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Recommender for RandomRecommender {
    fn name(&self) -> &str {
        "random"
    }

    fn fit(&mut self, _data: &ObservationSet, ctx: &TrainContext<'_>, rng: &mut Stream) -> Result<()> {
        self.nonce = rng.random();
        self.range = ctx.range;
        self.n_items = ctx.n_items;
        Ok(())
    }

    fn predict(&self, user: UserId, item: ItemId) -> f64 {
        let key = ((user.0 as u64) << 32) | item.0 as u64;
        let h = splitmix64(splitmix64(self.nonce) ^ key);
        let unit = (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        self.range.lo + unit * self.range.width()
    }

    fn n_items(&self) -> usize {
        self.n_items
    }
}
