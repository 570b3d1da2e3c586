//! Topic-preference environments with optional affinity drift and boredom.
//!
//! Each item belongs to one of `K` topics and each user holds a preference
//! per topic, initialized uniformly on [0.5, 5.5]. A rating is the
//! preference for the item's topic, minus a boredom penalty when that topic
//! fills at least `threshold` of the user's last `memory` consumptions, plus
//! Gaussian noise, clipped to [1, 5]. After each consumption the consumed
//! topic's preference moves up by `affinity` and every other topic moves
//! down by `affinity / (K − 1)`, all clipped to [0.5, 5.5].

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Environment, Slate};
use crate::error::{Error, Result};
use crate::rng::{RngSeed, Stream};
use crate::types::{ItemId, Observation, RatingRange, UserId};

pub const PREF_LO: f64 = 0.5;
pub const PREF_HI: f64 = 5.5;

#[derive(Clone, Debug, PartialEq)]
pub struct TopicsParams {
    pub n_users: usize,
    pub n_items: usize,
    pub n_topics: usize,
    pub noise_std: f64,
    pub affinity: f64,
    pub memory: usize,
    pub threshold: usize,
    pub penalty: f64,
}

impl TopicsParams {
    /// Dynamics disabled.
    pub fn is_static(&self) -> bool {
        self.affinity == 0.0 && self.penalty == 0.0
    }

    fn validate(&self) -> Result<()> {
        if self.n_topics < 2 {
            return Err(Error::Config("topics environments need at least 2 topics".into()));
        }
        if self.n_users == 0 || self.n_items == 0 {
            return Err(Error::Config("environment must have users and items".into()));
        }
        if !(self.noise_std >= 0.0) || !(self.affinity >= 0.0) || !(self.penalty >= 0.0) {
            return Err(Error::Config("noise_std, affinity and penalty must be >= 0".into()));
        }
        if self.threshold < 1 {
            return Err(Error::Config("boredom threshold must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TopicsEnv {
    name: String,
    params: TopicsParams,
    topic_of_item: Vec<usize>,
    /// Row-major `n_users × n_topics`.
    prefs: Vec<f64>,
    memory: Vec<VecDeque<usize>>,
    noise: Normal<f64>,
    rng: Stream,
}

impl TopicsEnv {
    pub fn new(name: &str, params: TopicsParams, seed: &RngSeed) -> Result<Self> {
        params.validate()?;
        let noise = Normal::new(0.0, params.noise_std).map_err(|e| Error::Config(e.to_string()))?;
        let mut env = TopicsEnv {
            name: name.to_string(),
            topic_of_item: Vec::new(),
            prefs: Vec::new(),
            memory: Vec::new(),
            noise,
            rng: seed.stream(),
            params,
        };
        env.reset(seed)?;
        Ok(env)
    }

    /// Environment with explicit ground truth, for tests and replays.
    pub fn from_parts(
        name: &str,
        params: TopicsParams,
        topic_of_item: Vec<usize>,
        prefs: Vec<f64>,
        seed: &RngSeed,
    ) -> Result<Self> {
        params.validate()?;
        if topic_of_item.len() != params.n_items || prefs.len() != params.n_users * params.n_topics {
            return Err(Error::Config("topic table sizes do not match parameters".into()));
        }
        if topic_of_item.iter().any(|&k| k >= params.n_topics) {
            return Err(Error::Config("topic index out of range".into()));
        }
        let noise = Normal::new(0.0, params.noise_std).map_err(|e| Error::Config(e.to_string()))?;
        Ok(TopicsEnv {
            name: name.to_string(),
            memory: vec![VecDeque::new(); params.n_users],
            topic_of_item,
            prefs,
            noise,
            rng: seed.derive("noise").stream(),
            params,
        })
    }

    pub fn params(&self) -> &TopicsParams {
        &self.params
    }

    pub fn topic_of(&self, item: ItemId) -> usize {
        self.topic_of_item[item.idx()]
    }

    pub fn preference(&self, user: UserId, topic: usize) -> f64 {
        self.prefs[user.idx() * self.params.n_topics + topic]
    }

    pub fn preferences(&self) -> &[f64] {
        &self.prefs
    }

    pub fn memory(&self, user: UserId) -> &VecDeque<usize> {
        &self.memory[user.idx()]
    }

    /// Replaces a user's consumption memory, keeping at most `memory` entries.
    pub fn set_memory(&mut self, user: UserId, topics: &[usize]) {
        let m = &mut self.memory[user.idx()];
        m.clear();
        for &k in topics {
            Self::push_bounded(m, k, self.params.memory);
        }
    }

    fn push_bounded(mem: &mut VecDeque<usize>, topic: usize, cap: usize) {
        if cap == 0 {
            return;
        }
        mem.push_back(topic);
        while mem.len() > cap {
            mem.pop_front();
        }
    }

    fn bored(&self, user: UserId, topic: usize) -> bool {
        if self.params.penalty == 0.0 {
            return false;
        }
        let seen = self.memory[user.idx()].iter().filter(|&&k| k == topic).count();
        seen >= self.params.threshold
    }

    /// Noiseless pre-clip rating under the current preferences and memory.
    fn expected(&self, user: UserId, item: ItemId) -> f64 {
        let k = self.topic_of(item);
        let penalty = if self.bored(user, k) { self.params.penalty } else { 0.0 };
        self.preference(user, k) - penalty
    }

    /// Rating for a given noise draw.
    pub fn topics_rate(&self, user: UserId, item: ItemId, noise: f64) -> f64 {
        RatingRange::STARS.clip(self.expected(user, item) + noise)
    }

    /// Records a consumption: memory first, then the affinity update.
    pub fn topics_update(&mut self, user: UserId, item: ItemId) {
        let k = self.topic_of(item);
        Self::push_bounded(&mut self.memory[user.idx()], k, self.params.memory);
        let a = self.params.affinity;
        if a == 0.0 {
            return;
        }
        let n_topics = self.params.n_topics;
        let spill = a / (n_topics - 1) as f64;
        let row = &mut self.prefs[user.idx() * n_topics..(user.idx() + 1) * n_topics];
        for (t, p) in row.iter_mut().enumerate() {
            let delta = if t == k { a } else { -spill };
            *p = (*p + delta).clamp(PREF_LO, PREF_HI);
        }
    }
}

impl Environment for TopicsEnv {
    fn name(&self) -> &str {
        &self.name
    }

    fn n_users(&self) -> usize {
        self.params.n_users
    }

    fn n_items(&self) -> usize {
        self.params.n_items
    }

    fn rating_range(&self) -> RatingRange {
        RatingRange::STARS
    }

    fn slate_size(&self) -> usize {
        1
    }

    fn reset(&mut self, seed: &RngSeed) -> Result<()> {
        let mut init = seed.derive("init").stream();
        let (nu, ni, nk) = (self.params.n_users, self.params.n_items, self.params.n_topics);
        self.topic_of_item = (0..ni).map(|_| init.random_range(0..nk)).collect();
        self.prefs = (0..nu * nk).map(|_| init.random_range(PREF_LO..PREF_HI)).collect();
        self.memory = vec![VecDeque::new(); nu];
        self.rng = seed.derive("noise").stream();
        Ok(())
    }

    fn rate_static(&mut self, user: UserId, item: ItemId) -> f64 {
        let eps = self.noise.sample(&mut self.rng);
        let k = self.topic_of(item);
        RatingRange::STARS.clip(self.preference(user, k) + eps)
    }

    fn online_step(&mut self, slates: &[Slate], timestep: u32) -> Result<Vec<Observation>> {
        let mut out = Vec::with_capacity(slates.len());
        for s in slates {
            let item = *s
                .items
                .first()
                .ok_or(Error::Empty("slate for a consume-directly environment"))?;
            let eps = self.noise.sample(&mut self.rng);
            let r = self.topics_rate(s.user, item, eps);
            self.topics_update(s.user, item);
            out.push(Observation::new(s.user, item, r, timestep));
        }
        Ok(out)
    }

    fn true_rating(&self, user: UserId, item: ItemId) -> f64 {
        RatingRange::STARS.clip(self.expected(user, item))
    }
}
