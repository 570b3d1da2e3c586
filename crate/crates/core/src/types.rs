//! Identifiers, ratings and the append-only observation log.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UserId(pub u32);

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ItemId(pub u32);

impl UserId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl ItemId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for UserId {
    fn from(v: usize) -> Self {
        UserId(v as u32)
    }
}

impl From<usize> for ItemId {
    fn from(v: usize) -> Self {
        ItemId(v as u32)
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u{}", self.0)
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "i{}", self.0)
    }
}

/// Truncates `x` to `[lo, hi]`.
pub fn clip(x: f64, lo: f64, hi: f64) -> Result<f64> {
    if lo > hi {
        return Err(Error::Contract(format!("clip bounds inverted: {lo} > {hi}")));
    }
    Ok(x.max(lo).min(hi))
}

/// Closed interval of admissible rating values declared by an environment.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingRange {
    pub lo: f64,
    pub hi: f64,
}

impl RatingRange {
    pub const STARS: RatingRange = RatingRange { lo: 1.0, hi: 5.0 };
    pub const UNIT: RatingRange = RatingRange { lo: 0.0, hi: 1.0 };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::Contract(format!("invalid rating range [{lo}, {hi}]")));
        }
        Ok(RatingRange { lo, hi })
    }

    #[inline]
    pub fn clip(&self, x: f64) -> f64 {
        x.max(self.lo).min(self.hi)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub user: UserId,
    pub item: ItemId,
    pub rating: f64,
    pub timestep: u32,
}

impl Observation {
    pub fn new(user: UserId, item: ItemId, rating: f64, timestep: u32) -> Self {
        Observation {
            user,
            item,
            rating,
            timestep,
        }
    }
}

/// Append-only log of ratings with at most one entry per (user, item) pair.
#[derive(Clone, Debug)]
pub struct ObservationSet {
    n_users: usize,
    n_items: usize,
    tuples: Vec<Observation>,
    by_user: Vec<Vec<u32>>,
    index: HashMap<(u32, u32), u32>,
}

impl PartialEq for ObservationSet {
    fn eq(&self, other: &Self) -> bool {
        self.n_users == other.n_users && self.n_items == other.n_items && self.tuples == other.tuples
    }
}

impl ObservationSet {
    pub fn new(n_users: usize, n_items: usize) -> Self {
        ObservationSet {
            n_users,
            n_items,
            tuples: Vec::new(),
            by_user: vec![Vec::new(); n_users],
            index: HashMap::new(),
        }
    }

    pub fn from_observations(
        n_users: usize,
        n_items: usize,
        obs: impl IntoIterator<Item = Observation>,
    ) -> Result<Self> {
        let mut set = ObservationSet::new(n_users, n_items);
        for o in obs {
            set.insert(o)?;
        }
        Ok(set)
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// Appends one rating. Rejects out-of-range ids and repeated pairs.
    pub fn insert(&mut self, o: Observation) -> Result<()> {
        if o.user.idx() >= self.n_users || o.item.idx() >= self.n_items {
            return Err(Error::OutOfRange(format!(
                "({}, {}) outside {}x{}",
                o.user, o.item, self.n_users, self.n_items
            )));
        }
        let key = (o.user.0, o.item.0);
        if self.index.contains_key(&key) {
            return Err(Error::Duplicate {
                user: o.user.idx(),
                item: o.item.idx(),
            });
        }
        let pos = self.tuples.len() as u32;
        self.index.insert(key, pos);
        self.by_user[o.user.idx()].push(pos);
        self.tuples.push(o);
        Ok(())
    }

    pub fn extend(&mut self, obs: impl IntoIterator<Item = Observation>) -> Result<()> {
        for o in obs {
            self.insert(o)?;
        }
        Ok(())
    }

    pub fn as_slice(&self) -> &[Observation] {
        &self.tuples
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Observation> {
        self.tuples.iter()
    }

    pub fn contains(&self, user: UserId, item: ItemId) -> bool {
        self.index.contains_key(&(user.0, item.0))
    }

    pub fn rating(&self, user: UserId, item: ItemId) -> Option<f64> {
        self.index
            .get(&(user.0, item.0))
            .map(|&p| self.tuples[p as usize].rating)
    }

    /// Observations of one user in insertion order.
    pub fn user_observations(&self, user: UserId) -> impl Iterator<Item = &Observation> + '_ {
        self.by_user[user.idx()]
            .iter()
            .map(move |&p| &self.tuples[p as usize])
    }

    pub fn user_count(&self, user: UserId) -> usize {
        self.by_user[user.idx()].len()
    }

    /// Dense mask of the items `user` has rated.
    pub fn rated_mask(&self, user: UserId) -> Vec<bool> {
        let mut mask = vec![false; self.n_items];
        for o in self.user_observations(user) {
            mask[o.item.idx()] = true;
        }
        mask
    }

    pub fn mean_rating(&self) -> Option<f64> {
        if self.tuples.is_empty() {
            None
        } else {
            Some(self.tuples.iter().map(|o| o.rating).sum::<f64>() / self.tuples.len() as f64)
        }
    }

    /// New set holding the tuples at `positions`, in the given order.
    pub fn subset(&self, positions: &[usize]) -> Self {
        let mut out = ObservationSet::new(self.n_users, self.n_items);
        for &p in positions {
            // positions come from a partition of this set, so no duplicates
            out.insert(self.tuples[p]).expect("subset of a valid set");
        }
        out
    }

    /// Number of distinct users who rated each item.
    pub fn item_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_items];
        for o in &self.tuples {
            counts[o.item.idx()] += 1;
        }
        counts
    }
}

/// Dense user-by-item table, row-major by user.
#[derive(Clone, Debug, PartialEq)]
pub struct RatingMatrix {
    n_users: usize,
    n_items: usize,
    values: Vec<f64>,
}

impl RatingMatrix {
    pub fn from_fn(n_users: usize, n_items: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(n_users * n_items);
        for u in 0..n_users {
            for i in 0..n_items {
                values.push(f(u, i));
            }
        }
        RatingMatrix {
            n_users,
            n_items,
            values,
        }
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    #[inline]
    pub fn get(&self, user: UserId, item: ItemId) -> f64 {
        self.values[user.idx() * self.n_items + item.idx()]
    }

    pub fn row(&self, user: UserId) -> &[f64] {
        let start = user.idx() * self.n_items;
        &self.values[start..start + self.n_items]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}
