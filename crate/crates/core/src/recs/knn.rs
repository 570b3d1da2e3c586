//! Mean-centered k-nearest-neighbour collaborative filtering.
//!
//! Similarities are computed over co-rated support only and shrunk toward
//! zero by `n / (n + shrinkage)` where `n` is the support size. Prediction
//! is the target's mean plus the similarity-weighted average deviation of
//! the `k` most similar positively-correlated neighbours.

use rayon::prelude::*;

use super::params::{get_int, get_real, get_str, ParamSpec, Params};
use super::{Recommender, TrainContext};
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::types::{ItemId, ObservationSet, RatingRange, UserId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    Item,
    User,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Similarity {
    Cosine,
    Pearson,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnnParams {
    /// Neighbourhood size; `None` uses every eligible neighbour.
    pub k: Option<usize>,
    pub shrinkage: f64,
    pub similarity: Similarity,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams {
            k: Some(40),
            shrinkage: 100.0,
            similarity: Similarity::Pearson,
        }
    }
}

impl KnnParams {
    pub fn schema() -> Vec<ParamSpec> {
        vec![
            // k = 0 means unbounded
            ParamSpec::int("k", 0, 40),
            ParamSpec::real("shrinkage", 0.0, false, 100.0),
            ParamSpec::categorical("similarity", &["cosine", "pearson"], "pearson"),
        ]
    }

    pub fn from_params(p: &Params) -> Result<Self> {
        let k = get_int(p, "k")?;
        let similarity = match get_str(p, "similarity")? {
            "cosine" => Similarity::Cosine,
            "pearson" => Similarity::Pearson,
            other => return Err(Error::param("similarity", format!("unknown '{other}'"))),
        };
        Ok(KnnParams {
            k: if k == 0 { None } else { Some(k as usize) },
            shrinkage: get_real(p, "shrinkage")?,
            similarity,
        })
    }
}

/// Profile of one entity: sorted (other-side id, rating) pairs.
type Profile = Vec<(u32, f64)>;

#[derive(Clone, Debug)]
pub struct KnnModel {
    pub orientation: Orientation,
    pub params: KnnParams,
    n_entities: usize,
    sim: Vec<f64>,
    entity_mean: Vec<f64>,
    seen: Vec<bool>,
    pub global_mean: f64,
    range: RatingRange,
    by_user: Vec<Profile>,
    by_item: Vec<Profile>,
    n_items: usize,
}

/// Similarity of two sorted profiles over their common support.
pub(crate) fn pair_similarity(a: &Profile, b: &Profile, kind: Similarity, shrinkage: f64) -> f64 {
    let (mut ia, mut ib) = (0, 0);
    let (mut n, mut sx, mut sy, mut sxy, mut sxx, mut syy) = (0usize, 0.0, 0.0, 0.0, 0.0, 0.0);
    while ia < a.len() && ib < b.len() {
        let (ka, x) = a[ia];
        let (kb, y) = b[ib];
        if ka < kb {
            ia += 1;
        } else if kb < ka {
            ib += 1;
        } else {
            n += 1;
            sx += x;
            sy += y;
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
            ia += 1;
            ib += 1;
        }
    }
    if n == 0 {
        return 0.0;
    }
    let base = match kind {
        Similarity::Cosine => {
            let den = (sxx * syy).sqrt();
            if den > 0.0 {
                sxy / den
            } else {
                0.0
            }
        }
        Similarity::Pearson => {
            let nf = n as f64;
            let cov = sxy - sx * sy / nf;
            let vx = sxx - sx * sx / nf;
            let vy = syy - sy * sy / nf;
            let den = (vx * vy).sqrt();
            if vx > 1e-12 && vy > 1e-12 && den > 0.0 {
                cov / den
            } else {
                0.0
            }
        }
    };
    let base = base.clamp(-1.0, 1.0);
    base * n as f64 / (n as f64 + shrinkage)
}

pub fn knn_fit(
    data: &ObservationSet,
    orientation: Orientation,
    params: &KnnParams,
    range: RatingRange,
) -> Result<KnnModel> {
    if data.is_empty() {
        return Err(Error::Empty("knn training data"));
    }
    let (n_users, n_items) = (data.n_users(), data.n_items());
    let mut by_user: Vec<Profile> = vec![Vec::new(); n_users];
    let mut by_item: Vec<Profile> = vec![Vec::new(); n_items];
    for o in data.iter() {
        by_user[o.user.idx()].push((o.item.0, o.rating));
        by_item[o.item.idx()].push((o.user.0, o.rating));
    }
    for p in by_user.iter_mut().chain(by_item.iter_mut()) {
        p.sort_unstable_by_key(|e| e.0);
    }
    let profiles = match orientation {
        Orientation::Item => &by_item,
        Orientation::User => &by_user,
    };
    let n = profiles.len();
    let global_mean = data.mean_rating().unwrap_or_else(|| range.midpoint());
    let entity_mean: Vec<f64> = profiles
        .iter()
        .map(|p| {
            if p.is_empty() {
                global_mean
            } else {
                p.iter().map(|e| e.1).sum::<f64>() / p.len() as f64
            }
        })
        .collect();
    let seen: Vec<bool> = profiles.iter().map(|p| !p.is_empty()).collect();

    // upper triangle per row, in parallel; each cell is computed exactly once
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|a| {
            ((a + 1)..n)
                .map(|b| pair_similarity(&profiles[a], &profiles[b], params.similarity, params.shrinkage))
                .collect()
        })
        .collect();
    let mut sim = vec![0.0; n * n];
    for (a, row) in rows.into_iter().enumerate() {
        for (off, s) in row.into_iter().enumerate() {
            let b = a + 1 + off;
            sim[a * n + b] = s;
            sim[b * n + a] = s;
        }
    }

    Ok(KnnModel {
        orientation,
        params: params.clone(),
        n_entities: n,
        sim,
        entity_mean,
        seen,
        global_mean,
        range,
        by_user,
        by_item,
        n_items,
    })
}

impl KnnModel {
    pub fn similarity(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 1.0;
        }
        self.sim[a * self.n_entities + b]
    }

    pub fn entity_mean(&self, e: usize) -> f64 {
        self.entity_mean[e]
    }

    /// Prediction for `target` from the ratings in `context` (neighbour id, rating).
    fn predict_entity(&self, target: usize, context: &Profile) -> f64 {
        if !self.seen[target] {
            return self.global_mean;
        }
        let row = &self.sim[target * self.n_entities..(target + 1) * self.n_entities];
        let mut nb: Vec<(usize, f64, f64)> = context
            .iter()
            .filter_map(|&(j, r)| {
                let j = j as usize;
                let s = row[j];
                (j != target && s > 0.0).then(|| (j, s, r - self.entity_mean[j]))
            })
            .collect();
        let by_sim = |a: &(usize, f64, f64), b: &(usize, f64, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
        if let Some(k) = self.params.k {
            if k < nb.len() {
                nb.select_nth_unstable_by(k - 1, by_sim);
                nb.truncate(k);
            }
        }
        // fixed summation order regardless of selection internals
        nb.sort_unstable_by(by_sim);
        let (mut num, mut den) = (0.0, 0.0);
        for &(_, s, dev) in &nb {
            num += s * dev;
            den += s.abs();
        }
        let base = self.entity_mean[target];
        if den > 0.0 {
            self.range.clip(base + num / den)
        } else {
            self.range.clip(base)
        }
    }

    pub fn predict(&self, user: UserId, item: ItemId) -> f64 {
        match self.orientation {
            Orientation::Item => self.predict_entity(item.idx(), &self.by_user[user.idx()]),
            Orientation::User => self.predict_entity(user.idx(), &self.by_item[item.idx()]),
        }
    }
}

/// ItemKNN / UserKNN behind the [`Recommender`] interface.
#[derive(Clone, Debug)]
pub struct KnnRecommender {
    orientation: Orientation,
    params: KnnParams,
    model: Option<KnnModel>,
}

impl KnnRecommender {
    pub fn new(orientation: Orientation, params: KnnParams) -> Self {
        KnnRecommender {
            orientation,
            params,
            model: None,
        }
    }

    pub fn model(&self) -> Option<&KnnModel> {
        self.model.as_ref()
    }
}

impl Recommender for KnnRecommender {
    fn name(&self) -> &str {
        match self.orientation {
            Orientation::Item => "itemknn",
            Orientation::User => "userknn",
        }
    }

    fn fit(&mut self, data: &ObservationSet, ctx: &TrainContext<'_>, _rng: &mut Stream) -> Result<()> {
        self.model = Some(knn_fit(data, self.orientation, &self.params, ctx.range)?);
        Ok(())
    }

    fn predict(&self, user: UserId, item: ItemId) -> f64 {
        self.model.as_ref().expect("knn used before fit").predict(user, item)
    }

    fn n_items(&self) -> usize {
        self.model.as_ref().map_or(0, |m| m.n_items)
    }
}
