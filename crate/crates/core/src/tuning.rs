//! Offline hyperparameter selection by k-fold cross-validation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics;
use crate::recs::{ParamValue, Params, Recommender, RecommenderFactory, TrainContext};
use crate::rng::{RngSeed, Stream};
use crate::types::{ItemId, ObservationSet, UserId};

/// Cut-off used for offline nDCG when none is given.
pub const DEFAULT_NDCG_K: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Objective {
    Rmse,
    Ndcg { k: usize },
}

impl Objective {
    pub fn minimize(self) -> bool {
        matches!(self, Objective::Rmse)
    }

    fn better(self, a: f64, b: f64) -> bool {
        if self.minimize() {
            a < b
        } else {
            a > b
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::Rmse => f.write_str("rmse"),
            Objective::Ndcg { k } => write!(f, "ndcg@{k}"),
        }
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "rmse" {
            return Ok(Objective::Rmse);
        }
        if s == "ndcg" {
            return Ok(Objective::Ndcg { k: DEFAULT_NDCG_K });
        }
        match s.strip_prefix("ndcg@").map(str::parse::<usize>) {
            Some(Ok(k)) if k > 0 => Ok(Objective::Ndcg { k }),
            _ => Err(Error::Config(format!(
                "unknown objective '{s}'; expected rmse or ndcg@<k>"
            ))),
        }
    }
}

impl TryFrom<String> for Objective {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Objective> for String {
    fn from(o: Objective) -> String {
        o.to_string()
    }
}

/// Named parameter axes; points enumerate in lexicographic order of axis
/// names with the last axis varying fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub objective: Objective,
    pub axes: BTreeMap<String, Vec<ParamValue>>,
}

impl Grid {
    pub fn new(objective: Objective) -> Self {
        Grid {
            objective,
            axes: BTreeMap::new(),
        }
    }

    pub fn axis(&mut self, name: &str, values: Vec<ParamValue>) -> &mut Self {
        self.axes.insert(name.to_string(), values);
        self
    }

    /// Default search space of a built-in recommender.
    pub fn default_for(name: &str) -> Result<Grid> {
        use ParamValue::{Int, Real, Str};
        let mut g = Grid::new(Objective::Rmse);
        match name {
            "random" | "toppop" | "oracle" => {}
            "itemknn" | "userknn" => {
                g.axis("k", vec![Int(20), Int(40), Int(80)]);
                g.axis("shrinkage", vec![Real(0.0), Real(25.0), Real(100.0)]);
                g.axis("similarity", vec![Str("cosine".into()), Str("pearson".into())]);
            }
            "mf" => {
                g.axis("dim", vec![Int(8), Int(16), Int(32)]);
                g.axis("lr", vec![Real(0.002), Real(0.01)]);
                g.axis("reg", vec![Real(0.02), Real(0.1)]);
                g.axis("epochs", vec![Int(50), Int(128)]);
            }
            "ease" => {
                g.objective = Objective::Ndcg { k: DEFAULT_NDCG_K };
                g.axis("lambda", vec![Real(10.0), Real(100.0), Real(500.0)]);
            }
            _ => {
                return Err(Error::UnknownName {
                    kind: "recommender",
                    name: name.to_string(),
                    valid: crate::recs::RECOMMENDERS.join(", "),
                })
            }
        }
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.axes.values().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every grid point in deterministic order.
    pub fn points(&self) -> Result<Vec<Params>> {
        if self.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let mut out = vec![Params::new()];
        for (name, values) in &self.axes {
            out = out
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.insert(name.clone(), v.clone());
                        q
                    })
                })
                .collect();
        }
        Ok(out)
    }

    /// Checks axis names against a schema.
    pub fn check_names(&self, factory: &dyn RecommenderFactory, recommender: &str) -> Result<()> {
        let schema = factory.schema(recommender)?;
        for name in self.axes.keys() {
            if !schema.iter().any(|s| s.name == name) {
                let valid: Vec<_> = schema.iter().map(|s| s.name).collect();
                return Err(Error::param(
                    name,
                    format!("not a parameter of {recommender}; valid: [{}]", valid.join(", ")),
                ));
            }
        }
        Ok(())
    }
}

/// Uniform random partition of `0..n` into `k` folds; the first `n mod k`
/// folds hold one extra element.
pub fn kfold_split(n: usize, k: usize, rng: &mut Stream) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Contract(format!("k-fold needs k >= 2, got {k}")));
    }
    if k > n {
        return Err(Error::Contract(format!("k = {k} folds but only {n} observations")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut fold = idx[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    Ok(folds)
}

/// Offline metrics of one fold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    /// `None` for models that do not predict ratings.
    pub rmse: Option<f64>,
    /// `None` when every test user has fewer than two items.
    pub ndcg: Option<f64>,
}

/// Scores a fitted model on held-out observations.
pub fn evaluate(model: &dyn Recommender, test: &ObservationSet, ndcg_k: usize) -> Result<FoldScore> {
    let pairs: Vec<(UserId, ItemId)> = test.iter().map(|o| (o.user, o.item)).collect();
    let preds = model.predict_pairs(&pairs);
    if preds.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numerical(format!("{} produced a non-finite score", model.name())));
    }
    let rmse = if model.predicts_ratings() {
        let v: Vec<(f64, f64)> = preds.iter().zip(test.iter()).map(|(p, o)| (*p, o.rating)).collect();
        Some(metrics::rmse(&v)?)
    } else {
        None
    };
    let mut per_user: BTreeMap<u32, Vec<(ItemId, f64, f64)>> = BTreeMap::new();
    for (p, o) in preds.iter().zip(test.iter()) {
        per_user.entry(o.user.0).or_default().push((o.item, *p, o.rating));
    }
    let lists: Vec<_> = per_user.into_values().collect();
    let ndcg = match metrics::ndcg_at_k(&lists, ndcg_k) {
        Ok(v) => Some(v),
        Err(Error::Empty(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(FoldScore { rmse, ndcg })
}

/// Train/test pairs for precomputed folds.
pub fn fold_sets(data: &ObservationSet, folds: &[Vec<usize>]) -> Vec<(ObservationSet, ObservationSet)> {
    (0..folds.len())
        .map(|f| {
            let train: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
            (data.subset(&train), data.subset(&folds[f]))
        })
        .collect()
}

fn run_folds(
    factory: &dyn RecommenderFactory,
    name: &str,
    params: &Params,
    sets: &[(ObservationSet, ObservationSet)],
    ctx: &TrainContext<'_>,
    seed: &RngSeed,
    ndcg_k: usize,
) -> Result<Vec<FoldScore>> {
    sets.iter()
        .enumerate()
        .map(|(f, (train, test))| {
            let mut model = factory.build(name, params)?;
            model.fit(train, ctx, &mut seed.derive("fit").derive(f).stream())?;
            evaluate(model.as_ref(), test, ndcg_k)
        })
        .collect()
}

/// k-fold cross-validation of one configuration.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate(
    factory: &dyn RecommenderFactory,
    name: &str,
    params: &Params,
    data: &ObservationSet,
    ctx: &TrainContext<'_>,
    k: usize,
    seed: &RngSeed,
    ndcg_k: usize,
) -> Result<Vec<FoldScore>> {
    let folds = kfold_split(data.len(), k, &mut seed.derive("folds").stream())?;
    run_folds(factory, name, params, &fold_sets(data, &folds), ctx, seed, ndcg_k)
}

/// Outcome of one grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigResult {
    pub params: Params,
    pub folds: Vec<FoldScore>,
    /// Mean objective over folds; `None` if the config failed.
    pub mean: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub recommender: String,
    pub objective: Objective,
    pub best: Params,
    pub best_index: usize,
    pub table: Vec<ConfigResult>,
}

fn objective_mean(objective: Objective, folds: &[FoldScore]) -> Result<f64> {
    let vals: Option<Vec<f64>> = folds
        .iter()
        .map(|s| match objective {
            Objective::Rmse => s.rmse,
            Objective::Ndcg { .. } => s.ndcg,
        })
        .collect();
    let vals = vals.ok_or_else(|| Error::Contract(format!("objective {objective} undefined on some fold")))?;
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    if !mean.is_finite() {
        return Err(Error::Numerical(format!("mean {objective} is not finite")));
    }
    Ok(mean)
}

/// Evaluates every grid point on identical folds and keeps the best one.
/// Ties go to the earliest point; failed points are reported but skipped.
pub fn grid_search(
    factory: &dyn RecommenderFactory,
    name: &str,
    grid: &Grid,
    data: &ObservationSet,
    ctx: &TrainContext<'_>,
    k: usize,
    seed: &RngSeed,
) -> Result<SearchResult> {
    grid.check_names(factory, name)?;
    let points = grid.points()?;
    let folds = kfold_split(data.len(), k, &mut seed.derive("folds").stream())?;
    let sets = fold_sets(data, &folds);
    let ndcg_k = match grid.objective {
        Objective::Ndcg { k } => k,
        Objective::Rmse => DEFAULT_NDCG_K,
    };
    let table: Vec<ConfigResult> = points
        .into_par_iter()
        .map(|params| {
            let outcome = run_folds(factory, name, &params, &sets, ctx, seed, ndcg_k)
                .and_then(|f| objective_mean(grid.objective, &f).map(|m| (f, m)));
            match outcome {
                Ok((folds, mean)) => ConfigResult {
                    params,
                    folds,
                    mean: Some(mean),
                    error: None,
                },
                Err(e) => {
                    log::warn!("{name} {params:?} failed: {e}");
                    ConfigResult {
                        params,
                        folds: Vec::new(),
                        mean: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in table.iter().enumerate() {
        if let Some(m) = r.mean {
            if best.is_none_or(|(_, b)| grid.objective.better(m, b)) {
                best = Some((i, m));
            }
        }
    }
    let Some((best_index, _)) = best else {
        let last = table.iter().rev().find_map(|r| r.error.clone()).unwrap_or_default();
        return Err(Error::AllConfigsFailed(last));
    };
    Ok(SearchResult {
        recommender: name.to_string(),
        objective: grid.objective,
        best: table[best_index].params.clone(),
        best_index,
        table,
    })
}
