//! EASE: item-item linear autoencoder with a zero-diagonal constraint.
//!
//! With binarized interactions X, `P = (XᵀX + λI)⁻¹` and the closed-form
//! weights are `B_ij = −P_ij / P_jj` off the diagonal, `B_jj = 0`. A user's
//! scores are the row `x_u B`.

use nalgebra::DMatrix;

use super::params::{get_real, ParamSpec, Params};
use super::{Recommender, TrainContext};
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::types::{ItemId, ObservationSet, UserId};

#[derive(Clone, Debug)]
pub struct EaseModel {
    pub lambda: f64,
    pub threshold: f64,
    /// `n_items × n_items`, zero diagonal.
    pub weights: DMatrix<f64>,
    positives: Vec<Vec<usize>>,
}

/// Fits EASE on ratings binarized at `rating >= threshold`.
pub fn ease_fit(data: &ObservationSet, lambda: f64, threshold: f64) -> Result<EaseModel> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::param("lambda", format!("must be > 0, got {lambda}")));
    }
    let n = data.n_items();
    let mut positives = vec![Vec::new(); data.n_users()];
    for o in data.iter() {
        if o.rating >= threshold {
            positives[o.user.idx()].push(o.item.idx());
        }
    }
    for p in &mut positives {
        p.sort_unstable();
    }
    let mut gram = DMatrix::<f64>::zeros(n, n);
    for items in &positives {
        for &a in items {
            for &b in items {
                gram[(a, b)] += 1.0;
            }
        }
    }
    let weights = closed_form(gram, lambda)?;
    Ok(EaseModel {
        lambda,
        threshold,
        weights,
        positives,
    })
}

/// B from the Gram matrix `XᵀX` (without the ridge term).
pub(crate) fn closed_form(mut gram: DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    let n = gram.nrows();
    for j in 0..n {
        gram[(j, j)] += lambda;
    }
    let p = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical("regularized Gram matrix is not positive definite".into()))?
        .inverse();
    let mut b = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let pjj = p[(j, j)];
        if !(pjj > 0.0) || !pjj.is_finite() {
            return Err(Error::Numerical(format!("bad inverse diagonal {pjj} at {j}")));
        }
        for i in 0..n {
            if i != j {
                b[(i, j)] = -p[(i, j)] / pjj;
            }
        }
    }
    Ok(b)
}

impl EaseModel {
    pub fn score(&self, user: UserId, item: ItemId) -> f64 {
        self.positives[user.idx()]
            .iter()
            .map(|&j| self.weights[(j, item.idx())])
            .sum()
    }

    pub fn score_row(&self, user: UserId) -> Vec<f64> {
        let n = self.weights.ncols();
        let mut out = vec![0.0; n];
        for &j in &self.positives[user.idx()] {
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.weights[(j, i)];
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct EaseRecommender {
    lambda: f64,
    /// Binarization cut as a fraction of the rating range (0.75 gives 4 on 1..5).
    threshold_frac: f64,
    model: Option<EaseModel>,
}

impl EaseRecommender {
    pub fn new(lambda: f64, threshold_frac: f64) -> Self {
        EaseRecommender {
            lambda,
            threshold_frac,
            model: None,
        }
    }

    pub fn schema() -> Vec<ParamSpec> {
        vec![
            ParamSpec::real("lambda", 0.0, true, 100.0),
            ParamSpec::real("threshold_frac", 0.0, false, 0.75),
        ]
    }

    pub fn from_params(p: &Params) -> Result<Self> {
        Ok(EaseRecommender::new(get_real(p, "lambda")?, get_real(p, "threshold_frac")?))
    }

    pub fn model(&self) -> Option<&EaseModel> {
        self.model.as_ref()
    }
}

impl Recommender for EaseRecommender {
    fn name(&self) -> &str {
        "ease"
    }

    fn fit(&mut self, data: &ObservationSet, ctx: &TrainContext<'_>, _rng: &mut Stream) -> Result<()> {
        let threshold = ctx.range.lo + self.threshold_frac * ctx.range.width();
        self.model = Some(ease_fit(data, self.lambda, threshold)?);
        Ok(())
    }

    fn predict(&self, user: UserId, item: ItemId) -> f64 {
        self.model.as_ref().expect("ease used before fit").score(user, item)
    }

    fn n_items(&self) -> usize {
        self.model.as_ref().map_or(0, |m| m.weights.ncols())
    }

    fn score_items(&self, user: UserId) -> Vec<f64> {
        self.model.as_ref().expect("ease used before fit").score_row(user)
    }

    fn predicts_ratings(&self) -> bool {
        false
    }
}
