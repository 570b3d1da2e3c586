//! Offline and online metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recs::Recommender;
use crate::types::{ItemId, RatingMatrix, UserId};

/// Online metrics of one timestep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimestepRecord {
    pub timestep: u32,
    pub mean_rating: f64,
    /// `None` for models whose scores are not ratings.
    pub observed_rmse: Option<f64>,
    pub coverage: usize,
    pub novelty: f64,
    pub gini: Option<f64>,
    pub population_rmse: Option<f64>,
    pub n_new_ratings: usize,
    pub n_ratings_total: usize,
}

/// Root mean squared error of `(predicted, actual)` pairs.
pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("rmse input"));
    }
    let se: f64 = pairs.iter().map(|(p, a)| (p - a) * (p - a)).sum();
    Ok((se / pairs.len() as f64).sqrt())
}

pub fn mean_rating(ratings: &[f64]) -> Result<f64> {
    if ratings.is_empty() {
        return Err(Error::Empty("mean rating input"));
    }
    Ok(ratings.iter().sum::<f64>() / ratings.len() as f64)
}

fn dcg(gains_in_order: impl Iterator<Item = f64>) -> f64 {
    gains_in_order
        .enumerate()
        .map(|(pos, g)| g / ((pos + 2) as f64).log2())
        .sum()
}

/// nDCG@k as a ratio of sums over users.
///
/// Each inner list holds `(item, predicted score, true rating)` for one user.
/// Users with fewer than two items are skipped.
pub fn ndcg_at_k(users: &[Vec<(ItemId, f64, f64)>], k: usize) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    let mut used = 0;
    for list in users.iter().filter(|l| l.len() >= 2) {
        let cut = k.min(list.len());
        let mut by_pred = list.clone();
        by_pred.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut by_truth = list.clone();
        by_truth.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
        num += dcg(by_pred.iter().take(cut).map(|e| e.2));
        den += dcg(by_truth.iter().take(cut).map(|e| e.2));
        used += 1;
    }
    if used == 0 {
        return Err(Error::Empty("ndcg: every user has fewer than two items"));
    }
    if den == 0.0 {
        return Err(Error::Numerical("ndcg: ideal DCG is zero".into()));
    }
    Ok(num / den)
}

/// Number of distinct items.
pub fn coverage(items: &[ItemId]) -> usize {
    let mut v: Vec<u32> = items.iter().map(|i| i.0).collect();
    v.sort_unstable();
    v.dedup();
    v.len()
}

/// Mean of `−log2 p_i` with `p_i` the fraction of users who rated `i`
/// before this timestep, floored at `1 / n_users`.
pub fn novelty(items: &[ItemId], prior_counts: &[usize], n_users: usize) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::Empty("novelty: no recommended items"));
    }
    let n = n_users as f64;
    let total: f64 = items
        .iter()
        .map(|i| {
            let p = (prior_counts[i.idx()] as f64 / n).max(1.0 / n);
            -p.log2()
        })
        .sum();
    Ok(total / items.len() as f64)
}

/// Gini coefficient of nonnegative counts (zero counts included).
pub fn gini(counts: &[f64]) -> Result<f64> {
    let total: f64 = counts.iter().sum();
    if counts.is_empty() || !(total > 0.0) {
        return Err(Error::Empty("gini: no positive counts"));
    }
    let mut x = counts.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    // Σ_i Σ_j |x_i − x_j| = 2 Σ_i (2i − n − 1) x_(i) over ascending order
    let weighted: f64 = x
        .iter()
        .enumerate()
        .map(|(i, v)| (2.0 * (i as f64 + 1.0) - n - 1.0) * v)
        .sum();
    Ok(weighted / (n * total))
}

/// Average ranks (1-based) with ties sharing their mean rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && xs[idx[end]] == xs[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &j in &idx[start..end] {
            ranks[j] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Contract(format!(
            "spearman needs two equal-length inputs of size >= 2, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
        .ok_or_else(|| Error::Numerical("spearman: zero rank variance".into()))
}

/// RMSE of model predictions against every entry of a noiseless snapshot.
pub fn population_rmse(model: &dyn Recommender, truth: Option<&RatingMatrix>) -> Result<f64> {
    let truth = truth.ok_or(Error::NoSnapshot)?;
    let mut se = 0.0;
    for u in 0..truth.n_users() {
        let user = UserId::from(u);
        let pred = model.score_items(user);
        for (p, t) in pred.iter().zip(truth.row(user)) {
            se += (p - t) * (p - t);
        }
    }
    let n = (truth.n_users() * truth.n_items()) as f64;
    if n == 0.0 {
        return Err(Error::Empty("population rmse: empty snapshot"));
    }
    Ok((se / n).sqrt())
}

/// Mean and 95% normal half-width `1.96·sd/√n`; the half-width is `None` for n < 2.
pub fn mean_ci(values: &[f64]) -> Option<(f64, Option<f64>)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return Some((mean, None));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Some((mean, Some(1.96 * var.sqrt() / n.sqrt())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn list(entries: &[(u32, f64, f64)]) -> Vec<(ItemId, f64, f64)> {
        entries.iter().map(|&(i, p, t)| (ItemId(i), p, t)).collect()
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[(1.0, 1.0), (3.0, 3.0)]).unwrap(), 0.0);
        assert!((rmse(&[(1.0, 5.0), (5.0, 1.0)]).unwrap() - 4.0).abs() < 1e-12);
        assert!(rmse(&[]).is_err());
    }

    #[test]
    fn mean_rating_examples() {
        assert_eq!(mean_rating(&[3.0, 3.0, 3.0]).unwrap(), 3.0);
        assert_eq!(mean_rating(&[1.0, 5.0]).unwrap(), 3.0);
        assert!(mean_rating(&[]).is_err());
    }

    #[test]
    fn ndcg_hand_examples() {
        let perfect = vec![list(&[(0, 3.0, 5.0), (1, 2.0, 4.0), (2, 1.0, 3.0)])];
        assert!((ndcg_at_k(&perfect, 3).unwrap() - 1.0).abs() < 1e-15);
        // predicted order B, A, C
        let swapped = vec![list(&[(0, 2.0, 5.0), (1, 3.0, 4.0), (2, 1.0, 3.0)])];
        let dcg = 4.0 + 5.0 / 3f64.log2() + 3.0 / 2.0;
        let idcg = 5.0 + 4.0 / 3f64.log2() + 3.0 / 2.0;
        let got = ndcg_at_k(&swapped, 3).unwrap();
        assert!((got - dcg / idcg).abs() < 1e-12);
        assert!((got - 0.95910).abs() < 1e-5);
        let two = vec![list(&[(0, 1.0, 5.0), (1, 2.0, 1.0)]), list(&[(7, 1.0, 4.0)])];
        assert!((ndcg_at_k(&two, 2).unwrap() - 0.73783).abs() < 1e-5);
        assert!(ndcg_at_k(&[list(&[(0, 1.0, 5.0)])], 2).is_err());
    }

    #[test]
    fn coverage_examples() {
        assert_eq!(coverage(&[ItemId(1), ItemId(2), ItemId(1)]), 2);
        assert_eq!(coverage(&[]), 0);
        let all: Vec<ItemId> = (0..200).map(ItemId).collect();
        assert_eq!(coverage(&all), 200);
    }

    #[test]
    fn novelty_examples() {
        assert_eq!(novelty(&[ItemId(0)], &[10], 10).unwrap(), 0.0);
        assert!((novelty(&[ItemId(0), ItemId(1)], &[5, 5], 10).unwrap() - 1.0).abs() < 1e-15);
        assert!((novelty(&[ItemId(0)], &[0], 1024).unwrap() - 10.0).abs() < 1e-12);
        assert!(novelty(&[], &[0], 4).is_err());
    }

    fn gini_double_sum(x: &[f64]) -> f64 {
        let n = x.len() as f64;
        let s: f64 = x.iter().sum();
        let mut d = 0.0;
        for a in x {
            for b in x {
                d += (a - b).abs();
            }
        }
        d / (2.0 * n * s)
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[1.0; 4]).unwrap(), 0.0);
        assert!((gini(&[0.0, 0.0, 0.0, 4.0]).unwrap() - 0.75).abs() < 1e-12);
        assert!(gini(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-12);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(spearman(&[1.0], &[1.0]).is_err());
        assert_eq!(average_ranks(&[2.0, 1.0, 2.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn ci_examples() {
        assert_eq!(mean_ci(&[3.0; 4]), Some((3.0, Some(0.0))));
        let (m, h) = mean_ci(&[2.0, 4.0]).unwrap();
        assert_eq!(m, 3.0);
        assert!((h.unwrap() - 1.96).abs() < 1e-12);
        assert_eq!(mean_ci(&[5.0]), Some((5.0, None)));
    }

    #[test]
    fn rmse_recovers_noise_scale() {
        use crate::rng::RngSeed;
        use rand_distr::{Distribution, Normal};
        let mut rng = RngSeed::new(11).stream();
        let noise = Normal::new(0.0, 0.7).unwrap();
        let pairs: Vec<(f64, f64)> = (0..100_000)
            .map(|k| {
                let t = (k % 5) as f64 + 1.0;
                (t, t + noise.sample(&mut rng))
            })
            .collect();
        assert!((rmse(&pairs).unwrap() / 0.7 - 1.0).abs() < 0.02);
    }

    struct Table(RatingMatrix);

    impl Recommender for Table {
        fn name(&self) -> &str {
            "table"
        }
        fn fit(
            &mut self,
            _: &crate::types::ObservationSet,
            _: &crate::recs::TrainContext<'_>,
            _: &mut crate::rng::Stream,
        ) -> Result<()> {
            Ok(())
        }
        fn predict(&self, u: UserId, i: ItemId) -> f64 {
            self.0.get(u, i)
        }
        fn n_items(&self) -> usize {
            self.0.n_items()
        }
    }

    #[test]
    fn population_rmse_matches_double_loop() {
        use crate::rng::RngSeed;
        use rand::Rng;
        let mut rng = RngSeed::new(3).stream();
        let truth = RatingMatrix::from_fn(5, 5, |_, _| rng.random_range(1.0..5.0));
        let pred = RatingMatrix::from_fn(5, 5, |_, _| rng.random_range(1.0..5.0));
        let mut se = 0.0;
        for u in 0..5 {
            for i in 0..5 {
                let d = pred.get(UserId::from(u), ItemId::from(i)) - truth.get(UserId::from(u), ItemId::from(i));
                se += d * d;
            }
        }
        let got = population_rmse(&Table(pred), Some(&truth)).unwrap();
        assert!((got - (se / 25.0).sqrt()).abs() < 1e-12);
        assert_eq!(population_rmse(&Table(truth.clone()), Some(&truth)).unwrap(), 0.0);
        let flat = RatingMatrix::from_fn(3, 4, |_, _| 2.5);
        assert_eq!(population_rmse(&Table(flat.clone()), Some(&flat)).unwrap(), 0.0);
        assert!(matches!(population_rmse(&Table(flat), None), Err(Error::NoSnapshot)));
    }

    proptest! {
        #[test]
        fn gini_matches_double_sum(x in proptest::collection::vec(0.0f64..20.0, 1..30)) {
            prop_assume!(x.iter().sum::<f64>() > 0.0);
            let g = gini(&x).unwrap();
            prop_assert!((g - gini_double_sum(&x)).abs() < 1e-12);
            prop_assert!((0.0..1.0).contains(&g));
            let mut y = x.clone();
            y.reverse();
            prop_assert!((gini(&y).unwrap() - g).abs() < 1e-12);
        }

        #[test]
        fn rmse_symmetric_and_shift_invariant(
            pairs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..20),
            shift in -3.0f64..3.0,
        ) {
            let a = rmse(&pairs).unwrap();
            let flipped: Vec<_> = pairs.iter().map(|&(p, t)| (t, p)).collect();
            let shifted: Vec<_> = pairs.iter().map(|&(p, t)| (p + shift, t + shift)).collect();
            prop_assert!((rmse(&flipped).unwrap() - a).abs() < 1e-12);
            prop_assert!((rmse(&shifted).unwrap() - a).abs() < 1e-9);
        }

        #[test]
        fn ndcg_bounded_and_monotone_invariant(
            users in proptest::collection::vec(
                proptest::collection::vec((0.0f64..5.0, 0.0f64..5.0), 2..8), 1..5),
            k in 1usize..10,
        ) {
            let lists: Vec<Vec<(ItemId, f64, f64)>> = users.iter()
                .map(|u| u.iter().enumerate().map(|(i, &(p, t))| (ItemId(i as u32), p, t)).collect())
                .collect();
            prop_assume!(lists.iter().any(|l| l.iter().any(|e| e.2 > 0.0)));
            let v = ndcg_at_k(&lists, k).unwrap();
            prop_assert!(v >= 0.0 && v <= 1.0 + 1e-12);
            let warped: Vec<Vec<_>> = lists.iter()
                .map(|l| l.iter().map(|&(i, p, t)| (i, (p * 0.7).exp() + 2.0, t)).collect())
                .collect();
            prop_assert!((ndcg_at_k(&warped, k).unwrap() - v).abs() < 1e-12);
        }

        #[test]
        fn spearman_invariant_under_monotone_maps(
            xs in proptest::collection::vec(-10.0f64..10.0, 3..15),
            ys in proptest::collection::vec(-10.0f64..10.0, 15),
        ) {
            let ys = &ys[..xs.len()];
            if let Ok(r) = spearman(&xs, ys) {
                prop_assert!((-1.0..=1.0).contains(&r));
                let mapped: Vec<f64> = xs.iter().map(|x| x * x * x + 5.0).collect();
                prop_assert!((spearman(&mapped, ys).unwrap() - r).abs() < 1e-12);
            }
        }

        #[test]
        fn novelty_nonnegative(
            counts in proptest::collection::vec(0usize..50, 5),
            picks in proptest::collection::vec(0u32..5, 1..10),
        ) {
            let items: Vec<ItemId> = picks.into_iter().map(ItemId).collect();
            prop_assert!(novelty(&items, &counts, 50).unwrap() >= 0.0);
        }
    }
}
