//! The experiment engine: seed an offline dataset, fit, then alternate
//! recommending, observing and refitting until the rating target is hit.
//!
//! Seeds are paired: every stream that shapes the world (environment state,
//! initial sample, online users) is derived from `(seed, trial)` only, so all
//! recommenders and policies in a study face identical environments. Model
//! and exploration streams additionally carry the recommender and policy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::{build_environment, sample_initial, sample_online_users, EnvSettings, Environment, Slate};
use crate::error::{Error, Result};
use crate::explore::{select_slate, ExplorationPolicy};
use crate::metrics::{self, TimestepRecord};
use crate::dataio::StudyConfig;
use crate::recs::{resolve_params, Params, Recommender, RecommenderFactory, TrainContext};
use crate::rng::RngSeed;
use crate::tuning::{self, FoldScore, SearchResult};
use crate::types::{ObservationSet, RatingMatrix};

/// Initial ratings of the low-data regime.
pub const LOWDATA_INITIAL: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub n_initial: usize,
    pub users_per_step: usize,
    /// Total ratings (initial included) at which a trial stops.
    pub target_total: usize,
    /// Ratings averaged for the final-window summaries.
    pub final_window: usize,
    /// Folds of the offline evaluation on trial 0; 0 disables it.
    pub offline_folds: usize,
    pub ndcg_k: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            n_initial: 100_000,
            users_per_step: 200,
            target_total: 200_000,
            final_window: 1000,
            offline_folds: 5,
            ndcg_k: tuning::DEFAULT_NDCG_K,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordFlags {
    pub population_rmse: bool,
    pub gini: bool,
}

/// One environment × recommender × policy study.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub env: EnvSettings,
    pub recommender: String,
    pub params: Params,
    pub policy: ExplorationPolicy,
    pub schedule: Schedule,
    pub trials: usize,
    pub seed: u64,
    pub record: RecordFlags,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        let s = &self.schedule;
        let bad = |m: String| Err(Error::Config(m));
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if s.n_initial > s.target_total {
            return bad(format!("n_initial {} exceeds target {}", s.n_initial, s.target_total));
        }
        if s.users_per_step == 0 {
            return bad("users_per_step must be >= 1".into());
        }
        if self.env.n_users != 0 && s.users_per_step > self.env.n_users {
            return bad(format!(
                "users_per_step {} exceeds n_users {}",
                s.users_per_step, self.env.n_users
            ));
        }
        if self.env.n_users != 0 && s.target_total > self.env.n_users * self.env.n_items {
            return bad(format!("target {} exceeds the number of user-item pairs", s.target_total));
        }
        if s.offline_folds == 1 {
            return bad("offline_folds must be 0 or >= 2".into());
        }
        Ok(())
    }

    fn trial_seed(&self, trial: usize) -> RngSeed {
        RngSeed::new(self.seed).derive("trial").derive(trial)
    }
}

/// Per-trial outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    /// Offline k-fold metrics on the initial dataset (trial 0 only).
    pub offline: Option<Vec<FoldScore>>,
    pub records: Vec<TimestepRecord>,
    /// Mean of every rating observed online.
    pub mean_rating: Option<f64>,
    /// Mean of the last `final_window` online ratings.
    pub final_mean_rating: Option<f64>,
    /// RMSE of the last `final_window` online ratings against the
    /// predictions made when they were recommended.
    pub final_rmse: Option<f64>,
    /// Population RMSE after the last refit.
    pub final_population_rmse: Option<f64>,
    pub observations: ObservationSet,
}

fn snapshot_if(env: &dyn Environment, wanted: bool) -> Result<Option<RatingMatrix>> {
    if !wanted {
        return Ok(None);
    }
    env.true_rating_snapshot().map(Some).ok_or(Error::NoSnapshot)
}

fn refit(
    model: &mut dyn Recommender,
    env: &dyn Environment,
    data: &ObservationSet,
    rng: &mut crate::rng::Stream,
) -> Result<()> {
    let truth = snapshot_if(env, model.needs_truth())?;
    let ctx = TrainContext {
        n_users: env.n_users(),
        n_items: env.n_items(),
        range: env.rating_range(),
        truth: truth.as_ref(),
    };
    model.fit(data, &ctx, rng)
}

/// Runs one trial. Errors are wrapped with the trial index.
pub fn run_trial(config: &ExperimentConfig, trial: usize, factory: &dyn RecommenderFactory) -> Result<TrialResult> {
    run_trial_inner(config, trial, factory).map_err(|e| Error::Trial {
        trial,
        source: Box::new(e),
    })
}

/// The environment and offline dataset of a trial, exactly as the trial
/// itself would see them.
pub fn initial_dataset(config: &ExperimentConfig, trial: usize) -> Result<(Box<dyn Environment>, ObservationSet)> {
    let seed = config.trial_seed(trial);
    let mut env = build_environment(&config.env, &seed.derive("env"))?;
    if config.schedule.users_per_step > env.n_users() {
        return Err(Error::Config(format!(
            "users_per_step {} exceeds n_users {}",
            config.schedule.users_per_step,
            env.n_users()
        )));
    }
    let omega = sample_initial(env.as_mut(), config.schedule.n_initial, &mut seed.derive("initial").stream())?;
    Ok((env, omega))
}

/// Noiseless ratings for models that read them, `None` otherwise.
pub fn context_truth(env: &dyn Environment, model: &dyn Recommender) -> Result<Option<RatingMatrix>> {
    snapshot_if(env, model.needs_truth())
}

fn run_trial_inner(config: &ExperimentConfig, trial: usize, factory: &dyn RecommenderFactory) -> Result<TrialResult> {
    config.validate()?;
    let sched = &config.schedule;
    let seed = config.trial_seed(trial);
    let (mut env, mut omega) = initial_dataset(config, trial)?;
    let env = env.as_mut();

    let model_seed = seed.derive("rec").derive(config.recommender.as_str());
    let offline = if trial == 0 && sched.offline_folds >= 2 {
        let truth = snapshot_if(env, factory.build(&config.recommender, &config.params)?.needs_truth())?;
        let ctx = TrainContext {
            n_users: env.n_users(),
            n_items: env.n_items(),
            range: env.rating_range(),
            truth: truth.as_ref(),
        };
        Some(tuning::cross_validate(
            factory,
            &config.recommender,
            &config.params,
            &omega,
            &ctx,
            sched.offline_folds,
            &seed.derive("offline"),
            sched.ndcg_k,
        )?)
    } else {
        None
    };

    let mut rec_rng = model_seed.stream();
    let mut explore_rng = seed
        .derive("explore")
        .derive(config.recommender.as_str())
        .derive(config.policy.to_string())
        .stream();
    let mut user_rng = seed.derive("users").stream();

    let mut model = factory.build(&config.recommender, &config.params)?;
    refit(model.as_mut(), env, &omega, &mut rec_rng)?;

    let n_items = env.n_items();
    let n_users = env.n_users();
    let slate_size = env.slate_size();
    let mut records = Vec::new();
    // (observed rating, prediction at recommendation time) of online ratings
    let mut online: Vec<(f64, f64)> = Vec::new();
    let mut timestep = 0u32;
    while omega.len() < sched.target_total {
        timestep += 1;
        let count = sched.users_per_step.min(sched.target_total - omega.len());
        let users = sample_online_users(env, count, &mut user_rng)?;
        let mut slates = Vec::with_capacity(users.len());
        for &user in &users {
            let scores = model.score_items(user);
            let rated = omega.rated_mask(user);
            let items = select_slate(&config.policy, user, &scores, &rated, slate_size, &mut explore_rng)?;
            let item_scores = items.iter().map(|i| scores[i.idx()]).collect();
            slates.push(Slate {
                user,
                items,
                scores: item_scores,
            });
        }
        let gamma = env.online_step(&slates, timestep)?;
        if gamma.len() != users.len() {
            return Err(Error::Contract(format!(
                "environment returned {} ratings for {} users",
                gamma.len(),
                users.len()
            )));
        }
        let prior_counts = omega.item_counts();
        let mut pairs = Vec::with_capacity(gamma.len());
        for (o, slate) in gamma.iter().zip(&slates) {
            if o.user != slate.user {
                return Err(Error::Contract("environment reordered users".into()));
            }
            let pos = slate.items.iter().position(|&i| i == o.item).ok_or_else(|| {
                Error::Contract(format!("user {} rated item {} outside the slate", o.user, o.item))
            })?;
            if omega.contains(o.user, o.item) {
                return Err(Error::Contract(format!("user {} was recommended item {} twice", o.user, o.item)));
            }
            pairs.push((slate.scores[pos], o.rating));
        }
        let ratings: Vec<f64> = gamma.iter().map(|o| o.rating).collect();
        let items: Vec<_> = gamma.iter().map(|o| o.item).collect();
        let observed_rmse = if model.predicts_ratings() {
            Some(metrics::rmse(&pairs)?)
        } else {
            None
        };
        let gini = if config.record.gini {
            let mut counts = vec![0.0; n_items];
            for i in &items {
                counts[i.idx()] += 1.0;
            }
            Some(metrics::gini(&counts)?)
        } else {
            None
        };
        let record = TimestepRecord {
            timestep,
            mean_rating: metrics::mean_rating(&ratings)?,
            observed_rmse,
            coverage: metrics::coverage(&items),
            novelty: metrics::novelty(&items, &prior_counts, n_users)?,
            gini,
            population_rmse: None,
            n_new_ratings: gamma.len(),
            n_ratings_total: omega.len() + gamma.len(),
        };
        online.extend(pairs.iter().map(|&(p, r)| (r, p)));
        omega.extend(gamma)?;
        refit(model.as_mut(), env, &omega, &mut rec_rng)?;
        let mut record = record;
        if config.record.population_rmse {
            record.population_rmse = Some(population_rmse(model.as_ref(), env)?);
        }
        log::debug!(
            "{} {} {} trial {trial} t={timestep} mean={:.4} total={}",
            config.env.name,
            config.recommender,
            config.policy,
            record.mean_rating,
            record.n_ratings_total
        );
        records.push(record);
    }
    if omega.len() != sched.target_total {
        return Err(Error::Contract(format!(
            "trial ended with {} ratings, target {}",
            omega.len(),
            sched.target_total
        )));
    }

    let mean_rating = mean_of(online.iter().map(|p| p.0));
    let window = &online[online.len().saturating_sub(sched.final_window)..];
    let final_mean_rating = mean_of(window.iter().map(|p| p.0));
    let final_rmse = if model.predicts_ratings() && !window.is_empty() {
        let swapped: Vec<(f64, f64)> = window.iter().map(|&(r, p)| (p, r)).collect();
        Some(metrics::rmse(&swapped)?)
    } else {
        None
    };
    let final_population_rmse = if config.record.population_rmse {
        Some(population_rmse(model.as_ref(), env)?)
    } else {
        None
    };
    Ok(TrialResult {
        trial,
        offline,
        records,
        mean_rating,
        final_mean_rating,
        final_rmse,
        final_population_rmse,
        observations: omega,
    })
}

fn population_rmse(model: &dyn Recommender, env: &dyn Environment) -> Result<f64> {
    metrics::population_rmse(model, env.true_rating_snapshot().as_ref())
}

fn mean_of(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for x in xs {
        sum += x;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Mean and 95% half-width `1.96·sd/√n`; `None` below two values.
pub fn aggregate_ci(values: &[f64]) -> Option<(f64, f64)> {
    match metrics::mean_ci(values)? {
        (m, Some(h)) => Some((m, h)),
        (_, None) => None,
    }
}

/// Mean over trials with an optional half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci: Option<f64>,
    pub n: usize,
}

impl Estimate {
    pub fn from_values(values: &[f64]) -> Option<Estimate> {
        let (mean, ci) = metrics::mean_ci(values)?;
        Some(Estimate {
            mean,
            ci,
            n: values.len(),
        })
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.ci.unwrap_or(0.0)
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.ci.unwrap_or(0.0)
    }

    /// True when the two 95% intervals share at least one point.
    pub fn overlaps(&self, other: &Estimate) -> bool {
        self.lower() <= other.upper() && other.lower() <= self.upper()
    }
}

/// Per-timestep cross-trial aggregate.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub timestep: u32,
    pub mean_rating: Option<Estimate>,
    pub observed_rmse: Option<Estimate>,
    pub coverage: Option<Estimate>,
    pub novelty: Option<Estimate>,
    pub gini: Option<Estimate>,
    pub population_rmse: Option<Estimate>,
}

/// Cross-trial summary of one study.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub mean_rating: Option<Estimate>,
    pub offline_rmse: Option<Estimate>,
    pub offline_ndcg: Option<Estimate>,
    pub final_mean_rating: Option<Estimate>,
    pub final_rmse: Option<Estimate>,
    pub final_population_rmse: Option<Estimate>,
    pub mean_coverage: Option<Estimate>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialResult>,
}

fn collect(values: impl Iterator<Item = Option<f64>>) -> Option<Estimate> {
    let v: Vec<f64> = values.flatten().collect();
    Estimate::from_values(&v)
}

impl ExperimentResult {
    pub fn offline(&self) -> Option<&[FoldScore]> {
        self.trials.iter().find_map(|t| t.offline.as_deref())
    }

    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let n_steps = self.trials.iter().map(|t| t.records.len()).max().unwrap_or(0);
        (0..n_steps)
            .map(|k| {
                let at = |f: &dyn Fn(&TimestepRecord) -> Option<f64>| {
                    collect(self.trials.iter().map(|t| t.records.get(k).and_then(f)))
                };
                AggregateRow {
                    timestep: k as u32 + 1,
                    mean_rating: at(&|r| Some(r.mean_rating)),
                    observed_rmse: at(&|r| r.observed_rmse),
                    coverage: at(&|r| Some(r.coverage as f64)),
                    novelty: at(&|r| Some(r.novelty)),
                    gini: at(&|r| r.gini),
                    population_rmse: at(&|r| r.population_rmse),
                }
            })
            .collect()
    }

    pub fn summary(&self) -> Summary {
        let offline = self.offline().unwrap_or(&[]);
        let per_trial = |f: &dyn Fn(&TrialResult) -> Option<f64>| collect(self.trials.iter().map(f));
        Summary {
            mean_rating: per_trial(&|t| t.mean_rating),
            offline_rmse: collect(offline.iter().map(|f| f.rmse)),
            offline_ndcg: collect(offline.iter().map(|f| f.ndcg)),
            final_mean_rating: per_trial(&|t| t.final_mean_rating),
            final_rmse: per_trial(&|t| t.final_rmse),
            final_population_rmse: per_trial(&|t| t.final_population_rmse),
            mean_coverage: per_trial(&|t| mean_of(t.records.iter().map(|r| r.coverage as f64))),
        }
    }
}

/// Runs every trial (in parallel on the current rayon pool) and keeps them
/// in trial order. The first failing trial fails the experiment.
pub fn run_experiment(config: &ExperimentConfig, factory: &dyn RecommenderFactory) -> Result<ExperimentResult> {
    config.validate()?;
    let trials = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, t, factory))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        config: config.clone(),
        trials,
    })
}

/// The low-data study: one run per policy, population RMSE recorded,
/// hyperparameters taken unchanged from `config`.
pub fn lowdata_experiment(
    config: &ExperimentConfig,
    policies: &[ExplorationPolicy],
    factory: &dyn RecommenderFactory,
) -> Result<Vec<ExperimentResult>> {
    policies
        .iter()
        .map(|&policy| {
            let mut c = config.clone();
            c.policy = policy;
            c.record.population_rmse = true;
            run_experiment(&c, factory)
        })
        .collect()
}

/// Grid searches of every recommender in a study plus the study with the
/// winning hyperparameters filled in.
#[derive(Clone, Debug)]
pub struct TuneOutcome {
    pub searches: Vec<SearchResult>,
    pub best: StudyConfig,
}

/// Tunes each recommender on trial 0's offline dataset. Parameters missing
/// from a grid keep their configured values.
pub fn tune_study(study: &StudyConfig, factory: &dyn RecommenderFactory) -> Result<TuneOutcome> {
    let experiments = study.experiments();
    let first = experiments.first().ok_or(Error::Empty("study has no experiments"))?;
    let (env, data) = initial_dataset(first, 0)?;
    let mut searches = Vec::new();
    let mut best = study.clone();
    for rec in &study.recommenders {
        let mut grid = study.grids[rec].clone();
        for (k, v) in &study.rec_params[rec] {
            grid.axes.entry(k.clone()).or_insert_with(|| vec![v.clone()]);
        }
        log::info!("tuning {rec}: {} configs x {} folds", grid.len(), study.tune_folds);
        let probe = factory.build(rec, &study.rec_params[rec])?;
        let truth = context_truth(env.as_ref(), probe.as_ref())?;
        let ctx = TrainContext {
            n_users: env.n_users(),
            n_items: env.n_items(),
            range: env.rating_range(),
            truth: truth.as_ref(),
        };
        let seed = RngSeed::new(study.seed).derive("tune").derive(rec.as_str());
        let found = tuning::grid_search(factory, rec, &grid, &data, &ctx, study.tune_folds, &seed)?;
        best.rec_params
            .insert(rec.clone(), resolve_params(&factory.schema(rec)?, &found.best)?);
        searches.push(found);
    }
    Ok(TuneOutcome { searches, best })
}

/// Runs every (recommender, policy) experiment of a study in order.
pub fn run_study(study: &StudyConfig, factory: &dyn RecommenderFactory) -> Result<Vec<ExperimentResult>> {
    study
        .experiments()
        .iter()
        .map(|exp| {
            log::info!("running {} / {} / {} ({} trials)", exp.env.name, exp.recommender, exp.policy, exp.trials);
            run_experiment(exp, factory)
        })
        .collect()
}

/// Policies of the low-data study.
pub fn lowdata_policies() -> Vec<ExplorationPolicy> {
    ["greedy", "eps:0.1", "eps:0.2", "ts:8", "ts:20"]
        .iter()
        .map(|s| s.parse().expect("valid policy"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvSettings;
    use crate::recs::BuiltinFactory;
    use crate::types::ItemId;

    fn small(env: &str, rec: &str) -> ExperimentConfig {
        let mut e = EnvSettings::defaults(env).unwrap();
        e.n_users = 30;
        e.n_items = 40;
        if e.kind().is_topics() {
            e.topics = 4;
        }
        ExperimentConfig {
            experiment_id: "t".into(),
            env: e,
            recommender: rec.into(),
            params: Params::new(),
            policy: ExplorationPolicy::Greedy,
            schedule: Schedule {
                n_initial: 200,
                users_per_step: 10,
                target_total: 295,
                final_window: 20,
                offline_folds: 3,
                ndcg_k: 20,
            },
            trials: 2,
            seed: 4,
            record: RecordFlags {
                population_rmse: true,
                gini: true,
            },
        }
    }

    #[test]
    fn schedule_hits_target_exactly() {
        let c = small("topics-static", "toppop");
        let t = run_trial(&c, 0, &BuiltinFactory).unwrap();
        assert_eq!(t.records.len(), 10);
        assert_eq!(t.records.last().unwrap().n_new_ratings, 5);
        let online: usize = t.records.iter().map(|r| r.n_new_ratings).sum();
        assert_eq!(online + 200, 295);
        assert_eq!(t.observations.len(), 295);
        for (k, r) in t.records.iter().enumerate() {
            assert_eq!(r.timestep as usize, k + 1);
            assert!(r.coverage <= r.n_new_ratings);
        }
        assert_eq!(t.offline.as_ref().unwrap().len(), 3);
        assert!(run_trial(&c, 1, &BuiltinFactory).unwrap().offline.is_none());
    }

    #[test]
    fn default_schedule_has_500_steps() {
        let s = Schedule::default();
        assert_eq!((s.target_total - s.n_initial) / s.users_per_step, 500);
        assert_eq!((s.target_total - s.n_initial) % s.users_per_step, 0);
    }

    #[test]
    fn zero_online_ratings() {
        let mut c = small("topics-static", "mf");
        c.schedule.target_total = c.schedule.n_initial;
        let t = run_trial(&c, 0, &BuiltinFactory).unwrap();
        assert!(t.records.is_empty());
        assert!(t.offline.is_some());
        assert_eq!(t.mean_rating, None);
    }

    #[test]
    fn noiseless_oracle_takes_best_unrated_preference() {
        let mut c = small("topics-static", "oracle");
        c.env.noise_std = 0.0;
        c.trials = 1;
        let a = run_trial(&c, 0, &BuiltinFactory).unwrap();
        // rebuild the world to read preferences at each step
        let seed = c.trial_seed(0);
        let env = build_environment(&c.env, &seed.derive("env")).unwrap();
        let truth = env.true_rating_snapshot().unwrap();
        let mut seen = ObservationSet::new(30, 40);
        let initial = a.observations.iter().filter(|o| o.timestep == 0);
        seen.extend(initial.copied()).unwrap();
        for r in &a.records {
            let step: Vec<_> = a.observations.iter().filter(|o| o.timestep == r.timestep).copied().collect();
            let mut best = Vec::new();
            for o in &step {
                let row = truth.row(o.user);
                let m = (0..40)
                    .filter(|&i| !seen.contains(o.user, ItemId::from(i)))
                    .map(|i| row[i])
                    .fold(f64::NEG_INFINITY, f64::max);
                best.push(m);
                assert_eq!(o.rating, truth.get(o.user, o.item));
            }
            let want = best.iter().sum::<f64>() / best.len() as f64;
            assert!((r.mean_rating - want).abs() < 1e-12);
            seen.extend(step).unwrap();
        }
    }

    #[test]
    fn static_and_frozen_dynamic_agree() {
        let a = small("topics-static", "mf");
        let mut b = a.clone();
        b.env.name = "topics-dynamic".into();
        let ra = run_trial(&a, 1, &BuiltinFactory).unwrap();
        let rb = run_trial(&b, 1, &BuiltinFactory).unwrap();
        assert_eq!(ra.observations, rb.observations);
        assert_eq!(ra.records, rb.records);
    }

    #[test]
    fn recommenders_share_the_offline_dataset() {
        let a = run_trial(&small("latent-static", "toppop"), 1, &BuiltinFactory).unwrap();
        let b = run_trial(&small("latent-static", "itemknn"), 1, &BuiltinFactory).unwrap();
        let init = |t: &TrialResult| -> Vec<_> { t.observations.iter().filter(|o| o.timestep == 0).copied().collect() };
        assert_eq!(init(&a), init(&b));
    }

    #[test]
    fn choice_environments_run() {
        for env in ["latent-score", "beta-rank"] {
            let mut c = small(env, "mf");
            c.policy = "eps:0.1".parse().unwrap();
            let t = run_trial(&c, 0, &BuiltinFactory).unwrap();
            assert_eq!(t.observations.len(), 295);
        }
    }

    #[test]
    fn ease_has_no_rmse() {
        let c = small("topics-static", "ease");
        let t = run_trial(&c, 0, &BuiltinFactory).unwrap();
        assert!(t.records.iter().all(|r| r.observed_rmse.is_none()));
        assert!(t.final_rmse.is_none());
        assert!(t.offline.unwrap().iter().all(|f| f.rmse.is_none()));
    }

    #[test]
    fn experiment_is_deterministic() {
        let c = small("topics-dynamic", "random");
        let a = run_experiment(&c, &BuiltinFactory).unwrap();
        let b = run_experiment(&c, &BuiltinFactory).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trials.len(), 2);
        assert_ne!(a.trials[0].observations, a.trials[1].observations);
    }

    #[test]
    fn exhaustion_aborts_the_trial() {
        let mut c = small("topics-static", "toppop");
        c.env.n_users = 2;
        c.env.n_items = 3;
        c.schedule = Schedule {
            n_initial: 0,
            users_per_step: 2,
            target_total: 6,
            final_window: 5,
            offline_folds: 0,
            ndcg_k: 20,
        };
        run_trial(&c, 0, &BuiltinFactory).unwrap();
        c.schedule.users_per_step = 1;
        c.schedule.target_total = 6;
        // one user may be drawn four times before the target is reached
        let outcomes: Vec<bool> = (0..20).map(|t| run_trial(&c, t, &BuiltinFactory).is_ok()).collect();
        assert!(outcomes.iter().any(|ok| !ok));
        let err = (0..20).find_map(|t| run_trial(&c, t, &BuiltinFactory).err()).unwrap();
        assert!(matches!(err, Error::Trial { .. }));
        assert!(err.to_string().contains("no unrated items"), "{err}");
    }

    #[test]
    fn ci_examples() {
        assert_eq!(aggregate_ci(&[3.0; 4]), Some((3.0, 0.0)));
        let (m, h) = aggregate_ci(&[2.0, 4.0]).unwrap();
        assert_eq!(m, 3.0);
        assert!((h - 1.96).abs() < 1e-12);
        assert_eq!(aggregate_ci(&[1.0]), None);
    }

    #[test]
    fn ci_shrinks_like_inverse_sqrt() {
        use rand_distr::{Distribution, Normal};
        let mut rng = RngSeed::new(1).stream();
        let d = Normal::new(0.0, 1.0).unwrap();
        let mean_width = |n: usize, rng: &mut crate::rng::Stream| {
            let reps = 400;
            (0..reps)
                .map(|_| {
                    let v: Vec<f64> = (0..n).map(|_| d.sample(rng)).collect();
                    aggregate_ci(&v).unwrap().1
                })
                .sum::<f64>()
                / reps as f64
        };
        let w25 = mean_width(25, &mut rng);
        let w100 = mean_width(100, &mut rng);
        assert!((w25 / w100 - 2.0).abs() < 0.1, "{w25} {w100}");
    }

    #[test]
    fn summary_and_aggregate_shapes() {
        let c = small("topics-static", "toppop");
        let r = run_experiment(&c, &BuiltinFactory).unwrap();
        let agg = r.aggregate();
        assert_eq!(agg.len(), 10);
        assert!(agg[0].mean_rating.unwrap().ci.is_some());
        let s = r.summary();
        assert_eq!(s.offline_rmse.unwrap().n, 3);
        assert_eq!(s.mean_rating.unwrap().n, 2);
        let mut single = c.clone();
        single.trials = 1;
        let r1 = run_experiment(&single, &BuiltinFactory).unwrap();
        assert!(r1.summary().mean_rating.unwrap().ci.is_none());
    }

    #[test]
    fn lowdata_greedy_matches_plain_run() {
        let mut c = small("topics-static-lowdata", "mf");
        c.schedule.n_initial = 30;
        c.schedule.target_total = 100;
        let low = lowdata_experiment(&c, &[ExplorationPolicy::Greedy], &BuiltinFactory).unwrap();
        let plain = run_experiment(&c, &BuiltinFactory).unwrap();
        assert_eq!(low[0].trials, plain.trials);
        assert_eq!(lowdata_policies().len(), 5);
    }

    #[test]
    fn final_window_uses_the_last_ratings() {
        let c = small("topics-static", "toppop");
        let t = run_trial(&c, 0, &BuiltinFactory).unwrap();
        let mut online: Vec<_> = t.observations.iter().filter(|o| o.timestep > 0).collect();
        online.sort_by_key(|o| o.timestep);
        let tail: Vec<f64> = online[online.len() - 20..].iter().map(|o| o.rating).collect();
        let want = tail.iter().sum::<f64>() / 20.0;
        assert!((t.final_mean_rating.unwrap() - want).abs() < 1e-12);
    }
}
