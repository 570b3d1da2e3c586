//! Named environments, their defaults, and construction.

use serde::{Deserialize, Serialize};

use super::{BetaRankEnv, Environment, LatentEnv, LatentScoreEnv, TopicsEnv, TopicsParams};
use crate::error::{Error, Result};
use crate::recs::{BuiltinFactory, MfParams, ParamValue, TrainContext};
use crate::rng::RngSeed;
use crate::tuning::{grid_search, Grid, Objective};
use crate::types::RatingRange;

/// Names accepted by [`EnvKind::parse`].
pub const ENVIRONMENTS: &[&str] = &[
    "topics-static",
    "topics-dynamic",
    "latent-static",
    "ml-100k",
    "latent-score",
    "beta-rank",
    "topics-static-lowdata",
    "topics-dynamic-lowdata",
    "latent-static-lowdata",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvKind {
    TopicsStatic,
    TopicsDynamic,
    LatentStatic,
    Ml100k,
    LatentScore,
    BetaRank,
}

impl EnvKind {
    /// Kind plus whether the name selects the low-data variant.
    pub fn parse(name: &str) -> Result<(EnvKind, bool)> {
        let (base, lowdata) = match name.strip_suffix("-lowdata") {
            Some(b) => (b, true),
            None => (name, false),
        };
        let kind = match base {
            "topics-static" => EnvKind::TopicsStatic,
            "topics-dynamic" => EnvKind::TopicsDynamic,
            "latent-static" => EnvKind::LatentStatic,
            "ml-100k" => EnvKind::Ml100k,
            "latent-score" => EnvKind::LatentScore,
            "beta-rank" => EnvKind::BetaRank,
            _ => {
                return Err(Error::UnknownName {
                    kind: "environment",
                    name: name.to_string(),
                    valid: ENVIRONMENTS.join(", "),
                })
            }
        };
        if lowdata && !ENVIRONMENTS.contains(&name) {
            return Err(Error::UnknownName {
                kind: "environment",
                name: name.to_string(),
                valid: ENVIRONMENTS.join(", "),
            });
        }
        Ok((kind, lowdata))
    }

    pub fn is_topics(self) -> bool {
        matches!(self, EnvKind::TopicsStatic | EnvKind::TopicsDynamic)
    }

    pub fn is_choice(self) -> bool {
        matches!(self, EnvKind::LatentScore | EnvKind::BetaRank)
    }
}

/// Fully resolved environment parameters. Fields that do not apply to an
/// environment keep their defaults and are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSettings {
    pub name: String,
    /// 0 for `ml-100k` means "take the dataset's shape".
    pub n_users: usize,
    pub n_items: usize,
    pub noise_std: f64,
    pub topics: usize,
    pub affinity: f64,
    pub memory: usize,
    pub boredom_threshold: usize,
    pub boredom_penalty: f64,
    pub latent_dim: usize,
    pub slate_size: usize,
    pub known_fraction: f64,
    pub beta_variance: f64,
    pub known_variance: f64,
    pub dirichlet_concentration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_path: Option<String>,
    /// Folds for tuning the `ml-100k` factorization; 0 skips tuning.
    pub dataset_folds: usize,
}

/// User-supplied overrides; everything optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvOverrides {
    pub n_users: Option<usize>,
    pub n_items: Option<usize>,
    pub noise_std: Option<f64>,
    pub topics: Option<usize>,
    pub affinity: Option<f64>,
    pub memory: Option<usize>,
    pub boredom_threshold: Option<usize>,
    pub boredom_penalty: Option<f64>,
    pub latent_dim: Option<usize>,
    pub slate_size: Option<usize>,
    pub known_fraction: Option<f64>,
    pub beta_variance: Option<f64>,
    pub known_variance: Option<f64>,
    pub dirichlet_concentration: Option<f64>,
    pub dataset_path: Option<String>,
    pub dataset_folds: Option<usize>,
}

impl EnvSettings {
    pub fn defaults(name: &str) -> Result<Self> {
        let (kind, _) = EnvKind::parse(name)?;
        let mut s = EnvSettings {
            name: name.to_string(),
            n_users: 1000,
            n_items: 1700,
            noise_std: 0.5,
            topics: 19,
            affinity: 0.0,
            memory: 5,
            boredom_threshold: 3,
            boredom_penalty: 0.0,
            latent_dim: 8,
            slate_size: 1,
            known_fraction: 0.5,
            beta_variance: 1e-5,
            known_variance: 1e-5,
            dirichlet_concentration: 0.7,
            dataset_path: None,
            dataset_folds: 5,
        };
        match kind {
            EnvKind::TopicsDynamic => {
                s.affinity = 0.025;
                s.boredom_penalty = 1.0;
            }
            EnvKind::Ml100k => {
                s.n_users = 0;
                s.n_items = 0;
            }
            EnvKind::LatentScore => {
                s.n_users = 170;
                s.n_items = 100;
                s.slate_size = 10;
            }
            EnvKind::BetaRank => {
                s.n_users = 170;
                s.n_items = 100;
                s.slate_size = 10;
                s.latent_dim = 10;
            }
            EnvKind::TopicsStatic | EnvKind::LatentStatic => {}
        }
        Ok(s)
    }

    pub fn resolve(name: &str, o: &EnvOverrides) -> Result<Self> {
        let mut s = EnvSettings::defaults(name)?;
        macro_rules! apply {
            ($($f:ident),*) => { $( if let Some(v) = o.$f.clone() { s.$f = v; } )* };
        }
        apply!(
            n_users, n_items, noise_std, topics, affinity, memory, boredom_threshold, boredom_penalty,
            latent_dim, slate_size, known_fraction, beta_variance, dirichlet_concentration, dataset_folds
        );
        // known utility variance follows the observation variance unless set
        s.known_variance = o.known_variance.unwrap_or(s.beta_variance);
        if o.dataset_path.is_some() {
            s.dataset_path = o.dataset_path.clone();
        }
        s.validate()?;
        Ok(s)
    }

    pub fn kind(&self) -> EnvKind {
        EnvKind::parse(&self.name).expect("validated name").0
    }

    pub fn is_lowdata(&self) -> bool {
        self.name.ends_with("-lowdata")
    }

    pub fn validate(&self) -> Result<()> {
        let kind = EnvKind::parse(&self.name)?.0;
        let bad = |m: String| Err(Error::Config(format!("env '{}': {m}", self.name)));
        if kind == EnvKind::TopicsStatic && (self.affinity != 0.0 || self.boredom_penalty != 0.0) {
            return bad("topics-static has no dynamics; use topics-dynamic to set affinity or boredom_penalty".into());
        }
        if kind.is_choice() {
            if self.slate_size < 1 {
                return bad("slate_size must be >= 1".into());
            }
        } else if self.slate_size != 1 {
            return bad(format!("consume-directly environments need slate_size = 1, got {}", self.slate_size));
        }
        if kind == EnvKind::Ml100k && self.dataset_path.is_none() {
            return bad("dataset_path is required".into());
        }
        if kind != EnvKind::Ml100k && (self.n_users == 0 || self.n_items == 0) {
            return bad("n_users and n_items must be positive".into());
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return bad("noise_std must be finite and >= 0".into());
        }
        Ok(())
    }

    pub fn rating_range(&self) -> RatingRange {
        match self.kind() {
            EnvKind::BetaRank => RatingRange::UNIT,
            _ => RatingRange::STARS,
        }
    }
}

/// Default hyperparameters for fitting the `ml-100k` ground truth.
pub fn dataset_mf_params(dim: usize) -> MfParams {
    MfParams {
        dim,
        lr: 0.01,
        reg: 0.05,
        epochs: 50,
        init_std: 0.1,
    }
}

fn build_ml100k(s: &EnvSettings, seed: &RngSeed) -> Result<LatentEnv> {
    let path = s.dataset_path.as_deref().expect("validated");
    let data = crate::dataio::load_ml100k(path)?.observations;
    if (s.n_users != 0 && s.n_users != data.n_users()) || (s.n_items != 0 && s.n_items != data.n_items()) {
        return Err(Error::Config(format!(
            "dataset has {}x{} users x items, config expects {}x{}",
            data.n_users(),
            data.n_items(),
            s.n_users,
            s.n_items
        )));
    }
    let mut fit = dataset_mf_params(s.latent_dim);
    let fit_seed = RngSeed::new(seed.base).derive("ml-100k-fit");
    if s.dataset_folds >= 2 {
        let mut grid = Grid::new(Objective::Rmse);
        grid.axis("dim", vec![ParamValue::Int(s.latent_dim as i64)]);
        grid.axis("lr", vec![ParamValue::Real(fit.lr)]);
        grid.axis("epochs", vec![ParamValue::Int(fit.epochs as i64)]);
        grid.axis("reg", [0.02, 0.05, 0.1].map(ParamValue::Real).to_vec());
        let ctx = TrainContext {
            n_users: data.n_users(),
            n_items: data.n_items(),
            range: RatingRange::STARS,
            truth: None,
        };
        let found = grid_search(&BuiltinFactory, "mf", &grid, &data, &ctx, s.dataset_folds, &fit_seed)?;
        fit = MfParams::from_params(&crate::recs::resolve_params(&MfParams::schema(), &found.best)?)?;
    }
    let state = super::init_latent_from_dataset(&data, s.latent_dim, &fit, s.noise_std, &fit_seed)?;
    LatentEnv::from_state(&s.name, state, seed)
}

/// Builds and resets an environment. `seed` drives latent state and noise.
pub fn build_environment(s: &EnvSettings, seed: &RngSeed) -> Result<Box<dyn Environment>> {
    s.validate()?;
    Ok(match s.kind() {
        EnvKind::TopicsStatic | EnvKind::TopicsDynamic => {
            let p = TopicsParams {
                n_users: s.n_users,
                n_items: s.n_items,
                n_topics: s.topics,
                noise_std: s.noise_std,
                affinity: s.affinity,
                memory: s.memory,
                threshold: s.boredom_threshold,
                penalty: s.boredom_penalty,
            };
            Box::new(TopicsEnv::new(&s.name, p, seed)?)
        }
        EnvKind::LatentStatic => Box::new(LatentEnv::generated(
            &s.name,
            s.n_users,
            s.n_items,
            s.latent_dim,
            s.noise_std,
            seed,
        )?),
        EnvKind::Ml100k => Box::new(build_ml100k(s, seed)?),
        EnvKind::LatentScore => Box::new(LatentScoreEnv::new(
            &s.name,
            s.n_users,
            s.n_items,
            s.latent_dim,
            s.noise_std,
            s.known_fraction,
            s.slate_size,
            seed,
        )?),
        EnvKind::BetaRank => Box::new(BetaRankEnv::new(
            &s.name,
            s.n_users,
            s.n_items,
            s.latent_dim,
            s.dirichlet_concentration,
            s.beta_variance,
            s.known_variance,
            s.slate_size,
            seed,
        )?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_parse() {
        assert_eq!(EnvKind::parse("topics-static").unwrap(), (EnvKind::TopicsStatic, false));
        assert_eq!(EnvKind::parse("topics-static-lowdata").unwrap(), (EnvKind::TopicsStatic, true));
        let err = EnvKind::parse("no-such-env").unwrap_err().to_string();
        assert!(err.contains("topics-dynamic") && err.contains("beta-rank"), "{err}");
        assert!(EnvKind::parse("beta-rank-lowdata").is_err());
    }

    #[test]
    fn defaults_follow_environment() {
        let d = EnvSettings::defaults("topics-dynamic").unwrap();
        assert_eq!((d.n_users, d.n_items, d.topics), (1000, 1700, 19));
        assert_eq!((d.affinity, d.memory, d.boredom_threshold, d.boredom_penalty), (0.025, 5, 3, 1.0));
        let b = EnvSettings::defaults("beta-rank").unwrap();
        assert_eq!((b.n_users, b.n_items, b.slate_size), (170, 100, 10));
        assert_eq!(b.rating_range(), RatingRange::UNIT);
    }

    #[test]
    fn static_topics_reject_dynamics() {
        let o = EnvOverrides {
            affinity: Some(0.1),
            ..Default::default()
        };
        assert!(EnvSettings::resolve("topics-static", &o).is_err());
        let o = EnvOverrides {
            slate_size: Some(3),
            ..Default::default()
        };
        assert!(EnvSettings::resolve("latent-static", &o).is_err());
    }

    #[test]
    fn every_named_environment_builds() {
        for name in ENVIRONMENTS.iter().filter(|n| !n.starts_with("ml-100k")) {
            let o = EnvOverrides {
                n_users: Some(12),
                n_items: Some(15),
                ..Default::default()
            };
            let s = EnvSettings::resolve(name, &o).unwrap();
            let env = build_environment(&s, &RngSeed::new(0)).unwrap();
            assert_eq!((env.n_users(), env.n_items()), (12, 15));
            let snap = env.true_rating_snapshot().unwrap();
            let range = env.rating_range();
            assert!(snap.values().iter().all(|&v| range.contains(v)), "{name}");
        }
    }
}
