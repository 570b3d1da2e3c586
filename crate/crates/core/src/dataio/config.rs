use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::envs::{EnvOverrides, EnvSettings, ENVIRONMENTS};
use crate::error::{Error, Result};
use crate::explore::ExplorationPolicy;
use crate::harness::{lowdata_policies, ExperimentConfig, RecordFlags, Schedule, LOWDATA_INITIAL};
use crate::recs::{resolve_params, schema, ParamValue, Params, RECOMMENDERS};
use crate::tuning::{Grid, Objective};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

impl OneOrMany {
    fn into_vec(self) -> Vec<String> {
        match self {
            OneOrMany::One(s) => vec![s],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    n_initial: Option<usize>,
    users_per_step: Option<usize>,
    target: Option<usize>,
    final_window: Option<usize>,
    offline_folds: Option<usize>,
    tune_folds: Option<usize>,
    ndcg_k: Option<usize>,
    lowdata: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    population_rmse: Option<bool>,
    gini: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct RawGrid {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    objective: Option<Objective>,
    #[serde(flatten)]
    axes: BTreeMap<String, Vec<ParamValue>>,
}

/// The on-disk layout. Every key but `env` and `rec` is optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    experiment_id: Option<String>,
    env: String,
    rec: OneOrMany,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    policy: Option<OneOrMany>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schedule: Option<RawSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    record: Option<RawRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    env_params: Option<EnvOverrides>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rec_params: Option<BTreeMap<String, Params>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<BTreeMap<String, RawGrid>>,
}

/// A fully resolved experiment file: one environment, one or more
/// recommenders and policies.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub experiment_id: String,
    pub env: EnvSettings,
    pub recommenders: Vec<String>,
    pub policies: Vec<ExplorationPolicy>,
    pub seed: u64,
    pub trials: usize,
    pub schedule: Schedule,
    pub tune_folds: usize,
    pub lowdata: bool,
    pub record: RecordFlags,
    /// Hyperparameters with defaults filled, one entry per recommender.
    pub rec_params: BTreeMap<String, Params>,
    /// Search spaces for `tune`, one entry per recommender.
    pub grids: BTreeMap<String, Grid>,
}

pub const DEFAULT_TRIALS: usize = 10;
pub const DEFAULT_EXPERIMENT_ID: &str = "experiment";

fn unknown_rec(name: &str) -> Error {
    Error::UnknownName {
        kind: "recommender",
        name: name.to_string(),
        valid: RECOMMENDERS.join(", "),
    }
}

fn with_path(key: &str, e: Error) -> Error {
    match e {
        Error::Param { key: k, msg } => Error::Config(format!("{key}.{k}: {msg}")),
        other => other,
    }
}

impl StudyConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawConfig) -> Result<Self> {
        if !ENVIRONMENTS.contains(&raw.env.as_str()) {
            return Err(Error::UnknownName {
                kind: "environment",
                name: raw.env,
                valid: ENVIRONMENTS.join(", "),
            });
        }
        let env = EnvSettings::resolve(&raw.env, &raw.env_params.unwrap_or_default())?;
        let recommenders = raw.rec.into_vec();
        if recommenders.is_empty() {
            return Err(Error::Config("rec must name at least one recommender".into()));
        }
        for r in &recommenders {
            if !RECOMMENDERS.contains(&r.as_str()) {
                return Err(unknown_rec(r));
            }
        }
        let rs = raw.schedule.unwrap_or_default();
        let lowdata = rs.lowdata.unwrap_or(env.is_lowdata());
        let defaults = Schedule::default();
        let schedule = Schedule {
            n_initial: rs
                .n_initial
                .unwrap_or(if lowdata { LOWDATA_INITIAL } else { defaults.n_initial }),
            users_per_step: rs.users_per_step.unwrap_or(defaults.users_per_step),
            target_total: rs.target.unwrap_or(defaults.target_total),
            final_window: rs.final_window.unwrap_or(defaults.final_window),
            offline_folds: rs.offline_folds.unwrap_or(defaults.offline_folds),
            ndcg_k: rs.ndcg_k.unwrap_or(defaults.ndcg_k),
        };
        let policies = match raw.policy {
            Some(p) => p
                .into_vec()
                .iter()
                .map(|s| s.parse())
                .collect::<Result<Vec<ExplorationPolicy>>>()?,
            None if lowdata => lowdata_policies(),
            None => vec![ExplorationPolicy::Greedy],
        };
        if policies.is_empty() {
            return Err(Error::Config("policy list is empty".into()));
        }
        let rr = raw.record.unwrap_or_default();
        let record = RecordFlags {
            population_rmse: rr.population_rmse.unwrap_or(lowdata),
            gini: rr.gini.unwrap_or(true),
        };

        let given = raw.rec_params.unwrap_or_default();
        for name in given.keys() {
            if !recommenders.contains(name) {
                return Err(Error::Config(format!(
                    "rec_params.{name}: recommender not listed in rec"
                )));
            }
        }
        let mut rec_params = BTreeMap::new();
        for r in &recommenders {
            let p = given.get(r).cloned().unwrap_or_default();
            let resolved = resolve_params(&schema(r)?, &p).map_err(|e| with_path(&format!("rec_params.{r}"), e))?;
            rec_params.insert(r.clone(), resolved);
        }

        let raw_grids = raw.grid.unwrap_or_default();
        for name in raw_grids.keys() {
            if !recommenders.contains(name) {
                return Err(Error::Config(format!("grid.{name}: recommender not listed in rec")));
            }
        }
        let mut grids = BTreeMap::new();
        for r in &recommenders {
            let g = match raw_grids.get(r) {
                Some(rg) => {
                    let default = Grid::default_for(r)?;
                    let g = Grid {
                        objective: rg.objective.unwrap_or(default.objective),
                        axes: rg.axes.clone(),
                    };
                    let specs = schema(r)?;
                    for (axis, values) in &g.axes {
                        let spec = specs.iter().find(|s| s.name == axis).ok_or_else(|| {
                            Error::Config(format!("grid.{r}.{axis}: not a parameter of {r}"))
                        })?;
                        for v in values {
                            spec.check(v).map_err(|e| with_path(&format!("grid.{r}"), e))?;
                        }
                    }
                    g
                }
                None => Grid::default_for(r)?,
            };
            grids.insert(r.clone(), g);
        }

        let study = StudyConfig {
            experiment_id: raw.experiment_id.unwrap_or_else(|| DEFAULT_EXPERIMENT_ID.to_string()),
            env,
            recommenders,
            policies,
            seed: raw.seed.unwrap_or(0),
            trials: raw.trials.unwrap_or(DEFAULT_TRIALS),
            schedule,
            tune_folds: rs.tune_folds.unwrap_or(5),
            lowdata,
            record,
            rec_params,
            grids,
        };
        study.validate()?;
        Ok(study)
    }

    pub fn validate(&self) -> Result<()> {
        if self.experiment_id.is_empty()
            || !self
                .experiment_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            return Err(Error::Config(format!(
                "experiment_id '{}' must be nonempty and use only [A-Za-z0-9-_.]",
                self.experiment_id
            )));
        }
        if self.tune_folds < 2 {
            return Err(Error::Config("schedule.tune_folds must be >= 2".into()));
        }
        for e in self.experiments() {
            e.validate()?;
        }
        Ok(())
    }

    /// One experiment per (recommender, policy), recommenders outermost.
    pub fn experiments(&self) -> Vec<ExperimentConfig> {
        let mut out = Vec::new();
        for r in &self.recommenders {
            for p in &self.policies {
                out.push(ExperimentConfig {
                    experiment_id: self.experiment_id.clone(),
                    env: self.env.clone(),
                    recommender: r.clone(),
                    params: self.rec_params[r].clone(),
                    policy: *p,
                    schedule: self.schedule.clone(),
                    trials: self.trials,
                    seed: self.seed,
                    record: self.record,
                });
            }
        }
        out
    }

    fn to_raw(&self) -> RawConfig {
        let e = &self.env;
        let env_params = EnvOverrides {
            n_users: Some(e.n_users),
            n_items: Some(e.n_items),
            noise_std: Some(e.noise_std),
            topics: Some(e.topics),
            affinity: Some(e.affinity),
            memory: Some(e.memory),
            boredom_threshold: Some(e.boredom_threshold),
            boredom_penalty: Some(e.boredom_penalty),
            latent_dim: Some(e.latent_dim),
            slate_size: Some(e.slate_size),
            known_fraction: Some(e.known_fraction),
            beta_variance: Some(e.beta_variance),
            known_variance: Some(e.known_variance),
            dirichlet_concentration: Some(e.dirichlet_concentration),
            dataset_path: e.dataset_path.clone(),
            dataset_folds: Some(e.dataset_folds),
        };
        let s = &self.schedule;
        RawConfig {
            experiment_id: Some(self.experiment_id.clone()),
            env: e.name.clone(),
            rec: OneOrMany::Many(self.recommenders.clone()),
            policy: Some(OneOrMany::Many(self.policies.iter().map(|p| p.to_string()).collect())),
            seed: Some(self.seed),
            trials: Some(self.trials),
            schedule: Some(RawSchedule {
                n_initial: Some(s.n_initial),
                users_per_step: Some(s.users_per_step),
                target: Some(s.target_total),
                final_window: Some(s.final_window),
                offline_folds: Some(s.offline_folds),
                tune_folds: Some(self.tune_folds),
                ndcg_k: Some(s.ndcg_k),
                lowdata: Some(self.lowdata),
            }),
            record: Some(RawRecord {
                population_rmse: Some(self.record.population_rmse),
                gini: Some(self.record.gini),
            }),
            env_params: Some(env_params),
            rec_params: Some(self.rec_params.clone()),
            grid: Some(
                self.grids
                    .iter()
                    .map(|(k, g)| {
                        (
                            k.clone(),
                            RawGrid {
                                objective: Some(g.objective),
                                axes: g.axes.clone(),
                            },
                        )
                    })
                    .collect(),
            ),
        }
    }

    /// Fully explicit TOML; parsing it back yields an equal config.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(&self.to_raw()).map_err(|e| Error::Config(e.to_string()))
    }

    /// The resolved config as JSON, for metadata files.
    pub fn to_json_value(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self.to_raw())?)
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<StudyConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    StudyConfig::from_toml_str(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}
