use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::StudyConfig;
use crate::envs::EnvKind;
use crate::error::{Error, Result};
use crate::harness::{Estimate, ExperimentResult};
use crate::metrics::spearman;
use crate::tuning::SearchResult;

pub const TIMESERIES_COLUMNS: &[&str] = &[
    "experiment_id",
    "env",
    "recommender",
    "policy",
    "trial",
    "timestep",
    "mean_rating",
    "observed_rmse",
    "coverage",
    "novelty",
    "gini",
    "population_rmse",
    "n_ratings_total",
];

pub const OFFLINE_COLUMNS: &[&str] = &["experiment_id", "env", "recommender", "fold", "rmse", "ndcg_at_20"];

pub const TUNING_COLUMNS: &[&str] = &["recommender", "config-json", "fold", "rmse", "ndcg_at_k"];

/// Metrics summarized per study in the summary and aggregate files.
const SUMMARY_METRICS: &[&str] = &[
    "mean_rating",
    "offline_rmse",
    "offline_ndcg",
    "final_mean_rating",
    "final_rmse",
    "final_population_rmse",
    "coverage",
];

const AGGREGATE_METRICS: &[&str] = &["mean_rating", "observed_rmse", "coverage", "novelty", "gini", "population_rmse"];

/// Paths of one run's output files.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultFiles {
    pub timeseries: PathBuf,
    pub offline: PathBuf,
    pub summary: PathBuf,
    pub aggregate: PathBuf,
    pub metadata: PathBuf,
}

impl ResultFiles {
    pub fn in_dir(dir: &Path, experiment_id: &str) -> Self {
        let f = |suffix: &str| dir.join(format!("{experiment_id}_{suffix}"));
        ResultFiles {
            timeseries: f("timeseries.csv"),
            offline: f("offline.csv"),
            summary: f("summary.csv"),
            aggregate: f("aggregate.csv"),
            metadata: f("metadata.json"),
        }
    }

    pub fn all(&self) -> [&Path; 5] {
        [&self.timeseries, &self.offline, &self.summary, &self.aggregate, &self.metadata]
    }
}

/// Nine significant digits, shortest form.
pub fn fmt_real(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_real).unwrap_or_default()
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn push_estimate(row: &mut Vec<String>, e: Option<Estimate>) {
    row.push(fmt_opt(e.map(|e| e.mean)));
    row.push(fmt_opt(e.and_then(|e| e.ci)));
}

fn summary_header() -> Vec<String> {
    let mut h: Vec<String> = ["experiment_id", "env", "recommender", "policy", "n_trials"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for m in SUMMARY_METRICS {
        h.push(m.to_string());
        h.push(format!("{m}_ci"));
    }
    h
}

/// Writes timeseries, offline, summary and aggregate CSVs plus metadata.
pub fn write_results(study: &StudyConfig, results: &[ExperimentResult], out_dir: &Path) -> Result<ResultFiles> {
    fs::create_dir_all(out_dir)?;
    let files = ResultFiles::in_dir(out_dir, &study.experiment_id);
    let id = &study.experiment_id;

    let mut ts = Vec::new();
    let mut offline = Vec::new();
    let mut summary = Vec::new();
    let mut aggregate = Vec::new();
    let mut offline_done = Vec::new();
    for r in results {
        let c = &r.config;
        let policy = c.policy.to_string();
        let key = [id.clone(), c.env.name.clone(), c.recommender.clone(), policy.clone()];
        for t in &r.trials {
            for rec in &t.records {
                let mut row = key.to_vec();
                row.extend([
                    t.trial.to_string(),
                    rec.timestep.to_string(),
                    fmt_real(rec.mean_rating),
                    fmt_opt(rec.observed_rmse),
                    rec.coverage.to_string(),
                    fmt_real(rec.novelty),
                    fmt_opt(rec.gini),
                    fmt_opt(rec.population_rmse),
                    rec.n_ratings_total.to_string(),
                ]);
                ts.push(row);
            }
        }
        if !offline_done.contains(&c.recommender) {
            if let Some(folds) = r.offline() {
                for (f, s) in folds.iter().enumerate() {
                    offline.push(vec![
                        id.clone(),
                        c.env.name.clone(),
                        c.recommender.clone(),
                        f.to_string(),
                        fmt_opt(s.rmse),
                        fmt_opt(s.ndcg),
                    ]);
                }
                offline_done.push(c.recommender.clone());
            }
        }
        let s = r.summary();
        let mut row = key.to_vec();
        row.push(r.trials.len().to_string());
        for e in [
            s.mean_rating,
            s.offline_rmse,
            s.offline_ndcg,
            s.final_mean_rating,
            s.final_rmse,
            s.final_population_rmse,
            s.mean_coverage,
        ] {
            push_estimate(&mut row, e);
        }
        summary.push(row);
        for a in r.aggregate() {
            let mut row = key.to_vec();
            row.push(a.timestep.to_string());
            for e in [a.mean_rating, a.observed_rmse, a.coverage, a.novelty, a.gini, a.population_rmse] {
                push_estimate(&mut row, e);
            }
            aggregate.push(row);
        }
    }

    let mut agg_header: Vec<String> = ["experiment_id", "env", "recommender", "policy", "timestep"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for m in AGGREGATE_METRICS {
        agg_header.push(m.to_string());
        agg_header.push(format!("{m}_ci"));
    }
    let agg_refs: Vec<&str> = agg_header.iter().map(String::as_str).collect();
    let sum_header = summary_header();
    let sum_refs: Vec<&str> = sum_header.iter().map(String::as_str).collect();

    let metadata = metadata_json(study)?;
    write_atomic(&files.timeseries, &csv_bytes(TIMESERIES_COLUMNS, ts)?)?;
    write_atomic(&files.offline, &csv_bytes(OFFLINE_COLUMNS, offline)?)?;
    write_atomic(&files.aggregate, &csv_bytes(&agg_refs, aggregate)?)?;
    write_atomic(&files.metadata, metadata.as_bytes())?;
    // the summary goes last so its presence implies a complete run
    write_atomic(&files.summary, &csv_bytes(&sum_refs, summary)?)?;
    Ok(files)
}

fn metadata_json(study: &StudyConfig) -> Result<String> {
    let mut meta = serde_json::Map::new();
    meta.insert("experiment_id".into(), study.experiment_id.clone().into());
    meta.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    meta.insert("config".into(), study.to_json_value()?);
    meta.insert("base_seed".into(), study.seed.into());
    meta.insert(
        "seeding".into(),
        serde_json::json!({
            "rng": "chacha8 keyed by sha256 of (base seed, label path)",
            "paired_across_recommenders": true,
            "world_streams": ["trial/<t>/env", "trial/<t>/initial", "trial/<t>/users"],
            "model_streams": ["trial/<t>/rec/<recommender>", "trial/<t>/explore/<recommender>/<policy>"],
            "offline_evaluation": "trial 0 initial dataset",
        }),
    );
    if study.env.kind() == EnvKind::Ml100k {
        if let Some(p) = &study.env.dataset_path {
            let ids = super::load_ml100k(p)?.ids;
            meta.insert("id_mapping".into(), serde_json::to_value(ids)?);
        }
    }
    let mut s = serde_json::to_string_pretty(&serde_json::Value::Object(meta))?;
    s.push('\n');
    Ok(s)
}

/// Writes the per-config, per-fold score table of a grid search.
pub fn write_tuning(results: &[SearchResult], path: &Path) -> Result<()> {
    let mut rows = Vec::new();
    for r in results {
        for c in &r.table {
            let cfg = serde_json::to_string(&c.params)?;
            if c.folds.is_empty() {
                rows.push(vec![r.recommender.clone(), cfg.clone(), String::new(), String::new(), String::new()]);
            }
            for (f, s) in c.folds.iter().enumerate() {
                rows.push(vec![r.recommender.clone(), cfg.clone(), f.to_string(), fmt_opt(s.rmse), fmt_opt(s.ndcg)]);
            }
        }
    }
    write_atomic(path, &csv_bytes(TUNING_COLUMNS, rows)?)
}

/// One row of a summary CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment_id: String,
    pub env: String,
    pub recommender: String,
    pub policy: String,
    pub n_trials: usize,
    pub mean_rating: Option<f64>,
    pub mean_rating_ci: Option<f64>,
    pub offline_rmse: Option<f64>,
    pub offline_rmse_ci: Option<f64>,
    pub offline_ndcg: Option<f64>,
    pub offline_ndcg_ci: Option<f64>,
    pub final_mean_rating: Option<f64>,
    pub final_mean_rating_ci: Option<f64>,
    pub final_rmse: Option<f64>,
    pub final_rmse_ci: Option<f64>,
    pub final_population_rmse: Option<f64>,
    pub final_population_rmse_ci: Option<f64>,
    pub coverage: Option<f64>,
    pub coverage_ci: Option<f64>,
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<SummaryRow>, _>>()?;
    Ok(rows)
}

/// One Spearman correlation across recommenders.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationRow {
    pub env: String,
    pub policy: String,
    pub pair: &'static str,
    pub spearman: f64,
    pub n_recommenders: usize,
}

/// Cross-recommender correlations of offline metrics and coverage with the
/// online mean rating, per (env, policy). EASE never enters the RMSE row.
/// Pairs with fewer than two recommenders are skipped with a warning.
pub fn correlations(rows: &[SummaryRow]) -> Vec<CorrelationRow> {
    let mut groups: BTreeMap<(String, String), Vec<&SummaryRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.env.clone(), r.policy.clone())).or_default().push(r);
    }
    type Pick = fn(&SummaryRow) -> Option<f64>;
    let pairs: [(&'static str, Pick); 3] = [
        ("ndcg_vs_mean_rating", |r| r.offline_ndcg),
        ("rmse_vs_mean_rating", |r| if r.recommender == "ease" { None } else { r.offline_rmse }),
        ("coverage_vs_mean_rating", |r| r.coverage),
    ];
    let mut out = Vec::new();
    for ((env, policy), group) in &groups {
        for (pair, pick) in pairs {
            let (xs, ys): (Vec<f64>, Vec<f64>) = group
                .iter()
                .filter_map(|r| Some((pick(r)?, r.mean_rating?)))
                .unzip();
            if xs.len() < 2 {
                log::warn!("{env} {policy}: {pair} needs at least 2 recommenders, found {}", xs.len());
                continue;
            }
            match spearman(&xs, &ys) {
                Ok(rho) => out.push(CorrelationRow {
                    env: env.clone(),
                    policy: policy.clone(),
                    pair,
                    spearman: rho,
                    n_recommenders: xs.len(),
                }),
                Err(e) => log::warn!("{env} {policy}: {pair} skipped: {e}"),
            }
        }
    }
    out
}

/// Reads every `*_summary.csv` in `dir` and writes `correlations_<env>.csv`.
pub fn write_report(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut summaries: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with("_summary.csv")))
        .collect();
    summaries.sort();
    if summaries.is_empty() {
        return Err(Error::Config(format!("no *_summary.csv files in {}", dir.display())));
    }
    let mut rows = Vec::new();
    for p in &summaries {
        rows.extend(read_summary(p)?);
    }
    let corr = correlations(&rows);
    let mut by_env: BTreeMap<&str, Vec<&CorrelationRow>> = BTreeMap::new();
    for c in &corr {
        by_env.entry(&c.env).or_default().push(c);
    }
    let mut written = Vec::new();
    for (env, cs) in by_env {
        let path = dir.join(format!("correlations_{env}.csv"));
        let body = csv_bytes(
            &["env", "policy", "pair", "spearman", "n_recommenders"],
            cs.iter().map(|c| {
                vec![
                    c.env.clone(),
                    c.policy.clone(),
                    c.pair.to_string(),
                    fmt_real(c.spearman),
                    c.n_recommenders.to_string(),
                ]
            }),
        )?;
        write_atomic(&path, &body)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_real(3.14159265358979), "3.14159265");
        assert_eq!(fmt_real(0.1), "0.1");
        assert_eq!(fmt_real(2.0), "2");
        assert_eq!(fmt_real(123456789012.0), "123456789000");
        assert_eq!(fmt_real(-0.000123456789123), "-0.000123456789");
    }

    fn row(rec: &str, ndcg: f64, rating: f64) -> SummaryRow {
        SummaryRow {
            experiment_id: "x".into(),
            env: "topics-static".into(),
            recommender: rec.into(),
            policy: "greedy".into(),
            n_trials: 1,
            mean_rating: Some(rating),
            mean_rating_ci: None,
            offline_rmse: Some(2.0 - ndcg),
            offline_rmse_ci: None,
            offline_ndcg: Some(ndcg),
            offline_ndcg_ci: None,
            final_mean_rating: None,
            final_mean_rating_ci: None,
            final_rmse: None,
            final_rmse_ci: None,
            final_population_rmse: None,
            final_population_rmse_ci: None,
            coverage: Some(rating * 10.0),
            coverage_ci: None,
        }
    }

    #[test]
    fn hand_built_correlations() {
        let rows = vec![row("a", 0.1, 3.0), row("b", 0.2, 4.0), row("c", 0.3, 3.5)];
        let c = correlations(&rows);
        let ndcg = c.iter().find(|r| r.pair == "ndcg_vs_mean_rating").unwrap();
        assert!((ndcg.spearman - 0.5).abs() < 1e-12);
        let rmse = c.iter().find(|r| r.pair == "rmse_vs_mean_rating").unwrap();
        assert!((rmse.spearman + 0.5).abs() < 1e-12);
        let same = vec![row("a", 0.1, 3.0), row("b", 0.2, 3.5), row("c", 0.3, 4.0)];
        let c = correlations(&same);
        assert!((c[0].spearman - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ease_excluded_from_rmse_and_singletons_skipped() {
        let rows = vec![row("ease", 0.1, 3.0), row("b", 0.2, 4.0), row("c", 0.3, 3.5)];
        let c = correlations(&rows);
        let rmse = c.iter().find(|r| r.pair == "rmse_vs_mean_rating").unwrap();
        assert_eq!(rmse.n_recommenders, 2);
        assert!(correlations(&[row("a", 0.1, 3.0)]).is_empty());
    }

    #[test]
    fn summary_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s_summary.csv");
        let r = row("a", 0.25, 3.5);
        let mut line = vec![
            r.experiment_id.clone(),
            r.env.clone(),
            r.recommender.clone(),
            r.policy.clone(),
            "1".into(),
        ];
        for v in [Some(3.5), None, Some(1.75), None, Some(0.25), None, None, None, None, None, None, None, Some(35.0), None] {
            line.push(fmt_opt(v));
        }
        let header = summary_header();
        let refs: Vec<&str> = header.iter().map(String::as_str).collect();
        write_atomic(&path, &csv_bytes(&refs, [line]).unwrap()).unwrap();
        assert_eq!(read_summary(&path).unwrap(), vec![r]);
        let written = write_report(dir.path()).unwrap();
        assert!(written.is_empty());
    }

    #[test]
    fn unwritable_directory_errors() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain");
        fs::write(&file, b"x").unwrap();
        assert!(write_atomic(&file.join("a.csv"), b"y").is_err());
    }
}
