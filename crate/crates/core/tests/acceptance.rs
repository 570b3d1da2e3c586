//! Acceptance suite: exact oracles plus desk-scale simulations.
//!
//! Runs as a plain binary so that every criterion prints one PASS/FAIL line.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;

use onlinerec::dataio::{write_results, StudyConfig};
use onlinerec::explore::{epsilon_greedy_select, power_sample_select};
use onlinerec::harness::{run_study, tune_study, ExperimentResult, Estimate};
use onlinerec::metrics::{gini, ndcg_at_k, rmse, spearman};
use onlinerec::recs::{ease_fit, BuiltinFactory, MfModel, MfParams, Params};
use onlinerec::{ItemId, Observation, ObservationSet, RatingRange, RngSeed, UserId};

const SEED: u64 = 20_240_601;
const DESK_RECS: &[&str] = &["random", "toppop", "userknn", "itemknn", "mf", "ease", "oracle"];
const DESK_ENVS: &[&str] = &["topics-static", "topics-dynamic", "latent-static", "latent-score", "beta-rank"];

struct Verdict {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(id: usize, name: &'static str, pass: bool, detail: String) -> Verdict {
    Verdict { id, name, pass, detail }
}

fn desk_config(env: &str, recs: &[&str], extra_env: &str, schedule: &str) -> StudyConfig {
    let recs: Vec<String> = recs.iter().map(|r| format!("\"{r}\"")).collect();
    let text = format!(
        "experiment_id = \"desk-{env}\"\nenv = \"{env}\"\nrec = [{}]\nseed = {SEED}\ntrials = 3\n\
         [env_params]\nn_users = 200\nn_items = 340\ntopics = 19\n{extra_env}\n\
         [schedule]\n{schedule}\n",
        recs.join(", ")
    );
    StudyConfig::from_toml_str(&text).unwrap_or_else(|e| panic!("desk config for {env}: {e}"))
}

const DESK_SCHEDULE: &str = "n_initial = 4000\nusers_per_step = 50\ntarget = 8000";

fn csv_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap());
    }
    out
}

fn by_rec<'a>(results: &'a [ExperimentResult], rec: &str) -> &'a ExperimentResult {
    results.iter().find(|r| r.config.recommender == rec).unwrap()
}

fn mean_rating(r: &ExperimentResult) -> Estimate {
    r.summary().mean_rating.expect("online ratings")
}

// ---------------------------------------------------------------- oracles

fn criterion_1() -> Verdict {
    let t = Instant::now();
    let list = vec![vec![(ItemId(0), 2.0, 5.0), (ItemId(1), 3.0, 4.0), (ItemId(2), 1.0, 3.0)]];
    let n = ndcg_at_k(&list, 3).unwrap();
    let g = gini(&[0.0, 0.0, 0.0, 4.0]).unwrap();
    let s = spearman(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
    let r = rmse(&[(1.0, 5.0), (5.0, 1.0)]).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let pass = (n - 0.95910).abs() <= 1e-5
        && (g - 0.75).abs() <= 1e-12
        && (s - 0.5).abs() <= 1e-12
        && (r - 4.0).abs() <= 1e-12
        && secs < 1.0;
    verdict(1, "metric oracles", pass, format!("ndcg={n:.6} gini={g} spearman={s} rmse={r} in {secs:.3}s"))
}

/// Zero-diagonal ridge solved column by column on the reduced system.
fn ease_brute_force(x: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let n = x.ncols();
    let mut b = DMatrix::zeros(n, n);
    for j in 0..n {
        let others: Vec<usize> = (0..n).filter(|&k| k != j).collect();
        let a = x.select_columns(&others);
        let lhs = a.transpose() * &a + DMatrix::identity(n - 1, n - 1) * lambda;
        let rhs = a.transpose() * x.column(j);
        let sol = lhs.lu().solve(&rhs).unwrap();
        for (k, &i) in others.iter().enumerate() {
            b[(i, j)] = sol[k];
        }
    }
    b
}

fn binary_observations(x: &DMatrix<f64>) -> ObservationSet {
    let mut set = ObservationSet::new(x.nrows(), x.ncols());
    for u in 0..x.nrows() {
        for i in 0..x.ncols() {
            let r = if x[(u, i)] > 0.5 { 5.0 } else { 1.0 };
            set.insert(Observation::new(UserId::from(u), ItemId::from(i), r, 0)).unwrap();
        }
    }
    set
}

fn criterion_2() -> Verdict {
    let t = Instant::now();
    let mut rng = RngSeed::new(SEED).derive("ease").stream();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x = DMatrix::from_fn(6, 8, |_, _| if rng.random_bool(0.4) { 1.0 } else { 0.0 });
        let lambda = rng.random_range(0.5..20.0);
        let fitted = ease_fit(&binary_observations(&x), lambda, 4.0).unwrap().weights;
        let oracle = ease_brute_force(&x, lambda);
        worst = worst.max((fitted - oracle).abs().max());
    }
    let hand = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
    let b = ease_fit(&binary_observations(&hand), 1.0, 4.0).unwrap().weights;
    let want = DMatrix::from_row_slice(2, 2, &[0.0, 1.0 / 3.0, 0.5, 0.0]);
    let hand_err = (b - want).abs().max();
    let secs = t.elapsed().as_secs_f64();
    let pass = worst <= 1e-8 && hand_err <= 1e-12 && secs < 5.0;
    verdict(2, "EASE closed form", pass, format!("max err {worst:.2e}, hand err {hand_err:.2e} in {secs:.3}s"))
}

fn criterion_3() -> Verdict {
    let t = Instant::now();
    let params = MfParams {
        dim: 3,
        lr: 0.01,
        reg: 0.1,
        epochs: 1,
        init_std: 0.5,
    };
    let mut rng = RngSeed::new(SEED).derive("mf-gradient").stream();
    let mut model = MfModel::init(5, 5, 3.0, &params, RatingRange::STARS, &mut rng);
    for b in model.user_bias.iter_mut().chain(model.item_bias.iter_mut()) {
        *b = rng.random_range(-0.5..0.5);
    }
    let data: Vec<Observation> = (0..25)
        .filter(|k| k % 3 != 1)
        .map(|k| Observation::new(UserId(k / 5), ItemId(k % 5), rng.random_range(1..=5) as f64, 0))
        .collect();
    let g = model.gradient(&data);
    let analytic: Vec<f64> = [&g.user_bias, &g.item_bias, &g.user_factors, &g.item_factors]
        .iter()
        .flat_map(|v| v.iter().copied())
        .collect();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut k = 0;
    for block in 0..4 {
        let len = [5, 5, 15, 15][block];
        for idx in 0..len {
            let slot = |m: &mut MfModel| -> *mut f64 {
                match block {
                    0 => &mut m.user_bias[idx],
                    1 => &mut m.item_bias[idx],
                    2 => &mut m.user_factors[idx],
                    _ => &mut m.item_factors[idx],
                }
            };
            let mut plus = model.clone();
            let mut minus = model.clone();
            // SAFETY: each pointer comes from a live, exclusively borrowed model
            unsafe {
                *slot(&mut plus) += h;
                *slot(&mut minus) -= h;
            }
            let fd = (plus.objective(&data) - minus.objective(&data)) / (2.0 * h);
            let a = analytic[k];
            let scale = a.abs().max(fd.abs());
            let err = if scale > 1e-6 { (a - fd).abs() / scale } else { (a - fd).abs() };
            worst = worst.max(err);
            k += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(3, "MF gradients", worst <= 1e-5 && secs < 1.0, format!("max relative err {worst:.2e} in {secs:.3}s"))
}

fn criterion_4() -> Verdict {
    let t = Instant::now();
    let mut rng = RngSeed::new(SEED).derive("explore").stream();
    let scores: Vec<f64> = (0..10).map(|i| (i * 7 % 10) as f64 * 0.4).collect();
    let top = (0..10).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
    let draws = 100_000;
    let hits = (0..draws)
        .filter(|_| epsilon_greedy_select(&scores, 0.2, &mut rng).unwrap() == top)
        .count();
    let eps_freq = hits as f64 / draws as f64;
    let first = (0..draws)
        .filter(|_| power_sample_select(&[4.0, 2.0], 1.0, 0.01, &mut rng).unwrap() == 0)
        .count();
    let p_first = first as f64 / draws as f64;
    let secs = t.elapsed().as_secs_f64();
    let pass = (eps_freq - 0.82).abs() <= 0.005
        && (p_first - 2.0 / 3.0).abs() <= 0.005
        && (1.0 - p_first - 1.0 / 3.0).abs() <= 0.005
        && secs < 5.0;
    verdict(4, "exploration distributions", pass, format!("eps argmax {eps_freq:.4}, power (4,2) -> {p_first:.4}/{:.4} in {secs:.2}s", 1.0 - p_first))
}

// ------------------------------------------------------------ simulations

struct DeskRun {
    env: String,
    results: Vec<ExperimentResult>,
    files: BTreeMap<String, Vec<u8>>,
}

fn run_desk(env: &str, out: &Path) -> DeskRun {
    let extra = "";
    let base = desk_config(env, DESK_RECS, extra, DESK_SCHEDULE);
    let tuned = tune_study(&base, &BuiltinFactory).unwrap().best;
    let dir = out.join(env);
    let results = run_study(&tuned, &BuiltinFactory).unwrap();
    write_results(&tuned, &results, &dir).unwrap();
    DeskRun {
        env: env.to_string(),
        results,
        files: csv_bytes(&dir),
    }
}

fn criterion_5(desk: &[DeskRun]) -> Verdict {
    let run = desk.iter().find(|d| d.env == "topics-static").unwrap();
    let oracle = by_rec(&run.results, "oracle");
    let mut per_step = Vec::new();
    let mut n_obs = 0;
    for t in &oracle.trials {
        for r in &t.records {
            per_step.push(r.observed_rmse.unwrap());
            n_obs += r.n_new_ratings;
        }
    }
    let avg = per_step.iter().sum::<f64>() / per_step.len() as f64;
    let pass = n_obs >= 10_000 && (avg - 0.5).abs() <= 0.025;
    verdict(5, "oracle noise floor", pass, format!("mean per-step observed RMSE {avg:.4} over {n_obs} ratings (want 0.5 +- 5%)"))
}

fn criterion_6(desk: &[DeskRun]) -> Verdict {
    let mut pass = true;
    let mut notes = Vec::new();
    for d in desk {
        let oracle = mean_rating(by_rec(&d.results, "oracle"));
        let random = mean_rating(by_rec(&d.results, "random"));
        let best_other = DESK_RECS
            .iter()
            .filter(|r| **r != "oracle")
            .map(|r| (r, mean_rating(by_rec(&d.results, r)).mean))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let ok = oracle.mean >= best_other.1 && oracle.mean > random.mean && !oracle.overlaps(&random);
        pass &= ok;
        notes.push(format!(
            "{}: oracle {:.3}+-{:.3} vs {} {:.3}, random {:.3}+-{:.3}{}",
            d.env,
            oracle.mean,
            oracle.ci.unwrap_or(0.0),
            best_other.0,
            best_other.1,
            random.mean,
            random.ci.unwrap_or(0.0),
            if ok { "" } else { " FAIL" }
        ));
    }
    verdict(6, "oracle dominance", pass, notes.join("; "))
}

fn criterion_7(desk: &[DeskRun]) -> Verdict {
    let mut pass = true;
    let mut notes = Vec::new();
    for d in desk.iter().filter(|d| ["topics-static", "topics-dynamic", "latent-static"].contains(&d.env.as_str())) {
        let mut ndcg = Vec::new();
        let mut rating = Vec::new();
        let mut rm = Vec::new();
        let mut rm_rating = Vec::new();
        for rec in DESK_RECS {
            let s = by_rec(&d.results, rec).summary();
            let mr = s.mean_rating.unwrap().mean;
            ndcg.push(s.offline_ndcg.unwrap().mean);
            rating.push(mr);
            if *rec != "ease" {
                rm.push(s.offline_rmse.unwrap().mean);
                rm_rating.push(mr);
            }
        }
        let rho_ndcg = spearman(&ndcg, &rating).unwrap();
        let rho_rmse = spearman(&rm, &rm_rating).unwrap();
        let ok = rho_ndcg >= 0.5 && rho_rmse <= -0.5;
        pass &= ok;
        notes.push(format!("{}: ndcg rho {rho_ndcg:.3}, rmse rho {rho_rmse:.3}{}", d.env, if ok { "" } else { " FAIL" }));
    }
    verdict(7, "offline-online correlation", pass, notes.join("; "))
}

fn criterion_8(desk: &[DeskRun]) -> Verdict {
    let get = |env: &str, rec: &str| mean_rating(by_rec(&desk.iter().find(|d| d.env == env).unwrap().results, rec));
    let (sp, sr) = (get("topics-static", "toppop"), get("topics-static", "random"));
    let (dp, dr) = (get("topics-dynamic", "toppop"), get("topics-dynamic", "random"));
    let static_ok = sp.overlaps(&sr);
    let dynamic_ok = dp.mean > dr.mean && !dp.overlaps(&dr);
    verdict(
        8,
        "dynamics signature",
        static_ok && dynamic_ok,
        format!(
            "static toppop {:.3}+-{:.3} vs random {:.3}+-{:.3}; dynamic toppop {:.3}+-{:.3} vs random {:.3}+-{:.3}",
            sp.mean,
            sp.ci.unwrap_or(0.0),
            sr.mean,
            sr.ci.unwrap_or(0.0),
            dp.mean,
            dp.ci.unwrap_or(0.0),
            dr.mean,
            dr.ci.unwrap_or(0.0)
        ),
    )
}

fn criterion_9(out: &Path) -> (Verdict, Vec<ExperimentResult>) {
    let recs = ["toppop", "itemknn", "mf", "oracle"];
    let stat = desk_config("topics-static", &recs, "", DESK_SCHEDULE);
    let mut frozen = desk_config("topics-dynamic", &recs, "affinity = 0.0\nboredom_penalty = 0.0", DESK_SCHEDULE);
    frozen.experiment_id = stat.experiment_id.clone();
    let ra = run_study(&stat, &BuiltinFactory).unwrap();
    let rb = run_study(&frozen, &BuiltinFactory).unwrap();
    let (da, db) = (out.join("iso-static"), out.join("iso-dynamic"));
    write_results(&stat, &ra, &da).unwrap();
    write_results(&frozen, &rb, &db).unwrap();
    let name = format!("{}_timeseries.csv", stat.experiment_id);
    let a = fs::read_to_string(da.join(&name)).unwrap();
    let b = fs::read_to_string(db.join(&name)).unwrap().replace(",topics-dynamic,", ",topics-static,");
    let same_obs = ra
        .iter()
        .zip(&rb)
        .all(|(x, y)| x.trials.iter().zip(&y.trials).all(|(s, t)| s.observations == t.observations));
    let pass = a == b && same_obs && !a.is_empty();
    let detail = format!("timeseries identical: {}, observation logs identical: {same_obs}", a == b);
    let mut all = ra;
    all.extend(rb);
    (verdict(9, "dynamics isolation", pass, detail), all)
}

fn lowdata_study(mf: &Params) -> StudyConfig {
    let mut c = desk_config(
        "topics-static-lowdata",
        &["mf"],
        "",
        "n_initial = 200\nusers_per_step = 50\ntarget = 8000\nfinal_window = 1000",
    );
    c.policies = vec!["greedy".parse().unwrap(), "eps:0.2".parse().unwrap()];
    c.rec_params.insert("mf".into(), mf.clone());
    c
}

fn criterion_10(mf: &Params) -> (Verdict, Vec<ExperimentResult>) {
    let study = lowdata_study(mf);
    let results = run_study(&study, &BuiltinFactory).unwrap();
    let pop = |policy: &str| {
        let r = results.iter().find(|r| r.config.policy.to_string() == policy).unwrap();
        let v: Vec<f64> = r.trials.iter().map(|t| t.final_population_rmse.unwrap()).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (greedy, eps) = (pop("greedy"), pop("eps:0.2"));
    (
        verdict(10, "low-data exploration", eps < greedy, format!("final population RMSE greedy {greedy:.4}, eps:0.2 {eps:.4}")),
        results,
    )
}

fn criterion_11(desk: &[DeskRun], out: &Path, mf: &Params) -> Verdict {
    let mut notes = Vec::new();
    let mut pass = true;
    for d in desk {
        let again = run_desk(&d.env, &out.join("rerun"));
        let same = again.files == d.files;
        pass &= same;
        notes.push(format!("{} {}", d.env, if same { "identical" } else { "DIFFERENT" }));
    }
    let study = lowdata_study(mf);
    let a = run_study(&study, &BuiltinFactory).unwrap();
    let b = run_study(&study, &BuiltinFactory).unwrap();
    write_results(&study, &a, &out.join("low-a")).unwrap();
    write_results(&study, &b, &out.join("low-b")).unwrap();
    let same = csv_bytes(&out.join("low-a")) == csv_bytes(&out.join("low-b"));
    pass &= same;
    notes.push(format!("lowdata {}", if same { "identical" } else { "DIFFERENT" }));
    verdict(11, "determinism", pass, notes.join(", "))
}

fn criterion_12(all: &[&ExperimentResult]) -> Verdict {
    let mut trials = 0;
    let mut bad = Vec::new();
    for r in all {
        let target = r.config.schedule.target_total;
        for t in &r.trials {
            trials += 1;
            let online: usize = t.records.iter().map(|x| x.n_new_ratings).sum();
            let mut pairs = HashSet::new();
            let unique = t.observations.iter().all(|o| pairs.insert((o.user, o.item)));
            let steps_contiguous = t.records.iter().enumerate().all(|(k, x)| x.timestep as usize == k + 1);
            if t.observations.len() != target
                || online + r.config.schedule.n_initial != target
                || !unique
                || !steps_contiguous
            {
                bad.push(format!("{}/{}/{} trial {}", r.config.env.name, r.config.recommender, r.config.policy, t.trial));
            }
        }
    }
    verdict(12, "conservation", bad.is_empty(), format!("{trials} trials checked; violations: {bad:?}"))
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    let mut verdicts = vec![criterion_1(), criterion_2(), criterion_3(), criterion_4()];

    let desk: Vec<DeskRun> = DESK_ENVS.iter().map(|e| run_desk(e, out)).collect();
    let mf = desk[0]
        .results
        .iter()
        .find(|r| r.config.recommender == "mf")
        .unwrap()
        .config
        .params
        .clone();
    verdicts.push(criterion_5(&desk));
    verdicts.push(criterion_6(&desk));
    verdicts.push(criterion_7(&desk));
    verdicts.push(criterion_8(&desk));
    let (v9, iso) = criterion_9(out);
    verdicts.push(v9);
    let (v10, low) = criterion_10(&mf);
    verdicts.push(v10);
    verdicts.push(criterion_11(&desk, out, &mf));
    let mut all: Vec<&ExperimentResult> = desk.iter().flat_map(|d| d.results.iter()).collect();
    all.extend(iso.iter());
    all.extend(low.iter());
    verdicts.push(criterion_12(&all));

    verdicts.sort_by_key(|v| v.id);
    let mut failed = 0;
    for v in &verdicts {
        println!(
            "criterion {:>2} {:<28} {}  {}",
            v.id,
            v.name,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        verdicts.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
