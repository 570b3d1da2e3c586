//! `onlinerec`: tune recommenders offline, run online simulations, and
//! correlate the two.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use onlinerec::dataio::{
    load_config, write_atomic, write_report, write_results, write_tuning, ResultFiles, StudyConfig,
};
use onlinerec::envs::ENVIRONMENTS;
use onlinerec::harness::{lowdata_policies, run_study, tune_study};
use onlinerec::recs::{BuiltinFactory, RECOMMENDERS};

const USAGE_ERROR: u8 = 1;
const RUNTIME_ERROR: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "onlinerec", version, about = "Simulate recommender systems in online settings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Grid-search hyperparameters on the offline dataset
    Tune(Common),
    /// Run the online experiment and write result files
    Run(Common),
    /// Correlate offline metrics with online mean rating
    Report(ReportArgs),
    /// List environments, recommenders and policies
    List,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Base seed, overriding the config
    #[arg(long)]
    seed: Option<u64>,
    /// Number of trials, overriding the config
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Directory holding *_summary.csv files
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

fn load(c: &Common) -> Result<StudyConfig> {
    let mut study = load_config(&c.config)?;
    if let Some(seed) = c.seed {
        study.seed = seed;
    }
    if let Some(trials) = c.trials {
        study.trials = trials;
    }
    study.validate()?;
    Ok(study)
}

fn with_pool<T: Send>(parallel: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = parallel {
        if n == 0 {
            bail!("--parallel must be at least 1");
        }
        b = b.num_threads(n);
    }
    b.build()?.install(f)
}

fn cmd_tune(c: &Common) -> Result<()> {
    let study = load(c)?;
    fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    let outcome = with_pool(c.parallel, || Ok(tune_study(&study, &BuiltinFactory)?))?;
    for s in &outcome.searches {
        info!("{}: best {:?}", s.recommender, s.best);
    }
    let tuning = c.out.join(format!("{}_tuning.csv", study.experiment_id));
    write_tuning(&outcome.searches, &tuning)?;
    let best_path = c.out.join(format!("{}_best.toml", study.experiment_id));
    write_atomic(&best_path, outcome.best.to_toml_string()?.as_bytes())?;
    // the written file must load back to the same config
    if load_config(&best_path)? != outcome.best {
        bail!("best config at {} does not reparse to itself", best_path.display());
    }
    println!("{}", best_path.display());
    Ok(())
}

fn remove_outputs(files: &ResultFiles) {
    for p in files.all() {
        let _ = fs::remove_file(p);
    }
}

fn cmd_run(c: &Common) -> Result<()> {
    let study = load(c)?;
    let files = ResultFiles::in_dir(&c.out, &study.experiment_id);
    let outcome = with_pool(c.parallel, || {
        let results = run_study(&study, &BuiltinFactory)?;
        Ok(write_results(&study, &results, &c.out)?)
    });
    match outcome {
        Ok(files) => {
            println!("{}", files.summary.display());
            Ok(())
        }
        Err(e) => {
            remove_outputs(&files);
            Err(e)
        }
    }
}

fn cmd_report(dir: &Path) -> Result<()> {
    let written = write_report(dir)?;
    if written.is_empty() {
        log::warn!("no correlations could be computed");
    }
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn cmd_list() {
    println!("environments: {}", ENVIRONMENTS.join(", "));
    println!("recommenders: {}", RECOMMENDERS.join(", "));
    let policies: Vec<String> = lowdata_policies().iter().map(|p| p.to_string()).collect();
    println!("policies: greedy, eps:<epsilon>, ts:<p> (e.g. {})", policies.join(", "));
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(USAGE_ERROR)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Tune(c) => cmd_tune(c),
        Command::Run(c) => cmd_run(c),
        Command::Report(r) => cmd_report(&r.out),
        Command::List => {
            cmd_list();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(RUNTIME_ERROR)
        }
    }
}
