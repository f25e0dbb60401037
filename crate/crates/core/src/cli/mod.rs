//! Command-line front end: `gen`, `collect`, `train`, `eval`, `explain` and
//! `oracle-check`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::instances::{generate, read_instance, write_instance, Family, FamilyParams, GeneratorConfig, MilpInstance};
use crate::model::RomeModel;
use crate::rng::derive_seed;
use crate::search::{
    compute_bks, evaluate_suite, explain, render_activation_csv, render_embedding_csv, write_report, EvalInstance,
    Method, SearchFractions,
};
use crate::solver::{branch_and_bound, brute_force, collect_pool_with, Fixings, Limits, PoolTemperature, SolutionPool};
use crate::trainer::{instance_files, load_domains, train, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "rome", version, about = "Learned predict-and-search for binary MILPs")]
pub struct Cli {
    /// Base seed for everything random in the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for instance-level parallelism (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic instances.
    Gen(GenArgs),
    /// Collect a solution pool beside every instance in a directory.
    Collect(CollectArgs),
    /// Train a model from a key=value config file.
    Train(TrainArgs),
    /// Compare the plain solver and checkpoints on a test directory.
    Eval(EvalArgs),
    /// Export routing weights and task embeddings.
    Explain(ExplainArgs),
    /// Check branch-and-bound against exhaustive search on small instances.
    OracleCheck(OracleArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub family: Family,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Binary variable count; other dimensions scale with it.
    #[arg(long)]
    pub vars: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CollectArgs {
    /// Directory of `*.milp` files.
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub pool_size: usize,
    /// `range` or a positive number.
    #[arg(long, default_value = "range")]
    pub temperature: PoolTemperature,
    #[arg(long, default_value_t = 1_000_000)]
    pub node_cap: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of `*.milp` test instances.
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// `label=path`; repeatable.
    #[arg(long = "checkpoint")]
    pub checkpoints: Vec<String>,
    /// Fixing fractions `k0,k1,delta` of the binary count.
    #[arg(long, default_value = "0.3,0.2,0.05")]
    pub fractions: SearchFractions,
    /// Node budget shared by every method.
    #[arg(long, default_value_t = 1000)]
    pub node_cap: usize,
    /// Node cap of the full solve that sets the best known value.
    #[arg(long, default_value_t = 1_000_000)]
    pub bks_node_cap: usize,
    /// Leave out the plain solver.
    #[arg(long)]
    pub no_baseline: bool,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    /// Largest binary count drawn (at most 22).
    #[arg(long, default_value_t = 12)]
    pub max_vars: usize,
    /// Where mismatching instances are written.
    #[arg(long, default_value = ".")]
    pub dump_dir: PathBuf,
}

/// Parses `args` (including the program name) and runs. Returns the exit
/// code: 0 success, 1 runtime failure, 2 usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: kind=usage msg={first}");
            return 2;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: kind={} msg={msg}", e.kind());
            1
        }
    }
}

/// Binary entry point.
pub fn main() -> i32 {
    let env = env_logger::Env::new().filter_or("ROME_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).try_init();
    run(std::env::args_os())
}

fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Argument(format!("cannot start {jobs} workers: {e}")))?;
    Ok(pool.install(f))
}

fn execute(cli: &Cli) -> Result<()> {
    let (name, args, out_dir) = match &cli.command {
        Command::Gen(a) => ("gen", cmd_gen(cli, a)?, a.out_dir.clone()),
        Command::Collect(a) => ("collect", with_jobs(cli.jobs, || cmd_collect(a))??, a.dir.clone()),
        Command::Train(a) => ("train", cmd_train(cli, a)?, a.out_dir.clone()),
        Command::Eval(a) => ("eval", with_jobs(cli.jobs, || cmd_eval(a))??, a.out_dir.clone()),
        Command::Explain(a) => ("explain", with_jobs(cli.jobs, || cmd_explain(a))??, a.out_dir.clone()),
        Command::OracleCheck(a) => ("oracle-check", cmd_oracle(cli, a)?, a.dump_dir.clone()),
    };
    write_manifest(&out_dir, name, cli, args)
}

fn write_manifest(dir: &Path, command: &str, cli: &Cli, args: Value) -> Result<()> {
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let manifest = json!({
        "tool": "rome",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": cli.seed,
        "jobs": cli.jobs,
        "args": args,
        "created_unix": created,
    });
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("run.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&path, e))
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn cmd_gen(cli: &Cli, a: &GenArgs) -> Result<Value> {
    let params = match a.vars {
        Some(v) => FamilyParams::with_vars(a.family, v),
        None => FamilyParams::default_for(a.family),
    };
    fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    for i in 0..a.count {
        let cfg = GeneratorConfig { params, seed: derive_seed(cli.seed, i as u64) };
        let inst = generate(&cfg)?;
        write_instance(&inst, a.out_dir.join(format!("{}.milp", inst.name)))?;
    }
    Ok(json!({
        "family": a.family.name(),
        "count": a.count,
        "out_dir": path_str(&a.out_dir),
        "params": format!("{params:?}"),
    }))
}

fn cmd_collect(a: &CollectArgs) -> Result<Value> {
    let files = instance_files(&a.dir)?;
    let limits = Limits::nodes(a.node_cap);
    let results: Vec<Result<()>> = files
        .par_iter()
        .map(|path| {
            let inst = read_instance(path)?;
            let pool = collect_pool_with(&inst, a.pool_size, &limits, a.temperature).map_err(|e| match e {
                Error::EmptyPool(_) => Error::Infeasible(format!("{}: no feasible solution found", path.display())),
                other => other,
            })?;
            pool.write(SolutionPool::path_for(path))
        })
        .collect();
    results.into_iter().collect::<Result<Vec<()>>>()?;
    Ok(json!({
        "dir": path_str(&a.dir),
        "instances": files.len(),
        "pool_size": a.pool_size,
        "temperature": format!("{:?}", a.temperature),
        "node_cap": a.node_cap,
    }))
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> Result<Value> {
    let mut cfg = TrainConfig::load(&a.config)?;
    if cli.seed != 0 {
        cfg.seed = cli.seed;
    }
    if let Some(e) = a.max_epochs {
        cfg.max_epochs = e;
    }
    if let Some(s) = a.max_steps {
        cfg.max_steps = s;
    }
    let domains = load_domains(&cfg.domains)?;
    let out = train(&cfg, &domains, &a.out_dir)?;
    let resolved = a.out_dir.join("train.cfg");
    fs::write(&resolved, cfg.to_kv()).map_err(|e| Error::io(&resolved, e))?;
    Ok(json!({
        "config": path_str(&a.config),
        "resolved_config": cfg.to_kv(),
        "epochs": out.epochs,
        "steps": out.steps,
        "initial_val": out.initial_val,
        "best_val": out.best_val,
        "stopped_early": out.stopped_early,
    }))
}

fn read_dir_instances(dir: &Path) -> Result<Vec<MilpInstance>> {
    instance_files(dir)?.iter().map(read_instance).collect()
}

fn cmd_eval(a: &EvalArgs) -> Result<Value> {
    let bks_limits = Limits::nodes(a.bks_node_cap);
    let cases = read_dir_instances(&a.instances)?
        .into_par_iter()
        .map(|instance| {
            let bks = compute_bks(&instance, &bks_limits)?;
            Ok(EvalInstance { instance, bks })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut loaded = Vec::new();
    for spec in &a.checkpoints {
        let (label, path) = spec
            .split_once('=')
            .ok_or_else(|| Error::Argument(format!("checkpoint must be label=path, got `{spec}`")))?;
        loaded.push((label.to_string(), RomeModel::load(path)?));
    }
    let mut methods = Vec::new();
    if !a.no_baseline {
        methods.push(Method::solver("solver"));
    }
    for (label, model) in &loaded {
        methods.push(Method::model(label.clone(), model, a.fractions));
    }
    if methods.is_empty() {
        return Err(Error::Argument("nothing to evaluate: no checkpoints and --no-baseline".into()));
    }
    let report = evaluate_suite(&methods, &cases, &Limits::nodes(a.node_cap));
    write_report(&report, &a.out_dir)?;
    Ok(json!({
        "instances": path_str(&a.instances),
        "checkpoints": a.checkpoints,
        "fractions": [a.fractions.k0, a.fractions.k1, a.fractions.delta],
        "node_cap": a.node_cap,
        "bks_node_cap": a.bks_node_cap,
        "baseline": !a.no_baseline,
    }))
}

fn cmd_explain(a: &ExplainArgs) -> Result<Value> {
    let model = RomeModel::load(&a.checkpoint)?;
    let rows = explain(&model, &read_dir_instances(&a.instances)?)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    for (name, text) in [("activation.csv", render_activation_csv(&rows)), ("embedding.csv", render_embedding_csv(&rows))] {
        let path = a.out_dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(json!({ "checkpoint": path_str(&a.checkpoint), "instances": path_str(&a.instances), "rows": rows.len() }))
}

/// Per-family pass counts of branch-and-bound against exhaustive search.
pub fn oracle_check(seed: u64, trials: usize, max_vars: usize) -> Result<Vec<(Family, usize, Vec<MilpInstance>)>> {
    if !(2..=crate::solver::BRUTE_FORCE_MAX_P).contains(&max_vars) {
        return Err(Error::Argument(format!(
            "max_vars must lie in 2..={}",
            crate::solver::BRUTE_FORCE_MAX_P
        )));
    }
    let mut report = Vec::new();
    for (f, family) in Family::ALL.into_iter().enumerate() {
        let mut passed = 0;
        let mut failures = Vec::new();
        for t in 0..trials {
            let s = derive_seed(derive_seed(seed, f as u64), t as u64);
            let vars = 2 + (s % (max_vars as u64 - 1)) as usize;
            let inst = generate(&GeneratorConfig { params: FamilyParams::with_vars(family, vars), seed: s })?;
            let bnb = branch_and_bound(&inst, &Fixings::none(inst.p), None, &Limits::default())?;
            let brute = brute_force(&inst)?;
            if bnb.objective == brute.objective {
                passed += 1;
            } else {
                failures.push(inst);
            }
        }
        report.push((family, passed, failures));
    }
    Ok(report)
}

fn cmd_oracle(cli: &Cli, a: &OracleArgs) -> Result<Value> {
    let report = oracle_check(cli.seed, a.trials, a.max_vars)?;
    let mut mismatched = Vec::new();
    let mut summary = serde_json::Map::new();
    for (family, passed, failures) in &report {
        let total = passed + failures.len();
        println!("{} {passed}/{total}", family.name());
        summary.insert(family.name().into(), json!({ "passed": passed, "total": total }));
        for inst in failures {
            fs::create_dir_all(&a.dump_dir).map_err(|e| Error::io(&a.dump_dir, e))?;
            let path = a.dump_dir.join(format!("{}.milp", inst.name));
            write_instance(inst, &path)?;
            mismatched.push(path_str(&path));
        }
    }
    if !mismatched.is_empty() {
        return Err(Error::OracleMismatch(format!("solver disagrees with exhaustive search on {}", mismatched.join(" "))));
    }
    Ok(json!({ "trials": a.trials, "max_vars": a.max_vars, "families": summary }))
}
