//! Command-line interface.
//!
//! Values come from, in increasing precedence: built-in defaults, the `--config` TOML file,
//! and command-line flags. Output goes to `--out`, else `$SYMREG_OUT`, else `./symreg-out`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use symreg_core::bench::TaskId;
use symreg_core::expr::OperatorSet;
use symreg_core::sampler::{init_chain, run_from, Budget, RunConfig};

use crate::artifacts::{
    operator_names, render_trace, ArtifactContext, BestSoFar, Checkpoint, ModelArtifact,
};
use crate::config::{parse_tasks, Settings};
use crate::csv_io::{load_csv, read_table};
use crate::error::{AppError, AppResult};
use crate::{finance, harness};

pub const OUT_ENV: &str = "SYMREG_OUT";
pub const DEFAULT_OUT: &str = "symreg-out";

#[derive(Debug, Parser)]
#[command(name = "symreg", version, about = "Bayesian symbolic regression with reversible-jump MCMC", args_override_self = true)]
pub struct Cli {
    /// Increase log output (-v info, -vv debug, -vvv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a mixture of expression trees to a CSV file.
    Fit(FitArgs),
    /// Run replicated benchmark tasks.
    Bench(BenchArgs),
    /// Compare numbers of trees on one benchmark task.
    Ksens(KsensArgs),
    /// Evaluate a saved model on a CSV file and print its RMSE as JSON.
    Eval(EvalArgs),
    /// Predict the direction of next-day returns from open/high/low/close prices.
    DemoFinance(FinanceArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = OUT_ENV, default_value = DEFAULT_OUT)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Total proposals per chain.
    #[arg(long)]
    pub proposals: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Response column.
    #[arg(long, default_value = "y")]
    pub target: String,
    /// Number of trees.
    #[arg(long)]
    pub k: Option<usize>,
    /// Continue from a checkpoint written by an earlier fit.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated task names.
    #[arg(long, value_delimiter = ',')]
    pub tasks: Option<Vec<String>>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Also write one trace CSV per replicate.
    #[arg(long)]
    pub traces: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct KsensArgs {
    #[arg(long)]
    pub task: String,
    /// Comma-separated numbers of trees.
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Response column; defaults to the one the model was fitted on.
    #[arg(long)]
    pub target: Option<String>,
}

#[derive(Debug, Args)]
pub struct FinanceArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.verbose);
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
}

pub fn execute(cmd: Command) -> AppResult<()> {
    match cmd {
        Command::Fit(a) => fit(a),
        Command::Bench(a) => bench(a),
        Command::Ksens(a) => ksens(a),
        Command::Eval(a) => eval(a),
        Command::DemoFinance(a) => demo_finance(a),
    }
}

fn settings(c: &Common) -> AppResult<Settings> {
    let mut s = Settings::load(c.config.as_deref())?;
    if let Some(seed) = c.seed {
        s.seed = Some(seed);
    }
    if let Some(p) = c.proposals {
        s.run.proposals = Some(p);
        s.run.target_acceptances = None;
        if s.run.burn_in.is_some_and(|b| b >= p) {
            s.run.burn_in = None;
        }
    }
    Ok(s)
}

fn check_input(path: &Path) -> AppResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(AppError::Usage(format!("{}: no such file", path.display())))
    }
}

fn fit(a: FitArgs) -> AppResult<()> {
    check_input(&a.data)?;
    let mut s = settings(&a.common)?;
    if let Some(k) = a.k {
        s.prior.k = Some(k);
    }
    let (data, features) = load_csv(&a.data, &a.target)?;
    let cfg = s.run_config(data.d(), &OperatorSet::default_pool())?;
    let ops = &cfg.prior.ops;

    let (state, mut rng, prior_best) = match &a.resume {
        Some(path) => {
            check_input(path)?;
            let cp = Checkpoint::load(path)?;
            if cp.operators != operator_names(ops) {
                return Err(AppError::Config(format!(
                    "{}: checkpoint operators {:?} differ from the configured {:?}",
                    path.display(),
                    cp.operators,
                    operator_names(ops)
                )));
            }
            let state: symreg_core::sampler::ChainState = cp.state.into();
            if state.model.k() != cfg.prior.k {
                return Err(AppError::Config(format!(
                    "checkpoint has {} trees, configuration asks for {}",
                    state.model.k(),
                    cfg.prior.k
                )));
            }
            (state, cp.rng, cp.best)
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let state = init_chain(&cfg, &data, &mut rng)?;
            (state, rng, None)
        }
    };
    log::info!(
        "fitting K = {} trees to {} rows, {} features, {}",
        cfg.prior.k,
        data.n(),
        data.d(),
        describe_budget(cfg.budget)
    );
    let out = run_from(state, &cfg, &data, &mut rng)?;
    let new_best = (!out.records.is_empty()).then(|| BestSoFar {
        model: out.best.clone(),
        rss: out.best_rss,
    });
    let best = match (prior_best, new_best) {
        (Some(p), Some(n)) => Some(if p.rss <= n.rss { p } else { n }),
        (p, n) => p.or(n),
    };
    let best_model = best.as_ref().map_or(&out.best, |b| &b.model);

    let ctx = ArtifactContext {
        seed: cfg.seed,
        target: &a.target,
        features: &features,
        ops,
        data: &data,
    };
    let artifact = ModelArtifact::new(&ctx, best_model, &out.final_state)?;
    let checkpoint = Checkpoint {
        seed: cfg.seed,
        operators: operator_names(ops),
        operator_weights: ops.weights().to_vec(),
        state: (&out.final_state).into(),
        rng,
        best,
    };
    let mut files = vec![
        ("model.json".into(), artifact.to_json()),
        ("summary.txt".into(), artifact.summary()),
        ("checkpoint.json".into(), checkpoint.to_json()),
    ];
    if cfg.record_trace {
        files.push(("trace.csv".into(), render_trace(&out.trace)));
    }
    crate::artifacts::write_all(&a.common.out, &files)?;
    print!("{}", artifact.summary());
    println!("\nwrote {}", a.common.out.display());
    Ok(())
}

fn bench_config(s: &Settings) -> AppResult<RunConfig> {
    let mut cfg = s.run_config(2, &OperatorSet::benchmark_pool())?;
    cfg.record_trace = false;
    Ok(cfg)
}

fn bench(a: BenchArgs) -> AppResult<()> {
    let mut s = settings(&a.common)?;
    if let Some(k) = a.k {
        s.prior.k = Some(k);
    }
    let tasks = match &a.tasks {
        Some(t) => parse_tasks(t.iter().map(String::as_str))?,
        None => s.tasks()?,
    };
    let reps = a.replicates.unwrap_or_else(|| s.replicates());
    let mut cfg = bench_config(&s)?;
    cfg.record_trace = a.traces;
    let seed = s.seed();
    let mut reports = Vec::new();
    for task in tasks {
        log::info!("{task}: {reps} replicates");
        reports.push(harness::run_replicates(task, &cfg, reps, seed)?);
    }
    let mut files = vec![
        ("report.md".into(), harness::render_markdown("Benchmark", &reports)),
        ("report.json".into(), harness::render_json(&reports)),
    ];
    if a.traces {
        for r in &reports {
            for rep in &r.replicates {
                files.push((
                    PathBuf::from("traces").join(format!("{}_k{}_rep{}.csv", r.task, r.k, rep.replicate)),
                    render_trace(&rep.trace),
                ));
            }
        }
    }
    crate::artifacts::write_all(&a.common.out, &files)?;
    print!("{}", files[0].1);
    Ok(())
}

fn ksens(a: KsensArgs) -> AppResult<()> {
    let s = settings(&a.common)?;
    let task: TaskId = a.task.parse().map_err(|e: symreg_core::Error| AppError::Config(e.to_string()))?;
    let ks = a.k.clone().unwrap_or_else(|| s.k_values());
    if ks.is_empty() || ks.contains(&0) {
        return Err(AppError::Config("numbers of trees must be positive".into()));
    }
    let reps = a.replicates.unwrap_or_else(|| s.replicates());
    let cfg = bench_config(&s)?;
    let reports = harness::k_sensitivity(task, &ks, &cfg, reps, s.seed())?;
    let files = vec![
        ("report.md".into(), harness::render_markdown("Sensitivity to the number of trees", &reports)),
        ("report.json".into(), harness::render_json(&reports)),
    ];
    crate::artifacts::write_all(&a.common.out, &files)?;
    print!("{}", files[0].1);
    Ok(())
}

fn eval(a: EvalArgs) -> AppResult<()> {
    check_input(&a.model)?;
    check_input(&a.data)?;
    let art = ModelArtifact::load(&a.model)?;
    let (model, ops) = art.to_model()?;
    let target = a.target.as_deref().unwrap_or(&art.target);
    let (data, features) = load_csv(&a.data, target)?;
    if features.len() != art.features.len() {
        return Err(AppError::Config(format!(
            "model expects {} predictors, {} has {}",
            art.features.len(),
            a.data.display(),
            features.len()
        )));
    }
    let rmse = model.rmse_on(&ops, &data)?;
    let out = serde_json::json!({
        "rmse": if rmse.is_finite() { serde_json::json!(rmse) } else { serde_json::json!(rmse.to_string()) },
        "n": data.n(),
        "target": target,
    });
    println!("{out}");
    Ok(())
}

fn demo_finance(a: FinanceArgs) -> AppResult<()> {
    check_input(&a.data)?;
    let mut s = settings(&a.common)?;
    if let Some(k) = a.k {
        s.prior.k = Some(k);
    }
    let fraction = a.train_fraction.or(s.finance.train_fraction).unwrap_or(0.8);
    let runs = a.runs.or(s.finance.runs).unwrap_or(20);
    let table = read_table(&a.data)?;
    let data = finance::prepare(&table, fraction)?;
    let mut cfg = s.run_config(data.train.d(), &OperatorSet::finance_pool())?;
    cfg.record_trace = false;
    let report = finance::run_finance(&data, &cfg, runs, s.seed())?;
    let md = finance::render_markdown(&report);
    let mut json = serde_json::to_string_pretty(&report).expect("serializable report");
    json.push('\n');
    crate::artifacts::write_all(&a.common.out, &[("report.md".into(), md.clone()), ("report.json".into(), json)])?;
    print!("{md}");
    Ok(())
}

/// Budget description used in log messages.
pub fn describe_budget(b: Budget) -> String {
    match b {
        Budget::Proposals(n) => format!("{n} proposals"),
        Budget::Acceptances { target, max_proposals } => format!("{target} acceptances (at most {max_proposals} proposals)"),
    }
}
