//! Replicated benchmark runs and their aggregate tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use symreg_core::bench::{gen_dataset, summarize, Split, Summary, TaskId};
use symreg_core::expr::{to_infix, Precision};
use symreg_core::moves::MoveConstants;
use symreg_core::sampler::{run, Budget, RunConfig, TraceRow};

use crate::artifacts::{float_repr, render_formula, DISPLAY_DIGITS};
use crate::error::{AppError, AppResult};

/// Summary statistics with JSON-safe floats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub n: usize,
    #[serde(with = "float_repr")]
    pub mean: f64,
    #[serde(with = "float_repr")]
    pub std: f64,
    #[serde(with = "float_repr")]
    pub median: f64,
    #[serde(with = "float_repr")]
    pub min: f64,
    #[serde(with = "float_repr")]
    pub max: f64,
}

impl From<Summary> for Stats {
    fn from(s: Summary) -> Self {
        Self {
            n: s.n,
            mean: s.mean,
            std: s.std,
            median: s.median,
            min: s.min,
            max: s.max,
        }
    }
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        summarize(values).map(Into::into)
    }

    /// `mean ± std`.
    pub fn display(&self) -> String {
        format!("{} ± {}", fmt_num(self.mean), fmt_num(self.std))
    }
}

fn fmt_num(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

/// Best-model RMSE on each split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRmse {
    #[serde(with = "float_repr")]
    pub train: f64,
    #[serde(with = "float_repr")]
    pub test_inner: f64,
    #[serde(with = "float_repr")]
    pub test_wide: f64,
    #[serde(with = "float_repr")]
    pub test_outer: f64,
}

impl SplitRmse {
    pub fn get(&self, split: Split) -> f64 {
        match split {
            Split::Train => self.train,
            Split::TestInner => self.test_inner,
            Split::TestWide => self.test_wide,
            Split::TestOuter => self.test_outer,
        }
    }

    fn set(&mut self, split: Split, v: f64) {
        match split {
            Split::Train => self.train = v,
            Split::TestInner => self.test_inner = v,
            Split::TestWide => self.test_wide = v,
            Split::TestOuter => self.test_outer = v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    /// The replicate's generator is `ChaCha8` seeded with `seed` on stream `stream`.
    pub seed: u64,
    pub stream: u64,
    pub rmse: SplitRmse,
    pub node_counts: Vec<usize>,
    pub total_nodes: usize,
    pub proposals: u64,
    pub accepted: u64,
    pub expressions: Vec<String>,
    pub formula: String,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

/// Aggregate over the replicates of one task and configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub task: TaskId,
    pub formula: String,
    pub k: usize,
    pub budget: Budget,
    pub moves: MoveConstants,
    pub seed: u64,
    pub n_replicates: usize,
    pub rmse: BTreeMap<Split, Stats>,
    pub total_nodes: Stats,
    pub replicates: Vec<ReplicateResult>,
}

impl ExperimentReport {
    /// Recomputes the aggregate tables from the stored replicate values.
    pub fn aggregate(&mut self) {
        for split in Split::ALL {
            let values: Vec<f64> = self.replicates.iter().map(|r| r.rmse.get(split)).collect();
            if let Some(s) = Stats::of(&values) {
                self.rmse.insert(split, s);
            }
        }
        let nodes: Vec<f64> = self.replicates.iter().map(|r| r.total_nodes as f64).collect();
        if let Some(s) = Stats::of(&nodes) {
            self.total_nodes = s;
        }
        self.n_replicates = self.replicates.len();
    }

    pub fn rmse_values(&self, split: Split) -> Vec<f64> {
        self.replicates.iter().map(|r| r.rmse.get(split)).collect()
    }

    pub fn node_values(&self) -> Vec<f64> {
        self.replicates.iter().map(|r| r.total_nodes as f64).collect()
    }
}

/// Runs `n_reps` independent chains on fresh datasets of `task`.
///
/// Replicate `r` draws everything from `ChaCha8Rng::seed_from_u64(seed)` on stream `r`: the
/// training set first, then the three test sets, then the chain.
pub fn run_replicates(task: TaskId, cfg: &RunConfig, n_reps: usize, seed: u64) -> AppResult<ExperimentReport> {
    if n_reps == 0 {
        return Err(AppError::Config("at least one replicate is required".into()));
    }
    cfg.validate().map_err(|e| AppError::Config(e.to_string()))?;
    if cfg.prior.n_features() != 2 {
        return Err(AppError::Config("benchmark tasks have two features".into()));
    }
    let replicates = (0..n_reps)
        .into_par_iter()
        .map(|r| run_one(task, cfg, r, seed))
        .collect::<AppResult<Vec<_>>>()?;
    let mut report = ExperimentReport {
        task,
        formula: task.formula().to_string(),
        k: cfg.prior.k,
        budget: cfg.budget,
        moves: cfg.moves,
        seed,
        n_replicates: n_reps,
        rmse: BTreeMap::new(),
        total_nodes: Stats::of(&[0.0]).expect("non-empty"),
        replicates,
    };
    report.aggregate();
    Ok(report)
}

fn run_one(task: TaskId, cfg: &RunConfig, r: usize, seed: u64) -> AppResult<ReplicateResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    let sets: Vec<_> = Split::ALL.iter().map(|s| (*s, gen_dataset(task, *s, &mut rng))).collect();
    let train = &sets[0].1;
    let out = run(cfg, train, &mut rng)?;
    let ops = &cfg.prior.ops;
    let mut rmse = SplitRmse {
        train: 0.0,
        test_inner: 0.0,
        test_wide: 0.0,
        test_outer: 0.0,
    };
    for (split, data) in &sets {
        rmse.set(*split, out.best.rmse_on(ops, data)?);
    }
    let features = ["x0".to_string(), "x1".to_string()];
    let expressions = out
        .best
        .trees
        .iter()
        .map(|t| to_infix(t, ops, Precision::Significant(DISPLAY_DIGITS)))
        .collect::<Result<Vec<_>, _>>()?;
    log::debug!("{task} replicate {r}: train rmse {}", rmse.train);
    Ok(ReplicateResult {
        replicate: r,
        seed,
        stream: r as u64,
        rmse,
        node_counts: out.best.trees.iter().map(|t| t.node_count()).collect(),
        total_nodes: out.best.total_nodes(),
        proposals: out.final_state.iteration,
        accepted: out.final_state.accept_count,
        expressions,
        formula: render_formula(&out.best, ops, &features)?,
        trace: out.trace,
    })
}

/// One [`run_replicates`] per number of trees, with identical datasets across `k_values`.
pub fn k_sensitivity(
    task: TaskId,
    k_values: &[usize],
    cfg: &RunConfig,
    n_reps: usize,
    seed: u64,
) -> AppResult<Vec<ExperimentReport>> {
    k_values
        .iter()
        .map(|&k| {
            let mut c = cfg.clone();
            c.prior.k = k;
            run_replicates(task, &c, n_reps, seed)
        })
        .collect()
}

/// Markdown table with one row per report.
pub fn render_markdown(title: &str, reports: &[ExperimentReport]) -> String {
    let mut s = String::new();
    writeln!(s, "# {title}\n").unwrap();
    write!(s, "| task | K | reps |").unwrap();
    for split in Split::ALL {
        write!(s, " RMSE {} |", split.label()).unwrap();
    }
    writeln!(s, " nodes |").unwrap();
    writeln!(s, "|---|---|---|---|---|---|---|---|").unwrap();
    for r in reports {
        write!(s, "| {} | {} | {} |", r.task, r.k, r.n_replicates).unwrap();
        for split in Split::ALL {
            match r.rmse.get(&split) {
                Some(st) => write!(s, " {} (median {}) |", st.display(), fmt_num(st.median)).unwrap(),
                None => write!(s, " - |").unwrap(),
            }
        }
        writeln!(s, " {} |", r.total_nodes.display()).unwrap();
    }
    for r in reports {
        writeln!(s, "\n## {} (K = {}): {}\n", r.task, r.k, r.formula).unwrap();
        for rep in &r.replicates {
            writeln!(
                s,
                "- replicate {} (seed {}, stream {}): train RMSE {}, `{}`",
                rep.replicate,
                rep.seed,
                rep.stream,
                fmt_num(rep.rmse.train),
                rep.formula
            )
            .unwrap();
        }
    }
    s
}

pub fn render_json(reports: &[ExperimentReport]) -> String {
    let mut s = serde_json::to_string_pretty(reports).expect("serializable report");
    s.push('\n');
    s
}
