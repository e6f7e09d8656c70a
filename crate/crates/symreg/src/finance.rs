//! Next-day direction of a price series from its daily open, high, low and close.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use symreg_core::bench::returns_transform;
use symreg_core::expr::DataMatrix;
use symreg_core::mixture::sign_accuracy;
use symreg_core::sampler::{run, RunConfig};

use crate::artifacts::{float_repr, render_formula};
use crate::csv_io::Table;
use crate::error::{AppError, AppResult};
use crate::harness::Stats;

pub const PRICE_COLUMNS: [&str; 4] = ["open", "high", "low", "close"];

/// Chronologically split predictors and direction labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FinanceData {
    pub train: DataMatrix,
    pub test: DataMatrix,
    pub features: Vec<String>,
}

/// Day `t`'s prices predict the sign of the return from `t` to `t + 1`. The first
/// `train_fraction` of the days train, the rest test.
pub fn prepare(table: &Table, train_fraction: f64) -> AppResult<FinanceData> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(AppError::Config("train_fraction must lie strictly between 0 and 1".into()));
    }
    let columns = PRICE_COLUMNS
        .iter()
        .map(|c| table.column(c).map(<[f64]>::to_vec))
        .collect::<Result<Vec<_>, _>>()?;
    let labels = returns_transform(&columns[3])?.labels;
    let m = labels.len();
    let n_train = ((m as f64) * train_fraction).floor() as usize;
    if n_train < 2 || m - n_train < 1 {
        return Err(AppError::Config(format!("{m} labelled days are too few for this split")));
    }
    let slice = |lo: usize, hi: usize| {
        let x = columns.iter().map(|c| c[lo..hi].to_vec()).collect();
        DataMatrix::from_columns(x, Some(labels[lo..hi].to_vec()))
    };
    Ok(FinanceData {
        train: slice(0, n_train)?,
        test: slice(n_train, m)?,
        features: PRICE_COLUMNS.iter().map(|s| s.to_string()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinanceRun {
    pub run: usize,
    #[serde(with = "float_repr")]
    pub train_accuracy: f64,
    #[serde(with = "float_repr")]
    pub test_accuracy: f64,
    /// Kept when the training accuracy beats chance.
    pub selected: bool,
    pub formula: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinanceReport {
    pub seed: u64,
    pub k: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub runs: Vec<FinanceRun>,
    pub selected: usize,
    pub test_accuracy_selected: Option<Stats>,
    pub test_accuracy_all: Option<Stats>,
}

/// Runs independent chains (stream `r` of `seed` for run `r`) and keeps those whose
/// training sign accuracy exceeds one half.
pub fn run_finance(data: &FinanceData, cfg: &RunConfig, runs: usize, seed: u64) -> AppResult<FinanceReport> {
    if runs == 0 {
        return Err(AppError::Config("at least one run is required".into()));
    }
    let ops = &cfg.prior.ops;
    let results = (0..runs)
        .into_par_iter()
        .map(|r| -> AppResult<FinanceRun> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let out = run(cfg, &data.train, &mut rng)?;
            let acc = |d: &DataMatrix| -> AppResult<f64> {
                let pred = out.best.predict(ops, d)?;
                Ok(sign_accuracy(&pred, d.y().expect("labelled"))?)
            };
            let train_accuracy = acc(&data.train)?;
            Ok(FinanceRun {
                run: r,
                train_accuracy,
                test_accuracy: acc(&data.test)?,
                selected: train_accuracy > 0.5,
                formula: render_formula(&out.best, ops, &data.features)?,
            })
        })
        .collect::<AppResult<Vec<_>>>()?;
    let chosen: Vec<f64> = results.iter().filter(|r| r.selected).map(|r| r.test_accuracy).collect();
    let all: Vec<f64> = results.iter().map(|r| r.test_accuracy).collect();
    Ok(FinanceReport {
        seed,
        k: cfg.prior.k,
        n_train: data.train.n(),
        n_test: data.test.n(),
        selected: chosen.len(),
        test_accuracy_selected: Stats::of(&chosen),
        test_accuracy_all: Stats::of(&all),
        runs: results,
    })
}

pub fn render_markdown(r: &FinanceReport) -> String {
    let mut s = String::new();
    writeln!(s, "# Direction of next-day returns\n").unwrap();
    writeln!(
        s,
        "{} runs, K = {}, {} training days, {} test days, seed {}.\n",
        r.runs.len(),
        r.k,
        r.n_train,
        r.n_test,
        r.seed
    )
    .unwrap();
    let show = |st: &Option<Stats>| st.map_or("-".to_string(), |s| s.display());
    writeln!(s, "Selected runs (train accuracy > 0.5): {}\n", r.selected).unwrap();
    writeln!(s, "Test accuracy, selected: {}", show(&r.test_accuracy_selected)).unwrap();
    writeln!(s, "Test accuracy, all runs: {}\n", show(&r.test_accuracy_all)).unwrap();
    writeln!(s, "| run | train acc | test acc | selected | model |").unwrap();
    writeln!(s, "|---|---|---|---|---|").unwrap();
    for run in &r.runs {
        writeln!(
            s,
            "| {} | {:.3} | {:.3} | {} | `{}` |",
            run.run, run.train_accuracy, run.test_accuracy, run.selected, run.formula
        )
        .unwrap();
    }
    s
}
