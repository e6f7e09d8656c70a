//! TOML run configuration.
//!
//! Every key is optional; unknown keys are rejected. Command-line flags override file values.
//!
//! ```toml
//! seed = 7
//!
//! [prior]
//! pool = "benchmark"        # "default", "benchmark" or "finance"
//! operators = ["add", "mul", "exp", "lt"]   # replaces the pool
//! operator_weights = [0.25, 0.25, 0.25, 0.25]
//! feature_weights = [0.5, 0.5]
//! alpha = 0.4
//! beta = 1.2
//! k = 2
//! max_depth = 15
//! nu_a = 2.0
//! lambda_a = 1.0
//! nu_b = 2.0
//! lambda_b = 1.0
//! nu = 2.0
//! lambda = 1.0
//!
//! [run]
//! proposals = 20000
//! target_acceptances = 500  # switches to an acceptance budget
//! max_proposals = 1000000   # cap for the acceptance budget
//! burn_in = 4000            # default: 20% of proposals
//! thinning = 1
//! gibbs_noise = false
//! early_stop = 2000
//! trace = true
//!
//! [moves]
//! stay_scale = 4.0
//! stay_offset = 3.0
//! grow_scale = 8.0
//! delete_offset = 3.0
//!
//! [bench]
//! tasks = ["f1", "f2", "f3", "f4", "f5", "f6"]
//! replicates = 10
//! k_values = [2, 4, 8]
//!
//! [finance]
//! runs = 20
//! train_fraction = 0.8
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use symreg_core::bench::TaskId;
use symreg_core::expr::{OperatorSet, OperatorSpec};
use symreg_core::moves::MoveConstants;
use symreg_core::prior::PriorConfig;
use symreg_core::sampler::{Budget, RunConfig};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub seed: Option<u64>,
    pub prior: PriorSection,
    pub run: RunSection,
    pub moves: MovesSection,
    pub bench: BenchSection,
    pub finance: FinanceSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
    pub pool: Option<String>,
    pub operators: Option<Vec<String>>,
    pub operator_weights: Option<Vec<f64>>,
    pub feature_weights: Option<Vec<f64>>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub k: Option<usize>,
    pub max_depth: Option<usize>,
    pub nu_a: Option<f64>,
    pub lambda_a: Option<f64>,
    pub nu_b: Option<f64>,
    pub lambda_b: Option<f64>,
    pub nu: Option<f64>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub proposals: Option<u64>,
    pub target_acceptances: Option<u64>,
    pub max_proposals: Option<u64>,
    pub burn_in: Option<u64>,
    pub thinning: Option<u64>,
    pub gibbs_noise: Option<bool>,
    pub early_stop: Option<u64>,
    pub trace: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MovesSection {
    pub stay_scale: Option<f64>,
    pub stay_offset: Option<f64>,
    pub grow_scale: Option<f64>,
    pub delete_offset: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub tasks: Option<Vec<String>>,
    pub replicates: Option<usize>,
    pub k_values: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinanceSection {
    pub runs: Option<usize>,
    pub train_fraction: Option<f64>,
}

pub const DEFAULT_PROPOSALS: u64 = 20_000;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_REPLICATES: usize = 10;
pub const DEFAULT_K_VALUES: [usize; 3] = [2, 4, 8];

impl Settings {
    pub fn parse(text: &str) -> AppResult<Self> {
        toml::from_str(text).map_err(|e| AppError::Config(e.message().to_string()))
    }

    pub fn load(path: Option<&Path>) -> AppResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| AppError::Config(format!("{}: {e}", p.display())))?;
                Self::parse(&text).map_err(|e| match e {
                    AppError::Config(m) => AppError::Config(format!("{}: {m}", p.display())),
                    other => other,
                })
            }
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn operators(&self, fallback: &OperatorSet) -> AppResult<OperatorSet> {
        let p = &self.prior;
        let base = match p.pool.as_deref() {
            None => fallback.clone(),
            Some("default") => OperatorSet::default_pool(),
            Some("benchmark") => OperatorSet::benchmark_pool(),
            Some("finance") => OperatorSet::finance_pool(),
            Some(other) => return Err(AppError::Config(format!("unknown operator pool `{other}`"))),
        };
        let names: Vec<String> = match &p.operators {
            Some(names) => names.clone(),
            None => base.names().into_iter().map(str::to_string).collect(),
        };
        let specs = names
            .iter()
            .map(|n| OperatorSpec::builtin(n).ok_or_else(|| AppError::Config(format!("unknown operator `{n}`"))))
            .collect::<AppResult<Vec<_>>>()?;
        let set = match &p.operator_weights {
            Some(w) if w.len() != specs.len() => {
                return Err(AppError::Config(format!(
                    "operator_weights has {} entries for {} operators",
                    w.len(),
                    specs.len()
                )))
            }
            Some(w) => OperatorSet::new(specs, w.clone()),
            None if p.operators.is_none() => Ok(base),
            None => OperatorSet::uniform(specs),
        };
        set.map_err(|e| AppError::Config(e.to_string()))
    }

    /// Prior for `n_features` predictors; `fallback` is the pool used when none is configured.
    pub fn prior(&self, n_features: usize, fallback: &OperatorSet) -> AppResult<PriorConfig> {
        let p = &self.prior;
        let mut prior = PriorConfig::new(self.operators(fallback)?, n_features);
        if let Some(w) = &p.feature_weights {
            if w.len() != n_features {
                return Err(AppError::Config(format!(
                    "feature_weights has {} entries for {n_features} features",
                    w.len()
                )));
            }
            prior.feature_weights = w.clone();
        }
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut prior.alpha, p.alpha);
        set(&mut prior.beta, p.beta);
        set(&mut prior.nu_a, p.nu_a);
        set(&mut prior.lambda_a, p.lambda_a);
        set(&mut prior.nu_b, p.nu_b);
        set(&mut prior.lambda_b, p.lambda_b);
        set(&mut prior.nu, p.nu);
        set(&mut prior.lambda, p.lambda);
        if let Some(k) = p.k {
            prior.k = k;
        }
        if let Some(d) = p.max_depth {
            prior.max_depth = d;
        }
        prior.validate().map_err(|e| AppError::Config(e.to_string()))?;
        Ok(prior)
    }

    pub fn moves(&self) -> MoveConstants {
        let m = &self.moves;
        let d = MoveConstants::default();
        MoveConstants {
            stay_scale: m.stay_scale.unwrap_or(d.stay_scale),
            stay_offset: m.stay_offset.unwrap_or(d.stay_offset),
            grow_scale: m.grow_scale.unwrap_or(d.grow_scale),
            delete_offset: m.delete_offset.unwrap_or(d.delete_offset),
        }
    }

    pub fn run_config(&self, n_features: usize, fallback: &OperatorSet) -> AppResult<RunConfig> {
        let r = &self.run;
        let proposals = r.proposals.unwrap_or(DEFAULT_PROPOSALS);
        let mut cfg = RunConfig::new(self.prior(n_features, fallback)?, proposals, self.seed());
        if let Some(target) = r.target_acceptances {
            cfg.budget = Budget::Acceptances {
                target,
                max_proposals: r.max_proposals.unwrap_or(proposals.max(target) * 100),
            };
        }
        cfg.moves = self.moves();
        if let Some(b) = r.burn_in {
            cfg.burn_in = b;
        }
        cfg.thinning = r.thinning.unwrap_or(1);
        cfg.gibbs_noise = r.gibbs_noise.unwrap_or(false);
        cfg.early_stop = r.early_stop;
        cfg.record_trace = r.trace.unwrap_or(true);
        cfg.validate().map_err(|e| AppError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn tasks(&self) -> AppResult<Vec<TaskId>> {
        match &self.bench.tasks {
            None => Ok(TaskId::ALL.to_vec()),
            Some(names) => parse_tasks(names.iter().map(String::as_str)),
        }
    }

    pub fn replicates(&self) -> usize {
        self.bench.replicates.unwrap_or(DEFAULT_REPLICATES)
    }

    pub fn k_values(&self) -> Vec<usize> {
        self.bench.k_values.clone().unwrap_or_else(|| DEFAULT_K_VALUES.to_vec())
    }
}

pub fn parse_tasks<'a>(names: impl IntoIterator<Item = &'a str>) -> AppResult<Vec<TaskId>> {
    names
        .into_iter()
        .map(|n| n.trim().parse::<TaskId>().map_err(|e| AppError::Config(e.to_string())))
        .collect()
}
