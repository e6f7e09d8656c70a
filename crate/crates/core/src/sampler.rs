//! Metropolis-Hastings over the `K` trees of a mixture.
//!
//! Each proposal updates one tree: a structure move, the matching parameter jump and a fresh
//! noise variance drawn from its prior. The trees are visited in turn.

use alloc::vec::Vec;

#[allow(unused_imports)] // needed without std
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{DataMatrix, ExprTree};
use crate::jump::{jump_params, JumpPath};
use crate::mixture::{log_likelihood, MixedModel, OlsFit};
use crate::moves::{propose, MoveConstants, MoveTag};
use crate::prior::{log_hyperprior, log_prior_params, log_prior_structure, sample_scales, sample_tree_with_scales, PriorConfig, ScaleState};

/// When a run stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Budget {
    /// Total proposals over all trees.
    Proposals(u64),
    /// Accepted proposals, capped by a maximum number of proposals.
    Acceptances { target: u64, max_proposals: u64 },
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub prior: PriorConfig,
    pub moves: MoveConstants,
    pub budget: Budget,
    /// Proposals discarded before recording starts.
    pub burn_in: u64,
    /// Record every `thinning`-th proposal after burn-in.
    pub thinning: u64,
    pub seed: u64,
    pub record_trace: bool,
    /// Keep the noise variance fixed inside proposals and refresh it from its conditional
    /// after each sweep.
    pub gibbs_noise: bool,
    /// Replace the likelihood by a constant, so the chain targets the prior.
    pub ablate_likelihood: bool,
    /// Stop once the training RSS has not improved for this many proposals.
    pub early_stop: Option<u64>,
}

impl RunConfig {
    /// A proposal budget with 20% burn-in and no thinning.
    pub fn new(prior: PriorConfig, proposals: u64, seed: u64) -> Self {
        Self {
            prior,
            moves: MoveConstants::default(),
            budget: Budget::Proposals(proposals),
            burn_in: proposals / 5,
            thinning: 1,
            seed,
            record_trace: false,
            gibbs_noise: false,
            ablate_likelihood: false,
            early_stop: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        use alloc::string::ToString;
        self.prior.validate()?;
        let ok = match self.budget {
            Budget::Proposals(n) => n > 0,
            Budget::Acceptances { target, max_proposals } => target > 0 && max_proposals > 0,
        };
        if !ok {
            return Err(Error::InvalidConfig("budget must be positive".to_string()));
        }
        if self.thinning == 0 {
            return Err(Error::InvalidConfig("thinning must be at least 1".to_string()));
        }
        Ok(())
    }
}

/// The current model with cached likelihood and prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub model: MixedModel,
    pub log_lik: f64,
    pub log_prior: f64,
    /// Training residual sum of squares of the OLS fit.
    pub rss: f64,
    pub iteration: u64,
    pub accept_count: u64,
}

impl ChainState {
    pub fn train_rmse(&self, n: usize) -> f64 {
        (self.rss / n as f64).sqrt()
    }
}

/// Joint log prior of trees, `lt` parameters and all variances.
pub fn log_joint_prior(trees: &[ExprTree], scales: &ScaleState, cfg: &PriorConfig) -> Result<f64> {
    let mut total = log_hyperprior(scales, cfg)?;
    for t in trees {
        total += log_prior_structure(t, cfg)? + log_prior_params(t, scales);
    }
    Ok(total)
}

struct Fitted {
    beta: Vec<f64>,
    rss: f64,
    log_lik: f64,
}

fn fit(trees: &[ExprTree], scales: &ScaleState, cfg: &RunConfig, data: &DataMatrix) -> Result<Fitted> {
    if cfg.ablate_likelihood {
        return Ok(Fitted {
            beta: alloc::vec![0.0; trees.len() + 1],
            rss: f64::NAN,
            log_lik: 0.0,
        });
    }
    let y = data.y().ok_or(Error::Dimension("training data needs a response"))?;
    let design = crate::mixture::design_matrix(trees, &cfg.prior.ops, data)?;
    let OlsFit { beta, rss, .. } = crate::mixture::ols_fit(&design, y)?;
    let log_lik = log_likelihood(rss, data.n(), scales.sigma2)?;
    Ok(Fitted { beta, rss, log_lik })
}

fn state_from(trees: Vec<ExprTree>, scales: ScaleState, cfg: &RunConfig, data: &DataMatrix) -> Result<ChainState> {
    let f = fit(&trees, &scales, cfg, data)?;
    let log_prior = log_joint_prior(&trees, &scales, &cfg.prior)?;
    Ok(ChainState {
        model: MixedModel {
            trees,
            beta: f.beta,
            scales,
        },
        log_lik: f.log_lik,
        log_prior,
        rss: f.rss,
        iteration: 0,
        accept_count: 0,
    })
}

/// `K` trees drawn from the prior, retried until the design is finite on `data`; falls back to
/// single-feature trees.
pub fn init_chain<R: Rng + ?Sized>(cfg: &RunConfig, data: &DataMatrix, rng: &mut R) -> Result<ChainState> {
    cfg.validate()?;
    if cfg.prior.n_features() != data.d() {
        return Err(Error::LengthMismatch {
            left: cfg.prior.n_features(),
            right: data.d(),
        });
    }
    let k = cfg.prior.k;
    for _ in 0..100 {
        let scales = sample_scales(&cfg.prior, rng);
        let trees: Vec<ExprTree> = (0..k).map(|_| sample_tree_with_scales(&cfg.prior, &scales, rng)).collect();
        if let Ok(state) = state_from(trees, scales, cfg, data) {
            return Ok(state);
        }
    }
    let scales = sample_scales(&cfg.prior, rng);
    let feature = cfg.prior.feature_weights.iter().position(|w| *w > 0.0).unwrap_or(0);
    let trees = alloc::vec![ExprTree::terminal(feature); k];
    state_from(trees, scales, cfg, data).map_err(|_| Error::InitFailure)
}

/// What happened in one proposal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub tree_index: usize,
    pub tag: MoveTag,
    pub path: JumpPath,
    pub accepted: bool,
    /// Log acceptance ratio; negative infinity when the proposal is impossible.
    pub log_r: f64,
}

/// Proposes a new version of tree `j` and accepts it with probability `min(1, R)`. The state
/// changes only on acceptance.
pub fn step_tree<R: Rng + ?Sized>(
    state: &mut ChainState,
    j: usize,
    cfg: &RunConfig,
    data: &DataMatrix,
    rng: &mut R,
) -> Result<StepInfo> {
    if j >= state.model.k() {
        return Err(Error::InvalidSite(j));
    }
    let prior = &cfg.prior;
    let old_tree = &state.model.trees[j];
    let scales = state.model.scales;
    let out = propose(old_tree, prior, &cfg.moves, rng);
    let (new_tree, jump) = jump_params(old_tree, &out.mv, &out.new_tree, &scales, prior, rng)?;

    let mut new_scales = jump.new_scales;
    let mut log_q_noise = 0.0;
    if !cfg.gibbs_noise {
        let noise = prior.noise_prior();
        new_scales.sigma2 = noise.sample(rng);
        log_q_noise = noise.ln_pdf(scales.sigma2)? - noise.ln_pdf(new_scales.sigma2)?;
    }

    let mut trees = state.model.trees.clone();
    trees[j] = new_tree;
    let info = |accepted, log_r| StepInfo {
        tree_index: j,
        tag: out.mv.tag(),
        path: jump.path,
        accepted,
        log_r,
    };
    let fitted = match fit(&trees, &new_scales, cfg, data) {
        Ok(f) => f,
        Err(_) => return Ok(info(false, f64::NEG_INFINITY)),
    };
    let log_prior = log_joint_prior(&trees, &new_scales, prior)?;
    let log_r = (fitted.log_lik - state.log_lik)
        + (log_prior - state.log_prior)
        + (out.log_q_reverse - out.log_q_forward)
        + (jump.log_h_reverse - jump.log_h_forward)
        + jump.log_jacobian
        + log_q_noise;
    let log_r = if log_r.is_nan() { f64::NEG_INFINITY } else { log_r };
    let accepted = log_r >= 0.0 || rng.random::<f64>().ln() < log_r;
    if accepted {
        state.model = MixedModel {
            trees,
            beta: fitted.beta,
            scales: new_scales,
        };
        state.log_lik = fitted.log_lik;
        state.log_prior = log_prior;
        state.rss = fitted.rss;
        state.accept_count += 1;
    }
    Ok(info(accepted, log_r))
}

/// Draws the noise variance from its full conditional given the current fit.
pub fn gibbs_refresh_noise<R: Rng + ?Sized>(state: &mut ChainState, cfg: &RunConfig, data: &DataMatrix, rng: &mut R) -> Result<()> {
    let noise = cfg.prior.noise_prior();
    let sigma2 = if cfg.ablate_likelihood {
        noise.sample(rng)
    } else {
        let post = crate::math::InvGamma::new(noise.shape + data.n() as f64 / 2.0, noise.rate + state.rss / 2.0)?;
        post.sample(rng)
    };
    state.model.scales.sigma2 = sigma2;
    if !cfg.ablate_likelihood {
        state.log_lik = log_likelihood(state.rss, data.n(), sigma2)?;
    }
    state.log_prior = log_joint_prior(&state.model.trees, &state.model.scales, &cfg.prior)?;
    Ok(())
}

/// One line of the per-proposal trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: u64,
    pub tree_index: usize,
    #[serde(rename = "move")]
    pub tag: MoveTag,
    pub accepted: bool,
    pub log_lik: f64,
    pub sigma2: f64,
    pub total_nodes: usize,
    pub train_rmse: f64,
}

/// A recorded post-burn-in state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub iteration: u64,
    pub log_lik: f64,
    pub rss: f64,
    pub sigma2: f64,
    /// Node count of each tree.
    pub node_counts: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<ChainRecord>,
    pub trace: Vec<TraceRow>,
    /// Recorded state with the smallest training residual sum of squares, or the initial
    /// state when nothing was recorded.
    pub best: MixedModel,
    pub best_rss: f64,
    pub final_state: ChainState,
}

/// Initialises a chain and runs it.
pub fn run<R: Rng + ?Sized>(cfg: &RunConfig, data: &DataMatrix, rng: &mut R) -> Result<RunOutput> {
    let state = init_chain(cfg, data, rng)?;
    run_from(state, cfg, data, rng)
}

fn budget_reached(state: &ChainState, budget: Budget) -> bool {
    match budget {
        Budget::Proposals(n) => state.iteration >= n,
        Budget::Acceptances { target, max_proposals } => state.accept_count >= target || state.iteration >= max_proposals,
    }
}

/// Continues a chain from `state` until the budget is reached. Iteration counts carry over,
/// so a resumed run stops at the same point as an uninterrupted one.
pub fn run_from<R: Rng + ?Sized>(mut state: ChainState, cfg: &RunConfig, data: &DataMatrix, rng: &mut R) -> Result<RunOutput> {
    cfg.validate()?;
    let n = data.n();
    let mut records = Vec::new();
    let mut trace = Vec::new();
    let mut best = state.model.clone();
    let mut best_rss = state.rss;
    let mut recorded_any = false;
    let k = state.model.k();
    let mut lowest_rss = state.rss;
    let mut improved_at = state.iteration;
    while !budget_reached(&state, cfg.budget) {
        let j = (state.iteration % k as u64) as usize;
        let info = step_tree(&mut state, j, cfg, data, rng)?;
        state.iteration += 1;
        if cfg.gibbs_noise && j + 1 == k {
            gibbs_refresh_noise(&mut state, cfg, data, rng)?;
        }
        if cfg.record_trace {
            trace.push(TraceRow {
                iteration: state.iteration,
                tree_index: j,
                tag: info.tag,
                accepted: info.accepted,
                log_lik: state.log_lik,
                sigma2: state.model.scales.sigma2,
                total_nodes: state.model.total_nodes(),
                train_rmse: state.train_rmse(n),
            });
        }
        if state.iteration > cfg.burn_in && (state.iteration - cfg.burn_in).is_multiple_of(cfg.thinning) {
            records.push(ChainRecord {
                iteration: state.iteration,
                log_lik: state.log_lik,
                rss: state.rss,
                sigma2: state.model.scales.sigma2,
                node_counts: state.model.trees.iter().map(ExprTree::node_count).collect(),
            });
            if !recorded_any || state.rss < best_rss {
                best = state.model.clone();
                best_rss = state.rss;
                recorded_any = true;
            }
        }
        if state.rss < lowest_rss {
            lowest_rss = state.rss;
            improved_at = state.iteration;
        }
        if cfg.early_stop.is_some_and(|patience| state.iteration - improved_at >= patience) {
            break;
        }
    }
    Ok(RunOutput {
        records,
        trace,
        best,
        best_rss,
        final_state: state,
    })
}
