//! Generative prior over tree structure, terminal features, `lt` parameters and variances.
//!
//! A node at depth `d` becomes non-terminal with probability `alpha * (1 + d)^(-beta)`
//! (zero at or beyond `max_depth`), picks its operator from the operator weights and recurses
//! into its children; otherwise it is a terminal and draws a feature from the feature weights.
//! Every sampler in this module has an exact log-density counterpart.

use alloc::vec::Vec;

#[allow(unused_imports)] // needed without std
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Affine, ExprTree, Node, OpId, OperatorSet};
use crate::math::{ln_weight, normal_ln_pdf, sample_categorical, sample_normal, InvGamma};

#[derive(Debug, Clone)]
pub struct PriorConfig {
    pub alpha: f64,
    pub beta: f64,
    pub ops: OperatorSet,
    /// `w_ft`, one weight per feature.
    pub feature_weights: Vec<f64>,
    pub nu_a: f64,
    pub lambda_a: f64,
    pub nu_b: f64,
    pub lambda_b: f64,
    pub nu: f64,
    pub lambda: f64,
    /// Number of additive trees.
    pub k: usize,
    /// Nodes at this depth or deeper are always terminal.
    pub max_depth: usize,
}

impl PriorConfig {
    pub const DEFAULT_ALPHA: f64 = 0.4;
    pub const DEFAULT_BETA: f64 = 1.2;
    pub const DEFAULT_MAX_DEPTH: usize = 15;

    /// Defaults with uniform feature weights over `n_features`.
    pub fn new(ops: OperatorSet, n_features: usize) -> Self {
        let w = 1.0 / n_features.max(1) as f64;
        Self {
            alpha: Self::DEFAULT_ALPHA,
            beta: Self::DEFAULT_BETA,
            ops,
            feature_weights: alloc::vec![w; n_features],
            nu_a: 2.0,
            lambda_a: 1.0,
            nu_b: 2.0,
            lambda_b: 1.0,
            nu: 2.0,
            lambda: 1.0,
            k: 2,
            max_depth: Self::DEFAULT_MAX_DEPTH,
        }
    }

    pub fn n_features(&self) -> usize {
        self.feature_weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        use alloc::string::ToString;
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.alpha >= 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in [0, 1)");
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return bad("beta must be finite and non-negative");
        }
        for (name, v) in [
            ("nu_a", self.nu_a),
            ("lambda_a", self.lambda_a),
            ("nu_b", self.nu_b),
            ("lambda_b", self.lambda_b),
            ("nu", self.nu),
            ("lambda", self.lambda),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(alloc::format!("{name} must be positive")));
            }
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.feature_weights.is_empty() {
            return bad("at least one feature is required");
        }
        if self.feature_weights.iter().any(|w| !(*w >= 0.0)) {
            return bad("feature weights must be non-negative");
        }
        if (self.feature_weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return bad("feature weights must sum to 1");
        }
        Ok(())
    }

    pub fn slope_scale_prior(&self) -> InvGamma {
        InvGamma::from_nu_lambda(self.nu_a, self.lambda_a).expect("validated hyperparameters")
    }

    pub fn intercept_scale_prior(&self) -> InvGamma {
        InvGamma::from_nu_lambda(self.nu_b, self.lambda_b).expect("validated hyperparameters")
    }

    pub fn noise_prior(&self) -> InvGamma {
        InvGamma::from_nu_lambda(self.nu, self.lambda).expect("validated hyperparameters")
    }

    pub fn feature_weight(&self, feature: usize) -> f64 {
        self.feature_weights.get(feature).copied().unwrap_or(0.0)
    }
}

/// Variances shared by the whole model: `lt` slope and intercept scales and the noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleState {
    pub sigma_a2: f64,
    pub sigma_b2: f64,
    pub sigma2: f64,
}

impl ScaleState {
    pub fn new(sigma_a2: f64, sigma_b2: f64, sigma2: f64) -> Result<Self> {
        for v in [sigma_a2, sigma_b2, sigma2] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::NonPositiveScale(v));
            }
        }
        Ok(Self {
            sigma_a2,
            sigma_b2,
            sigma2,
        })
    }
}

/// `alpha * (1 + depth)^(-beta)`, or zero once `depth >= max_depth`.
pub fn split_probability(depth: usize, cfg: &PriorConfig) -> f64 {
    if depth >= cfg.max_depth {
        0.0
    } else {
        cfg.alpha * (1.0 + depth as f64).powf(-cfg.beta)
    }
}

fn ln_split(depth: usize, cfg: &PriorConfig) -> f64 {
    ln_weight(split_probability(depth, cfg))
}

fn ln_terminate(depth: usize, cfg: &PriorConfig) -> f64 {
    ln_weight(1.0 - split_probability(depth, cfg))
}

/// Draws a subtree rooted at `depth`. `lt` nodes get identity parameters as placeholders.
pub fn generate_structure<R: Rng + ?Sized>(cfg: &PriorConfig, depth: usize, rng: &mut R) -> Node {
    if rng.random::<f64>() < split_probability(depth, cfg) {
        generate_operator_node(cfg, depth, rng)
    } else {
        Node::terminal(sample_categorical(&cfg.feature_weights, rng))
    }
}

/// Draws a non-terminal at `depth`: an operator from the operator weights and children from
/// the prior one level deeper.
pub fn generate_operator_node<R: Rng + ?Sized>(cfg: &PriorConfig, depth: usize, rng: &mut R) -> Node {
    let op = OpId(sample_categorical(cfg.ops.weights(), rng) as u16);
    let spec = cfg.ops.get(op).expect("sampled operator exists");
    let children = (0..spec.arity())
        .map(|_| generate_structure(cfg, depth + 1, rng))
        .collect();
    Node::Op {
        op,
        params: spec.has_params().then_some(Affine::IDENTITY),
        children,
    }
}

/// Log probability that [`generate_structure`] started at `depth` produces the structure and
/// features of `node`. Parameters are ignored.
pub fn log_generation(node: &Node, depth: usize, cfg: &PriorConfig) -> Result<f64> {
    match node {
        Node::Terminal { feature } => Ok(ln_terminate(depth, cfg) + ln_weight(cfg.feature_weight(*feature))),
        Node::Op { .. } => Ok(ln_split(depth, cfg) + log_operator_node(node, depth, cfg)?),
    }
}

/// Log probability that [`generate_operator_node`] at `depth` produces `node`.
pub fn log_operator_node(node: &Node, depth: usize, cfg: &PriorConfig) -> Result<f64> {
    let Node::Op { op, children, .. } = node else {
        return Err(Error::MalformedTree("expected a non-terminal node"));
    };
    let spec = cfg.ops.get(*op)?;
    if children.len() != spec.arity() {
        return Err(Error::InvalidTree {
            op: spec.name.clone(),
            expected: spec.arity(),
            found: children.len(),
        });
    }
    let mut total = ln_weight(cfg.ops.weight(*op));
    for c in children {
        total += log_generation(c, depth + 1, cfg)?;
    }
    Ok(total)
}

/// Log prior mass of the structure and features of `tree`.
pub fn log_prior_structure(tree: &ExprTree, cfg: &PriorConfig) -> Result<f64> {
    log_generation(&tree.root, 0, cfg)
}

/// Draws `n` parameter pairs i.i.d. from `a ~ N(1, sigma_a2)`, `b ~ N(0, sigma_b2)`.
pub fn draw_params<R: Rng + ?Sized>(n: usize, scales: &ScaleState, rng: &mut R) -> Vec<Affine> {
    (0..n)
        .map(|_| {
            let a = sample_normal(1.0, scales.sigma_a2, rng);
            let b = sample_normal(0.0, scales.sigma_b2, rng);
            Affine::new(a, b)
        })
        .collect()
}

/// Log density of parameter pairs under the `lt` prior.
pub fn log_params_density(params: &[Affine], scales: &ScaleState) -> f64 {
    params
        .iter()
        .map(|p| normal_ln_pdf(p.a, 1.0, scales.sigma_a2) + normal_ln_pdf(p.b, 0.0, scales.sigma_b2))
        .sum()
}

pub fn log_prior_params(tree: &ExprTree, scales: &ScaleState) -> f64 {
    log_params_density(&tree.params(), scales)
}

pub fn sample_scales<R: Rng + ?Sized>(cfg: &PriorConfig, rng: &mut R) -> ScaleState {
    ScaleState {
        sigma_a2: cfg.slope_scale_prior().sample(rng),
        sigma_b2: cfg.intercept_scale_prior().sample(rng),
        sigma2: cfg.noise_prior().sample(rng),
    }
}

/// Log hyperprior density of the `lt` scales `(sigma_a2, sigma_b2)` only.
pub fn log_param_scale_prior(sigma_a2: f64, sigma_b2: f64, cfg: &PriorConfig) -> Result<f64> {
    Ok(cfg.slope_scale_prior().ln_pdf(sigma_a2)? + cfg.intercept_scale_prior().ln_pdf(sigma_b2)?)
}

/// Log hyperprior density of all three variances.
pub fn log_hyperprior(scales: &ScaleState, cfg: &PriorConfig) -> Result<f64> {
    Ok(log_param_scale_prior(scales.sigma_a2, scales.sigma_b2, cfg)? + cfg.noise_prior().ln_pdf(scales.sigma2)?)
}

/// Draws a full tree (structure, features and parameters) given the scales.
pub fn sample_tree_with_scales<R: Rng + ?Sized>(cfg: &PriorConfig, scales: &ScaleState, rng: &mut R) -> ExprTree {
    let mut tree = ExprTree::new(generate_structure(cfg, 0, rng));
    let params = draw_params(tree.count_lt(), scales, rng);
    tree.set_params(&params).expect("one pair per lt node");
    tree
}

/// Draws scales from the hyperprior, then a tree given those scales.
pub fn sample_tree<R: Rng + ?Sized>(cfg: &PriorConfig, rng: &mut R) -> ExprTree {
    let scales = sample_scales(cfg, rng);
    sample_tree_with_scales(cfg, &scales, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use core::f64::consts::PI;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(alpha: f64, beta: f64) -> PriorConfig {
        let mut c = PriorConfig::new(OperatorSet::default_pool(), 2);
        c.alpha = alpha;
        c.beta = beta;
        c
    }

    #[test]
    fn split_probability_values() {
        assert_relative_eq!(split_probability(0, &cfg(0.4, 1.0)), 0.4);
        assert_relative_eq!(split_probability(3, &cfg(0.4, 0.0)), 0.4);
        assert_relative_eq!(split_probability(1, &cfg(0.4, 1.0)), 0.2);
        let c = cfg(0.4, 1.0);
        assert_eq!(split_probability(c.max_depth, &c), 0.0);
    }

    #[test]
    fn alpha_zero_gives_single_terminal() {
        let c = cfg(0.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(sample_tree(&c, &mut rng).node_count(), 1);
        }
    }

    #[test]
    fn root_terminal_frequency() {
        let c = cfg(0.4, 1.2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10_000;
        let terminal = (0..n).filter(|_| sample_tree(&c, &mut rng).root.is_terminal()).count();
        let freq = terminal as f64 / n as f64;
        assert!((freq - 0.6).abs() < 0.02, "{freq}");
    }

    #[test]
    fn degenerate_feature_weights() {
        let mut c = cfg(0.6, 0.5);
        c.feature_weights = alloc::vec![1.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            assert!(sample_tree(&c, &mut rng).features().iter().all(|f| *f == 0));
        }
    }

    #[test]
    fn single_terminal_log_prior() {
        let c = cfg(0.4, 1.0);
        let lp = log_prior_structure(&ExprTree::terminal(1), &c).unwrap();
        assert_relative_eq!(lp, (0.6f64 * 0.5).ln(), epsilon = 1e-14);
    }

    #[test]
    fn cos_of_sum_log_prior_by_hand() {
        // Pool of six with cos and + at 1/6 each.
        let ops = OperatorSet::from_names(&["cos", "add", "exp", "lt", "inv", "neg"]).unwrap();
        let mut c = PriorConfig::new(ops.clone(), 2);
        c.alpha = 0.4;
        c.beta = 1.0;
        let t = ExprTree::new(Node::unary(
            ops.find("cos").unwrap(),
            Node::binary(ops.find("add").unwrap(), Node::terminal(0), Node::terminal(1)),
        ));
        // root splits (0.4), child at depth 1 splits (0.2), two terminals at depth 2
        // terminate (1 - 0.4/3) and each pick a feature (1/2).
        let expected = 0.4f64.ln()
            + (1.0f64 / 6.0).ln()
            + 0.2f64.ln()
            + (1.0f64 / 6.0).ln()
            + 2.0 * ((1.0 - 0.4 / 3.0) * 0.5f64).ln();
        assert_relative_eq!(log_prior_structure(&t, &c).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn unknown_operator_is_an_error() {
        let c = cfg(0.4, 1.0);
        let t = ExprTree::new(Node::unary(OpId(42), Node::terminal(0)));
        assert!(matches!(log_prior_structure(&t, &c), Err(Error::UnknownOperator(_))));
    }

    #[test]
    fn parameter_prior_values() {
        let ops = OperatorSet::default_pool();
        let lt = ops.find("lt").unwrap();
        let s = ScaleState::new(1.0, 1.0, 1.0).unwrap();
        assert_eq!(log_prior_params(&ExprTree::terminal(0), &s), 0.0);
        let one = ExprTree::new(Node::affine(lt, Affine::IDENTITY, Node::terminal(0)));
        assert_relative_eq!(log_prior_params(&one, &s), -(2.0 * PI).ln(), epsilon = 1e-14);
        let two = ExprTree::new(Node::affine(lt, Affine::IDENTITY, one.root.clone()));
        assert_relative_eq!(log_prior_params(&two, &s), 2.0 * log_prior_params(&one, &s), epsilon = 1e-14);
    }

    #[test]
    fn hyperprior_rejects_non_positive() {
        let c = cfg(0.4, 1.0);
        let s = ScaleState {
            sigma_a2: 1.0,
            sigma_b2: 0.0,
            sigma2: 1.0,
        };
        assert!(matches!(log_hyperprior(&s, &c), Err(Error::NonPositiveScale(_))));
        assert!(ScaleState::new(1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn sampled_trees_have_finite_prior_and_respect_the_cap() {
        let mut c = cfg(0.95, 0.0);
        c.max_depth = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let t = sample_tree(&c, &mut rng);
            assert!(t.depth() <= 4);
            assert!(log_prior_structure(&t, &c).unwrap().is_finite());
            t.validate(&c.ops, 2).unwrap();
        }
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(0.4, 1.0);
        assert!(c.validate().is_ok());
        c.alpha = 1.0;
        assert!(c.validate().is_err());
        let mut c = cfg(0.4, 1.0);
        c.nu = 0.0;
        assert!(c.validate().is_err());
        let mut c = cfg(0.4, 1.0);
        c.feature_weights = alloc::vec![0.7, 0.7];
        assert!(c.validate().is_err());
    }
}
