//! Parameter updates that accompany a structure move.
//!
//! The net change in the number of `lt` nodes selects the path:
//!
//! * no change: every pair of the new tree is redrawn from its prior;
//! * expansion: `(Θ, u_Θ, u_n) -> (Θ* = ((Θ + u_Θ)/2, u_n), U* = (Θ - u_Θ)/2)`;
//! * shrinkage: `(Θ_0, Θ_d, U) -> (Θ* = Θ_0 + U, U* = (Θ_0 - U, Θ_d))`.
//!
//! Expansion auxiliaries follow `N(1, σ_a²)` / `N(0, σ_b²)` by slot and shrinkage auxiliaries
//! `N(0, σ_a²)` / `N(0, σ_b²)`. Each jump draws fresh `lt` scales from the hyperprior. The reverse
//! auxiliary density of one path is evaluated under the law of the other.

use alloc::vec::Vec;
use core::f64::consts::LN_2;

use rand::Rng;

use crate::error::{Error, Result};
use crate::expr::{Affine, ExprTree, OperatorSet};
use crate::math::{normal_ln_pdf, sample_normal};
use crate::moves::{replay, Move};
use crate::prior::{draw_params, log_param_scale_prior, log_params_density, PriorConfig, ScaleState};

/// `lt` parameter pairs of one tree in pre-order.
pub type ParamVector = Vec<Affine>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpPath {
    NoChange,
    Expansion,
    Shrinkage,
}

/// How the `lt` nodes of a tree correspond before and after a move. Indices are positions in
/// the pre-order parameter vectors.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LtPairing {
    /// `(old, new)` for nodes the move leaves in place.
    pub kept: Vec<(usize, usize)>,
    /// Old nodes that disappear, in pre-order.
    pub dropped: Vec<usize>,
    /// New nodes with no predecessor, in pre-order.
    pub created: Vec<usize>,
}

impl LtPairing {
    pub fn net_change(&self) -> isize {
        self.created.len() as isize - self.dropped.len() as isize
    }

    pub fn path(&self) -> JumpPath {
        match self.net_change() {
            0 => JumpPath::NoChange,
            d if d > 0 => JumpPath::Expansion,
            _ => JumpPath::Shrinkage,
        }
    }
}

/// Matches the `lt` nodes of `old` with those of `replay(old, mv)`.
pub fn pair_lt_nodes(old: &ExprTree, mv: &Move, ops: &OperatorSet) -> Result<LtPairing> {
    // Tag each old pair with its index; fresh nodes come out of replay with finite intercepts.
    let n_old = old.count_lt();
    let mut marked = old.clone();
    let tags: Vec<Affine> = (0..n_old).map(|i| Affine::new(i as f64, f64::INFINITY)).collect();
    marked.set_params(&tags)?;
    let new = replay(&marked, mv, ops)?;
    let mut pairing = LtPairing::default();
    let mut survived = alloc::vec![false; n_old];
    for (j, p) in new.params().iter().enumerate() {
        if p.b == f64::INFINITY {
            let i = p.a as usize;
            survived[i] = true;
            pairing.kept.push((i, j));
        } else {
            pairing.created.push(j);
        }
    }
    pairing.dropped = (0..n_old).filter(|&i| !survived[i]).collect();
    Ok(pairing)
}

/// Output of a parameter jump.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpResult {
    pub path: JumpPath,
    /// Parameters of the new tree in pre-order.
    pub new_params: ParamVector,
    /// Log density of the auxiliaries drawn by this jump, including the scale draw.
    pub log_h_forward: f64,
    /// Log density of the auxiliaries the reverse jump would need, including the old scales.
    pub log_h_reverse: f64,
    pub log_jacobian: f64,
    /// Scales after the jump; `sigma2` is carried over unchanged.
    pub new_scales: ScaleState,
    /// Number of scalars in `(Θ, U)`.
    pub dim_in: usize,
    /// Number of scalars in `(Θ*, U*)`.
    pub dim_out: usize,
}

/// The expansion map. Returns `(Θ*, U*)`.
pub fn j_expand(theta: &[Affine], u_theta: &[Affine], u_n: &[Affine]) -> Result<(ParamVector, ParamVector)> {
    if theta.len() != u_theta.len() {
        return Err(Error::LengthMismatch {
            left: theta.len(),
            right: u_theta.len(),
        });
    }
    let mut theta_star: ParamVector = theta
        .iter()
        .zip(u_theta)
        .map(|(t, u)| Affine::new((t.a + u.a) / 2.0, (t.b + u.b) / 2.0))
        .collect();
    theta_star.extend_from_slice(u_n);
    let u_star = theta
        .iter()
        .zip(u_theta)
        .map(|(t, u)| Affine::new((t.a - u.a) / 2.0, (t.b - u.b) / 2.0))
        .collect();
    Ok((theta_star, u_star))
}

/// The shrinkage map. Returns `(Θ*, U*)` with `U* = (Θ_0 - U, Θ_d)`.
pub fn j_shrink(theta0: &[Affine], theta_d: &[Affine], u: &[Affine]) -> Result<(ParamVector, ParamVector)> {
    if theta0.len() != u.len() {
        return Err(Error::LengthMismatch {
            left: theta0.len(),
            right: u.len(),
        });
    }
    let theta_star = theta0.iter().zip(u).map(|(t, u)| Affine::new(t.a + u.a, t.b + u.b)).collect();
    let mut u_star: ParamVector = theta0.iter().zip(u).map(|(t, u)| Affine::new(t.a - u.a, t.b - u.b)).collect();
    u_star.extend_from_slice(theta_d);
    Ok((theta_star, u_star))
}

/// Log absolute Jacobian determinant of [`j_expand`] with `m` shared pairs.
pub fn expansion_log_jacobian(m: usize) -> f64 {
    -2.0 * m as f64 * LN_2
}

/// Log absolute Jacobian determinant of [`j_shrink`] with `m` kept pairs.
pub fn shrinkage_log_jacobian(m: usize) -> f64 {
    2.0 * m as f64 * LN_2
}

fn ln_density_centered(pairs: &[Affine], mean_a: f64, scales: &ScaleState) -> f64 {
    pairs
        .iter()
        .map(|p| normal_ln_pdf(p.a, mean_a, scales.sigma_a2) + normal_ln_pdf(p.b, 0.0, scales.sigma_b2))
        .sum()
}

fn draw_centered<R: Rng + ?Sized>(n: usize, mean_a: f64, scales: &ScaleState, rng: &mut R) -> ParamVector {
    (0..n)
        .map(|_| Affine::new(sample_normal(mean_a, scales.sigma_a2, rng), sample_normal(0.0, scales.sigma_b2, rng)))
        .collect()
}

fn draw_lt_scales<R: Rng + ?Sized>(cfg: &PriorConfig, old: &ScaleState, rng: &mut R) -> ScaleState {
    ScaleState {
        sigma_a2: cfg.slope_scale_prior().sample(rng),
        sigma_b2: cfg.intercept_scale_prior().sample(rng),
        sigma2: old.sigma2,
    }
}

/// Redraws `n` pairs from the prior under the current scales.
pub fn no_change_resample<R: Rng + ?Sized>(theta: &[Affine], n: usize, scales: &ScaleState, rng: &mut R) -> Result<JumpResult> {
    if theta.len() != n {
        return Err(Error::LengthMismatch { left: theta.len(), right: n });
    }
    let new_params = draw_params(n, scales, rng);
    Ok(JumpResult {
        path: JumpPath::NoChange,
        log_h_forward: log_params_density(&new_params, scales),
        log_h_reverse: log_params_density(theta, scales),
        new_params,
        log_jacobian: 0.0,
        new_scales: *scales,
        dim_in: 4 * n,
        dim_out: 4 * n,
    })
}

/// Expansion with explicit auxiliaries. `theta` is ordered so that its `i`-th pair becomes the
/// `i`-th pair of `Θ*`.
pub fn expand_with(
    theta: &[Affine],
    u_theta: &[Affine],
    u_n: &[Affine],
    new_scales: ScaleState,
    old_scales: &ScaleState,
    cfg: &PriorConfig,
) -> Result<JumpResult> {
    let (new_params, u_star) = j_expand(theta, u_theta, u_n)?;
    let log_h_forward = log_param_scale_prior(new_scales.sigma_a2, new_scales.sigma_b2, cfg)?
        + ln_density_centered(u_theta, 1.0, &new_scales)
        + ln_density_centered(u_n, 1.0, &new_scales);
    let log_h_reverse =
        log_param_scale_prior(old_scales.sigma_a2, old_scales.sigma_b2, cfg)? + ln_density_centered(&u_star, 0.0, old_scales);
    let dim_in = 2 * (theta.len() + u_theta.len() + u_n.len());
    let dim_out = 2 * (new_params.len() + u_star.len());
    debug_assert_eq!(dim_in, dim_out);
    Ok(JumpResult {
        path: JumpPath::Expansion,
        new_params,
        log_h_forward,
        log_h_reverse,
        log_jacobian: expansion_log_jacobian(theta.len()),
        new_scales,
        dim_in,
        dim_out,
    })
}

/// Draws scales and auxiliaries, then expands `theta` to `new_len` pairs.
pub fn expand<R: Rng + ?Sized>(
    theta: &[Affine],
    new_len: usize,
    scales: &ScaleState,
    cfg: &PriorConfig,
    rng: &mut R,
) -> Result<JumpResult> {
    if new_len <= theta.len() {
        return Err(Error::Dimension("expansion needs more pairs than it starts with"));
    }
    let new_scales = draw_lt_scales(cfg, scales, rng);
    let u_theta = draw_centered(theta.len(), 1.0, &new_scales, rng);
    let u_n = draw_centered(new_len - theta.len(), 1.0, &new_scales, rng);
    expand_with(theta, &u_theta, &u_n, new_scales, scales, cfg)
}

/// Shrinkage with explicit auxiliaries.
pub fn shrink_with(
    theta0: &[Affine],
    theta_d: &[Affine],
    u: &[Affine],
    new_scales: ScaleState,
    old_scales: &ScaleState,
    cfg: &PriorConfig,
) -> Result<JumpResult> {
    let (new_params, u_star) = j_shrink(theta0, theta_d, u)?;
    let log_h_forward =
        log_param_scale_prior(new_scales.sigma_a2, new_scales.sigma_b2, cfg)? + ln_density_centered(u, 0.0, &new_scales);
    let log_h_reverse =
        log_param_scale_prior(old_scales.sigma_a2, old_scales.sigma_b2, cfg)? + ln_density_centered(&u_star, 1.0, old_scales);
    let dim_in = 2 * (theta0.len() + theta_d.len() + u.len());
    let dim_out = 2 * (new_params.len() + u_star.len());
    debug_assert_eq!(dim_in, dim_out);
    Ok(JumpResult {
        path: JumpPath::Shrinkage,
        new_params,
        log_h_forward,
        log_h_reverse,
        log_jacobian: shrinkage_log_jacobian(theta0.len()),
        new_scales,
        dim_in,
        dim_out,
    })
}

/// Draws scales and auxiliaries, then shrinks `(theta0, theta_d)` to `theta0.len()` pairs.
pub fn shrink<R: Rng + ?Sized>(
    theta0: &[Affine],
    theta_d: &[Affine],
    scales: &ScaleState,
    cfg: &PriorConfig,
    rng: &mut R,
) -> Result<JumpResult> {
    if theta_d.is_empty() {
        return Err(Error::Dimension("shrinkage needs at least one dropped pair"));
    }
    let new_scales = draw_lt_scales(cfg, scales, rng);
    let u = draw_centered(theta0.len(), 0.0, &new_scales, rng);
    shrink_with(theta0, theta_d, &u, new_scales, scales, cfg)
}

/// Assigns parameters to `new_tree = replay(old, mv)` along the path set by the net change in
/// `lt` nodes. The returned tree carries the new parameters.
pub fn jump_params<R: Rng + ?Sized>(
    old: &ExprTree,
    mv: &Move,
    new_tree: &ExprTree,
    scales: &ScaleState,
    cfg: &PriorConfig,
    rng: &mut R,
) -> Result<(ExprTree, JumpResult)> {
    let pairing = pair_lt_nodes(old, mv, &cfg.ops)?;
    let old_params = old.params();
    let n_new = new_tree.count_lt();
    // New-tree positions fed by old pairs: kept nodes first, then created nodes matched with
    // dropped ones in pre-order.
    let matched = pairing.dropped.len().min(pairing.created.len());
    let mut targets: Vec<usize> = pairing.kept.iter().map(|&(_, j)| j).collect();
    targets.extend_from_slice(&pairing.created[..matched]);
    let mut sources: ParamVector = pairing.kept.iter().map(|&(i, _)| old_params[i]).collect();
    sources.extend(pairing.dropped[..matched].iter().map(|&i| old_params[i]));

    let result = match pairing.path() {
        JumpPath::NoChange => no_change_resample(&old_params, n_new, scales, rng)?,
        JumpPath::Expansion => {
            let mut r = expand(&sources, n_new, scales, cfg, rng)?;
            targets.extend_from_slice(&pairing.created[matched..]);
            r.new_params = scatter(&r.new_params, &targets, n_new);
            r
        }
        JumpPath::Shrinkage => {
            let dropped: ParamVector = pairing.dropped[matched..].iter().map(|&i| old_params[i]).collect();
            let mut r = shrink(&sources, &dropped, scales, cfg, rng)?;
            r.new_params = scatter(&r.new_params, &targets, n_new);
            r
        }
    };
    let mut tree = new_tree.clone();
    tree.set_params(&result.new_params)?;
    Ok((tree, result))
}

fn scatter(values: &[Affine], targets: &[usize], n: usize) -> ParamVector {
    let mut out = alloc::vec![Affine::IDENTITY; n];
    for (v, &t) in values.iter().zip(targets) {
        out[t] = *v;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{Node, OperatorSet};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> PriorConfig {
        PriorConfig::new(OperatorSet::default_pool(), 2)
    }

    fn unit() -> ScaleState {
        ScaleState::new(1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn no_change_single_pair_at_mode() {
        let r = no_change_resample(&[Affine::new(1.0, 0.0)], 1, &unit(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_relative_eq!(r.log_h_reverse, -(2.0 * core::f64::consts::PI).ln());
        let empty = no_change_resample(&[], 0, &unit(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(empty.new_params.is_empty());
        assert_eq!(empty.log_h_forward, 0.0);
        assert!(no_change_resample(&[], 1, &unit(), &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn pure_birth_and_death() {
        let cfg = cfg();
        let u_n = [Affine::new(0.3, -0.2)];
        let r = expand_with(&[], &[], &u_n, unit(), &unit(), &cfg).unwrap();
        assert_eq!(r.new_params, u_n.to_vec());
        assert_eq!(r.log_jacobian, 0.0);
        let s = shrink_with(&[], &u_n, &[], unit(), &unit(), &cfg).unwrap();
        assert!(s.new_params.is_empty());
        assert_eq!(s.log_jacobian, 0.0);
    }

    #[test]
    fn jacobian_constants() {
        assert_relative_eq!(expansion_log_jacobian(1), 2.0 * 0.5f64.ln());
        assert_relative_eq!(shrinkage_log_jacobian(1), 2.0 * LN_2);
        assert_relative_eq!(expansion_log_jacobian(3) + shrinkage_log_jacobian(3), 0.0);
    }

    #[test]
    fn shrink_inverts_expand() {
        let theta = [Affine::new(0.7, -1.1), Affine::new(2.0, 0.4)];
        let u_theta = [Affine::new(1.3, 0.2), Affine::new(-0.5, 0.9)];
        let u_n = [Affine::new(0.1, 0.1)];
        let (star, u_star) = j_expand(&theta, &u_theta, &u_n).unwrap();
        let (back, back_u) = j_shrink(&star[..2], &star[2..], &u_star).unwrap();
        for (x, y) in back.iter().zip(&theta) {
            assert_relative_eq!(x.a, y.a, epsilon = 1e-15);
            assert_relative_eq!(x.b, y.b, epsilon = 1e-15);
        }
        assert_relative_eq!(back_u[0].a, u_theta[0].a, epsilon = 1e-15);
        assert_eq!(back_u[2], u_n[0]);
    }

    #[test]
    fn dimension_identity_holds() {
        let cfg = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let theta = draw_params(3, &unit(), &mut rng);
        let e = expand(&theta, 5, &unit(), &cfg, &mut rng).unwrap();
        assert_eq!(e.dim_in, e.dim_out);
        let s = shrink(&theta[..1], &theta[1..], &unit(), &cfg, &mut rng).unwrap();
        assert_eq!(s.dim_in, s.dim_out);
        assert!(e.log_h_forward.is_finite() && e.log_h_reverse.is_finite());
        assert!(s.log_h_forward.is_finite() && s.log_h_reverse.is_finite());
        assert!(expand(&theta, 3, &unit(), &cfg, &mut rng).is_err());
        assert!(shrink(&theta, &[], &unit(), &cfg, &mut rng).is_err());
    }

    #[test]
    fn reverse_auxiliary_densities_match() {
        // The reverse of an expansion is a shrinkage that draws exactly the discarded U*.
        let cfg = cfg();
        let old = ScaleState::new(0.8, 1.7, 1.0).unwrap();
        let new = ScaleState::new(1.3, 0.6, 1.0).unwrap();
        let theta = [Affine::new(0.4, 0.2)];
        let u_theta = [Affine::new(1.5, -0.3)];
        let u_n = [Affine::new(0.9, 0.8)];
        let e = expand_with(&theta, &u_theta, &u_n, new, &old, &cfg).unwrap();
        let (_, u_star) = j_expand(&theta, &u_theta, &u_n).unwrap();
        let s = shrink_with(&e.new_params[..1], &e.new_params[1..], &u_star, old, &new, &cfg).unwrap();
        assert_relative_eq!(s.new_params[0].a, theta[0].a, epsilon = 1e-15);
        assert_relative_eq!(e.log_h_forward, s.log_h_reverse, epsilon = 1e-12);
        assert_relative_eq!(e.log_h_reverse, s.log_h_forward, epsilon = 1e-12);
        assert_relative_eq!(e.log_jacobian + s.log_jacobian, 0.0);
    }

    #[test]
    fn pairing_examples() {
        let cfg = cfg();
        let id = |n: &str| cfg.ops.find(n).unwrap();
        let lt = |c: Node| Node::affine(id("lt"), Affine::new(2.0, 1.0), c);
        let tree = ExprTree::new(Node::binary(id("add"), lt(lt(Node::terminal(0))), Node::terminal(1)));
        let stay = pair_lt_nodes(&tree, &Move::Stay, &cfg.ops).unwrap();
        assert_eq!(stay.kept, alloc::vec![(0, 0), (1, 1)]);
        let prune = pair_lt_nodes(&tree, &Move::Prune { site: 1, feature: 0 }, &cfg.ops).unwrap();
        assert_eq!(prune.dropped.len(), 2);
        assert_eq!(prune.path(), JumpPath::Shrinkage);

        // Binary root becomes lt, dropping the right subtree with one lt node.
        let right = ExprTree::new(Node::binary(id("mul"), Node::terminal(0), lt(Node::terminal(1))));
        let mv = Move::ReassignOperator {
            site: 0,
            op: id("lt"),
            right: None,
        };
        let p = pair_lt_nodes(&right, &mv, &cfg.ops).unwrap();
        assert_eq!((p.dropped.len(), p.created.len()), (1, 1));
        assert_eq!(p.path(), JumpPath::NoChange);
    }

    #[test]
    fn jump_keeps_untouched_pairs_in_place() {
        let cfg = cfg();
        let id = |n: &str| cfg.ops.find(n).unwrap();
        let tree = ExprTree::new(Node::binary(
            id("add"),
            Node::affine(id("lt"), Affine::new(5.0, 6.0), Node::terminal(0)),
            Node::terminal(1),
        ));
        let mv = Move::Grow {
            site: 3,
            subtree: Node::affine(id("lt"), Affine::IDENTITY, Node::terminal(0)),
        };
        let new_tree = replay(&tree, &mv, &cfg.ops).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (out, r) = jump_params(&tree, &mv, &new_tree, &unit(), &cfg, &mut rng).unwrap();
        assert_eq!(r.path, JumpPath::Expansion);
        let p = out.params();
        // The surviving pair is averaged with its auxiliary; the new one is the raw draw.
        assert_eq!(p.len(), 2);
        assert!(p[0] != Affine::IDENTITY && p[1] != Affine::IDENTITY);
        assert!(out.same_structure(&new_tree));
    }
}
