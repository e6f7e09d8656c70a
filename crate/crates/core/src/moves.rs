//! Structure proposals: the seven reversible tree transitions and their exact densities.
//!
//! Every proposed [`Move`] carries its full random payload, so [`replay`] can re-apply it
//! deterministically and [`log_move_density`] can score it on any tree. The reverse density
//! of a proposal is the density of [`reverse_move`] evaluated on the proposed tree.

use alloc::vec::Vec;

#[allow(unused_imports)] // needed without std
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Affine, ExprTree, Node, OpId, OperatorSet, SiteInfo};
use crate::math::{ln_weight, sample_categorical, sample_index};
use crate::prior::{generate_operator_node, generate_structure, log_generation, log_operator_node, PriorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MoveTag {
    Stay,
    Grow,
    Prune,
    Delete,
    Insert,
    ReassignOperator,
    ReassignFeature,
}

impl MoveTag {
    pub const ALL: [MoveTag; 7] = [
        MoveTag::Stay,
        MoveTag::Grow,
        MoveTag::Prune,
        MoveTag::Delete,
        MoveTag::Insert,
        MoveTag::ReassignOperator,
        MoveTag::ReassignFeature,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            MoveTag::Stay => "stay",
            MoveTag::Grow => "grow",
            MoveTag::Prune => "prune",
            MoveTag::Delete => "delete",
            MoveTag::Insert => "insert",
            MoveTag::ReassignOperator => "reassign_operator",
            MoveTag::ReassignFeature => "reassign_feature",
        }
    }
}

/// Tunable constants of the move probabilities:
/// `p_stay = n_l / (stay_scale * (n_l + stay_offset))`,
/// `p_grow = (1 - p_stay)/3 * min(1, grow_scale / (N_nt + 2))`,
/// `p_delete = (1 - p_stay)/3 * N_c / (N_c + delete_offset)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveConstants {
    pub stay_scale: f64,
    pub stay_offset: f64,
    pub grow_scale: f64,
    pub delete_offset: f64,
}

impl Default for MoveConstants {
    fn default() -> Self {
        Self {
            stay_scale: 4.0,
            stay_offset: 3.0,
            grow_scale: 8.0,
            delete_offset: 3.0,
        }
    }
}

/// Which side of an inserted binary node the original subtree goes to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    fn slot(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }
}

/// A fully specified structure transition. Sites are pre-order node indices.
#[derive(Debug, Clone, PartialEq)]
pub enum Move {
    Stay,
    /// Replace the terminal at `site` with `subtree` (whose root is non-terminal).
    Grow { site: usize, subtree: Node },
    /// Replace the non-terminal at `site` with a terminal using `feature`.
    Prune { site: usize, feature: usize },
    /// Replace the non-terminal at `site` with its child in slot `keep`.
    Delete { site: usize, keep: usize },
    /// Put a new `op` node above `site`; binary operators place the original on `side` and
    /// `sibling` on the other side.
    Insert {
        site: usize,
        op: OpId,
        side: Side,
        sibling: Option<Node>,
    },
    /// Change the operator at `site`. Unary to binary adds `right`; binary to unary keeps the
    /// left child.
    ReassignOperator { site: usize, op: OpId, right: Option<Node> },
    ReassignFeature { site: usize, feature: usize },
}

impl Move {
    pub fn tag(&self) -> MoveTag {
        match self {
            Move::Stay => MoveTag::Stay,
            Move::Grow { .. } => MoveTag::Grow,
            Move::Prune { .. } => MoveTag::Prune,
            Move::Delete { .. } => MoveTag::Delete,
            Move::Insert { .. } => MoveTag::Insert,
            Move::ReassignOperator { .. } => MoveTag::ReassignOperator,
            Move::ReassignFeature { .. } => MoveTag::ReassignFeature,
        }
    }
}

/// Counts that drive the move probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeCounts {
    pub lt: usize,
    pub nonterminal: usize,
    pub terminal: usize,
    pub delete_candidates: usize,
    pub grow_sites: usize,
    pub insert_sites: usize,
}

impl TreeCounts {
    pub fn of(tree: &ExprTree, max_depth: usize) -> Self {
        Self::from_sites(&tree.sites(), tree.count_lt(), max_depth)
    }

    fn from_sites(sites: &[SiteInfo], lt: usize, max_depth: usize) -> Self {
        let nonterminal = sites.iter().filter(|s| !s.is_terminal()).count();
        Self {
            lt,
            nonterminal,
            terminal: sites.len() - nonterminal,
            delete_candidates: sites.iter().filter(|s| is_delete_candidate(s)).count(),
            grow_sites: sites.iter().filter(|s| is_grow_site(s, max_depth)).count(),
            insert_sites: sites.iter().filter(|s| is_insert_site(s)).count(),
        }
    }
}

fn is_delete_candidate(s: &SiteInfo) -> bool {
    !s.is_terminal() && (s.parent.is_some() || s.nonterminal_children > 0)
}

fn is_grow_site(s: &SiteInfo, max_depth: usize) -> bool {
    s.is_terminal() && s.depth < max_depth
}

// A terminal root cannot receive a node above it: the reverse deletion would leave a
// terminal root, which deletion never produces.
fn is_insert_site(s: &SiteInfo) -> bool {
    s.parent.is_some() || !s.is_terminal()
}

/// Number of nodes eligible for deletion: non-terminals, where the root additionally needs at
/// least one non-terminal child.
pub fn count_delete_candidates(tree: &ExprTree) -> usize {
    tree.sites().iter().filter(|s| is_delete_candidate(s)).count()
}

/// The seven move probabilities before feasibility is taken into account, indexed by
/// [`MoveTag::index`].
pub fn raw_move_probabilities(lt: usize, nonterminal: usize, delete_candidates: usize, c: &MoveConstants) -> [f64; 7] {
    let n_l = lt as f64;
    let p_stay = n_l / (c.stay_scale * (n_l + c.stay_offset));
    let third = (1.0 - p_stay) / 3.0;
    let p_grow = third * (c.grow_scale / (nonterminal as f64 + 2.0)).min(1.0);
    let p_prune = third - p_grow;
    let n_c = delete_candidates as f64;
    let p_delete = third * n_c / (n_c + c.delete_offset);
    let p_insert = third - p_delete;
    let p_reassign = (1.0 - p_stay) / 6.0;
    [p_stay, p_grow, p_prune, p_delete, p_insert, p_reassign, p_reassign]
}

/// Move probabilities for `tree`: the raw values with moves that have no eligible site set to
/// zero, renormalised to sum to one.
pub fn move_probabilities(tree: &ExprTree, cfg: &PriorConfig, c: &MoveConstants) -> [f64; 7] {
    probabilities_from_counts(&TreeCounts::of(tree, cfg.max_depth), c)
}

pub fn probabilities_from_counts(counts: &TreeCounts, c: &MoveConstants) -> [f64; 7] {
    let mut p = raw_move_probabilities(counts.lt, counts.nonterminal, counts.delete_candidates, c);
    let feasible = [
        true,
        counts.grow_sites > 0,
        counts.nonterminal > 0,
        counts.delete_candidates > 0,
        counts.insert_sites > 0,
        counts.nonterminal > 0,
        counts.terminal > 0,
    ];
    for (v, ok) in p.iter_mut().zip(feasible) {
        if !ok {
            *v = 0.0;
        }
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    p
}

/// A proposed structure together with its forward and reverse log-densities.
#[derive(Debug, Clone)]
pub struct ProposalOutcome {
    pub new_tree: ExprTree,
    pub log_q_forward: f64,
    pub log_q_reverse: f64,
    /// Change in the number of `lt` parameter pairs.
    pub dim_change: isize,
    pub mv: Move,
    pub reverse: Move,
}

fn nth_site(sites: &[SiteInfo], pred: impl Fn(&SiteInfo) -> bool, n: usize) -> usize {
    sites
        .iter()
        .enumerate()
        .filter(|(_, s)| pred(s))
        .nth(n)
        .map(|(i, _)| i)
        .expect("site index within eligible range")
}

/// Draws a move for `tree` and returns the proposed tree with exact proposal densities.
///
/// Newly created `lt` nodes carry identity placeholders; the parameter jump assigns them.
pub fn propose<R: Rng + ?Sized>(tree: &ExprTree, cfg: &PriorConfig, c: &MoveConstants, rng: &mut R) -> ProposalOutcome {
    let sites = tree.sites();
    let counts = TreeCounts::from_sites(&sites, tree.count_lt(), cfg.max_depth);
    let probs = probabilities_from_counts(&counts, c);
    let tag = MoveTag::ALL[sample_categorical(&probs, rng)];
    let mv = match tag {
        MoveTag::Stay => Move::Stay,
        MoveTag::Grow => {
            let site = nth_site(&sites, |s| is_grow_site(s, cfg.max_depth), sample_index(counts.grow_sites, rng));
            let subtree = generate_operator_node(cfg, sites[site].depth, rng);
            Move::Grow { site, subtree }
        }
        MoveTag::Prune => {
            let site = nth_site(&sites, |s| !s.is_terminal(), sample_index(counts.nonterminal, rng));
            Move::Prune {
                site,
                feature: sample_categorical(&cfg.feature_weights, rng),
            }
        }
        MoveTag::Delete => {
            let site = nth_site(&sites, is_delete_candidate, sample_index(counts.delete_candidates, rng));
            let info = sites[site];
            let keep = if info.arity == 1 {
                0
            } else if info.parent.is_some() {
                sample_index(2, rng)
            } else {
                let node = tree.node(site).expect("site exists");
                let options: Vec<usize> = (0..info.arity).filter(|&i| !node.children()[i].is_terminal()).collect();
                options[sample_index(options.len(), rng)]
            };
            Move::Delete { site, keep }
        }
        MoveTag::Insert => {
            let site = nth_site(&sites, is_insert_site, sample_index(counts.insert_sites, rng));
            let op = OpId(sample_categorical(cfg.ops.weights(), rng) as u16);
            let arity = cfg.ops.get(op).expect("sampled operator").arity();
            if arity == 2 {
                let side = if sample_index(2, rng) == 0 { Side::Left } else { Side::Right };
                let sibling = generate_structure(cfg, sites[site].depth + 1, rng);
                Move::Insert {
                    site,
                    op,
                    side,
                    sibling: Some(sibling),
                }
            } else {
                Move::Insert {
                    site,
                    op,
                    side: Side::Left,
                    sibling: None,
                }
            }
        }
        MoveTag::ReassignOperator => {
            let site = nth_site(&sites, |s| !s.is_terminal(), sample_index(counts.nonterminal, rng));
            let op = OpId(sample_categorical(cfg.ops.weights(), rng) as u16);
            let new_arity = cfg.ops.get(op).expect("sampled operator").arity();
            let right = (sites[site].arity == 1 && new_arity == 2)
                .then(|| generate_structure(cfg, sites[site].depth + 1, rng));
            Move::ReassignOperator { site, op, right }
        }
        MoveTag::ReassignFeature => {
            let site = nth_site(&sites, SiteInfo::is_terminal, sample_index(counts.terminal, rng));
            Move::ReassignFeature {
                site,
                feature: sample_categorical(&cfg.feature_weights, rng),
            }
        }
    };
    let new_tree = replay(tree, &mv, &cfg.ops).expect("proposed move is valid for its tree");
    let log_q_forward = log_move_density(tree, &mv, cfg, c);
    let reverse = reverse_move(tree, &mv, &cfg.ops).expect("proposed move is valid for its tree");
    let log_q_reverse = log_move_density(&new_tree, &reverse, cfg, c);
    let dim_change = new_tree.count_lt() as isize - tree.count_lt() as isize;
    ProposalOutcome {
        new_tree,
        log_q_forward,
        log_q_reverse,
        dim_change,
        mv,
        reverse,
    }
}

/// Applies `mv` to `tree`. Fresh `lt` nodes get identity parameters; surviving nodes keep
/// theirs.
pub fn replay(tree: &ExprTree, mv: &Move, ops: &OperatorSet) -> Result<ExprTree> {
    let mut out = tree.clone();
    match mv {
        Move::Stay => {}
        Move::Grow { site, subtree } => {
            if !out.node(*site)?.is_terminal() || subtree.is_terminal() {
                return Err(Error::InvalidSite(*site));
            }
            out.replace(*site, subtree.clone())?;
        }
        Move::Prune { site, feature } => {
            if out.node(*site)?.is_terminal() {
                return Err(Error::InvalidSite(*site));
            }
            out.replace(*site, Node::terminal(*feature))?;
        }
        Move::Delete { site, keep } => {
            let node = out.replace(*site, Node::terminal(0))?;
            let Node::Op { mut children, .. } = node else {
                return Err(Error::InvalidSite(*site));
            };
            if *keep >= children.len() {
                return Err(Error::InvalidSite(*site));
            }
            out.replace(*site, children.swap_remove(*keep))?;
        }
        Move::Insert { site, op, side, sibling } => {
            let spec = ops.get(*op)?;
            let params = spec.has_params().then_some(Affine::IDENTITY);
            let original = out.replace(*site, Node::terminal(0))?;
            let children = match (spec.arity(), sibling) {
                (1, None) => alloc::vec![original],
                (2, Some(sib)) => match side {
                    Side::Left => alloc::vec![original, sib.clone()],
                    Side::Right => alloc::vec![sib.clone(), original],
                },
                _ => return Err(Error::Dimension("insert payload does not match operator arity")),
            };
            out.replace(*site, Node::Op { op: *op, params, children })?;
        }
        Move::ReassignOperator { site, op, right } => {
            let spec = ops.get(*op)?;
            let node = out.node_mut(*site)?;
            let Node::Op {
                op: old_op,
                params,
                children,
            } = node
            else {
                return Err(Error::InvalidSite(*site));
            };
            match (children.len(), spec.arity(), right) {
                (1, 2, Some(r)) => children.push(r.clone()),
                (2, 1, None) => {
                    children.truncate(1);
                }
                (a, b, None) if a == b => {}
                _ => return Err(Error::Dimension("reassignment payload does not match operator arity")),
            }
            *params = match (spec.has_params(), *params) {
                (true, Some(p)) => Some(p),
                (true, None) => Some(Affine::IDENTITY),
                (false, _) => None,
            };
            *old_op = *op;
        }
        Move::ReassignFeature { site, feature } => match out.node_mut(*site)? {
            Node::Terminal { feature: f } => *f = *feature,
            Node::Op { .. } => return Err(Error::InvalidSite(*site)),
        },
    }
    Ok(out)
}

/// The move that undoes `mv` when applied to `replay(tree, mv)`.
pub fn reverse_move(tree: &ExprTree, mv: &Move, ops: &OperatorSet) -> Result<Move> {
    Ok(match mv {
        Move::Stay => Move::Stay,
        Move::Grow { site, .. } => match tree.node(*site)? {
            Node::Terminal { feature } => Move::Prune {
                site: *site,
                feature: *feature,
            },
            Node::Op { .. } => return Err(Error::InvalidSite(*site)),
        },
        Move::Prune { site, .. } => Move::Grow {
            site: *site,
            subtree: tree.node(*site)?.clone(),
        },
        Move::Delete { site, keep } => {
            let Node::Op { op, children, .. } = tree.node(*site)? else {
                return Err(Error::InvalidSite(*site));
            };
            if children.len() == 2 {
                let side = if *keep == 0 { Side::Left } else { Side::Right };
                Move::Insert {
                    site: *site,
                    op: *op,
                    side,
                    sibling: Some(children[1 - *keep].clone()),
                }
            } else {
                Move::Insert {
                    site: *site,
                    op: *op,
                    side: Side::Left,
                    sibling: None,
                }
            }
        }
        Move::Insert { site, side, sibling, .. } => Move::Delete {
            site: *site,
            keep: if sibling.is_some() { side.slot() } else { 0 },
        },
        Move::ReassignOperator { site, op: new_op, .. } => {
            let Node::Op { op, children, .. } = tree.node(*site)? else {
                return Err(Error::InvalidSite(*site));
            };
            let right = (children.len() == 2 && ops.get(*new_op)?.arity() == 1).then(|| children[1].clone());
            Move::ReassignOperator { site: *site, op: *op, right }
        }
        Move::ReassignFeature { site, .. } => match tree.node(*site)? {
            Node::Terminal { feature } => Move::ReassignFeature {
                site: *site,
                feature: *feature,
            },
            Node::Op { .. } => return Err(Error::InvalidSite(*site)),
        },
    })
}


/// Log probability density that [`propose`] on `tree` draws `mv`, or negative infinity when it
/// cannot. Parameters inside the payload are ignored.
pub fn log_move_density(tree: &ExprTree, mv: &Move, cfg: &PriorConfig, c: &MoveConstants) -> f64 {
    move_density(tree, mv, cfg, c).unwrap_or(f64::NEG_INFINITY)
}

fn move_density(tree: &ExprTree, mv: &Move, cfg: &PriorConfig, c: &MoveConstants) -> Result<f64> {
    let sites = tree.sites();
    let counts = TreeCounts::from_sites(&sites, tree.count_lt(), cfg.max_depth);
    let probs = probabilities_from_counts(&counts, c);
    let ln_tag = ln_weight(probs[mv.tag().index()]);
    let site_of = |site: usize| sites.get(site).copied().ok_or(Error::InvalidSite(site));
    let uniform = |n: usize| -(n as f64).ln();
    let ln_op = |op: OpId| ln_weight(cfg.ops.weight(op));
    let ln_ft = |f: usize| ln_weight(cfg.feature_weight(f));
    let rest = match mv {
        Move::Stay => 0.0,
        Move::Grow { site, subtree } => {
            let s = site_of(*site)?;
            if !is_grow_site(&s, cfg.max_depth) {
                return Err(Error::InvalidSite(*site));
            }
            uniform(counts.grow_sites) + log_operator_node(subtree, s.depth, cfg)?
        }
        Move::Prune { site, feature } => {
            if site_of(*site)?.is_terminal() {
                return Err(Error::InvalidSite(*site));
            }
            uniform(counts.nonterminal) + ln_ft(*feature)
        }
        Move::Delete { site, keep } => {
            let s = site_of(*site)?;
            if !is_delete_candidate(&s) || *keep >= s.arity {
                return Err(Error::InvalidSite(*site));
            }
            let choice = if s.arity == 1 {
                0.0
            } else if s.parent.is_some() {
                uniform(2)
            } else {
                if tree.node(*site)?.children()[*keep].is_terminal() {
                    return Err(Error::InvalidSite(*site));
                }
                uniform(s.nonterminal_children)
            };
            uniform(counts.delete_candidates) + choice
        }
        Move::Insert { site, op, side, sibling } => {
            let s = site_of(*site)?;
            if !is_insert_site(&s) {
                return Err(Error::InvalidSite(*site));
            }
            let payload = match (cfg.ops.get(*op)?.arity(), sibling) {
                (1, None) if *side == Side::Left => 0.0,
                (2, Some(sib)) => uniform(2) + log_generation(sib, s.depth + 1, cfg)?,
                _ => return Err(Error::Dimension("insert payload does not match operator arity")),
            };
            uniform(counts.insert_sites) + ln_op(*op) + payload
        }
        Move::ReassignOperator { site, op, right } => {
            let s = site_of(*site)?;
            if s.is_terminal() {
                return Err(Error::InvalidSite(*site));
            }
            let payload = match (s.arity, cfg.ops.get(*op)?.arity(), right) {
                (1, 2, Some(r)) => log_generation(r, s.depth + 1, cfg)?,
                (a, b, None) if a == b || (a == 2 && b == 1) => 0.0,
                _ => return Err(Error::Dimension("reassignment payload does not match operator arity")),
            };
            uniform(counts.nonterminal) + ln_op(*op) + payload
        }
        Move::ReassignFeature { site, feature } => {
            if !site_of(*site)?.is_terminal() {
                return Err(Error::InvalidSite(*site));
            }
            uniform(counts.terminal) + ln_ft(*feature)
        }
    };
    Ok(ln_tag + rest)
}
