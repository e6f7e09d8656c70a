use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::ops::{OpId, OperatorSet};
use crate::error::{Error, Result};

/// Parameters `(a, b)` of a linear-transform node `a * x + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub a: f64,
    pub b: f64,
}

impl Affine {
    pub const IDENTITY: Affine = Affine { a: 1.0, b: 0.0 };

    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Terminal {
        feature: usize,
    },
    Op {
        op: OpId,
        params: Option<Affine>,
        children: Vec<Node>,
    },
}

impl Node {
    pub fn terminal(feature: usize) -> Self {
        Node::Terminal { feature }
    }

    pub fn unary(op: OpId, child: Node) -> Self {
        Node::Op {
            op,
            params: None,
            children: vec![child],
        }
    }

    pub fn binary(op: OpId, left: Node, right: Node) -> Self {
        Node::Op {
            op,
            params: None,
            children: vec![left, right],
        }
    }

    pub fn affine(op: OpId, params: Affine, child: Node) -> Self {
        Node::Op {
            op,
            params: Some(params),
            children: vec![child],
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, Node::Terminal { .. })
    }

    pub fn children(&self) -> &[Node] {
        match self {
            Node::Terminal { .. } => &[],
            Node::Op { children, .. } => children,
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children().iter().map(Node::node_count).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        self.children().iter().map(|c| 1 + c.depth()).max().unwrap_or(0)
    }

    pub fn count_nonterminal(&self) -> usize {
        match self {
            Node::Terminal { .. } => 0,
            Node::Op { children, .. } => 1 + children.iter().map(Node::count_nonterminal).sum::<usize>(),
        }
    }

    pub fn count_lt(&self) -> usize {
        match self {
            Node::Terminal { .. } => 0,
            Node::Op { params, children, .. } => {
                usize::from(params.is_some()) + children.iter().map(Node::count_lt).sum::<usize>()
            }
        }
    }

    /// Structural equality: operators, arities and features, ignoring `lt` parameters.
    pub fn same_structure(&self, other: &Node) -> bool {
        match (self, other) {
            (Node::Terminal { feature: a }, Node::Terminal { feature: b }) => a == b,
            (
                Node::Op {
                    op: oa,
                    params: pa,
                    children: ca,
                },
                Node::Op {
                    op: ob,
                    params: pb,
                    children: cb,
                },
            ) => {
                oa == ob
                    && pa.is_some() == pb.is_some()
                    && ca.len() == cb.len()
                    && ca.iter().zip(cb).all(|(x, y)| x.same_structure(y))
            }
            _ => false,
        }
    }

    fn collect_params(&self, out: &mut Vec<Affine>) {
        if let Node::Op { params, children, .. } = self {
            if let Some(p) = params {
                out.push(*p);
            }
            for c in children {
                c.collect_params(out);
            }
        }
    }

    fn assign_params(&mut self, it: &mut core::slice::Iter<'_, Affine>) -> Result<()> {
        if let Node::Op { params, children, .. } = self {
            if let Some(p) = params {
                *p = *it.next().ok_or(Error::Dimension("too few parameter pairs for tree"))?;
            }
            for c in children {
                c.assign_params(it)?;
            }
        }
        Ok(())
    }

    fn collect_features(&self, out: &mut Vec<usize>) {
        match self {
            Node::Terminal { feature } => out.push(*feature),
            Node::Op { children, .. } => children.iter().for_each(|c| c.collect_features(out)),
        }
    }

    fn validate(&self, ops: &OperatorSet, dim: usize) -> Result<()> {
        match self {
            Node::Terminal { feature } => {
                if *feature >= dim {
                    return Err(Error::FeatureOutOfRange { feature: *feature, dim });
                }
            }
            Node::Op { op, params, children } => {
                let spec = ops.get(*op)?;
                if children.len() != spec.arity() {
                    return Err(Error::InvalidTree {
                        op: spec.name.clone(),
                        expected: spec.arity(),
                        found: children.len(),
                    });
                }
                if params.is_some() != spec.has_params() {
                    return Err(Error::MalformedTree("parameter pairs must sit exactly on lt nodes"));
                }
                for c in children {
                    c.validate(ops, dim)?;
                }
            }
        }
        Ok(())
    }
}

/// Position of a node in pre-order, with the bookkeeping the proposal kernel needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SiteInfo {
    pub depth: usize,
    pub parent: Option<usize>,
    /// Index of this node among its parent's children.
    pub slot: usize,
    /// Number of children (0 for terminals).
    pub arity: usize,
    /// Number of non-terminal children.
    pub nonterminal_children: usize,
}

impl SiteInfo {
    pub fn is_terminal(&self) -> bool {
        self.arity == 0
    }
}

/// A symbolic expression tree: structure `T`, terminal features `M` and `lt` parameters.
///
/// Nodes are addressed by their pre-order index ("site"); the root is site 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExprTree {
    pub root: Node,
}

impl ExprTree {
    pub fn new(root: Node) -> Self {
        Self { root }
    }

    pub fn terminal(feature: usize) -> Self {
        Self::new(Node::terminal(feature))
    }

    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }

    /// Depth of the deepest node; a lone terminal has depth 0.
    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn count_nonterminal(&self) -> usize {
        self.root.count_nonterminal()
    }

    pub fn count_terminals(&self) -> usize {
        self.node_count() - self.count_nonterminal()
    }

    /// Number of parameterised (`lt`) nodes.
    pub fn count_lt(&self) -> usize {
        self.root.count_lt()
    }

    pub fn same_structure(&self, other: &ExprTree) -> bool {
        self.root.same_structure(&other.root)
    }

    /// Checks arities, parameter placement and feature indices against `ops` and `dim`.
    pub fn validate(&self, ops: &OperatorSet, dim: usize) -> Result<()> {
        self.root.validate(ops, dim)
    }

    /// `lt` parameters in pre-order.
    pub fn params(&self) -> Vec<Affine> {
        let mut out = Vec::new();
        self.root.collect_params(&mut out);
        out
    }

    pub fn set_params(&mut self, params: &[Affine]) -> Result<()> {
        if params.len() != self.count_lt() {
            return Err(Error::Dimension("parameter count differs from lt node count"));
        }
        self.root.assign_params(&mut params.iter())
    }

    /// Terminal feature indices in pre-order.
    pub fn features(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.root.collect_features(&mut out);
        out
    }

    /// Per-node bookkeeping in pre-order.
    pub fn sites(&self) -> Vec<SiteInfo> {
        fn walk(node: &Node, depth: usize, parent: Option<usize>, slot: usize, out: &mut Vec<SiteInfo>) {
            let me = out.len();
            let children = node.children();
            out.push(SiteInfo {
                depth,
                parent,
                slot,
                arity: children.len(),
                nonterminal_children: children.iter().filter(|c| !c.is_terminal()).count(),
            });
            for (i, c) in children.iter().enumerate() {
                walk(c, depth + 1, Some(me), i, out);
            }
        }
        let mut out = Vec::with_capacity(16);
        walk(&self.root, 0, None, 0, &mut out);
        out
    }

    /// Child-slot path from the root to `site`.
    fn path_to(&self, site: usize) -> Result<Vec<usize>> {
        fn find(node: &Node, target: usize, next: &mut usize, path: &mut Vec<usize>) -> bool {
            if *next == target {
                return true;
            }
            *next += 1;
            for (i, c) in node.children().iter().enumerate() {
                path.push(i);
                if find(c, target, next, path) {
                    return true;
                }
                path.pop();
            }
            false
        }
        let mut path = Vec::new();
        let mut next = 0;
        if find(&self.root, site, &mut next, &mut path) {
            Ok(path)
        } else {
            Err(Error::InvalidSite(site))
        }
    }

    pub fn node(&self, site: usize) -> Result<&Node> {
        let mut node = &self.root;
        for slot in self.path_to(site)? {
            node = &node.children()[slot];
        }
        Ok(node)
    }

    pub fn node_mut(&mut self, site: usize) -> Result<&mut Node> {
        let path = self.path_to(site)?;
        let mut node = &mut self.root;
        for slot in path {
            node = match node {
                Node::Op { children, .. } => &mut children[slot],
                Node::Terminal { .. } => unreachable!("path passes through a terminal"),
            };
        }
        Ok(node)
    }

    /// Replaces the subtree at `site`, returning the previous subtree.
    pub fn replace(&mut self, site: usize, subtree: Node) -> Result<Node> {
        let slot = self.node_mut(site)?;
        Ok(core::mem::replace(slot, subtree))
    }
}

impl From<Node> for ExprTree {
    fn from(root: Node) -> Self {
        Self::new(root)
    }
}

impl From<Box<Node>> for ExprTree {
    fn from(root: Box<Node>) -> Self {
        Self::new(*root)
    }
}
