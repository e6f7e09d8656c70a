use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::ops::{OpKind, OperatorSet};
use super::tree::{ExprTree, Node};
use crate::error::{Error, Result};

/// Predictors stored column-wise, with an optional response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMatrix {
    columns: Vec<Vec<f64>>,
    y: Option<Vec<f64>>,
    rows: usize,
}

impl DataMatrix {
    /// Builds a matrix from predictor columns. All columns must share one length `n >= 1`.
    pub fn from_columns(columns: Vec<Vec<f64>>, y: Option<Vec<f64>>) -> Result<Self> {
        let rows = columns.first().map(Vec::len).unwrap_or(0);
        if columns.is_empty() || rows == 0 {
            return Err(Error::Dimension("data needs at least one row and one column"));
        }
        for c in &columns {
            if c.len() != rows {
                return Err(Error::LengthMismatch { left: rows, right: c.len() });
            }
        }
        if let Some(y) = &y {
            if y.len() != rows {
                return Err(Error::LengthMismatch { left: rows, right: y.len() });
            }
        }
        Ok(Self { columns, y, rows })
    }

    /// Builds a matrix from row-major predictor rows.
    pub fn from_rows(rows: &[Vec<f64>], y: Option<Vec<f64>>) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        let mut columns = alloc::vec![Vec::with_capacity(rows.len()); d];
        for r in rows {
            if r.len() != d {
                return Err(Error::LengthMismatch { left: d, right: r.len() });
            }
            for (c, v) in columns.iter_mut().zip(r) {
                c.push(*v);
            }
        }
        Self::from_columns(columns, y)
    }

    pub fn n(&self) -> usize {
        self.rows
    }

    pub fn d(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn y(&self) -> Option<&[f64]> {
        self.y.as_deref()
    }

    /// Rows `range` as a new matrix.
    pub fn slice_rows(&self, range: core::ops::Range<usize>) -> Result<Self> {
        let columns = self.columns.iter().map(|c| c[range.clone()].to_vec()).collect();
        let y = self.y.as_ref().map(|y| y[range.clone()].to_vec());
        Self::from_columns(columns, y)
    }
}

/// Tree outputs for every row of a [`DataMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated {
    pub values: Vec<f64>,
    /// False when any entry is NaN or infinite.
    pub finite: bool,
}

/// Bottom-up evaluation of `tree` on every row of `data`.
///
/// Singular operations (`1/0`, `exp` of a large argument) yield non-finite entries and clear
/// the `finite` flag instead of failing.
pub fn eval_tree(tree: &ExprTree, ops: &OperatorSet, data: &DataMatrix) -> Result<Evaluated> {
    let values = eval_node(&tree.root, ops, data)?;
    let finite = values.iter().all(|v| v.is_finite());
    Ok(Evaluated { values, finite })
}

fn eval_node(node: &Node, ops: &OperatorSet, data: &DataMatrix) -> Result<Vec<f64>> {
    match node {
        Node::Terminal { feature } => {
            if *feature >= data.d() {
                return Err(Error::FeatureOutOfRange {
                    feature: *feature,
                    dim: data.d(),
                });
            }
            Ok(data.column(*feature).to_vec())
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
            let mut out = eval_node(&children[0], ops, data)?;
            match spec.kind {
                OpKind::Unary(f) => out.iter_mut().for_each(|v| *v = f(*v)),
                OpKind::Affine => {
                    let p = params.ok_or(Error::MalformedTree("lt node without parameters"))?;
                    out.iter_mut().for_each(|v| *v = p.a * *v + p.b);
                }
                OpKind::Binary(f) => {
                    let right = eval_node(&children[1], ops, data)?;
                    out.iter_mut().zip(&right).for_each(|(l, r)| *l = f(*l, *r));
                }
            }
            Ok(out)
        }
    }
}
