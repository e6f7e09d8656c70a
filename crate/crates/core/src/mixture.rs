//! Linear mixture of `K` expression trees fitted by least squares.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // needed without std
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{eval_tree, DataMatrix, ExprTree, OperatorSet};
use crate::prior::ScaleState;

/// Relative singular-value cutoff of the least-squares solve.
pub const SVD_CUTOFF: f64 = 1e-10;

/// Largest design entry the solver accepts; beyond it squared norms overflow.
pub const MAX_DESIGN_ENTRY: f64 = 1e150;

/// `n x (K+1)` matrix whose first column is all ones and column `i` holds tree `i - 1`.
pub fn design_matrix(trees: &[ExprTree], ops: &OperatorSet, data: &DataMatrix) -> Result<DMatrix<f64>> {
    let n = data.n();
    let mut m = DMatrix::from_element(n, trees.len() + 1, 1.0);
    for (i, tree) in trees.iter().enumerate() {
        let out = eval_tree(tree, ops, data)?;
        if !out.finite {
            return Err(Error::NonFiniteColumn(i + 1));
        }
        m.column_mut(i + 1).copy_from_slice(&out.values);
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub beta: Vec<f64>,
    pub rss: f64,
    pub fitted: Vec<f64>,
}

/// Minimum-norm least squares through an SVD, discarding singular values below
/// [`SVD_CUTOFF`] times the largest.
pub fn ols_fit(design: &DMatrix<f64>, y: &[f64]) -> Result<OlsFit> {
    if design.nrows() != y.len() {
        return Err(Error::LengthMismatch {
            left: design.nrows(),
            right: y.len(),
        });
    }
    if design.iter().any(|v| !(v.abs() <= MAX_DESIGN_ENTRY)) {
        return Err(Error::Numerical("design entries out of range"));
    }
    let svd = design.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().fold(0.0f64, |m, v| m.max(*v));
    let rhs = DVector::from_column_slice(y);
    let beta = svd
        .solve(&rhs, SVD_CUTOFF * max_sv)
        .map_err(|_| Error::Numerical("least-squares solve failed"))?;
    let fitted = design * &beta;
    let rss = fitted.iter().zip(y).map(|(f, y)| (y - f) * (y - f)).sum::<f64>();
    if !rss.is_finite() || beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Numerical("least-squares fit is not finite"));
    }
    Ok(OlsFit {
        beta: beta.iter().copied().collect(),
        rss,
        fitted: fitted.iter().copied().collect(),
    })
}

/// Gaussian log-likelihood of residuals with sum of squares `rss`.
pub fn log_likelihood(rss: f64, n: usize, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::NonPositiveVariance(sigma2));
    }
    let n = n as f64;
    Ok(-0.5 * n * (2.0 * core::f64::consts::PI * sigma2).ln() - rss / (2.0 * sigma2))
}

pub fn rmse(y_hat: &[f64], y: &[f64]) -> Result<f64> {
    if y_hat.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: y_hat.len(),
            right: y.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::Dimension("rmse of an empty sample"));
    }
    let sse: f64 = y_hat.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sse / y.len() as f64).sqrt())
}

/// Fraction of positions where the signs agree; zero counts as positive.
pub fn sign_accuracy(y_hat: &[f64], y: &[f64]) -> Result<f64> {
    if y_hat.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: y_hat.len(),
            right: y.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::Dimension("accuracy of an empty sample"));
    }
    let hits = y_hat.iter().zip(y).filter(|(a, b)| (**a >= 0.0) == (**b >= 0.0)).count();
    Ok(hits as f64 / y.len() as f64)
}

/// `y = beta_0 + sum_i beta_i g_i(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedModel {
    pub trees: Vec<ExprTree>,
    /// Intercept first, then one coefficient per tree.
    pub beta: Vec<f64>,
    pub scales: ScaleState,
}

impl MixedModel {
    /// Fits `beta` to the response of `data`.
    pub fn fit(trees: Vec<ExprTree>, ops: &OperatorSet, data: &DataMatrix, scales: ScaleState) -> Result<(Self, OlsFit)> {
        let y = data.y().ok_or(Error::Dimension("training data needs a response"))?;
        let fit = ols_fit(&design_matrix(&trees, ops, data)?, y)?;
        let model = Self {
            trees,
            beta: fit.beta.clone(),
            scales,
        };
        Ok((model, fit))
    }

    pub fn k(&self) -> usize {
        self.trees.len()
    }

    pub fn predict(&self, ops: &OperatorSet, data: &DataMatrix) -> Result<Vec<f64>> {
        let mut out = alloc::vec![self.beta[0]; data.n()];
        for (tree, b) in self.trees.iter().zip(&self.beta[1..]) {
            let g = eval_tree(tree, ops, data)?;
            out.iter_mut().zip(&g.values).for_each(|(o, v)| *o += b * v);
        }
        Ok(out)
    }

    /// RMSE on a dataset with a response.
    pub fn rmse_on(&self, ops: &OperatorSet, data: &DataMatrix) -> Result<f64> {
        let y = data.y().ok_or(Error::Dimension("evaluation data needs a response"))?;
        rmse(&self.predict(ops, data)?, y)
    }

    pub fn total_nodes(&self) -> usize {
        self.trees.iter().map(ExprTree::node_count).sum()
    }
}
