//! Small probability helpers shared by the prior, proposals and sampler.

use core::f64::consts::PI;

#[allow(unused_imports)] // needed without std
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Log density of `N(mean, var)` at `x`.
pub fn normal_ln_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let z = x - mean;
    -0.5 * (2.0 * PI * var).ln() - z * z / (2.0 * var)
}

pub fn sample_normal<R: Rng + ?Sized>(mean: f64, var: f64, rng: &mut R) -> f64 {
    Normal::new(mean, var.sqrt())
        .expect("normal variance must be positive and finite")
        .sample(rng)
}

/// Inverse-gamma law with density proportional to `x^(-shape-1) exp(-rate/x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvGamma {
    pub shape: f64,
    pub rate: f64,
}

impl InvGamma {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(Error::NonPositiveScale(shape));
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::NonPositiveScale(rate));
        }
        Ok(Self { shape, rate })
    }

    /// The `IG(nu/2, nu*lambda/2)` hyperprior used throughout the model.
    pub fn from_nu_lambda(nu: f64, lambda: f64) -> Result<Self> {
        Self::new(nu / 2.0, nu * lambda / 2.0)
    }

    pub fn mean(&self) -> Option<f64> {
        (self.shape > 1.0).then(|| self.rate / (self.shape - 1.0))
    }

    pub fn ln_pdf(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::NonPositiveScale(x));
        }
        Ok(self.shape * self.rate.ln() - libm::lgamma(self.shape)
            - (self.shape + 1.0) * x.ln()
            - self.rate / x)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // rand_distr's Gamma takes a scale, the reciprocal of the rate.
        let g = Gamma::new(self.shape, 1.0 / self.rate).expect("validated gamma parameters");
        loop {
            let x = 1.0 / g.sample(rng);
            if x.is_finite() && x > 0.0 {
                return x;
            }
        }
    }
}

/// Draws an index with probability proportional to `weights`.
///
/// Zero-weight entries are never returned. Panics if all weights are zero.
pub fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    assert!(total > 0.0, "categorical weights must not all be zero");
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        if u < w {
            return i;
        }
        u -= w;
        last = i;
    }
    last
}

/// Uniform draw from `0..n`.
pub fn sample_index<R: Rng + ?Sized>(n: usize, rng: &mut R) -> usize {
    rng.random_range(0..n)
}

/// `ln(w)`, mapping zero weights to negative infinity.
pub fn ln_weight(w: f64) -> f64 {
    if w > 0.0 {
        w.ln()
    } else {
        f64::NEG_INFINITY
    }
}
