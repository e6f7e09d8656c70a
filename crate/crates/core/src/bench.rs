//! Synthetic benchmark tasks, dataset splits, summary statistics and the price-return label.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

#[allow(unused_imports)] // needed without std
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::DataMatrix;

/// The six two-feature benchmark functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskId {
    F1,
    F2,
    F3,
    F4,
    F5,
    F6,
}

impl TaskId {
    pub const ALL: [TaskId; 6] = [TaskId::F1, TaskId::F2, TaskId::F3, TaskId::F4, TaskId::F5, TaskId::F6];

    pub fn name(self) -> &'static str {
        match self {
            TaskId::F1 => "f1",
            TaskId::F2 => "f2",
            TaskId::F3 => "f3",
            TaskId::F4 => "f4",
            TaskId::F5 => "f5",
            TaskId::F6 => "f6",
        }
    }

    pub fn formula(self) -> &'static str {
        match self {
            TaskId::F1 => "2.5*x0^4 - 1.3*x0^3 + 0.5*x1^2 - 1.7*x1",
            TaskId::F2 => "8*x0^2 + 8*x1^3 - 15",
            TaskId::F3 => "0.2*x0^3 + 0.5*x1^3 - 1.2*x1 - 0.5*x0",
            TaskId::F4 => "1.5*exp(x0) + 5*cos(x1)",
            TaskId::F5 => "6*sin(x0)*cos(x1)",
            TaskId::F6 => "1.35*x0*x1 + 5.5*sin((x0-1)*(x1-1))",
        }
    }

    pub fn truth(self, x0: f64, x1: f64) -> f64 {
        match self {
            TaskId::F1 => 2.5 * x0.powi(4) - 1.3 * x0.powi(3) + 0.5 * x1.powi(2) - 1.7 * x1,
            TaskId::F2 => 8.0 * x0.powi(2) + 8.0 * x1.powi(3) - 15.0,
            TaskId::F3 => 0.2 * x0.powi(3) + 0.5 * x1.powi(3) - 1.2 * x1 - 0.5 * x0,
            TaskId::F4 => 1.5 * x0.exp() + 5.0 * x1.cos(),
            TaskId::F5 => 6.0 * x0.sin() * x1.cos(),
            TaskId::F6 => 1.35 * x0 * x1 + 5.5 * ((x0 - 1.0) * (x1 - 1.0)).sin(),
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskId::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(alloc::format!("unknown task `{s}`")))
    }
}

/// Training data and the three test regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    TestInner,
    TestWide,
    TestOuter,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::TestInner, Split::TestWide, Split::TestOuter];

    /// Interval every predictor is drawn from.
    pub fn range(self) -> (f64, f64) {
        match self {
            Split::Train | Split::TestInner => (-3.0, 3.0),
            Split::TestWide => (-6.0, 6.0),
            Split::TestOuter => (3.0, 6.0),
        }
    }

    pub fn size(self) -> usize {
        match self {
            Split::Train => 100,
            _ => 30,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Split::Train => "train[-3,3]",
            Split::TestInner => "test[-3,3]",
            Split::TestWide => "test[-6,6]",
            Split::TestOuter => "test[3,6]",
        }
    }
}

/// Draws the predictors of `split` uniformly and labels them with the noiseless truth.
pub fn gen_dataset<R: Rng + ?Sized>(task: TaskId, split: Split, rng: &mut R) -> DataMatrix {
    let (lo, hi) = split.range();
    let n = split.size();
    let mut x0 = Vec::with_capacity(n);
    let mut x1 = Vec::with_capacity(n);
    for _ in 0..n {
        x0.push(rng.random_range(lo..=hi));
        x1.push(rng.random_range(lo..=hi));
    }
    let y = x0.iter().zip(&x1).map(|(a, b)| task.truth(*a, *b)).collect();
    DataMatrix::from_columns(alloc::vec![x0, x1], Some(y)).expect("equal-length columns")
}

/// Mean, sample standard deviation and median of a set of values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for fewer than two values.
    pub std: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    Some(Summary {
        n,
        mean,
        std,
        median,
        min: sorted[0],
        max: sorted[n - 1],
    })
}

/// Next-day returns of a close-price series with sign labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Returns {
    /// `(close[t+1] - close[t]) / close[t]` for every day but the last.
    pub returns: Vec<f64>,
    /// `+1` for non-negative returns, `-1` otherwise.
    pub labels: Vec<f64>,
}

pub fn returns_transform(close: &[f64]) -> Result<Returns> {
    if close.len() < 2 {
        return Err(Error::Dimension("a return needs at least two prices"));
    }
    if let Some((index, &value)) = close.iter().enumerate().find(|(_, p)| !(**p > 0.0)) {
        return Err(Error::NonPositivePrice { index, value });
    }
    let returns: Vec<f64> = close.windows(2).map(|w| (w[1] - w[0]) / w[0]).collect();
    let labels = returns.iter().map(|r| if *r >= 0.0 { 1.0 } else { -1.0 }).collect();
    Ok(Returns { returns, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn truth_spot_values() {
        assert_relative_eq!(TaskId::F4.truth(0.0, 0.0), 6.5);
        assert_eq!(TaskId::F5.truth(0.0, 1.7), 0.0);
        assert_relative_eq!(TaskId::F2.truth(1.0, 1.0), 1.0);
    }

    #[test]
    fn splits_respect_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for split in Split::ALL {
            let d = gen_dataset(TaskId::F1, split, &mut rng);
            assert_eq!(d.n(), split.size());
            assert_eq!(d.d(), 2);
            let (lo, hi) = split.range();
            assert!(d.columns().iter().flatten().all(|v| *v >= lo && *v <= hi));
        }
    }

    #[test]
    fn task_names_parse() {
        for t in TaskId::ALL {
            assert_eq!(t.name().parse::<TaskId>().unwrap(), t);
        }
        assert!("f7".parse::<TaskId>().is_err());
    }

    #[test]
    fn summary_statistics() {
        let s = summarize(&[1.0, 2.0, 3.0, 10.0]).unwrap();
        assert_eq!(s.mean, 4.0);
        assert_eq!(s.median, 2.5);
        assert_relative_eq!(s.std, (50.0f64 / 3.0).sqrt());
        assert_eq!(summarize(&[5.0]).unwrap().std, 0.0);
        assert!(summarize(&[]).is_none());
    }

    #[test]
    fn returns_and_labels() {
        let r = returns_transform(&[100.0, 110.0]).unwrap();
        assert_relative_eq!(r.returns[0], 0.1, epsilon = 1e-15);
        assert_eq!(r.labels, alloc::vec![1.0]);
        let flat = returns_transform(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!(flat.labels, alloc::vec![1.0, 1.0]);
        assert_eq!(
            returns_transform(&[1.0, 0.0]),
            Err(Error::NonPositivePrice { index: 1, value: 0.0 })
        );
        assert!(returns_transform(&[1.0]).is_err());
    }
}
