use alloc::borrow::ToOwned;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};

/// Arguments above this value make `exp` report a non-finite result.
pub const EXP_GUARD: f64 = 700.0;

/// Index of an operator inside an [`OperatorSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub struct OpId(pub u16);

impl OpId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// How an operator computes its value.
#[derive(Debug, Clone, Copy)]
pub enum OpKind {
    Unary(fn(f64) -> f64),
    Binary(fn(f64, f64) -> f64),
    /// `a * x + b`, the only operator carrying parameters.
    Affine,
}

/// How an operator is written in infix text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Notation {
    /// `name(x)` or `name(x,y)`.
    Call,
    /// `(x sym y)`, binary only.
    Infix(String),
    /// `(sym x)`, unary only, e.g. `(-x)` or `(1/x)`.
    Prefix(String),
    /// `(x sym)`, unary only, e.g. `(x^2)`.
    Postfix(String),
    /// `(a*x+b)`.
    Affine,
}

#[derive(Debug, Clone)]
pub struct OperatorSpec {
    pub name: String,
    pub kind: OpKind,
    pub notation: Notation,
}

impl OperatorSpec {
    pub fn unary(name: &str, f: fn(f64) -> f64, notation: Notation) -> Self {
        Self {
            name: name.to_owned(),
            kind: OpKind::Unary(f),
            notation,
        }
    }

    pub fn binary(name: &str, f: fn(f64, f64) -> f64, notation: Notation) -> Self {
        Self {
            name: name.to_owned(),
            kind: OpKind::Binary(f),
            notation,
        }
    }

    pub fn affine(name: &str) -> Self {
        Self {
            name: name.to_owned(),
            kind: OpKind::Affine,
            notation: Notation::Affine,
        }
    }

    pub fn arity(&self) -> usize {
        match self.kind {
            OpKind::Unary(_) | OpKind::Affine => 1,
            OpKind::Binary(_) => 2,
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self.kind, OpKind::Affine)
    }

    /// Looks up one of the built-in operators by name.
    ///
    /// Known names: `add sub mul div sin cos exp inv neg square cube lt`.
    pub fn builtin(name: &str) -> Option<Self> {
        let infix = |s: &str| Notation::Infix(s.to_owned());
        Some(match name {
            "add" => Self::binary("add", |a, b| a + b, infix("+")),
            "sub" => Self::binary("sub", |a, b| a - b, infix("-")),
            "mul" => Self::binary("mul", |a, b| a * b, infix("*")),
            "div" => Self::binary("div", |a, b| a / b, infix("/")),
            "sin" => Self::unary("sin", <f64 as Float>::sin, Notation::Call),
            "cos" => Self::unary("cos", <f64 as Float>::cos, Notation::Call),
            "exp" => Self::unary("exp", guarded_exp, Notation::Call),
            "inv" => Self::unary("inv", |x| 1.0 / x, Notation::Prefix("1/".to_owned())),
            "neg" => Self::unary("neg", |x| -x, Notation::Prefix("-".to_owned())),
            "square" => Self::unary("square", |x| x * x, Notation::Postfix("^2".to_owned())),
            "cube" => Self::unary("cube", |x| x * x * x, Notation::Postfix("^3".to_owned())),
            "lt" => Self::affine("lt"),
            _ => return None,
        })
    }
}

fn guarded_exp(x: f64) -> f64 {
    if x > EXP_GUARD {
        f64::INFINITY
    } else {
        x.exp()
    }
}

/// Operator registry with prior sampling weights `w_op`.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    ops: Vec<OperatorSpec>,
    weights: Vec<f64>,
}

impl OperatorSet {
    pub fn new(ops: Vec<OperatorSpec>, weights: Vec<f64>) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::InvalidWeights("operator set is empty"));
        }
        if ops.len() != weights.len() {
            return Err(Error::InvalidWeights("one weight per operator is required"));
        }
        if ops.len() > u16::MAX as usize {
            return Err(Error::InvalidWeights("too many operators"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidWeights("operator weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidWeights("operator weights must sum to 1"));
        }
        for (i, op) in ops.iter().enumerate() {
            if ops[..i].iter().any(|o| o.name == op.name) {
                return Err(Error::DuplicateOperator(op.name.clone()));
            }
        }
        Ok(Self { ops, weights })
    }

    pub fn uniform(ops: Vec<OperatorSpec>) -> Result<Self> {
        let w = 1.0 / ops.len().max(1) as f64;
        let weights = alloc::vec![w; ops.len()];
        Self::new(ops, weights)
    }

    /// Builds a set from unnormalised `(operator, weight)` pairs.
    pub fn weighted(pairs: Vec<(OperatorSpec, f64)>) -> Result<Self> {
        let total: f64 = pairs.iter().map(|(_, w)| *w).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidWeights("operator weights must have a positive sum"));
        }
        let (ops, weights): (Vec<_>, Vec<_>) = pairs.into_iter().map(|(o, w)| (o, w / total)).unzip();
        Self::new(ops, weights)
    }

    /// Uniform set over built-in operator names.
    pub fn from_names(names: &[&str]) -> Result<Self> {
        let ops = names
            .iter()
            .map(|n| OperatorSpec::builtin(n).ok_or_else(|| Error::UnknownOperator((*n).to_owned())))
            .collect::<Result<Vec<_>>>()?;
        Self::uniform(ops)
    }

    /// `exp, lt, inv, neg, +, *` with uniform weights.
    pub fn default_pool() -> Self {
        Self::from_names(&["exp", "lt", "inv", "neg", "add", "mul"]).expect("built-in pool")
    }

    /// `+, -, *, /, sin, cos, exp, x^2, x^3` plus `lt`, uniform weights.
    pub fn benchmark_pool() -> Self {
        Self::from_names(&["add", "sub", "mul", "div", "sin", "cos", "exp", "square", "cube", "lt"])
            .expect("built-in pool")
    }

    /// `+, -, *, /, exp, x^2, x^3` plus `lt`, uniform weights.
    pub fn finance_pool() -> Self {
        Self::from_names(&["add", "sub", "mul", "div", "exp", "square", "cube", "lt"]).expect("built-in pool")
    }

    /// Returns a copy of this set with `spec` appended and all weights rescaled so that
    /// the new operator receives `weight`.
    pub fn with_operator(&self, spec: OperatorSpec, weight: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&weight) {
            return Err(Error::InvalidWeights("new operator weight must lie in [0, 1)"));
        }
        let mut ops = self.ops.clone();
        let mut weights: Vec<f64> = self.weights.iter().map(|w| w * (1.0 - weight)).collect();
        ops.push(spec);
        weights.push(weight);
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Self::new(ops, weights)
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn get(&self, id: OpId) -> Result<&OperatorSpec> {
        self.ops
            .get(id.index())
            .ok_or_else(|| Error::UnknownOperator(alloc::format!("#{}", id.0)))
    }

    pub fn weight(&self, id: OpId) -> f64 {
        self.weights.get(id.index()).copied().unwrap_or(0.0)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn ids(&self) -> impl Iterator<Item = OpId> + '_ {
        (0..self.ops.len()).map(|i| OpId(i as u16))
    }

    pub fn iter(&self) -> impl Iterator<Item = (OpId, &OperatorSpec)> + '_ {
        self.ops.iter().enumerate().map(|(i, o)| (OpId(i as u16), o))
    }

    pub fn find(&self, name: &str) -> Option<OpId> {
        self.ops.iter().position(|o| o.name == name).map(|i| OpId(i as u16))
    }

    pub fn names(&self) -> Vec<&str> {
        self.ops.iter().map(|o| o.name.as_str()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_normalised() {
        for set in [OperatorSet::default_pool(), OperatorSet::benchmark_pool(), OperatorSet::finance_pool()] {
            let total: f64 = set.weights().iter().sum();
            assert!((total - 1.0).abs() <= 1e-12);
        }
        assert_eq!(OperatorSet::default_pool().len(), 6);
        assert_eq!(OperatorSet::benchmark_pool().len(), 10);
    }

    #[test]
    fn rejects_duplicates_and_bad_weights() {
        let add = OperatorSpec::builtin("add").unwrap();
        assert!(matches!(
            OperatorSet::uniform(alloc::vec![add.clone(), add.clone()]),
            Err(Error::DuplicateOperator(_))
        ));
        assert!(OperatorSet::new(alloc::vec![add.clone()], alloc::vec![0.5]).is_err());
        assert!(OperatorSet::new(alloc::vec![add], alloc::vec![-1.0]).is_err());
    }

    #[test]
    fn registering_an_operator_keeps_weights_normalised() {
        let tanh = OperatorSpec::unary("tanh", <f64 as Float>::tanh, Notation::Call);
        let set = OperatorSet::default_pool().with_operator(tanh, 0.25).unwrap();
        assert_eq!(set.len(), 7);
        assert!((set.weight(set.find("tanh").unwrap()) - 0.25).abs() < 1e-15);
        assert!((set.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn exp_guard_flags_overflow() {
        let exp = OperatorSpec::builtin("exp").unwrap();
        let OpKind::Unary(f) = exp.kind else { panic!() };
        assert!(f(700.5).is_infinite());
        assert!(f(1.0).is_finite());
    }
}
