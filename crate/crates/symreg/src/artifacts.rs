//! Output files: `model.json`, `trace.csv`, `summary.txt` and resumable checkpoints.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use symreg_core::expr::{format_number, parse_infix, to_infix, DataMatrix, OperatorSet, OperatorSpec, Precision};
use symreg_core::mixture::MixedModel;
use symreg_core::prior::ScaleState;
use symreg_core::sampler::{ChainState, TraceRow};

use crate::error::{AppError, AppResult};

/// Digits shown in human-readable expressions.
pub const DISPLAY_DIGITS: u8 = 4;

/// Serde adapter writing non-finite floats as the strings `"NaN"`, `"inf"` and `"-inf"`, so
/// that every value survives a JSON round trip.
pub mod float_repr {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("NaN")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "NaN" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(de::Error::custom(format!("invalid number {other:?}"))),
            },
        }
    }
}

/// The fitted mixed model as stored in `model.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArtifact {
    pub seed: u64,
    pub target: String,
    pub features: Vec<String>,
    pub operators: Vec<String>,
    pub operator_weights: Vec<f64>,
    pub k: usize,
    /// Tree expressions with full-precision coefficients; these parse back exactly.
    pub expressions: Vec<String>,
    /// Tree expressions rounded for reading.
    pub display: Vec<String>,
    pub formula: String,
    /// Intercept followed by one coefficient per tree.
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub sigma_a2: f64,
    pub sigma_b2: f64,
    #[serde(with = "float_repr")]
    pub train_rmse: f64,
    pub n_train: usize,
    pub node_counts: Vec<usize>,
    pub total_nodes: usize,
    pub proposals: u64,
    pub accepted: u64,
}

pub fn operator_names(ops: &OperatorSet) -> Vec<String> {
    ops.names().into_iter().map(str::to_string).collect()
}

/// Rebuilds an operator set from built-in names and weights.
pub fn operators_from(names: &[String], weights: &[f64]) -> AppResult<OperatorSet> {
    if names.len() != weights.len() {
        return Err(AppError::Config("one weight per operator is required".into()));
    }
    let pairs = names
        .iter()
        .zip(weights)
        .map(|(n, w)| {
            OperatorSpec::builtin(n)
                .map(|s| (s, *w))
                .ok_or_else(|| AppError::Config(format!("unknown operator `{n}`")))
        })
        .collect::<AppResult<Vec<_>>>()?;
    Ok(OperatorSet::weighted(pairs)?)
}

/// `y = (b0) + (b1)*[e1] + ...` with coefficients and expressions rounded for reading.
pub fn render_formula(model: &MixedModel, ops: &OperatorSet, features: &[String]) -> AppResult<String> {
    let p = Precision::Significant(DISPLAY_DIGITS);
    let mut out = format!("y = ({})", format_number(model.beta[0], p));
    for (b, tree) in model.beta[1..].iter().zip(&model.trees) {
        let expr = name_features(&to_infix(tree, ops, p)?, features);
        write!(out, " + ({})*[{}]", format_number(*b, p), expr).expect("string write");
    }
    Ok(out)
}

/// Replaces `x1, x2, ...` by column names when the names are plain identifiers.
fn name_features(expr: &str, features: &[String]) -> String {
    let plain = |n: &String| !n.is_empty() && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if !features.iter().all(plain) {
        return expr.to_string();
    }
    let mut out = String::with_capacity(expr.len());
    let bytes = expr.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let starts_token = i == 0 || !(bytes[i - 1].is_ascii_alphanumeric() || bytes[i - 1] == b'_');
        if bytes[i] == b'x' && starts_token {
            let digits = bytes[i + 1..].iter().take_while(|b| b.is_ascii_digit()).count();
            let end = i + 1 + digits;
            let ends_token = end >= bytes.len() || !(bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_');
            if digits > 0 && ends_token {
                let idx: usize = expr[i + 1..end].parse().unwrap_or(0);
                if let Some(name) = idx.checked_sub(1).and_then(|j| features.get(j)) {
                    out.push_str(name);
                    i = end;
                    continue;
                }
            }
        }
        out.push(bytes[i] as char);
        i += 1;
    }
    out
}

pub struct ArtifactContext<'a> {
    pub seed: u64,
    pub target: &'a str,
    pub features: &'a [String],
    pub ops: &'a OperatorSet,
    pub data: &'a DataMatrix,
}

impl ModelArtifact {
    pub fn new(ctx: &ArtifactContext<'_>, model: &MixedModel, final_state: &ChainState) -> AppResult<Self> {
        let expressions = model
            .trees
            .iter()
            .map(|t| to_infix(t, ctx.ops, Precision::Exact))
            .collect::<Result<Vec<_>, _>>()?;
        let display = model
            .trees
            .iter()
            .map(|t| to_infix(t, ctx.ops, Precision::Significant(DISPLAY_DIGITS)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            seed: ctx.seed,
            target: ctx.target.to_string(),
            features: ctx.features.to_vec(),
            operators: operator_names(ctx.ops),
            operator_weights: ctx.ops.weights().to_vec(),
            k: model.k(),
            expressions,
            display,
            formula: render_formula(model, ctx.ops, ctx.features)?,
            beta: model.beta.clone(),
            sigma2: model.scales.sigma2,
            sigma_a2: model.scales.sigma_a2,
            sigma_b2: model.scales.sigma_b2,
            train_rmse: model.rmse_on(ctx.ops, ctx.data)?,
            n_train: ctx.data.n(),
            node_counts: model.trees.iter().map(|t| t.node_count()).collect(),
            total_nodes: model.total_nodes(),
            proposals: final_state.iteration,
            accepted: final_state.accept_count,
        })
    }

    pub fn operators(&self) -> AppResult<OperatorSet> {
        operators_from(&self.operators, &self.operator_weights)
    }

    /// Parses the stored expressions back into a model.
    pub fn to_model(&self) -> AppResult<(MixedModel, OperatorSet)> {
        let ops = self.operators()?;
        let trees = self
            .expressions
            .iter()
            .map(|e| parse_infix(e, &ops))
            .collect::<Result<Vec<_>, _>>()?;
        if self.beta.len() != trees.len() + 1 {
            return Err(AppError::Config(format!(
                "model has {} trees but {} coefficients",
                trees.len(),
                self.beta.len()
            )));
        }
        let model = MixedModel {
            trees,
            beta: self.beta.clone(),
            scales: ScaleState {
                sigma_a2: self.sigma_a2,
                sigma_b2: self.sigma_b2,
                sigma2: self.sigma2,
            },
        };
        Ok((model, ops))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable model");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| AppError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Plain-text report of the model.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{}", self.formula).unwrap();
        writeln!(s).unwrap();
        writeln!(s, "target      {}", self.target).unwrap();
        writeln!(s, "features    {}", self.features.join(", ")).unwrap();
        writeln!(s, "trees       {}", self.k).unwrap();
        writeln!(s, "nodes       {} ({:?})", self.total_nodes, self.node_counts).unwrap();
        writeln!(s, "train rmse  {}", format_number(self.train_rmse, Precision::Significant(6))).unwrap();
        writeln!(s, "sigma2      {}", format_number(self.sigma2, Precision::Significant(6))).unwrap();
        writeln!(s, "proposals   {} ({} accepted)", self.proposals, self.accepted).unwrap();
        writeln!(s, "seed        {}", self.seed).unwrap();
        s
    }
}

pub const TRACE_HEADER: &str = "iteration,tree_index,move,accepted,log_lik,sigma2,total_nodes,train_rmse";

pub fn render_trace(rows: &[TraceRow]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(TRACE_HEADER);
    s.push('\n');
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{:?},{:?},{},{:?}",
            r.iteration,
            r.tree_index,
            r.tag.name(),
            r.accepted,
            r.log_lik,
            r.sigma2,
            r.total_nodes,
            r.train_rmse
        )
        .unwrap();
    }
    s
}

/// Chain position and random-number state needed to continue a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub seed: u64,
    pub operators: Vec<String>,
    pub operator_weights: Vec<f64>,
    pub state: CheckpointState,
    pub rng: ChaCha8Rng,
    /// Lowest-RSS recorded model so far, if any state has been recorded.
    pub best: Option<BestSoFar>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSoFar {
    pub model: MixedModel,
    #[serde(with = "float_repr")]
    pub rss: f64,
}

/// [`ChainState`] with JSON-safe scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointState {
    pub model: MixedModel,
    #[serde(with = "float_repr")]
    pub log_lik: f64,
    #[serde(with = "float_repr")]
    pub log_prior: f64,
    #[serde(with = "float_repr")]
    pub rss: f64,
    pub iteration: u64,
    pub accept_count: u64,
}

impl From<&ChainState> for CheckpointState {
    fn from(s: &ChainState) -> Self {
        Self {
            model: s.model.clone(),
            log_lik: s.log_lik,
            log_prior: s.log_prior,
            rss: s.rss,
            iteration: s.iteration,
            accept_count: s.accept_count,
        }
    }
}

impl From<CheckpointState> for ChainState {
    fn from(s: CheckpointState) -> Self {
        Self {
            model: s.model,
            log_lik: s.log_lik,
            log_prior: s.log_prior,
            rss: s.rss,
            iteration: s.iteration,
            accept_count: s.accept_count,
        }
    }
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable checkpoint");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| AppError::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Writes a set of files into `dir`, creating it if needed. On any failure the files written
/// so far, and the directory if this call created it, are removed.
pub fn write_all(dir: &Path, files: &[(PathBuf, String)]) -> AppResult<Vec<PathBuf>> {
    let existed = dir.is_dir();
    let mut created_dirs: Vec<PathBuf> = Vec::new();
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| -> AppResult<()> {
        if !existed {
            let mut missing = Vec::new();
            let mut p = Some(dir);
            while let Some(d) = p.filter(|d| !d.as_os_str().is_empty() && !d.exists()) {
                missing.push(d.to_path_buf());
                p = d.parent();
            }
            std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
            created_dirs = missing;
        }
        for (name, contents) in files {
            let path = dir.join(name);
            if let Some(parent) = path.parent().filter(|p| !p.exists()) {
                let mut missing = Vec::new();
                let mut p = Some(parent);
                while let Some(d) = p.filter(|d| !d.exists()) {
                    missing.push(d.to_path_buf());
                    p = d.parent();
                }
                std::fs::create_dir_all(parent).map_err(|e| AppError::io(parent, e))?;
                created_dirs.extend(missing);
            }
            let result = std::fs::write(&path, contents);
            if path.exists() {
                written.push(path.clone());
            }
            result.map_err(|e| AppError::io(&path, e))?;
        }
        Ok(())
    })();
    match result {
        Ok(()) => Ok(written),
        Err(e) => {
            for p in &written {
                let _ = std::fs::remove_file(p);
            }
            created_dirs.sort_by_key(|d| std::cmp::Reverse(d.components().count()));
            for d in &created_dirs {
                let _ = std::fs::remove_dir(d);
            }
            Err(e)
        }
    }
}
