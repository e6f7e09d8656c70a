//! Expression trees: operator registry, tree representation, evaluation and infix text.

mod eval;
mod infix;
mod ops;
mod tree;

pub use eval::{eval_tree, DataMatrix, Evaluated};
pub use infix::{format_number, parse_infix, to_infix, Precision};
pub use ops::{Notation, OpId, OpKind, OperatorSet, OperatorSpec, EXP_GUARD};
pub use tree::{Affine, ExprTree, Node, SiteInfo};
