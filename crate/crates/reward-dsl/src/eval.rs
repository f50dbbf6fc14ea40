use std::fmt;

use thiserror::Error;

use crate::ast::{BinaryOp, Node, RewardExpr, UnaryOp};
use crate::feature::FeatureMap;

pub const REWARD_MIN: f64 = -100.0;
pub const REWARD_MAX: f64 = 100.0;
/// Denominators with smaller magnitude are treated as division by zero.
pub const DIV_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalErrorKind {
    DivisionByZero,
    LogDomain,
    NonFinite,
}

impl fmt::Display for EvalErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalErrorKind::DivisionByZero => "division by zero",
            EvalErrorKind::LogDomain => "logarithm of a non-positive value",
            EvalErrorKind::NonFinite => "non-finite value",
        })
    }
}

/// Evaluation failure. `path` lists child indices from the root to the
/// offending node.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind} at node path {path:?}")]
pub struct EvalError {
    pub kind: EvalErrorKind,
    pub path: Vec<usize>,
}

/// Evaluates `expr` with strict real arithmetic and clips the result to
/// [`REWARD_MIN`]..=[`REWARD_MAX`].
pub fn evaluate(expr: &RewardExpr, features: &FeatureMap) -> Result<f64, EvalError> {
    evaluate_unclipped(expr, features).map(|v| v.clamp(REWARD_MIN, REWARD_MAX))
}

pub(crate) fn evaluate_unclipped(expr: &RewardExpr, features: &FeatureMap) -> Result<f64, EvalError> {
    let mut path = Vec::new();
    eval(expr.root(), features, &mut path)
}

fn eval(node: &Node, features: &FeatureMap, path: &mut Vec<usize>) -> Result<f64, EvalError> {
    let fail = |kind, path: &Vec<usize>| Err(EvalError { kind, path: path.clone() });
    let value = match node {
        Node::Constant(v) => *v,
        Node::Feature(f) => features.get(*f),
        Node::Unary(op, a) => {
            let x = child(a, 0, features, path)?;
            match op {
                UnaryOp::Neg => -x,
                UnaryOp::Log10 | UnaryOp::Ln if x <= 0.0 => {
                    return fail(EvalErrorKind::LogDomain, path)
                }
                UnaryOp::Log10 => x.log10(),
                UnaryOp::Ln => x.ln(),
                UnaryOp::Exp => x.exp(),
                UnaryOp::Abs => x.abs(),
                UnaryOp::Tanh => x.tanh(),
            }
        }
        Node::Binary(op, a, b) => {
            let x = child(a, 0, features, path)?;
            let y = child(b, 1, features, path)?;
            match op {
                BinaryOp::Add => x + y,
                BinaryOp::Sub => x - y,
                BinaryOp::Mul => x * y,
                BinaryOp::Div if y.abs() < DIV_EPSILON => {
                    return fail(EvalErrorKind::DivisionByZero, path)
                }
                BinaryOp::Div => x / y,
                BinaryOp::Pow => x.powf(y),
                BinaryOp::Min => x.min(y),
                BinaryOp::Max => x.max(y),
            }
        }
        Node::Clip { arg, lo, hi } => child(arg, 0, features, path)?.clamp(*lo, *hi),
    };
    if value.is_finite() {
        Ok(value)
    } else {
        fail(EvalErrorKind::NonFinite, path)
    }
}

fn child(node: &Node, index: usize, features: &FeatureMap, path: &mut Vec<usize>) -> Result<f64, EvalError> {
    path.push(index);
    let out = eval(node, features, path);
    path.pop();
    out
}
