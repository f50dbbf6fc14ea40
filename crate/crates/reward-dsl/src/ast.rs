use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::feature::Feature;

/// Maximum tree depth of a reward expression (a lone leaf has depth 1).
pub const MAX_DEPTH: usize = 32;
/// Maximum number of nodes in a reward expression.
pub const MAX_NODES: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Log10,
    Ln,
    Exp,
    Abs,
    Tanh,
}

impl UnaryOp {
    /// Function-call name, `None` for prefix negation.
    pub fn function_name(self) -> Option<&'static str> {
        match self {
            UnaryOp::Neg => None,
            UnaryOp::Log10 => Some("log10"),
            UnaryOp::Ln => Some("ln"),
            UnaryOp::Exp => Some("exp"),
            UnaryOp::Abs => Some("abs"),
            UnaryOp::Tanh => Some("tanh"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Min,
    Max,
}

impl BinaryOp {
    pub fn is_function(self) -> bool {
        matches!(self, BinaryOp::Min | BinaryOp::Max)
    }
}

/// A node of the reward expression tree.
///
/// `Constant` values produced by the parser are finite and non-negative;
/// negative literals are represented as `Unary(Neg, Constant)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Constant(f64),
    Feature(Feature),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
    Clip { arg: Box<Node>, lo: f64, hi: f64 },
}

impl Node {
    pub fn unary(op: UnaryOp, arg: Node) -> Node {
        Node::Unary(op, Box::new(arg))
    }

    pub fn binary(op: BinaryOp, lhs: Node, rhs: Node) -> Node {
        Node::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Constant(_) | Node::Feature(_) => 1,
            Node::Unary(_, a) | Node::Clip { arg: a, .. } => 1 + a.depth(),
            Node::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Node::Constant(_) | Node::Feature(_) => 1,
            Node::Unary(_, a) | Node::Clip { arg: a, .. } => 1 + a.node_count(),
            Node::Binary(_, a, b) => 1 + a.node_count() + b.node_count(),
        }
    }

    /// Children in evaluation order; indices into this list form node paths.
    pub fn children(&self) -> Vec<&Node> {
        match self {
            Node::Constant(_) | Node::Feature(_) => Vec::new(),
            Node::Unary(_, a) | Node::Clip { arg: a, .. } => vec![a],
            Node::Binary(_, a, b) => vec![a, b],
        }
    }

    fn collect_features(&self, out: &mut BTreeSet<Feature>) {
        if let Node::Feature(f) = self {
            out.insert(*f);
        }
        for c in self.children() {
            c.collect_features(out);
        }
    }

    fn check_leaves(&self) -> Result<(), ValidationError> {
        match self {
            Node::Constant(c) if !c.is_finite() || *c < 0.0 => {
                Err(ValidationError::BadConstant(*c))
            }
            Node::Clip { lo, hi, .. } if !(lo.is_finite() && hi.is_finite() && lo <= hi) => {
                Err(ValidationError::BadClip { lo: *lo, hi: *hi })
            }
            _ => self.children().into_iter().try_for_each(Node::check_leaves),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("expression depth {0} exceeds the limit of {MAX_DEPTH}")]
    TooDeep(usize),
    #[error("expression has {0} nodes, more than the limit of {MAX_NODES}")]
    TooManyNodes(usize),
    #[error("constant {0} is not a finite non-negative literal")]
    BadConstant(f64),
    #[error("clip bounds [{lo}, {hi}] are not finite with lo <= hi")]
    BadClip { lo: f64, hi: f64 },
}

/// A validated reward expression. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardExpr {
    root: Node,
}

impl RewardExpr {
    pub fn new(root: Node) -> Result<Self, ValidationError> {
        let nodes = root.node_count();
        if nodes > MAX_NODES {
            return Err(ValidationError::TooManyNodes(nodes));
        }
        let depth = root.depth();
        if depth > MAX_DEPTH {
            return Err(ValidationError::TooDeep(depth));
        }
        root.check_leaves()?;
        Ok(RewardExpr { root })
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// The set of features the expression reads.
    pub fn features(&self) -> BTreeSet<Feature> {
        let mut out = BTreeSet::new();
        self.root.collect_features(&mut out);
        out
    }

    pub fn to_canonical(&self) -> String {
        crate::printer::print(&self.root)
    }
}

impl fmt::Display for RewardExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_canonical())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(depth: usize) -> Node {
        let mut n = Node::Feature(Feature::Rate);
        for _ in 1..depth {
            n = Node::unary(UnaryOp::Abs, n);
        }
        n
    }

    #[test]
    fn depth_limit() {
        assert!(RewardExpr::new(chain(MAX_DEPTH)).is_ok());
        assert_eq!(
            RewardExpr::new(chain(MAX_DEPTH + 1)),
            Err(ValidationError::TooDeep(MAX_DEPTH + 1))
        );
    }

    #[test]
    fn node_limit() {
        // A balanced-ish sum of 300 leaves: 599 nodes, depth well under the limit.
        let mut layer: Vec<Node> = (0..300).map(|_| Node::Constant(1.0)).collect();
        while layer.len() > 1 {
            layer = layer
                .chunks(2)
                .map(|c| match c {
                    [a, b] => Node::binary(BinaryOp::Add, a.clone(), b.clone()),
                    [a] => a.clone(),
                    _ => unreachable!(),
                })
                .collect();
        }
        let root = layer.pop().unwrap();
        assert_eq!(RewardExpr::new(root), Err(ValidationError::TooManyNodes(599)));
    }

    #[test]
    fn rejects_bad_leaves() {
        assert!(RewardExpr::new(Node::Constant(-1.0)).is_err());
        assert!(RewardExpr::new(Node::Constant(f64::NAN)).is_err());
        let clip = Node::Clip { arg: Box::new(Node::Feature(Feature::Rate)), lo: 1.0, hi: -1.0 };
        assert!(RewardExpr::new(clip).is_err());
    }

    #[test]
    fn feature_set() {
        let e = RewardExpr::new(Node::binary(
            BinaryOp::Sub,
            Node::Feature(Feature::Rate),
            Node::unary(UnaryOp::Log10, Node::Feature(Feature::Crb)),
        ))
        .unwrap();
        assert_eq!(e.features().into_iter().collect::<Vec<_>>(), vec![Feature::Rate, Feature::Crb]);
    }
}
