//! A small, sandboxed expression language for scalar reward functions.
//!
//! Reward expressions are arithmetic over a fixed set of named environment
//! features (see [`Feature`]). They are parsed with [`parse`], stored as
//! canonical text produced by [`RewardExpr::to_canonical`], and evaluated
//! with [`evaluate`]. Evaluation is strict: division by (near) zero, logs of
//! non-positive values and non-finite intermediates are errors rather than
//! NaN or infinity, and every successful result lies in
//! [`REWARD_MIN`]..=[`REWARD_MAX`].
//!
//! ```
//! use isac_reward_dsl::{evaluate, parse, FeatureMap};
//!
//! let expr = parse("rate - crb").unwrap();
//! let features = FeatureMap { rate: 3.0, crb: 1.0, ..FeatureMap::default() };
//! assert_eq!(evaluate(&expr, &features).unwrap(), 2.0);
//! ```

mod ast;
mod builtin;
mod eval;
mod feature;
mod lexer;
mod parser;
mod printer;

pub use ast::{BinaryOp, Node, RewardExpr, UnaryOp, ValidationError, MAX_DEPTH, MAX_NODES};
pub use builtin::{
    builtin_manual_reward, builtin_normalized_reward, NormalizedRewardParams, MANUAL_REWARD_SOURCE,
};
pub use eval::{evaluate, EvalError, EvalErrorKind, DIV_EPSILON, REWARD_MAX, REWARD_MIN};
pub use feature::{Feature, FeatureMap};
pub use parser::{parse, ParseError, ParseErrorKind, MAX_SOURCE_CHARS};
