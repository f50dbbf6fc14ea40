//! Recursive-descent parser.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := power (('*' | '/') power)*
//! power   := unary ('^' power)?            right-associative
//! unary   := '-' unary | primary           binds tighter than '^'
//! primary := number | feature | name '(' expr (',' expr)* ')' | '(' expr ')'
//! ```

use std::fmt;

use thiserror::Error;

use crate::ast::{BinaryOp, Node, RewardExpr, UnaryOp, ValidationError};
use crate::feature::{Feature, FeatureMap};
use crate::lexer::{tokenize, Token, TokenKind};

/// Longest accepted source text, in characters.
pub const MAX_SOURCE_CHARS: usize = 4096;

// Bounds parser recursion independently of the AST depth limit, which is
// only checked once a tree exists.
const MAX_NESTING: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Lex,
    Syntax,
    UnknownFeature,
    Arity,
    LimitExceeded,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParseErrorKind::Lex => "lex",
            ParseErrorKind::Syntax => "syntax",
            ParseErrorKind::UnknownFeature => "unknown-feature",
            ParseErrorKind::Arity => "arity",
            ParseErrorKind::LimitExceeded => "limit-exceeded",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind} error at offset {position}: {message}")]
pub struct ParseError {
    /// Character offset into the source, at most the source length.
    pub position: usize,
    pub kind: ParseErrorKind,
    pub message: String,
}

impl ParseError {
    pub(crate) fn new(position: usize, kind: ParseErrorKind, message: String) -> Self {
        ParseError { position, kind, message }
    }
}

/// Parses and validates a reward expression.
pub fn parse(source: &str) -> Result<RewardExpr, ParseError> {
    let len = source.chars().count();
    if len > MAX_SOURCE_CHARS {
        return Err(ParseError::new(
            MAX_SOURCE_CHARS,
            ParseErrorKind::LimitExceeded,
            format!("source is {len} characters, limit is {MAX_SOURCE_CHARS}"),
        ));
    }
    let tokens = tokenize(source)?;
    let mut parser = Parser { tokens, at: 0, nesting: 0 };
    let root = parser.expr()?;
    let tail = parser.peek();
    if tail.kind != TokenKind::Eof {
        return Err(ParseError::new(
            tail.pos,
            ParseErrorKind::Syntax,
            format!("unexpected {} after complete expression", tail.kind.describe()),
        ));
    }
    RewardExpr::new(root).map_err(|e| {
        let kind = match e {
            ValidationError::TooDeep(_) | ValidationError::TooManyNodes(_) => {
                ParseErrorKind::LimitExceeded
            }
            _ => ParseErrorKind::Syntax,
        };
        ParseError::new(0, kind, e.to_string())
    })
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
    nesting: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.at]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if t.kind != TokenKind::Eof {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, kind: TokenKind, what: &str) -> Result<Token, ParseError> {
        let t = self.bump();
        if t.kind == kind {
            Ok(t)
        } else {
            Err(ParseError::new(
                t.pos,
                ParseErrorKind::Syntax,
                format!("expected {what}, found {}", t.kind.describe()),
            ))
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().kind {
                TokenKind::Plus => BinaryOp::Add,
                TokenKind::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Node::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.power()?;
        loop {
            let op = match self.peek().kind {
                TokenKind::Star => BinaryOp::Mul,
                TokenKind::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.power()?;
            lhs = Node::binary(op, lhs, rhs);
        }
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.unary()?;
        if self.peek().kind == TokenKind::Caret {
            self.bump();
            let exponent = self.power()?;
            return Ok(Node::binary(BinaryOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        self.nesting += 1;
        if self.nesting > MAX_NESTING {
            return Err(ParseError::new(
                self.peek().pos,
                ParseErrorKind::LimitExceeded,
                format!("expression nests deeper than {MAX_NESTING} levels"),
            ));
        }
        let out = if self.peek().kind == TokenKind::Minus {
            self.bump();
            self.unary().map(|n| Node::unary(UnaryOp::Neg, n))
        } else {
            self.primary()
        };
        self.nesting -= 1;
        out
    }

    fn primary(&mut self) -> Result<Node, ParseError> {
        let t = self.bump();
        match t.kind {
            TokenKind::Number(v) => Ok(Node::Constant(v)),
            TokenKind::LParen => {
                let inner = self.expr()?;
                self.expect(TokenKind::RParen, "`)`")?;
                Ok(inner)
            }
            TokenKind::Ident(name) => {
                if self.peek().kind == TokenKind::LParen {
                    self.call(&name, t.pos)
                } else {
                    name.parse::<Feature>().map(Node::Feature).map_err(|_| {
                        ParseError::new(
                            t.pos,
                            ParseErrorKind::UnknownFeature,
                            format!("`{name}` is not a known feature"),
                        )
                    })
                }
            }
            other => Err(ParseError::new(
                t.pos,
                ParseErrorKind::Syntax,
                format!("expected an operand, found {}", other.describe()),
            )),
        }
    }

    fn call(&mut self, name: &str, pos: usize) -> Result<Node, ParseError> {
        let arity = match name {
            "log10" | "ln" | "exp" | "abs" | "tanh" => 1,
            "min" | "max" => 2,
            "clip" => 3,
            _ => {
                return Err(ParseError::new(
                    pos,
                    ParseErrorKind::Syntax,
                    format!("unknown function `{name}`"),
                ))
            }
        };
        self.expect(TokenKind::LParen, "`(`")?;
        let mut args = vec![self.expr()?];
        while self.peek().kind == TokenKind::Comma {
            self.bump();
            args.push(self.expr()?);
        }
        self.expect(TokenKind::RParen, "`)` or `,`")?;
        if args.len() != arity {
            return Err(ParseError::new(
                pos,
                ParseErrorKind::Arity,
                format!("`{name}` takes {arity} argument(s), got {}", args.len()),
            ));
        }
        let mut args = args.into_iter();
        let mut next = || args.next().expect("arity checked");
        let node = match name {
            "log10" => Node::unary(UnaryOp::Log10, next()),
            "ln" => Node::unary(UnaryOp::Ln, next()),
            "exp" => Node::unary(UnaryOp::Exp, next()),
            "abs" => Node::unary(UnaryOp::Abs, next()),
            "tanh" => Node::unary(UnaryOp::Tanh, next()),
            "min" => Node::binary(BinaryOp::Min, next(), next()),
            "max" => Node::binary(BinaryOp::Max, next(), next()),
            _ => {
                let arg = next();
                let lo = constant_bound(next(), pos, "lower")?;
                let hi = constant_bound(next(), pos, "upper")?;
                if lo > hi {
                    return Err(ParseError::new(
                        pos,
                        ParseErrorKind::Syntax,
                        format!("clip lower bound {lo} exceeds upper bound {hi}"),
                    ));
                }
                Node::Clip { arg: Box::new(arg), lo, hi }
            }
        };
        Ok(node)
    }
}

/// Folds a feature-free clip bound to its value.
fn constant_bound(node: Node, pos: usize, which: &str) -> Result<f64, ParseError> {
    let err = |m: String| ParseError::new(pos, ParseErrorKind::Syntax, m);
    let expr = RewardExpr::new(node).map_err(|e| err(format!("clip {which} bound: {e}")))?;
    if !expr.features().is_empty() {
        return Err(err(format!("clip {which} bound must be a constant")));
    }
    crate::eval::evaluate_unclipped(&expr, &FeatureMap::default())
        .map_err(|e| err(format!("clip {which} bound: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::BinaryOp::*;

    fn c(v: f64) -> Node {
        Node::Constant(v)
    }
    fn f(x: Feature) -> Node {
        Node::Feature(x)
    }

    #[test]
    fn mixed_expression_shape() {
        let e = parse("0.5*rate - 0.1*log10(crb)").unwrap();
        let expected = Node::binary(
            Sub,
            Node::binary(Mul, c(0.5), f(Feature::Rate)),
            Node::binary(Mul, c(0.1), Node::unary(UnaryOp::Log10, f(Feature::Crb))),
        );
        assert_eq!(e.root(), &expected);
    }

    #[test]
    fn dangling_operator_reports_end_offset() {
        let e = parse("rate + ").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::Syntax);
        assert_eq!(e.position, 7);
    }

    #[test]
    fn unary_minus_binds_tighter_than_pow() {
        let e = parse("-rate^2").unwrap();
        let expected = Node::binary(Pow, Node::unary(UnaryOp::Neg, f(Feature::Rate)), c(2.0));
        assert_eq!(e.root(), &expected);
    }

    #[test]
    fn pow_is_right_associative() {
        let e = parse("2^3^rate").unwrap();
        let expected = Node::binary(Pow, c(2.0), Node::binary(Pow, c(3.0), f(Feature::Rate)));
        assert_eq!(e.root(), &expected);
        let e = parse("2^-rate").unwrap();
        let expected = Node::binary(Pow, c(2.0), Node::unary(UnaryOp::Neg, f(Feature::Rate)));
        assert_eq!(e.root(), &expected);
    }

    #[test]
    fn sub_is_left_associative() {
        let e = parse("rate - crb - 1").unwrap();
        let expected =
            Node::binary(Sub, Node::binary(Sub, f(Feature::Rate), f(Feature::Crb)), c(1.0));
        assert_eq!(e.root(), &expected);
    }

    #[test]
    fn clip_bounds_are_folded() {
        let e = parse("clip(rate, -1, 2*1.5)").unwrap();
        assert_eq!(e.root(), &Node::Clip { arg: Box::new(f(Feature::Rate)), lo: -1.0, hi: 3.0 });
    }

    #[test]
    fn error_kinds() {
        let cases = [
            ("rate $ crb", ParseErrorKind::Lex, 5),
            ("reward + 1", ParseErrorKind::UnknownFeature, 0),
            ("1 + min(rate)", ParseErrorKind::Arity, 4),
            ("foo(rate)", ParseErrorKind::Syntax, 0),
            ("(rate", ParseErrorKind::Syntax, 5),
            ("rate crb", ParseErrorKind::Syntax, 5),
            ("clip(rate, crb, 1)", ParseErrorKind::Syntax, 0),
            ("clip(rate, 2, 1)", ParseErrorKind::Syntax, 0),
            ("", ParseErrorKind::Syntax, 0),
        ];
        for (src, kind, pos) in cases {
            let e = parse(src).unwrap_err();
            assert_eq!((e.kind, e.position), (kind, pos), "{src}: {e}");
        }
    }

    #[test]
    fn limits() {
        let long = "1+".repeat(2100) + "1";
        assert_eq!(parse(&long).unwrap_err().kind, ParseErrorKind::LimitExceeded);

        let deep = "abs(".repeat(40) + "rate" + &")".repeat(40);
        assert_eq!(parse(&deep).unwrap_err().kind, ParseErrorKind::LimitExceeded);

        let nested = "-".repeat(1000) + "rate";
        assert_eq!(parse(&nested).unwrap_err().kind, ParseErrorKind::LimitExceeded);

        // Parentheses alone do not add depth.
        let parens = "(".repeat(100) + "rate" + &")".repeat(100);
        assert!(parse(&parens).is_ok());

        let many = vec!["rate"; 300].join("+");
        assert_eq!(parse(&many).unwrap_err().kind, ParseErrorKind::LimitExceeded);
    }
}
