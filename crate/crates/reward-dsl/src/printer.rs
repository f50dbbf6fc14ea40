//! Canonical text form. Parentheses appear only where the grammar needs
//! them, so `parse(print(e)) == e` structurally.

use crate::ast::{BinaryOp, Node, UnaryOp};

// Binding strength of each printed form; higher binds tighter.
const ADD: u8 = 1;
const MUL: u8 = 2;
const POW: u8 = 3;
const NEG: u8 = 4;
const ATOM: u8 = 5;

pub(crate) fn print(node: &Node) -> String {
    let mut out = String::new();
    write(node, &mut out);
    out
}

/// Shortest round-tripping decimal form, without a trailing `.0`.
pub(crate) fn format_number(v: f64) -> String {
    let s = format!("{v:?}");
    match s.strip_suffix(".0") {
        Some(int) => int.to_string(),
        None => s,
    }
}

fn precedence(node: &Node) -> u8 {
    match node {
        Node::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => ADD,
        Node::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => MUL,
        Node::Binary(BinaryOp::Pow, ..) => POW,
        Node::Unary(UnaryOp::Neg, _) => NEG,
        _ => ATOM,
    }
}

fn write_at(node: &Node, min: u8, out: &mut String) {
    if precedence(node) < min {
        out.push('(');
        write(node, out);
        out.push(')');
    } else {
        write(node, out);
    }
}

fn write(node: &Node, out: &mut String) {
    match node {
        Node::Constant(v) => out.push_str(&format_number(*v)),
        Node::Feature(f) => out.push_str(f.name()),
        Node::Unary(UnaryOp::Neg, a) => {
            out.push('-');
            write_at(a, NEG, out);
        }
        Node::Unary(op, a) => {
            out.push_str(op.function_name().expect("named function"));
            out.push('(');
            write(a, out);
            out.push(')');
        }
        Node::Binary(op @ (BinaryOp::Min | BinaryOp::Max), a, b) => {
            out.push_str(if *op == BinaryOp::Min { "min(" } else { "max(" });
            write(a, out);
            out.push_str(", ");
            write(b, out);
            out.push(')');
        }
        Node::Binary(BinaryOp::Pow, a, b) => {
            write_at(a, NEG, out);
            out.push('^');
            write_at(b, POW, out);
        }
        Node::Binary(op, a, b) => {
            let (sym, own) = match op {
                BinaryOp::Add => (" + ", ADD),
                BinaryOp::Sub => (" - ", ADD),
                BinaryOp::Mul => (" * ", MUL),
                BinaryOp::Div => (" / ", MUL),
                _ => unreachable!("handled above"),
            };
            write_at(a, own, out);
            out.push_str(sym);
            write_at(b, own + 1, out);
        }
        Node::Clip { arg, lo, hi } => {
            out.push_str("clip(");
            write(arg, out);
            out.push_str(", ");
            out.push_str(&format_number(*lo));
            out.push_str(", ");
            out.push_str(&format_number(*hi));
            out.push(')');
        }
    }
}
