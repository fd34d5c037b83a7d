// SPDX-License-Identifier: Apache-2.0

//! RTL-lite: a small synthesizable subset with a parser, elaborator,
//! canonical printer and cycle-accurate simulator.
//!
//! ```text
//! module acc(input [7:0] a, input en, output [7:0] y);
//!   wire [7:0] sum;
//!   reg [7:0] q;
//!   assign sum = q + a;
//!   assign y = q;
//!   always_ff begin
//!     q <= en ? sum : q;
//!   end
//! endmodule
//! ```
//!
//! There is one implicit clock and registers reset to zero. Arithmetic is
//! unsigned modulo `2^width` and operands of binary operators must have equal
//! widths; there is no implicit extension or truncation.

mod lexer;
mod netlist;
mod parser;
mod print;
mod sim;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use netlist::{Netlist, Node, NodeId, NodeOp};
pub use parser::parse;
pub use print::{print, print_expr};
pub use sim::{simulate, InputVector, OutputVector, Simulator};

/// Widest signal the subset supports.
pub const MAX_WIDTH: u32 = 64;

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct Loc {
    pub line: u32,
    pub col: u32,
}

impl Loc {
    pub fn new(line: u32, col: u32) -> Self {
        Loc { line, col }
    }
}

impl std::fmt::Display for Loc {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RtlError {
    #[error("{loc}: syntax error: {msg}")]
    Syntax { loc: Loc, msg: String },
    #[error("{loc}: undeclared identifier `{name}`")]
    Undeclared { loc: Loc, name: String },
    #[error("{loc}: `{name}` is declared more than once")]
    Redeclared { loc: Loc, name: String },
    #[error("{loc}: `{name}` has multiple drivers")]
    MultipleDrivers { loc: Loc, name: String },
    #[error("{loc}: `{name}` is never driven")]
    Undriven { loc: Loc, name: String },
    #[error("{loc}: combinational cycle through net `{net}`")]
    CombinationalCycle { loc: Loc, net: String },
    #[error("{loc}: width mismatch: {msg}")]
    Width { loc: Loc, msg: String },
    #[error("{loc}: {msg}")]
    Semantic { loc: Loc, msg: String },
    #[error("simulation input error: {0}")]
    Stimulus(String),
}

impl RtlError {
    pub fn loc(&self) -> Option<Loc> {
        match self {
            RtlError::Syntax { loc, .. }
            | RtlError::Undeclared { loc, .. }
            | RtlError::Redeclared { loc, .. }
            | RtlError::MultipleDrivers { loc, .. }
            | RtlError::Undriven { loc, .. }
            | RtlError::CombinationalCycle { loc, .. }
            | RtlError::Width { loc, .. }
            | RtlError::Semantic { loc, .. } => Some(*loc),
            RtlError::Stimulus(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Input,
    Output,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Port {
    pub name: String,
    pub direction: Direction,
    pub width: u32,
}

/// A `wire` declaration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Net {
    pub name: String,
    pub width: u32,
    pub loc: Loc,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Register {
    pub name: String,
    pub width: u32,
    /// Next-state expression, sampled on every clock edge.
    pub next: Expr,
    pub decl: Loc,
    /// Location of the nonblocking update.
    pub loc: Loc,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assign {
    pub target: String,
    pub expr: Expr,
    pub loc: Loc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    And,
    Or,
    Xor,
    Add,
    Sub,
    Eq,
    Lt,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::And => "&",
            BinOp::Or => "|",
            BinOp::Xor => "^",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Eq => "==",
            BinOp::Lt => "<",
        }
    }

    pub fn is_compare(self) -> bool {
        matches!(self, BinOp::Eq | BinOp::Lt)
    }

    /// Associative and commutative modulo `2^width`.
    pub fn is_associative(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or | BinOp::Xor | BinOp::Add)
    }

    pub fn eval(self, a: u64, b: u64, width: u32) -> u64 {
        let m = mask(width);
        match self {
            BinOp::And => a & b,
            BinOp::Or => a | b,
            BinOp::Xor => a ^ b,
            BinOp::Add => a.wrapping_add(b) & m,
            BinOp::Sub => a.wrapping_sub(b) & m,
            BinOp::Eq => (a == b) as u64,
            BinOp::Lt => (a < b) as u64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ShiftOp {
    Shl,
    Shr,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ExprKind {
    Const(u64),
    Var(String),
    Not(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Shift(ShiftOp, Box<Expr>, u32),
    Slice(Box<Expr>, u32, u32),
    Mux(Box<Expr>, Box<Expr>, Box<Expr>),
}

/// Expression node. `loc` is the node's source position; structural
/// comparisons go through [`Expr::same_as`], which ignores it.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Expr {
    pub kind: ExprKind,
    pub width: u32,
    pub loc: Loc,
}

impl Expr {
    pub fn new(kind: ExprKind, width: u32, loc: Loc) -> Self {
        Expr { kind, width, loc }
    }

    pub fn constant(value: u64, width: u32, loc: Loc) -> Self {
        Expr::new(ExprKind::Const(value & mask(width)), width, loc)
    }

    pub fn var(name: impl Into<String>, width: u32, loc: Loc) -> Self {
        Expr::new(ExprKind::Var(name.into()), width, loc)
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        let width = if op.is_compare() { 1 } else { lhs.width };
        let loc = lhs.loc;
        Expr::new(
            ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)),
            width,
            loc,
        )
    }

    pub fn mux(cond: Expr, then: Expr, other: Expr) -> Self {
        let width = then.width;
        let loc = cond.loc;
        Expr::new(
            ExprKind::Mux(Box::new(cond), Box::new(then), Box::new(other)),
            width,
            loc,
        )
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, ExprKind::Const(_) | ExprKind::Var(_))
    }

    pub fn children(&self) -> Vec<&Expr> {
        match &self.kind {
            ExprKind::Const(_) | ExprKind::Var(_) => vec![],
            ExprKind::Not(a) | ExprKind::Shift(_, a, _) | ExprKind::Slice(a, _, _) => vec![a],
            ExprKind::Binary(_, a, b) => vec![a, b],
            ExprKind::Mux(c, a, b) => vec![c, a, b],
        }
    }

    pub fn children_mut(&mut self) -> Vec<&mut Expr> {
        match &mut self.kind {
            ExprKind::Const(_) | ExprKind::Var(_) => vec![],
            ExprKind::Not(a) | ExprKind::Shift(_, a, _) | ExprKind::Slice(a, _, _) => vec![a],
            ExprKind::Binary(_, a, b) => vec![a, b],
            ExprKind::Mux(c, a, b) => vec![c, a, b],
        }
    }

    /// Structural equality, ignoring source locations.
    pub fn same_as(&self, other: &Expr) -> bool {
        if self.width != other.width {
            return false;
        }
        match (&self.kind, &other.kind) {
            (ExprKind::Const(a), ExprKind::Const(b)) => a == b,
            (ExprKind::Var(a), ExprKind::Var(b)) => a == b,
            (ExprKind::Not(a), ExprKind::Not(b)) => a.same_as(b),
            (ExprKind::Binary(o1, a1, b1), ExprKind::Binary(o2, a2, b2)) => {
                o1 == o2 && a1.same_as(a2) && b1.same_as(b2)
            }
            (ExprKind::Shift(o1, a1, k1), ExprKind::Shift(o2, a2, k2)) => {
                o1 == o2 && k1 == k2 && a1.same_as(a2)
            }
            (ExprKind::Slice(a1, h1, l1), ExprKind::Slice(a2, h2, l2)) => {
                h1 == h2 && l1 == l2 && a1.same_as(a2)
            }
            (ExprKind::Mux(c1, a1, b1), ExprKind::Mux(c2, a2, b2)) => {
                c1.same_as(c2) && a1.same_as(a2) && b1.same_as(b2)
            }
            _ => false,
        }
    }

    /// Number of operator (non-leaf) nodes.
    pub fn op_count(&self) -> usize {
        if self.is_leaf() {
            0
        } else {
            1 + self.children().iter().map(|c| c.op_count()).sum::<usize>()
        }
    }

    /// Operator depth: leaves have depth 0.
    pub fn depth(&self) -> usize {
        if self.is_leaf() {
            0
        } else {
            1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
        }
    }

    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&mut Expr)) {
        f(self);
        for c in self.children_mut() {
            c.visit_mut(f);
        }
    }

    /// Names of all variables read by this expression, in visit order.
    pub fn reads(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let ExprKind::Var(n) = &e.kind {
                out.push(n.as_str());
            }
        });
        out
    }

    pub fn with_loc(mut self, loc: Loc) -> Self {
        self.visit_mut(&mut |e| e.loc = loc);
        self
    }
}

pub fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// An elaborated RTL-lite module.
///
/// Construct through [`parse`]; every value of this type satisfies the
/// elaboration invariants (declared names, single drivers, no combinational
/// cycles, consistent widths).
#[derive(Clone, Debug)]
pub struct RtlDesign {
    pub name: String,
    pub source: String,
    pub ports: Vec<Port>,
    pub nets: Vec<Net>,
    pub registers: Vec<Register>,
    pub assigns: Vec<Assign>,
}

/// What a name refers to inside a module.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignalKind {
    Input,
    Output,
    Net,
    Register,
}

impl RtlDesign {
    pub fn inputs(&self) -> impl Iterator<Item = &Port> {
        self.ports
            .iter()
            .filter(|p| p.direction == Direction::Input)
    }

    pub fn outputs(&self) -> impl Iterator<Item = &Port> {
        self.ports
            .iter()
            .filter(|p| p.direction == Direction::Output)
    }

    pub fn input_bits(&self) -> u32 {
        self.inputs().map(|p| p.width).sum()
    }

    pub fn signal(&self, name: &str) -> Option<(SignalKind, u32)> {
        if let Some(p) = self.ports.iter().find(|p| p.name == name) {
            let kind = match p.direction {
                Direction::Input => SignalKind::Input,
                Direction::Output => SignalKind::Output,
            };
            return Some((kind, p.width));
        }
        if let Some(n) = self.nets.iter().find(|n| n.name == name) {
            return Some((SignalKind::Net, n.width));
        }
        self.registers
            .iter()
            .find(|r| r.name == name)
            .map(|r| (SignalKind::Register, r.width))
    }

    pub fn is_declared(&self, name: &str) -> bool {
        self.signal(name).is_some()
    }

    /// A name not yet declared, derived from `base`.
    pub fn fresh_name(&self, base: &str) -> String {
        if !self.is_declared(base) && base != self.name {
            return base.to_string();
        }
        (0..)
            .map(|i| format!("{base}_{i}"))
            .find(|n| !self.is_declared(n) && *n != self.name)
            .expect("unbounded search")
    }

    pub fn assign_for(&self, target: &str) -> Option<&Assign> {
        self.assigns.iter().find(|a| a.target == target)
    }

    /// All statement expressions: assigns then register updates.
    pub fn statements(&self) -> impl Iterator<Item = (&str, &Expr, Loc)> {
        self.assigns
            .iter()
            .map(|a| (a.target.as_str(), &a.expr, a.loc))
            .chain(
                self.registers
                    .iter()
                    .map(|r| (r.name.as_str(), &r.next, r.loc)),
            )
    }

    /// Structural identity: same name, interface, declarations and statements
    /// in the same order, ignoring source text and locations.
    pub fn same_structure(&self, other: &RtlDesign) -> bool {
        self.name == other.name
            && self.ports == other.ports
            && self.nets.len() == other.nets.len()
            && self
                .nets
                .iter()
                .zip(&other.nets)
                .all(|(a, b)| a.name == b.name && a.width == b.width)
            && self.registers.len() == other.registers.len()
            && self
                .registers
                .iter()
                .zip(&other.registers)
                .all(|(a, b)| a.name == b.name && a.width == b.width && a.next.same_as(&b.next))
            && self.assigns.len() == other.assigns.len()
            && self
                .assigns
                .iter()
                .zip(&other.assigns)
                .all(|(a, b)| a.target == b.target && a.expr.same_as(&b.expr))
    }

    pub fn netlist(&self) -> Netlist {
        Netlist::build(self)
    }

    /// Canonical text (re-printed), independent of original formatting.
    pub fn canonical_source(&self) -> String {
        print(self)
    }

    /// Re-elaborate after structural edits: prints the canonical form and
    /// parses it back, which re-checks every invariant and refreshes source
    /// locations.
    pub fn reelaborate(&self) -> Result<RtlDesign, RtlError> {
        parse(&print(self))
    }

    /// Line count of `source`, at least 1.
    pub fn line_count(&self) -> u32 {
        (self.source.lines().count() as u32).max(1)
    }

    /// File label used in timing-report locations.
    pub fn file_label(&self) -> String {
        format!("{}.rtl", self.name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_as_ignores_locations() {
        let a = Expr::binary(
            BinOp::Add,
            Expr::var("a", 8, Loc::new(1, 1)),
            Expr::var("b", 8, Loc::new(1, 5)),
        );
        let b = a.clone().with_loc(Loc::new(9, 9));
        assert!(a.same_as(&b));
        assert_ne!(a, b);
    }

    #[test]
    fn fresh_names_avoid_declared_signals() {
        let d = parse("module m(input a, output y); wire t; assign t = a; assign y = t; endmodule")
            .unwrap();
        assert_eq!(d.fresh_name("t"), "t_0");
        assert_eq!(d.fresh_name("u"), "u");
        assert_eq!(d.fresh_name("m"), "m_0");
    }

    #[test]
    fn binop_eval_wraps() {
        assert_eq!(BinOp::Add.eval(255, 1, 8), 0);
        assert_eq!(BinOp::Sub.eval(0, 1, 8), 255);
        assert_eq!(BinOp::Lt.eval(3, 4, 8), 1);
        assert_eq!(BinOp::Add.eval(u64::MAX, 1, 64), 0);
    }
}
