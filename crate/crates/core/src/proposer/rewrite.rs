// SPDX-License-Identifier: Apache-2.0

//! Rule-based rewrites over RTL-lite expression trees.
//!
//! Every strategy enumerates its applicable sites; applying one edits a copy
//! of the design and re-elaborates it, so a rewrite that breaks an
//! invariant surfaces as an error instead of a bad candidate. Functional
//! equivalence is not assumed here; candidates still go through SEC.

use std::collections::HashMap;

use thiserror::Error;

use crate::rtl::{
    mask, print_expr, Assign, BinOp, Expr, ExprKind, Loc, Net, Register, RtlDesign, RtlError,
    ShiftOp, SignalKind,
};
use crate::skills::StrategyId;
use crate::timing::{MapConfidence, RtlRegion};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewriteError {
    #[error("{strategy} is not applicable: {reason}")]
    NotApplicable {
        strategy: StrategyId,
        reason: String,
    },
    #[error("region {0} is outside the design")]
    BadRegion(String),
    #[error("rewrite produced an invalid design: {0}")]
    Invalid(#[from] RtlError),
}

/// A statement: an `assign` or a register update, by index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StmtRef {
    Assign(usize),
    Reg(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum SiteKind {
    /// A subexpression, addressed by child indices from the statement root.
    Expr {
        stmt: StmtRef,
        path: Vec<usize>,
    },
    Stmt(StmtRef),
    /// A repeated subexpression, keyed by its canonical text.
    Repeated(String),
    Signal(String),
    Register(usize),
}

/// One place a strategy can be applied.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Site {
    pub strategy: StrategyId,
    kind: SiteKind,
    /// Source lines of the statements the rewrite touches.
    pub lines: Vec<u32>,
    pub label: String,
}

#[derive(Clone, Debug)]
pub struct Rewrite {
    pub design: RtlDesign,
    pub strategy: StrategyId,
    pub description: String,
    /// Edited statements, in the parent's line numbering.
    pub region: RtlRegion,
}

fn stmt_list(d: &RtlDesign) -> Vec<(StmtRef, &str, &Expr, Loc)> {
    let a = d
        .assigns
        .iter()
        .enumerate()
        .map(|(i, a)| (StmtRef::Assign(i), a.target.as_str(), &a.expr, a.loc));
    let r = d
        .registers
        .iter()
        .enumerate()
        .map(|(i, r)| (StmtRef::Reg(i), r.name.as_str(), &r.next, r.loc));
    a.chain(r).collect()
}

fn stmt_mut(d: &mut RtlDesign, s: StmtRef) -> &mut Expr {
    match s {
        StmtRef::Assign(i) => &mut d.assigns[i].expr,
        StmtRef::Reg(i) => &mut d.registers[i].next,
    }
}

fn stmt_target(d: &RtlDesign, s: StmtRef) -> &str {
    match s {
        StmtRef::Assign(i) => &d.assigns[i].target,
        StmtRef::Reg(i) => &d.registers[i].name,
    }
}

fn stmt_line(d: &RtlDesign, s: StmtRef) -> u32 {
    match s {
        StmtRef::Assign(i) => d.assigns[i].loc.line,
        StmtRef::Reg(i) => d.registers[i].loc.line,
    }
}

fn at_path<'a>(e: &'a Expr, path: &[usize]) -> &'a Expr {
    path.iter().fold(e, |e, &i| e.children()[i])
}

fn at_path_mut<'a>(e: &'a mut Expr, path: &[usize]) -> &'a mut Expr {
    let mut cur = e;
    for &i in path {
        cur = cur.children_mut().into_iter().nth(i).expect("valid path");
    }
    cur
}

/// Pre-order walk with child-index paths and the parent's node.
fn walk<'a>(
    e: &'a Expr,
    path: &mut Vec<usize>,
    parent: Option<(&'a Expr, usize)>,
    f: &mut impl FnMut(&'a Expr, &[usize], Option<(&'a Expr, usize)>),
) {
    f(e, path, parent);
    for (i, c) in e.children().into_iter().enumerate() {
        path.push(i);
        walk(c, path, Some((e, i)), f);
        path.pop();
    }
}

fn add_wire(d: &mut RtlDesign, base: &str, expr: Expr) -> Expr {
    let name = d.fresh_name(base);
    let width = expr.width;
    d.nets.push(Net {
        name: name.clone(),
        width,
        loc: Loc::default(),
    });
    d.assigns.push(Assign {
        target: name.clone(),
        expr,
        loc: Loc::default(),
    });
    Expr::var(name, width, Loc::default())
}

fn ceil_log2(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

// ---- tree-rebalance ----

fn chain_leaves<'a>(e: &'a Expr, op: BinOp, out: &mut Vec<&'a Expr>) {
    match &e.kind {
        ExprKind::Binary(o, a, b) if *o == op => {
            chain_leaves(a, op, out);
            chain_leaves(b, op, out);
        }
        _ => out.push(e),
    }
}

fn chain_depth(e: &Expr, op: BinOp) -> usize {
    match &e.kind {
        ExprKind::Binary(o, a, b) if *o == op => 1 + chain_depth(a, op).max(chain_depth(b, op)),
        _ => 0,
    }
}

/// Balanced tree over `leaves`, keeping their left-to-right order.
pub fn balanced(op: BinOp, leaves: &[Expr]) -> Expr {
    if leaves.len() == 1 {
        return leaves[0].clone();
    }
    let mid = leaves.len().div_ceil(2);
    Expr::binary(
        op,
        balanced(op, &leaves[..mid]),
        balanced(op, &leaves[mid..]),
    )
}

fn rebalance_sites(d: &RtlDesign) -> Vec<Site> {
    let mut out = vec![];
    for (s, target, e, loc) in stmt_list(d) {
        walk(e, &mut vec![], None, &mut |node, path, parent| {
            let ExprKind::Binary(op, ..) = &node.kind else {
                return;
            };
            if !op.is_associative() {
                return;
            }
            if parent.is_some_and(|(p, _)| matches!(&p.kind, ExprKind::Binary(po, ..) if po == op))
            {
                return;
            }
            let mut leaves = vec![];
            chain_leaves(node, *op, &mut leaves);
            let depth = chain_depth(node, *op);
            if leaves.len() >= 3 && depth > ceil_log2(leaves.len()) {
                out.push(Site {
                    strategy: StrategyId::TreeRebalance,
                    kind: SiteKind::Expr {
                        stmt: s,
                        path: path.to_vec(),
                    },
                    lines: vec![loc.line],
                    label: format!(
                        "rebalance {}-operand `{}` chain in `{target}` (depth {depth} -> {})",
                        leaves.len(),
                        op.symbol(),
                        ceil_log2(leaves.len())
                    ),
                });
            }
        });
    }
    out
}

fn apply_rebalance(d: &mut RtlDesign, stmt: StmtRef, path: &[usize]) {
    let node = at_path_mut(stmt_mut(d, stmt), path);
    let ExprKind::Binary(op, ..) = node.kind else {
        unreachable!()
    };
    let mut leaves = vec![];
    chain_leaves(node, op, &mut leaves);
    let leaves: Vec<Expr> = leaves.into_iter().cloned().collect();
    *node = balanced(op, &leaves);
}

// ---- common-subexpression-extraction ----

fn repeated_subexprs(d: &RtlDesign) -> Vec<(String, Vec<StmtRef>)> {
    let mut order: Vec<String> = vec![];
    let mut seen: HashMap<String, Vec<StmtRef>> = HashMap::new();
    for (s, _, e, _) in stmt_list(d) {
        e.visit(&mut |n| {
            if n.is_leaf() {
                return;
            }
            let key = format!("{}:{}", n.width, print_expr(n));
            let entry = seen.entry(key.clone()).or_insert_with(|| {
                order.push(key);
                vec![]
            });
            entry.push(s);
        });
    }
    order
        .into_iter()
        .filter_map(|k| {
            let stmts = seen.remove(&k).unwrap();
            (stmts.len() >= 2).then_some((k, stmts))
        })
        .collect()
}

fn cse_sites(d: &RtlDesign) -> Vec<Site> {
    repeated_subexprs(d)
        .into_iter()
        .map(|(key, stmts)| {
            let mut lines: Vec<u32> = stmts.iter().map(|&s| stmt_line(d, s)).collect();
            lines.sort();
            lines.dedup();
            let text = key.split_once(':').unwrap().1.to_string();
            Site {
                strategy: StrategyId::CommonSubexpressionExtraction,
                label: format!("share `{text}` ({} uses)", stmts.len()),
                kind: SiteKind::Repeated(key),
                lines,
            }
        })
        .collect()
}

fn replace_matching(e: &mut Expr, key: &str, with: &Expr) -> usize {
    if !e.is_leaf() && format!("{}:{}", e.width, print_expr(e)) == key {
        *e = with.clone();
        return 1;
    }
    e.children_mut()
        .into_iter()
        .map(|c| replace_matching(c, key, with))
        .sum()
}

fn apply_cse(d: &mut RtlDesign, key: &str) {
    let mut template = None;
    for (_, _, e, _) in stmt_list(d) {
        e.visit(&mut |n| {
            if template.is_none() && !n.is_leaf() && format!("{}:{}", n.width, print_expr(n)) == key
            {
                template = Some(n.clone());
            }
        });
    }
    let template = template.expect("site exists");
    let n_assigns = d.assigns.len();
    let n_regs = d.registers.len();
    let var = add_wire(d, "cse", template);
    for i in 0..n_assigns {
        replace_matching(&mut d.assigns[i].expr, key, &var);
    }
    for i in 0..n_regs {
        replace_matching(&mut d.registers[i].next, key, &var);
    }
}

// ---- condition-precompute ----

fn precompute_sites(d: &RtlDesign) -> Vec<Site> {
    let mut out = vec![];
    for (s, target, e, loc) in stmt_list(d) {
        walk(e, &mut vec![], None, &mut |node, path, _| {
            if let ExprKind::Mux(c, ..) = &node.kind {
                if !c.is_leaf() {
                    out.push(Site {
                        strategy: StrategyId::ConditionPrecompute,
                        kind: SiteKind::Expr {
                            stmt: s,
                            path: path.to_vec(),
                        },
                        lines: vec![loc.line],
                        label: format!("precompute select `{}` in `{target}`", print_expr(c)),
                    });
                }
            }
        });
    }
    out
}

fn apply_precompute(d: &mut RtlDesign, stmt: StmtRef, path: &[usize]) {
    let base = format!("{}_sel", stmt_target(d, stmt));
    let cond = match &at_path(stmt_mut(d, stmt), path).kind {
        ExprKind::Mux(c, ..) => (**c).clone(),
        _ => unreachable!(),
    };
    let var = add_wire(d, &base, cond);
    if let ExprKind::Mux(c, ..) = &mut at_path_mut(stmt_mut(d, stmt), path).kind {
        **c = var;
    }
}

// ---- mux-restructure ----

fn mux_arms(e: &Expr) -> (Vec<(&Expr, &Expr)>, &Expr) {
    let mut arms = vec![];
    let mut cur = e;
    while let ExprKind::Mux(c, t, f) = &cur.kind {
        arms.push((&**c, &**t));
        cur = f;
    }
    (arms, cur)
}

fn restructure_sites(d: &RtlDesign) -> Vec<Site> {
    let mut out = vec![];
    for (s, target, e, loc) in stmt_list(d) {
        walk(e, &mut vec![], None, &mut |node, path, parent| {
            if !matches!(node.kind, ExprKind::Mux(..)) {
                return;
            }
            if parent.is_some_and(|(p, i)| matches!(p.kind, ExprKind::Mux(..)) && i == 2) {
                return;
            }
            let (arms, _) = mux_arms(node);
            if arms.len() >= 3 {
                out.push(Site {
                    strategy: StrategyId::MuxRestructure,
                    kind: SiteKind::Expr {
                        stmt: s,
                        path: path.to_vec(),
                    },
                    lines: vec![loc.line],
                    label: format!("split {}-way priority mux in `{target}`", arms.len()),
                });
            }
        });
    }
    out
}

fn priority_chain(arms: &[(Expr, Expr)], default: Expr) -> Expr {
    arms.iter()
        .rev()
        .fold(default, |acc, (c, v)| Expr::mux(c.clone(), v.clone(), acc))
}

fn apply_restructure(d: &mut RtlDesign, stmt: StmtRef, path: &[usize]) {
    let node = at_path_mut(stmt_mut(d, stmt), path);
    let (arms, default) = mux_arms(node);
    let arms: Vec<(Expr, Expr)> = arms
        .into_iter()
        .map(|(c, v)| (c.clone(), v.clone()))
        .collect();
    let default = default.clone();
    let h = arms.len().div_ceil(2);
    let (left, right) = arms.split_at(h);
    // Within the left half one condition holds, so its last arm needs no test.
    let last = left.last().unwrap().1.clone();
    let sel_left = priority_chain(&left[..h - 1], last);
    let sel_right = priority_chain(right, default);
    let conds: Vec<Expr> = left.iter().map(|(c, _)| c.clone()).collect();
    let any_left = balanced(BinOp::Or, &conds);
    *node = Expr::mux(any_left, sel_left, sel_right);
}

// ---- signal-replication ----

fn count_reads(d: &RtlDesign, name: &str) -> usize {
    stmt_list(d)
        .iter()
        .map(|(_, _, e, _)| e.reads().iter().filter(|r| **r == name).count())
        .sum()
}

fn reading_lines(d: &RtlDesign, name: &str) -> Vec<u32> {
    let mut lines: Vec<u32> = stmt_list(d)
        .iter()
        .filter(|(_, _, e, _)| e.reads().contains(&name))
        .map(|(_, _, _, l)| l.line)
        .collect();
    lines.sort();
    lines.dedup();
    lines
}

fn replication_sites(d: &RtlDesign) -> Vec<Site> {
    let candidates = d
        .inputs()
        .map(|p| p.name.clone())
        .chain(d.assigns.iter().map(|a| a.target.clone()));
    candidates
        .filter_map(|name| {
            let n = count_reads(d, &name);
            if n < 2 {
                return None;
            }
            let mut lines = reading_lines(d, &name);
            if let Some(a) = d.assign_for(&name) {
                lines.push(a.loc.line);
                lines.sort();
                lines.dedup();
            }
            Some(Site {
                strategy: StrategyId::SignalReplication,
                label: format!("replicate `{name}` driving {n} loads"),
                kind: SiteKind::Signal(name),
                lines,
            })
        })
        .collect()
}

/// Renames the second half of the reads of `from` (in statement order) to
/// `to`, skipping statements listed in `exclude`.
fn repartition(d: &mut RtlDesign, from: &str, to: &Expr, exclude: &[StmtRef]) {
    let refs: Vec<StmtRef> = stmt_list(d)
        .iter()
        .map(|(s, ..)| *s)
        .filter(|s| !exclude.contains(s))
        .collect();
    let total: usize = refs
        .iter()
        .map(|&s| {
            stmt_mut(d, s)
                .reads()
                .iter()
                .filter(|r| **r == from)
                .count()
        })
        .sum();
    let keep = total.div_ceil(2);
    let mut seen = 0;
    for s in refs {
        stmt_mut(d, s).visit_mut(&mut |e| {
            if matches!(&e.kind, ExprKind::Var(n) if n == from) {
                if seen >= keep {
                    *e = to.clone().with_loc(e.loc);
                }
                seen += 1;
            }
        });
    }
}

fn apply_replication(d: &mut RtlDesign, name: &str) {
    let (kind, width) = d.signal(name).expect("declared");
    let driver = match kind {
        SignalKind::Input => Expr::var(name, width, Loc::default()),
        _ => d.assign_for(name).expect("driven").expr.clone(),
    };
    let before = d.assigns.len();
    let var = add_wire(d, &format!("{name}_rep"), driver);
    let exclude = vec![StmtRef::Assign(before)];
    repartition(d, name, &var, &exclude);
}

// ---- selective-register-insertion ----

fn register_sites(d: &RtlDesign) -> Vec<Site> {
    d.registers
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            let own = r.next.reads().iter().filter(|n| **n == r.name).count();
            let n = count_reads(d, &r.name) - own;
            (n >= 2).then(|| {
                let mut lines = reading_lines(d, &r.name);
                lines.push(r.loc.line);
                lines.sort();
                lines.dedup();
                Site {
                    strategy: StrategyId::SelectiveRegisterInsertion,
                    kind: SiteKind::Register(i),
                    lines,
                    label: format!("duplicate register `{}` for its {n} readers", r.name),
                }
            })
        })
        .collect()
}

fn apply_register_dup(d: &mut RtlDesign, i: usize) {
    let r = d.registers[i].clone();
    let name = d.fresh_name(&format!("{}_dup", r.name));
    d.registers.push(Register {
        name: name.clone(),
        width: r.width,
        next: r.next.clone(),
        decl: Loc::default(),
        loc: Loc::default(),
    });
    let var = Expr::var(name, r.width, Loc::default());
    let exclude = vec![StmtRef::Reg(i), StmtRef::Reg(d.registers.len() - 1)];
    repartition(d, &r.name, &var, &exclude);
}

// ---- constant-fold ----

/// Folds constant subexpressions and algebraic identities.
pub fn fold(e: &Expr) -> Expr {
    let w = e.width;
    let k = |v: u64, w: u32| Expr::constant(v, w, e.loc);
    let cval = |x: &Expr| match x.kind {
        ExprKind::Const(v) => Some(v),
        _ => None,
    };
    match &e.kind {
        ExprKind::Const(_) | ExprKind::Var(_) => e.clone(),
        ExprKind::Not(a) => {
            let a = fold(a);
            match a.kind {
                ExprKind::Const(v) => k(!v & mask(w), w),
                ExprKind::Not(inner) => *inner,
                _ => Expr::new(ExprKind::Not(Box::new(a)), w, e.loc),
            }
        }
        ExprKind::Binary(op, a, b) => {
            let (a, b) = (fold(a), fold(b));
            let ow = a.width;
            let ones = mask(ow);
            if let (Some(x), Some(y)) = (cval(&a), cval(&b)) {
                return k(op.eval(x, y, ow), w);
            }
            let same = a.same_as(&b);
            let (ca, cb) = (cval(&a), cval(&b));
            match op {
                BinOp::And if ca == Some(0) || cb == Some(0) => return k(0, w),
                BinOp::And if ca == Some(ones) => return b,
                BinOp::And if cb == Some(ones) || same => return a,
                BinOp::Or if ca == Some(ones) || cb == Some(ones) => return k(ones, w),
                BinOp::Or if ca == Some(0) => return b,
                BinOp::Or if cb == Some(0) || same => return a,
                BinOp::Xor if same => return k(0, w),
                BinOp::Xor | BinOp::Add if ca == Some(0) => return b,
                BinOp::Xor | BinOp::Add | BinOp::Sub if cb == Some(0) => return a,
                BinOp::Sub if same => return k(0, w),
                BinOp::Eq if same => return k(1, 1),
                BinOp::Lt if same || cb == Some(0) => return k(0, 1),
                _ => {}
            }
            Expr::new(ExprKind::Binary(*op, Box::new(a), Box::new(b)), w, e.loc)
        }
        ExprKind::Shift(op, a, n) => {
            let a = fold(a);
            if *n == 0 {
                return a;
            }
            if *n >= w {
                return k(0, w);
            }
            if let Some(v) = cval(&a) {
                let r = match op {
                    ShiftOp::Shl => v << n,
                    ShiftOp::Shr => v >> n,
                };
                return k(r & mask(w), w);
            }
            Expr::new(ExprKind::Shift(*op, Box::new(a), *n), w, e.loc)
        }
        ExprKind::Slice(a, hi, lo) => {
            let a = fold(a);
            if let Some(v) = cval(&a) {
                return k((v >> lo) & mask(w), w);
            }
            if *lo == 0 && *hi + 1 == a.width {
                return a;
            }
            Expr::new(ExprKind::Slice(Box::new(a), *hi, *lo), w, e.loc)
        }
        ExprKind::Mux(c, t, f) => {
            let (c, t, f) = (fold(c), fold(t), fold(f));
            if let Some(v) = cval(&c) {
                return if v != 0 { t } else { f };
            }
            if t.same_as(&f) {
                return t;
            }
            Expr::new(
                ExprKind::Mux(Box::new(c), Box::new(t), Box::new(f)),
                w,
                e.loc,
            )
        }
    }
}

fn fold_sites(d: &RtlDesign) -> Vec<Site> {
    stmt_list(d)
        .into_iter()
        .filter(|(_, _, e, _)| !fold(e).same_as(e))
        .map(|(s, target, _, loc)| Site {
            strategy: StrategyId::ConstantFold,
            kind: SiteKind::Stmt(s),
            lines: vec![loc.line],
            label: format!("fold constants in `{target}`"),
        })
        .collect()
}

// ---- decomposition ----

fn decomposition_sites(d: &RtlDesign) -> Vec<Site> {
    stmt_list(d)
        .into_iter()
        .filter(|(_, _, e, _)| e.children().iter().any(|c| !c.is_leaf()))
        .map(|(s, target, e, loc)| Site {
            strategy: StrategyId::Decomposition,
            kind: SiteKind::Stmt(s),
            lines: vec![loc.line],
            label: format!(
                "stage {} operand(s) of `{target}` into wires",
                e.children().iter().filter(|c| !c.is_leaf()).count()
            ),
        })
        .collect()
}

fn apply_decomposition(d: &mut RtlDesign, stmt: StmtRef) {
    let base = format!("{}_part", stmt_target(d, stmt));
    let parts: Vec<(usize, Expr)> = stmt_mut(d, stmt)
        .children()
        .into_iter()
        .enumerate()
        .filter(|(_, c)| !c.is_leaf())
        .map(|(i, c)| (i, c.clone()))
        .collect();
    for (i, part) in parts {
        let var = add_wire(d, &base, part);
        *stmt_mut(d, stmt).children_mut().into_iter().nth(i).unwrap() = var;
    }
}

/// Every place `strategy` applies in `design`, in a deterministic order.
pub fn sites(design: &RtlDesign, strategy: StrategyId) -> Vec<Site> {
    match strategy {
        StrategyId::TreeRebalance => rebalance_sites(design),
        StrategyId::CommonSubexpressionExtraction => cse_sites(design),
        StrategyId::ConditionPrecompute => precompute_sites(design),
        StrategyId::MuxRestructure => restructure_sites(design),
        StrategyId::SignalReplication => replication_sites(design),
        StrategyId::SelectiveRegisterInsertion => register_sites(design),
        StrategyId::ConstantFold => fold_sites(design),
        StrategyId::Decomposition => decomposition_sites(design),
    }
}

/// Applies one site and re-elaborates the result.
pub fn apply_at(design: &RtlDesign, site: &Site) -> Result<Rewrite, RewriteError> {
    let mut d = design.clone();
    match &site.kind {
        SiteKind::Expr { stmt, path } => match site.strategy {
            StrategyId::TreeRebalance => apply_rebalance(&mut d, *stmt, path),
            StrategyId::ConditionPrecompute => apply_precompute(&mut d, *stmt, path),
            StrategyId::MuxRestructure => apply_restructure(&mut d, *stmt, path),
            _ => unreachable!("expression site for {}", site.strategy),
        },
        SiteKind::Stmt(stmt) => match site.strategy {
            StrategyId::ConstantFold => {
                let folded = fold(stmt_mut(&mut d, *stmt));
                *stmt_mut(&mut d, *stmt) = folded;
            }
            StrategyId::Decomposition => apply_decomposition(&mut d, *stmt),
            _ => unreachable!("statement site for {}", site.strategy),
        },
        SiteKind::Repeated(key) => apply_cse(&mut d, key),
        SiteKind::Signal(name) => apply_replication(&mut d, name),
        SiteKind::Register(i) => apply_register_dup(&mut d, *i),
    }
    let design_out = d.reelaborate()?;
    let start = site.lines.iter().copied().min().unwrap_or(1);
    let end = site
        .lines
        .iter()
        .copied()
        .max()
        .unwrap_or(design.line_count());
    Ok(Rewrite {
        design: design_out,
        strategy: site.strategy,
        description: site.label.clone(),
        region: RtlRegion {
            file: design.file_label(),
            start_line: start,
            end_line: end,
            confidence: MapConfidence::Exact,
        },
    })
}

/// Sites of `strategy` touching `region`, in order.
pub fn sites_in(design: &RtlDesign, strategy: StrategyId, region: &RtlRegion) -> Vec<Site> {
    sites(design, strategy)
        .into_iter()
        .filter(|s| s.lines.iter().any(|&l| region.contains_line(l)))
        .collect()
}

/// Applies `strategy` at the first applicable site inside `region`.
pub fn apply_strategy(
    design: &RtlDesign,
    strategy: StrategyId,
    region: &RtlRegion,
) -> Result<Rewrite, RewriteError> {
    if region.start_line < 1
        || region.start_line > region.end_line
        || region.end_line > design.line_count()
    {
        return Err(RewriteError::BadRegion(format!(
            "{}:{}-{}",
            region.file, region.start_line, region.end_line
        )));
    }
    let site = sites_in(design, strategy, region)
        .into_iter()
        .next()
        .ok_or_else(|| RewriteError::NotApplicable {
            strategy,
            reason: format!("no site in lines {}-{}", region.start_line, region.end_line),
        })?;
    apply_at(design, &site)
}
