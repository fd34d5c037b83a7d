// SPDX-License-Identifier: Apache-2.0

//! Recursive-descent parser and elaborator.
//!
//! Operator precedence, loosest first: `?:`, `|`, `^`, `&`, `==`, `<`,
//! `<<`/`>>`, `+`/`-`, unary `~`, postfix slice.

use std::collections::{BTreeMap, HashMap};

use super::lexer::{tokenize, Tok, Token};
use super::{
    mask, Assign, BinOp, Direction, Expr, ExprKind, Loc, Net, Port, Register, RtlDesign, RtlError,
    ShiftOp, MAX_WIDTH,
};

/// Parses and elaborates RTL-lite source text.
pub fn parse(source: &str) -> Result<RtlDesign, RtlError> {
    let tokens = tokenize(source)?;
    let raw = Parser { tokens, pos: 0 }.module()?;
    elaborate(raw, source)
}

struct RawDecl {
    name: String,
    width: u32,
    loc: Loc,
}

struct RawModule {
    name: String,
    ports: Vec<(Port, Loc)>,
    wires: Vec<RawDecl>,
    regs: Vec<RawDecl>,
    assigns: Vec<Assign>,
    updates: Vec<Assign>,
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, RtlError> {
        Err(RtlError::Syntax {
            loc: self.peek().loc,
            msg: msg.into(),
        })
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(&self.peek().tok, Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(x) if x == kw)
    }

    fn expect_sym(&mut self, s: &str) -> Result<Loc, RtlError> {
        if self.is_sym(s) {
            Ok(self.next().loc)
        } else {
            self.err(format!(
                "expected `{s}`, found {}",
                describe(&self.peek().tok)
            ))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<Loc, RtlError> {
        if self.is_kw(kw) {
            Ok(self.next().loc)
        } else {
            self.err(format!(
                "expected `{kw}`, found {}",
                describe(&self.peek().tok)
            ))
        }
    }

    fn ident(&mut self) -> Result<(String, Loc), RtlError> {
        match &self.peek().tok {
            Tok::Ident(s) if !is_keyword(s) => {
                let s = s.clone();
                let loc = self.next().loc;
                Ok((s, loc))
            }
            other => self.err(format!("expected identifier, found {}", describe(other))),
        }
    }

    fn int(&mut self) -> Result<u64, RtlError> {
        match self.peek().tok {
            Tok::Int(n) => {
                self.next();
                Ok(n)
            }
            ref other => self.err(format!("expected integer, found {}", describe(other))),
        }
    }

    /// Optional `[hi:0]` range; absent means one bit.
    fn range(&mut self) -> Result<u32, RtlError> {
        if !self.is_sym("[") {
            return Ok(1);
        }
        let loc = self.expect_sym("[")?;
        let hi = self.int()?;
        self.expect_sym(":")?;
        let lo = self.int()?;
        self.expect_sym("]")?;
        if lo != 0 {
            return Err(RtlError::Semantic {
                loc,
                msg: "ranges must be of the form [N-1:0]".into(),
            });
        }
        if hi + 1 > MAX_WIDTH as u64 {
            return Err(RtlError::Width {
                loc,
                msg: format!("width {} exceeds {MAX_WIDTH}", hi + 1),
            });
        }
        Ok(hi as u32 + 1)
    }

    fn module(mut self) -> Result<RawModule, RtlError> {
        self.expect_kw("module")?;
        let (name, _) = self.ident()?;
        self.expect_sym("(")?;
        let mut ports = Vec::new();
        if !self.is_sym(")") {
            loop {
                let loc = self.peek().loc;
                let direction = if self.is_kw("input") {
                    self.next();
                    Direction::Input
                } else if self.is_kw("output") {
                    self.next();
                    Direction::Output
                } else {
                    return self.err("expected `input` or `output`");
                };
                if self.is_kw("wire") {
                    self.next();
                }
                let width = self.range()?;
                let (pname, _) = self.ident()?;
                ports.push((
                    Port {
                        name: pname,
                        direction,
                        width,
                    },
                    loc,
                ));
                if self.is_sym(",") {
                    self.next();
                } else {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        self.expect_sym(";")?;

        let mut m = RawModule {
            name,
            ports,
            wires: vec![],
            regs: vec![],
            assigns: vec![],
            updates: vec![],
        };
        let mut seen_always = false;
        loop {
            let loc = self.peek().loc;
            match &self.peek().tok {
                Tok::Ident(kw) if kw == "endmodule" => {
                    self.next();
                    break;
                }
                Tok::Ident(kw) if kw == "wire" || kw == "reg" => {
                    let is_reg = kw == "reg";
                    self.next();
                    let width = self.range()?;
                    loop {
                        let (n, nloc) = self.ident()?;
                        let d = RawDecl {
                            name: n,
                            width,
                            loc: nloc,
                        };
                        if is_reg {
                            m.regs.push(d);
                        } else {
                            m.wires.push(d);
                        }
                        if self.is_sym(",") {
                            self.next();
                        } else {
                            break;
                        }
                    }
                    self.expect_sym(";")?;
                }
                Tok::Ident(kw) if kw == "assign" => {
                    self.next();
                    let (target, tloc) = self.ident()?;
                    self.expect_sym("=")?;
                    let expr = self.expr()?;
                    self.expect_sym(";")?;
                    m.assigns.push(Assign {
                        target,
                        expr,
                        loc: tloc,
                    });
                }
                Tok::Ident(kw) if kw == "always_ff" => {
                    if seen_always {
                        return Err(RtlError::Semantic {
                            loc,
                            msg: "only one always_ff region is allowed".into(),
                        });
                    }
                    seen_always = true;
                    self.next();
                    self.expect_kw("begin")?;
                    while !self.is_kw("end") {
                        let (target, tloc) = self.ident()?;
                        self.expect_sym("<=")?;
                        let expr = self.expr()?;
                        self.expect_sym(";")?;
                        m.updates.push(Assign {
                            target,
                            expr,
                            loc: tloc,
                        });
                    }
                    self.expect_kw("end")?;
                }
                Tok::Eof => return self.err("missing `endmodule`"),
                other => return self.err(format!("unexpected {}", describe(other))),
            }
        }
        if !matches!(self.peek().tok, Tok::Eof) {
            return self.err("trailing input after `endmodule`");
        }
        Ok(m)
    }

    fn expr(&mut self) -> Result<Expr, RtlError> {
        let cond = self.binary(0)?;
        if self.is_sym("?") {
            let loc = self.next().loc;
            let then = self.expr()?;
            self.expect_sym(":")?;
            let other = self.expr()?;
            return Ok(Expr::new(
                ExprKind::Mux(Box::new(cond), Box::new(then), Box::new(other)),
                0,
                loc,
            ));
        }
        Ok(cond)
    }

    fn binary(&mut self, level: usize) -> Result<Expr, RtlError> {
        const LEVELS: &[&[&str]] = &[
            &["|"],
            &["^"],
            &["&"],
            &["=="],
            &["<"],
            &["<<", ">>"],
            &["+", "-"],
        ];
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        loop {
            let op = match &self.peek().tok {
                Tok::Sym(s) if LEVELS[level].contains(s) => *s,
                _ => break,
            };
            let loc = self.next().loc;
            if op == "<<" || op == ">>" {
                let amount = self.int()?;
                let sop = if op == "<<" {
                    ShiftOp::Shl
                } else {
                    ShiftOp::Shr
                };
                lhs = Expr::new(
                    ExprKind::Shift(sop, Box::new(lhs), amount.min(u32::MAX as u64) as u32),
                    0,
                    loc,
                );
                continue;
            }
            let rhs = self.binary(level + 1)?;
            let bop = match op {
                "|" => BinOp::Or,
                "^" => BinOp::Xor,
                "&" => BinOp::And,
                "==" => BinOp::Eq,
                "<" => BinOp::Lt,
                "+" => BinOp::Add,
                "-" => BinOp::Sub,
                _ => unreachable!(),
            };
            lhs = Expr::new(ExprKind::Binary(bop, Box::new(lhs), Box::new(rhs)), 0, loc);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, RtlError> {
        if self.is_sym("~") {
            let loc = self.next().loc;
            let inner = self.unary()?;
            return Ok(Expr::new(ExprKind::Not(Box::new(inner)), 0, loc));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, RtlError> {
        let mut e = self.primary()?;
        while self.is_sym("[") {
            let loc = self.next().loc;
            let hi = self.int()?;
            let lo = if self.is_sym(":") {
                self.next();
                self.int()?
            } else {
                hi
            };
            self.expect_sym("]")?;
            let clamp = |v: u64| v.min(u32::MAX as u64) as u32;
            e = Expr::new(ExprKind::Slice(Box::new(e), clamp(hi), clamp(lo)), 0, loc);
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Expr, RtlError> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Sym("(") => {
                self.next();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Sized { width, value } => {
                self.next();
                Ok(Expr::new(ExprKind::Const(value), width, t.loc))
            }
            Tok::Ident(ref s) if !is_keyword(s) => {
                self.next();
                Ok(Expr::new(ExprKind::Var(s.clone()), 0, t.loc))
            }
            Tok::Int(_) => self.err("unsized literal in expression; write e.g. 8'd3"),
            ref other => self.err(format!("expected expression, found {}", describe(other))),
        }
    }
}

fn is_keyword(s: &str) -> bool {
    matches!(
        s,
        "module"
            | "endmodule"
            | "input"
            | "output"
            | "wire"
            | "reg"
            | "assign"
            | "always_ff"
            | "begin"
            | "end"
    )
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Int(n) => format!("`{n}`"),
        Tok::Sized { width, value } => format!("`{width}'d{value}`"),
        Tok::Sym(s) => format!("`{s}`"),
        Tok::Eof => "end of input".into(),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Input,
    Output,
    Wire,
    Reg,
}

struct Symbol {
    kind: Kind,
    width: u32,
    loc: Loc,
}

fn elaborate(raw: RawModule, source: &str) -> Result<RtlDesign, RtlError> {
    let mut symbols: HashMap<String, Symbol> = HashMap::new();
    let mut declare = |name: &str, kind: Kind, width: u32, loc: Loc| -> Result<(), RtlError> {
        if width == 0 || width > MAX_WIDTH {
            return Err(RtlError::Width {
                loc,
                msg: format!("width {width} outside 1..=64"),
            });
        }
        if symbols
            .insert(name.to_string(), Symbol { kind, width, loc })
            .is_some()
        {
            return Err(RtlError::Redeclared {
                loc,
                name: name.to_string(),
            });
        }
        Ok(())
    };
    for (p, loc) in &raw.ports {
        let kind = match p.direction {
            Direction::Input => Kind::Input,
            Direction::Output => Kind::Output,
        };
        declare(&p.name, kind, p.width, *loc)?;
    }
    for w in &raw.wires {
        declare(&w.name, Kind::Wire, w.width, w.loc)?;
    }
    for r in &raw.regs {
        declare(&r.name, Kind::Reg, r.width, r.loc)?;
    }
    if symbols.contains_key(&raw.name) {
        // Not fatal in Verilog, but keeps generated names unambiguous.
        let loc = symbols[&raw.name].loc;
        return Err(RtlError::Redeclared {
            loc,
            name: raw.name.clone(),
        });
    }

    // Drivers.
    let mut driven: HashMap<&str, Loc> = HashMap::new();
    for a in &raw.assigns {
        let sym = symbols.get(&a.target).ok_or_else(|| RtlError::Undeclared {
            loc: a.loc,
            name: a.target.clone(),
        })?;
        if !matches!(sym.kind, Kind::Wire | Kind::Output) {
            return Err(RtlError::Semantic {
                loc: a.loc,
                msg: format!("`{}` cannot be the target of a continuous assign", a.target),
            });
        }
        if driven.insert(&a.target, a.loc).is_some() {
            return Err(RtlError::MultipleDrivers {
                loc: a.loc,
                name: a.target.clone(),
            });
        }
    }
    for u in &raw.updates {
        let sym = symbols.get(&u.target).ok_or_else(|| RtlError::Undeclared {
            loc: u.loc,
            name: u.target.clone(),
        })?;
        if sym.kind != Kind::Reg {
            return Err(RtlError::Semantic {
                loc: u.loc,
                msg: format!(
                    "`{}` is not a reg and cannot take a nonblocking update",
                    u.target
                ),
            });
        }
        if driven.insert(&u.target, u.loc).is_some() {
            return Err(RtlError::MultipleDrivers {
                loc: u.loc,
                name: u.target.clone(),
            });
        }
    }
    let mut undriven: Vec<(&String, &Symbol)> = symbols
        .iter()
        .filter(|(n, s)| s.kind != Kind::Input && !driven.contains_key(n.as_str()))
        .collect();
    undriven.sort_by_key(|(_, s)| s.loc);
    if let Some((n, s)) = undriven.first() {
        return Err(RtlError::Undriven {
            loc: s.loc,
            name: (*n).clone(),
        });
    }

    // Widths.
    let mut assigns = Vec::with_capacity(raw.assigns.len());
    for mut a in raw.assigns {
        type_expr(&mut a.expr, &symbols)?;
        let w = symbols[&a.target].width;
        if a.expr.width != w {
            return Err(RtlError::Width {
                loc: a.loc,
                msg: format!(
                    "`{}` is {w} bits but its driver is {} bits",
                    a.target, a.expr.width
                ),
            });
        }
        assigns.push(a);
    }
    let mut updates: BTreeMap<String, Assign> = BTreeMap::new();
    for mut u in raw.updates {
        type_expr(&mut u.expr, &symbols)?;
        let w = symbols[&u.target].width;
        if u.expr.width != w {
            return Err(RtlError::Width {
                loc: u.loc,
                msg: format!(
                    "`{}` is {w} bits but its next state is {} bits",
                    u.target, u.expr.width
                ),
            });
        }
        updates.insert(u.target.clone(), u);
    }

    check_acyclic(&assigns, &symbols)?;

    let registers = raw
        .regs
        .iter()
        .map(|r| {
            let u = updates.remove(&r.name).expect("driver checked above");
            Register {
                name: r.name.clone(),
                width: r.width,
                next: u.expr,
                decl: r.loc,
                loc: u.loc,
            }
        })
        .collect();

    Ok(RtlDesign {
        name: raw.name,
        source: source.to_string(),
        ports: raw.ports.into_iter().map(|(p, _)| p).collect(),
        nets: raw
            .wires
            .into_iter()
            .map(|w| Net {
                name: w.name,
                width: w.width,
                loc: w.loc,
            })
            .collect(),
        registers,
        assigns,
    })
}

fn type_expr(e: &mut Expr, symbols: &HashMap<String, Symbol>) -> Result<(), RtlError> {
    let loc = e.loc;
    let width = match &mut e.kind {
        ExprKind::Const(v) => {
            debug_assert!(*v & !mask(e.width) == 0);
            e.width
        }
        ExprKind::Var(name) => {
            symbols
                .get(name.as_str())
                .ok_or_else(|| RtlError::Undeclared {
                    loc,
                    name: name.clone(),
                })?
                .width
        }
        ExprKind::Not(a) => {
            type_expr(a, symbols)?;
            a.width
        }
        ExprKind::Binary(op, a, b) => {
            type_expr(a, symbols)?;
            type_expr(b, symbols)?;
            if a.width != b.width {
                return Err(RtlError::Width {
                    loc,
                    msg: format!(
                        "operands of `{}` are {} and {} bits",
                        op.symbol(),
                        a.width,
                        b.width
                    ),
                });
            }
            if op.is_compare() {
                1
            } else {
                a.width
            }
        }
        ExprKind::Shift(_, a, k) => {
            type_expr(a, symbols)?;
            if *k >= a.width {
                return Err(RtlError::Width {
                    loc,
                    msg: format!("shift by {k} on a {}-bit operand", a.width),
                });
            }
            a.width
        }
        ExprKind::Slice(a, hi, lo) => {
            type_expr(a, symbols)?;
            if lo > hi || *hi >= a.width {
                return Err(RtlError::Width {
                    loc,
                    msg: format!(
                        "slice [{hi}:{lo}] out of bounds for a {}-bit operand",
                        a.width
                    ),
                });
            }
            *hi - *lo + 1
        }
        ExprKind::Mux(c, a, b) => {
            type_expr(c, symbols)?;
            type_expr(a, symbols)?;
            type_expr(b, symbols)?;
            if c.width != 1 {
                return Err(RtlError::Width {
                    loc,
                    msg: format!("mux condition is {} bits, expected 1", c.width),
                });
            }
            if a.width != b.width {
                return Err(RtlError::Width {
                    loc,
                    msg: format!("mux branches are {} and {} bits", a.width, b.width),
                });
            }
            a.width
        }
    };
    e.width = width;
    Ok(())
}

/// Rejects combinational loops through continuous assigns. Registers cut
/// every cycle, so only wire/output reads are followed.
fn check_acyclic(assigns: &[Assign], symbols: &HashMap<String, Symbol>) -> Result<(), RtlError> {
    let by_target: HashMap<&str, &Assign> =
        assigns.iter().map(|a| (a.target.as_str(), a)).collect();
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }
    let mut marks: HashMap<&str, Mark> = HashMap::new();

    fn visit<'a>(
        net: &'a str,
        by_target: &HashMap<&'a str, &'a Assign>,
        symbols: &HashMap<String, Symbol>,
        marks: &mut HashMap<&'a str, Mark>,
    ) -> Result<(), RtlError> {
        match marks.get(net) {
            Some(Mark::Done) => return Ok(()),
            Some(Mark::Active) => {
                let loc = by_target[net].loc;
                return Err(RtlError::CombinationalCycle {
                    loc,
                    net: net.to_string(),
                });
            }
            None => {}
        }
        marks.insert(net, Mark::Active);
        let a = by_target[net];
        for read in a.expr.reads() {
            if matches!(symbols[read].kind, Kind::Wire | Kind::Output) {
                visit(read, by_target, symbols, marks)?;
            }
        }
        marks.insert(net, Mark::Done);
        Ok(())
    }

    for a in assigns {
        visit(&a.target, &by_target, symbols, &mut marks)?;
    }
    Ok(())
}
