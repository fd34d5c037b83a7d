// SPDX-License-Identifier: Apache-2.0

//! Flattened node graph of an elaborated design, in topological order.
//!
//! Each operator in the source becomes one node. Every assign target gets a
//! zero-cost `Net` node so the graph keeps signal names; variable reads
//! resolve to that node, to an `Input`, or to a register's `RegQ`.

use std::collections::HashMap;

use super::{BinOp, Expr, ExprKind, Loc, RtlDesign, ShiftOp};

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NodeOp {
    Input(usize),
    RegQ(usize),
    Const(u64),
    Net(String),
    Not,
    Binary(BinOp),
    Shl(u32),
    Shr(u32),
    Slice(u32, u32),
    Mux,
}

impl NodeOp {
    /// Short operator name as used in timing reports.
    pub fn kind_name(&self) -> &'static str {
        match self {
            NodeOp::Input(_) => "input",
            NodeOp::RegQ(_) => "reg",
            NodeOp::Const(_) => "const",
            NodeOp::Net(_) => "net",
            NodeOp::Not => "not",
            NodeOp::Binary(BinOp::And) => "and",
            NodeOp::Binary(BinOp::Or) => "or",
            NodeOp::Binary(BinOp::Xor) => "xor",
            NodeOp::Binary(BinOp::Add) => "add",
            NodeOp::Binary(BinOp::Sub) => "sub",
            NodeOp::Binary(BinOp::Eq) => "eq",
            NodeOp::Binary(BinOp::Lt) => "lt",
            NodeOp::Shl(_) => "shl",
            NodeOp::Shr(_) => "shr",
            NodeOp::Slice(..) => "slice",
            NodeOp::Mux => "mux",
        }
    }

    /// Nodes that carry no logic: sources, constants and named wires.
    pub fn is_logic(&self) -> bool {
        !matches!(
            self,
            NodeOp::Input(_) | NodeOp::RegQ(_) | NodeOp::Const(_) | NodeOp::Net(_)
        )
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub op: NodeOp,
    pub width: u32,
    /// Width of the operands (differs from `width` for compares and slices).
    pub operand_width: u32,
    pub args: Vec<NodeId>,
    pub name: String,
    pub loc: Loc,
}

#[derive(Clone, Debug)]
pub struct RegSlot {
    pub name: String,
    pub width: u32,
    pub q: NodeId,
    pub d: NodeId,
}

#[derive(Clone, Debug)]
pub struct Netlist {
    pub nodes: Vec<Node>,
    /// (name, width, node) in port order.
    pub inputs: Vec<(String, u32, NodeId)>,
    pub outputs: Vec<(String, u32, NodeId)>,
    pub registers: Vec<RegSlot>,
}

struct Builder<'a> {
    design: &'a RtlDesign,
    nodes: Vec<Node>,
    names: HashMap<&'a str, NodeId>,
}

impl<'a> Builder<'a> {
    fn push(&mut self, node: Node) -> NodeId {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    fn resolve(&mut self, name: &'a str) -> NodeId {
        if let Some(&id) = self.names.get(name) {
            return id;
        }
        // Only nets are built lazily; inputs and registers are seeded.
        let assign = self
            .design
            .assign_for(name)
            .expect("elaborated design drives every net");
        let mut counter = 0;
        let root = self.expr(&assign.expr, name, &mut counter);
        let id = self.push(Node {
            op: NodeOp::Net(name.to_string()),
            width: assign.expr.width,
            operand_width: assign.expr.width,
            args: vec![root],
            name: name.to_string(),
            loc: assign.loc,
        });
        self.names.insert(name, id);
        id
    }

    fn expr(&mut self, e: &'a Expr, owner: &str, counter: &mut usize) -> NodeId {
        let (op, args, operand_width) = match &e.kind {
            ExprKind::Var(n) => return self.resolve(n),
            ExprKind::Const(v) => (NodeOp::Const(*v), vec![], e.width),
            ExprKind::Not(a) => (NodeOp::Not, vec![self.expr(a, owner, counter)], a.width),
            ExprKind::Binary(op, a, b) => {
                let x = self.expr(a, owner, counter);
                let y = self.expr(b, owner, counter);
                (NodeOp::Binary(*op), vec![x, y], a.width)
            }
            ExprKind::Shift(op, a, k) => {
                let x = self.expr(a, owner, counter);
                let op = match op {
                    ShiftOp::Shl => NodeOp::Shl(*k),
                    ShiftOp::Shr => NodeOp::Shr(*k),
                };
                (op, vec![x], a.width)
            }
            ExprKind::Slice(a, hi, lo) => (
                NodeOp::Slice(*hi, *lo),
                vec![self.expr(a, owner, counter)],
                a.width,
            ),
            ExprKind::Mux(c, a, b) => {
                let x = self.expr(c, owner, counter);
                let y = self.expr(a, owner, counter);
                let z = self.expr(b, owner, counter);
                (NodeOp::Mux, vec![x, y, z], a.width)
            }
        };
        let name = format!("{owner}/{}{}", op.kind_name(), *counter);
        *counter += 1;
        self.push(Node {
            op,
            width: e.width,
            operand_width,
            args,
            name,
            loc: e.loc,
        })
    }
}

impl Netlist {
    pub fn build(design: &RtlDesign) -> Netlist {
        let mut b = Builder {
            design,
            nodes: Vec::new(),
            names: HashMap::new(),
        };
        let mut inputs = Vec::new();
        for (i, p) in design.inputs().enumerate() {
            let id = b.push(Node {
                op: NodeOp::Input(i),
                width: p.width,
                operand_width: p.width,
                args: vec![],
                name: p.name.clone(),
                loc: Loc::default(),
            });
            b.names.insert(&p.name, id);
            inputs.push((p.name.clone(), p.width, id));
        }
        let mut qs = Vec::new();
        for (i, r) in design.registers.iter().enumerate() {
            let id = b.push(Node {
                op: NodeOp::RegQ(i),
                width: r.width,
                operand_width: r.width,
                args: vec![],
                name: r.name.clone(),
                loc: r.decl,
            });
            b.names.insert(&r.name, id);
            qs.push(id);
        }
        for a in &design.assigns {
            b.resolve(&a.target);
        }
        let outputs = design
            .outputs()
            .map(|p| (p.name.clone(), p.width, b.resolve(&p.name)))
            .collect();
        let registers = design
            .registers
            .iter()
            .zip(qs)
            .map(|(r, q)| {
                let mut counter = 0;
                let d = b.expr(&r.next, &r.name, &mut counter);
                RegSlot {
                    name: r.name.clone(),
                    width: r.width,
                    q,
                    d,
                }
            })
            .collect();
        Netlist {
            nodes: b.nodes,
            inputs,
            outputs,
            registers,
        }
    }

    /// Consumers of every node.
    pub fn fanouts(&self) -> Vec<Vec<NodeId>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            for &a in &n.args {
                out[a].push(i);
            }
        }
        out
    }

    /// Structural fanout seen through named wires: the number of logic
    /// consumers and endpoints a node ultimately drives.
    pub fn effective_fanout(&self) -> Vec<usize> {
        let fo = self.fanouts();
        let mut endpoint_uses = vec![0usize; self.nodes.len()];
        for (_, _, id) in &self.outputs {
            endpoint_uses[*id] += 1;
        }
        for r in &self.registers {
            endpoint_uses[r.d] += 1;
        }
        let mut eff = vec![0usize; self.nodes.len()];
        // Consumers always come later in topological order.
        for i in (0..self.nodes.len()).rev() {
            eff[i] = endpoint_uses[i]
                + fo[i]
                    .iter()
                    .map(|&c| {
                        if matches!(self.nodes[c].op, NodeOp::Net(_)) {
                            eff[c]
                        } else {
                            1
                        }
                    })
                    .sum::<usize>();
        }
        eff
    }

    /// Transitive fan-in of `root` (inclusive), stopping at inputs and
    /// register outputs.
    pub fn cone(&self, root: NodeId) -> Vec<NodeId> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![root];
        let mut out = Vec::new();
        while let Some(n) = stack.pop() {
            if std::mem::replace(&mut seen[n], true) {
                continue;
            }
            out.push(n);
            stack.extend(self.nodes[n].args.iter().copied());
        }
        out.sort_unstable();
        out
    }

    pub fn find(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name)
    }
}
