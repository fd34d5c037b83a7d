// SPDX-License-Identifier: Apache-2.0

//! Synthesis-free static timing and area estimate over an RTL-lite netlist.
//!
//! Delays are accumulated as integer femtoseconds so results do not depend
//! on summation order; they are converted to nanoseconds only on output.

use crate::rtl::{BinOp, Netlist, NodeOp, RtlDesign};
use crate::timing::{Stage, StageLoc, TimingPath, TimingReport};

use super::PpaMetrics;

const FS_PER_NS: f64 = 1e6;

/// Register clock-to-q, also applied to primary inputs.
pub const CLK_TO_Q_FS: i64 = 50_000;
/// Register setup, also applied to primary outputs.
pub const SETUP_FS: i64 = 50_000;

fn ceil_log2(w: u32) -> u32 {
    if w <= 1 {
        0
    } else {
        32 - (w - 1).leading_zeros()
    }
}

/// Propagation delay of one node in femtoseconds (`w` is the operand width).
pub fn delay_fs(op: &NodeOp, w: u32) -> i64 {
    let w = w as i64;
    match op {
        NodeOp::Input(_) | NodeOp::RegQ(_) | NodeOp::Const(_) | NodeOp::Net(_) => 0,
        NodeOp::Not | NodeOp::Slice(..) | NodeOp::Shl(_) | NodeOp::Shr(_) => 50_000,
        NodeOp::Binary(BinOp::And | BinOp::Or | BinOp::Xor) => 100_000,
        NodeOp::Mux => 150_000,
        NodeOp::Binary(BinOp::Eq) => 50_000 + 20_000 * ceil_log2(w as u32) as i64,
        NodeOp::Binary(BinOp::Lt | BinOp::Add | BinOp::Sub) => 50_000 + 20_000 * w,
    }
}

/// Area of one node in area units.
pub fn area_units(op: &NodeOp, w: u32) -> u64 {
    let w = w as u64;
    match op {
        NodeOp::Not => 1,
        NodeOp::Binary(BinOp::And | BinOp::Or | BinOp::Xor) => 2 * w,
        NodeOp::Mux => 3 * w,
        NodeOp::Binary(BinOp::Eq | BinOp::Lt) => 2 * w,
        NodeOp::Binary(BinOp::Add | BinOp::Sub) => 4 * w,
        NodeOp::RegQ(_) => 6 * w,
        _ => 0,
    }
}

pub fn fs_to_ns(fs: i64) -> f64 {
    fs as f64 / FS_PER_NS
}

pub fn ns_to_fs(ns: f64) -> i64 {
    (ns * FS_PER_NS).round() as i64
}

/// Runs the built-in timing and area model.
pub fn analyze(design: &RtlDesign, clock_period_ns: f64) -> (PpaMetrics, TimingReport) {
    let nl = design.netlist();
    analyze_netlist(design, &nl, clock_period_ns)
}

pub(crate) fn analyze_netlist(
    design: &RtlDesign,
    nl: &Netlist,
    clock_period_ns: f64,
) -> (PpaMetrics, TimingReport) {
    let clock_fs = ns_to_fs(clock_period_ns);
    let n = nl.nodes.len();
    let mut arrival = vec![0i64; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    let mut area: u64 = 0;
    for (i, node) in nl.nodes.iter().enumerate() {
        let mut best: Option<(i64, usize)> = None;
        for &a in &node.args {
            if best.is_none_or(|(t, _)| arrival[a] > t) {
                best = Some((arrival[a], a));
            }
        }
        arrival[i] = best.map_or(0, |(t, _)| t) + delay_fs(&node.op, node.operand_width);
        pred[i] = best.map(|(_, a)| a);
        area += area_units(&node.op, node.operand_width);
    }

    let file = design.file_label();
    let endpoints = nl
        .outputs
        .iter()
        .map(|(name, _, id)| (name.as_str(), *id))
        .chain(nl.registers.iter().map(|r| (r.name.as_str(), r.d)));
    let mut paths = Vec::new();
    let mut slacks_fs = Vec::new();
    for (name, id) in endpoints {
        let total = CLK_TO_Q_FS + arrival[id] + SETUP_FS;
        let slack = clock_fs - total;
        let mut chain = vec![id];
        let mut cur = id;
        while let Some(p) = pred[cur] {
            chain.push(p);
            cur = p;
        }
        chain.reverse();
        let source = &nl.nodes[chain[0]];
        let startpoint = match source.op {
            NodeOp::Input(_) | NodeOp::RegQ(_) => source.name.clone(),
            _ => "<const>".to_string(),
        };
        let stages = chain
            .iter()
            .map(|&c| &nl.nodes[c])
            .filter(|node| node.op.is_logic())
            .map(|node| Stage {
                node: node.name.clone(),
                op: node.op.kind_name().to_string(),
                delay_ns: fs_to_ns(delay_fs(&node.op, node.operand_width)),
                loc: Some(StageLoc {
                    file: file.clone(),
                    line: node.loc.line,
                }),
            })
            .collect();
        slacks_fs.push((slack, name));
        paths.push(TimingPath {
            startpoint,
            endpoint: name.to_string(),
            slack_ns: fs_to_ns(slack),
            stages,
        });
    }
    slacks_fs.sort();
    let wns_fs = slacks_fs.first().map_or(0, |(s, _)| *s);
    let tns_fs: i64 = slacks_fs.iter().map(|(s, _)| (*s).min(0)).sum();
    let metrics = PpaMetrics {
        wns: fs_to_ns(wns_fs),
        tns: fs_to_ns(tns_fs),
        area: area as f64,
    };
    (metrics, TimingReport::new(clock_period_ns, paths))
}
