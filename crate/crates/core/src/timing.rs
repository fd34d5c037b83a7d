// SPDX-License-Identifier: Apache-2.0

//! Critical-path selection, path-to-RTL mapping and root-cause diagnosis.
//!
//! Everything here is read-only analysis: it produces diagnoses and never
//! edits a design.

use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::rtl::{Netlist, NodeId, NodeOp, RtlDesign};
use crate::skills::PatternId;

/// Default number of critical paths handed to the proposer.
pub const DEFAULT_TOP_K: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageLoc {
    pub file: String,
    pub line: u32,
}

/// One combinational element along a path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub node: String,
    pub op: String,
    pub delay_ns: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loc: Option<StageLoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingPath {
    pub startpoint: String,
    pub endpoint: String,
    pub slack_ns: f64,
    pub stages: Vec<Stage>,
}

impl TimingPath {
    pub fn logic_delay_ns(&self) -> f64 {
        self.stages.iter().map(|s| s.delay_ns).sum()
    }
}

/// Canonical interchange format for timing results:
/// `{clock_ns, endpoints:[{startpoint, endpoint, slack_ns, stages:[{node, op, delay_ns, loc:{file,line}}]}]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub clock_ns: f64,
    pub endpoints: Vec<TimingPath>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReportError {
    #[error("timing report is not sorted by slack at endpoint `{0}`")]
    Unsorted(String),
    #[error("endpoint `{0}` appears more than once")]
    DuplicateEndpoint(String),
    #[error("clock period must be positive, got {0}")]
    BadClock(String),
}

fn path_order(a: &TimingPath, b: &TimingPath) -> std::cmp::Ordering {
    a.slack_ns
        .total_cmp(&b.slack_ns)
        .then_with(|| a.endpoint.cmp(&b.endpoint))
}

impl TimingReport {
    /// Builds a report, sorting endpoints ascending by slack (ties by name).
    pub fn new(clock_ns: f64, mut endpoints: Vec<TimingPath>) -> Self {
        endpoints.sort_by(path_order);
        TimingReport {
            clock_ns,
            endpoints,
        }
    }

    pub fn validate(&self) -> Result<(), ReportError> {
        if self.clock_ns.is_nan() || self.clock_ns <= 0.0 {
            return Err(ReportError::BadClock(self.clock_ns.to_string()));
        }
        let mut names = std::collections::BTreeSet::new();
        for w in self.endpoints.windows(2) {
            if w[0].slack_ns > w[1].slack_ns {
                return Err(ReportError::Unsorted(w[1].endpoint.clone()));
            }
        }
        for p in &self.endpoints {
            if !names.insert(p.endpoint.as_str()) {
                return Err(ReportError::DuplicateEndpoint(p.endpoint.clone()));
            }
        }
        Ok(())
    }

    pub fn worst(&self) -> Option<&TimingPath> {
        self.endpoints.first()
    }
}

/// The `k` paths with the smallest slack; ties go to the lexicographically
/// smaller endpoint name.
pub fn select_critical_paths(report: &TimingReport, k: usize) -> Vec<TimingPath> {
    let mut paths: Vec<&TimingPath> = report.endpoints.iter().collect();
    paths.sort_by(|a, b| path_order(a, b));
    paths.into_iter().take(k).cloned().collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapConfidence {
    Exact,
    Heuristic,
    HeuristicFailed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RtlRegion {
    pub file: String,
    pub start_line: u32,
    pub end_line: u32,
    pub confidence: MapConfidence,
}

impl RtlRegion {
    pub fn whole(design: &RtlDesign, confidence: MapConfidence) -> Self {
        RtlRegion {
            file: design.file_label(),
            start_line: 1,
            end_line: design.line_count(),
            confidence,
        }
    }

    pub fn contains_line(&self, line: u32) -> bool {
        (self.start_line..=self.end_line).contains(&line)
    }
}

/// Maps a path back to source lines.
///
/// Paths from the built-in analyzer carry source locations and map exactly.
/// Paths from external tools carry only instance names; those are tokenized,
/// stripped of common synthesis suffixes (`_reg`, `_q`, bit indices) and
/// searched for in the source text.
pub fn map_path_to_rtl(path: &TimingPath, design: &RtlDesign) -> RtlRegion {
    let file = design.file_label();
    let located: Vec<u32> = path
        .stages
        .iter()
        .filter_map(|s| s.loc.as_ref().map(|l| l.line))
        .collect();
    if !path.stages.is_empty() && located.len() == path.stages.len() {
        let start = *located.iter().min().unwrap();
        let end = *located.iter().max().unwrap();
        return RtlRegion {
            file,
            start_line: start,
            end_line: end,
            confidence: MapConfidence::Exact,
        };
    }
    if path.stages.is_empty() {
        // A wire-through endpoint: the driving statement itself.
        if let Some((_, _, loc)) = design.statements().find(|(t, _, _)| *t == path.endpoint) {
            return RtlRegion {
                file,
                start_line: loc.line,
                end_line: loc.line,
                confidence: MapConfidence::Exact,
            };
        }
    }
    heuristic_region(path, design)
}

/// Identifier tokens of a tool instance name, with synthesis suffixes removed.
pub fn name_tokens(name: &str) -> Vec<String> {
    let trailing_index = Regex::new(r"\[\d+\]$").unwrap();
    let mut base = name.trim().to_string();
    while trailing_index.is_match(&base) {
        base = trailing_index.replace(&base, "").into_owned();
    }
    base.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .map(|t| {
            let mut t = t.to_string();
            for suffix in ["_reg", "_q"] {
                if t.len() > suffix.len() && t.ends_with(suffix) {
                    t.truncate(t.len() - suffix.len());
                    break;
                }
            }
            t
        })
        .filter(|t| !t.chars().all(|c| c.is_ascii_digit()))
        .collect()
}

fn heuristic_region(path: &TimingPath, design: &RtlDesign) -> RtlRegion {
    let mut tokens = name_tokens(&path.startpoint);
    tokens.extend(name_tokens(&path.endpoint));
    for s in &path.stages {
        tokens.extend(name_tokens(&s.node));
    }
    tokens.sort();
    tokens.dedup();
    let mut lines = Vec::new();
    for token in &tokens {
        let re = Regex::new(&format!(r"\b{}\b", regex::escape(token))).unwrap();
        for (i, text) in design.source.lines().enumerate() {
            let code = text.split("//").next().unwrap_or("");
            if re.is_match(code) {
                lines.push(i as u32 + 1);
            }
        }
    }
    match (lines.iter().min(), lines.iter().max()) {
        (Some(&start), Some(&end)) => RtlRegion {
            file: design.file_label(),
            start_line: start,
            end_line: end,
            confidence: MapConfidence::Heuristic,
        },
        _ => RtlRegion::whole(design, MapConfidence::HeuristicFailed),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootCause {
    ExcessiveDepth,
    HighFanout,
    ControlDataCoupling,
    Reconvergent,
    WideArithmetic,
    WideCompare,
    MuxCascade,
}

impl fmt::Display for RootCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).unwrap();
        f.write_str(s.as_str().unwrap())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Normal,
    Low,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BottleneckDiagnosis {
    pub path: TimingPath,
    pub pattern: PatternId,
    pub root_cause: RootCause,
    pub severity: Severity,
    pub rtl_region: RtlRegion,
    pub evidence: String,
}

/// Thresholds of the root-cause rules.
pub mod thresholds {
    /// Accumulated operand width of add/sub/lt stages along a path.
    pub const WIDE_ARITH_BITS: u32 = 16;
    pub const COMPARE_CHAIN: usize = 3;
    pub const MUX_RUN: usize = 3;
    pub const HIGH_FANOUT: usize = 8;
    pub const COUPLED_DATA_WIDTH: u32 = 8;
    pub const DEEP_STAGES: usize = 6;
}

struct PathGraph<'a> {
    nl: &'a Netlist,
    /// Stage nodes resolved in the netlist, in path order.
    stages: Vec<Option<NodeId>>,
    start: Option<NodeId>,
    end: Option<NodeId>,
}

impl PathGraph<'_> {
    fn skip_nets(&self, mut id: NodeId) -> NodeId {
        while let NodeOp::Net(_) = self.nl.nodes[id].op {
            id = self.nl.nodes[id].args[0];
        }
        id
    }
}

fn endpoint_node(nl: &Netlist, endpoint: &str) -> Option<NodeId> {
    nl.outputs
        .iter()
        .find(|(n, _, _)| n == endpoint)
        .map(|(_, _, id)| *id)
        .or_else(|| {
            nl.registers
                .iter()
                .find(|r| r.name == endpoint)
                .map(|r| r.d)
        })
}

/// Labels the dominant root cause of a path with fixed, ordered rules:
///
/// 1. add/sub/lt stages whose operand widths sum to at least 16 bits → wide arithmetic
/// 2. at least 3 comparisons combined logically in the endpoint's cone → wide compare
/// 3. at least 3 consecutive mux stages → mux cascade
/// 4. a node on the path with structural fanout of 8 or more → high fanout
/// 5. a 1-bit signal steering a mux of 8 or more data bits → control/data coupling
/// 6. a node reaching the endpoint along two distinct routes → reconvergent
/// 7. otherwise excessive depth (low severity under 6 stages)
pub fn diagnose(path: &TimingPath, design: &RtlDesign) -> BottleneckDiagnosis {
    use thresholds::*;

    let nl = design.netlist();
    let g = PathGraph {
        nl: &nl,
        stages: path.stages.iter().map(|s| nl.find(&s.node)).collect(),
        start: nl
            .find(&path.startpoint)
            .filter(|&id| matches!(nl.nodes[id].op, NodeOp::Input(_) | NodeOp::RegQ(_))),
        end: endpoint_node(&nl, &path.endpoint),
    };
    let width_of = |i: usize| {
        g.stages[i]
            .map(|id| nl.nodes[id].operand_width)
            .unwrap_or(0)
    };
    let region = map_path_to_rtl(path, design);
    let n_stages = path.stages.len();

    let verdict = |cause: RootCause, severity: Severity, evidence: String| {
        let fsm = g.end.is_some_and(|end| {
            nl.registers
                .iter()
                .any(|r| r.d == end && nl.cone(end).contains(&r.q))
        });
        let pattern = match cause {
            RootCause::WideCompare | RootCause::ExcessiveDepth if fsm => PatternId::DeepDecodeFsm,
            other => PatternId::from_root_cause(other),
        };
        BottleneckDiagnosis {
            path: path.clone(),
            pattern,
            root_cause: cause,
            severity,
            rtl_region: region.clone(),
            evidence,
        }
    };

    // 1. wide arithmetic
    let arith: Vec<usize> = path
        .stages
        .iter()
        .enumerate()
        .filter(|(_, s)| matches!(s.op.as_str(), "add" | "sub" | "lt"))
        .map(|(i, _)| i)
        .collect();
    let arith_bits: u32 = arith.iter().map(|&i| width_of(i)).sum();
    if arith_bits >= WIDE_ARITH_BITS {
        let widest = arith.iter().map(|&i| width_of(i)).max().unwrap_or(0);
        return verdict(
            RootCause::WideArithmetic,
            Severity::Normal,
            format!(
                "{} carry-chain stage(s) totalling {arith_bits} bits (widest {widest}) on the path to `{}`",
                arith.len(),
                path.endpoint
            ),
        );
    }

    let cone = g.end.map(|e| nl.cone(e)).unwrap_or_default();
    let in_cone = {
        let mut v = vec![false; nl.nodes.len()];
        cone.iter().for_each(|&i| v[i] = true);
        v
    };
    let fanouts = nl.fanouts();

    // 2. logically combined comparisons
    let compares =
        cone.iter()
            .filter(|&&id| {
                matches!(nl.nodes[id].op, NodeOp::Binary(op) if op.is_compare())
                    && fanouts[id].iter().filter(|&&c| in_cone[c]).all(|&c| {
                        !matches!(nl.nodes[c].op, NodeOp::Mux) || nl.nodes[c].args[0] != id
                    })
            })
            .count();
    if compares >= COMPARE_CHAIN {
        return verdict(
            RootCause::WideCompare,
            Severity::Normal,
            format!(
                "{compares} comparisons combined in the cone of `{}`",
                path.endpoint
            ),
        );
    }

    // 3. mux cascade
    let mut run = 0;
    let mut longest_run = 0;
    for s in &path.stages {
        run = if s.op == "mux" { run + 1 } else { 0 };
        longest_run = longest_run.max(run);
    }
    if longest_run >= MUX_RUN {
        return verdict(
            RootCause::MuxCascade,
            Severity::Normal,
            format!(
                "{longest_run} consecutive mux stages on the path to `{}`",
                path.endpoint
            ),
        );
    }

    // 4. high fanout
    let eff = nl.effective_fanout();
    let on_path = g
        .start
        .into_iter()
        .chain(g.stages.iter().flatten().copied());
    if let Some((id, fo)) = on_path
        .map(|id| (id, eff[id]))
        .filter(|(_, fo)| *fo >= HIGH_FANOUT)
        .max_by_key(|(id, fo)| (*fo, std::cmp::Reverse(*id)))
    {
        return verdict(
            RootCause::HighFanout,
            Severity::Normal,
            format!("`{}` drives {fo} sinks", nl.nodes[id].name),
        );
    }

    // 5. control/data coupling
    let mut prev = g.start;
    for (i, s) in path.stages.iter().enumerate() {
        if let (Some(p), Some(id)) = (prev, g.stages[i]) {
            let node = &nl.nodes[id];
            if s.op == "mux"
                && node.width >= COUPLED_DATA_WIDTH
                && nl.nodes[p].width == 1
                && g.skip_nets(node.args[0]) == p
            {
                return verdict(
                    RootCause::ControlDataCoupling,
                    Severity::Normal,
                    format!(
                        "1-bit `{}` selects a {}-bit datapath mux `{}`",
                        nl.nodes[p].name, node.width, node.name
                    ),
                );
            }
        }
        prev = g.stages[i];
    }

    // 6. reconvergence
    let reconverging = cone.iter().copied().find(|&id| {
        !matches!(nl.nodes[id].op, NodeOp::Const(_))
            && fanouts[id].iter().filter(|&&c| in_cone[c]).count() >= 2
    });
    if let Some(id) = reconverging {
        return verdict(
            RootCause::Reconvergent,
            Severity::Normal,
            format!(
                "`{}` reaches `{}` along more than one route",
                nl.nodes[id].name, path.endpoint
            ),
        );
    }

    // 7. depth
    let severity = if n_stages >= DEEP_STAGES {
        Severity::Normal
    } else {
        Severity::Low
    };
    verdict(
        RootCause::ExcessiveDepth,
        severity,
        format!(
            "{n_stages} logic stage(s) between `{}` and `{}`",
            path.startpoint, path.endpoint
        ),
    )
}
