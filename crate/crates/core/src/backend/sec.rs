// SPDX-License-Identifier: Apache-2.0

//! Built-in sequential equivalence check by simulation.
//!
//! Both designs start from the all-zero register state and are driven with
//! identical input sequences of `F = max(register count) + 2` frames; every
//! output must match in every frame, so latency changes are caught. When the
//! whole sequence space fits in the enumeration budget it is walked
//! exhaustively, otherwise a fixed-seed random sample is checked.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::par::{self, Exec};
use crate::rtl::{mask, InputVector, RtlDesign, Simulator};

use super::{BackendError, SecMode};

pub const DEFAULT_ENUMERATION_BITS: u32 = 20;
pub const DEFAULT_SAMPLES: u64 = 100_000;
pub const DEFAULT_SEED: u64 = 0xD0;

/// Sequences handled per work item (and per random stream).
const BLOCK: u64 = 1024;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecSettings {
    pub enumeration_bits: u32,
    pub samples: u64,
    pub seed: u64,
    #[serde(default)]
    pub exec: Exec,
}

impl Default for SecSettings {
    fn default() -> Self {
        SecSettings {
            enumeration_bits: DEFAULT_ENUMERATION_BITS,
            samples: DEFAULT_SAMPLES,
            seed: DEFAULT_SEED,
            exec: Exec::Parallel,
        }
    }
}

/// An input sequence on which the two designs disagree.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub sequence: Vec<InputVector>,
    pub frame: usize,
    pub output: String,
    pub golden: u64,
    pub candidate: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecOutcome {
    pub pass: bool,
    pub mode: SecMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Counterexample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Checks that both designs expose the same ports (order-insensitive).
pub fn check_interface(golden: &RtlDesign, candidate: &RtlDesign) -> Result<(), BackendError> {
    let mut a = golden.ports.clone();
    let mut b = candidate.ports.clone();
    a.sort_by(|x, y| x.name.cmp(&y.name));
    b.sort_by(|x, y| x.name.cmp(&y.name));
    if a == b {
        return Ok(());
    }
    let describe = |ps: &[crate::rtl::Port]| {
        ps.iter()
            .map(|p| format!("{:?} {}[{}]", p.direction, p.name, p.width))
            .collect::<Vec<_>>()
            .join(", ")
    };
    Err(BackendError::InterfaceMismatch(format!(
        "golden ({}) vs candidate ({})",
        describe(&a),
        describe(&b)
    )))
}

pub fn frames_for(golden: &RtlDesign, candidate: &RtlDesign) -> usize {
    golden.registers.len().max(candidate.registers.len()) + 2
}

struct Harness {
    golden: Simulator,
    candidate: Simulator,
    /// Input widths in golden port order.
    widths: Vec<u32>,
    /// Candidate input slot for each golden input.
    in_perm: Vec<usize>,
    /// Candidate output slot for each golden output.
    out_perm: Vec<usize>,
    out_names: Vec<String>,
    in_names: Vec<String>,
    frames: usize,
}

impl Harness {
    fn new(golden: &RtlDesign, candidate: &RtlDesign) -> Self {
        let g = Simulator::new(golden);
        let c = Simulator::new(candidate);
        let gi = &g.netlist().inputs;
        let ci = &c.netlist().inputs;
        let go = &g.netlist().outputs;
        let co = &c.netlist().outputs;
        let in_perm = gi
            .iter()
            .map(|(n, _, _)| ci.iter().position(|(m, _, _)| m == n).unwrap())
            .collect();
        let out_perm = go
            .iter()
            .map(|(n, _, _)| co.iter().position(|(m, _, _)| m == n).unwrap())
            .collect();
        Harness {
            widths: gi.iter().map(|(_, w, _)| *w).collect(),
            in_names: gi.iter().map(|(n, _, _)| n.clone()).collect(),
            out_names: go.iter().map(|(n, _, _)| n.clone()).collect(),
            in_perm,
            out_perm,
            frames: frames_for(golden, candidate),
            golden: g,
            candidate: c,
        }
    }

    /// Runs one sequence (`frames × inputs` values, golden port order) and
    /// returns the first mismatch as (frame, output index, golden, candidate).
    fn run(&mut self, seq: &[u64]) -> Option<(usize, usize, u64, u64)> {
        let n_in = self.widths.len();
        let mut cin = vec![0u64; n_in];
        let mut gout = vec![0u64; self.out_names.len()];
        let mut cout = vec![0u64; self.out_names.len()];
        self.golden.reset();
        self.candidate.reset();
        for f in 0..self.frames {
            let frame = &seq[f * n_in..(f + 1) * n_in];
            for (i, &v) in frame.iter().enumerate() {
                cin[self.in_perm[i]] = v;
            }
            self.golden.step(frame, &mut gout);
            self.candidate.step(&cin, &mut cout);
            for (o, &g) in gout.iter().enumerate() {
                let c = cout[self.out_perm[o]];
                if g != c {
                    return Some((f, o, g, c));
                }
            }
        }
        None
    }

    fn counterexample(&self, seq: &[u64], hit: (usize, usize, u64, u64)) -> Counterexample {
        let n_in = self.widths.len();
        let sequence = (0..self.frames)
            .map(|f| {
                self.in_names
                    .iter()
                    .cloned()
                    .zip(seq[f * n_in..(f + 1) * n_in].iter().copied())
                    .collect::<BTreeMap<_, _>>()
            })
            .collect();
        Counterexample {
            sequence,
            frame: hit.0,
            output: self.out_names[hit.1].clone(),
            golden: hit.2,
            candidate: hit.3,
        }
    }
}

/// Unpacks sequence number `index` into per-frame input values, LSB first,
/// frame-major in golden port order.
fn unpack(index: u64, widths: &[u32], frames: usize, out: &mut Vec<u64>) {
    out.clear();
    let mut shift = 0;
    for _ in 0..frames {
        for &w in widths {
            out.push((index >> shift) & mask(w));
            shift += w;
        }
    }
}

/// Builtin sequential equivalence check against `golden`.
pub fn check(
    golden: &RtlDesign,
    candidate: &RtlDesign,
    settings: &SecSettings,
) -> Result<SecOutcome, BackendError> {
    check_interface(golden, candidate)?;
    let proto = Harness::new(golden, candidate);
    let frames = proto.frames;
    let total_bits = golden.input_bits() as u64 * frames as u64;

    if total_bits <= settings.enumeration_bits as u64 {
        let space = 1u64 << total_bits;
        let blocks = space.div_ceil(BLOCK);
        let hit = par::find_map_first(settings.exec, blocks, |b| {
            let mut h = Harness::new(golden, candidate);
            let mut seq = Vec::new();
            for idx in b * BLOCK..((b + 1) * BLOCK).min(space) {
                unpack(idx, &h.widths, frames, &mut seq);
                if let Some(m) = h.run(&seq) {
                    return Some(h.counterexample(&seq, m));
                }
            }
            None
        });
        return Ok(SecOutcome {
            pass: hit.is_none(),
            mode: SecMode::Exhaustive,
            counterexample: hit,
            note: Some(format!("{space} sequences of {frames} frames")),
        });
    }

    let samples = settings.samples;
    let blocks = samples.div_ceil(BLOCK);
    let seed = settings.seed;
    let hit = par::find_map_first(settings.exec, blocks, |b| {
        let mut h = Harness::new(golden, candidate);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b);
        let mut seq = Vec::with_capacity(frames * h.widths.len());
        for _ in b * BLOCK..((b + 1) * BLOCK).min(samples) {
            seq.clear();
            for _ in 0..frames {
                for &w in &h.widths {
                    seq.push(rng.random::<u64>() & mask(w));
                }
            }
            if let Some(m) = h.run(&seq) {
                return Some(h.counterexample(&seq, m));
            }
        }
        None
    });
    Ok(SecOutcome {
        pass: hit.is_none(),
        mode: SecMode::BoundedSampled,
        counterexample: hit,
        note: Some(format!(
            "{samples} random sequences of {frames} frames, seed {seed:#x}"
        )),
    })
}
