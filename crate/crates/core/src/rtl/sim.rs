// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use super::{mask, Netlist, NodeOp, RtlDesign, RtlError};

/// Values for every input port in one frame, keyed by port name.
pub type InputVector = BTreeMap<String, u64>;
/// Sampled output values for one frame, keyed by port name.
pub type OutputVector = BTreeMap<String, u64>;

/// Cycle-accurate two-state simulator over a compiled netlist.
///
/// Each [`step`](Simulator::step) evaluates combinational logic with the
/// current register state, samples outputs, then clocks every register.
#[derive(Clone, Debug)]
pub struct Simulator {
    netlist: Netlist,
    values: Vec<u64>,
    state: Vec<u64>,
}

impl Simulator {
    pub fn new(design: &RtlDesign) -> Self {
        Self::from_netlist(design.netlist())
    }

    pub fn from_netlist(netlist: Netlist) -> Self {
        let values = vec![0; netlist.nodes.len()];
        let state = vec![0; netlist.registers.len()];
        Simulator {
            netlist,
            values,
            state,
        }
    }

    pub fn netlist(&self) -> &Netlist {
        &self.netlist
    }

    /// Back to the all-zero reset state.
    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|v| *v = 0);
    }

    /// Advances one frame. `inputs` follows port order and must already be
    /// masked to each port's width; `outputs` receives values in port order.
    pub fn step(&mut self, inputs: &[u64], outputs: &mut [u64]) {
        let nl = &self.netlist;
        let v = &mut self.values;
        for i in 0..nl.nodes.len() {
            let n = &nl.nodes[i];
            let a = |k: usize| v[n.args[k]];
            v[i] = match &n.op {
                NodeOp::Input(p) => inputs[*p],
                NodeOp::RegQ(r) => self.state[*r],
                NodeOp::Const(c) => *c,
                NodeOp::Net(_) => a(0),
                NodeOp::Not => !a(0) & mask(n.width),
                NodeOp::Binary(op) => op.eval(a(0), a(1), n.operand_width),
                NodeOp::Shl(k) => (a(0) << k) & mask(n.width),
                NodeOp::Shr(k) => a(0) >> k,
                NodeOp::Slice(_, lo) => (a(0) >> lo) & mask(n.width),
                NodeOp::Mux => {
                    if a(0) != 0 {
                        a(1)
                    } else {
                        a(2)
                    }
                }
            };
        }
        for (o, (_, _, id)) in outputs.iter_mut().zip(&nl.outputs) {
            *o = v[*id];
        }
        for (s, r) in self.state.iter_mut().zip(&nl.registers) {
            *s = v[r.d];
        }
    }
}

/// Simulates `frames` cycles from the zero state.
pub fn simulate(
    design: &RtlDesign,
    trace: &[InputVector],
    frames: usize,
) -> Result<Vec<OutputVector>, RtlError> {
    if trace.len() != frames {
        return Err(RtlError::Stimulus(format!(
            "trace has {} vectors but {frames} frames were requested",
            trace.len()
        )));
    }
    let mut sim = Simulator::new(design);
    let ports: Vec<(String, u32)> = sim
        .netlist
        .inputs
        .iter()
        .map(|(n, w, _)| (n.clone(), *w))
        .collect();
    let out_names: Vec<String> = sim
        .netlist
        .outputs
        .iter()
        .map(|(n, _, _)| n.clone())
        .collect();
    let mut ins = vec![0u64; ports.len()];
    let mut outs = vec![0u64; out_names.len()];
    let mut result = Vec::with_capacity(frames);
    for (t, vector) in trace.iter().enumerate() {
        for (slot, (name, width)) in ins.iter_mut().zip(&ports) {
            let value = *vector.get(name).ok_or_else(|| {
                RtlError::Stimulus(format!("frame {t}: input `{name}` not assigned"))
            })?;
            if value & !mask(*width) != 0 {
                return Err(RtlError::Stimulus(format!(
                    "frame {t}: value {value} does not fit {width}-bit input `{name}`"
                )));
            }
            *slot = value;
        }
        if let Some(extra) = vector.keys().find(|k| !ports.iter().any(|(n, _)| n == *k)) {
            return Err(RtlError::Stimulus(format!(
                "frame {t}: `{extra}` is not an input port"
            )));
        }
        sim.step(&ins, &mut outs);
        result.push(
            out_names
                .iter()
                .cloned()
                .zip(outs.iter().copied())
                .collect(),
        );
    }
    Ok(result)
}
