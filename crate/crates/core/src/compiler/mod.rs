//! Hardened gate netlists: construction from a trained model, optimization
//! passes, bit-sliced evaluation and statistics.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::gates::GateOpcode;
use crate::network::{BooleanLayer, NetworkModel, Stage};

mod bitslice;
mod passes;
mod stats;

pub use bitslice::{eval_bitsliced, eval_many, scores_bitsliced, BitSliceBatch, LANES};
pub use passes::{optimize, run_pass, Pass};
pub use stats::{netlist_stats, NetlistStats};

/// Fanin of a netlist node or member of a class group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NetRef {
    Const(bool),
    Input(u32),
    Node(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NetNode {
    pub op: GateOpcode,
    pub a: NetRef,
    pub b: NetRef,
}

/// A feed-forward gate netlist. Nodes are topologically ordered: a node only
/// references inputs, constants and earlier nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct GateNetlist {
    pub input_count: usize,
    pub nodes: Vec<NetNode>,
    /// Bits counted for each class by the voting stage.
    pub class_outputs: Vec<Vec<NetRef>>,
    /// Voting temperature, kept as metadata; it never changes a prediction.
    pub temperature: f64,
}

impl GateNetlist {
    pub fn validate(&self) -> Result<()> {
        for (k, n) in self.nodes.iter().enumerate() {
            for r in [n.a, n.b] {
                self.check_ref(r, k)?;
            }
        }
        if self.class_outputs.is_empty() {
            return Err(Error::Shape("netlist has no class groups".into()));
        }
        for (c, group) in self.class_outputs.iter().enumerate() {
            if group.is_empty() {
                return Err(Error::Shape(format!("class group {c} is empty")));
            }
            for &r in group {
                self.check_ref(r, self.nodes.len())?;
            }
        }
        if self.temperature.is_nan() || self.temperature <= 0.0 {
            return Err(Error::Config(format!("temperature {} must be positive", self.temperature)));
        }
        Ok(())
    }

    fn check_ref(&self, r: NetRef, before: usize) -> Result<()> {
        match r {
            NetRef::Input(i) if i as usize >= self.input_count => {
                Err(Error::Shape(format!("input ref {i} past {} inputs", self.input_count)))
            }
            NetRef::Node(k) if k as usize >= before => {
                Err(Error::Shape(format!("node ref {k} does not point backward from {before}")))
            }
            _ => Ok(()),
        }
    }

    pub fn class_count(&self) -> usize {
        self.class_outputs.len()
    }

    /// Value of every node for one input vector.
    pub fn eval_nodes(&self, x: &[bool]) -> Result<Vec<bool>> {
        if x.len() != self.input_count {
            return Err(Error::Shape(format!("{} input bits, netlist expects {}", x.len(), self.input_count)));
        }
        let mut vals = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            let a = resolve(n.a, x, &vals);
            let b = resolve(n.b, x, &vals);
            vals.push(n.op.eval_hard(a, b));
        }
        Ok(vals)
    }

    /// Pop-count of every class group for one input vector.
    pub fn class_counts(&self, x: &[bool]) -> Result<Vec<u32>> {
        let vals = self.eval_nodes(x)?;
        Ok(self
            .class_outputs
            .iter()
            .map(|g| g.iter().filter(|&&r| resolve(r, x, &vals)).count() as u32)
            .collect())
    }

    /// Scalar hard prediction, lowest class index on ties.
    pub fn predict(&self, x: &[bool]) -> Result<u32> {
        let counts = self.class_counts(x)?;
        Ok(argmax_counts(counts.iter().copied()))
    }
}

#[inline]
fn resolve(r: NetRef, x: &[bool], vals: &[bool]) -> bool {
    match r {
        NetRef::Const(v) => v,
        NetRef::Input(i) => x[i as usize],
        NetRef::Node(k) => vals[k as usize],
    }
}

pub(crate) fn argmax_counts(counts: impl Iterator<Item = u32>) -> u32 {
    let mut best = (0, 0u32);
    for (c, v) in counts.enumerate() {
        if c == 0 || v > best.1 {
            best = (c, v);
        }
    }
    best.0 as u32
}

fn push(nodes: &mut Vec<NetNode>, op: GateOpcode, a: NetRef, b: NetRef) -> NetRef {
    nodes.push(NetNode { op, a, b });
    NetRef::Node(nodes.len() as u32 - 1)
}

fn harden_layer(nodes: &mut Vec<NetNode>, layer: &BooleanLayer, prev: &[NetRef]) -> Vec<NetRef> {
    let ops = layer.hard_opcodes();
    layer
        .pairs
        .pairs
        .iter()
        .zip(ops)
        .map(|(p, op)| push(nodes, op, prev[p[0] as usize], prev[p[1] as usize]))
        .collect()
}

/// Collapses every node to its argmax gate. Skip connectives become ordinary
/// gates reading the block input and the block output at the same position.
pub fn harden(model: &NetworkModel) -> GateNetlist {
    let mut nodes = Vec::with_capacity(model.gate_count());
    let mut cur: Vec<NetRef> = (0..model.input_width() as u32).map(NetRef::Input).collect();
    for stage in &model.stages {
        match stage {
            Stage::Layer(l) => cur = harden_layer(&mut nodes, l, &cur),
            Stage::Skip(block) => {
                let mid = harden_layer(&mut nodes, &block.layer_a, &cur);
                let out = harden_layer(&mut nodes, &block.layer_b, &mid);
                cur = if block.connective.is_some() {
                    let ops = block.hard_connectives();
                    cur.iter()
                        .zip(&out)
                        .zip(ops)
                        .map(|((&x, &u), op)| push(&mut nodes, op, x, u))
                        .collect()
                } else {
                    out
                };
            }
        }
    }
    let w = model.head.per_class_width;
    let class_outputs = (0..model.head.class_count).map(|c| cur[c * w..(c + 1) * w].to_vec()).collect();
    GateNetlist {
        input_count: model.input_width(),
        nodes,
        class_outputs,
        temperature: model.head.temperature,
    }
}

/// A random netlist with `gates` nodes over `inputs` inputs, each fanin drawn
/// from everything defined before it (occasionally a constant), and `classes`
/// groups drawn from the last nodes. Used for fuzzing the passes and runtime.
pub fn random_netlist<R: Rng + ?Sized>(inputs: usize, gates: usize, classes: usize, rng: &mut R) -> GateNetlist {
    let pick = |k: usize, rng: &mut R| {
        let roll = rng.random_range(0..inputs + k + 2);
        if roll < inputs {
            NetRef::Input(roll as u32)
        } else if roll < inputs + k {
            NetRef::Node((roll - inputs) as u32)
        } else {
            NetRef::Const(roll == inputs + k)
        }
    };
    let nodes: Vec<NetNode> = (0..gates)
        .map(|k| NetNode {
            op: GateOpcode::new(rng.random_range(0..16)).unwrap(),
            a: pick(k, rng),
            b: pick(k, rng),
        })
        .collect();
    let class_outputs = (0..classes)
        .map(|_| {
            let size = rng.random_range(1..=gates.clamp(1, 16));
            (0..size)
                .map(|_| match gates {
                    0 => pick(0, rng),
                    _ => NetRef::Node(rng.random_range(gates.saturating_sub(3 * size)..gates) as u32),
                })
                .collect()
        })
        .collect();
    GateNetlist { input_count: inputs, nodes, class_outputs, temperature: 1.0 }
}

/// Bits of a binarized example as booleans.
pub fn bits_to_bools(bits: &[u8]) -> Vec<bool> {
    bits.iter().map(|&b| b != 0).collect()
}

#[cfg(test)]
mod tests;
