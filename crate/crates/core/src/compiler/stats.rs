use alloc::vec;

use super::{GateNetlist, NetRef};
use crate::gates::GateOpcode;

#[derive(Clone, Debug, PartialEq)]
pub struct NetlistStats {
    pub input_count: usize,
    pub node_count: usize,
    pub class_count: usize,
    /// Class-group members, i.e. bits summed by the voting stage.
    pub vote_inputs: usize,
    /// Longest path from an input to a class-group member, in gates.
    pub depth: usize,
    pub opcode_histogram: [usize; 16],
    /// Word-level logic instructions per evaluation of the netlist.
    pub bit_ops: usize,
    /// Nonzero fraction of the dense one-hot weight tensor a node would need
    /// to pick its pair and gate from the `d` values one level below it,
    /// `1 / (d^2 * 16)`, averaged over nodes. It describes sparsity of the
    /// equivalent dense weights, not netlist size.
    pub density_ratio: f64,
}

/// Word instructions for one gate on a machine with and/or/xor/not.
fn op_cost(op: GateOpcode) -> usize {
    match op.index() {
        0 | 3 | 5 | 15 => 0,
        1 | 6 | 7 | 10 | 12 => 1,
        _ => 2,
    }
}

pub fn netlist_stats(net: &GateNetlist) -> NetlistStats {
    let d0 = net.input_count;
    let mut depth = vec![0usize; net.nodes.len()];
    let mut histogram = [0usize; 16];
    let mut bit_ops = 0;
    let level = |r: NetRef, depth: &[usize]| match r {
        NetRef::Node(k) => depth[k as usize],
        _ => 0,
    };
    for (k, n) in net.nodes.iter().enumerate() {
        let da = if n.op.depends_on_a() { level(n.a, &depth) } else { 0 };
        let db = if n.op.depends_on_b() { level(n.b, &depth) } else { 0 };
        depth[k] = 1 + da.max(db);
        histogram[n.op.index() as usize] += 1;
        bit_ops += op_cost(n.op);
    }
    let max_depth = depth.iter().copied().max().unwrap_or(0);
    let mut per_level = vec![0usize; max_depth + 1];
    per_level[0] = d0;
    for &l in &depth {
        per_level[l] += 1;
    }
    let density_sum: f64 = depth
        .iter()
        .map(|&l| {
            let d = per_level[l - 1].max(1) as f64;
            1.0 / (d * d * 16.0)
        })
        .sum();
    let out_depth = net
        .class_outputs
        .iter()
        .flatten()
        .map(|&r| level(r, &depth))
        .max()
        .unwrap_or(0);
    NetlistStats {
        input_count: d0,
        node_count: net.nodes.len(),
        class_count: net.class_outputs.len(),
        vote_inputs: net.class_outputs.iter().map(|g| g.len()).sum(),
        depth: out_depth,
        opcode_histogram: histogram,
        bit_ops,
        density_ratio: if net.nodes.is_empty() { 0.0 } else { density_sum / net.nodes.len() as f64 },
    }
}
