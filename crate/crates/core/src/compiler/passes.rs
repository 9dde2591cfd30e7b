use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use super::{GateNetlist, NetNode, NetRef};
use crate::error::{Error, Result};
use crate::gates::{GateOpcode, InputSide};

/// Semantics-preserving netlist rewrites.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pass {
    /// Constant gates and gates with constant or duplicated fanins reduce to
    /// a constant, a pass-through or a negation.
    ConstFold,
    /// Consumers of `A`/`B` pass-through gates read the fanin directly.
    CopyProp,
    /// `NOT_A`/`NOT_B` gates fold into the opcodes of their consumers.
    NegationFold,
    /// Nodes no class group depends on are dropped.
    DeadElim,
}

impl Pass {
    pub const DEFAULT: [Pass; 4] = [Pass::ConstFold, Pass::CopyProp, Pass::NegationFold, Pass::DeadElim];

    pub fn name(self) -> &'static str {
        match self {
            Pass::ConstFold => "const_fold",
            Pass::CopyProp => "copy_prop",
            Pass::NegationFold => "negation_fold",
            Pass::DeadElim => "dead_elim",
        }
    }

    /// Parses a comma-separated list; `none` is the empty list and `default`
    /// the standard pipeline.
    pub fn parse_list(s: &str) -> Result<Vec<Pass>> {
        let s = s.trim();
        match s {
            "" | "none" => return Ok(Vec::new()),
            "default" | "all" => return Ok(Pass::DEFAULT.to_vec()),
            _ => {}
        }
        s.split(',').map(|t| t.trim().parse()).collect()
    }
}

impl fmt::Display for Pass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "const_fold" => Pass::ConstFold,
            "copy_prop" => Pass::CopyProp,
            "negation_fold" => Pass::NegationFold,
            "dead_elim" => Pass::DeadElim,
            _ => return Err(Error::Config(format!("unknown pass `{s}`"))),
        })
    }
}

enum Emit {
    Keep(NetNode),
    Alias(NetRef),
    Drop,
}

/// Rebuilds the netlist node by node. `f` sees each node with fanins already
/// remapped, plus the nodes emitted so far.
fn rewrite(net: &GateNetlist, mut f: impl FnMut(usize, NetNode, &[NetNode]) -> Emit) -> GateNetlist {
    let mut repl: Vec<NetRef> = Vec::with_capacity(net.nodes.len());
    let mut nodes = Vec::with_capacity(net.nodes.len());
    let map = |r: NetRef, repl: &[NetRef]| match r {
        NetRef::Node(k) => repl[k as usize],
        other => other,
    };
    for (k, n) in net.nodes.iter().enumerate() {
        let n = NetNode { op: n.op, a: map(n.a, &repl), b: map(n.b, &repl) };
        let r = match f(k, n, &nodes) {
            Emit::Keep(n) => {
                nodes.push(n);
                NetRef::Node(nodes.len() as u32 - 1)
            }
            Emit::Alias(r) => r,
            // Only dead nodes are dropped, so nothing reads this placeholder.
            Emit::Drop => NetRef::Const(false),
        };
        repl.push(r);
    }
    let class_outputs = net
        .class_outputs
        .iter()
        .map(|g| g.iter().map(|&r| map(r, &repl)).collect())
        .collect();
    GateNetlist { input_count: net.input_count, nodes, class_outputs, temperature: net.temperature }
}

/// A one-argument Boolean function `(f(0), f(1))` of `x` as a netlist value.
fn unary(f: (bool, bool), x: NetRef) -> Emit {
    match f {
        (false, false) => Emit::Alias(NetRef::Const(false)),
        (true, true) => Emit::Alias(NetRef::Const(true)),
        (false, true) => Emit::Alias(x),
        (true, false) => match x {
            NetRef::Const(v) => Emit::Alias(NetRef::Const(!v)),
            _ => Emit::Keep(NetNode { op: GateOpcode::NOT_A, a: x, b: x }),
        },
    }
}

fn const_fold(n: NetNode) -> Emit {
    let op = n.op;
    if !op.depends_on_a() && !op.depends_on_b() {
        return Emit::Alias(NetRef::Const(op.eval_hard(false, false)));
    }
    match (n.a, n.b) {
        (NetRef::Const(a), NetRef::Const(b)) => Emit::Alias(NetRef::Const(op.eval_hard(a, b))),
        (NetRef::Const(a), b) => unary(op.restrict_a(a), b),
        (a, NetRef::Const(b)) => unary(op.restrict_b(b), a),
        (a, b) if a == b => unary((op.eval_hard(false, false), op.eval_hard(true, true)), a),
        _ => Emit::Keep(n),
    }
}

fn copy_prop(n: NetNode) -> Emit {
    match n.op {
        GateOpcode::A => Emit::Alias(n.a),
        GateOpcode::B => Emit::Alias(n.b),
        _ => Emit::Keep(n),
    }
}

/// The operand negated by a `NOT_A`/`NOT_B` node.
fn negated(r: NetRef, nodes: &[NetNode]) -> Option<NetRef> {
    let NetRef::Node(k) = r else { return None };
    let src = nodes[k as usize];
    match src.op {
        GateOpcode::NOT_A => Some(src.a),
        GateOpcode::NOT_B => Some(src.b),
        _ => None,
    }
}

fn negation_fold(mut n: NetNode, nodes: &[NetNode]) -> Emit {
    // A negation of a negation collapses to the original operand.
    if n.op == GateOpcode::NOT_A || n.op == GateOpcode::NOT_B {
        let x = if n.op == GateOpcode::NOT_A { n.a } else { n.b };
        return match negated(x, nodes) {
            Some(inner) => Emit::Alias(inner),
            None => Emit::Keep(n),
        };
    }
    if n.op.depends_on_a() {
        if let Some(x) = negated(n.a, nodes) {
            n.op = n.op.negate_input(InputSide::A);
            n.a = x;
        }
    }
    if n.op.depends_on_b() {
        if let Some(y) = negated(n.b, nodes) {
            n.op = n.op.negate_input(InputSide::B);
            n.b = y;
        }
    }
    Emit::Keep(n)
}

fn live_nodes(net: &GateNetlist) -> Vec<bool> {
    let mut live = vec![false; net.nodes.len()];
    for r in net.class_outputs.iter().flatten() {
        if let NetRef::Node(k) = r {
            live[*k as usize] = true;
        }
    }
    for k in (0..net.nodes.len()).rev() {
        if !live[k] {
            continue;
        }
        let n = net.nodes[k];
        for (r, used) in [(n.a, n.op.depends_on_a()), (n.b, n.op.depends_on_b())] {
            if let (NetRef::Node(j), true) = (r, used) {
                live[j as usize] = true;
            }
        }
    }
    live
}

/// Applies one pass once.
pub fn run_pass(net: &GateNetlist, pass: Pass) -> GateNetlist {
    match pass {
        Pass::ConstFold => rewrite(net, |_, n, _| const_fold(n)),
        Pass::CopyProp => rewrite(net, |_, n, _| copy_prop(n)),
        Pass::NegationFold => rewrite(net, |_, n, nodes| negation_fold(n, nodes)),
        Pass::DeadElim => {
            let live = live_nodes(net);
            rewrite(net, |k, mut n, _| {
                if !live[k] {
                    return Emit::Drop;
                }
                // Fanins the opcode ignores may point at dropped nodes.
                if !n.op.depends_on_a() {
                    n.a = n.b;
                }
                if !n.op.depends_on_b() {
                    n.b = n.a;
                }
                Emit::Keep(n)
            })
        }
    }
}

/// Runs `passes` in order, repeating the sequence until the netlist stops
/// changing.
pub fn optimize(net: &GateNetlist, passes: &[Pass]) -> GateNetlist {
    let mut cur = net.clone();
    if passes.is_empty() {
        return cur;
    }
    for _ in 0..=net.nodes.len() {
        let mut next = cur.clone();
        for &p in passes {
            next = run_pass(&next, p);
        }
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}
