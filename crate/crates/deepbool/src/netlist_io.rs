//! Netlist exchange formats.
//!
//! `compact`: magic `BNLC`, version u16, input count u32, node count u32,
//! class count u16, temperature f64, then the opcodes packed two per byte
//! (low nibble first), then two unsigned LEB128 refs per node, then each
//! class group as a LEB128 length followed by its refs. A ref is 0 or 1 for
//! the constants, `2 + i` for input `i` and `2 + inputs + k` for node `k`.
//!
//! `text`: one declaration line `inputs <d> temperature <z>`, one line
//! `n<k> = <OPNAME>(<ref>, <ref>)` per node and one line
//! `class<c> = <ref>, ...` per class group. Refs are `0`, `1`, `i<k>`, `n<k>`.

use std::fmt::Write as _;
use std::str::FromStr;

use deepbool_core::{GateNetlist, GateOpcode, NetNode, NetRef};

use crate::bytes::{Reader, Writer};
use crate::error::{Error, Result};

pub const NETLIST_MAGIC: [u8; 4] = *b"BNLC";
pub const NETLIST_VERSION: u16 = 1;
/// Magic, version, input count, node count, class count, temperature.
pub const COMPACT_HEADER_LEN: usize = 4 + 2 + 4 + 4 + 2 + 8;
const WHAT: &str = "compact netlist";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetlistFormat {
    Compact,
    Text,
}

impl FromStr for NetlistFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "compact" | "compact_binary" | "binary" => Ok(NetlistFormat::Compact),
            "text" | "text_netlist" => Ok(NetlistFormat::Text),
            _ => Err(Error::config("format", format!("unknown netlist format `{s}`"))),
        }
    }
}

fn ref_code(r: NetRef, inputs: usize) -> u64 {
    match r {
        NetRef::Const(b) => b as u64,
        NetRef::Input(i) => 2 + i as u64,
        NetRef::Node(k) => 2 + inputs as u64 + k as u64,
    }
}

fn code_ref(c: u64, inputs: usize) -> NetRef {
    match c {
        0 | 1 => NetRef::Const(c == 1),
        c if c < 2 + inputs as u64 => NetRef::Input((c - 2) as u32),
        c => NetRef::Node((c - 2 - inputs as u64) as u32),
    }
}

pub fn export_compact(net: &GateNetlist) -> Vec<u8> {
    let d = net.input_count;
    let mut w = Writer::default();
    w.0.extend(NETLIST_MAGIC);
    w.u16(NETLIST_VERSION);
    w.len_u32(d);
    w.len_u32(net.nodes.len());
    w.u16(u16::try_from(net.class_outputs.len()).expect("class count exceeds u16"));
    w.f64(net.temperature);
    for pair in net.nodes.chunks(2) {
        let hi = pair.get(1).map_or(0, |n| n.op.index());
        w.u8(pair[0].op.index() | (hi << 4));
    }
    for n in &net.nodes {
        w.leb128(ref_code(n.a, d));
        w.leb128(ref_code(n.b, d));
    }
    for g in &net.class_outputs {
        w.leb128(g.len() as u64);
        g.iter().for_each(|&r| w.leb128(ref_code(r, d)));
    }
    w.0
}

pub fn import_compact(bytes: &[u8]) -> Result<GateNetlist> {
    if bytes.len() < 4 || bytes[..4] != NETLIST_MAGIC {
        return Err(Error::format(WHAT, "missing BNLC magic"));
    }
    let mut r = Reader::new(&bytes[4..], WHAT);
    let version = r.u16()?;
    if version != NETLIST_VERSION {
        return Err(Error::Version { what: WHAT, found: version, expected: NETLIST_VERSION });
    }
    let d = r.u32()? as usize;
    let n = r.u32()? as usize;
    let classes = r.u16()? as usize;
    let temperature = r.f64()?;
    let ops: Vec<GateOpcode> = r
        .take(n.div_ceil(2))?
        .iter()
        .flat_map(|b| [b & 0x0f, b >> 4])
        .take(n)
        .map(|o| GateOpcode::new(o).unwrap())
        .collect();
    let mut nodes = Vec::with_capacity(n);
    for op in ops {
        let a = code_ref(r.leb128()?, d);
        let b = code_ref(r.leb128()?, d);
        nodes.push(NetNode { op, a, b });
    }
    let mut class_outputs = Vec::with_capacity(classes);
    for _ in 0..classes {
        let len = r.leb128()? as usize;
        if len > r.remaining() {
            return Err(Error::Truncated { what: WHAT, expected: r.position() + len, found: bytes.len() - 4 });
        }
        class_outputs.push((0..len).map(|_| Ok(code_ref(r.leb128()?, d))).collect::<Result<Vec<_>>>()?);
    }
    if r.remaining() != 0 {
        return Err(Error::format(WHAT, format!("{} trailing bytes", r.remaining())));
    }
    let net = GateNetlist { input_count: d, nodes, class_outputs, temperature };
    net.validate()?;
    Ok(net)
}

fn ref_text(r: NetRef) -> String {
    match r {
        NetRef::Const(b) => (b as u8).to_string(),
        NetRef::Input(i) => format!("i{i}"),
        NetRef::Node(k) => format!("n{k}"),
    }
}

pub fn export_text(net: &GateNetlist) -> String {
    let mut s = format!("inputs {} temperature {}\n", net.input_count, net.temperature);
    for (k, n) in net.nodes.iter().enumerate() {
        writeln!(s, "n{k} = {}({}, {})", n.op.name(), ref_text(n.a), ref_text(n.b)).unwrap();
    }
    for (c, g) in net.class_outputs.iter().enumerate() {
        let refs: Vec<String> = g.iter().map(|&r| ref_text(r)).collect();
        writeln!(s, "class{c} = {}", refs.join(", ")).unwrap();
    }
    s
}

fn text_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::format("text netlist", format!("line {}: {msg}", line + 1))
}

fn parse_ref(tok: &str, line: usize) -> Result<NetRef> {
    let tok = tok.trim();
    let num = |s: &str| s.parse::<u32>().map_err(|_| text_err(line, format!("bad ref `{tok}`")));
    match tok {
        "0" => Ok(NetRef::Const(false)),
        "1" => Ok(NetRef::Const(true)),
        _ if tok.starts_with('i') => Ok(NetRef::Input(num(&tok[1..])?)),
        _ if tok.starts_with('n') => Ok(NetRef::Node(num(&tok[1..])?)),
        _ => Err(text_err(line, format!("bad ref `{tok}`"))),
    }
}

pub fn import_text(text: &str) -> Result<GateNetlist> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| text_err(0, "empty netlist"))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    let (input_count, temperature) = match parts.as_slice() {
        ["inputs", d, "temperature", z] => (
            d.parse().map_err(|_| text_err(0, "bad input count"))?,
            z.parse().map_err(|_| text_err(0, "bad temperature"))?,
        ),
        _ => return Err(text_err(0, "expected `inputs <d> temperature <z>`")),
    };
    let mut nodes = Vec::new();
    let mut class_outputs = Vec::new();
    for (i, line) in lines {
        let (lhs, rhs) = line.split_once('=').ok_or_else(|| text_err(i, "missing `=`"))?;
        let (lhs, rhs) = (lhs.trim(), rhs.trim());
        if let Some(c) = lhs.strip_prefix("class") {
            if c.parse::<usize>().ok() != Some(class_outputs.len()) {
                return Err(text_err(i, format!("expected class{}", class_outputs.len())));
            }
            let refs = if rhs.is_empty() { Ok(Vec::new()) } else { rhs.split(',').map(|t| parse_ref(t, i)).collect() };
            class_outputs.push(refs?);
        } else if let Some(k) = lhs.strip_prefix('n') {
            if k.parse::<usize>().ok() != Some(nodes.len()) || !class_outputs.is_empty() {
                return Err(text_err(i, format!("expected n{} before class groups", nodes.len())));
            }
            let (name, args) = rhs.split_once('(').ok_or_else(|| text_err(i, "missing `(`"))?;
            let args = args.strip_suffix(')').ok_or_else(|| text_err(i, "missing `)`"))?;
            let op: GateOpcode = name.trim().parse().map_err(|e| text_err(i, e))?;
            let (a, b) = args.split_once(',').ok_or_else(|| text_err(i, "expected two operands"))?;
            nodes.push(NetNode { op, a: parse_ref(a, i)?, b: parse_ref(b, i)? });
        } else {
            return Err(text_err(i, format!("unexpected `{lhs}`")));
        }
    }
    let net = GateNetlist { input_count, nodes, class_outputs, temperature };
    net.validate()?;
    Ok(net)
}

pub fn export_netlist(net: &GateNetlist, format: NetlistFormat) -> Vec<u8> {
    match format {
        NetlistFormat::Compact => export_compact(net),
        NetlistFormat::Text => export_text(net).into_bytes(),
    }
}

/// Imports either format, recognising the compact magic.
pub fn import_netlist(bytes: &[u8]) -> Result<GateNetlist> {
    if bytes.starts_with(&NETLIST_MAGIC) {
        import_compact(bytes)
    } else {
        let text = std::str::from_utf8(bytes).map_err(|_| Error::format("netlist", "neither BNLC nor UTF-8 text"))?;
        import_text(text)
    }
}
