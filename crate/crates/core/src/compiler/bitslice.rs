use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{argmax_counts, GateNetlist, NetRef};
use crate::error::{Error, Result};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Examples packed per machine word.
pub const LANES: usize = 64;

/// Up to 64 examples, transposed so that word `i` holds input bit `i` of
/// every example; example `j` occupies bit `j` (little-endian lane order).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitSliceBatch {
    pub lanes: usize,
    pub words: Vec<u64>,
}

impl BitSliceBatch {
    pub fn pack(examples: &[&[u8]]) -> Result<Self> {
        if examples.is_empty() || examples.len() > LANES {
            return Err(Error::Shape(format!("{} examples do not fit 1..={LANES} lanes", examples.len())));
        }
        let d = examples[0].len();
        let mut words = vec![0u64; d];
        for (lane, x) in examples.iter().enumerate() {
            if x.len() != d {
                return Err(Error::Shape(format!("example of {} bits in a batch of {d}-bit examples", x.len())));
            }
            for (w, &bit) in words.iter_mut().zip(x.iter()) {
                *w |= ((bit != 0) as u64) << lane;
            }
        }
        Ok(Self { lanes: examples.len(), words })
    }

    pub fn input_count(&self) -> usize {
        self.words.len()
    }

    fn mask(&self) -> u64 {
        if self.lanes == LANES {
            !0
        } else {
            (1u64 << self.lanes) - 1
        }
    }
}

#[inline]
fn fetch(r: NetRef, inputs: &[u64], vals: &[u64]) -> u64 {
    match r {
        NetRef::Const(false) => 0,
        NetRef::Const(true) => !0,
        NetRef::Input(i) => inputs[i as usize],
        NetRef::Node(k) => vals[k as usize],
    }
}

/// Per-lane pop-count of every class group, `[class][lane]`.
pub fn scores_bitsliced(net: &GateNetlist, batch: &BitSliceBatch) -> Result<Vec<Vec<u32>>> {
    if batch.input_count() != net.input_count {
        return Err(Error::Shape(format!(
            "batch has {} input bits, netlist expects {}",
            batch.input_count(),
            net.input_count
        )));
    }
    let mut vals = Vec::with_capacity(net.nodes.len());
    for n in &net.nodes {
        let a = fetch(n.a, &batch.words, &vals);
        let b = fetch(n.b, &batch.words, &vals);
        vals.push(n.op.eval_word(a, b));
    }
    let mask = batch.mask();
    let mut out = Vec::with_capacity(net.class_outputs.len());
    let mut counter: Vec<u64> = Vec::new();
    for group in &net.class_outputs {
        // Carry-save counter: counter[k] holds bit k of every lane's count.
        counter.clear();
        for &r in group {
            let mut carry = fetch(r, &batch.words, &vals) & mask;
            for bit in counter.iter_mut() {
                if carry == 0 {
                    break;
                }
                let next = *bit & carry;
                *bit ^= carry;
                carry = next;
            }
            if carry != 0 {
                counter.push(carry);
            }
        }
        let counts = (0..batch.lanes)
            .map(|lane| {
                counter
                    .iter()
                    .enumerate()
                    .map(|(k, w)| (((w >> lane) & 1) as u32) << k)
                    .sum()
            })
            .collect();
        out.push(counts);
    }
    Ok(out)
}

/// Class labels of the batch lanes, lowest index on ties.
pub fn eval_bitsliced(net: &GateNetlist, batch: &BitSliceBatch) -> Result<Vec<u32>> {
    let scores = scores_bitsliced(net, batch)?;
    Ok((0..batch.lanes).map(|lane| argmax_counts(scores.iter().map(|s| s[lane]))).collect())
}

/// Labels for any number of examples, 64 at a time.
pub fn eval_many(net: &GateNetlist, examples: &[&[u8]]) -> Result<Vec<u32>> {
    let run = |chunk: &[&[u8]]| BitSliceBatch::pack(chunk).and_then(|b| eval_bitsliced(net, &b));
    #[cfg(feature = "parallel")]
    let parts: Vec<Result<Vec<u32>>> = examples.par_chunks(LANES).map(run).collect();
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Result<Vec<u32>>> = examples.chunks(LANES).map(run).collect();
    let mut labels = Vec::with_capacity(examples.len());
    for p in parts {
        labels.extend(p?);
    }
    Ok(labels)
}
