//! Layer graph of a deep Boolean network and its scalar forward passes.
//!
//! A model is an input layout, an ordered list of stages (plain Boolean
//! layers or two-layer skip blocks) and a voting head that pop-counts
//! contiguous per-class segments of the last layer. The batched training
//! engine lives in [`crate::engine`]; the passes here process one example and
//! serve as the reference semantics.

mod architecture;
mod sampling;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{BinarizationConfig, BinarizedImage};
use crate::error::{Error, Result};
use crate::gates::{GateOpcode, SkipConnective};

pub use architecture::{build_architecture, build_layered, parse_block_count, ArchitectureOptions};
pub use sampling::{build_flat_pairs, build_locality_pairs, PairIndexTable, SamplingMode};

/// Standard deviation of the Gaussian logit initialisation.
pub const INIT_STD: f32 = 1.0;

/// Logit given to the non-selected gates of a one-hot row. Its exponential
/// underflows to exactly zero, so the soft mixture equals the selected gate.
pub const OFF_LOGIT: f32 = -1.0e4;

/// Softmax over a logit row, computed in `F`.
pub fn softmax<F: Float, L: Copy + Into<F>>(row: &[L]) -> [F; 16] {
    let mut out = [F::zero(); 16];
    let max = row.iter().map(|&l| l.into()).fold(F::neg_infinity(), F::max);
    let mut sum = F::zero();
    for (o, &l) in out.iter_mut().zip(row) {
        *o = (l.into() - max).exp();
        sum = sum + *o;
    }
    for o in &mut out {
        *o = *o / sum;
    }
    out
}

/// Index of the largest logit, lowest index on ties.
pub fn argmax_opcode(row: &[f32]) -> GateOpcode {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    GateOpcode::new(best as u8).unwrap()
}

/// Lowest-index argmax over scores.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in scores.iter().enumerate().skip(1) {
        if v > scores[best] {
            best = j;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct BooleanLayer {
    pub in_width: usize,
    pub pairs: PairIndexTable,
    /// Row-major `out_width x 16`.
    pub logits: Vec<f32>,
}

impl BooleanLayer {
    pub fn new(in_width: usize, pairs: PairIndexTable, logits: Vec<f32>) -> Result<Self> {
        let pairs = PairIndexTable::new(pairs.pairs, in_width)?;
        if logits.len() != pairs.len() * 16 {
            return Err(Error::Shape(format!(
                "{} logits for {} nodes",
                logits.len(),
                pairs.len()
            )));
        }
        Ok(Self { in_width, pairs, logits })
    }

    /// Gaussian-initialised logits.
    pub fn init<R: Rng + ?Sized>(in_width: usize, pairs: PairIndexTable, rng: &mut R) -> Self {
        let logits = gaussian_logits(pairs.len(), rng);
        Self { in_width, pairs, logits }
    }

    /// Every node fixed to its opcode (logit 0 for it, [`OFF_LOGIT`] elsewhere).
    pub fn one_hot(in_width: usize, pairs: PairIndexTable, ops: &[GateOpcode]) -> Result<Self> {
        if ops.len() != pairs.len() {
            return Err(Error::Shape(format!("{} opcodes for {} nodes", ops.len(), pairs.len())));
        }
        let mut logits = vec![OFF_LOGIT; pairs.len() * 16];
        for (row, op) in logits.chunks_exact_mut(16).zip(ops) {
            row[op.index() as usize] = 0.0;
        }
        Self::new(in_width, pairs, logits)
    }

    pub fn out_width(&self) -> usize {
        self.pairs.len()
    }

    pub fn row(&self, o: usize) -> &[f32] {
        &self.logits[o * 16..(o + 1) * 16]
    }

    pub fn hard_opcodes(&self) -> Vec<GateOpcode> {
        self.logits.chunks_exact(16).map(argmax_opcode).collect()
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.in_width {
            return Err(Error::Shape(format!("layer expects {} inputs, got {len}", self.in_width)));
        }
        Ok(())
    }

    /// Mixture `z_o = sum_j softmax(w_o)_j * h_j(x[m1], x[m2])`.
    pub fn forward_soft<F: Float + From<f32>>(&self, x: &[F]) -> Result<Vec<F>> {
        self.check_input(x.len())?;
        Ok(self
            .pairs
            .pairs
            .iter()
            .enumerate()
            .map(|(o, &[m1, m2])| mix(self.row(o), x[m1 as usize], x[m2 as usize]))
            .collect())
    }

    pub fn forward_hard(&self, x: &[bool]) -> Result<Vec<bool>> {
        self.check_input(x.len())?;
        Ok(self
            .pairs
            .pairs
            .iter()
            .zip(self.hard_opcodes())
            .map(|(&[m1, m2], op)| op.eval_hard(x[m1 as usize], x[m2 as usize]))
            .collect())
    }
}

fn mix<F: Float + From<f32>>(row: &[f32], a: F, b: F) -> F {
    let pi: [F; 16] = softmax(row);
    GateOpcode::all().zip(pi).fold(F::zero(), |acc, (op, p)| acc + p * op.eval_soft(a, b))
}

pub(crate) fn gaussian_logits<R: Rng + ?Sized>(nodes: usize, rng: &mut R) -> Vec<f32> {
    let normal = Normal::new(0.0f32, INIT_STD).unwrap();
    (0..nodes * 16).map(|_| normal.sample(rng)).collect()
}

/// Two Boolean layers whose output is joined elementwise with the block input.
#[derive(Clone, Debug, PartialEq)]
pub struct SkipBlock {
    pub layer_a: BooleanLayer,
    pub layer_b: BooleanLayer,
    /// `None` makes a plain two-layer block without a skip connection.
    pub connective: Option<SkipConnective>,
    /// `width x 16` logits for [`SkipConnective::Learned`].
    pub learned: Option<Vec<f32>>,
}

impl SkipBlock {
    pub fn new(
        layer_a: BooleanLayer,
        layer_b: BooleanLayer,
        connective: Option<SkipConnective>,
        learned: Option<Vec<f32>>,
    ) -> Result<Self> {
        if layer_b.in_width != layer_a.out_width() {
            return Err(Error::Shape(format!(
                "block layers {} -> {} do not chain",
                layer_a.out_width(),
                layer_b.in_width
            )));
        }
        if connective.is_some() && layer_b.out_width() != layer_a.in_width {
            return Err(Error::Shape(format!(
                "skip operands differ: input {} vs output {}",
                layer_a.in_width,
                layer_b.out_width()
            )));
        }
        let wants_learned = connective == Some(SkipConnective::Learned);
        match (&learned, wants_learned) {
            (Some(l), true) if l.len() == layer_b.out_width() * 16 => {}
            (None, false) => {}
            _ => return Err(Error::Shape("learned connective logits missing or misshaped".into())),
        }
        Ok(Self { layer_a, layer_b, connective, learned })
    }

    pub fn in_width(&self) -> usize {
        self.layer_a.in_width
    }

    pub fn out_width(&self) -> usize {
        self.layer_b.out_width()
    }

    /// Gates spent on the elementwise connective.
    pub fn connective_gates(&self) -> usize {
        if self.connective.is_some() {
            self.out_width()
        } else {
            0
        }
    }

    pub fn hard_connectives(&self) -> Vec<GateOpcode> {
        match (self.connective, &self.learned) {
            (Some(SkipConnective::Learned), Some(l)) => l.chunks_exact(16).map(argmax_opcode).collect(),
            (Some(c), _) => vec![c.opcode().unwrap(); self.out_width()],
            (None, _) => Vec::new(),
        }
    }

    pub fn forward_soft<F: Float + From<f32>>(&self, x: &[F]) -> Result<Vec<F>> {
        let trace = self.trace_soft(x)?;
        Ok(trace.into_iter().last().unwrap())
    }

    pub fn forward_hard(&self, x: &[bool]) -> Result<Vec<bool>> {
        let trace = self.trace_hard(x)?;
        Ok(trace.into_iter().last().unwrap())
    }

    fn trace_soft<F: Float + From<f32>>(&self, x: &[F]) -> Result<Vec<Vec<F>>> {
        let h = self.layer_a.forward_soft(x)?;
        let u = self.layer_b.forward_soft(&h)?;
        let mut out = vec![h];
        if let Some(c) = self.connective {
            let joined = match (c.opcode(), &self.learned) {
                (Some(op), _) => x.iter().zip(&u).map(|(&xi, &ui)| op.eval_soft(xi, ui)).collect(),
                (None, Some(l)) => x
                    .iter()
                    .zip(&u)
                    .zip(l.chunks_exact(16))
                    .map(|((&xi, &ui), row)| mix(row, xi, ui))
                    .collect(),
                (None, None) => unreachable!("validated at construction"),
            };
            out.push(u);
            out.push(joined);
        } else {
            out.push(u);
        }
        Ok(out)
    }

    fn trace_hard(&self, x: &[bool]) -> Result<Vec<Vec<bool>>> {
        let h = self.layer_a.forward_hard(x)?;
        let u = self.layer_b.forward_hard(&h)?;
        let mut out = vec![h];
        if self.connective.is_some() {
            let joined = x
                .iter()
                .zip(&u)
                .zip(self.hard_connectives())
                .map(|((&xi, &ui), op)| op.eval_hard(xi, ui))
                .collect();
            out.push(u);
            out.push(joined);
        } else {
            out.push(u);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Stage {
    Layer(BooleanLayer),
    Skip(SkipBlock),
}

impl Stage {
    pub fn in_width(&self) -> usize {
        match self {
            Stage::Layer(l) => l.in_width,
            Stage::Skip(b) => b.in_width(),
        }
    }

    pub fn out_width(&self) -> usize {
        match self {
            Stage::Layer(l) => l.out_width(),
            Stage::Skip(b) => b.out_width(),
        }
    }
}

/// Pop-count voting over contiguous class segments, scaled by `1 / temperature`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VotingHead {
    pub class_count: usize,
    pub per_class_width: usize,
    pub temperature: f64,
}

impl VotingHead {
    pub fn new(class_count: usize, input_width: usize, temperature: f64) -> Result<Self> {
        if class_count == 0 || !input_width.is_multiple_of(class_count) {
            return Err(Error::Config(format!(
                "voting width {input_width} is not divisible by {class_count} classes"
            )));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
        }
        Ok(Self { class_count, per_class_width: input_width / class_count, temperature })
    }

    pub fn input_width(&self) -> usize {
        self.class_count * self.per_class_width
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.input_width() {
            return Err(Error::Config(format!(
                "voting head over {} classes x {} cannot take {len} values",
                self.class_count, self.per_class_width
            )));
        }
        Ok(())
    }

    pub fn scores_soft<F: Float>(&self, x: &[F]) -> Result<Vec<f64>> {
        self.check(x.len())?;
        Ok(x
            .chunks_exact(self.per_class_width)
            .map(|seg| seg.iter().map(|v| v.to_f64().unwrap()).sum::<f64>() / self.temperature)
            .collect())
    }

    pub fn scores_hard(&self, x: &[bool]) -> Result<Vec<f64>> {
        self.check(x.len())?;
        Ok(x
            .chunks_exact(self.per_class_width)
            .map(|seg| seg.iter().filter(|&&b| b).count() as f64 / self.temperature)
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkModel {
    pub name: String,
    /// `(channels, thresholds, height, width)` of the binarized input.
    pub input_shape: [usize; 4],
    pub binarization: BinarizationConfig,
    pub sampling: SamplingMode,
    pub stages: Vec<Stage>,
    pub head: VotingHead,
    pub seed: u64,
}

impl NetworkModel {
    pub fn new(
        name: String,
        input_shape: [usize; 4],
        binarization: BinarizationConfig,
        sampling: SamplingMode,
        stages: Vec<Stage>,
        head: VotingHead,
        seed: u64,
    ) -> Result<Self> {
        let model = Self { name, input_shape, binarization, sampling, stages, head, seed };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let mut width = self.input_width();
        if self.stages.is_empty() {
            return Err(Error::Config("model has no layers".into()));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.in_width() != width {
                return Err(Error::Shape(format!(
                    "stage {i} expects {} inputs but receives {width}",
                    s.in_width()
                )));
            }
            width = s.out_width();
        }
        if width != self.head.input_width() {
            return Err(Error::Shape(format!(
                "voting head takes {} values, last layer yields {width}",
                self.head.input_width()
            )));
        }
        for l in self.layers() {
            if l.logits.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("non-finite logits".into()));
            }
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn class_count(&self) -> usize {
        self.head.class_count
    }

    /// Boolean layers in forward order (skip blocks contribute two).
    pub fn layers(&self) -> impl Iterator<Item = &BooleanLayer> {
        self.stages.iter().flat_map(|s| match s {
            Stage::Layer(l) => vec![l],
            Stage::Skip(b) => vec![&b.layer_a, &b.layer_b],
        })
    }

    /// `sum_l d_l` over Boolean layers, excluding skip connectives.
    pub fn gate_count(&self) -> usize {
        self.layers().map(|l| l.out_width()).sum()
    }

    pub fn skip_gate_count(&self) -> usize {
        self.stages
            .iter()
            .map(|s| match s {
                Stage::Skip(b) => b.connective_gates(),
                _ => 0,
            })
            .sum()
    }

    /// Layer output widths in forward order, skip connectives excluded.
    pub fn layer_widths(&self) -> Vec<usize> {
        self.layers().map(|l| l.out_width()).collect()
    }

    /// Trainable logit groups in a fixed order: each layer, then a block's
    /// learned connective after its two layers.
    pub fn param_groups(&self) -> Vec<&[f32]> {
        let mut out = Vec::new();
        for s in &self.stages {
            match s {
                Stage::Layer(l) => out.push(l.logits.as_slice()),
                Stage::Skip(b) => {
                    out.push(b.layer_a.logits.as_slice());
                    out.push(b.layer_b.logits.as_slice());
                    if let Some(l) = &b.learned {
                        out.push(l.as_slice());
                    }
                }
            }
        }
        out
    }

    pub fn param_groups_mut(&mut self) -> Vec<&mut Vec<f32>> {
        let mut out = Vec::new();
        for s in &mut self.stages {
            match s {
                Stage::Layer(l) => out.push(&mut l.logits),
                Stage::Skip(b) => {
                    out.push(&mut b.layer_a.logits);
                    out.push(&mut b.layer_b.logits);
                    if let Some(l) = &mut b.learned {
                        out.push(l);
                    }
                }
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_groups().iter().map(|g| g.len()).sum()
    }

    fn check_image(&self, img: &BinarizedImage) -> Result<()> {
        if img.shape() != self.input_shape {
            return Err(Error::Shape(format!(
                "image shape {:?} does not match model input {:?}",
                img.shape(),
                self.input_shape
            )));
        }
        Ok(())
    }

    /// Outputs of every gate layer (skip connectives included) for one input.
    pub fn trace_soft<F: Float + From<f32>>(&self, x: &[F]) -> Result<Vec<Vec<F>>> {
        let mut out: Vec<Vec<F>> = Vec::new();
        for s in &self.stages {
            let input = out.last().map(|v| v.as_slice()).unwrap_or(x);
            match s {
                Stage::Layer(l) => {
                    let y = l.forward_soft(input)?;
                    out.push(y);
                }
                Stage::Skip(b) => {
                    let t = b.trace_soft(input)?;
                    out.extend(t);
                }
            }
        }
        Ok(out)
    }

    pub fn trace_hard(&self, x: &[bool]) -> Result<Vec<Vec<bool>>> {
        let mut out: Vec<Vec<bool>> = Vec::new();
        for s in &self.stages {
            let input = out.last().map(|v| v.as_slice()).unwrap_or(x);
            match s {
                Stage::Layer(l) => {
                    let y = l.forward_hard(input)?;
                    out.push(y);
                }
                Stage::Skip(b) => {
                    let t = b.trace_hard(input)?;
                    out.extend(t);
                }
            }
        }
        Ok(out)
    }

    pub fn scores(&self, img: &BinarizedImage, hard: bool) -> Result<Vec<f64>> {
        self.check_image(img)?;
        if hard {
            let x: Vec<bool> = img.bits.iter().map(|&b| b == 1).collect();
            let trace = self.trace_hard(&x)?;
            self.head.scores_hard(trace.last().unwrap())
        } else {
            let x: Vec<f64> = img.bits.iter().map(|&b| b as f64).collect();
            let trace = self.trace_soft(&x)?;
            self.head.scores_soft(trace.last().unwrap())
        }
    }

    /// Class label by lowest-index argmax of the voting scores.
    pub fn predict(&self, img: &BinarizedImage, hard: bool) -> Result<u32> {
        Ok(argmax(&self.scores(img, hard)?) as u32)
    }

    /// Replaces every logit row with a one-hot row on its current argmax.
    pub fn harden_logits(&mut self) {
        for g in self.param_groups_mut() {
            for row in g.chunks_exact_mut(16) {
                let op = argmax_opcode(row).index() as usize;
                row.iter_mut().enumerate().for_each(|(j, v)| *v = if j == op { 0.0 } else { OFF_LOGIT });
            }
        }
    }
}

pub fn layer_forward_soft<F: Float + From<f32>>(layer: &BooleanLayer, x: &[F]) -> Result<Vec<F>> {
    layer.forward_soft(x)
}

pub fn layer_forward_hard(layer: &BooleanLayer, x: &[bool]) -> Result<Vec<bool>> {
    layer.forward_hard(x)
}

pub fn skip_forward<F: Float + From<f32>>(block: &SkipBlock, x: &[F], hard: bool) -> Result<Vec<F>> {
    if x.len() != block.in_width() {
        return Err(Error::Shape(format!("block expects {} inputs, got {}", block.in_width(), x.len())));
    }
    if hard {
        let bits: Vec<bool> = x.iter().map(|&v| v > <F as From<f32>>::from(0.5f32)).collect();
        Ok(block
            .forward_hard(&bits)?
            .into_iter()
            .map(|b| if b { F::one() } else { F::zero() })
            .collect())
    } else {
        block.forward_soft(x)
    }
}

pub fn voting_forward<F: Float>(head: &VotingHead, x: &[F], hard: bool) -> Result<Vec<f64>> {
    if hard {
        let bits: Vec<bool> = x.iter().map(|&v| v > F::from(0.5f32).unwrap()).collect();
        head.scores_hard(&bits)
    } else {
        head.scores_soft(x)
    }
}

pub fn predict(model: &NetworkModel, img: &BinarizedImage, hard: bool) -> Result<u32> {
    model.predict(img, hard)
}

#[cfg(test)]
pub(crate) mod tests;
