//! Batched soft forward and exact backward passes.
//!
//! Activations are stored lane-major: node `o` of a layer owns the contiguous
//! slice `[o * lanes, (o + 1) * lanes)`, one lane per example of the batch.
//! Every relaxed gate is bilinear, so a softmax mixture over the 16 gates is
//! itself `c0 + ca*a + cb*b + cab*a*b` with coefficients that are
//! `pi`-weighted sums of the per-gate ones. The forward pass evaluates that
//! form; the backward pass pushes gradients through it and through the
//! softmax to the logits.
//!
//! Logits are read through `params`, a slice of groups in
//! [`NetworkModel::param_groups`] order, so callers can evaluate the network
//! at logits other than the stored `f32` ones (the gradient checks run
//! entirely in `f64`).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::gates::{GateOpcode, SkipConnective};
use crate::network::{softmax, NetworkModel, Stage, VotingHead};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Scalar type of activations and gradients.
pub trait Real: Float + From<f32> + Send + Sync + core::fmt::Debug + 'static {}
impl Real for f32 {}
impl Real for f64 {}

/// Storage type of logits readable as `F`.
pub trait Logit<F>: Copy + Into<F> + Send + Sync {}
impl<F, L: Copy + Into<F> + Send + Sync> Logit<F> for L {}

#[derive(Clone, Copy, Debug)]
enum Gate {
    Learned(usize),
    Fixed(GateOpcode),
}

#[derive(Clone, Copy, Debug)]
struct Step<'m> {
    src_a: usize,
    src_b: usize,
    /// `None` pairs node `i` with position `i` of both sources.
    pairs: Option<&'m [[u32; 2]]>,
    width: usize,
    gate: Gate,
}

impl Step<'_> {
    #[inline]
    fn operands(&self, o: usize) -> (usize, usize) {
        match self.pairs {
            Some(p) => (p[o][0] as usize, p[o][1] as usize),
            None => (o, o),
        }
    }
}

struct Plan<'m> {
    steps: Vec<Step<'m>>,
    head: VotingHead,
}

impl<'m> Plan<'m> {
    fn new(model: &'m NetworkModel) -> Self {
        let mut steps = Vec::new();
        let mut cur = 0;
        let mut group = 0;
        let push = |steps: &mut Vec<Step<'m>>, src_a, src_b, pairs, width, gate| {
            steps.push(Step { src_a, src_b, pairs, width, gate });
            steps.len()
        };
        for stage in &model.stages {
            match stage {
                Stage::Layer(l) => {
                    let p = Some(l.pairs.pairs.as_slice());
                    cur = push(&mut steps, cur, cur, p, l.out_width(), Gate::Learned(group));
                    group += 1;
                }
                Stage::Skip(b) => {
                    let block_in = cur;
                    let pa = Some(b.layer_a.pairs.pairs.as_slice());
                    cur = push(&mut steps, cur, cur, pa, b.layer_a.out_width(), Gate::Learned(group));
                    let pb = Some(b.layer_b.pairs.pairs.as_slice());
                    cur = push(&mut steps, cur, cur, pb, b.layer_b.out_width(), Gate::Learned(group + 1));
                    group += 2;
                    match b.connective {
                        Some(SkipConnective::Learned) => {
                            cur = push(&mut steps, block_in, cur, None, b.out_width(), Gate::Learned(group));
                            group += 1;
                        }
                        Some(c) => {
                            let op = c.opcode().unwrap();
                            cur = push(&mut steps, block_in, cur, None, b.out_width(), Gate::Fixed(op));
                        }
                        None => {}
                    }
                }
            }
        }
        Plan { steps, head: model.head }
    }
}

#[inline]
fn cast<F: Real>(x: f64) -> F {
    <F as num_traits::NumCast>::from(x).unwrap_or_else(F::nan)
}

fn gate_coeffs<F: Real>() -> [[F; 4]; 16] {
    let mut out = [[F::zero(); 4]; 16];
    for op in GateOpcode::all() {
        out[op.index() as usize] = op.bilinear_coeffs().map(cast);
    }
    out
}

/// Mixture coefficients of one node and the softmax weights behind them.
#[inline]
fn mixture<F: Real, L: Logit<F>>(row: &[L], table: &[[F; 4]; 16]) -> ([F; 4], [F; 16]) {
    let pi: [F; 16] = softmax(row);
    let mut c = [F::zero(); 4];
    for (p, t) in pi.iter().zip(table) {
        for k in 0..4 {
            c[k] = c[k] + *p * t[k];
        }
    }
    (c, pi)
}

/// Reusable activation and gradient buffers for a fixed batch size.
#[derive(Debug, Default)]
pub struct Workspace<F> {
    lanes: usize,
    acts: Vec<Vec<F>>,
    grads: Vec<Vec<F>>,
}

impl<F: Real> Workspace<F> {
    pub fn new() -> Self {
        Self { lanes: 0, acts: Vec::new(), grads: Vec::new() }
    }

    pub fn lanes(&self) -> usize {
        self.lanes
    }

    fn prepare(&mut self, input_width: usize, plan: &Plan<'_>, lanes: usize) {
        let widths = core::iter::once(input_width).chain(plan.steps.iter().map(|s| s.width));
        self.acts.resize_with(plan.steps.len() + 1, Vec::new);
        self.acts.truncate(plan.steps.len() + 1);
        for (buf, w) in self.acts.iter_mut().zip(widths) {
            buf.clear();
            buf.resize(w * lanes, F::zero());
        }
        self.lanes = lanes;
    }

    fn prepare_grads(&mut self) {
        self.grads.resize_with(self.acts.len(), Vec::new);
        self.grads.truncate(self.acts.len());
        for (g, a) in self.grads.iter_mut().zip(&self.acts) {
            g.clear();
            g.resize(a.len(), F::zero());
        }
    }

    /// Output of gate layer `index` (0-based, skip connectives included) for `lane`.
    pub fn layer_output(&self, index: usize, lane: usize) -> Vec<F> {
        self.acts[index + 1].iter().skip(lane).step_by(self.lanes).copied().collect()
    }
}

fn check_params<L>(model: &NetworkModel, params: &[&[L]]) -> Result<()> {
    let expect: Vec<usize> = model.param_groups().iter().map(|g| g.len()).collect();
    let got: Vec<usize> = params.iter().map(|g| g.len()).collect();
    if expect != got {
        return Err(Error::Shape(format!("parameter groups {got:?} do not match model {expect:?}")));
    }
    Ok(())
}

/// Soft forward of a batch of bit vectors through every layer.
pub fn forward<F: Real, L: Logit<F>>(
    model: &NetworkModel,
    params: &[&[L]],
    inputs: &[&[u8]],
    ws: &mut Workspace<F>,
) -> Result<()> {
    check_params(model, params)?;
    if inputs.is_empty() {
        return Err(Error::Empty);
    }
    let d0 = model.input_width();
    if let Some(x) = inputs.iter().find(|x| x.len() != d0) {
        return Err(Error::Shape(format!("input of {} bits, model expects {d0}", x.len())));
    }
    let plan = Plan::new(model);
    let lanes = inputs.len();
    ws.prepare(d0, &plan, lanes);
    let input = &mut ws.acts[0];
    for (lane, x) in inputs.iter().enumerate() {
        for (i, &bit) in x.iter().enumerate() {
            input[i * lanes + lane] = if bit != 0 { F::one() } else { F::zero() };
        }
    }
    let table = gate_coeffs::<F>();
    for (s, step) in plan.steps.iter().enumerate() {
        let (done, rest) = ws.acts.split_at_mut(s + 1);
        let out = &mut rest[0];
        let src_a = &done[step.src_a];
        let src_b = &done[step.src_b];
        let coeff = |o: usize| match step.gate {
            Gate::Learned(g) => mixture(&params[g][o * 16..(o + 1) * 16], &table).0,
            Gate::Fixed(op) => table[op.index() as usize],
        };
        let node = |(o, out): (usize, &mut [F])| {
            let (m1, m2) = step.operands(o);
            let a = &src_a[m1 * lanes..(m1 + 1) * lanes];
            let b = &src_b[m2 * lanes..(m2 + 1) * lanes];
            let [c0, ca, cb, cab] = coeff(o);
            for ((z, &x), &y) in out.iter_mut().zip(a).zip(b) {
                *z = c0 + ca * x + cb * y + cab * x * y;
            }
        };
        #[cfg(feature = "parallel")]
        out.par_chunks_mut(lanes).enumerate().for_each(node);
        #[cfg(not(feature = "parallel"))]
        out.chunks_mut(lanes).enumerate().for_each(node);

        if !out.iter().fold(F::zero(), |acc, &v| acc + v).is_finite() {
            return Err(Error::NonFinite { layer: s });
        }
    }
    Ok(())
}

/// Class scores per example (outer index: lane) from the last forward pass.
pub fn class_scores<F: Real>(model: &NetworkModel, ws: &Workspace<F>) -> Vec<Vec<f64>> {
    let head = model.head;
    let lanes = ws.lanes;
    let last = ws.acts.last().expect("forward not run");
    let mut scores = vec![vec![0.0f64; head.class_count]; lanes];
    let mut acc = vec![0.0f64; lanes];
    for c in 0..head.class_count {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for j in c * head.per_class_width..(c + 1) * head.per_class_width {
            for (a, v) in acc.iter_mut().zip(&last[j * lanes..(j + 1) * lanes]) {
                *a += v.to_f64().unwrap();
            }
        }
        for (row, a) in scores.iter_mut().zip(&acc) {
            row[c] = a / head.temperature;
        }
    }
    scores
}

/// Mean cross-entropy of softmax(scores) against `labels`, and the gradient
/// with respect to each score.
pub fn cross_entropy(scores: &[Vec<f64>], labels: &[u32]) -> (f64, Vec<Vec<f64>>) {
    let n = scores.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(scores.len());
    for (s, &y) in scores.iter().zip(labels) {
        let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = s.iter().map(|v| Float::exp(v - max)).collect();
        let sum: f64 = exps.iter().sum();
        loss += Float::ln(sum) + max - s[y as usize];
        grads.push(
            exps.iter()
                .enumerate()
                .map(|(c, e)| (e / sum - if c == y as usize { 1.0 } else { 0.0 }) / n)
                .collect(),
        );
    }
    (loss / n, grads)
}

fn check_labels(model: &NetworkModel, labels: &[u32], lanes: usize) -> Result<()> {
    if labels.len() != lanes {
        return Err(Error::Shape(format!("{} labels for {lanes} examples", labels.len())));
    }
    if let Some(l) = labels.iter().find(|&&l| l as usize >= model.class_count()) {
        return Err(Error::Config(format!("label {l} outside {} classes", model.class_count())));
    }
    Ok(())
}

/// Loss of the last forward pass.
pub fn loss<F: Real>(model: &NetworkModel, labels: &[u32], ws: &Workspace<F>) -> Result<(f64, Vec<Vec<f64>>)> {
    check_labels(model, labels, ws.lanes)?;
    let scores = class_scores(model, ws);
    let (loss, _) = cross_entropy(&scores, labels);
    if !loss.is_finite() {
        return Err(Error::NonFinite { layer: model_steps(model) });
    }
    Ok((loss, scores))
}

fn model_steps(model: &NetworkModel) -> usize {
    Plan::new(model).steps.len()
}

/// Backpropagates the mean cross-entropy of the last forward pass and adds
/// the logit gradients into `param_grads` (same layout as `params`).
/// Returns the loss and the class scores.
pub fn backward<F: Real, L: Logit<F>>(
    model: &NetworkModel,
    params: &[&[L]],
    labels: &[u32],
    ws: &mut Workspace<F>,
    param_grads: &mut [Vec<F>],
) -> Result<(f64, Vec<Vec<f64>>)> {
    check_params(model, params)?;
    check_labels(model, labels, ws.lanes)?;
    if param_grads.len() != params.len() || param_grads.iter().zip(params).any(|(g, p)| g.len() != p.len()) {
        return Err(Error::Shape("gradient buffers do not match parameters".into()));
    }
    let plan = Plan::new(model);
    let lanes = ws.lanes;
    let scores = class_scores(model, ws);
    let (loss, score_grads) = cross_entropy(&scores, labels);
    if !loss.is_finite() {
        return Err(Error::NonFinite { layer: plan.steps.len() });
    }
    ws.prepare_grads();

    let head = plan.head;
    let last = ws.grads.last_mut().unwrap();
    for (lane, sg) in score_grads.iter().enumerate() {
        for (c, g) in sg.iter().enumerate() {
            let g: F = cast(g / head.temperature);
            for j in c * head.per_class_width..(c + 1) * head.per_class_width {
                last[j * lanes + lane] = g;
            }
        }
    }

    let table = gate_coeffs::<F>();
    for (s, step) in plan.steps.iter().enumerate().rev() {
        let (lower_g, upper_g) = ws.grads.split_at_mut(s + 1);
        let g_out = &upper_g[0];
        let src_a = &ws.acts[step.src_a];
        let src_b = &ws.acts[step.src_b];

        if let Gate::Learned(group) = step.gate {
            let row_grad = |o: usize| {
                let (m1, m2) = step.operands(o);
                let a = &src_a[m1 * lanes..(m1 + 1) * lanes];
                let b = &src_b[m2 * lanes..(m2 + 1) * lanes];
                let g = &g_out[o * lanes..(o + 1) * lanes];
                let mut acc = [F::zero(); 4];
                for ((&gi, &x), &y) in g.iter().zip(a).zip(b) {
                    let gx = gi * x;
                    acc[0] = acc[0] + gi;
                    acc[1] = acc[1] + gx;
                    acc[2] = acc[2] + gi * y;
                    acc[3] = acc[3] + gx * y;
                }
                let row = &params[group][o * 16..(o + 1) * 16];
                let (_, pi) = mixture(row, &table);
                let mut dpi = [F::zero(); 16];
                let mut mean = F::zero();
                for j in 0..16 {
                    let t = &table[j];
                    dpi[j] = t[0] * acc[0] + t[1] * acc[1] + t[2] * acc[2] + t[3] * acc[3];
                    mean = mean + pi[j] * dpi[j];
                }
                let mut out = [F::zero(); 16];
                for j in 0..16 {
                    out[j] = pi[j] * (dpi[j] - mean);
                }
                out
            };
            let dest = &mut param_grads[group];
            #[cfg(feature = "parallel")]
            dest.par_chunks_mut(16).enumerate().for_each(|(o, d)| {
                for (d, r) in d.iter_mut().zip(row_grad(o)) {
                    *d = *d + r;
                }
            });
            #[cfg(not(feature = "parallel"))]
            dest.chunks_mut(16).enumerate().for_each(|(o, d)| {
                for (d, r) in d.iter_mut().zip(row_grad(o)) {
                    *d = *d + r;
                }
            });
        }

        // The input layer needs no gradient.
        let need_a = step.src_a != 0;
        let need_b = step.src_b != 0;
        if !need_a && !need_b {
            continue;
        }
        for o in 0..step.width {
            let [_, ca, cb, cab] = match step.gate {
                Gate::Learned(g) => mixture(&params[g][o * 16..(o + 1) * 16], &table).0,
                Gate::Fixed(op) => table[op.index() as usize],
            };
            let (m1, m2) = step.operands(o);
            let g = &g_out[o * lanes..(o + 1) * lanes];
            let a = &src_a[m1 * lanes..(m1 + 1) * lanes];
            let b = &src_b[m2 * lanes..(m2 + 1) * lanes];
            if need_a {
                let ga = &mut lower_g[step.src_a][m1 * lanes..(m1 + 1) * lanes];
                for ((d, &gi), &y) in ga.iter_mut().zip(g).zip(b) {
                    *d = *d + gi * (ca + cab * y);
                }
            }
            if need_b {
                let gb = &mut lower_g[step.src_b][m2 * lanes..(m2 + 1) * lanes];
                for ((d, &gi), &x) in gb.iter_mut().zip(g).zip(a) {
                    *d = *d + gi * (cb + cab * x);
                }
            }
        }
    }
    Ok((loss, scores))
}

/// Zeroed gradient buffers shaped like the model's parameter groups.
pub fn zero_grads<F: Real>(model: &NetworkModel) -> Vec<Vec<F>> {
    model.param_groups().iter().map(|g| vec![F::zero(); g.len()]).collect()
}

/// Loss and logit gradients for one batch, evaluated at `params`.
pub fn loss_and_grad<F: Real, L: Logit<F>>(
    model: &NetworkModel,
    params: &[&[L]],
    inputs: &[&[u8]],
    labels: &[u32],
) -> Result<(f64, Vec<Vec<F>>)> {
    let mut ws = Workspace::new();
    forward(model, params, inputs, &mut ws)?;
    let mut grads = zero_grads(model);
    let (loss, _) = backward(model, params, labels, &mut ws, &mut grads)?;
    Ok((loss, grads))
}

/// Loss only, evaluated at `params`.
pub fn loss_at<F: Real, L: Logit<F>>(
    model: &NetworkModel,
    params: &[&[L]],
    inputs: &[&[u8]],
    labels: &[u32],
) -> Result<f64> {
    let mut ws = Workspace::<F>::new();
    forward(model, params, inputs, &mut ws)?;
    Ok(loss(model, labels, &ws)?.0)
}

#[cfg(test)]
mod tests;
