//! Mini-batch training of gate logits.

use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;
use rand::seq::SliceRandom;

use crate::compiler::{eval_many, harden};
use crate::data::{augment, binarize, AugmentConfig, BinarizedImage, Example, LabeledDataset};
use crate::engine::{self, Workspace};
use crate::error::{Error, Result};
use crate::network::{argmax, NetworkModel};
use crate::rng::{self, Stream};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Optimizer {
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
    Sgd { lr: f64, weight_decay: f64 },
}

impl Optimizer {
    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn sgd(lr: f64, weight_decay: f64) -> Self {
        Optimizer::Sgd { lr, weight_decay }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            Optimizer::Adam { lr, .. } | Optimizer::Sgd { lr, .. } => lr,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Optimizer::Adam { .. } => "adam",
            Optimizer::Sgd { .. } => "sgd",
        }
    }
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::adam(0.01)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub augmentation: AugmentConfig,
    /// Evaluate accuracies every this many epochs (and after the last one).
    /// Zero evaluates only after the last epoch.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::default(),
            batch_size: 100,
            epochs: 1,
            seed: 0,
            augmentation: AugmentConfig::default(),
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let lr = self.optimizer.lr();
        // Zero is allowed: it freezes the logits, which is useful for checks.
        if !lr.is_finite() || lr < 0.0 {
            return Err(Error::Config(format!("learning rate {lr} must be finite and non-negative")));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        match self.optimizer {
            Optimizer::Adam { beta1, beta2, eps, .. } => {
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps.is_nan() || eps <= 0.0 {
                    return Err(Error::Config(format!("invalid Adam parameters {:?}", self.optimizer)));
                }
            }
            Optimizer::Sgd { weight_decay, .. } => {
                if weight_decay.is_nan() || weight_decay < 0.0 {
                    return Err(Error::Config(format!("weight_decay {weight_decay} must be non-negative")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    /// 1-based index of the completed epoch.
    pub epoch: usize,
    /// Mean training cross-entropy over the epoch's batches.
    pub loss: f64,
    pub soft_acc: Option<f64>,
    pub hard_acc: Option<f64>,
    /// Wall-clock duration of the epoch, zero without `std`.
    pub wall_seconds: f64,
}

/// A model together with everything needed to continue training it.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub model: NetworkModel,
    pub config: TrainConfig,
    /// First and second Adam moments, shaped like the parameter groups.
    pub moment1: Vec<Vec<f32>>,
    pub moment2: Vec<Vec<f32>>,
    /// Optimizer steps taken.
    pub step: u64,
    /// Completed epochs.
    pub epoch: usize,
    pub history: Vec<EpochMetrics>,
}

impl TrainState {
    pub fn new(model: NetworkModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        model.validate()?;
        let moment1 = engine::zero_grads(&model);
        let moment2 = moment1.clone();
        Ok(Self { model, config, moment1, moment2, step: 0, epoch: 0, history: Vec::new() })
    }

    /// One shuffled pass over `train`, followed by an accuracy evaluation on
    /// `eval` (or `train` when `None`) if the cadence asks for one.
    ///
    /// A numeric error aborts the epoch; logits and moments keep the values
    /// of the last completed batch and no metric row is appended.
    pub fn train_epoch(&mut self, train: &LabeledDataset, eval: Option<&LabeledDataset>) -> Result<&EpochMetrics> {
        if train.is_empty() {
            return Err(Error::Empty);
        }
        #[cfg(feature = "std")]
        let start = std::time::Instant::now();

        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng::substream(self.config.seed, Stream::Shuffle, self.epoch as u64));
        let mut aug_rng = rng::substream(self.config.seed, Stream::Augment, self.epoch as u64);
        let mut ws = Workspace::<f32>::new();
        let mut grads = engine::zero_grads::<f32>(&self.model);
        let mut loss_sum = 0.0;

        for chunk in order.chunks(self.config.batch_size) {
            let bits: Vec<BinarizedImage> = chunk
                .iter()
                .map(|&i| match &train.examples[i].0 {
                    Example::Raw(img) if !self.config.augmentation.is_identity() => {
                        let img = augment(img, &mut aug_rng, &self.config.augmentation);
                        binarize(&img, &self.model.binarization)
                    }
                    e => e.to_bits(&self.model.binarization),
                })
                .collect();
            let inputs: Vec<&[u8]> = bits.iter().map(|b| b.bits.as_slice()).collect();
            let labels: Vec<u32> = chunk.iter().map(|&i| train.examples[i].1).collect();

            grads.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
            let params = self.model.param_groups();
            engine::forward(&self.model, &params, &inputs, &mut ws)?;
            let (loss, _) = engine::backward(&self.model, &params, &labels, &mut ws, &mut grads)?;
            loss_sum += loss * chunk.len() as f64;
            self.apply(&grads)?;
        }
        self.epoch += 1;

        let cadence = self.config.eval_every;
        let due = self.epoch >= self.config.epochs || (cadence > 0 && self.epoch.is_multiple_of(cadence));
        let (soft_acc, hard_acc) = if due {
            let data = eval.unwrap_or(train);
            (Some(evaluate(&self.model, data, false)?), Some(evaluate(&self.model, data, true)?))
        } else {
            (None, None)
        };
        #[cfg(feature = "std")]
        let wall_seconds = start.elapsed().as_secs_f64();
        #[cfg(not(feature = "std"))]
        let wall_seconds = 0.0;
        self.history.push(EpochMetrics {
            epoch: self.epoch,
            loss: loss_sum / train.len() as f64,
            soft_acc,
            hard_acc,
            wall_seconds,
        });
        Ok(self.history.last().unwrap())
    }

    /// Runs epochs until `config.epochs` have completed.
    pub fn fit(&mut self, train: &LabeledDataset, eval: Option<&LabeledDataset>) -> Result<()> {
        while self.epoch < self.config.epochs {
            self.train_epoch(train, eval)?;
        }
        Ok(())
    }

    /// One optimizer step. A step that would make any logit non-finite is
    /// refused before anything is written.
    fn apply(&mut self, grads: &[Vec<f32>]) -> Result<()> {
        let t = (self.step + 1) as i32;
        let opt = self.config.optimizer;
        let (c1, c2) = match opt {
            Optimizer::Adam { beta1, beta2, .. } => {
                ((1.0 - Float::powi(beta1, t)) as f32, (1.0 - Float::powi(beta2, t)) as f32)
            }
            Optimizer::Sgd { .. } => (1.0, 1.0),
        };
        let update = |w: f32, g: f32, m: f32, v: f32| -> (f32, f32, f32) {
            match opt {
                Optimizer::Adam { lr, beta1, beta2, eps } => {
                    let (lr, b1, b2, eps) = (lr as f32, beta1 as f32, beta2 as f32, eps as f32);
                    let m = b1 * m + (1.0 - b1) * g;
                    let v = b2 * v + (1.0 - b2) * g * g;
                    (w - lr * (m / c1) / (Float::sqrt(v / c2) + eps), m, v)
                }
                Optimizer::Sgd { lr, weight_decay } => (w - lr as f32 * (g + weight_decay as f32 * w), m, v),
            }
        };
        let params = self.model.param_groups_mut();
        for (layer, (((w, g), m), v)) in params.iter().zip(grads).zip(&self.moment1).zip(&self.moment2).enumerate() {
            let bad = w.iter().zip(g).zip(m).zip(v).any(|(((&w, &g), &m), &v)| !update(w, g, m, v).0.is_finite());
            if bad {
                return Err(Error::NonFinite { layer: layer + 1 });
            }
        }
        for (((w, g), m), v) in params.into_iter().zip(grads).zip(&mut self.moment1).zip(&mut self.moment2) {
            for (((w, &g), m), v) in w.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                (*w, *m, *v) = update(*w, g, *m, *v);
            }
        }
        self.step += 1;
        Ok(())
    }
}

/// Mean cross-entropy and class scores of a batch, in 64-bit arithmetic.
pub fn loss_forward(model: &NetworkModel, batch: &[(&BinarizedImage, u32)]) -> Result<(f64, Vec<Vec<f64>>)> {
    let (inputs, labels) = split_batch(batch);
    let mut ws = Workspace::<f64>::new();
    engine::forward(model, &model.param_groups(), &inputs, &mut ws)?;
    engine::loss(model, &labels, &ws)
}

/// Gradient of [`loss_forward`]'s loss with respect to every logit, grouped
/// like [`NetworkModel::param_groups`].
pub fn backward(model: &NetworkModel, batch: &[(&BinarizedImage, u32)]) -> Result<Vec<Vec<f64>>> {
    let (inputs, labels) = split_batch(batch);
    let (_, grads) = engine::loss_and_grad::<f64, f32>(model, &model.param_groups(), &inputs, &labels)?;
    Ok(grads)
}

fn split_batch<'a>(batch: &[(&'a BinarizedImage, u32)]) -> (Vec<&'a [u8]>, Vec<u32>) {
    batch.iter().map(|(img, l)| (img.bits.as_slice(), *l)).unzip()
}

const EVAL_CHUNK: usize = 256;

/// Fraction of `data` the model classifies correctly. Hard accuracy runs the
/// hardened netlist; soft accuracy takes the argmax of the relaxed scores.
pub fn evaluate(model: &NetworkModel, data: &LabeledDataset, hard: bool) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty);
    }
    let net = hard.then(|| harden(model));
    let mut ws = Workspace::<f64>::new();
    let mut correct = 0usize;
    for chunk in data.examples.chunks(EVAL_CHUNK) {
        let bits: Vec<BinarizedImage> = chunk.iter().map(|(e, _)| e.to_bits(&model.binarization)).collect();
        let inputs: Vec<&[u8]> = bits.iter().map(|b| b.bits.as_slice()).collect();
        let predicted: Vec<u32> = match &net {
            Some(net) => eval_many(net, &inputs)?,
            None => {
                engine::forward(model, &model.param_groups(), &inputs, &mut ws)?;
                engine::class_scores(model, &ws).iter().map(|s| argmax(s) as u32).collect()
            }
        };
        correct += predicted.iter().zip(chunk).filter(|(p, (_, l))| *p == l).count();
    }
    Ok(correct as f64 / data.len() as f64)
}
