//! Versioned binary container for models and training checkpoints.
//!
//! Layout (little-endian): magic `DBNM`, version u16, then the model (name,
//! input shape, binarization, sampling mode, seed, voting head, stages with
//! pair tables as u32 and logits as f32 rows of 16), a section tag
//! (0 = none, 1 = optimizer state) and a CRC-32 of everything before it.

use std::fs;
use std::path::Path;

use deepbool_core::network::{BooleanLayer, PairIndexTable, SamplingMode, SkipBlock, Stage, VotingHead};
use deepbool_core::training::{EpochMetrics, Optimizer, TrainConfig, TrainState};
use deepbool_core::{AugmentConfig, BinarizationConfig, NetworkModel, SkipConnective};

use crate::bytes::{Reader, Writer};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: [u8; 4] = *b"DBNM";
pub const MODEL_VERSION: u16 = 1;
const WHAT: &str = "model container";
const NO_CONNECTIVE: u8 = 0xff;

fn write_layer(w: &mut Writer, l: &BooleanLayer) {
    w.len_u32(l.in_width);
    w.len_u32(l.out_width());
    for p in &l.pairs.pairs {
        w.u32(p[0]);
        w.u32(p[1]);
    }
    l.logits.iter().for_each(|&x| w.f32(x));
}

fn read_layer(r: &mut Reader) -> Result<BooleanLayer> {
    let in_width = r.u32()? as usize;
    let out = r.len()?;
    let pairs = (0..out).map(|_| Ok([r.u32()?, r.u32()?])).collect::<Result<Vec<_>>>()?;
    let raw = r.take(out * 16 * 4)?;
    let logits = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(BooleanLayer::new(in_width, PairIndexTable::new(pairs, in_width)?, logits)?)
}

fn write_model(w: &mut Writer, m: &NetworkModel) {
    w.str(&m.name);
    m.input_shape.iter().for_each(|&d| w.len_u32(d));
    w.u32(m.binarization.threshold_count);
    w.u8(m.binarization.intensity_low);
    w.u8(m.binarization.intensity_high);
    w.u8(m.sampling.code());
    w.u64(m.seed);
    w.len_u32(m.head.class_count);
    w.len_u32(m.head.per_class_width);
    w.f64(m.head.temperature);
    w.len_u32(m.stages.len());
    for s in &m.stages {
        match s {
            Stage::Layer(l) => {
                w.u8(0);
                write_layer(w, l);
            }
            Stage::Skip(b) => {
                w.u8(1);
                write_layer(w, &b.layer_a);
                write_layer(w, &b.layer_b);
                w.u8(b.connective.map_or(NO_CONNECTIVE, |c| c.code()));
                if let Some(l) = &b.learned {
                    w.f32s(l);
                }
            }
        }
    }
}

fn read_model(r: &mut Reader) -> Result<NetworkModel> {
    let name = r.str()?;
    let mut input_shape = [0usize; 4];
    for d in &mut input_shape {
        *d = r.u32()? as usize;
    }
    let binarization = BinarizationConfig {
        threshold_count: r.u32()?,
        intensity_low: r.u8()?,
        intensity_high: r.u8()?,
    };
    let code = r.u8()?;
    let sampling = SamplingMode::from_code(code).ok_or_else(|| Error::format(WHAT, format!("sampling code {code}")))?;
    let seed = r.u64()?;
    let class_count = r.u32()? as usize;
    let per_class = r.u32()? as usize;
    let temperature = r.f64()?;
    let head = VotingHead::new(class_count, class_count * per_class, temperature)?;
    let n = r.len()?;
    let mut stages = Vec::with_capacity(n);
    for _ in 0..n {
        stages.push(match r.u8()? {
            0 => Stage::Layer(read_layer(r)?),
            1 => {
                let a = read_layer(r)?;
                let b = read_layer(r)?;
                let code = r.u8()?;
                let connective = match code {
                    NO_CONNECTIVE => None,
                    c => Some(
                        SkipConnective::from_code(c)
                            .ok_or_else(|| Error::format(WHAT, format!("connective code {c}")))?,
                    ),
                };
                let learned = if connective == Some(SkipConnective::Learned) { Some(r.f32s()?) } else { None };
                Stage::Skip(SkipBlock::new(a, b, connective, learned)?)
            }
            k => return Err(Error::format(WHAT, format!("stage kind {k}"))),
        });
    }
    Ok(NetworkModel::new(name, input_shape, binarization, sampling, stages, head, seed)?)
}

fn write_groups(w: &mut Writer, groups: &[Vec<f32>]) {
    w.len_u32(groups.len());
    groups.iter().for_each(|g| w.f32s(g));
}

fn read_groups(r: &mut Reader) -> Result<Vec<Vec<f32>>> {
    let n = r.len()?;
    (0..n).map(|_| r.f32s()).collect()
}

fn opt_f64(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

fn f64_opt(v: f64) -> Option<f64> {
    (!v.is_nan()).then_some(v)
}

fn write_train(w: &mut Writer, st: &TrainState) {
    let c = &st.config;
    match c.optimizer {
        Optimizer::Adam { lr, beta1, beta2, eps } => {
            w.u8(0);
            [lr, beta1, beta2, eps].iter().for_each(|&v| w.f64(v));
        }
        Optimizer::Sgd { lr, weight_decay } => {
            w.u8(1);
            [lr, weight_decay].iter().for_each(|&v| w.f64(v));
        }
    }
    w.u64(c.batch_size as u64);
    w.u64(c.epochs as u64);
    w.u64(c.seed);
    w.u8(c.augmentation.horizontal_flip as u8);
    w.u64(c.augmentation.crop_pad as u64);
    w.u64(c.eval_every as u64);
    w.u64(st.step);
    w.u64(st.epoch as u64);
    write_groups(w, &st.moment1);
    write_groups(w, &st.moment2);
    w.len_u32(st.history.len());
    for h in &st.history {
        w.u64(h.epoch as u64);
        w.f64(h.loss);
        w.f64(opt_f64(h.soft_acc));
        w.f64(opt_f64(h.hard_acc));
        w.f64(h.wall_seconds);
    }
}

fn read_train(r: &mut Reader, model: NetworkModel) -> Result<TrainState> {
    let optimizer = match r.u8()? {
        0 => Optimizer::Adam { lr: r.f64()?, beta1: r.f64()?, beta2: r.f64()?, eps: r.f64()? },
        1 => Optimizer::Sgd { lr: r.f64()?, weight_decay: r.f64()? },
        k => return Err(Error::format(WHAT, format!("optimizer kind {k}"))),
    };
    let config = TrainConfig {
        optimizer,
        batch_size: r.u64()? as usize,
        epochs: r.u64()? as usize,
        seed: r.u64()?,
        augmentation: AugmentConfig { horizontal_flip: r.u8()? != 0, crop_pad: r.u64()? as usize },
        eval_every: r.u64()? as usize,
    };
    let step = r.u64()?;
    let epoch = r.u64()? as usize;
    let moment1 = read_groups(r)?;
    let moment2 = read_groups(r)?;
    let n = r.len()?;
    let history = (0..n)
        .map(|_| {
            Ok(EpochMetrics {
                epoch: r.u64()? as usize,
                loss: r.f64()?,
                soft_acc: f64_opt(r.f64()?),
                hard_acc: f64_opt(r.f64()?),
                wall_seconds: r.f64()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut st = TrainState::new(model, config)?;
    let shape = |g: &[Vec<f32>]| g.iter().map(Vec::len).collect::<Vec<_>>();
    if shape(&moment1) != shape(&st.moment1) || shape(&moment2) != shape(&st.moment2) {
        return Err(Error::format(WHAT, "optimizer moments do not match the model"));
    }
    st.moment1 = moment1;
    st.moment2 = moment2;
    st.step = step;
    st.epoch = epoch;
    st.history = history;
    Ok(st)
}

fn encode(model: &NetworkModel, train: Option<&TrainState>) -> Vec<u8> {
    let mut w = Writer::default();
    w.0.extend(MODEL_MAGIC);
    w.u16(MODEL_VERSION);
    write_model(&mut w, model);
    match train {
        None => w.u8(0),
        Some(st) => {
            w.u8(1);
            write_train(&mut w, st);
        }
    }
    let crc = crc32fast::hash(&w.0);
    w.u32(crc);
    w.0
}

fn decode(bytes: &[u8]) -> Result<(NetworkModel, Option<Reader<'_>>)> {
    if bytes.len() < 4 || bytes[..4] != MODEL_MAGIC {
        return Err(Error::format(WHAT, "missing DBNM magic"));
    }
    if bytes.len() < 10 {
        return Err(Error::Truncated { what: WHAT, expected: 10, found: bytes.len() });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != MODEL_VERSION {
        return Err(Error::Version { what: WHAT, found: version, expected: MODEL_VERSION });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let mut r = Reader::new(&body[6..], WHAT);
    let model = read_model(&mut r)?;
    match r.u8()? {
        0 => Ok((model, None)),
        1 => Ok((model, Some(r))),
        k => Err(Error::format(WHAT, format!("section tag {k}"))),
    }
}

pub fn serialize_model(model: &NetworkModel) -> Vec<u8> {
    encode(model, None)
}

/// Reads the model from a plain container or a checkpoint.
pub fn deserialize_model(bytes: &[u8]) -> Result<NetworkModel> {
    Ok(decode(bytes)?.0)
}

pub fn serialize_checkpoint(state: &TrainState) -> Vec<u8> {
    encode(&state.model, Some(state))
}

pub fn deserialize_checkpoint(bytes: &[u8]) -> Result<TrainState> {
    match decode(bytes)? {
        (model, Some(mut r)) => {
            let st = read_train(&mut r, model)?;
            if r.remaining() != 0 {
                return Err(Error::format(WHAT, format!("{} trailing bytes", r.remaining())));
            }
            Ok(st)
        }
        (_, None) => Err(Error::format(WHAT, "no optimizer section; this is a plain model file")),
    }
}

pub fn save_model(path: &Path, model: &NetworkModel) -> Result<()> {
    fs::write(path, serialize_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<NetworkModel> {
    deserialize_model(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn save_checkpoint(path: &Path, state: &TrainState) -> Result<()> {
    fs::write(path, serialize_checkpoint(state)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    deserialize_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
