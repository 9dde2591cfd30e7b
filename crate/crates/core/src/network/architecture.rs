use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::sampling::{build_flat_pairs, build_locality_pairs};
use super::{gaussian_logits, BooleanLayer, NetworkModel, SamplingMode, SkipBlock, Stage, VotingHead};
use crate::data::BinarizationConfig;
use crate::error::{Error, Result};
use crate::gates::SkipConnective;
use crate::rng::{self, Stream};

#[derive(Clone, Debug, PartialEq)]
pub struct ArchitectureOptions {
    pub binarization: BinarizationConfig,
    /// Pairing of the first (sampling) layer.
    pub sampling: SamplingMode,
    /// Pairing inside skip blocks.
    pub hidden_pairing: SamplingMode,
    /// Pairing of the last layer before the voting head.
    pub voting_pairing: SamplingMode,
    /// `None` builds plain two-layer blocks without skip connections.
    pub skip: Option<SkipConnective>,
    /// First block layer twice as wide as the second.
    pub bottleneck: bool,
    /// Nodes per class in the last layer. Defaults to the sampling width
    /// rounded down to a multiple of the class count.
    pub voting_per_class: Option<usize>,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for ArchitectureOptions {
    fn default() -> Self {
        Self {
            binarization: BinarizationConfig::default(),
            sampling: SamplingMode::RowCol,
            hidden_pairing: SamplingMode::Random,
            voting_pairing: SamplingMode::Random,
            skip: Some(SkipConnective::Implication),
            bottleneck: true,
            voting_per_class: None,
            temperature: 100.0,
            seed: 0,
        }
    }
}

/// Number of skip blocks encoded in a name of the form `DBN` or `DBN-<k>`.
pub fn parse_block_count(name: &str) -> Result<usize> {
    let upper = name.trim().to_ascii_uppercase();
    if upper == "DBN" {
        return Ok(0);
    }
    upper
        .strip_prefix("DBN-")
        .and_then(|k| k.parse::<usize>().ok())
        .ok_or_else(|| Error::Config(format!("architecture `{name}` is not DBN or DBN-<k>")))
}

/// Sampling layer, `k` skip blocks, then the pre-voting layer and the head.
pub fn build_architecture(
    name: &str,
    input_shape: [usize; 4],
    class_count: usize,
    opts: &ArchitectureOptions,
) -> Result<NetworkModel> {
    let k = parse_block_count(name)?;
    if class_count == 0 {
        return Err(Error::Config("class_count must be positive".into()));
    }
    opts.binarization.validate()?;
    let d0: usize = input_shape.iter().product();
    let mut init = rng::stream(opts.seed, Stream::Init);
    let mut layer_index = 0u64;
    let mut pair_rng = || {
        layer_index += 1;
        rng::substream(opts.seed, Stream::Pairing, layer_index)
    };

    let sampling_width = match opts.sampling.directions() {
        Some(dirs) => dirs * d0,
        None => 2 * d0,
    };
    let first_pairs = build_locality_pairs(
        input_shape,
        opts.sampling,
        Some(sampling_width),
        &mut pair_rng(),
    )?;
    let mut stages = Vec::with_capacity(k + 2);
    stages.push(Stage::Layer(BooleanLayer::init(d0, first_pairs, &mut init)));

    let width = sampling_width;
    let inner = if opts.bottleneck { 2 * width } else { width };
    for _ in 0..k {
        let pa = build_flat_pairs(width, inner, opts.hidden_pairing, &mut pair_rng())?;
        let pb = build_flat_pairs(inner, width, opts.hidden_pairing, &mut pair_rng())?;
        let layer_a = BooleanLayer::init(width, pa, &mut init);
        let layer_b = BooleanLayer::init(inner, pb, &mut init);
        let learned = (opts.skip == Some(SkipConnective::Learned)).then(|| gaussian_logits(width, &mut init));
        stages.push(Stage::Skip(SkipBlock::new(layer_a, layer_b, opts.skip, learned)?));
    }

    let per_class = opts
        .voting_per_class
        .unwrap_or((width / class_count) * class_count)
        .max(1);
    let vote_width = per_class * class_count;
    let pv = build_flat_pairs(width, vote_width, opts.voting_pairing, &mut pair_rng())?;
    stages.push(Stage::Layer(BooleanLayer::init(width, pv, &mut init)));

    let head = VotingHead::new(class_count, vote_width, opts.temperature)?;
    let name = if k == 0 { "DBN".to_string() } else { format!("DBN-{k}") };
    NetworkModel::new(name, input_shape, opts.binarization, opts.sampling, stages, head, opts.seed)
}

/// A stack of plain Boolean layers with explicit widths; the last width feeds
/// the voting head. The first layer uses `first_pairing` over the input
/// layout, the rest use `hidden_pairing`.
#[allow(clippy::too_many_arguments)]
pub fn build_layered(
    name: &str,
    input_shape: [usize; 4],
    widths: &[usize],
    first_pairing: SamplingMode,
    hidden_pairing: SamplingMode,
    class_count: usize,
    temperature: f64,
    binarization: BinarizationConfig,
    seed: u64,
) -> Result<NetworkModel> {
    if widths.is_empty() || widths.contains(&0) {
        return Err(Error::Config(format!("invalid layer widths {widths:?}")));
    }
    let mut init = rng::stream(seed, Stream::Init);
    let d0: usize = input_shape.iter().product();
    let mut stages = Vec::with_capacity(widths.len());
    let mut prev = d0;
    for (i, &w) in widths.iter().enumerate() {
        let mut prng = rng::substream(seed, Stream::Pairing, i as u64 + 1);
        let pairs = if i == 0 {
            let req = if first_pairing.directions().is_some() { None } else { Some(w) };
            let p = build_locality_pairs(input_shape, first_pairing, req, &mut prng)?;
            if p.len() != w {
                return Err(Error::Config(format!(
                    "{first_pairing} sampling yields {} nodes, width {w} requested",
                    p.len()
                )));
            }
            p
        } else {
            build_flat_pairs(prev, w, hidden_pairing, &mut prng)?
        };
        stages.push(Stage::Layer(BooleanLayer::init(prev, pairs, &mut init)));
        prev = w;
    }
    let head = VotingHead::new(class_count, prev, temperature)?;
    NetworkModel::new(String::from(name), input_shape, binarization, first_pairing, stages, head, seed)
}
