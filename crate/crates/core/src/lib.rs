//! Deep Boolean networks.
//!
//! Every node of a network is a two-input Boolean gate. During training the
//! gate is a softmax mixture over the 16 relaxed two-input functions; at
//! inference the mixture collapses to its argmax and the network becomes a
//! pure gate netlist that can be optimized and evaluated 64 examples at a time
//! with word-level bitwise operations.
//!
//! The crate is `no_std` (with `alloc`). File formats, dataset loaders and the
//! command line live in the `deepbool` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod compiler;
pub mod data;
pub mod engine;
mod error;
pub mod gates;
pub mod network;
pub mod rng;
pub mod training;

pub use compiler::{
    eval_bitsliced, harden, netlist_stats, optimize, BitSliceBatch, GateNetlist, NetNode, NetRef,
    NetlistStats, Pass,
};
pub use data::{
    augment, binarize, make_parity_dataset, AugmentConfig, BinarizationConfig, BinarizedImage,
    Example, LabeledDataset, RawImage,
};
pub use error::{Error, Result};
pub use gates::{GateOpcode, InputSide, SkipConnective};
pub use network::{
    build_architecture, build_locality_pairs, ArchitectureOptions, BooleanLayer, NetworkModel,
    PairIndexTable, SamplingMode, SkipBlock, Stage, VotingHead,
};
pub use training::{evaluate, EpochMetrics, Optimizer, TrainConfig, TrainState};
