use super::*;
use crate::gates::GateOpcode as Op;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn table(pairs: &[[u32; 2]], in_width: usize) -> PairIndexTable {
    PairIndexTable::new(pairs.to_vec(), in_width).unwrap()
}

fn bits(v: &[u8]) -> Vec<bool> {
    v.iter().map(|&b| b == 1).collect()
}

/// One-gate XOR net over two input bits; class 0 votes with XNOR, class 1 with XOR.
pub(crate) fn xor_model() -> NetworkModel {
    let layer = BooleanLayer::one_hot(2, table(&[[0, 1], [0, 1]], 2), &[Op::XNOR, Op::XOR]).unwrap();
    NetworkModel::new(
        "xor".into(),
        [1, 1, 1, 2],
        BinarizationConfig::default(),
        SamplingMode::Adjacent,
        vec![Stage::Layer(layer)],
        VotingHead::new(2, 2, 1.0).unwrap(),
        0,
    )
    .unwrap()
}

#[test]
fn one_hot_and_soft() {
    let l = BooleanLayer::one_hot(2, table(&[[0, 1]], 2), &[Op::AND]).unwrap();
    assert_eq!(l.forward_soft(&[1.0f64, 1.0]).unwrap(), vec![1.0]);
}

#[test]
fn uniform_logits_at_origin_give_one_half() {
    // Oracle: fraction of truth tables outputting 1 at (0,0).
    let ones_at_origin = Op::all().filter(|op| op.eval_hard(false, false)).count();
    assert_eq!(ones_at_origin, 8);
    let l = BooleanLayer::new(2, table(&[[0, 1]], 2), vec![0.3; 16]).unwrap();
    let z = l.forward_soft(&[0.0f64, 0.0]).unwrap()[0];
    assert!((z - ones_at_origin as f64 / 16.0).abs() < 1e-12);
}

#[test]
fn soft_output_stays_in_unit_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pairs = build_flat_pairs(4, 16, SamplingMode::Random, &mut rng).unwrap();
    let l = BooleanLayer::init(4, pairs, &mut rng);
    for corner in [[0.0, 0.0, 1.0, 1.0], [1.0, 0.0, 1.0, 0.0], [0.2, 0.9, 0.5, 0.0]] {
        for z in l.forward_soft(&corner).unwrap() {
            assert!((0.0..=1.0).contains(&z));
        }
    }
}

#[test]
fn hard_forward_examples() {
    let l = BooleanLayer::one_hot(2, table(&[[0, 1]], 2), &[Op::OR]).unwrap();
    assert_eq!(l.forward_hard(&[false, true]).unwrap(), vec![true]);
    let mut tied = vec![-1.0f32; 16];
    tied[0] = 2.0;
    tied[15] = 2.0;
    let l = BooleanLayer::new(2, table(&[[0, 1]], 2), tied).unwrap();
    assert_eq!(l.hard_opcodes(), vec![Op::FALSE]);
    assert!(l.forward_soft(&[0.0f32; 3]).is_err());
}

#[test]
fn skip_connective_examples() {
    let pass_b = |c| {
        let la = BooleanLayer::one_hot(2, table(&[[0, 0], [1, 1]], 2), &[Op::A, Op::A]).unwrap();
        let lb = BooleanLayer::one_hot(2, table(&[[0, 0], [1, 1]], 2), &[Op::NOT_A, Op::NOT_A]).unwrap();
        SkipBlock::new(la, lb, Some(c), None).unwrap()
    };
    // u = !x, so OR yields 1 everywhere and IMPLICATION yields !x.
    let or = pass_b(SkipConnective::Or);
    assert_eq!(or.forward_hard(&[true, false]).unwrap(), vec![true, true]);
    let imp = pass_b(SkipConnective::Implication);
    assert_eq!(imp.forward_hard(&[true, false]).unwrap(), vec![false, true]);
    let x = [1.0f64, 0.0];
    assert_eq!(skip_forward(&imp, &x, false).unwrap(), vec![0.0, 1.0]);
    let not_b = pass_b(SkipConnective::NotB);
    assert_eq!(not_b.forward_hard(&[true, false]).unwrap(), vec![true, false]);
    assert!(skip_forward(&imp, &[1.0f64], true).is_err());
}

#[test]
fn learned_connective_mixes() {
    let la = BooleanLayer::one_hot(1, table(&[[0, 0]], 1), &[Op::A]).unwrap();
    let lb = BooleanLayer::one_hot(1, table(&[[0, 0]], 1), &[Op::FALSE]).unwrap();
    let mut learned = vec![0.0f32; 16];
    learned[Op::XNOR.index() as usize] = 5.0;
    let b = SkipBlock::new(la, lb, Some(SkipConnective::Learned), Some(learned)).unwrap();
    assert_eq!(b.forward_hard(&[true]).unwrap(), vec![false]);
    assert_eq!(b.forward_hard(&[false]).unwrap(), vec![true]);
    let la = BooleanLayer::one_hot(1, table(&[[0, 0]], 1), &[Op::A]).unwrap();
    let lb = BooleanLayer::one_hot(1, table(&[[0, 0]], 1), &[Op::A]).unwrap();
    assert!(SkipBlock::new(la, lb, Some(SkipConnective::Learned), None).is_err());
}

#[test]
fn voting_examples() {
    let head = VotingHead::new(4, 8, 100.0).unwrap();
    let mut x = vec![false; 8];
    x[6] = true;
    x[7] = true;
    assert_eq!(head.scores_hard(&x).unwrap(), vec![0.0, 0.0, 0.0, 0.02]);
    let head = VotingHead::new(2, 4, 1.0).unwrap();
    assert_eq!(head.scores_hard(&bits(&[1, 0, 1, 1])).unwrap(), vec![1.0, 2.0]);
    assert_eq!(voting_forward(&head, &[1.0f64, 0.0, 1.0, 1.0], true).unwrap(), vec![1.0, 2.0]);
    assert!(VotingHead::new(3, 8, 1.0).is_err());
    assert!(head.scores_hard(&[true; 5]).is_err());
}

#[test]
fn xor_network_classifies_parity() {
    let m = xor_model();
    for v in 0..4u8 {
        let img = BinarizedImage::from_bits([1, 1, 1, 2], vec![v >> 1, v & 1]).unwrap();
        let expect = ((v >> 1) ^ (v & 1)) as u32;
        assert_eq!(m.predict(&img, true).unwrap(), expect);
        assert_eq!(m.predict(&img, false).unwrap(), expect);
    }
    let bad = BinarizedImage::from_bits([1, 1, 1, 3], vec![0, 0, 0]).unwrap();
    assert!(m.predict(&bad, true).is_err());
}

#[test]
fn cifar_dbn_gate_counts() {
    let opts = ArchitectureOptions::default();
    let dbn = build_architecture("DBN", [3, 31, 32, 32], 10, &opts).unwrap();
    assert_eq!(dbn.layer_widths(), vec![190_464, 1_904_600]);
    assert_eq!(dbn.gate_count(), 2_095_064);
    let dbn0 = build_architecture("DBN-0", [3, 31, 32, 32], 10, &opts).unwrap();
    assert_eq!(dbn0, dbn);
    let dbn1 = build_architecture("DBN-1", [3, 31, 32, 32], 10, &opts).unwrap();
    assert_eq!(dbn1.layer_widths(), vec![190_464, 380_928, 190_464, 1_904_600]);
    assert_eq!(dbn1.gate_count(), 2_666_456);
    assert_eq!(dbn1.skip_gate_count(), 190_464);
    assert!(build_architecture("ResNet", [3, 31, 32, 32], 10, &opts).is_err());
    assert!(build_architecture("DBN--1", [3, 31, 32, 32], 10, &opts).is_err());
}

#[test]
fn straight_blocks_and_overrides() {
    let opts = ArchitectureOptions {
        bottleneck: false,
        skip: None,
        voting_per_class: Some(5),
        ..Default::default()
    };
    let m = build_architecture("DBN-2", [1, 2, 3, 3], 4, &opts).unwrap();
    assert_eq!(m.layer_widths(), vec![36, 36, 36, 36, 36, 20]);
    assert_eq!(m.skip_gate_count(), 0);
    assert_eq!(m.head.per_class_width, 5);
}

#[test]
fn layered_parity_shape() {
    let m = build_layered(
        "parity",
        [1, 1, 1, 8],
        &[4, 2, 2],
        SamplingMode::Adjacent,
        SamplingMode::Adjacent,
        2,
        1.0,
        BinarizationConfig::default(),
        1,
    )
    .unwrap();
    assert_eq!(m.layer_widths(), vec![4, 2, 2]);
    let first = m.layers().next().unwrap();
    assert_eq!(first.pairs.pairs, vec![[0, 1], [2, 3], [4, 5], [6, 7]]);
}

fn random_one_hot_model(seed: u64, depth: usize, max_width: usize) -> (NetworkModel, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d0 = rng.random_range(2..=32usize);
    let mut widths: Vec<usize> = (0..depth).map(|_| rng.random_range(2..=max_width)).collect();
    let last = widths.last_mut().unwrap();
    *last -= *last % 2;
    let mut m = build_layered(
        "rand",
        [1, 1, 1, d0],
        &widths,
        SamplingMode::Random,
        SamplingMode::Random,
        2,
        10.0,
        BinarizationConfig::default(),
        seed,
    )
    .unwrap();
    m.harden_logits();
    (m, rng)
}

#[test]
fn one_hot_soft_equals_hard_every_layer() {
    for seed in 0..10 {
        let (m, mut rng) = random_one_hot_model(seed, 4, 64);
        let x: Vec<bool> = (0..m.input_width()).map(|_| rng.random_bool(0.5)).collect();
        let xf: Vec<f64> = x.iter().map(|&b| b as u8 as f64).collect();
        let soft = m.trace_soft(&xf).unwrap();
        let hard = m.trace_hard(&x).unwrap();
        for (s, h) in soft.iter().zip(&hard) {
            let rounded: Vec<bool> = s.iter().map(|&v| v > 0.5).collect();
            assert_eq!(&rounded, h);
        }
    }
}

proptest! {
    #[test]
    fn temperature_never_changes_argmax(seed in 0u64..1000) {
        let (m, mut rng) = random_one_hot_model(seed, 3, 32);
        let x: Vec<bool> = (0..m.input_width()).map(|_| rng.random_bool(0.5)).collect();
        let last = m.trace_hard(&x).unwrap().pop().unwrap();
        let labels: Vec<usize> = [10.0, 100.0, 1000.0, 10000.0]
            .iter()
            .map(|&z| {
                let head = VotingHead { temperature: z, ..m.head };
                argmax(&head.scores_hard(&last).unwrap())
            })
            .collect();
        prop_assert!(labels.windows(2).all(|w| w[0] == w[1]));
    }
}
