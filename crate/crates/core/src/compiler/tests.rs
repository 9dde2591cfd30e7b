use super::*;
use crate::data::BinarizationConfig;
use crate::gates::GateOpcode as Op;
use crate::network::{build_architecture, build_layered, ArchitectureOptions, PairIndexTable, SamplingMode, VotingHead};
use crate::gates::SkipConnective;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn all_inputs(d: usize) -> impl Iterator<Item = Vec<bool>> {
    (0..1u32 << d).map(move |v| (0..d).map(|i| (v >> i) & 1 == 1).collect())
}

fn assert_equivalent(a: &GateNetlist, b: &GateNetlist) {
    for x in all_inputs(a.input_count) {
        assert_eq!(a.class_counts(&x).unwrap(), b.class_counts(&x).unwrap());
    }
}

fn random_bits(d: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    (0..d).map(|_| rng.random_range(0..2u8)).collect()
}

fn small_model(k: usize, connective: Option<SkipConnective>, seed: u64) -> NetworkModel {
    let opts = ArchitectureOptions {
        skip: connective,
        voting_per_class: Some(8),
        seed,
        ..Default::default()
    };
    build_architecture(&alloc::format!("DBN-{k}"), [1, 2, 4, 4], 3, &opts).unwrap()
}

#[test]
fn harden_keeps_one_hot_opcodes() {
    let ops = [Op::XOR, Op::NAND, Op::NOT_A_OR_B, Op::B];
    let layer = BooleanLayer::one_hot(3, PairIndexTable::new(alloc::vec![[0, 1], [1, 2], [2, 0], [0, 0]], 3).unwrap(), &ops).unwrap();
    let m = NetworkModel::new(
        "t".into(),
        [1, 1, 1, 3],
        BinarizationConfig::default(),
        SamplingMode::Random,
        alloc::vec![Stage::Layer(layer)],
        VotingHead::new(2, 4, 1.0).unwrap(),
        0,
    )
    .unwrap();
    let net = harden(&m);
    let got: Vec<Op> = net.nodes.iter().map(|n| n.op).collect();
    assert_eq!(got, ops);
    assert_eq!(net.nodes[1].a, NetRef::Input(1));
    assert_eq!(net.class_outputs, [[NetRef::Node(0), NetRef::Node(1)], [NetRef::Node(2), NetRef::Node(3)]]);
    net.validate().unwrap();
}

#[test]
fn hardened_netlist_matches_layerwise_hard_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for (k, c) in [(0, None), (1, Some(SkipConnective::Implication)), (2, Some(SkipConnective::Learned))] {
        let m = small_model(k, c, 11);
        let net = harden(&m);
        net.validate().unwrap();
        assert_eq!(net.nodes.len(), m.gate_count() + m.skip_gate_count());
        for _ in 0..100 {
            let x = bits_to_bools(&random_bits(m.input_width(), &mut rng));
            let trace = m.trace_hard(&x).unwrap();
            let counts = net.class_counts(&x).unwrap();
            let expect: Vec<f64> = m.head.scores_hard(trace.last().unwrap()).unwrap();
            let expect: Vec<u32> = expect.iter().map(|s| (s * m.head.temperature).round() as u32).collect();
            assert_eq!(counts, expect);
        }
    }
}

#[test]
fn depth_grows_three_per_block() {
    for k in 0..4 {
        let net = harden(&small_model(k, Some(SkipConnective::Implication), 0));
        assert_eq!(netlist_stats(&net).depth, 2 + 3 * k);
    }
}

#[test]
fn all_true_netlist_folds_to_constants() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut net = random_netlist(6, 40, 3, &mut rng);
    net.nodes.iter_mut().for_each(|n| n.op = Op::TRUE);
    let opt = optimize(&net, &Pass::DEFAULT);
    assert_eq!(opt.nodes.len(), 0);
    assert!(opt.class_outputs.iter().flatten().all(|&r| r == NetRef::Const(true)));
    assert_eq!(netlist_stats(&opt).node_count, 0);
    assert_equivalent(&net, &opt);
}

#[test]
fn pass_through_chain_collapses() {
    let mut nodes = alloc::vec![NetNode { op: Op::A, a: NetRef::Input(2), b: NetRef::Input(0) }];
    for k in 0..9 {
        nodes.push(NetNode { op: Op::A, a: NetRef::Node(k), b: NetRef::Input(1) });
    }
    let net = GateNetlist { input_count: 3, nodes, class_outputs: alloc::vec![alloc::vec![NetRef::Node(9)]], temperature: 1.0 };
    let opt = optimize(&net, &Pass::DEFAULT);
    assert!(opt.nodes.is_empty());
    assert_eq!(opt.class_outputs, [[NetRef::Input(2)]]);
}

#[test]
fn negations_fold_into_consumers() {
    use NetRef::*;
    let nodes = alloc::vec![
        NetNode { op: Op::NOT_A, a: Input(0), b: Input(0) },
        NetNode { op: Op::NOT_B, a: Input(0), b: Input(1) },
        NetNode { op: Op::AND, a: Node(0), b: Node(1) },
    ];
    let net = GateNetlist { input_count: 2, nodes, class_outputs: alloc::vec![alloc::vec![Node(2)]], temperature: 1.0 };
    let opt = optimize(&net, &Pass::DEFAULT);
    assert_eq!(opt.nodes, [NetNode { op: Op::NOR, a: Input(0), b: Input(1) }]);
    assert_equivalent(&net, &opt);
}

#[test]
fn every_pass_order_preserves_semantics() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let net = random_netlist(8, 200, 3, &mut rng);
    net.validate().unwrap();
    let mut orders: Vec<Vec<Pass>> = Pass::DEFAULT.iter().map(|&p| alloc::vec![p]).collect();
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let o = [a, b, c, d];
                    if (0..4).all(|i| o.contains(&i)) {
                        orders.push(o.iter().map(|&i| Pass::DEFAULT[i]).collect());
                    }
                }
            }
        }
    }
    assert_eq!(orders.len(), 4 + 24);
    for order in &orders {
        let opt = optimize(&net, order);
        opt.validate().unwrap();
        assert!(opt.nodes.len() <= net.nodes.len());
        assert_equivalent(&net, &opt);
    }
}

#[test]
fn pass_names_parse() {
    assert_eq!(Pass::parse_list("none").unwrap(), []);
    assert_eq!(Pass::parse_list("dead_elim, const_fold").unwrap(), [Pass::DeadElim, Pass::ConstFold]);
    assert!(Pass::parse_list("const_fold,inline").is_err());
}

#[test]
fn single_example_batch_matches_scalar() {
    let m = small_model(1, Some(SkipConnective::Implication), 3);
    let net = harden(&m);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_bits(m.input_width(), &mut rng);
    let batch = BitSliceBatch::pack(&[x.as_slice()]).unwrap();
    assert_eq!(eval_bitsliced(&net, &batch).unwrap(), [net.predict(&bits_to_bools(&x)).unwrap()]);
    let img = crate::data::BinarizedImage::from_bits([1, 2, 4, 4], x).unwrap();
    assert_eq!(eval_bitsliced(&net, &batch).unwrap()[0], m.predict(&img, true).unwrap());
}

#[test]
fn all_and_netlist_on_zero_input_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut net = random_netlist(10, 50, 2, &mut rng);
    for n in &mut net.nodes {
        n.op = Op::AND;
        for r in [&mut n.a, &mut n.b] {
            if let NetRef::Const(_) = r {
                *r = NetRef::Input(0);
            }
        }
    }
    let zeros = alloc::vec![0u8; 10];
    let batch = BitSliceBatch::pack(&alloc::vec![zeros.as_slice(); 64]).unwrap();
    let scores = scores_bitsliced(&net, &batch).unwrap();
    assert!(scores.iter().flatten().all(|&c| c == 0));
    assert_eq!(eval_bitsliced(&net, &batch).unwrap(), alloc::vec![0; 64]);
}

#[test]
fn bitsliced_matches_scalar_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = small_model(2, Some(SkipConnective::Xnor), 5);
    let net = harden(&m);
    let xs: Vec<Vec<u8>> = (0..150).map(|_| random_bits(m.input_width(), &mut rng)).collect();
    let refs: Vec<&[u8]> = xs.iter().map(|x| x.as_slice()).collect();
    let labels = eval_many(&net, &refs).unwrap();
    for (x, l) in xs.iter().zip(labels) {
        assert_eq!(l, net.predict(&bits_to_bools(x)).unwrap());
    }
    let bad = BitSliceBatch::pack(&[&[0u8; 3][..]]).unwrap();
    assert!(eval_bitsliced(&net, &bad).is_err());
    assert!(BitSliceBatch::pack(&alloc::vec![refs[0]; 65]).is_err());
}

#[test]
fn bitsliced_scores_count_large_groups() {
    let nodes = alloc::vec![NetNode { op: Op::OR, a: NetRef::Input(0), b: NetRef::Input(1) }];
    let group = alloc::vec![NetRef::Node(0); 300];
    let net = GateNetlist { input_count: 2, nodes, class_outputs: alloc::vec![group, alloc::vec![NetRef::Const(true); 299]], temperature: 1.0 };
    let xs: [&[u8]; 4] = [&[0, 0], &[0, 1], &[1, 0], &[1, 1]];
    let s = scores_bitsliced(&net, &BitSliceBatch::pack(&xs).unwrap()).unwrap();
    assert_eq!(s, [[0, 300, 300, 300], [299, 299, 299, 299]]);
    assert_eq!(eval_bitsliced(&net, &BitSliceBatch::pack(&xs).unwrap()).unwrap(), [1, 0, 0, 0]);
}

#[test]
fn stats_of_layered_model() {
    let m = build_layered("p", [1, 1, 1, 8], &[4, 2, 2], SamplingMode::Adjacent, SamplingMode::Adjacent, 2, 1.0, BinarizationConfig::default(), 0).unwrap();
    let s = netlist_stats(&harden(&m));
    assert_eq!((s.node_count, s.depth, s.class_count, s.vote_inputs), (8, 3, 2, 2));
    assert_eq!(s.opcode_histogram.iter().sum::<usize>(), 8);
    let expect = (4.0 / (64.0 * 16.0) + 2.0 / (16.0 * 16.0) + 2.0 / (4.0 * 16.0)) / 8.0;
    assert!((s.density_ratio - expect).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    #[test]
    fn optimization_is_sound_monotone_idempotent(seed in 0u64..10_000, inputs in 1usize..9, gates in 0usize..120) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_netlist(inputs, gates, 2, &mut rng);
        let once = optimize(&net, &Pass::DEFAULT);
        let twice = optimize(&once, &Pass::DEFAULT);
        prop_assert_eq!(&once, &twice);
        prop_assert!(once.nodes.len() <= net.nodes.len());
        for p in Pass::DEFAULT {
            prop_assert!(run_pass(&net, p).nodes.len() <= net.nodes.len());
        }
        for x in all_inputs(inputs) {
            prop_assert_eq!(net.class_counts(&x).unwrap(), once.class_counts(&x).unwrap());
        }
    }
}
