use super::*;
use crate::data::BinarizationConfig;
use crate::network::{build_architecture, build_layered, ArchitectureOptions, SamplingMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_dbn(connective: SkipConnective, seed: u64) -> NetworkModel {
    let opts = ArchitectureOptions {
        skip: Some(connective),
        voting_per_class: Some(6),
        temperature: 3.0,
        seed,
        ..Default::default()
    };
    build_architecture("DBN-1", [1, 2, 3, 3], 3, &opts).unwrap()
}

fn random_inputs(d: usize, n: usize, seed: u64) -> Vec<Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..d).map(|_| rng.random_range(0..2u8)).collect()).collect()
}

fn as_refs(v: &[Vec<u8>]) -> Vec<&[u8]> {
    v.iter().map(|x| x.as_slice()).collect()
}

fn params_f64(model: &NetworkModel) -> Vec<Vec<f64>> {
    model.param_groups().iter().map(|g| g.iter().map(|&v| v as f64).collect()).collect()
}

#[test]
fn batched_forward_matches_per_example_mixture() {
    for c in [SkipConnective::Implication, SkipConnective::Learned, SkipConnective::Xnor] {
        let m = small_dbn(c, 5);
        let inputs = random_inputs(m.input_width(), 7, 1);
        let mut ws = Workspace::<f64>::new();
        forward(&m, &m.param_groups(), &as_refs(&inputs), &mut ws).unwrap();
        let scores = class_scores(&m, &ws);
        for (lane, x) in inputs.iter().enumerate() {
            let xf: Vec<f64> = x.iter().map(|&b| b as f64).collect();
            let trace = m.trace_soft(&xf).unwrap();
            for (i, layer) in trace.iter().enumerate() {
                let got = ws.layer_output(i, lane);
                for (a, b) in got.iter().zip(layer) {
                    assert!((a - b).abs() < 1e-12, "{c:?} layer {i}");
                }
            }
            let expect = m.head.scores_soft(trace.last().unwrap()).unwrap();
            for (a, b) in scores[lane].iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn finite_difference_gradients() {
    for (c, seed) in [(SkipConnective::Implication, 2), (SkipConnective::Learned, 3)] {
        let m = small_dbn(c, seed);
        let inputs = random_inputs(m.input_width(), 5, seed);
        let labels: Vec<u32> = (0..5).map(|i| i % 3).collect();
        let mut p = params_f64(&m);
        let refs: Vec<&[f64]> = p.iter().map(|g| g.as_slice()).collect();
        let (_, grads) = loss_and_grad::<f64, f64>(&m, &refs, &as_refs(&inputs), &labels).unwrap();
        let h = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..150 {
            let g = rng.random_range(0..p.len());
            let i = rng.random_range(0..p[g].len());
            let orig = p[g][i];
            p[g][i] = orig + h;
            let up = {
                let r: Vec<&[f64]> = p.iter().map(|g| g.as_slice()).collect();
                loss_at::<f64, f64>(&m, &r, &as_refs(&inputs), &labels).unwrap()
            };
            p[g][i] = orig - h;
            let down = {
                let r: Vec<&[f64]> = p.iter().map(|g| g.as_slice()).collect();
                loss_at::<f64, f64>(&m, &r, &as_refs(&inputs), &labels).unwrap()
            };
            p[g][i] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = grads[g][i];
            assert!(
                (fd - an).abs() <= 1e-8 + 1e-4 * fd.abs().max(an.abs()),
                "{c:?} group {g} logit {i}: fd {fd} analytic {an}"
            );
        }
    }
}

#[test]
fn uniform_logits_give_log_class_count() {
    let mut m = small_dbn(SkipConnective::Implication, 1);
    for g in m.param_groups_mut() {
        g.iter_mut().for_each(|v| *v = 0.25);
    }
    let inputs = random_inputs(m.input_width(), 4, 9);
    let mut ws = Workspace::<f32>::new();
    forward(&m, &m.param_groups(), &as_refs(&inputs), &mut ws).unwrap();
    let (l, _) = loss(&m, &[0, 1, 2, 0], &ws).unwrap();
    assert!((l - 3f64.ln()).abs() < 1e-6);
}

#[test]
fn one_hot_soft_forward_is_exactly_hard() {
    let mut m = build_layered(
        "r",
        [1, 1, 1, 12],
        &[30, 20, 10],
        SamplingMode::Random,
        SamplingMode::Random,
        2,
        1.0,
        BinarizationConfig::default(),
        4,
    )
    .unwrap();
    m.harden_logits();
    let inputs = random_inputs(12, 16, 4);
    let mut ws = Workspace::<f32>::new();
    forward(&m, &m.param_groups(), &as_refs(&inputs), &mut ws).unwrap();
    for (lane, x) in inputs.iter().enumerate() {
        let xb: Vec<bool> = x.iter().map(|&b| b == 1).collect();
        for (i, layer) in m.trace_hard(&xb).unwrap().iter().enumerate() {
            let soft = ws.layer_output(i, lane);
            let expect: Vec<f32> = layer.iter().map(|&b| b as u8 as f32).collect();
            assert_eq!(soft, expect);
        }
    }
}

#[test]
fn rejects_bad_shapes() {
    let m = small_dbn(SkipConnective::And, 0);
    let mut ws = Workspace::<f32>::new();
    let short = vec![0u8; 3];
    assert!(forward(&m, &m.param_groups(), &[short.as_slice()], &mut ws).is_err());
    assert!(matches!(forward(&m, &m.param_groups(), &[], &mut ws), Err(Error::Empty)));
    let inputs = random_inputs(m.input_width(), 2, 0);
    forward(&m, &m.param_groups(), &as_refs(&inputs), &mut ws).unwrap();
    assert!(loss(&m, &[0], &ws).is_err());
    assert!(loss(&m, &[0, 7], &ws).is_err());
}

#[test]
fn non_finite_logits_are_reported() {
    let m = small_dbn(SkipConnective::Implication, 0);
    let mut p: Vec<Vec<f32>> = m.param_groups().iter().map(|g| g.to_vec()).collect();
    p[1][3] = f32::NAN;
    let refs: Vec<&[f32]> = p.iter().map(|g| g.as_slice()).collect();
    let inputs = random_inputs(m.input_width(), 2, 0);
    let mut ws = Workspace::<f32>::new();
    let r = forward(&m, &refs, &as_refs(&inputs), &mut ws);
    assert!(matches!(r, Err(Error::NonFinite { layer: 1 })), "{r:?}");
}
