mod common;

use jointinv::checkpoint::Checkpoint;
use jointinv::data::{Scaler, SectionGrid};
use jointinv::eval::{evaluate, predict_section, r2};
use jointinv::model::{build_network, ModelConfig};
use proptest::prelude::*;

fn vecs(len: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    len.prop_flat_map(|n| (prop::collection::vec(-100.0f64..100.0, n), prop::collection::vec(-100.0f64..100.0, n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn r2_is_affine_invariant((y, p) in vecs(2..40), a in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0], b in -1e3f64..1e3) {
        let base = match r2(&y, &p) { Ok(v) => v, Err(_) => return Ok(()) };
        let ty: Vec<f64> = y.iter().map(|v| a * v + b).collect();
        let tp: Vec<f64> = p.iter().map(|v| a * v + b).collect();
        let moved = r2(&ty, &tp).unwrap();
        prop_assert!((base - moved).abs() < 1e-9 * base.abs().max(1.0), "{} vs {}", base, moved);
    }

    #[test]
    fn r2_never_exceeds_one((y, p) in vecs(2..40)) {
        if let Ok(v) = r2(&y, &p) {
            prop_assert!(v <= 1.0);
        }
        if let Ok(v) = r2(&y, &y) {
            prop_assert_eq!(v, 1.0);
        }
    }
}

#[test]
fn reloaded_checkpoint_predicts_identically() {
    let cfg = ModelConfig {
        n_blocks: 2,
        channels: 4,
        kernel: (5, 3),
        dilations: vec![1, 2],
        patch_width: 5,
    };
    let ck = Checkpoint {
        network: build_network(&cfg, 12).unwrap(),
        scaler_x: Scaler::new(0.01, 0.2).unwrap(),
        scaler_y: Scaler::new(6000.0, 900.0).unwrap(),
    };
    let mut r = common::rng(5);
    let seis = SectionGrid::new(20, 9, 1.0, common::random_tensor(&mut r, &[180], 0.3).data().to_vec()).unwrap();
    let truth = SectionGrid::new(20, 9, 1.0, common::random_tensor(&mut r, &[180], 1e3).data().to_vec()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.jlck");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    let a = predict_section(&ck.network, &seis, &ck.scaler_x, &ck.scaler_y).unwrap();
    let b = predict_section(&back.network, &seis, &back.scaler_x, &back.scaler_y).unwrap();
    assert_eq!(a, b);
    let (ra, rb) = (evaluate(&a, &truth, &[0]).unwrap(), evaluate(&b, &truth, &[0]).unwrap());
    assert_eq!(ra.average.to_bits(), rb.average.to_bits());
}

#[test]
fn batched_prediction_matches_single_trace_prediction() {
    let cfg = ModelConfig {
        n_blocks: 1,
        channels: 2,
        kernel: (3, 3),
        dilations: vec![1],
        patch_width: 3,
    };
    let net = build_network(&cfg, 1).unwrap();
    let s = Scaler::new(0.0, 1.0).unwrap();
    let mut r = common::rng(2);
    // More traces than one inference chunk.
    let seis = SectionGrid::new(6, 70, 1.0, common::random_tensor(&mut r, &[420], 1.0).data().to_vec()).unwrap();
    let all = predict_section(&net, &seis, &s, &s).unwrap();
    let one = jointinv::eval::predict_traces(&net, &seis, &[45], &s, &s).unwrap();
    assert_eq!(one[0], all.trace(45));
}
