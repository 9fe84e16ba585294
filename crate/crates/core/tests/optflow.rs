mod common;

use cgan_anomaly::optflow::{decode_flow, encode_flow, estimate_flow_gray, FlowConfig, FlowField, FlowRange};
use common::flow::{shift_wrapped, texture};
use proptest::prelude::*;

#[test]
fn constant_translation_is_recovered() {
    let cfg = FlowConfig::default();
    for (h, w, seed) in [(64, 64, 1u64), (64, 96, 2), (48, 64, 3)] {
        let a = texture(h, w, seed);
        let b = shift_wrapped(&a, h, w, 2, 0);
        let f = estimate_flow_gray(&a, &b, h, w, &cfg).unwrap();
        let truth = FlowField::constant(h, w, 2.0, 0.0);
        let epe = f.mean_endpoint_error(&truth, 8);
        println!("{h}x{w}: mean EPE {epe:.4}");
        assert!(epe <= 0.25, "mean endpoint error {epe}");
    }
}

#[test]
fn static_scene_has_no_motion() {
    let a = texture(64, 64, 9);
    let f = estimate_flow_gray(&a, &a, 64, 64, &FlowConfig::default()).unwrap();
    let max = f.u.iter().chain(&f.v).fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(max <= 0.05);
}

#[test]
fn estimator_is_deterministic() {
    let a = texture(32, 32, 4);
    let b = shift_wrapped(&a, 32, 32, 1, 1);
    let cfg = FlowConfig::default();
    let f1 = estimate_flow_gray(&a, &b, 32, 32, &cfg).unwrap();
    let f2 = estimate_flow_gray(&a, &b, 32, 32, &cfg).unwrap();
    assert_eq!(f1, f2);
}

proptest! {
    #[test]
    fn magnitude_channel_is_euclidean_norm(vals in prop::collection::vec((-20.0f64..20.0, -20.0f64..20.0), 16)) {
        let (u, v): (Vec<f64>, Vec<f64>) = vals.into_iter().unzip();
        let f = FlowField::new(4, 4, u.clone(), v.clone()).unwrap();
        let img = encode_flow(&f, &FlowRange::symmetric(5.0)).unwrap();
        let mag = img.raw_channel(2);
        for i in 0..16 {
            let expect = (u[i] * u[i] + v[i] * v[i]).sqrt();
            prop_assert!(mag[i] >= -1e-12);
            prop_assert!((mag[i] - expect).abs() <= 1e-6 * expect.max(1.0));
        }
    }

    #[test]
    fn decode_inverts_encode(vals in prop::collection::vec((-4.0f32..4.0, -4.0f32..4.0), 25)) {
        let (u, v): (Vec<f32>, Vec<f32>) = vals.into_iter().unzip();
        let f = FlowField::new(5, 5, u, v).unwrap();
        let range = FlowRange { lo: [-4.0, -4.0, 0.0], hi: [4.0, 4.0, 5.7] };
        let back = decode_flow(&encode_flow(&f, &range).unwrap());
        let tol = (8.0 / 255.0) as f32;
        for i in 0..25 {
            prop_assert!((back.u[i] - f.u[i]).abs() <= tol);
            prop_assert!((back.v[i] - f.v[i]).abs() <= tol);
        }
    }
}
