//! Property tests over the numeric core: gradient correctness against
//! finite differences, permutation invariance of the mean encoder, and
//! metric symmetries.

use dan_core::adversaries::DeepMeanEncoder;
use dan_core::evaluation::mmd2_rbf;
use dan_core::nn::{Activation, MlpNet};
use dan_core::tensor::Tensor;
use proptest::prelude::*;

fn finite_difference(
    values: &mut [f64],
    mut eval: impl FnMut(&[f64]) -> f64,
    h: f64,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    for i in 0..values.len() {
        let orig = values[i];
        values[i] = orig + h;
        let up = eval(values);
        values[i] = orig - h;
        let down = eval(values);
        values[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    out
}

fn bounded_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-2.0..2.0f64, len)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn mlp_input_gradients_match_finite_differences(
        x in bounded_vec(6),
        seed in 0u64..1_000,
    ) {
        let net = MlpNet::init(&[3, 10, 1], Activation::Tanh, Activation::Sigmoid, seed).unwrap();
        let t = Tensor::from_data(2, 3, x.clone()).unwrap();
        t.set_requires_grad(true);
        net.forward(&t).unwrap().sum().backward().unwrap();
        let ad = t.grad().unwrap();
        let mut vals = x;
        let fd = finite_difference(&mut vals, |v| {
            net.forward(&Tensor::from_data(2, 3, v.to_vec()).unwrap())
                .unwrap()
                .sum()
                .item()
        }, 1e-5);
        for (a, f) in ad.iter().zip(&fd) {
            let rel = (a - f).abs() / a.abs().max(f.abs()).max(1e-3);
            prop_assert!(rel < 1e-4, "{a} vs {f}");
        }
    }

    #[test]
    fn encoder_is_permutation_invariant(
        seed in 0u64..1_000,
        rows in 2usize..32,
        rotation in 1usize..31,
    ) {
        let rotation = rotation % rows.max(2);
        let net = MlpNet::init(&[2, 12, 6], Activation::Relu, Activation::Relu, seed).unwrap();
        let enc = DeepMeanEncoder::new(net);
        let data: Vec<f64> = (0..rows * 2)
            .map(|i| (((seed as f64) + i as f64) * 0.7311).sin() * 2.0)
            .collect();
        let x = Tensor::from_data(rows, 2, data.clone()).unwrap();
        let mut rotated = Vec::with_capacity(rows * 2);
        for i in 0..rows {
            let src = (i + rotation) % rows;
            rotated.extend_from_slice(&data[src * 2..(src + 1) * 2]);
        }
        let y = Tensor::from_data(rows, 2, rotated).unwrap();
        let a = enc.encode(&x).unwrap().to_vec();
        let b = enc.encode(&y).unwrap().to_vec();
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn backward_scales_linearly(
        w in bounded_vec(4),
        a in -3.0..3.0f64,
    ) {
        let grad_with_scale = |scale: f64| {
            let t = Tensor::from_data(2, 2, w.clone()).unwrap();
            t.set_requires_grad(true);
            t.tanh().sum().mul_scalar(scale).backward().unwrap();
            t.grad().unwrap()
        };
        let unit = grad_with_scale(1.0);
        let scaled = grad_with_scale(a);
        for (u, s) in unit.iter().zip(&scaled) {
            prop_assert!((a * u - s).abs() < 1e-10);
        }
    }

    #[test]
    fn mmd_symmetry_and_self_distance(
        a in bounded_vec(12),
        b in bounded_vec(8),
        bw in 0.2..3.0f64,
    ) {
        let ta = Tensor::from_data(6, 2, a).unwrap();
        let tb = Tensor::from_data(4, 2, b).unwrap();
        let ab = mmd2_rbf(&ta, &tb, bw).unwrap();
        let ba = mmd2_rbf(&tb, &ta, bw).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ab >= 0.0);
        prop_assert!(mmd2_rbf(&ta, &ta, bw).unwrap() < 1e-12);
    }
}
