mod common;

use common::*;
use pansharp::nn::{conv_forward, Padding, Tensor4};
use proptest::prelude::*;

#[test]
fn integer_sweep_is_exact() {
    let r = conv_sweep(1, true);
    assert!(r.cases > 10_000);
    assert_eq!(r.worst, 0.0);
}

#[test]
fn real_sweep_within_rounding() {
    let r = conv_sweep(2, false);
    assert!(r.worst < 1e-6, "worst {:.3e}", r.worst);
}

#[test]
fn reflect_is_half_sample_symmetric() {
    let got: Vec<usize> = (-3..6).map(|i| reflect(i, 3)).collect();
    assert_eq!(got, vec![2, 1, 0, 0, 1, 2, 2, 1, 0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn larger_shapes_match_oracle(
        n in 1usize..3, cin in 1usize..6, cout in 1usize..6,
        h in 9usize..20, w in 9usize..20, ki in 0usize..4, same: bool, seed: u64,
    ) {
        let k = [1, 3, 5, 9][ki];
        let mut r = rng(seed);
        let x = random_tensor(&mut r, [n, cin, h, w], -1.0, 1.0);
        let wt = random_tensor(&mut r, [cout, cin, k, k], -1.0, 1.0);
        let b = vec![0.25f32; cout];
        let pad = if same { Padding::SameMirror } else { Padding::Valid };
        let y = conv_forward(&x, &wt, &b, pad).unwrap();
        let (want, mag, shape) = naive_conv(&x, &wt, &b, same);
        prop_assert_eq!(y.shape(), shape);
        for ((g, e), m) in y.data.iter().zip(&want).zip(&mag) {
            prop_assert!((*g as f64 - e).abs() <= 1e-6 * m);
        }
    }

    #[test]
    fn conv_is_linear_in_input(seed: u64) {
        let mut r = rng(seed);
        let a = random_tensor(&mut r, [1, 2, 6, 7], -1.0, 1.0);
        let b = random_tensor(&mut r, [1, 2, 6, 7], -1.0, 1.0);
        let w = random_tensor(&mut r, [3, 2, 3, 3], -1.0, 1.0);
        let z = vec![0.0; 3];
        let sum = Tensor4 { data: a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect(), ..a };
        let ya = conv_forward(&a, &w, &z, Padding::SameMirror).unwrap();
        let yb = conv_forward(&b, &w, &z, Padding::SameMirror).unwrap();
        let ys = conv_forward(&sum, &w, &z, Padding::SameMirror).unwrap();
        for i in 0..ys.len() {
            prop_assert!((ys.data[i] - ya.data[i] - yb.data[i]).abs() < 1e-5);
        }
    }
}
