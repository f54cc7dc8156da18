mod common;

use bhrnet::tensor::{
    add, batchnorm_infer, conv2d, conv_transpose2d, depthwise_conv2d, elementwise, fold_batchnorm, relu,
    upsample_nearest, ConvParams, Elementwise, Tensor,
};
use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-5;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn conv2d_matches_oracle(seed in any::<u64>()) {
        let case = random_conv_case(&mut rng(seed), false);
        let out = conv2d(&case.input, &case.params).unwrap();
        prop_assert_eq!(close(&out, &conv_oracle(&case.input, &case.params), TOL), Ok(()));
    }

    #[test]
    fn depthwise_matches_oracle(seed in any::<u64>()) {
        let case = random_conv_case(&mut rng(seed), true);
        let out = depthwise_conv2d(&case.input, &case.params).unwrap();
        prop_assert_eq!(close(&out, &conv_oracle(&case.input, &case.params), TOL), Ok(()));
        // The general kernel agrees on depthwise weights too.
        prop_assert_eq!(close(&conv2d(&case.input, &case.params).unwrap(), &conv_oracle(&case.input, &case.params), TOL), Ok(()));
    }

    #[test]
    fn conv_transpose_matches_oracle(seed in any::<u64>()) {
        let mut r = rng(seed);
        let depthwise = r.gen_bool(0.3);
        let mut case = random_conv_case(&mut r, depthwise);
        if case.params.bias.is_some() {
            case.params.bias = Some((0..case.params.in_channels()).map(|_| r.gen_range(-1.0..1.0)).collect());
        }
        let [_, _, h, w] = case.input.shape();
        let (oh, ow) = case.params.output_extents(h, w).unwrap();
        let y = random_tensor(&mut r, [case.input.batch(), case.params.out_channels(), oh, ow]);
        let out = conv_transpose2d(&y, &case.params).unwrap();
        prop_assert_eq!(out.shape(), [case.input.batch(), case.params.in_channels(), h, w]);
        prop_assert_eq!(close(&out, &conv_transpose_oracle(&y, &case.params), TOL), Ok(()));
    }

    #[test]
    fn transpose_is_the_adjoint(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut case = random_conv_case(&mut r, false);
        case.params.bias = None;
        let fx = conv2d(&case.input, &case.params).unwrap();
        let y = random_tensor(&mut r, fx.shape());
        let lhs = dot(&fx, &y);
        let rhs = dot(&case.input, &conv_transpose2d(&y, &case.params).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-4 * lhs.abs().max(rhs.abs()).max(1.0), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn batchnorm_matches_oracle(seed in any::<u64>()) {
        let mut r = rng(seed);
        let c = r.gen_range(1..=5);
        let shape = [r.gen_range(1..=2), c, r.gen_range(1..=6), r.gen_range(1..=6)];
        let x = random_tensor(&mut r, shape);
        let bn = random_batchnorm(&mut r, c);
        prop_assert_eq!(close(&batchnorm_infer(&x, &bn).unwrap(), &batchnorm_oracle(&x, &bn), TOL), Ok(()));
    }

    #[test]
    fn folded_batchnorm_matches_composition(seed in any::<u64>()) {
        let mut r = rng(seed);
        let case = random_conv_case(&mut r, false);
        let bn = random_batchnorm(&mut r, case.params.out_channels());
        let conv_out = Tensor::new(
            conv2d(&case.input, &case.params).unwrap().shape(),
            conv_oracle(&case.input, &case.params).iter().map(|&v| v as f32).collect(),
        ).unwrap();
        let expected = batchnorm_oracle(&conv_out, &bn);
        let folded = conv2d(&case.input, &fold_batchnorm(&case.params, &bn).unwrap()).unwrap();
        prop_assert_eq!(close(&folded, &expected, 1e-4), Ok(()));
    }

    #[test]
    fn elementwise_ops_match_oracles(seed in any::<u64>(), factor in 1usize..4) {
        let mut r = rng(seed);
        let shape = [r.gen_range(1..=2), r.gen_range(1..=4), r.gen_range(1..=5), r.gen_range(1..=5)];
        let a = random_tensor(&mut r, shape);
        let b = random_tensor(&mut r, shape);
        let relu_ref: Vec<f64> = a.data().iter().map(|&v| (v as f64).max(0.0)).collect();
        let add_ref: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| *x as f64 + *y as f64).collect();
        prop_assert_eq!(close(&relu(&a), &relu_ref, TOL), Ok(()));
        prop_assert_eq!(close(&add(&a, &b).unwrap(), &add_ref, TOL), Ok(()));
        prop_assert_eq!(close(&upsample_nearest(&a, factor).unwrap(), &upsample_oracle(&a, factor), TOL), Ok(()));
        prop_assert_eq!(elementwise(Elementwise::UpsampleNearest(factor), &[&a]).unwrap(), upsample_nearest(&a, factor).unwrap());
        prop_assert_eq!(elementwise(Elementwise::Add, &[&a, &b]).unwrap(), add(&a, &b).unwrap());
    }

    #[test]
    fn upsampling_then_stride_sampling_is_identity(seed in any::<u64>(), factor in 1usize..4) {
        let mut r = rng(seed);
        let shape = [1, 2, r.gen_range(1..=5), r.gen_range(1..=5)];
        let a = random_tensor(&mut r, shape);
        let up = upsample_nearest(&a, factor).unwrap();
        let back = Tensor::from_fn(a.shape(), |n, c, y, x| up.at(n, c, y * factor, x * factor));
        prop_assert_eq!(back, a);
    }
}

#[test]
fn hand_computed_convolution() {
    // 3x3 ones kernel with padding 1 on a 3x3 ramp: centre sums all nine values.
    let x = Tensor::from_fn([1, 1, 3, 3], |_, _, y, x| (y * 3 + x) as f32);
    let p = ConvParams::new(Tensor::full([1, 1, 3, 3], 1.0), 1, 1, 1);
    let out = conv2d(&x, &p).unwrap();
    assert_eq!(out.at(0, 0, 1, 1), 36.0);
    assert_eq!(out.at(0, 0, 0, 0), 0.0 + 1.0 + 3.0 + 4.0);
}

#[test]
fn mismatched_shapes_are_errors() {
    let p = ConvParams::new(Tensor::full([2, 3, 3, 3], 1.0), 1, 1, 1);
    assert!(conv2d(&Tensor::zeros([1, 2, 4, 4]), &p).is_err());
    assert!(conv_transpose2d(&Tensor::zeros([1, 3, 4, 4]), &p).is_err());
    assert!(depthwise_conv2d(&Tensor::zeros([1, 2, 4, 4]), &p).is_err());
    assert!(add(&Tensor::zeros([1, 1, 2, 2]), &Tensor::zeros([1, 1, 2, 3])).is_err());
    assert!(upsample_nearest(&Tensor::zeros([1, 1, 2, 2]), 0).is_err());
}

#[test]
fn non_finite_input_is_reported() {
    let mut x = Tensor::zeros([1, 1, 3, 3]);
    x.set(0, 0, 1, 1, f32::NAN);
    let p = ConvParams::new(Tensor::full([1, 1, 3, 3], 1.0), 1, 1, 1);
    assert!(matches!(conv2d(&x, &p), Err(bhrnet::Error::NonFinite(_))));
}

#[test]
fn four_filters_over_a_two_by_three_by_five_by_five_batch() {
    let mut r = rng(44);
    let x = random_tensor(&mut r, [2, 3, 5, 5]);
    let p = ConvParams::new(random_tensor(&mut r, [4, 3, 3, 3]), 1, 1, 1).with_bias(vec![0.5, -0.5, 0.25, 0.0]);
    let out = conv2d(&x, &p).unwrap();
    assert_eq!(out.shape(), [2, 4, 5, 5]);
    close(&out, &conv_oracle(&x, &p), 1e-5).unwrap();
}
