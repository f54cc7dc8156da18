//! The tensor kernels on small inputs: standard, depthwise and transposed
//! convolution, batchnorm folding and nearest upsampling.
//!
//! cargo run --example conv_kernels

use bhrnet::tensor::{
    batchnorm_infer, conv2d, conv_transpose2d, depthwise_conv2d, fold_batchnorm, upsample_nearest, BatchNormParams,
    ConvParams,
};
use bhrnet::Tensor;

fn main() -> bhrnet::Result<()> {
    let x = Tensor::from_fn([1, 2, 4, 4], |_, c, y, x| (c * 16 + y * 4 + x) as f32);

    let box_filter = ConvParams::new(Tensor::full([1, 2, 3, 3], 1.0), 1, 1, 1);
    let y = conv2d(&x, &box_filter)?;
    println!("3x3 box filter over both channels, centre row: {:?}", &y.plane(0, 0)[4..8]);

    let dw = ConvParams::new(Tensor::full([2, 1, 3, 3], 1.0 / 9.0), 1, 1, 2);
    let d = depthwise_conv2d(&x, &dw)?;
    println!("depthwise mean filter keeps channels apart: {:?}", d.shape());

    let up = ConvParams::new(Tensor::full([2, 2, 4, 4], 0.25), 2, 1, 1);
    println!("stride-2 transposed conv doubles extents: {:?}", conv_transpose2d(&x, &up)?.shape());
    println!("nearest upsampling x2: {:?}", upsample_nearest(&x, 2)?.shape());

    let bn = BatchNormParams { mean: vec![1.0], variance: vec![4.0], scale: vec![2.0], shift: vec![0.5], epsilon: 0.0 };
    let separate = batchnorm_infer(&y, &bn)?;
    let folded = conv2d(&x, &fold_batchnorm(&box_filter, &bn)?)?;
    println!("conv+bn vs folded conv, max difference {:e}", separate.max_abs_diff(&folded)?);
    Ok(())
}
