use super::Tensor;
use crate::error::{shape_err, Result};

/// Elementwise operations that appear between convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Relu,
    Add,
    UpsampleNearest(usize),
}

/// Dispatches `kind` over its operands: one for relu and upsampling, two for add.
pub fn elementwise(kind: Elementwise, inputs: &[&Tensor]) -> Result<Tensor> {
    match (kind, inputs) {
        (Elementwise::Relu, [x]) => Ok(relu(x)),
        (Elementwise::Add, [a, b]) => add(a, b),
        (Elementwise::UpsampleNearest(f), [x]) => upsample_nearest(x, f),
        (kind, _) => shape_err(format!("{kind:?} called with {} operands", inputs.len())),
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    relu_inplace(&mut out);
    out
}

pub fn relu_inplace(x: &mut Tensor) {
    for v in x.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut out = a.clone();
    add_assign(&mut out, b)?;
    Ok(out)
}

pub fn add_assign(acc: &mut Tensor, other: &Tensor) -> Result<()> {
    if acc.shape() != other.shape() {
        return shape_err(format!("add of {:?} and {:?}", acc.shape(), other.shape()));
    }
    for (a, b) in acc.data_mut().iter_mut().zip(other.data()) {
        *a += b;
    }
    if acc.is_finite() {
        Ok(())
    } else {
        Err(crate::Error::NonFinite("add".into()))
    }
}

pub fn scale(x: &Tensor, factor: f32) -> Tensor {
    let mut out = x.clone();
    for v in out.data_mut() {
        *v *= factor;
    }
    out
}

/// Replicates every pixel into a `factor`×`factor` tile.
pub fn upsample_nearest(x: &Tensor, factor: usize) -> Result<Tensor> {
    if factor == 0 {
        return shape_err("upsample factor must be positive");
    }
    let [n, c, h, w] = x.shape();
    let (oh, ow) = (h * factor, w * factor);
    let mut out = Tensor::zeros([n, c, oh, ow]);
    for b in 0..n {
        for ch in 0..c {
            let src = x.plane(b, ch);
            let dst = out.plane_mut(b, ch);
            for oy in 0..oh {
                let row = &src[(oy / factor) * w..(oy / factor + 1) * w];
                for (ox, d) in dst[oy * ow..(oy + 1) * ow].iter_mut().enumerate() {
                    *d = row[ox / factor];
                }
            }
        }
    }
    Ok(out)
}

/// Horizontal mirror of every plane.
pub fn mirror_width(x: &Tensor) -> Tensor {
    let [n, c, h, w] = x.shape();
    let mut out = x.clone();
    for b in 0..n {
        for ch in 0..c {
            let src = x.plane(b, ch);
            let dst = out.plane_mut(b, ch);
            for y in 0..h {
                for xx in 0..w {
                    dst[y * w + xx] = src[y * w + (w - 1 - xx)];
                }
            }
        }
    }
    out
}
