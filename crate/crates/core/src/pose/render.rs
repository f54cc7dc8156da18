use super::PoseSet;
use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

/// Ground-truth maps rendered from annotated poses.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Per-pixel maximum over persons of `exp(-d² / σ²)`.
    pub heatmaps: Tensor,
    /// Tag of the person whose Gaussian dominates each pixel; 0 where no
    /// person of that type is labeled.
    pub tagmaps: Tensor,
    /// 1 at the rounded position of every labeled keypoint.
    pub mask: Tensor,
}

/// `exp(-d² / σ²)` for squared distance `d2`.
pub fn gaussian(d2: f64, sigma: f64) -> f64 {
    (-d2 / (sigma * sigma)).exp()
}

/// Renders `K` heatmaps, tagmaps and a keypoint mask of extents `(h, w)`.
///
/// Overlapping persons combine by per-pixel maximum; on equal values the
/// lower person index owns the pixel's tag.
pub fn render_ground_truth(poses: &PoseSet, extents: (usize, usize), sigma: f64) -> Result<GroundTruth> {
    poses.validate()?;
    if !(sigma > 0.0) {
        return Err(Error::Config(format!("heatmap sigma must be positive, got {sigma}")));
    }
    let (h, w) = extents;
    let k = poses.num_keypoints;
    for (n, inst) in poses.instances.iter().enumerate() {
        for kp in inst.labeled() {
            if !(kp.x >= 0.0 && kp.y >= 0.0 && kp.x <= (w as f32 - 1.0) && kp.y <= (h as f32 - 1.0)) {
                return shape_err(format!(
                    "person {n} keypoint {} at ({}, {}) lies outside {w}x{h}",
                    kp.kind, kp.x, kp.y
                ));
            }
        }
    }
    let mut heat = Tensor::zeros([1, k, h, w]);
    let mut tags = Tensor::zeros([1, k, h, w]);
    let mut mask = Tensor::zeros([1, k, h, w]);
    for kind in 0..k {
        let mut best = vec![f64::NEG_INFINITY; h * w];
        for inst in &poses.instances {
            let Some(kp) = inst.keypoints[kind] else { continue };
            let (px, py) = (kp.x as f64, kp.y as f64);
            for y in 0..h {
                for x in 0..w {
                    let d2 = (x as f64 - px).powi(2) + (y as f64 - py).powi(2);
                    let v = gaussian(d2, sigma);
                    let i = y * w + x;
                    if v > best[i] {
                        best[i] = v;
                        heat.plane_mut(0, kind)[i] = v as f32;
                        tags.plane_mut(0, kind)[i] = kp.tag;
                    }
                }
            }
            let (r, c) = kp.pixel();
            mask.set(0, kind, r, c, 1.0);
        }
    }
    Ok(GroundTruth { heatmaps: heat, tagmaps: tags, mask })
}
