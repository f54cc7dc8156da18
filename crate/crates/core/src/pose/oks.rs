use super::PoseInstance;
use crate::error::{shape_err, Error, Result};

/// Object keypoint similarity: the mean over labeled ground-truth keypoints
/// of `exp(-d² / (2 s² k²))`. A labeled keypoint without a prediction
/// contributes 0.
pub fn oks_score(pred: &PoseInstance, gt: &PoseInstance, scale: f64, k: &[f64]) -> Result<f64> {
    if pred.keypoints.len() != gt.keypoints.len() || k.len() != gt.keypoints.len() {
        return shape_err(format!(
            "{} predicted, {} ground-truth and {} constant slots",
            pred.keypoints.len(),
            gt.keypoints.len(),
            k.len()
        ));
    }
    if !(scale > 0.0) || k.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::Config("OKS scale and constants must be positive".into()));
    }
    let mut total = 0.0;
    let mut labeled = 0usize;
    for ((g, p), &ki) in gt.keypoints.iter().zip(&pred.keypoints).zip(k) {
        let Some(g) = g else { continue };
        labeled += 1;
        if let Some(p) = p {
            let d2 = (p.x as f64 - g.x as f64).powi(2) + (p.y as f64 - g.y as f64).powi(2);
            total += (-d2 / (2.0 * scale * scale * ki * ki)).exp();
        }
    }
    if labeled == 0 {
        return Err(Error::Undefined("OKS of an instance without labeled keypoints".into()));
    }
    Ok(total / labeled as f64)
}
