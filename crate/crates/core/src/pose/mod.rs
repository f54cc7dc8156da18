//! Pose encoding and decoding around the network's heatmaps and tagmaps.

mod flip;
mod gradcheck;
mod group;
mod loss;
mod oks;
mod peaks;
mod render;
mod types;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::Tensor;

pub use flip::{flip_average, flip_merge, identity_pairs, unflip, validate_flip_pairs, COCO_FLIP_PAIRS};
pub use gradcheck::{finite_difference_check, numeric_gradients, random_loss_instance, GradCheck, LossInstance};
pub use group::{attach_tags, group_keypoints, group_tagged};
pub use loss::{
    combined_loss, heatmap_loss, loss_gradients, tag_loss, tag_loss_terms, total_loss, Grid, LossWeights, TagLoss,
};
pub use oks::oks_score;
pub use peaks::detect_peaks;
pub use render::{gaussian, render_ground_truth, GroundTruth};
pub use types::{Keypoint, PoseInstance, PoseSet};

/// Peak detection and grouping settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub threshold: f32,
    pub join_threshold: f64,
    pub max_persons: usize,
    pub refine: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self { threshold: 0.1, join_threshold: 1.0, max_persons: 30, refine: true }
    }
}

/// Peaks, then greedy tag grouping.
pub fn decode(heatmaps: &Tensor, tagmaps: &Tensor, cfg: &DecodeConfig) -> Result<PoseSet> {
    if heatmaps.shape() != tagmaps.shape() {
        return crate::error::shape_err(format!(
            "heatmaps {:?} and tagmaps {:?} differ",
            heatmaps.shape(),
            tagmaps.shape()
        ));
    }
    let peaks = detect_peaks(heatmaps, cfg.threshold, cfg.max_persons, cfg.refine)?;
    group_keypoints(&peaks, tagmaps, cfg.join_threshold)
}
