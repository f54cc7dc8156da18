use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{combined_loss, loss_gradients, Grid, Keypoint, LossWeights, PoseInstance, PoseSet};
use crate::error::Result;

/// A random loss evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct LossInstance {
    pub pred_heatmaps: Grid,
    pub pred_tagmaps: Grid,
    pub gt_heatmaps: Grid,
    pub gt: PoseSet,
}

/// Draws `K ≤ 4`, extents `≤ 16`, `1 ≤ N ≤ 3` persons with at least one
/// labeled keypoint each, and uniform random maps.
pub fn random_loss_instance(rng: &mut impl Rng) -> LossInstance {
    let k = rng.gen_range(1..=4);
    let h = rng.gen_range(2..=16);
    let w = rng.gen_range(2..=16);
    let n = rng.gen_range(1..=3);
    let shape = [1, k, h, w];
    let mut grid = |lo: f64, hi: f64| Grid { shape, data: (0..k * h * w).map(|_| rng.gen_range(lo..hi)).collect() };
    let pred_heatmaps = grid(0.0, 1.0);
    let gt_heatmaps = grid(0.0, 1.0);
    let pred_tagmaps = grid(-1.5, 1.5);
    let mut gt = PoseSet::new(k);
    for _ in 0..n {
        let first = rng.gen_range(0..k);
        let mut kps = Vec::new();
        for kind in 0..k {
            if kind == first || rng.gen_bool(0.6) {
                kps.push(Keypoint::new(kind, rng.gen_range(0..w) as f32, rng.gen_range(0..h) as f32));
            }
        }
        gt.instances.push(PoseInstance::from_keypoints(k, kps).expect("one keypoint per type"));
    }
    LossInstance { pred_heatmaps, pred_tagmaps, gt_heatmaps, gt }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub trials: usize,
    /// Largest of `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)` over
    /// trials, computed separately for the heatmap and tagmap gradients.
    pub max_rel_error: f64,
    pub step: f64,
}

fn rel_error(a: &[f64], n: &[f64]) -> f64 {
    let diff = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nn = n.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na.max(nn);
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}

/// Central differences `(L(x + h) − L(x − h)) / 2h` for every map entry.
pub fn numeric_gradients(inst: &LossInstance, weights: &LossWeights, h: f64) -> Result<(Grid, Grid)> {
    let eval = |heat: &Grid, tags: &Grid| combined_loss(heat, tags, &inst.gt_heatmaps, &inst.gt, weights);
    let mut dh = Grid::zeros(inst.pred_heatmaps.shape);
    let mut heat = inst.pred_heatmaps.clone();
    for i in 0..heat.data.len() {
        let v = heat.data[i];
        heat.data[i] = v + h;
        let up = eval(&heat, &inst.pred_tagmaps)?;
        heat.data[i] = v - h;
        let down = eval(&heat, &inst.pred_tagmaps)?;
        heat.data[i] = v;
        dh.data[i] = (up - down) / (2.0 * h);
    }
    let mut dt = Grid::zeros(inst.pred_tagmaps.shape);
    let mut tags = inst.pred_tagmaps.clone();
    for i in 0..tags.data.len() {
        let v = tags.data[i];
        tags.data[i] = v + h;
        let up = eval(&inst.pred_heatmaps, &tags)?;
        tags.data[i] = v - h;
        let down = eval(&inst.pred_heatmaps, &tags)?;
        tags.data[i] = v;
        dt.data[i] = (up - down) / (2.0 * h);
    }
    Ok((dh, dt))
}

/// Compares analytic and numeric gradients on `trials` random instances.
pub fn finite_difference_check(seed: u64, trials: usize, step: f64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = LossWeights::default();
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let inst = random_loss_instance(&mut rng);
        let (ah, at) = loss_gradients(&inst.pred_heatmaps, &inst.pred_tagmaps, &inst.gt_heatmaps, &inst.gt, &weights)?;
        let (nh, nt) = numeric_gradients(&inst, &weights, step)?;
        worst = worst.max(rel_error(&ah.data, &nh.data)).max(rel_error(&at.data, &nt.data));
    }
    Ok(GradCheck { trials, max_rel_error: worst, step })
}
