//! Heatmap and tag losses with closed-form gradients.
//!
//! Everything here runs in `f64` so that finite-difference checks are
//! meaningful; [`Grid`] converts from and to [`Tensor`].

use serde::{Deserialize, Serialize};

use super::PoseSet;
use crate::error::{config_err, shape_err, Error, Result};
use crate::tensor::Tensor;

/// A `1×K×H×W` map in double precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub shape: [usize; 4],
    pub data: Vec<f64>,
}

impl Grid {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self { shape, data: vec![0.0; shape.iter().product()] }
    }

    pub fn index(&self, k: usize, y: usize, x: usize) -> usize {
        (k * self.shape[2] + y) * self.shape[3] + x
    }

    pub fn at(&self, k: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(k, y, x)]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(self.shape, self.data.iter().map(|&v| v as f32).collect()).expect("length matches shape")
    }
}

impl From<&Tensor> for Grid {
    fn from(t: &Tensor) -> Self {
        Self { shape: t.shape(), data: t.data().iter().map(|&v| v as f64).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub heatmap_sigma: f64,
    pub push_sigma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 0.99, beta: 0.01, heatmap_sigma: 2.0, push_sigma: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return config_err(format!("loss weights must be non-negative, got {} and {}", self.alpha, self.beta));
        }
        if !(self.heatmap_sigma > 0.0 && self.push_sigma > 0.0) {
            return config_err("sigmas must be positive");
        }
        Ok(())
    }
}

/// `(1 / (K·H·W)) · Σ (pred − gt)²`.
pub fn heatmap_loss(pred: &Grid, gt: &Grid) -> Result<f64> {
    if pred.shape != gt.shape {
        return shape_err(format!("heatmaps {:?} vs ground truth {:?}", pred.shape, gt.shape));
    }
    if pred.data.is_empty() {
        return Err(Error::Undefined("heatmap loss over empty maps".into()));
    }
    let sum: f64 = pred.data.iter().zip(&gt.data).map(|(p, g)| (p - g) * (p - g)).sum();
    Ok(sum / pred.data.len() as f64)
}

/// Flat tagmap indices of each person's labeled keypoints; persons without
/// any labeled keypoint are skipped.
fn sample_sites(tagmaps: &Grid, gt: &PoseSet) -> Result<Vec<Vec<usize>>> {
    gt.validate()?;
    let [_, k, h, w] = tagmaps.shape;
    if gt.num_keypoints != k {
        return shape_err(format!("{} keypoint types vs {k} tagmaps", gt.num_keypoints));
    }
    let mut persons = Vec::new();
    for (n, inst) in gt.instances.iter().enumerate() {
        let mut sites = Vec::new();
        for kp in inst.labeled() {
            let (r, c) = kp.pixel();
            if kp.x < 0.0 || kp.y < 0.0 || r >= h || c >= w {
                return shape_err(format!("person {n} keypoint {} at ({}, {}) outside {w}x{h}", kp.kind, kp.x, kp.y));
            }
            sites.push(tagmaps.index(kp.kind, r, c));
        }
        if !sites.is_empty() {
            persons.push(sites);
        }
    }
    if persons.is_empty() {
        return Err(Error::Undefined("tag loss needs at least one labeled person".into()));
    }
    Ok(persons)
}

/// Pull and push parts of the tag loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TagLoss {
    pub pull: f64,
    pub push: f64,
}

impl TagLoss {
    pub fn total(&self) -> f64 {
        self.pull + self.push
    }
}

fn means(tagmaps: &Grid, persons: &[Vec<usize>]) -> Vec<f64> {
    persons.iter().map(|s| s.iter().map(|&i| tagmaps.data[i]).sum::<f64>() / s.len() as f64).collect()
}

/// Pull `(1/N) Σ_n Σ_k (T_k(p_nk) − T̄_n)²` and push
/// `(1/N²) Σ_n Σ_{n'≠n} exp(−(T̄_n − T̄_n')² / (2σ²))`.
pub fn tag_loss_terms(tagmaps: &Grid, gt: &PoseSet, push_sigma: f64) -> Result<TagLoss> {
    if !(push_sigma > 0.0) {
        return config_err("push sigma must be positive");
    }
    let persons = sample_sites(tagmaps, gt)?;
    let n = persons.len() as f64;
    let m = means(tagmaps, &persons);
    let pull = persons
        .iter()
        .zip(&m)
        .map(|(s, &mean)| s.iter().map(|&i| (tagmaps.data[i] - mean).powi(2)).sum::<f64>())
        .sum::<f64>()
        / n;
    let two_s2 = 2.0 * push_sigma * push_sigma;
    let mut push = 0.0;
    for (a, ma) in m.iter().enumerate() {
        for (b, mb) in m.iter().enumerate() {
            if a != b {
                push += (-(ma - mb).powi(2) / two_s2).exp();
            }
        }
    }
    Ok(TagLoss { pull, push: push / (n * n) })
}

pub fn tag_loss(tagmaps: &Grid, gt: &PoseSet, push_sigma: f64) -> Result<f64> {
    tag_loss_terms(tagmaps, gt, push_sigma).map(|t| t.total())
}

/// `α·lh + β·lt`.
pub fn total_loss(lh: f64, lt: f64, weights: &LossWeights) -> f64 {
    weights.alpha * lh + weights.beta * lt
}

/// The full weighted objective.
pub fn combined_loss(
    pred_heatmaps: &Grid,
    pred_tagmaps: &Grid,
    gt_heatmaps: &Grid,
    gt: &PoseSet,
    weights: &LossWeights,
) -> Result<f64> {
    weights.validate()?;
    let lh = heatmap_loss(pred_heatmaps, gt_heatmaps)?;
    let lt = tag_loss(pred_tagmaps, gt, weights.push_sigma)?;
    Ok(total_loss(lh, lt, weights))
}

/// Gradients of [`combined_loss`] with respect to both predicted maps.
pub fn loss_gradients(
    pred_heatmaps: &Grid,
    pred_tagmaps: &Grid,
    gt_heatmaps: &Grid,
    gt: &PoseSet,
    weights: &LossWeights,
) -> Result<(Grid, Grid)> {
    weights.validate()?;
    if pred_heatmaps.shape != gt_heatmaps.shape {
        return shape_err(format!("heatmaps {:?} vs ground truth {:?}", pred_heatmaps.shape, gt_heatmaps.shape));
    }
    let len = pred_heatmaps.data.len() as f64;
    let dh = Grid {
        shape: pred_heatmaps.shape,
        data: pred_heatmaps
            .data
            .iter()
            .zip(&gt_heatmaps.data)
            .map(|(p, g)| weights.alpha * 2.0 * (p - g) / len)
            .collect(),
    };

    let persons = sample_sites(pred_tagmaps, gt)?;
    let n = persons.len() as f64;
    let m = means(pred_tagmaps, &persons);
    let s2 = weights.push_sigma * weights.push_sigma;
    let mut dt = Grid::zeros(pred_tagmaps.shape);
    for (a, sites) in persons.iter().enumerate() {
        // d push / d mean_a; both ordered pairs (a, b) and (b, a) contribute.
        let dmean: f64 = m
            .iter()
            .enumerate()
            .filter(|&(b, _)| b != a)
            .map(|(_, &mb)| {
                let d = m[a] - mb;
                -2.0 * d / s2 * (-d * d / (2.0 * s2)).exp()
            })
            .sum::<f64>()
            / (n * n);
        let per_site = dmean / sites.len() as f64;
        for &i in sites {
            let pull = 2.0 * (pred_tagmaps.data[i] - m[a]) / n;
            dt.data[i] += weights.beta * (pull + per_site);
        }
    }
    Ok((dh, dt))
}
