//! Synthetic scenes and brute-force references for the decoding pipeline.
//!
//! Skeletons are random star-shaped point sets on integer pixels; every
//! person carries a base tag `n * tag_separation` plus per-keypoint jitter.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::pose::{
    attach_tags, detect_peaks, group_tagged, oks_score, render_ground_truth, DecodeConfig, GroundTruth, Keypoint,
    PoseInstance, PoseSet,
};
use crate::tensor::Tensor;

/// Largest problem [`oracle_group`] will enumerate.
pub const ORACLE_MAX_PERSONS: usize = 3;
pub const ORACLE_MAX_TYPES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub num_keypoints: usize,
    /// Map `(height, width)`.
    pub extents: (usize, usize),
    pub num_persons: usize,
    /// Minimum distance between person centres and between same-type
    /// keypoints of different persons.
    pub min_separation: f64,
    /// Maximum keypoint distance from the person's centre.
    pub radius: f64,
    pub tag_separation: f64,
    /// Width of the uniform per-keypoint tag jitter around the base tag.
    pub tag_spread: f64,
    /// Probability that a keypoint is labeled.
    pub label_prob: f64,
    pub heatmap_sigma: f64,
    pub max_attempts: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            num_keypoints: 4,
            extents: (48, 48),
            num_persons: 2,
            min_separation: 8.0,
            radius: 8.0,
            tag_separation: 2.0,
            tag_spread: 0.2,
            label_prob: 1.0,
            heatmap_sigma: 2.0,
            max_attempts: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub seed: u64,
    pub config: SceneConfig,
    pub gt: PoseSet,
    /// Base tag of each person.
    pub tags: Vec<f32>,
    pub maps: GroundTruth,
}

/// Serializable part of a scene; the maps are re-rendered on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub seed: u64,
    pub config: SceneConfig,
    pub gt: PoseSet,
    pub tags: Vec<f32>,
}

impl Scene {
    pub fn record(&self) -> SceneRecord {
        SceneRecord { seed: self.seed, config: self.config, gt: self.gt.clone(), tags: self.tags.clone() }
    }

    pub fn from_record(r: SceneRecord) -> Result<Self> {
        let maps = render_ground_truth(&r.gt, r.config.extents, r.config.heatmap_sigma)?;
        Ok(Self { seed: r.seed, config: r.config, gt: r.gt, tags: r.tags, maps })
    }
}

pub fn scenes_to_json(scenes: &[Scene]) -> Result<String> {
    let records: Vec<_> = scenes.iter().map(Scene::record).collect();
    Ok(serde_json::to_string_pretty(&records)?)
}

pub fn scenes_from_json(text: &str) -> Result<Vec<Scene>> {
    let records: Vec<SceneRecord> = serde_json::from_str(text)?;
    records.into_iter().map(Scene::from_record).collect()
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Draws a reproducible scene.
pub fn sample_scene(seed: u64, cfg: &SceneConfig) -> Result<Scene> {
    let (h, w) = cfg.extents;
    if cfg.num_keypoints == 0 || h == 0 || w == 0 {
        return config_err("scenes need keypoint types and non-empty extents");
    }
    if !(cfg.radius >= 1.0
        && cfg.min_separation >= 0.0
        && cfg.tag_spread >= 0.0
        && (0.0..=1.0).contains(&cfg.label_prob))
    {
        return config_err(format!("invalid scene parameters {cfg:?}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = cfg.num_keypoints;
    let mut centres: Vec<(f64, f64)> = Vec::new();
    let mut skeletons: Vec<Vec<(f64, f64)>> = Vec::new();
    for n in 0..cfg.num_persons {
        let mut placed = false;
        for _ in 0..cfg.max_attempts {
            let c = (rng.gen_range(0..w) as f64, rng.gen_range(0..h) as f64);
            let pts: Vec<(f64, f64)> = (0..k)
                .map(|kind| {
                    let angle = TAU * kind as f64 / k as f64 + rng.gen_range(-0.3..0.3);
                    let r = rng.gen_range(0.3 * cfg.radius..=cfg.radius);
                    let x = (c.0 + r * angle.cos()).round().clamp(0.0, (w - 1) as f64);
                    let y = (c.1 + r * angle.sin()).round().clamp(0.0, (h - 1) as f64);
                    (x, y)
                })
                .collect();
            let clear = centres.iter().zip(&skeletons).all(|(oc, os)| {
                dist(c, *oc) >= cfg.min_separation
                    && pts.iter().zip(os).all(|(p, q)| dist(*p, *q) >= cfg.min_separation)
            });
            if clear {
                centres.push(c);
                skeletons.push(pts);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Config(format!(
                "could not place person {n} of {} in {w}x{h} after {} attempts",
                cfg.num_persons, cfg.max_attempts
            )));
        }
    }
    let mut gt = PoseSet::new(k);
    let mut tags = Vec::with_capacity(cfg.num_persons);
    for (n, pts) in skeletons.iter().enumerate() {
        let base = (n as f64 * cfg.tag_separation) as f32;
        tags.push(base);
        let mut kps = Vec::new();
        for (kind, &(x, y)) in pts.iter().enumerate() {
            let jitter = cfg.tag_spread * (rng.gen::<f64>() - 0.5);
            let labeled = rng.gen::<f64>() < cfg.label_prob;
            if labeled {
                kps.push(Keypoint::new(kind, x as f32, y as f32).with_tag(base + jitter as f32));
            }
        }
        gt.instances.push(PoseInstance::from_keypoints(k, kps)?);
    }
    let maps = render_ground_truth(&gt, cfg.extents, cfg.heatmap_sigma)?;
    Ok(Scene { seed, config: *cfg, gt, tags, maps })
}

/// Scenes seeded `seed, seed + 1, ...`.
pub fn sample_scenes(seed: u64, count: usize, cfg: &SceneConfig) -> Result<Vec<Scene>> {
    (0..count as u64).map(|i| sample_scene(seed.wrapping_add(i), cfg)).collect()
}

/// Adds uniform noise in `[-amplitude, amplitude]` to the heatmaps and in
/// `[-tag_noise, tag_noise]` to the tagmaps.
pub fn add_noise(maps: &GroundTruth, amplitude: f32, tag_noise: f32, seed: u64) -> (Tensor, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e_6f69_7365);
    let mut heat = maps.heatmaps.clone();
    let mut tags = maps.tagmaps.clone();
    if amplitude > 0.0 {
        for v in heat.data_mut() {
            *v += rng.gen_range(-amplitude..=amplitude);
        }
    }
    if tag_noise > 0.0 {
        for v in tags.data_mut() {
            *v += rng.gen_range(-tag_noise..=tag_noise);
        }
    }
    (heat, tags)
}

/// Exhaustive grouping of tagged detections.
///
/// Uses as many instances as the most frequent type has detections, places
/// at most one detection per type in each, and returns the assignment with
/// the least total squared distance of tags to their instance mean.
/// Instances are ordered by their first keypoint.
pub fn oracle_group(detections: &[Vec<Keypoint>]) -> Result<PoseSet> {
    let k = detections.len();
    let p = detections.iter().map(Vec::len).max().unwrap_or(0);
    if k > ORACLE_MAX_TYPES || p > ORACLE_MAX_PERSONS {
        return Err(Error::SearchLimit(format!(
            "{k} types with up to {p} detections each (limits {ORACLE_MAX_TYPES} and {ORACLE_MAX_PERSONS})"
        )));
    }
    let mut assign: Vec<Vec<usize>> = detections.iter().map(|d| vec![0; d.len()]).collect();
    let mut best: Option<(f64, Vec<Vec<usize>>)> = None;
    search(detections, p, 0, &mut assign, &mut best);
    let mut set = PoseSet::new(k);
    if let Some((_, slots)) = best {
        let mut instances = vec![PoseInstance::empty(k); p];
        for (kind, dets) in detections.iter().enumerate() {
            for (d, &slot) in dets.iter().zip(&slots[kind]) {
                let mut kp = *d;
                kp.kind = kind;
                instances[slot].keypoints[kind] = Some(kp);
            }
        }
        for inst in &mut instances {
            inst.update_score();
        }
        instances.retain(|i| i.num_labeled() > 0);
        instances.sort_by(|a, b| canonical(a).partial_cmp(&canonical(b)).expect("finite coordinates"));
        set.instances = instances;
    }
    Ok(set)
}

fn search(
    dets: &[Vec<Keypoint>],
    p: usize,
    kind: usize,
    assign: &mut Vec<Vec<usize>>,
    best: &mut Option<(f64, Vec<Vec<usize>>)>,
) {
    if kind == dets.len() {
        let cost = partition_cost(dets, assign, p);
        if best.as_ref().is_none_or(|(b, _)| cost < *b) {
            *best = Some((cost, assign.clone()));
        }
        return;
    }
    let n = dets[kind].len();
    let mut used = vec![false; p];
    place(dets, p, kind, 0, n, &mut used, assign, best);
}

#[allow(clippy::too_many_arguments)]
fn place(
    dets: &[Vec<Keypoint>],
    p: usize,
    kind: usize,
    i: usize,
    n: usize,
    used: &mut [bool],
    assign: &mut Vec<Vec<usize>>,
    best: &mut Option<(f64, Vec<Vec<usize>>)>,
) {
    if i == n {
        search(dets, p, kind + 1, assign, best);
        return;
    }
    for slot in 0..p {
        if !used[slot] {
            used[slot] = true;
            assign[kind][i] = slot;
            place(dets, p, kind, i + 1, n, used, assign, best);
            used[slot] = false;
        }
    }
}

fn partition_cost(dets: &[Vec<Keypoint>], assign: &[Vec<usize>], p: usize) -> f64 {
    let mut sum = vec![0.0f64; p];
    let mut count = vec![0usize; p];
    for (ds, slots) in dets.iter().zip(assign) {
        for (d, &s) in ds.iter().zip(slots) {
            sum[s] += d.tag as f64;
            count[s] += 1;
        }
    }
    let mut cost = 0.0;
    for (ds, slots) in dets.iter().zip(assign) {
        for (d, &s) in ds.iter().zip(slots) {
            cost += (d.tag as f64 - sum[s] / count[s] as f64).powi(2);
        }
    }
    cost
}

/// Sort key: the instance's keypoints as `(type, y, x)` in type order.
fn canonical(inst: &PoseInstance) -> Vec<(usize, f32, f32)> {
    inst.labeled().map(|k| (k.kind, k.y, k.x)).collect()
}

/// True when both sets partition the same keypoints the same way,
/// irrespective of instance order.
pub fn same_grouping(a: &PoseSet, b: &PoseSet) -> bool {
    let key = |s: &PoseSet| {
        let mut v: Vec<_> = s.instances.iter().map(canonical).collect();
        v.sort_by(|x, y| x.partial_cmp(y).expect("finite coordinates"));
        v
    };
    a.num_keypoints == b.num_keypoints && key(a) == key(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub decode: DecodeConfig,
    pub noise: f32,
    pub tag_noise: f32,
    /// Uniform per-type OKS constant.
    pub oks_k: f64,
    /// OKS needed to count a ground-truth instance as matched.
    pub match_threshold: f64,
    /// Also run [`oracle_group`] on every scene small enough for it.
    pub check_oracle: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            decode: DecodeConfig::default(),
            noise: 0.0,
            tag_noise: 0.0,
            oks_k: 0.1,
            match_threshold: 0.5,
            check_oracle: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenes: usize,
    pub total_instances: usize,
    pub matched: usize,
    pub missed: usize,
    pub false_positives: usize,
    /// Mean over ground-truth instances of the matched OKS (0 if unmatched).
    pub mean_oks: f64,
    pub detection_rate: f64,
    /// Scenes on which greedy grouping equals the oracle, and how many were checked.
    pub oracle_agreements: usize,
    pub oracle_checked: usize,
}

/// `sqrt` of the bounding-box area of the labeled keypoints, at least 1.
pub fn instance_scale(inst: &PoseInstance) -> f64 {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for k in inst.labeled() {
        x0 = x0.min(k.x as f64);
        x1 = x1.max(k.x as f64);
        y0 = y0.min(k.y as f64);
        y1 = y1.max(k.y as f64);
    }
    if x0 > x1 {
        return 1.0;
    }
    ((x1 - x0) * (y1 - y0)).sqrt().max(1.0)
}

/// One-to-one matching by descending OKS. Returns the OKS credited to each
/// ground-truth instance and the number of matched pairs.
pub fn match_instances(pred: &PoseSet, gt: &PoseSet, oks_k: f64, threshold: f64) -> Result<(Vec<f64>, usize)> {
    let k = vec![oks_k; gt.num_keypoints];
    let mut pairs = Vec::new();
    for (g, gi) in gt.instances.iter().enumerate() {
        if gi.num_labeled() == 0 {
            continue;
        }
        let s = instance_scale(gi);
        for (p, pi) in pred.instances.iter().enumerate() {
            let o = oks_score(pi, gi, s, &k)?;
            if o >= threshold {
                pairs.push((o, g, p));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut credit = vec![0.0; gt.len()];
    let (mut gt_used, mut pred_used) = (vec![false; gt.len()], vec![false; pred.len()]);
    let mut matched = 0;
    for (o, g, p) in pairs {
        if !gt_used[g] && !pred_used[p] {
            gt_used[g] = true;
            pred_used[p] = true;
            credit[g] = o;
            matched += 1;
        }
    }
    Ok((credit, matched))
}

fn accumulate(
    report: &mut EvalReport,
    oks_sum: &mut f64,
    pred: &PoseSet,
    scene: &Scene,
    cfg: &EvalConfig,
) -> Result<()> {
    let (credit, matched) = match_instances(pred, &scene.gt, cfg.oks_k, cfg.match_threshold)?;
    let total = scene.gt.instances.iter().filter(|i| i.num_labeled() > 0).count();
    report.scenes += 1;
    report.total_instances += total;
    report.matched += matched;
    report.missed += total - matched;
    report.false_positives += pred.len() - matched;
    *oks_sum += credit.iter().sum::<f64>();
    Ok(())
}

fn finish(mut report: EvalReport, oks_sum: f64) -> EvalReport {
    if report.total_instances > 0 {
        report.mean_oks = oks_sum / report.total_instances as f64;
        report.detection_rate = report.matched as f64 / report.total_instances as f64;
    }
    report
}

fn empty_report() -> EvalReport {
    EvalReport {
        scenes: 0,
        total_instances: 0,
        matched: 0,
        missed: 0,
        false_positives: 0,
        mean_oks: 0.0,
        detection_rate: 0.0,
        oracle_agreements: 0,
        oracle_checked: 0,
    }
}

/// Decodes each scene's (optionally noisy) ground-truth maps and scores the
/// result against the annotations.
pub fn evaluate_decoder(scenes: &[Scene], cfg: &EvalConfig) -> Result<EvalReport> {
    let mut report = empty_report();
    let mut oks_sum = 0.0;
    for scene in scenes {
        let (heat, tags) = add_noise(&scene.maps, cfg.noise, cfg.tag_noise, scene.seed);
        let mut dets = detect_peaks(&heat, cfg.decode.threshold, cfg.decode.max_persons, cfg.decode.refine)?;
        attach_tags(&mut dets, &tags)?;
        let pred = group_tagged(&dets, cfg.decode.join_threshold);
        if cfg.check_oracle {
            match oracle_group(&dets) {
                Ok(oracle) => {
                    report.oracle_checked += 1;
                    if same_grouping(&pred, &oracle) {
                        report.oracle_agreements += 1;
                    }
                }
                Err(Error::SearchLimit(_)) => {}
                Err(e) => return Err(e),
            }
        }
        accumulate(&mut report, &mut oks_sum, &pred, scene, cfg)?;
    }
    Ok(finish(report, oks_sum))
}

/// Scores externally produced predictions (for example network outputs).
pub fn evaluate_predictions(scenes: &[Scene], preds: &[PoseSet], cfg: &EvalConfig) -> Result<EvalReport> {
    if scenes.len() != preds.len() {
        return config_err(format!("{} scenes but {} predictions", scenes.len(), preds.len()));
    }
    let mut report = empty_report();
    let mut oks_sum = 0.0;
    for (scene, pred) in scenes.iter().zip(preds) {
        accumulate(&mut report, &mut oks_sum, pred, scene, cfg)?;
    }
    Ok(finish(report, oks_sum))
}
