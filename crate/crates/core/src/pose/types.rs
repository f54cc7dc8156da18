use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A located keypoint in heatmap pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f32,
    pub y: f32,
    pub score: f32,
    pub tag: f32,
    /// Keypoint type; implied by position inside a [`PoseInstance`].
    #[serde(skip)]
    pub kind: usize,
}

impl Keypoint {
    pub fn new(kind: usize, x: f32, y: f32) -> Self {
        Self { x, y, score: 1.0, tag: 0.0, kind }
    }

    pub fn with_tag(mut self, tag: f32) -> Self {
        self.tag = tag;
        self
    }

    pub fn with_score(mut self, score: f32) -> Self {
        self.score = score;
        self
    }

    /// Nearest integer pixel `(row, column)`.
    pub fn pixel(&self) -> (usize, usize) {
        (self.y.round().max(0.0) as usize, self.x.round().max(0.0) as usize)
    }
}

/// One person: up to one keypoint per type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseInstance {
    pub score: f32,
    pub keypoints: Vec<Option<Keypoint>>,
}

impl PoseInstance {
    pub fn empty(num_keypoints: usize) -> Self {
        Self { score: 0.0, keypoints: vec![None; num_keypoints] }
    }

    /// Builds an instance from keypoints, placing each at its `kind` slot.
    pub fn from_keypoints(num_keypoints: usize, kps: impl IntoIterator<Item = Keypoint>) -> Result<Self> {
        let mut inst = Self::empty(num_keypoints);
        for kp in kps {
            match inst.keypoints.get_mut(kp.kind) {
                None => return Err(Error::Shape(format!("keypoint type {} outside 0..{num_keypoints}", kp.kind))),
                Some(Some(_)) => return Err(Error::Shape(format!("two keypoints of type {}", kp.kind))),
                Some(slot) => *slot = Some(kp),
            }
        }
        inst.update_score();
        Ok(inst)
    }

    pub fn labeled(&self) -> impl Iterator<Item = &Keypoint> {
        self.keypoints.iter().flatten()
    }

    pub fn num_labeled(&self) -> usize {
        self.labeled().count()
    }

    /// Mean keypoint score, 0 when empty.
    pub fn update_score(&mut self) {
        let n = self.num_labeled();
        self.score = if n == 0 { 0.0 } else { self.labeled().map(|k| k.score).sum::<f32>() / n as f32 };
    }

    pub fn mean_tag(&self) -> Option<f64> {
        let n = self.num_labeled();
        (n > 0).then(|| self.labeled().map(|k| k.tag as f64).sum::<f64>() / n as f64)
    }
}

/// The people found in (or annotated on) one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "PoseSetRepr")]
pub struct PoseSet {
    pub num_keypoints: usize,
    pub instances: Vec<PoseInstance>,
}

#[derive(Deserialize)]
struct PoseSetRepr {
    num_keypoints: usize,
    instances: Vec<PoseInstance>,
}

impl From<PoseSetRepr> for PoseSet {
    fn from(r: PoseSetRepr) -> Self {
        let mut instances = r.instances;
        for inst in &mut instances {
            for (k, kp) in inst.keypoints.iter_mut().enumerate() {
                if let Some(kp) = kp {
                    kp.kind = k;
                }
            }
        }
        Self { num_keypoints: r.num_keypoints, instances }
    }
}

impl PoseSet {
    pub fn new(num_keypoints: usize) -> Self {
        Self { num_keypoints, instances: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (n, inst) in self.instances.iter().enumerate() {
            if inst.keypoints.len() != self.num_keypoints {
                return Err(Error::Shape(format!(
                    "instance {n} has {} keypoint slots, expected {}",
                    inst.keypoints.len(),
                    self.num_keypoints
                )));
            }
            for (k, kp) in inst.keypoints.iter().enumerate() {
                if let Some(kp) = kp {
                    if kp.kind != k {
                        return Err(Error::Shape(format!("instance {n} slot {k} holds a type {} keypoint", kp.kind)));
                    }
                    if !(kp.x.is_finite() && kp.y.is_finite() && kp.score.is_finite() && kp.tag.is_finite()) {
                        return Err(Error::NonFinite(format!("instance {n} keypoint {k}")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: Self = serde_json::from_str(text)?;
        set.validate()?;
        Ok(set)
    }
}
