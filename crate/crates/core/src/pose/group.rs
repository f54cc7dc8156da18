use super::{Keypoint, PoseInstance, PoseSet};
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Sets each detection's tag from its type's tagmap at the rounded position.
pub fn attach_tags(detections: &mut [Vec<Keypoint>], tagmaps: &Tensor) -> Result<()> {
    let [_, k, h, w] = tagmaps.shape();
    if detections.len() != k {
        return shape_err(format!("{} detection lists for {k} tagmaps", detections.len()));
    }
    for (kind, dets) in detections.iter_mut().enumerate() {
        for d in dets {
            let (r, c) = d.pixel();
            let (r, c) = (r.min(h - 1), c.min(w - 1));
            d.tag = tagmaps.at(0, kind, r, c);
            d.kind = kind;
        }
    }
    Ok(())
}

struct Group {
    members: Vec<Option<Keypoint>>,
    tag_sum: f64,
    count: usize,
}

impl Group {
    fn mean(&self) -> f64 {
        self.tag_sum / self.count as f64
    }
}

/// Greedy associative-embedding grouping of already tagged detections.
///
/// Types are visited in index order and detections in list order. A
/// detection joins the group, lacking its type, whose running mean tag is
/// closest (lowest index on ties) when that distance is below
/// `join_threshold`; otherwise it starts a new group.
pub fn group_tagged(detections: &[Vec<Keypoint>], join_threshold: f64) -> PoseSet {
    let k = detections.len();
    let mut groups: Vec<Group> = Vec::new();
    for (kind, dets) in detections.iter().enumerate() {
        for d in dets {
            let mut d = *d;
            d.kind = kind;
            let tag = d.tag as f64;
            let best = groups
                .iter()
                .enumerate()
                .filter(|(_, g)| g.members[kind].is_none())
                .map(|(i, g)| (i, (tag - g.mean()).abs()))
                .fold(None, |acc: Option<(usize, f64)>, (i, dist)| match acc {
                    Some((_, b)) if b <= dist => acc,
                    _ => Some((i, dist)),
                });
            match best {
                Some((i, dist)) if dist < join_threshold => {
                    let g = &mut groups[i];
                    g.members[kind] = Some(d);
                    g.tag_sum += tag;
                    g.count += 1;
                }
                _ => {
                    let mut members = vec![None; k];
                    members[kind] = Some(d);
                    groups.push(Group { members, tag_sum: tag, count: 1 });
                }
            }
        }
    }
    let instances = groups
        .into_iter()
        .map(|g| {
            let mut inst = PoseInstance { score: 0.0, keypoints: g.members };
            inst.update_score();
            inst
        })
        .collect();
    PoseSet { num_keypoints: k, instances }
}

/// Samples tags for `detections` from `tagmaps`, then groups them greedily.
pub fn group_keypoints(detections: &[Vec<Keypoint>], tagmaps: &Tensor, join_threshold: f64) -> Result<PoseSet> {
    let mut tagged = detections.to_vec();
    attach_tags(&mut tagged, tagmaps)?;
    Ok(group_tagged(&tagged, join_threshold))
}
