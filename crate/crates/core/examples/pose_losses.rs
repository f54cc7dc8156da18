//! Renders ground truth for two people, evaluates the heatmap and tag
//! losses, and checks the closed-form gradients against finite differences.

use bhrnet::pose::{
    finite_difference_check, heatmap_loss, loss_gradients, render_ground_truth, tag_loss_terms, Grid, Keypoint,
    LossWeights, PoseInstance, PoseSet,
};

fn main() -> bhrnet::Result<()> {
    let k = 3;
    let alice = PoseInstance::from_keypoints(
        k,
        [Keypoint::new(0, 4.0, 5.0), Keypoint::new(1, 8.0, 6.0), Keypoint::new(2, 6.0, 10.0)],
    )?;
    let bob = PoseInstance::from_keypoints(k, [Keypoint::new(0, 18.0, 4.0), Keypoint::new(2, 20.0, 12.0)])?;
    let gt = PoseSet { num_keypoints: k, instances: vec![alice, bob] };
    let weights = LossWeights::default();
    let maps = render_ground_truth(&gt, (16, 24), weights.heatmap_sigma)?;
    println!("peak of the rendered heatmap: {}", maps.heatmaps.data().iter().cloned().fold(0.0f32, f32::max));

    let target = Grid::from(&maps.heatmaps);
    let mut pred = target.clone();
    for v in &mut pred.data {
        *v *= 0.8;
    }
    println!("heatmap loss at 0.8x the target: {:.6}", heatmap_loss(&pred, &target)?);

    // Perfect tags: each person has a constant tag, far from the other's.
    let mut tags = Grid::zeros(target.shape);
    for (n, inst) in gt.instances.iter().enumerate() {
        for kp in inst.labeled() {
            let (y, x) = kp.pixel();
            let i = tags.index(kp.kind, y, x);
            tags.data[i] = 3.0 * n as f64;
        }
    }
    let separated = tag_loss_terms(&tags, &gt, weights.push_sigma)?;
    let collapsed = tag_loss_terms(&Grid::zeros(target.shape), &gt, weights.push_sigma)?;
    println!("tags 3 apart: pull {:.4} push {:.4}", separated.pull, separated.push);
    println!("all tags equal: pull {:.4} push {:.4}", collapsed.pull, collapsed.push);

    let (dh, dt) = loss_gradients(&pred, &tags, &target, &gt, &weights)?;
    let norm = |g: &Grid| g.data.iter().map(|v| v * v).sum::<f64>().sqrt();
    println!("gradient norms: heatmaps {:.3e} tagmaps {:.3e}", norm(&dh), norm(&dt));

    let check = finite_difference_check(7, 20, 1e-3)?;
    println!("finite differences over {} instances: max relative error {:.2e}", check.trials, check.max_rel_error);
    Ok(())
}
