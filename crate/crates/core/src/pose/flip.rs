use crate::error::{config_err, shape_err, Result};
use crate::net::Network;
use crate::tensor::{mirror_width, Tensor};

/// Left/right swaps of the 17 COCO keypoints.
pub const COCO_FLIP_PAIRS: [usize; 17] = [0, 2, 1, 4, 3, 6, 5, 8, 7, 10, 9, 12, 11, 14, 13, 16, 15];

/// Identity permutation for `k` keypoint types.
pub fn identity_pairs(k: usize) -> Vec<usize> {
    (0..k).collect()
}

/// Checks that `pairs` is an involution on `0..k`.
pub fn validate_flip_pairs(pairs: &[usize], k: usize) -> Result<()> {
    if pairs.len() != k {
        return config_err(format!("{} flip entries for {k} keypoint types", pairs.len()));
    }
    for (i, &j) in pairs.iter().enumerate() {
        if j >= k || pairs[j] != i {
            return config_err(format!("flip map is not an involution at {i} -> {j}"));
        }
    }
    Ok(())
}

/// Mirrors `maps` horizontally and reorders channels: output `k` is the
/// mirrored channel `pairs[k]`.
pub fn unflip(maps: &Tensor, pairs: &[usize]) -> Result<Tensor> {
    validate_flip_pairs(pairs, maps.channels())?;
    let mirrored = mirror_width(maps);
    let mut out = Tensor::zeros(maps.shape());
    for n in 0..maps.batch() {
        for (k, &src) in pairs.iter().enumerate() {
            out.plane_mut(n, k).copy_from_slice(mirrored.plane(n, src));
        }
    }
    Ok(out)
}

/// `(a + unflip(b)) / 2`, element by element in a fixed order.
pub fn flip_merge(a: &Tensor, flipped: &Tensor, pairs: &[usize]) -> Result<Tensor> {
    if a.shape() != flipped.shape() {
        return shape_err(format!("flip halves differ: {:?} vs {:?}", a.shape(), flipped.shape()));
    }
    let b = unflip(flipped, pairs)?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| (x + y) * 0.5).collect();
    Tensor::new(a.shape(), data)
}

/// Averages the network's maps for `image` and for its mirror image.
pub fn flip_average(net: &Network, image: &Tensor, pairs: &[usize]) -> Result<(Tensor, Tensor)> {
    validate_flip_pairs(pairs, net.spec().head.num_keypoints)?;
    let mirrored = mirror_width(image);
    let (own, other) = std::thread::scope(|s| {
        let other = s.spawn(|| net.forward(&mirrored));
        let own = net.forward(image);
        (own, other.join().expect("forward pass panicked"))
    });
    let ((h, t), (hf, tf)) = (own?, other?);
    Ok((flip_merge(&h, &hf, pairs)?, flip_merge(&t, &tf, pairs)?))
}
