use super::Keypoint;
use crate::error::{config_err, Result};
use crate::tensor::Tensor;

/// Local maxima of each heatmap channel.
///
/// A pixel is a peak when its value exceeds `threshold` and is not below any
/// of its eight neighbours. On plateaus only the first pixel in row-major
/// order survives: neighbours earlier in that order must be strictly lower.
/// Each type keeps its `max_persons` best peaks, highest score first (ties in
/// row-major order). With `refine`, coordinates move a quarter pixel towards
/// the larger of the two neighbours along each axis.
pub fn detect_peaks(heatmaps: &Tensor, threshold: f32, max_persons: usize, refine: bool) -> Result<Vec<Vec<Keypoint>>> {
    if !(0.0..1.0).contains(&threshold) {
        return config_err(format!("peak threshold must lie in [0, 1), got {threshold}"));
    }
    let [_, k, h, w] = heatmaps.shape();
    let mut out = Vec::with_capacity(k);
    for kind in 0..k {
        let plane = heatmaps.plane(0, kind);
        let v = |y: usize, x: usize| plane[y * w + x];
        let mut found = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let c = v(y, x);
                if !(c > threshold) {
                    continue;
                }
                let mut is_peak = true;
                'nb: for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dy == 0 && dx == 0 {
                            continue;
                        }
                        let (ny, nx) = (y as i64 + dy, x as i64 + dx);
                        if ny < 0 || nx < 0 || ny >= h as i64 || nx >= w as i64 {
                            continue;
                        }
                        let n = v(ny as usize, nx as usize);
                        let earlier = dy < 0 || (dy == 0 && dx < 0);
                        if n > c || (earlier && n == c) {
                            is_peak = false;
                            break 'nb;
                        }
                    }
                }
                if is_peak {
                    let (mut px, mut py) = (x as f32, y as f32);
                    if refine {
                        if x > 0 && x + 1 < w {
                            px += 0.25 * sign(v(y, x + 1) - v(y, x - 1));
                        }
                        if y > 0 && y + 1 < h {
                            py += 0.25 * sign(v(y + 1, x) - v(y - 1, x));
                        }
                    }
                    found.push(Keypoint::new(kind, px, py).with_score(c));
                }
            }
        }
        found.sort_by(|a, b| b.score.total_cmp(&a.score));
        found.truncate(max_persons);
        out.push(found);
    }
    Ok(out)
}

fn sign(d: f32) -> f32 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}
