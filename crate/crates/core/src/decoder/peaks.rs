use crate::grid::Grid;
use crate::skeleton::JointId;

use super::{DecoderConfig, Detection};

/// Local maxima of `grid` at or above `cfg.peak_threshold`.
///
/// A pixel is a peak when no pixel in its `nms_window` neighborhood is
/// larger; on plateaus the first pixel in row-major order wins. Results are
/// sorted by descending confidence, ties in row-major order.
pub fn detect_peaks(grid: &Grid, joint: JointId, cfg: &DecoderConfig) -> Vec<Detection> {
    let (w, h) = grid.dims();
    let half = (cfg.nms_window / 2) as isize;
    let thr = cfg.peak_threshold as f32;
    let data = grid.as_slice();
    let mut out = Vec::new();

    for y in 0..h {
        let row = &data[y * w..(y + 1) * w];
        for (x, &v) in row.iter().enumerate() {
            if v < thr || v <= 0.0 {
                continue;
            }
            if is_peak(data, w, h, x, y, half, v) {
                out.push(Detection {
                    joint,
                    x,
                    y,
                    confidence: v,
                    tag: None,
                    person_id: None,
                });
            }
        }
    }
    // stable sort keeps row-major order among equal confidences
    out.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    out
}

#[inline]
fn is_peak(data: &[f32], w: usize, h: usize, x: usize, y: usize, half: isize, v: f32) -> bool {
    let (xi, yi) = (x as isize, y as isize);
    for ny in (yi - half).max(0)..=(yi + half).min(h as isize - 1) {
        for nx in (xi - half).max(0)..=(xi + half).min(w as isize - 1) {
            if nx == xi && ny == yi {
                continue;
            }
            let n = data[ny as usize * w + nx as usize];
            let earlier = ny < yi || (ny == yi && nx < xi);
            if n > v || (earlier && n == v) {
                return false;
            }
        }
    }
    true
}
