//! Mutual refinement of low-confidence joints.
//!
//! A joint whose confidence is below that of a confident hierarchy neighbor
//! (confidence above the gate) is moved to the confidence-weighted mean of
//! its own location and each such neighbor's location pushed through the
//! displacement between them.

use serde::{Deserialize, Serialize};

use crate::encoder::{DispField, FieldStack};
use crate::skeleton::{JointId, PersonPose, SkeletonSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    /// Neighbors must be strictly more confident than this to contribute.
    pub conf_threshold: f64,
    /// Input pixels per grid pixel.
    pub stride: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            conf_threshold: 0.75,
            stride: 1.0,
        }
    }
}

/// Result of fusing one joint with its neighbors' estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Fusion {
    pub location: (f64, f64),
    /// Normalized weights, own location first. They sum to one.
    pub weights: Vec<f64>,
}

/// Confidence-weighted fusion: `(c0 * p0 + Σ ci * pi) / Q` with
/// `Q = c0 + Σ ci`. With `Q == 0` the own location is returned unchanged.
pub fn fuse(own: (f64, f64), own_conf: f64, neighbors: &[((f64, f64), f64)]) -> Fusion {
    let q = own_conf + neighbors.iter().map(|n| n.1).sum::<f64>();
    if q <= 0.0 {
        let mut weights = vec![0.0; neighbors.len() + 1];
        weights[0] = 1.0;
        return Fusion {
            location: own,
            weights,
        };
    }
    let mut sx = own_conf * own.0;
    let mut sy = own_conf * own.1;
    for &((x, y), c) in neighbors {
        sx += c * x;
        sy += c * y;
    }
    let weights = std::iter::once(own_conf)
        .chain(neighbors.iter().map(|n| n.1))
        .map(|c| c / q)
        .collect();
    Fusion {
        location: (sx / q, sy / q),
        weights,
    }
}

fn read(field: &DispField, x: f64, y: f64, stride: f64) -> Option<(f64, f64)> {
    let (gx, gy) = (x / stride, y / stride);
    let dx = field.dx.sample_nearest(gx, gy)?;
    let dy = field.dy.sample_nearest(gx, gy)?;
    if dx == 0.0 && dy == 0.0 {
        return None;
    }
    Some((dx as f64, dy as f64))
}

/// Location of `target` as propagated from neighbor `from` along their
/// hierarchy edge, or `None` when the edge carries no displacement data.
fn propagate(
    pose: &PersonPose,
    from: JointId,
    target: JointId,
    stack: &FieldStack,
    skeleton: &SkeletonSpec,
    stride: f64,
) -> Option<(f64, f64)> {
    let scale = stack.z() * stride;
    let n = &pose.joints[from.index()];
    let t = &pose.joints[target.index()];
    let vec = if skeleton.parent_of(from) == Some(target) {
        // neighbor is the child: its own field points at us
        read(stack.disp.get(&from)?, n.x, n.y, stride)?
    } else if let Some(rev) = stack.reverse.get(&target) {
        read(rev, n.x, n.y, stride)?
    } else {
        // reverse of our own child-to-parent vector
        let (dx, dy) = read(stack.disp.get(&target)?, t.x, t.y, stride)?;
        (-dx, -dy)
    };
    Some((n.x + scale * vec.0, n.y + scale * vec.1))
}

/// One refinement pass over `pose` in root, level-1, level-2, facial order.
/// Updated locations are visible to later joints; confidences are kept.
pub fn refine_pose(
    pose: &PersonPose,
    stack: &FieldStack,
    skeleton: &SkeletonSpec,
    cfg: &RefineConfig,
) -> PersonPose {
    let mut out = pose.clone();
    for joint in skeleton.refinement_order() {
        let own = out.joints[joint.index()];
        if !own.visible {
            continue;
        }
        let neighbors = skeleton
            .parent_of(joint)
            .into_iter()
            .chain(skeleton.children_of(joint).iter().copied());
        let estimates: Vec<((f64, f64), f64)> = neighbors
            .filter(|n| {
                let k = &out.joints[n.index()];
                k.visible && k.confidence > cfg.conf_threshold && own.confidence < k.confidence
            })
            .filter_map(|n| {
                let est = propagate(&out, n, joint, stack, skeleton, cfg.stride)?;
                Some((est, out.joints[n.index()].confidence))
            })
            .collect();
        if estimates.is_empty() {
            continue;
        }
        let fused = fuse((own.x, own.y), own.confidence, &estimates);
        let slot = &mut out.joints[joint.index()];
        slot.x = fused.location.0;
        slot.y = fused.location.1;
    }
    out
}
