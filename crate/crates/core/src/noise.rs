//! Controlled corruption of ground-truth field stacks.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::encoder::{splat_gaussian, DispKind, EncoderConfig, FieldStack};
use crate::grid::Grid;
use crate::skeleton::{JointGroup, JointId, PersonPose, SkeletonSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseTarget {
    All,
    Level2,
}

impl NoiseTarget {
    fn selects(self, group: JointGroup) -> bool {
        match self {
            NoiseTarget::All => true,
            NoiseTarget::Level2 => group == JointGroup::AdjacencyLevel2,
        }
    }
}

/// Moves confidence peaks by isotropic Gaussian offsets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakJitter {
    /// Offset standard deviation in input pixels.
    pub sigma: f64,
    pub target: NoiseTarget,
    /// Scale each moved peak by the clean map's value at its new location,
    /// `exp(-|offset|² / σ²)`.
    pub attenuate: bool,
}

/// Redraws the confidence maps of the targeted joint types around jittered
/// locations. Tag and displacement channels keep their clean values.
///
/// Returns the poses with jittered joint locations (center included), which
/// is where a decoder will find the new peaks.
pub fn jitter_peaks<R: Rng + ?Sized>(
    stack: &mut FieldStack,
    poses: &[PersonPose],
    skeleton: &SkeletonSpec,
    enc: &EncoderConfig,
    jitter: &PeakJitter,
    rng: &mut R,
) -> Vec<PersonPose> {
    let targets: Vec<JointId> = skeleton
        .ids()
        .filter(|&j| jitter.target.selects(skeleton.group(j)))
        .collect();
    let mut moved: Vec<PersonPose> = poses.iter().map(|p| skeleton.with_center(p)).collect();
    let mut amplitude = vec![vec![1.0; skeleton.len()]; moved.len()];
    for (p, amp) in moved.iter_mut().zip(&mut amplitude) {
        for &j in &targets {
            let kp = &mut p.joints[j.index()];
            if !kp.visible {
                continue;
            }
            let nx: f64 = rng.sample::<f64, _>(StandardNormal) * jitter.sigma;
            let ny: f64 = rng.sample::<f64, _>(StandardNormal) * jitter.sigma;
            kp.x += nx;
            kp.y += ny;
            if jitter.attenuate {
                let s = enc.sigma * enc.stride;
                amp[j.index()] = (-(nx * nx + ny * ny) / (s * s)).exp();
            }
        }
    }
    let (w, h) = (stack.width(), stack.height());
    for &j in &targets {
        let mut grid = Grid::zeros(w, h);
        for (p, amp) in moved.iter().zip(&amplitude) {
            let kp = &p.joints[j.index()];
            if kp.visible {
                splat_gaussian(&mut grid, enc.anchor(kp.x, kp.y, w, h), amp[j.index()], enc);
            }
        }
        stack.conf.insert(j, grid);
    }
    moved
}

/// Adds `rho * |v| * N(0, 1)` to each component of every nonzero
/// displacement vector in the given channel kinds.
pub fn perturb_displacements<R: Rng + ?Sized>(
    stack: &mut FieldStack,
    kinds: &[DispKind],
    rho: f64,
    rng: &mut R,
) {
    for &kind in kinds {
        for field in stack.displacement_mut(kind).values_mut() {
            let (dx, dy) = (field.dx.as_mut_slice(), field.dy.as_mut_slice());
            for (x, y) in dx.iter_mut().zip(dy.iter_mut()) {
                if *x == 0.0 && *y == 0.0 {
                    continue;
                }
                let len = (*x as f64).hypot(*y as f64);
                let nx: f64 = rng.sample(StandardNormal);
                let ny: f64 = rng.sample(StandardNormal);
                *x = (*x as f64 + rho * len * nx) as f32;
                *y = (*y as f64 + rho * len * ny) as f32;
            }
        }
    }
}
