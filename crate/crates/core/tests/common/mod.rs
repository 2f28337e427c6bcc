#![allow(dead_code)]

use de_core::metrics::assign_by_mean_distance;
use de_core::rng::SplitMix64;
use de_core::scenegen::{generate_scene, Scene, SceneParams};
use de_core::{PersonPose, SkeletonSpec};
use rand::Rng;

pub const SIZE: usize = 256;

/// Scene with `1 + seed % 8` persons unless `n` is given.
pub fn scene(seed: u64, n: Option<usize>, params: &SceneParams, skel: &SkeletonSpec) -> Scene {
    let n = n.unwrap_or(1 + (seed % 8) as usize);
    generate_scene(seed, n, SIZE, SIZE, params, skel).expect("scene placement")
}

/// For each ground-truth person, the decoded person matched to it.
pub fn match_persons(decoded: &[PersonPose], gts: &[PersonPose], skel: &SkeletonSpec) -> Vec<Option<usize>> {
    assign_by_mean_distance(decoded, gts, skel)
}

/// Lower `q` quantile of the bootstrap distribution of the mean.
pub fn bootstrap_lower(values: &[f64], resamples: usize, seed: u64, q: f64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    means[((resamples as f64) * q).floor() as usize]
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
