//! Field stack to poses.
//!
//! Decoding runs in a fixed order: peaks for every joint type, tag
//! clustering of root-group peaks into persons, then displacement tracing
//! of level-1 limb joints onto root joints, level-2 limb joints onto level-1
//! joints, and facial joints onto the center. A failed hop falls back to the
//! long-range channel that points straight at the center.

mod cluster;
mod peaks;
mod trace;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{DispField, FieldStack};
use crate::error::{Error, Result};
use crate::refiner::{refine_pose, RefineConfig};
use crate::skeleton::{JointId, Keypoint, PersonPose, SkeletonSpec};

pub use cluster::{cluster_rjg, PersonCluster};
pub use peaks::detect_peaks;
pub use trace::{endpoint, trace_joint, NoMatch};

/// A confidence-map peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub joint: JointId,
    pub x: usize,
    pub y: usize,
    pub confidence: f32,
    /// Tag read at the peak (root-group joints only).
    pub tag: Option<f32>,
    pub person_id: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMode {
    /// Limb joints hop to their hierarchy parent, falling back to the center.
    Hierarchical,
    /// Limb joints use only the long-range channel to the center.
    BasicOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    pub peak_threshold: f64,
    pub nms_window: usize,
    pub tag_cluster_threshold: f64,
    pub match_radius: f64,
    pub max_persons: usize,
    pub trace_mode: TraceMode,
    /// Use the center channel when a hierarchical hop fails.
    pub fallback: bool,
    /// Run the mutual refinement pass on every assembled pose.
    pub mrm: bool,
    pub mrm_threshold: f64,
    /// Input pixels per grid pixel.
    pub stride: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            peak_threshold: 0.1,
            nms_window: 3,
            tag_cluster_threshold: 0.5,
            match_radius: 7.0,
            max_persons: 30,
            trace_mode: TraceMode::Hierarchical,
            fallback: true,
            mrm: false,
            mrm_threshold: 0.75,
            stride: 1.0,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nms_window < 3 || self.nms_window.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "nms_window must be odd and >= 3, got {}",
                self.nms_window
            )));
        }
        if !(self.match_radius > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "match_radius must be > 0, got {}",
                self.match_radius
            )));
        }
        if !(0.0..=1.0).contains(&self.peak_threshold) {
            return Err(Error::InvalidConfig(format!(
                "peak_threshold must lie in [0, 1], got {}",
                self.peak_threshold
            )));
        }
        if !(self.stride > 0.0) {
            return Err(Error::InvalidConfig(format!("stride must be > 0, got {}", self.stride)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub peaks: Duration,
    pub cluster: Duration,
    pub trace: Duration,
    pub assemble: Duration,
    pub refine: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.peaks + self.cluster + self.trace + self.assemble + self.refine
    }
}

impl std::ops::AddAssign for StageTimings {
    fn add_assign(&mut self, o: Self) {
        self.peaks += o.peaks;
        self.cluster += o.cluster;
        self.trace += o.trace;
        self.assemble += o.assemble;
        self.refine += o.refine;
    }
}

pub struct Decoder<'a> {
    skeleton: &'a SkeletonSpec,
    cfg: DecoderConfig,
}

impl<'a> Decoder<'a> {
    pub fn new(skeleton: &'a SkeletonSpec, cfg: DecoderConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { skeleton, cfg })
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.cfg
    }

    pub fn decode(&self, stack: &FieldStack) -> Result<Vec<PersonPose>> {
        self.decode_timed(stack).map(|(p, _)| p)
    }

    pub fn decode_timed(&self, stack: &FieldStack) -> Result<(Vec<PersonPose>, StageTimings)> {
        stack.check(self.skeleton)?;
        let mut t = StageTimings::default();
        let skel = self.skeleton;
        let cfg = &self.cfg;

        let start = Instant::now();
        let mut peaks: BTreeMap<JointId, Vec<Detection>> = stack
            .conf
            .par_iter()
            .map(|(&j, g)| (j, detect_peaks(g, j, cfg)))
            .collect();
        t.peaks = start.elapsed();

        let start = Instant::now();
        let rjg = skel.rjg_ids();
        let mut roots: Vec<Detection> = Vec::new();
        for &j in &rjg {
            let Some(list) = peaks.get(&j) else { continue };
            let tags = stack.tags.get(&j);
            roots.extend(list.iter().map(|d| Detection {
                tag: tags.map(|g| g.get(d.x, d.y)),
                ..*d
            }));
        }
        let clusters = cluster_rjg(&mut roots, &rjg, cfg);
        for &j in &rjg {
            if peaks.contains_key(&j) {
                peaks.insert(j, roots.iter().filter(|d| d.joint == j).copied().collect());
            }
        }
        t.cluster = start.elapsed();

        let start = Instant::now();
        let z = stack.z();
        let center = skel.center_id();
        let no_peaks: Vec<Detection> = Vec::new();
        let center_peaks = peaks.get(&center).cloned().unwrap_or_default();

        let via = |det: &Detection, field: Option<&DispField>, targets: &[Detection]| {
            field
                .and_then(|f| trace_joint(det, f, z, targets, cfg.match_radius).ok())
                .and_then(|i| targets[i].person_id)
        };

        let mut limb_levels = vec![skel.level1_ids(), skel.level2_ids()];
        limb_levels.push(skel.facial_ids());
        for (level, ids) in limb_levels.iter().enumerate() {
            let facial = level == 2;
            for &j in ids {
                let Some(mut dets) = peaks.remove(&j) else { continue };
                let parent_peaks = match skel.parent_of(j) {
                    Some(p) => peaks.get(&p).unwrap_or(&no_peaks),
                    None => &no_peaks,
                };
                for det in &mut dets {
                    det.person_id = if facial {
                        via(det, stack.disp.get(&j), &center_peaks)
                    } else {
                        match cfg.trace_mode {
                            TraceMode::BasicOnly => via(det, stack.basic.get(&j), &center_peaks),
                            TraceMode::Hierarchical => via(det, stack.disp.get(&j), parent_peaks)
                                .or_else(|| {
                                    cfg.fallback
                                        .then(|| via(det, stack.basic.get(&j), &center_peaks))
                                        .flatten()
                                }),
                        }
                    };
                }
                peaks.insert(j, dets);
            }
        }
        t.trace = start.elapsed();

        let start = Instant::now();
        let mut poses: Vec<PersonPose> = clusters
            .iter()
            .map(|c| PersonPose {
                person_id: c.person_id,
                ..PersonPose::empty(skel)
            })
            .collect();
        for dets in peaks.values() {
            for d in dets {
                let Some(pid) = d.person_id else { continue };
                let slot = &mut poses[pid].joints[d.joint.index()];
                if !slot.visible || (d.confidence as f64) > slot.confidence {
                    *slot = Keypoint {
                        x: d.x as f64 * cfg.stride,
                        y: d.y as f64 * cfg.stride,
                        visible: true,
                        confidence: d.confidence as f64,
                    };
                }
            }
        }
        t.assemble = start.elapsed();

        let start = Instant::now();
        if cfg.mrm {
            let rcfg = RefineConfig {
                conf_threshold: cfg.mrm_threshold,
                stride: cfg.stride,
            };
            for p in &mut poses {
                *p = refine_pose(p, stack, skel, &rcfg);
            }
        }
        t.refine = start.elapsed();

        let start = Instant::now();
        for p in &mut poses {
            p.joints[center.index()] = Keypoint::HIDDEN;
            p.update_score(skel);
        }
        poses.retain(|p| p.visible_count() > 0);
        t.assemble += start.elapsed();

        Ok((poses, t))
    }
}

/// Decodes `stack` into poses with the given configuration.
pub fn assemble_poses(
    stack: &FieldStack,
    skeleton: &SkeletonSpec,
    cfg: &DecoderConfig,
) -> Result<Vec<PersonPose>> {
    Decoder::new(skeleton, *cfg)?.decode(stack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{encode, EncoderConfig};
    use crate::skeleton::default_coco_skeleton;

    #[test]
    fn empty_stack_decodes_to_nothing() {
        let s = default_coco_skeleton();
        let stack = FieldStack::new(64, 64);
        assert!(assemble_poses(&stack, &s, &DecoderConfig::default()).unwrap().is_empty());
        let zeros = encode(&[], &s, &EncoderConfig::default(), 64, 64).unwrap();
        assert!(assemble_poses(&zeros.stack, &s, &DecoderConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn config_validation() {
        let bad = DecoderConfig {
            nms_window: 4,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = DecoderConfig {
            match_radius: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn rejects_stack_with_unknown_joint() {
        let s = default_coco_skeleton();
        let mut stack = FieldStack::new(8, 8);
        stack.conf.insert(JointId(40), crate::Grid::zeros(8, 8));
        assert!(assemble_poses(&stack, &s, &DecoderConfig::default()).is_err());
    }
}
