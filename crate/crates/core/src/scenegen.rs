//! Deterministic synthetic multi-person scenes.
//!
//! Each person is an articulated stick figure built from fixed body
//! proportions (fractions of standing height `h`):
//!
//! | segment                     | ratio |
//! |-----------------------------|-------|
//! | shoulder width              | 0.259 |
//! | hip width                   | 0.191 |
//! | torso (hip mid to thorax)   | 0.288 |
//! | upper arm                   | 0.186 |
//! | forearm                     | 0.146 |
//! | thigh                       | 0.245 |
//! | shank                       | 0.246 |
//! | thorax to nose              | 0.120 |
//!
//! Limb angles are drawn from the ranges in [`ArticulationRanges`]. Persons
//! are placed one at a time by rejection sampling until every same-type
//! joint pair across persons is farther apart than `min_separation`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::skeleton::{JointId, Keypoint, PersonPose, SkeletonSpec};

pub const SHOULDER_WIDTH: f64 = 0.259;
pub const HIP_WIDTH: f64 = 0.191;
pub const TORSO: f64 = 0.288;
pub const UPPER_ARM: f64 = 0.186;
pub const FOREARM: f64 = 0.146;
pub const THIGH: f64 = 0.245;
pub const SHANK: f64 = 0.246;
pub const NECK_TO_NOSE: f64 = 0.120;
pub const NECK_TO_HEAD_TOP: f64 = 0.200;
pub const NECK_LENGTH: f64 = 0.050;
/// Head box side as a fraction of height.
pub const HEAD_BOX: f64 = 0.180;

/// Angle ranges in radians. Limb angles are measured from the downward
/// torso axis, positive away from the body midline; joint flexion is
/// relative to the proximal segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArticulationRanges {
    pub shoulder: (f64, f64),
    pub elbow: (f64, f64),
    pub hip: (f64, f64),
    pub knee: (f64, f64),
    pub head_tilt: (f64, f64),
    pub body_rotation: (f64, f64),
}

impl Default for ArticulationRanges {
    fn default() -> Self {
        Self {
            shoulder: (-0.4, 2.8),
            elbow: (0.0, 2.4),
            hip: (-0.35, 1.0),
            knee: (0.0, 1.9),
            head_tilt: (-0.4, 0.4),
            body_rotation: (-0.35, 0.35),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneParams {
    /// Person height range in pixels.
    pub scale_range: (f64, f64),
    /// Minimum distance between same-type joints of different persons,
    /// center included.
    pub min_separation: f64,
    pub drop_joint_prob: f64,
    /// Standard deviation (radians) of extra noise added to every limb angle.
    pub jitter: f64,
    /// Relative spread of individual segment lengths around the template.
    pub limb_length_spread: f64,
    /// Minimum distance of any joint to the image border.
    pub margin: f64,
    /// Placement attempts per person before giving up.
    pub max_attempts: usize,
    pub articulation: ArticulationRanges,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            scale_range: (60.0, 140.0),
            min_separation: 15.0,
            drop_joint_prob: 0.1,
            jitter: 0.0,
            limb_length_spread: 0.1,
            margin: 1.0,
            max_attempts: 2000,
            articulation: ArticulationRanges::default(),
        }
    }
}

impl SceneParams {
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let (lo, hi) = self.scale_range;
        let limit = width.min(height) as f64;
        if !(lo > 0.0 && lo <= hi && hi <= limit) {
            return Err(Error::InvalidConfig(format!(
                "scale_range ({lo}, {hi}) must lie within (0, {limit}]"
            )));
        }
        if !(0.0..=1.0).contains(&self.drop_joint_prob) {
            return Err(Error::InvalidConfig(format!(
                "drop_joint_prob must lie in [0, 1], got {}",
                self.drop_joint_prob
            )));
        }
        if !(0.0..1.0).contains(&self.limb_length_spread) || self.jitter < 0.0 || self.margin < 0.0 {
            return Err(Error::InvalidConfig("negative jitter, margin or spread".into()));
        }
        Ok(())
    }

    /// Bounds on the length of a segment with template ratio `ratio`.
    pub fn segment_bounds(&self, ratio: f64) -> (f64, f64) {
        (
            ratio * self.scale_range.0 * (1.0 - self.limb_length_spread),
            ratio * self.scale_range.1 * (1.0 + self.limb_length_spread),
        )
    }
}

/// Template ratio of the hierarchy edge `child -> parent`, looked up by the
/// joint names of the child.
pub fn edge_ratio(skeleton: &SkeletonSpec, child: JointId) -> Option<f64> {
    let name = skeleton.joint(child).name.as_str();
    let side = name.trim_start_matches("left_").trim_start_matches("right_");
    match side {
        "elbow" => Some(UPPER_ARM),
        "wrist" => Some(FOREARM),
        "knee" => Some(THIGH),
        "ankle" => Some(SHANK),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePerson {
    /// Annotated joints; the center slot is left hidden.
    pub pose: PersonPose,
    /// `[x0, y0, x1, y1]`.
    pub head_box: [f64; 4],
    /// Bounding-box area of all template joints.
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub image_id: u64,
    pub width: usize,
    pub height: usize,
    pub persons: Vec<ScenePerson>,
}

impl Scene {
    pub fn poses(&self) -> Vec<PersonPose> {
        self.persons.iter().map(|p| p.pose.clone()).collect()
    }
}

type P = (f64, f64);

fn add(a: P, b: P) -> P {
    (a.0 + b.0, a.1 + b.1)
}

fn scale(a: P, s: f64) -> P {
    (a.0 * s, a.1 * s)
}

/// Unit vector at `angle` from `down`, rotating toward `out`.
fn dir(down: P, out: P, angle: f64) -> P {
    add(scale(down, angle.cos()), scale(out, angle.sin()))
}

/// Named template points around the origin.
fn articulate(rng: &mut SplitMix64, h: f64, params: &SceneParams) -> Vec<(&'static str, P)> {
    let a = &params.articulation;
    let noise = Normal::new(0.0, params.jitter.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let angle = |r: (f64, f64), rng: &mut SplitMix64| {
        let base = if r.0 < r.1 { rng.random_range(r.0..r.1) } else { r.0 };
        if params.jitter > 0.0 {
            base + noise.sample(rng)
        } else {
            base
        }
    };
    let spread = params.limb_length_spread;
    let len = |ratio: f64, rng: &mut SplitMix64| {
        let f = if spread > 0.0 { rng.random_range(-spread..spread) } else { 0.0 };
        ratio * h * (1.0 + f)
    };

    let rot = angle(a.body_rotation, rng);
    let down = (-rot.sin(), rot.cos());
    let left = (rot.cos(), rot.sin());
    let right = scale(left, -1.0);
    let up = scale(down, -1.0);

    let pelvis = (0.0, 0.0);
    let thorax = scale(up, TORSO * h);
    let mut pts = vec![("pelvis", pelvis), ("thorax", thorax)];

    for (side, out) in [("left", left), ("right", right)] {
        let shoulder = add(thorax, scale(out, SHOULDER_WIDTH * h / 2.0));
        let hip = add(pelvis, scale(out, HIP_WIDTH * h / 2.0));
        let sa = angle(a.shoulder, rng);
        let elbow = add(shoulder, scale(dir(down, out, sa), len(UPPER_ARM, rng)));
        let bend = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let ea = sa + bend * angle(a.elbow, rng);
        let wrist = add(elbow, scale(dir(down, out, ea), len(FOREARM, rng)));
        let ha = angle(a.hip, rng);
        let knee = add(hip, scale(dir(down, out, ha), len(THIGH, rng)));
        let bend = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let ka = ha + bend * angle(a.knee, rng);
        let ankle = add(knee, scale(dir(down, out, ka), len(SHANK, rng)));
        let names: [&'static str; 6] = if side == "left" {
            ["left_shoulder", "left_hip", "left_elbow", "left_wrist", "left_knee", "left_ankle"]
        } else {
            ["right_shoulder", "right_hip", "right_elbow", "right_wrist", "right_knee", "right_ankle"]
        };
        pts.extend(names.into_iter().zip([shoulder, hip, elbow, wrist, knee, ankle]));
    }

    let tilt = angle(a.head_tilt, rng);
    let head_up = dir(up, left, -tilt);
    let head_left = dir(left, down, tilt);
    let yaw = rng.random_range(-1.0..1.0) * 0.02 * h;
    let nose = add(add(thorax, scale(head_up, NECK_TO_NOSE * h)), scale(head_left, yaw));
    let eye_level = add(nose, scale(head_up, 0.025 * h));
    pts.extend([
        ("upper_neck", add(thorax, scale(head_up, NECK_LENGTH * h))),
        ("head_top", add(thorax, scale(head_up, NECK_TO_HEAD_TOP * h))),
        ("nose", nose),
        ("left_eye", add(eye_level, scale(head_left, 0.03 * h))),
        ("right_eye", add(eye_level, scale(head_left, -0.03 * h))),
        ("left_ear", add(add(thorax, scale(head_up, NECK_TO_NOSE * h)), scale(head_left, 0.065 * h))),
        ("right_ear", add(add(thorax, scale(head_up, NECK_TO_NOSE * h)), scale(head_left, -0.065 * h))),
    ]);
    pts
}

fn head_box(points: &[(&str, P)], h: f64) -> [f64; 4] {
    let find = |n: &str| points.iter().find(|(k, _)| *k == n).map(|p| p.1).expect("template point");
    let (nose, top) = (find("nose"), find("head_top"));
    let c = ((nose.0 + top.0) / 2.0, (nose.1 + top.1) / 2.0);
    let half = HEAD_BOX * h / 2.0;
    [c.0 - half, c.1 - half, c.0 + half, c.1 + half]
}

fn separated(candidate: &PersonPose, placed: &[PersonPose], min_sep: f64) -> bool {
    placed.iter().all(|other| {
        candidate
            .joints
            .iter()
            .zip(&other.joints)
            .all(|(a, b)| !(a.visible && b.visible) || a.distance_to(b) > min_sep)
    })
}

/// Generates `n_persons` persons on a `width x height` image.
pub fn generate_scene(
    seed: u64,
    n_persons: usize,
    width: usize,
    height: usize,
    params: &SceneParams,
    skeleton: &SkeletonSpec,
) -> Result<Scene> {
    params.validate(width, height)?;
    let mut rng = SplitMix64::new(seed);
    let center = skeleton.center_id();
    let annotated = skeleton.annotated_ids();
    let mut persons: Vec<ScenePerson> = Vec::with_capacity(n_persons);
    let mut placed: Vec<PersonPose> = Vec::with_capacity(n_persons);
    let (wmax, hmax) = ((width - 1) as f64 - params.margin, (height - 1) as f64 - params.margin);

    for person_id in 0..n_persons {
        let mut accepted = None;
        for _ in 0..params.max_attempts {
            let h = if params.scale_range.0 < params.scale_range.1 {
                rng.random_range(params.scale_range.0..params.scale_range.1)
            } else {
                params.scale_range.0
            };
            let pts = articulate(&mut rng, h, params);
            let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
            for &(_, (x, y)) in &pts {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
            let (lo_x, hi_x) = (params.margin - x0, wmax - x1);
            let (lo_y, hi_y) = (params.margin - y0, hmax - y1);
            if lo_x > hi_x || lo_y > hi_y {
                continue;
            }
            let tx = if lo_x < hi_x { rng.random_range(lo_x..hi_x) } else { lo_x };
            let ty = if lo_y < hi_y { rng.random_range(lo_y..hi_y) } else { lo_y };

            let mut pose = PersonPose {
                person_id,
                ..PersonPose::empty(skeleton)
            };
            for &(name, (x, y)) in &pts {
                if let Some(id) = skeleton.id_by_name(name) {
                    pose.joints[id.index()] = Keypoint::visible(x + tx, y + ty);
                }
            }
            let present: Vec<JointId> = annotated
                .iter()
                .copied()
                .filter(|j| pose.joints[j.index()].visible)
                .collect();
            let mut kept = 0;
            for &j in &present {
                if rng.random_bool(params.drop_joint_prob) {
                    pose.joints[j.index()] = Keypoint::HIDDEN;
                } else {
                    kept += 1;
                }
            }
            if kept == 0 && !present.is_empty() {
                let j = present[rng.random_range(0..present.len())];
                let (x, y) = pts
                    .iter()
                    .find(|(n, _)| *n == skeleton.joint(j).name)
                    .map(|p| p.1)
                    .expect("present joint comes from the template");
                pose.joints[j.index()] = Keypoint::visible(x + tx, y + ty);
            }
            let with_center = skeleton.with_center(&pose);
            if !separated(&with_center, &placed, params.min_separation) {
                continue;
            }
            let hb = head_box(&pts, h);
            pose.joints[center.index()] = Keypoint::HIDDEN;
            accepted = Some((
                ScenePerson {
                    pose,
                    head_box: [hb[0] + tx, hb[1] + ty, hb[2] + tx, hb[3] + ty],
                    area: (x1 - x0) * (y1 - y0),
                },
                with_center,
            ));
            break;
        }
        match accepted {
            Some((person, with_center)) => {
                persons.push(person);
                placed.push(with_center);
            }
            None => {
                return Err(Error::PlacementFailure {
                    requested: n_persons,
                    placed: persons.len(),
                    attempts: params.max_attempts,
                })
            }
        }
    }
    Ok(Scene {
        image_id: seed,
        width,
        height,
        persons,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{default_coco_skeleton, mpii_skeleton};

    #[test]
    fn deterministic() {
        let s = default_coco_skeleton();
        let p = SceneParams::default();
        let a = generate_scene(42, 5, 256, 256, &p, &s).unwrap();
        let b = generate_scene(42, 5, 256, 256, &p, &s).unwrap();
        assert_eq!(a, b);
        let c = generate_scene(43, 5, 256, 256, &p, &s).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_persons() {
        let s = default_coco_skeleton();
        let scene = generate_scene(1, 0, 256, 256, &SceneParams::default(), &s).unwrap();
        assert!(scene.persons.is_empty());
    }

    #[test]
    fn separation_holds() {
        let s = default_coco_skeleton();
        let tau = 7.0;
        let p = SceneParams {
            min_separation: 2.0 * tau + 1.0,
            ..Default::default()
        };
        for seed in 0..20 {
            let scene = generate_scene(seed, 5, 256, 256, &p, &s).unwrap();
            let poses: Vec<PersonPose> = scene.persons.iter().map(|q| s.with_center(&q.pose)).collect();
            for a in 0..poses.len() {
                for b in a + 1..poses.len() {
                    for (ja, jb) in poses[a].joints.iter().zip(&poses[b].joints) {
                        if ja.visible && jb.visible {
                            assert!(ja.distance_to(jb) > 2.0 * tau);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn impossible_separation_fails() {
        let s = default_coco_skeleton();
        let p = SceneParams {
            min_separation: 500.0,
            max_attempts: 50,
            ..Default::default()
        };
        let err = generate_scene(3, 2, 256, 256, &p, &s).unwrap_err();
        assert!(matches!(err, Error::PlacementFailure { requested: 2, placed: 1, .. }));
    }

    #[test]
    fn rejects_bad_scale() {
        let s = default_coco_skeleton();
        let p = SceneParams {
            scale_range: (10.0, 300.0),
            ..Default::default()
        };
        assert!(generate_scene(0, 1, 256, 256, &p, &s).is_err());
    }

    #[test]
    fn fills_mpii_joints() {
        let s = mpii_skeleton();
        let p = SceneParams {
            drop_joint_prob: 0.0,
            ..Default::default()
        };
        let scene = generate_scene(9, 3, 256, 256, &p, &s).unwrap();
        for person in &scene.persons {
            assert_eq!(person.pose.visible_count(), s.len() - 1);
        }
    }
}
