//! JSON interchange: scenes and COCO-style keypoint results.
//!
//! Scene files list annotated joints in skeleton id order (center excluded):
//!
//! ```json
//! {
//!   "height": 256,
//!   "image_id": 1,
//!   "persons": [
//!     {
//!       "area": 5200.0,
//!       "head_box": [10.0, 12.0, 30.0, 32.0],
//!       "joints": [{"visible": true, "x": 20.5, "y": 22.0}],
//!       "person_id": 0
//!     }
//!   ],
//!   "width": 256
//! }
//! ```
//!
//! `area` and `head_box` are optional. A file may hold one scene or an array
//! of scenes. Every writer emits keys in sorted order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{EvalImage, GtInstance};
use crate::scenegen::{Scene, ScenePerson};
use crate::skeleton::{Keypoint, PersonPose, SkeletonSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointRecord {
    pub x: f64,
    pub y: f64,
    pub visible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonRecord {
    #[serde(default)]
    pub person_id: usize,
    pub joints: Vec<JointRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_box: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    #[serde(default)]
    pub image_id: u64,
    pub width: usize,
    pub height: usize,
    pub persons: Vec<PersonRecord>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(SceneRecord),
    Many(Vec<SceneRecord>),
}

/// Serializes `value` as pretty JSON with object keys sorted.
pub fn to_sorted_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    Ok(serde_json::to_string_pretty(&v)?)
}

fn pose_to_joints(pose: &PersonPose, skeleton: &SkeletonSpec) -> Vec<JointRecord> {
    skeleton
        .annotated_ids()
        .into_iter()
        .map(|j| {
            let k = &pose.joints[j.index()];
            if k.visible {
                JointRecord {
                    x: k.x,
                    y: k.y,
                    visible: true,
                }
            } else {
                JointRecord {
                    x: 0.0,
                    y: 0.0,
                    visible: false,
                }
            }
        })
        .collect()
}

fn joints_to_pose(
    joints: &[JointRecord],
    person_id: usize,
    skeleton: &SkeletonSpec,
) -> Result<PersonPose> {
    let ids = skeleton.annotated_ids();
    if joints.len() != ids.len() {
        return Err(Error::Format(format!(
            "person {person_id}: expected {} joints, found {}",
            ids.len(),
            joints.len()
        )));
    }
    let mut pose = PersonPose {
        person_id,
        ..PersonPose::empty(skeleton)
    };
    for (j, r) in ids.into_iter().zip(joints) {
        if r.visible {
            if !(r.x.is_finite() && r.y.is_finite()) {
                return Err(Error::Format(format!("person {person_id}: non-finite joint")));
            }
            pose.joints[j.index()] = Keypoint::visible(r.x, r.y);
        }
    }
    Ok(pose)
}

impl SceneRecord {
    pub fn from_scene(scene: &Scene, skeleton: &SkeletonSpec) -> Self {
        Self {
            image_id: scene.image_id,
            width: scene.width,
            height: scene.height,
            persons: scene
                .persons
                .iter()
                .map(|p| PersonRecord {
                    person_id: p.pose.person_id,
                    joints: pose_to_joints(&p.pose, skeleton),
                    head_box: Some(p.head_box),
                    area: Some(p.area),
                })
                .collect(),
        }
    }

    /// Poses in file order.
    pub fn poses(&self, skeleton: &SkeletonSpec) -> Result<Vec<PersonPose>> {
        self.persons
            .iter()
            .map(|p| joints_to_pose(&p.joints, p.person_id, skeleton))
            .collect()
    }

    /// Converts to a [`Scene`]; missing boxes and areas are derived from the
    /// visible joints.
    pub fn to_scene(&self, skeleton: &SkeletonSpec) -> Result<Scene> {
        let poses = self.poses(skeleton)?;
        let persons = self
            .persons
            .iter()
            .zip(poses)
            .map(|(r, pose)| {
                let area = r.area.unwrap_or_else(|| crate::metrics::bbox_area(&pose, skeleton));
                ScenePerson {
                    head_box: r.head_box.unwrap_or([0.0; 4]),
                    area,
                    pose,
                }
            })
            .collect();
        Ok(Scene {
            image_id: self.image_id,
            width: self.width,
            height: self.height,
            persons,
        })
    }

    /// Ground truth for evaluation.
    pub fn gt_instances(&self, skeleton: &SkeletonSpec) -> Result<Vec<GtInstance>> {
        let poses = self.poses(skeleton)?;
        Ok(self
            .persons
            .iter()
            .zip(poses)
            .map(|(r, pose)| GtInstance {
                pose,
                area: r.area,
                head_box: r.head_box,
            })
            .collect())
    }
}

pub fn scene_to_json(scene: &Scene, skeleton: &SkeletonSpec) -> Result<String> {
    to_sorted_json(&SceneRecord::from_scene(scene, skeleton))
}

/// Parses one scene or an array of scenes.
pub fn read_scene_records(json: &str) -> Result<Vec<SceneRecord>> {
    let parsed: OneOrMany =
        serde_json::from_str(json).map_err(|e| Error::Format(format!("scene JSON: {e}")))?;
    Ok(match parsed {
        OneOrMany::One(s) => vec![s],
        OneOrMany::Many(v) => v,
    })
}

/// One detected person in COCO keypoint results format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoResult {
    pub image_id: u64,
    pub category_id: u32,
    /// `[x, y, v]` per annotated joint; `v = 2` visible, `v = 0` absent.
    pub keypoints: Vec<f64>,
    pub score: f64,
}

pub fn poses_to_results(image_id: u64, poses: &[PersonPose], skeleton: &SkeletonSpec) -> Vec<CocoResult> {
    poses
        .iter()
        .map(|p| CocoResult {
            image_id,
            category_id: 1,
            keypoints: skeleton
                .annotated_ids()
                .into_iter()
                .flat_map(|j| {
                    let k = &p.joints[j.index()];
                    if k.visible {
                        [k.x, k.y, 2.0]
                    } else {
                        [0.0, 0.0, 0.0]
                    }
                })
                .collect(),
            score: p.score,
        })
        .collect()
}

impl CocoResult {
    pub fn to_pose(&self, person_id: usize, skeleton: &SkeletonSpec) -> Result<PersonPose> {
        let ids = skeleton.annotated_ids();
        if self.keypoints.len() != 3 * ids.len() {
            return Err(Error::Format(format!(
                "image {}: expected {} keypoint values, found {}",
                self.image_id,
                3 * ids.len(),
                self.keypoints.len()
            )));
        }
        let mut pose = PersonPose {
            person_id,
            score: self.score,
            ..PersonPose::empty(skeleton)
        };
        for (j, kp) in ids.into_iter().zip(self.keypoints.chunks_exact(3)) {
            if kp[2] > 0.0 {
                pose.joints[j.index()] = Keypoint::visible(kp[0], kp[1]);
            }
        }
        Ok(pose)
    }
}

/// Parses COCO results and groups them by image, keeping file order.
pub fn results_from_json(json: &str, skeleton: &SkeletonSpec) -> Result<BTreeMap<u64, Vec<PersonPose>>> {
    let results: Vec<CocoResult> =
        serde_json::from_str(json).map_err(|e| Error::Format(format!("results JSON: {e}")))?;
    let mut out: BTreeMap<u64, Vec<PersonPose>> = BTreeMap::new();
    for r in &results {
        let list = out.entry(r.image_id).or_default();
        let pose = r.to_pose(list.len(), skeleton)?;
        list.push(pose);
    }
    Ok(out)
}

/// Pairs predictions with ground-truth scenes by image id. Images that only
/// appear among the predictions are kept with no ground truth.
pub fn eval_images(
    preds: BTreeMap<u64, Vec<PersonPose>>,
    gts: &[SceneRecord],
    skeleton: &SkeletonSpec,
) -> Result<Vec<EvalImage>> {
    let mut images: BTreeMap<u64, EvalImage> = BTreeMap::new();
    for g in gts {
        let entry = images.entry(g.image_id).or_insert_with(|| EvalImage {
            image_id: g.image_id,
            ..Default::default()
        });
        entry.gts.extend(g.gt_instances(skeleton)?);
    }
    for (id, poses) in preds {
        images
            .entry(id)
            .or_insert_with(|| EvalImage {
                image_id: id,
                ..Default::default()
            })
            .preds
            .extend(poses);
    }
    Ok(images.into_values().collect())
}
