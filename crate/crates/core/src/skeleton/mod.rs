//! Joint taxonomy and limb hierarchy.
//!
//! Joints are split into a root group (torso joints plus the center
//! pseudo-joint), which carries person identity through tags, and an
//! adjacency group (limbs and face), which is linked back to the root group
//! through displacement fields. Limb joints form a two-level forest:
//! wrists/ankles hang off elbows/knees, which hang off shoulders/hips.

mod pose;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use pose::{Keypoint, PersonPose};

/// Dense joint index into a [`SkeletonSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointId(pub u16);

impl JointId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for JointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointGroup {
    Root,
    AdjacencyLevel1,
    AdjacencyLevel2,
    Facial,
    CenterPseudo,
}

impl JointGroup {
    /// Members of the root group are clustered by tag.
    pub fn is_rjg(self) -> bool {
        matches!(self, JointGroup::Root | JointGroup::CenterPseudo)
    }

    /// Members of the adjacency group are identified by displacement tracing.
    pub fn is_ajg(self) -> bool {
        matches!(self, JointGroup::AdjacencyLevel1 | JointGroup::AdjacencyLevel2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub id: JointId,
    pub name: String,
    pub group: JointGroup,
    /// OKS falloff constant `k_i`.
    pub oks_k: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SkeletonFile {
    name: String,
    joints: Vec<JointSpec>,
    hierarchy_edges: Vec<(JointId, JointId)>,
}

/// An immutable, validated skeleton description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SkeletonFile", into = "SkeletonFile")]
pub struct SkeletonSpec {
    name: String,
    joints: Vec<JointSpec>,
    /// `(child, parent)` pairs.
    hierarchy_edges: Vec<(JointId, JointId)>,
    parent: Vec<Option<JointId>>,
    children: Vec<Vec<JointId>>,
    center: JointId,
}

impl From<SkeletonSpec> for SkeletonFile {
    fn from(s: SkeletonSpec) -> Self {
        SkeletonFile {
            name: s.name,
            joints: s.joints,
            hierarchy_edges: s.hierarchy_edges,
        }
    }
}

impl TryFrom<SkeletonFile> for SkeletonSpec {
    type Error = Error;

    fn try_from(f: SkeletonFile) -> Result<Self> {
        SkeletonSpec::new(f.name, f.joints, f.hierarchy_edges)
    }
}

const COCO17_JSON: &str = include_str!("../../configs/coco17.json");
const MPII16_JSON: &str = include_str!("../../configs/mpii16.json");

/// The 17-keypoint COCO skeleton plus the center pseudo-joint (id 17).
pub fn default_coco_skeleton() -> SkeletonSpec {
    SkeletonSpec::from_json(COCO17_JSON).expect("shipped coco17.json is valid")
}

/// The 16-joint MPII skeleton plus the center pseudo-joint (id 16).
pub fn mpii_skeleton() -> SkeletonSpec {
    SkeletonSpec::from_json(MPII16_JSON).expect("shipped mpii16.json is valid")
}

impl SkeletonSpec {
    pub fn new(
        name: impl Into<String>,
        joints: Vec<JointSpec>,
        hierarchy_edges: Vec<(JointId, JointId)>,
    ) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidSkeleton(msg));
        let n = joints.len();
        if n == 0 || n > u16::MAX as usize {
            return invalid(format!("joint count {n} out of range"));
        }
        for (i, j) in joints.iter().enumerate() {
            if j.id.index() != i {
                return invalid(format!("joint ids must be dense and ordered; slot {i} has id {}", j.id));
            }
            if !(j.oks_k >= 0.0 && j.oks_k.is_finite()) {
                return invalid(format!("joint {} has invalid oks_k {}", j.name, j.oks_k));
            }
            if joints[..i].iter().any(|o| o.name == j.name) {
                return invalid(format!("duplicate joint name {}", j.name));
            }
        }
        let centers: Vec<_> = joints
            .iter()
            .filter(|j| j.group == JointGroup::CenterPseudo)
            .collect();
        if centers.len() != 1 {
            return invalid(format!("expected exactly one center joint, found {}", centers.len()));
        }
        let center = centers[0].id;

        let mut parent = vec![None; n];
        let mut children = vec![Vec::new(); n];
        for &(c, p) in &hierarchy_edges {
            if c.index() >= n || p.index() >= n {
                return invalid(format!("edge ({c}, {p}) references an unknown joint"));
            }
            let (cg, pg) = (joints[c.index()].group, joints[p.index()].group);
            let ok = matches!(
                (cg, pg),
                (JointGroup::AdjacencyLevel2, JointGroup::AdjacencyLevel1)
                    | (JointGroup::AdjacencyLevel1, JointGroup::Root)
            );
            if !ok {
                return invalid(format!("edge ({c}, {p}) links {cg:?} to {pg:?}"));
            }
            if parent[c.index()].replace(p).is_some() {
                return invalid(format!("joint {c} has more than one parent"));
            }
            children[p.index()].push(c);
        }
        for j in &joints {
            if j.group.is_ajg() && parent[j.id.index()].is_none() {
                return invalid(format!("joint {} has no hierarchy parent", j.name));
            }
        }

        Ok(Self {
            name: name.into(),
            joints,
            hierarchy_edges,
            parent,
            children,
            center,
        })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("skeleton serializes")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn joints(&self) -> &[JointSpec] {
        &self.joints
    }

    pub fn joint(&self, id: JointId) -> &JointSpec {
        &self.joints[id.index()]
    }

    pub fn group(&self, id: JointId) -> JointGroup {
        self.joints[id.index()].group
    }

    pub fn contains(&self, id: JointId) -> bool {
        id.index() < self.joints.len()
    }

    pub fn id_by_name(&self, name: &str) -> Option<JointId> {
        self.joints.iter().find(|j| j.name == name).map(|j| j.id)
    }

    pub fn hierarchy_edges(&self) -> &[(JointId, JointId)] {
        &self.hierarchy_edges
    }

    pub fn parent_of(&self, id: JointId) -> Option<JointId> {
        self.parent[id.index()]
    }

    pub fn children_of(&self, id: JointId) -> &[JointId] {
        &self.children[id.index()]
    }

    pub fn center_id(&self) -> JointId {
        self.center
    }

    pub fn ids(&self) -> impl Iterator<Item = JointId> + '_ {
        self.joints.iter().map(|j| j.id)
    }

    fn ids_in(&self, group: JointGroup) -> Vec<JointId> {
        self.joints
            .iter()
            .filter(|j| j.group == group)
            .map(|j| j.id)
            .collect()
    }

    /// Root-group ids in clustering order: the center first, then torso
    /// joints by id.
    pub fn rjg_ids(&self) -> Vec<JointId> {
        std::iter::once(self.center)
            .chain(self.ids_in(JointGroup::Root))
            .collect()
    }

    pub fn level1_ids(&self) -> Vec<JointId> {
        self.ids_in(JointGroup::AdjacencyLevel1)
    }

    pub fn level2_ids(&self) -> Vec<JointId> {
        self.ids_in(JointGroup::AdjacencyLevel2)
    }

    pub fn facial_ids(&self) -> Vec<JointId> {
        self.ids_in(JointGroup::Facial)
    }

    /// Ids carrying a displacement field: limb joints then facial joints.
    pub fn displaced_ids(&self) -> Vec<JointId> {
        let mut ids = self.level1_ids();
        ids.extend(self.level2_ids());
        ids.extend(self.facial_ids());
        ids.sort();
        ids
    }

    /// Real (annotated) joints, i.e. everything but the center pseudo-joint.
    pub fn annotated_ids(&self) -> Vec<JointId> {
        self.ids().filter(|&id| id != self.center).collect()
    }

    /// Number of root-group joint types, center included.
    pub fn u(&self) -> usize {
        self.joints.iter().filter(|j| j.group.is_rjg()).count()
    }

    /// Number of adjacency-group plus facial joint types.
    pub fn v(&self) -> usize {
        self.len() - self.u()
    }

    /// Processing order used by refinement: root, level 1, level 2, facial.
    pub fn refinement_order(&self) -> Vec<JointId> {
        let mut ids = self.ids_in(JointGroup::Root);
        ids.extend(self.level1_ids());
        ids.extend(self.level2_ids());
        ids.extend(self.facial_ids());
        ids
    }

    /// Mean of the visible annotated joints of `pose`.
    pub fn compute_center(&self, pose: &PersonPose) -> Result<(f64, f64)> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for (i, kp) in pose.joints.iter().enumerate() {
            if i == self.center.index() || !kp.visible {
                continue;
            }
            sx += kp.x;
            sy += kp.y;
            n += 1;
        }
        if n == 0 {
            return Err(Error::NoVisibleJoints);
        }
        Ok((sx / n as f64, sy / n as f64))
    }

    /// Returns a copy of `pose` whose center entry holds the computed center
    /// (visible), or is hidden when no annotated joint is visible.
    pub fn with_center(&self, pose: &PersonPose) -> PersonPose {
        let mut out = pose.clone();
        let c = &mut out.joints[self.center.index()];
        match self.compute_center(pose) {
            Ok((x, y)) => {
                *c = Keypoint::visible(x, y);
            }
            Err(_) => c.visible = false,
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &SkeletonSpec, name: &str) -> JointId {
        s.id_by_name(name).unwrap()
    }

    #[test]
    fn coco_counts() {
        let s = default_coco_skeleton();
        assert_eq!(s.len(), 18);
        assert_eq!(s.u(), 5);
        assert_eq!(s.v(), 13);
        assert_eq!(s.hierarchy_edges().len(), 8);
        assert_eq!(s.center_id(), JointId(17));
        assert_eq!(s.facial_ids().len(), 5);
        assert_eq!(s.level1_ids().len(), 4);
        assert_eq!(s.level2_ids().len(), 4);
    }

    #[test]
    fn coco_hierarchy_lookup() {
        let s = default_coco_skeleton();
        assert_eq!(s.parent_of(id(&s, "left_wrist")), Some(id(&s, "left_elbow")));
        assert_eq!(s.parent_of(id(&s, "left_elbow")), Some(id(&s, "left_shoulder")));
        assert_eq!(s.parent_of(id(&s, "right_ankle")), Some(id(&s, "right_knee")));
        assert_eq!(s.parent_of(id(&s, "right_knee")), Some(id(&s, "right_hip")));
        assert_eq!(s.parent_of(id(&s, "nose")), None);
        assert_eq!(s.children_of(id(&s, "left_hip")), &[id(&s, "left_knee")]);
    }

    #[test]
    fn hierarchy_is_a_shallow_forest() {
        for s in [default_coco_skeleton(), mpii_skeleton()] {
            for j in s.ids() {
                let mut cur = j;
                let mut hops = 0;
                while let Some(p) = s.parent_of(cur) {
                    cur = p;
                    hops += 1;
                    assert!(hops <= 2, "{} climbs more than two levels", s.joint(j).name);
                }
                if s.group(j).is_ajg() {
                    assert_eq!(s.group(cur), JointGroup::Root);
                }
            }
        }
    }

    #[test]
    fn mpii_counts() {
        let s = mpii_skeleton();
        assert_eq!(s.len(), 17);
        assert_eq!(s.u() + s.v(), 17);
        assert_eq!(s.facial_ids(), vec![id(&s, "upper_neck"), id(&s, "head_top")]);
    }

    #[test]
    fn json_round_trip() {
        let s = default_coco_skeleton();
        let back = SkeletonSpec::from_json(&s.to_json()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn rejects_cycles_and_bad_groups() {
        let s = default_coco_skeleton();
        let mut edges = s.hierarchy_edges().to_vec();
        // shoulder -> elbow would invert a level
        edges.push((JointId(5), JointId(7)));
        assert!(SkeletonSpec::new("bad", s.joints().to_vec(), edges).is_err());

        let mut joints = s.joints().to_vec();
        joints[0].group = JointGroup::CenterPseudo;
        assert!(SkeletonSpec::new("bad", joints, s.hierarchy_edges().to_vec()).is_err());

        let edges: Vec<_> = s.hierarchy_edges()[1..].to_vec();
        assert!(SkeletonSpec::new("bad", s.joints().to_vec(), edges).is_err());
    }

    #[test]
    fn center_examples() {
        let s = default_coco_skeleton();
        let mut pose = PersonPose::empty(&s);
        pose.joints[3] = Keypoint::visible(10.0, 20.0);
        assert_eq!(s.compute_center(&pose).unwrap(), (10.0, 20.0));
        pose.joints[3] = Keypoint::visible(0.0, 0.0);
        pose.joints[8] = Keypoint::visible(10.0, 10.0);
        assert_eq!(s.compute_center(&pose).unwrap(), (5.0, 5.0));
        // the pseudo-joint itself never contributes
        pose.joints[17] = Keypoint::visible(1000.0, 1000.0);
        assert_eq!(s.compute_center(&pose).unwrap(), (5.0, 5.0));
    }

    #[test]
    fn center_requires_a_visible_joint() {
        let s = default_coco_skeleton();
        let pose = PersonPose::empty(&s);
        assert!(matches!(s.compute_center(&pose), Err(Error::NoVisibleJoints)));
    }
}
