//! Ground-truth field synthesis.
//!
//! Every visible joint owns a regression disk of radius `tau` centered on its
//! pixel anchor (the joint location divided by the stride and rounded).
//! Inside the disk the confidence map holds a truncated Gaussian, root-group
//! joints write their person tag, and displaced joints write the normalized
//! vector from the pixel to their target joint.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{disk_offsets, Grid};
use crate::skeleton::{JointGroup, JointId, PersonPose, SkeletonSpec};

/// A two-channel normalized displacement field.
#[derive(Debug, Clone, PartialEq)]
pub struct DispField {
    pub dx: Grid,
    pub dy: Grid,
}

impl DispField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            dx: Grid::zeros(width, height),
            dy: Grid::zeros(width, height),
        }
    }

    pub fn get(&self, x: usize, y: usize) -> (f32, f32) {
        (self.dx.get(x, y), self.dy.get(x, y))
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dx.dims()
    }
}

/// Which displacement channel set a field belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispKind {
    /// Child to hierarchy parent; facial joints point at the center.
    Hierarchical,
    /// Limb joint straight to the center (long-range fallback).
    Basic,
    /// Parent to child, sampled in the parent's disks, keyed by the child id.
    Reverse,
}

/// Per-joint-type grids describing one image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FieldStack {
    width: usize,
    height: usize,
    pub conf: BTreeMap<JointId, Grid>,
    pub tags: BTreeMap<JointId, Grid>,
    pub disp: BTreeMap<JointId, DispField>,
    pub basic: BTreeMap<JointId, DispField>,
    pub reverse: BTreeMap<JointId, DispField>,
}

impl FieldStack {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            ..Default::default()
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// The displacement normalization factor `sqrt(W² + H²)`.
    pub fn z(&self) -> f64 {
        normalization(self.width, self.height)
    }

    pub fn is_empty(&self) -> bool {
        self.conf.is_empty()
            && self.tags.is_empty()
            && self.disp.is_empty()
            && self.basic.is_empty()
            && self.reverse.is_empty()
    }

    pub fn displacement(&self, kind: DispKind) -> &BTreeMap<JointId, DispField> {
        match kind {
            DispKind::Hierarchical => &self.disp,
            DispKind::Basic => &self.basic,
            DispKind::Reverse => &self.reverse,
        }
    }

    pub fn displacement_mut(&mut self, kind: DispKind) -> &mut BTreeMap<JointId, DispField> {
        match kind {
            DispKind::Hierarchical => &mut self.disp,
            DispKind::Basic => &mut self.basic,
            DispKind::Reverse => &mut self.reverse,
        }
    }

    /// Checks that every grid matches the stack dimensions and that every
    /// joint id exists in `skeleton`.
    pub fn check(&self, skeleton: &SkeletonSpec) -> Result<()> {
        let expected = (self.width, self.height);
        let grids = self
            .conf
            .iter()
            .chain(self.tags.iter())
            .map(|(id, g)| (*id, g.dims()))
            .chain(
                [&self.disp, &self.basic, &self.reverse]
                    .into_iter()
                    .flat_map(|m| m.iter())
                    .flat_map(|(id, f)| [(*id, f.dx.dims()), (*id, f.dy.dims())]),
            );
        for (id, dims) in grids {
            if !skeleton.contains(id) {
                return Err(Error::UnknownJoint(id));
            }
            if dims != expected {
                return Err(Error::DimensionMismatch {
                    expected,
                    actual: dims,
                });
            }
        }
        Ok(())
    }
}

pub fn normalization(width: usize, height: usize) -> f64 {
    ((width * width + height * height) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagAssignment {
    /// Person `n` of the input list gets tag `n`.
    SequentialIntegers,
    /// Each person's `person_id` is used as its tag.
    ProvidedPerPerson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Gaussian spread in output pixels.
    pub sigma: f64,
    /// Regression disk radius in output pixels.
    pub tau: f64,
    pub tag_assignment: TagAssignment,
    /// Input pixels per output pixel.
    pub stride: f64,
    /// Emit parent-to-child channels used by refinement.
    pub reverse_edges: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            sigma: 7.0,
            tau: 7.0,
            tag_assignment: TagAssignment::SequentialIntegers,
            stride: 1.0,
            reverse_edges: true,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidConfig(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.tau >= 1.0) {
            return Err(Error::InvalidConfig(format!("tau must be >= 1, got {}", self.tau)));
        }
        if !(self.stride > 0.0) {
            return Err(Error::InvalidConfig(format!("stride must be > 0, got {}", self.stride)));
        }
        Ok(())
    }

    /// Pixel anchor of a continuous input-space location, clamped to the grid.
    pub fn anchor(&self, x: f64, y: f64, width: usize, height: usize) -> (i64, i64) {
        let ax = (x / self.stride).round() as i64;
        let ay = (y / self.stride).round() as i64;
        (
            ax.clamp(0, width.saturating_sub(1) as i64),
            ay.clamp(0, height.saturating_sub(1) as i64),
        )
    }
}

/// Two persons' same-type disks intersect; the nearer joint owns each shared
/// pixel of the tag and displacement grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OverlapAmbiguity {
    pub joint: JointId,
    pub persons: (usize, usize),
}

/// A displaced joint whose target joint is not visible; its hierarchical
/// channel is left zero in that person's disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MissingParent {
    pub person: usize,
    pub joint: JointId,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EncodeReport {
    pub overlaps: Vec<OverlapAmbiguity>,
    pub missing_parents: Vec<MissingParent>,
}

#[derive(Debug, Clone)]
pub struct Encoded {
    pub stack: FieldStack,
    pub report: EncodeReport,
}

/// Writes the Gaussian `amplitude * exp(-d²/σ²)` over the disk around
/// `anchor`, keeping the per-pixel maximum.
pub(crate) fn splat_gaussian(grid: &mut Grid, anchor: (i64, i64), amplitude: f64, cfg: &EncoderConfig) {
    let s2 = cfg.sigma * cfg.sigma;
    for (dx, dy) in disk_offsets(cfg.tau) {
        let (x, y) = (anchor.0 + dx, anchor.1 + dy);
        if !grid.contains(x, y) {
            continue;
        }
        let d2 = (dx * dx + dy * dy) as f64;
        let v = (amplitude * (-d2 / s2).exp()) as f32;
        let (ux, uy) = (x as usize, y as usize);
        if v > grid.get(ux, uy) {
            grid.set(ux, uy, v);
        }
    }
}

/// Confidence map for one joint type. Poses must already carry the entry for
/// `joint` (use [`SkeletonSpec::with_center`] for the center pseudo-joint).
pub fn encode_confidence(
    poses: &[PersonPose],
    joint: JointId,
    cfg: &EncoderConfig,
    width: usize,
    height: usize,
) -> Grid {
    let mut grid = Grid::zeros(width, height);
    for pose in poses {
        let kp = &pose.joints[joint.index()];
        if kp.visible {
            let a = cfg.anchor(kp.x, kp.y, width, height);
            splat_gaussian(&mut grid, a, 1.0, cfg);
        }
    }
    grid
}

/// Paints disks with nearest-anchor ownership. `sources` holds
/// `(anchor, payload)`; `write` receives the pixel and the owner's payload.
fn paint_nearest<T: Copy>(
    width: usize,
    height: usize,
    tau: f64,
    sources: &[((i64, i64), T)],
    mut write: impl FnMut(usize, usize, T),
) {
    let offsets = disk_offsets(tau);
    let mut owner_d2 = vec![i64::MAX; width * height];
    let mut owner: Vec<Option<T>> = vec![None; width * height];
    for &(a, payload) in sources {
        for &(dx, dy) in &offsets {
            let (x, y) = (a.0 + dx, a.1 + dy);
            if x < 0 || y < 0 || x as usize >= width || y as usize >= height {
                continue;
            }
            let idx = y as usize * width + x as usize;
            let d2 = dx * dx + dy * dy;
            if d2 < owner_d2[idx] {
                owner_d2[idx] = d2;
                owner[idx] = Some(payload);
            }
        }
    }
    for (idx, o) in owner.into_iter().enumerate() {
        if let Some(p) = o {
            write(idx % width, idx / width, p);
        }
    }
}

fn tag_for(index: usize, pose: &PersonPose, cfg: &EncoderConfig) -> f32 {
    match cfg.tag_assignment {
        TagAssignment::SequentialIntegers => index as f32,
        TagAssignment::ProvidedPerPerson => pose.person_id as f32,
    }
}

fn overlaps_for(
    joint: JointId,
    anchors: &[(usize, (i64, i64))],
    tau: f64,
    out: &mut Vec<OverlapAmbiguity>,
) {
    for (i, &(pa, a)) in anchors.iter().enumerate() {
        for &(pb, b) in &anchors[i + 1..] {
            let d = ((a.0 - b.0) as f64).hypot((a.1 - b.1) as f64);
            if d <= 2.0 * tau {
                out.push(OverlapAmbiguity {
                    joint,
                    persons: (pa, pb),
                });
            }
        }
    }
}

/// Tag maps for every root-group joint type. Poses must carry their center.
pub fn encode_tags(
    poses: &[PersonPose],
    skeleton: &SkeletonSpec,
    cfg: &EncoderConfig,
    width: usize,
    height: usize,
) -> (BTreeMap<JointId, Grid>, Vec<OverlapAmbiguity>) {
    let mut maps = BTreeMap::new();
    let mut overlaps = Vec::new();
    for joint in skeleton.rjg_ids() {
        let anchors: Vec<(usize, (i64, i64))> = poses
            .iter()
            .enumerate()
            .filter_map(|(n, p)| {
                let kp = &p.joints[joint.index()];
                kp.visible.then(|| (n, cfg.anchor(kp.x, kp.y, width, height)))
            })
            .collect();
        overlaps_for(joint, &anchors, cfg.tau, &mut overlaps);
        let sources: Vec<_> = anchors
            .iter()
            .map(|&(n, a)| (a, tag_for(n, &poses[n], cfg)))
            .collect();
        let mut grid = Grid::zeros(width, height);
        paint_nearest(width, height, cfg.tau, &sources, |x, y, t| grid.set(x, y, t));
        maps.insert(joint, grid);
    }
    (maps, overlaps)
}

/// Paints `(target - p) / Z` around each source anchor.
fn displacement_field(
    width: usize,
    height: usize,
    tau: f64,
    sources: &[((i64, i64), (i64, i64))],
) -> DispField {
    let z = normalization(width, height);
    let mut field = DispField::zeros(width, height);
    paint_nearest(width, height, tau, sources, |x, y, t| {
        field.dx.set(x, y, ((t.0 - x as i64) as f64 / z) as f32);
        field.dy.set(x, y, ((t.1 - y as i64) as f64 / z) as f32);
    });
    field
}

/// Displacement channels, returned as `(hierarchical, basic, reverse)` maps
/// plus the list of joints whose target was missing.
///
/// Limb joints get a hierarchical channel toward their parent and a basic
/// channel toward the center; facial joints get a single channel toward the
/// center. Poses must carry their center.
#[allow(clippy::type_complexity)]
pub fn encode_displacements(
    poses: &[PersonPose],
    skeleton: &SkeletonSpec,
    cfg: &EncoderConfig,
    width: usize,
    height: usize,
) -> (
    BTreeMap<JointId, DispField>,
    BTreeMap<JointId, DispField>,
    BTreeMap<JointId, DispField>,
    Vec<MissingParent>,
) {
    let center = skeleton.center_id();
    let anchor_of = |p: &PersonPose, j: JointId| {
        let kp = &p.joints[j.index()];
        kp.visible.then(|| cfg.anchor(kp.x, kp.y, width, height))
    };

    let mut hier = BTreeMap::new();
    let mut basic = BTreeMap::new();
    let mut reverse = BTreeMap::new();
    let mut missing = Vec::new();

    for joint in skeleton.displaced_ids() {
        let target = match skeleton.group(joint) {
            JointGroup::Facial => center,
            _ => skeleton.parent_of(joint).expect("limb joints have parents"),
        };
        let mut to_target = Vec::new();
        let mut to_center = Vec::new();
        let mut from_parent = Vec::new();
        for (n, p) in poses.iter().enumerate() {
            let Some(a) = anchor_of(p, joint) else { continue };
            match anchor_of(p, target) {
                Some(t) => {
                    to_target.push((a, t));
                    if target != center {
                        from_parent.push((t, a));
                    }
                }
                None => missing.push(MissingParent { person: n, joint }),
            }
            if let Some(c) = anchor_of(p, center) {
                to_center.push((a, c));
            }
        }
        hier.insert(joint, displacement_field(width, height, cfg.tau, &to_target));
        if skeleton.group(joint).is_ajg() {
            basic.insert(joint, displacement_field(width, height, cfg.tau, &to_center));
            if cfg.reverse_edges {
                reverse.insert(joint, displacement_field(width, height, cfg.tau, &from_parent));
            }
        }
    }
    (hier, basic, reverse, missing)
}

/// Encodes the full field stack for `poses` on a `width x height` grid.
pub fn encode(
    poses: &[PersonPose],
    skeleton: &SkeletonSpec,
    cfg: &EncoderConfig,
    width: usize,
    height: usize,
) -> Result<Encoded> {
    cfg.validate()?;
    for p in poses {
        if p.joints.len() != skeleton.len() {
            return Err(Error::InvalidConfig(format!(
                "pose has {} joints, skeleton has {}",
                p.joints.len(),
                skeleton.len()
            )));
        }
    }
    let poses: Vec<PersonPose> = poses.iter().map(|p| skeleton.with_center(p)).collect();
    let ids: Vec<JointId> = skeleton.ids().collect();
    let conf: BTreeMap<JointId, Grid> = ids
        .par_iter()
        .map(|&j| (j, encode_confidence(&poses, j, cfg, width, height)))
        .collect();
    let (tags, overlaps) = encode_tags(&poses, skeleton, cfg, width, height);
    let (disp, basic, reverse, missing_parents) =
        encode_displacements(&poses, skeleton, cfg, width, height);
    Ok(Encoded {
        stack: FieldStack {
            width,
            height,
            conf,
            tags,
            disp,
            basic,
            reverse,
        },
        report: EncodeReport {
            overlaps,
            missing_parents,
        },
    })
}
