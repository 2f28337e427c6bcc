//! Training objectives evaluated on (prediction, ground truth) stacks.
//!
//! - confidence: mean squared error per joint type,
//! - displacement: smooth-L1 over the ground-truth support,
//! - tags: pull toward each person's reference tag plus a Gaussian push
//!   between reference tags,
//! - total: `Σ L^H + α Σ L^D + β Σ_U L^G`.

use serde::{Deserialize, Serialize};

use crate::encoder::{DispField, EncoderConfig, FieldStack};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::skeleton::{PersonPose, SkeletonSpec};

/// Which `(n, n')` pairs enter the push term. Both are normalized by `N²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PushPairs {
    /// `n != n'` only.
    CrossOnly,
    /// Every ordered pair, `n == n'` included (each contributes `exp(0)`).
    AllPairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Push kernel width in tag units.
    pub sigma_tag: f64,
    pub push_pairs: PushPairs,
    /// Restrict the displacement loss to ground-truth support pixels.
    pub d_mask: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            beta: 0.01,
            sigma_tag: 1.0,
            push_pairs: PushPairs::CrossOnly,
            d_mask: true,
        }
    }
}

fn same_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: b,
            actual: a,
        });
    }
    Ok(())
}

pub fn loss_confidence(pred: &Grid, gt: &Grid) -> Result<f64> {
    same_dims(pred.dims(), gt.dims())?;
    let n = gt.as_slice().len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = pred
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .map(|(&p, &g)| {
            let d = p as f64 - g as f64;
            d * d
        })
        .sum();
    Ok(sum / n as f64)
}

/// Smooth-L1 with the transition at 1.
pub fn smooth_l1(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        0.5 * a * a
    } else {
        a - 0.5
    }
}

/// Pixels where `gt_conf` is positive, i.e. the union of regression disks.
pub fn support_mask(gt_conf: &Grid) -> Vec<bool> {
    gt_conf.as_slice().iter().map(|&v| v > 0.0).collect()
}

/// Smooth-L1 summed over both channels, averaged over masked pixels.
/// `mask == None` averages over every pixel. An empty mask gives 0.
pub fn loss_displacement(pred: &DispField, gt: &DispField, mask: Option<&[bool]>) -> Result<f64> {
    same_dims(pred.dims(), gt.dims())?;
    let n = gt.dx.as_slice().len();
    if let Some(m) = mask {
        if m.len() != n {
            return Err(Error::DimensionMismatch {
                expected: gt.dims(),
                actual: (m.len(), 1),
            });
        }
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for i in 0..n {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        let ex = pred.dx.as_slice()[i] as f64 - gt.dx.as_slice()[i] as f64;
        let ey = pred.dy.as_slice()[i] as f64 - gt.dy.as_slice()[i] as f64;
        sum += smooth_l1(ex) + smooth_l1(ey);
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TagLoss {
    pub pull: f64,
    pub push: f64,
    pub total: f64,
}

/// Per-person tag samples: the tags read at each labeled root-group joint.
pub type TagSamples = Vec<Vec<f64>>;

/// Reads the predicted tags at every labeled root-group location of each
/// ground-truth person (the center included when computable). Persons with
/// no labeled root-group joint are skipped.
pub fn sample_tags(
    pred: &FieldStack,
    gt_poses: &[PersonPose],
    skeleton: &SkeletonSpec,
    enc: &EncoderConfig,
) -> Result<TagSamples> {
    let (w, h) = (pred.width(), pred.height());
    let mut out = Vec::new();
    for pose in gt_poses {
        let pose = skeleton.with_center(pose);
        let mut tags = Vec::new();
        for j in skeleton.rjg_ids() {
            let kp = &pose.joints[j.index()];
            if !kp.visible {
                continue;
            }
            let Some(grid) = pred.tags.get(&j) else { continue };
            let (x, y) = enc.anchor(kp.x, kp.y, w, h);
            tags.push(grid.get(x as usize, y as usize) as f64);
        }
        if !tags.is_empty() {
            out.push(tags);
        }
    }
    Ok(out)
}

/// Pull/push losses from per-person tag samples.
///
/// Pull averages, over persons, the mean squared deviation of each person's
/// tags from its reference (mean) tag. Push is
/// `1/N² Σ exp(-(ref_n - ref_n')² / (2 σ_tag²))` over the selected pairs.
pub fn tag_loss_from_samples(samples: &[Vec<f64>], sigma_tag: f64, pairs: PushPairs) -> Result<TagLoss> {
    let persons: Vec<&Vec<f64>> = samples.iter().filter(|s| !s.is_empty()).collect();
    if persons.is_empty() {
        return Err(Error::NoLabeledJoints);
    }
    let n = persons.len() as f64;
    let refs: Vec<f64> = persons
        .iter()
        .map(|t| t.iter().sum::<f64>() / t.len() as f64)
        .collect();
    let pull = persons
        .iter()
        .zip(&refs)
        .map(|(t, r)| t.iter().map(|v| (r - v).powi(2)).sum::<f64>() / t.len() as f64)
        .sum::<f64>()
        / n;
    let k = 1.0 / (2.0 * sigma_tag * sigma_tag);
    let mut push = 0.0;
    for (i, a) in refs.iter().enumerate() {
        for (j, b) in refs.iter().enumerate() {
            if i == j && pairs == PushPairs::CrossOnly {
                continue;
            }
            push += (-k * (a - b).powi(2)).exp();
        }
    }
    push /= n * n;
    Ok(TagLoss {
        pull,
        push,
        total: pull + push,
    })
}

pub fn loss_tags(
    pred: &FieldStack,
    gt_poses: &[PersonPose],
    skeleton: &SkeletonSpec,
    enc: &EncoderConfig,
    cfg: &LossConfig,
) -> Result<TagLoss> {
    let samples = sample_tags(pred, gt_poses, skeleton, enc)?;
    tag_loss_from_samples(&samples, cfg.sigma_tag, cfg.push_pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown {
    /// `Σ L^H` over every joint type.
    pub confidence: f64,
    /// `Σ L^D` over displaced joint types.
    pub displacement: f64,
    pub pull: f64,
    pub push: f64,
    /// `L^G = pull + push`.
    pub tag: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Number of root-group joint types `U`.
    pub tag_types: usize,
    pub total: f64,
}

/// Sum of the displacement losses of every channel set stored for a joint.
fn displacement_sum(pred: &FieldStack, gt: &FieldStack, skeleton: &SkeletonSpec, d_mask: bool) -> Result<f64> {
    let mut total = 0.0;
    for joint in skeleton.displaced_ids() {
        let child_mask = gt.conf.get(&joint).map(support_mask);
        let parent_mask = skeleton
            .parent_of(joint)
            .and_then(|p| gt.conf.get(&p))
            .map(support_mask);
        let sets = [
            (&pred.disp, &gt.disp, &child_mask),
            (&pred.basic, &gt.basic, &child_mask),
            (&pred.reverse, &gt.reverse, &parent_mask),
        ];
        for (p, g, mask) in sets {
            let Some(gf) = g.get(&joint) else { continue };
            let zeros;
            let pf = match p.get(&joint) {
                Some(f) => f,
                None => {
                    zeros = DispField::zeros(gf.dx.width(), gf.dx.height());
                    &zeros
                }
            };
            let mask = if d_mask { mask.as_deref() } else { None };
            total += loss_displacement(pf, gf, mask)?;
        }
    }
    Ok(total)
}

/// Weighted total `Σ L^H + α Σ L^D + β U L^G`, where `L^G` is evaluated on
/// the predicted tags at the ground-truth persons' root-group joints.
pub fn loss_total(
    pred: &FieldStack,
    gt: &FieldStack,
    gt_poses: &[PersonPose],
    skeleton: &SkeletonSpec,
    enc: &EncoderConfig,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    same_dims((pred.width(), pred.height()), (gt.width(), gt.height()))?;
    let mut confidence = 0.0;
    for (joint, g) in &gt.conf {
        confidence += match pred.conf.get(joint) {
            Some(p) => loss_confidence(p, g)?,
            None => loss_confidence(&Grid::zeros(g.width(), g.height()), g)?,
        };
    }
    let displacement = displacement_sum(pred, gt, skeleton, cfg.d_mask)?;
    let tags = loss_tags(pred, gt_poses, skeleton, enc, cfg)?;
    let u = skeleton.u();
    let total = confidence + cfg.alpha * displacement + cfg.beta * u as f64 * tags.total;
    Ok(LossBreakdown {
        confidence,
        displacement,
        pull: tags.pull,
        push: tags.push,
        tag: tags.total,
        alpha: cfg.alpha,
        beta: cfg.beta,
        tag_types: u,
        total,
    })
}
