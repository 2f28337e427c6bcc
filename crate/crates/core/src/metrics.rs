//! Keypoint evaluation: OKS, COCO-style AP/AR and PCKh.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::min_cost_assignment;
use crate::skeleton::{PersonPose, SkeletonSpec};

/// A ground-truth person with optional evaluation metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct GtInstance {
    pub pose: PersonPose,
    /// Object area `s²`; defaults to the bounding box of visible joints.
    pub area: Option<f64>,
    /// Head box `[x0, y0, x1, y1]` for PCKh.
    pub head_box: Option<[f64; 4]>,
}

impl GtInstance {
    pub fn new(pose: PersonPose) -> Self {
        Self {
            pose,
            area: None,
            head_box: None,
        }
    }

    pub fn area(&self, skeleton: &SkeletonSpec) -> f64 {
        self.area.unwrap_or_else(|| bbox_area(&self.pose, skeleton))
    }
}

pub fn bbox_area(pose: &PersonPose, skeleton: &SkeletonSpec) -> f64 {
    pose.visible_bounds(skeleton)
        .map(|(x0, y0, x1, y1)| (x1 - x0) * (y1 - y0))
        .unwrap_or(0.0)
}

/// Predictions and ground truth for one image.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalImage {
    pub image_id: u64,
    pub preds: Vec<PersonPose>,
    pub gts: Vec<GtInstance>,
}

/// Object keypoint similarity between `pred` and `gt` at object scale `s`:
/// the mean over visible ground-truth joints of `exp(-d² / (2 s² k²))`.
/// Joints missing from `pred` score zero.
pub fn oks(pred: &PersonPose, gt: &PersonPose, scale: f64, skeleton: &SkeletonSpec) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for j in skeleton.annotated_ids() {
        let g = &gt.joints[j.index()];
        if !g.visible {
            continue;
        }
        n += 1;
        let p = &pred.joints[j.index()];
        if !p.visible {
            continue;
        }
        let k = skeleton.joint(j).oks_k;
        let d2 = (p.x - g.x).powi(2) + (p.y - g.y).powi(2);
        sum += (-d2 / (2.0 * scale * scale * k * k)).exp();
    }
    if n == 0 {
        return Err(Error::NoVisibleJoints);
    }
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApParams {
    pub oks_thresholds: Vec<f64>,
    /// Interpolation points on the recall axis.
    pub recall_points: usize,
    /// Predictions kept per image, highest score first.
    pub max_dets: usize,
    pub medium_area: (f64, f64),
    pub large_area: (f64, f64),
}

impl Default for ApParams {
    fn default() -> Self {
        Self {
            oks_thresholds: (0..10).map(|i| 0.5 + 0.05 * i as f64).collect(),
            recall_points: 101,
            max_dets: 20,
            medium_area: (32.0 * 32.0, 96.0 * 96.0),
            large_area: (96.0 * 96.0, f64::INFINITY),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdResult {
    pub oks: f64,
    pub ap: f64,
    pub recall: f64,
}

/// COCO-style keypoint summary. Entries are `-1` when no ground truth falls
/// in the corresponding area range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    #[serde(rename = "AP")]
    pub ap: f64,
    #[serde(rename = "AP50")]
    pub ap50: f64,
    #[serde(rename = "AP75")]
    pub ap75: f64,
    #[serde(rename = "APM")]
    pub ap_m: f64,
    #[serde(rename = "APL")]
    pub ap_l: f64,
    #[serde(rename = "AR")]
    pub ar: f64,
    pub per_threshold: Vec<ThresholdResult>,
}

struct ScoredMatch {
    score: f64,
    tp: bool,
}

/// Greedy score-ordered matching of one image at one OKS threshold.
/// Returns the non-ignored predictions and the non-ignored gt count.
fn match_image(
    img: &EvalImage,
    skeleton: &SkeletonSpec,
    threshold: f64,
    area_range: (f64, f64),
    max_dets: usize,
) -> (Vec<ScoredMatch>, usize) {
    let in_range = |a: f64| a >= area_range.0 && a <= area_range.1;
    let mut gt_order: Vec<usize> = (0..img.gts.len()).collect();
    let gt_ignore: Vec<bool> = img
        .gts
        .iter()
        .map(|g| !in_range(g.area(skeleton)) || g.pose.visible_count() == 0)
        .collect();
    gt_order.sort_by_key(|&i| gt_ignore[i]);
    let n_gt = gt_ignore.iter().filter(|&&ig| !ig).count();

    let mut pred_order: Vec<usize> = (0..img.preds.len()).collect();
    pred_order.sort_by(|&a, &b| img.preds[b].score.total_cmp(&img.preds[a].score));
    pred_order.truncate(max_dets);

    let mut gt_taken = vec![false; img.gts.len()];
    let mut out = Vec::new();
    for &pi in &pred_order {
        let pred = &img.preds[pi];
        let mut best: Option<usize> = None;
        let mut best_oks = threshold.min(1.0 - 1e-10);
        for &gi in &gt_order {
            if gt_taken[gi] {
                continue;
            }
            if let Some(b) = best {
                if !gt_ignore[b] && gt_ignore[gi] {
                    break;
                }
            }
            let g = &img.gts[gi];
            let Ok(o) = oks(pred, &g.pose, g.area(skeleton).max(f64::EPSILON).sqrt(), skeleton) else {
                continue;
            };
            if o < best_oks {
                continue;
            }
            best_oks = o;
            best = Some(gi);
        }
        match best {
            Some(gi) => {
                gt_taken[gi] = true;
                if !gt_ignore[gi] {
                    out.push(ScoredMatch {
                        score: pred.score,
                        tp: true,
                    });
                }
            }
            None => {
                if in_range(bbox_area(pred, skeleton)) {
                    out.push(ScoredMatch {
                        score: pred.score,
                        tp: false,
                    });
                }
            }
        }
    }
    (out, n_gt)
}

/// Interpolated AP and final recall from a score-sorted TP/FP list.
/// Returns `None` when there is no ground truth.
fn precision_recall(matches: &[ScoredMatch], n_gt: usize, recall_points: usize) -> Option<(f64, f64)> {
    if n_gt == 0 {
        return None;
    }
    let mut precision = Vec::with_capacity(matches.len());
    let mut recall = Vec::with_capacity(matches.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for m in matches {
        if m.tp {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let steps = (recall_points - 1).max(1) as f64;
    let mut sum = 0.0;
    for r in 0..recall_points {
        let thr = r as f64 / steps;
        let idx = recall.partition_point(|&v| v < thr);
        if idx < precision.len() {
            sum += precision[idx];
        }
    }
    Some((sum / recall_points as f64, recall.last().copied().unwrap_or(0.0)))
}

fn ap_at(
    images: &[EvalImage],
    skeleton: &SkeletonSpec,
    params: &ApParams,
    threshold: f64,
    area_range: (f64, f64),
) -> Option<(f64, f64)> {
    let mut all = Vec::new();
    let mut n_gt = 0;
    for img in images {
        let (m, g) = match_image(img, skeleton, threshold, area_range, params.max_dets);
        all.extend(m);
        n_gt += g;
    }
    all.sort_by(|a, b| b.score.total_cmp(&a.score));
    precision_recall(&all, n_gt, params.recall_points)
}

fn mean_defined(values: &[Option<f64>]) -> f64 {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        -1.0
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    }
}

/// AP/AR over the OKS thresholds in `params`, plus AP50, AP75 and the
/// medium/large area breakdown.
pub fn average_precision(images: &[EvalImage], skeleton: &SkeletonSpec, params: &ApParams) -> EvalReport {
    let all_range = (0.0, f64::INFINITY);
    let per: Vec<Option<(f64, f64)>> = params
        .oks_thresholds
        .iter()
        .map(|&t| ap_at(images, skeleton, params, t, all_range))
        .collect();
    let at = |t: f64| {
        ap_at(images, skeleton, params, t, all_range)
            .map(|r| r.0)
            .unwrap_or(-1.0)
    };
    let area_ap = |range| {
        let v: Vec<Option<f64>> = params
            .oks_thresholds
            .iter()
            .map(|&t| ap_at(images, skeleton, params, t, range).map(|r| r.0))
            .collect();
        mean_defined(&v)
    };
    EvalReport {
        ap: mean_defined(&per.iter().map(|r| r.map(|r| r.0)).collect::<Vec<_>>()),
        ap50: at(0.5),
        ap75: at(0.75),
        ap_m: area_ap(params.medium_area),
        ap_l: area_ap(params.large_area),
        ar: mean_defined(&per.iter().map(|r| r.map(|r| r.1)).collect::<Vec<_>>()),
        per_threshold: params
            .oks_thresholds
            .iter()
            .zip(&per)
            .map(|(&oks, r)| ThresholdResult {
                oks,
                ap: r.map(|r| r.0).unwrap_or(-1.0),
                recall: r.map(|r| r.1).unwrap_or(-1.0),
            })
            .collect(),
    }
}

/// Correctness radius `alpha * 0.6 * diagonal(head_box)`.
pub fn pckh_threshold(head_box: [f64; 4], alpha: f64) -> f64 {
    let diag = (head_box[2] - head_box[0]).hypot(head_box[3] - head_box[1]);
    alpha * 0.6 * diag
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointPckh {
    pub joint: String,
    pub correct: usize,
    pub total: usize,
    /// Percentage, or `-1` when the joint was never annotated.
    pub pckh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PckhReport {
    pub alpha: f64,
    pub per_joint: Vec<JointPckh>,
    /// Percentage over every annotated joint.
    pub total: f64,
}

fn mean_common_distance(a: &PersonPose, b: &PersonPose, skeleton: &SkeletonSpec) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for j in skeleton.annotated_ids() {
        let (p, q) = (&a.joints[j.index()], &b.joints[j.index()]);
        if p.visible && q.visible {
            s += p.distance_to(q);
            n += 1;
        }
    }
    (n > 0).then(|| s / n as f64)
}

/// Assigns predictions to ground truth by minimum mean joint distance.
/// Returns the prediction index matched to each ground-truth person.
pub fn assign_by_mean_distance(
    preds: &[PersonPose],
    gts: &[PersonPose],
    skeleton: &SkeletonSpec,
) -> Vec<Option<usize>> {
    const NO_OVERLAP: f64 = 1e12;
    if preds.is_empty() {
        return vec![None; gts.len()];
    }
    let cost: Vec<Vec<f64>> = gts
        .iter()
        .map(|g| {
            preds
                .iter()
                .map(|p| mean_common_distance(p, g, skeleton).unwrap_or(NO_OVERLAP))
                .collect()
        })
        .collect();
    let assignment = min_cost_assignment(&cost);
    assignment
        .into_iter()
        .enumerate()
        .map(|(g, p)| p.filter(|&p| cost[g][p] < NO_OVERLAP))
        .collect()
}

/// PCKh@alpha: a visible ground-truth joint is correct when its matched
/// prediction lies within `alpha * l`, `l` being 60% of the head box
/// diagonal.
pub fn pckh(images: &[EvalImage], skeleton: &SkeletonSpec, alpha: f64) -> Result<PckhReport> {
    let ids = skeleton.annotated_ids();
    let mut correct = vec![0usize; skeleton.len()];
    let mut total = vec![0usize; skeleton.len()];

    for img in images {
        let gt_poses: Vec<PersonPose> = img.gts.iter().map(|g| g.pose.clone()).collect();
        let assignment = assign_by_mean_distance(&img.preds, &gt_poses, skeleton);
        for (gi, (gt, matched)) in img.gts.iter().zip(assignment).enumerate() {
            let head = gt.head_box.ok_or(Error::MissingHeadBox { index: gi })?;
            let radius = pckh_threshold(head, alpha);
            for &j in &ids {
                let g = &gt.pose.joints[j.index()];
                if !g.visible {
                    continue;
                }
                total[j.index()] += 1;
                let hit = matched
                    .map(|p| &img.preds[p].joints[j.index()])
                    .is_some_and(|p| p.visible && p.distance_to(g) <= radius);
                if hit {
                    correct[j.index()] += 1;
                }
            }
        }
    }

    let pct = |c: usize, t: usize| if t == 0 { -1.0 } else { 100.0 * c as f64 / t as f64 };
    let per_joint = ids
        .iter()
        .map(|&j| JointPckh {
            joint: skeleton.joint(j).name.clone(),
            correct: correct[j.index()],
            total: total[j.index()],
            pckh: pct(correct[j.index()], total[j.index()]),
        })
        .collect();
    Ok(PckhReport {
        alpha,
        per_joint,
        total: pct(correct.iter().sum(), total.iter().sum()),
    })
}
