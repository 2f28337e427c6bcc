use crate::skeleton::JointId;

use super::{DecoderConfig, Detection};

#[derive(Debug, Clone, PartialEq)]
pub struct PersonCluster {
    pub person_id: usize,
    /// Indices into the detection slice passed to [`cluster_rjg`].
    pub members: Vec<usize>,
    tag_sum: f64,
}

impl PersonCluster {
    pub fn mean_tag(&self) -> f64 {
        self.tag_sum / self.members.len() as f64
    }
}

/// Greedy tag clustering of root-group detections.
///
/// Joint types are visited in `order`; within a type, detections go by
/// descending confidence (ties in row-major order). A detection joins the
/// cluster with the nearest mean tag when the gap is below
/// `tag_cluster_threshold` and the cluster has no detection of that type
/// yet; otherwise it opens a new cluster while fewer than `max_persons`
/// exist. Assigned detections get their cluster's `person_id`; detections
/// without a tag, or of a type not in `order`, are left untouched.
pub fn cluster_rjg(
    detections: &mut [Detection],
    order: &[JointId],
    cfg: &DecoderConfig,
) -> Vec<PersonCluster> {
    let mut clusters: Vec<PersonCluster> = Vec::new();
    let mut cluster_types: Vec<Vec<JointId>> = Vec::new();

    for &joint in order {
        let mut idx: Vec<usize> = (0..detections.len())
            .filter(|&i| detections[i].joint == joint && detections[i].tag.is_some())
            .collect();
        idx.sort_by(|&a, &b| {
            let (da, db) = (&detections[a], &detections[b]);
            db.confidence
                .total_cmp(&da.confidence)
                .then((da.y, da.x).cmp(&(db.y, db.x)))
        });

        for i in idx {
            let tag = detections[i].tag.expect("filtered") as f64;
            let best = clusters
                .iter()
                .enumerate()
                .filter(|(c, _)| !cluster_types[*c].contains(&joint))
                .map(|(c, cl)| (c, (cl.mean_tag() - tag).abs()))
                .filter(|&(_, gap)| gap < cfg.tag_cluster_threshold)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            let c = match best {
                Some((c, _)) => c,
                None if clusters.len() < cfg.max_persons => {
                    clusters.push(PersonCluster {
                        person_id: clusters.len(),
                        members: Vec::new(),
                        tag_sum: 0.0,
                    });
                    cluster_types.push(Vec::new());
                    clusters.len() - 1
                }
                None => continue,
            };
            clusters[c].members.push(i);
            clusters[c].tag_sum += tag;
            cluster_types[c].push(joint);
            detections[i].person_id = Some(clusters[c].person_id);
        }
    }
    clusters
}
