use serde::{Deserialize, Serialize};

use super::SkeletonSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub visible: bool,
    pub confidence: f64,
}

impl Keypoint {
    pub const HIDDEN: Keypoint = Keypoint {
        x: 0.0,
        y: 0.0,
        visible: false,
        confidence: 0.0,
    };

    pub fn visible(x: f64, y: f64) -> Self {
        Self {
            x,
            y,
            visible: true,
            confidence: 1.0,
        }
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = confidence;
        self
    }

    pub fn distance_to(&self, other: &Keypoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// One person: a keypoint for every joint id of the skeleton (the center
/// pseudo-joint included), an identity and an instance score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonPose {
    pub joints: Vec<Keypoint>,
    pub person_id: usize,
    pub score: f64,
}

impl PersonPose {
    pub fn empty(skeleton: &SkeletonSpec) -> Self {
        Self {
            joints: vec![Keypoint::HIDDEN; skeleton.len()],
            person_id: 0,
            score: 0.0,
        }
    }

    pub fn visible_count(&self) -> usize {
        self.joints.iter().filter(|k| k.visible).count()
    }

    /// Sets the score to the mean confidence of visible annotated joints.
    pub fn update_score(&mut self, skeleton: &SkeletonSpec) {
        let center = skeleton.center_id().index();
        let (sum, n) = self
            .joints
            .iter()
            .enumerate()
            .filter(|(i, k)| *i != center && k.visible)
            .fold((0.0, 0usize), |(s, n), (_, k)| (s + k.confidence, n + 1));
        self.score = if n == 0 { 0.0 } else { sum / n as f64 };
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        let mut out = self.clone();
        for k in &mut out.joints {
            k.x += dx;
            k.y += dy;
        }
        out
    }

    /// Axis-aligned bounds `(x0, y0, x1, y1)` of the visible annotated joints.
    pub fn visible_bounds(&self, skeleton: &SkeletonSpec) -> Option<(f64, f64, f64, f64)> {
        let center = skeleton.center_id().index();
        self.joints
            .iter()
            .enumerate()
            .filter(|(i, k)| *i != center && k.visible)
            .fold(None, |acc, (_, k)| match acc {
                None => Some((k.x, k.y, k.x, k.y)),
                Some((x0, y0, x1, y1)) => Some((x0.min(k.x), y0.min(k.y), x1.max(k.x), y1.max(k.y))),
            })
    }
}
