//! Skeleton overlays written as binary PPM (P6).

use std::io::Write;

use crate::encoder::FieldStack;
use crate::skeleton::{JointId, PersonPose, SkeletonSpec};

const PALETTE: [[u8; 3]; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
];

const TORSO_LINKS: [(&str, &str); 4] = [
    ("left_shoulder", "right_shoulder"),
    ("left_hip", "right_hip"),
    ("left_shoulder", "left_hip"),
    ("right_shoulder", "right_hip"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Canvas {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl Canvas {
    pub fn new(width: usize, height: usize, background: [u8; 3]) -> Self {
        Self {
            width,
            height,
            pixels: vec![background; width * height],
        }
    }

    /// Grayscale background from the per-pixel maximum over all confidence
    /// maps.
    pub fn from_heatmap(stack: &FieldStack) -> Self {
        let mut c = Self::new(stack.width(), stack.height(), [0; 3]);
        for g in stack.conf.values() {
            for (px, &v) in c.pixels.iter_mut().zip(g.as_slice()) {
                let l = (v.clamp(0.0, 1.0) * 160.0) as u8;
                if l > px[0] {
                    *px = [l; 3];
                }
            }
        }
        c
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn put(&mut self, x: i64, y: i64, color: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.pixels[y as usize * self.width + x as usize] = color;
        }
    }

    /// Bresenham line, endpoints inclusive.
    pub fn line(&mut self, from: (i64, i64), to: (i64, i64), color: [u8; 3]) {
        let (mut x, mut y) = from;
        let dx = (to.0 - x).abs();
        let dy = -(to.1 - y).abs();
        let sx = if x < to.0 { 1 } else { -1 };
        let sy = if y < to.1 { 1 } else { -1 };
        let mut err = dx + dy;
        loop {
            self.put(x, y, color);
            if (x, y) == to {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    pub fn dot(&mut self, at: (i64, i64), radius: i64, color: [u8; 3]) {
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                self.put(at.0 + dx, at.1 + dy, color);
            }
        }
    }

    pub fn write_ppm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "P6\n{} {}\n255\n", self.width, self.height)?;
        let flat: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        out.write_all(&flat)
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.pixels.len() * 3 + 20);
        self.write_ppm(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }
}

/// Hierarchy edges plus torso links between root joints, when the skeleton
/// names them.
pub fn limb_edges(skeleton: &SkeletonSpec) -> Vec<(JointId, JointId)> {
    let mut edges = skeleton.hierarchy_edges().to_vec();
    for (a, b) in TORSO_LINKS {
        if let (Some(a), Some(b)) = (skeleton.id_by_name(a), skeleton.id_by_name(b)) {
            edges.push((a, b));
        }
    }
    edges
}

/// Draws every pose in its own color: limbs as lines, joints as 3x3 dots.
pub fn draw_poses(canvas: &mut Canvas, poses: &[PersonPose], skeleton: &SkeletonSpec) {
    let edges = limb_edges(skeleton);
    let px = |k: &crate::skeleton::Keypoint| (k.x.round() as i64, k.y.round() as i64);
    for (n, pose) in poses.iter().enumerate() {
        let color = PALETTE[n % PALETTE.len()];
        for &(a, b) in &edges {
            let (ka, kb) = (&pose.joints[a.index()], &pose.joints[b.index()]);
            if ka.visible && kb.visible {
                canvas.line(px(ka), px(kb), color);
            }
        }
        for j in skeleton.annotated_ids() {
            let k = &pose.joints[j.index()];
            if k.visible {
                canvas.dot(px(k), 1, [255; 3]);
            }
        }
    }
}
