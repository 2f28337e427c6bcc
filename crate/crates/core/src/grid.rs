/// A dense row-major 2D grid of `f32` samples, one per integer pixel center.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Grid {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Wraps a row-major buffer. Returns `None` if the length does not match.
    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Option<Self> {
        (data.len() == width * height).then_some(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f32) {
        self.data[y * self.width + x] = value;
    }

    /// Reads the pixel nearest to a continuous location, or `None` off-grid.
    pub fn sample_nearest(&self, x: f64, y: f64) -> Option<f32> {
        let (px, py) = (x.round(), y.round());
        if px < 0.0 || py < 0.0 || px >= self.width as f64 || py >= self.height as f64 {
            return None;
        }
        Some(self.get(px as usize, py as usize))
    }

    #[inline]
    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn map_inplace(&mut self, mut f: impl FnMut(f32) -> f32) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }
}

/// Integer pixel offsets `(dx, dy)` with `dx² + dy² <= radius²`, row-major.
pub(crate) fn disk_offsets(radius: f64) -> Vec<(i64, i64)> {
    let r = radius.floor() as i64;
    let r2 = radius * radius;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if ((dx * dx + dy * dy) as f64) <= r2 {
                out.push((dx, dy));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_nearest_rounds_and_rejects_off_grid() {
        let mut g = Grid::zeros(4, 3);
        g.set(2, 1, 5.0);
        assert_eq!(g.sample_nearest(2.4, 0.6), Some(5.0));
        assert_eq!(g.sample_nearest(-0.6, 0.0), None);
        assert_eq!(g.sample_nearest(3.6, 0.0), None);
    }

    #[test]
    fn disk_offsets_counts() {
        assert_eq!(disk_offsets(0.0), vec![(0, 0)]);
        assert_eq!(disk_offsets(1.0).len(), 5);
        // lattice points with x²+y² <= 49
        let brute = (-7i64..=7)
            .flat_map(|y| (-7i64..=7).map(move |x| (x, y)))
            .filter(|(x, y)| x * x + y * y <= 49)
            .count();
        assert_eq!(disk_offsets(7.0).len(), brute);
    }
}
