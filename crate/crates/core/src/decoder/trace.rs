use thiserror::Error;

use crate::encoder::DispField;

use super::Detection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum NoMatch {
    /// The field is zero at the detection, i.e. it points at itself.
    #[error("no displacement stored at the detection")]
    ZeroDisplacement,
    #[error("displacement endpoint falls off the grid")]
    OffGrid,
    #[error("no target peak within the match radius")]
    NoPeakInRadius,
}

/// `det + Z * field(det)`.
pub fn endpoint(det: &Detection, field: &DispField, z: f64) -> (f64, f64) {
    let (dx, dy) = field.get(det.x, det.y);
    (det.x as f64 + z * dx as f64, det.y as f64 + z * dy as f64)
}

/// Follows the displacement stored at `det` and returns the index of the
/// nearest `targets` peak within `match_radius` of the endpoint. Ties go to
/// the earlier target.
pub fn trace_joint(
    det: &Detection,
    field: &DispField,
    z: f64,
    targets: &[Detection],
    match_radius: f64,
) -> Result<usize, NoMatch> {
    let (dx, dy) = field.get(det.x, det.y);
    if dx == 0.0 && dy == 0.0 {
        return Err(NoMatch::ZeroDisplacement);
    }
    let (ex, ey) = endpoint(det, field, z);
    let (w, h) = field.dims();
    if ex < -0.5 || ey < -0.5 || ex >= w as f64 - 0.5 || ey >= h as f64 - 0.5 {
        return Err(NoMatch::OffGrid);
    }
    targets
        .iter()
        .enumerate()
        .map(|(i, t)| (i, (t.x as f64 - ex).hypot(t.y as f64 - ey)))
        .filter(|&(_, d)| d <= match_radius)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .ok_or(NoMatch::NoPeakInRadius)
}
