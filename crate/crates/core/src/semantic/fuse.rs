//! Depth-guided blending of low- and high-resolution predictions.

use super::SoftSemantics;
use crate::error::{Error, Result};
use crate::geometry::DepthMap;
use crate::grid::Grid;

/// Blend weight used where depth is invalid.
pub const ALPHA_DEFAULT: f64 = 0.5;

/// `α = 1/(D+1)` per pixel; invalid pixels get [`ALPHA_DEFAULT`].
pub fn depth_weight(depth: &DepthMap) -> Result<Grid<f64>> {
    let mut out = Grid::filled(depth.depth.width(), depth.depth.height(), ALPHA_DEFAULT);
    for ((a, &d), &ok) in out
        .as_mut_slice()
        .iter_mut()
        .zip(depth.depth.iter())
        .zip(depth.valid.iter())
    {
        if !ok {
            continue;
        }
        if !(d >= 0.0) {
            return Err(Error::Domain(format!("negative depth {d}")));
        }
        *a = 1.0 / (d + 1.0);
    }
    Ok(out)
}

/// `α ⊙ p_low + (1 − α) ⊙ p_high`, channel by channel.
///
/// `p_low` is bilinearly resized to the size of `p_high` first.
pub fn depth_guided_fuse(
    p_low: &SoftSemantics,
    p_high: &SoftSemantics,
    depth: &DepthMap,
) -> Result<SoftSemantics> {
    if p_low.k() != p_high.k() {
        return Err(Error::Shape(format!(
            "low-resolution prediction has {} classes, high-resolution {}",
            p_low.k(),
            p_high.k()
        )));
    }
    let (w, h) = p_high.size();
    if depth.depth.size() != (w, h) || depth.valid.size() != (w, h) {
        return Err(Error::Shape(format!(
            "depth is {:?}, predictions {w}×{h}",
            depth.depth.size()
        )));
    }
    let low = p_low.resize(w, h);
    let alpha = depth_weight(depth)?;
    let n = w * h;
    let mut out = low.clone();
    let a = alpha.as_slice();
    for (i, v) in out.as_mut_slice().iter_mut().enumerate() {
        let al = a[i % n];
        *v = al * *v + (1.0 - al) * p_high.as_slice()[i];
    }
    Ok(out)
}
