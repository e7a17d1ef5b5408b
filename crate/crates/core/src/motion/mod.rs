//! Moving-object masks from scene flow: rigid-motion clustering, run
//! ensembling, suppression, and component isolation.

mod components;
mod ensemble;
mod se3;
mod sf2se3;

use rayon::prelude::*;

pub use components::{split_connected_components, Connectivity};
pub use ensemble::{ensemble_consistency, filter_by_consistency, matrix_nms, InstanceMaskSet};
pub use se3::{fit_se3, se3_residuals, RigidMotion};
pub use sf2se3::{sf2se3_run, MotionSegment, Sf2se3Params};

use crate::error::Result;
use crate::geometry::{CameraRig, SceneFlowField};

/// High-precision moving-object masks for one frame.
///
/// Runs the clustering `n_runs` times with seeds `base_seed..base_seed+n_runs`,
/// pools all object masks, keeps those found consistently across runs,
/// suppresses duplicates, and splits the survivors into connected
/// components of at least `params.min_area` pixels.
pub fn instance_pseudo_masks(
    sf: &SceneFlowField,
    rig: &CameraRig,
    params: &Sf2se3Params,
    n_runs: usize,
    base_seed: u64,
) -> Result<InstanceMaskSet> {
    params.validate()?;
    if n_runs == 0 {
        return Err(crate::Error::Parameter("n_runs must be ≥ 1".into()));
    }
    let runs: Vec<Vec<MotionSegment>> = (0..n_runs as u64)
        .into_par_iter()
        .map(|i| sf2se3_run(sf, rig, params, base_seed.wrapping_add(i)))
        .collect::<Result<_>>()?;
    let pooled: Vec<_> = runs.into_iter().flatten().map(|s| s.mask).collect();
    if pooled.is_empty() {
        return Ok(InstanceMaskSet::default());
    }

    let scores = ensemble_consistency(&pooled, n_runs)?;
    let kept = filter_by_consistency(pooled, scores, params.keep_thresh)?;
    let suppressed = matrix_nms(
        &kept.masks,
        &kept.scores,
        params.nms_sigma,
        params.nms_final_thresh,
    )?;

    let mut out = InstanceMaskSet::default();
    for (mask, score) in suppressed.masks.iter().zip(&suppressed.scores) {
        for part in split_connected_components(mask, Connectivity::Eight, params.min_area) {
            out.masks.push(part);
            out.scores.push(*score);
        }
    }
    Ok(out)
}
