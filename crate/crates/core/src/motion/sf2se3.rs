//! Stochastic clustering of scene flow into a variable number of rigid
//! motions.
//!
//! Each run greedily extracts motions from the not-yet-explained valid
//! pixels: a proposal is fitted to a spatially local random sample, scored
//! by how many unexplained pixels it explains, and the best proposal is
//! refitted on its inliers. Pixels are finally assigned to the motion with
//! the smallest endpoint residual, which makes the masks disjoint. The motion
//! with the largest support is taken to be the background and is not
//! returned.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::se3::{fit_se3, RigidMotion};
use crate::error::{Error, Result};
use crate::geometry::{CameraRig, SceneFlowField};
use crate::grid::{Grid, Mask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sf2se3Params {
    /// Independent runs pooled by the ensemble.
    pub n_runs: usize,
    /// Upper bound on motions per run, background included.
    pub max_motions: usize,
    /// Endpoint residual (meters) below which a pixel supports a motion.
    pub inlier_thresh: f64,
    /// Proposals drawn per extracted motion.
    pub n_prop: usize,
    /// Correspondences per proposal fit.
    pub k_seed: usize,
    /// Half-size in pixels of the sampling window around a proposal centre.
    pub window_radius: usize,
    /// Smallest support (pixels) for a motion or a final mask component.
    pub min_area: usize,
    /// Runs on fewer valid pixels return nothing.
    pub min_valid: usize,
    /// Extraction stops once unexplained pixels fall below this fraction.
    pub stop_fraction: f64,
    /// Refit rounds on the inliers of the winning proposal.
    pub refit_rounds: usize,
    pub nms_sigma: f64,
    pub nms_final_thresh: f64,
    pub keep_thresh: f64,
}

impl Default for Sf2se3Params {
    fn default() -> Self {
        Self {
            n_runs: 5,
            max_motions: 8,
            inlier_thresh: 0.15,
            n_prop: 32,
            k_seed: 16,
            window_radius: 20,
            min_area: 64,
            min_valid: 64,
            stop_fraction: 0.05,
            refit_rounds: 2,
            nms_sigma: 0.5,
            nms_final_thresh: 0.3,
            keep_thresh: 0.8,
        }
    }
}

impl Sf2se3Params {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Parameter(format!("motion.{m}")));
        if self.n_runs == 0 {
            return fail("n_runs must be ≥ 1");
        }
        if self.max_motions == 0 {
            return fail("max_motions must be ≥ 1");
        }
        if !(self.inlier_thresh > 0.0 && self.inlier_thresh.is_finite()) {
            return fail("inlier_thresh must be > 0");
        }
        if self.n_prop == 0 {
            return fail("n_prop must be ≥ 1");
        }
        if self.k_seed < 3 {
            return fail("k_seed must be ≥ 3");
        }
        if self.window_radius == 0 {
            return fail("window_radius must be ≥ 1");
        }
        if !(0.0..1.0).contains(&self.stop_fraction) {
            return fail("stop_fraction must be in [0, 1)");
        }
        if !(self.nms_sigma > 0.0) {
            return fail("nms_sigma must be > 0");
        }
        if !(0.0..=1.0).contains(&self.nms_final_thresh) {
            return fail("nms_final_thresh must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.keep_thresh) {
            return fail("keep_thresh must be in [0, 1]");
        }
        Ok(())
    }
}

/// A rigid motion with the pixels it explains.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSegment {
    pub motion: RigidMotion,
    pub mask: Mask,
    pub inlier_count: usize,
    pub mean_residual: f64,
}

struct Correspondences {
    pixels: Vec<(usize, usize)>,
    src: Vec<[f64; 3]>,
    dst: Vec<[f64; 3]>,
    index: Grid<Option<usize>>,
}

impl Correspondences {
    fn new(sf: &SceneFlowField, rig: &CameraRig) -> Self {
        let (w, h) = sf.size();
        let mut index = Grid::filled(w, h, None);
        let mut pixels = Vec::new();
        let mut src = Vec::new();
        let mut dst = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if !*sf.valid.get(x, y) {
                    continue;
                }
                let p = rig.backproject_pixel(x as f64, y as f64, *sf.depth_t.get(x, y));
                let f = sf.flow3d.get(x, y);
                index.set(x, y, Some(pixels.len()));
                pixels.push((x, y));
                src.push(p);
                dst.push([p[0] + f[0], p[1] + f[1], p[2] + f[2]]);
            }
        }
        Self {
            pixels,
            src,
            dst,
            index,
        }
    }

    fn inliers(&self, motion: &RigidMotion, open: &[bool], thresh: f64) -> Vec<usize> {
        (0..self.src.len())
            .filter(|&i| open[i] && motion.residual(self.src[i], self.dst[i]) < thresh)
            .collect()
    }

    fn fit(&self, ids: &[usize]) -> Result<RigidMotion> {
        let src: Vec<_> = ids.iter().map(|&i| self.src[i]).collect();
        let dst: Vec<_> = ids.iter().map(|&i| self.dst[i]).collect();
        fit_se3(&src, &dst, None)
    }

    /// Unexplained pixels inside the square window around pixel `centre`.
    fn window(&self, centre: usize, radius: usize, open: &[bool]) -> Vec<usize> {
        let (cx, cy) = self.pixels[centre];
        let (w, h) = self.index.size();
        let mut out = Vec::new();
        for y in cy.saturating_sub(radius)..=(cy + radius).min(h - 1) {
            for x in cx.saturating_sub(radius)..=(cx + radius).min(w - 1) {
                if let Some(i) = *self.index.get(x, y) {
                    if open[i] {
                        out.push(i);
                    }
                }
            }
        }
        out
    }
}

/// One stochastic clustering run. Returns the non-background segments.
pub fn sf2se3_run(
    sf: &SceneFlowField,
    rig: &CameraRig,
    params: &Sf2se3Params,
    seed: u64,
) -> Result<Vec<MotionSegment>> {
    params.validate()?;
    rig.validate()?;
    let corr = Correspondences::new(sf, rig);
    let n = corr.pixels.len();
    if n < params.min_valid.max(3) {
        return Ok(Vec::new());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut open = vec![true; n];
    let mut open_count = n;
    let mut motions: Vec<RigidMotion> = Vec::new();

    while motions.len() < params.max_motions
        && (open_count as f64) >= params.stop_fraction * n as f64
        && open_count >= 3
    {
        let open_ids: Vec<usize> = (0..n).filter(|&i| open[i]).collect();
        let mut best: Option<(RigidMotion, Vec<usize>)> = None;
        for _ in 0..params.n_prop {
            let centre = open_ids[rng.gen_range(0..open_ids.len())];
            let candidates = corr.window(centre, params.window_radius, &open);
            if candidates.len() < 3 {
                continue;
            }
            let k = params.k_seed.min(candidates.len());
            let picked: Vec<usize> = sample(&mut rng, candidates.len(), k)
                .into_iter()
                .map(|j| candidates[j])
                .collect();
            let Ok(motion) = corr.fit(&picked) else {
                continue;
            };
            let inliers = corr.inliers(&motion, &open, params.inlier_thresh);
            if best.as_ref().is_none_or(|(_, b)| inliers.len() > b.len()) {
                best = Some((motion, inliers));
            }
        }
        let Some((mut motion, mut inliers)) = best else {
            break;
        };
        if inliers.len() < params.min_area.max(3) {
            break;
        }
        for _ in 0..params.refit_rounds {
            let Ok(refit) = corr.fit(&inliers) else {
                break;
            };
            let refit_inliers = corr.inliers(&refit, &open, params.inlier_thresh);
            if refit_inliers.len() < inliers.len() {
                break;
            }
            motion = refit;
            inliers = refit_inliers;
        }
        for &i in &inliers {
            open[i] = false;
        }
        open_count -= inliers.len();
        motions.push(motion);
    }

    if motions.is_empty() {
        return Ok(Vec::new());
    }

    // final disjoint assignment by minimum residual
    let (w, h) = sf.size();
    let mut masks = vec![Grid::filled(w, h, false); motions.len()];
    let mut counts = vec![0usize; motions.len()];
    let mut residual_sums = vec![0.0f64; motions.len()];
    for i in 0..n {
        let mut best: Option<(usize, f64)> = None;
        for (m, motion) in motions.iter().enumerate() {
            let r = motion.residual(corr.src[i], corr.dst[i]);
            if r < params.inlier_thresh && best.is_none_or(|(_, br)| r < br) {
                best = Some((m, r));
            }
        }
        if let Some((m, r)) = best {
            let (x, y) = corr.pixels[i];
            masks[m].set(x, y, true);
            counts[m] += 1;
            residual_sums[m] += r;
        }
    }

    let background = (0..motions.len())
        .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
        .expect("at least one motion");

    Ok(motions
        .into_iter()
        .zip(masks)
        .enumerate()
        .filter(|&(m, _)| m != background && counts[m] > 0)
        .map(|(m, (motion, mask))| MotionSegment {
            motion,
            mask,
            inlier_count: counts[m],
            mean_residual: residual_sums[m] / counts[m] as f64,
        })
        .collect())
}
