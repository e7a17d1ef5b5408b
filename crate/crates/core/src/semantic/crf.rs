//! Fully connected CRF refinement by mean-field inference.
//!
//! Message passing is exact: every pixel pair contributes, so the cost per
//! iteration grows with the square of the pixel count. Large inputs are
//! downsampled so their longer side is at most `max_side` before inference.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SoftSemantics;
use crate::error::{Error, Result};
use crate::grid::{resize_plane, Grid};

const EPS: f64 = 1e-10;
const NEGLIGIBLE: f64 = 1e-18;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrfParams {
    pub w_bilateral: f64,
    pub w_spatial: f64,
    /// Position width of the appearance kernel, in pixels.
    pub sigma_xy_bi: f64,
    /// Colour width of the appearance kernel, in intensity levels.
    pub sigma_rgb: f64,
    /// Position width of the smoothness kernel, in pixels.
    pub sigma_xy_sp: f64,
    pub iterations: usize,
    /// Longer side of the grid inference runs on.
    pub max_side: usize,
}

impl Default for CrfParams {
    fn default() -> Self {
        Self {
            w_bilateral: 10.0,
            w_spatial: 3.0,
            sigma_xy_bi: 49.0,
            sigma_rgb: 5.0,
            sigma_xy_sp: 3.0,
            iterations: 5,
            max_side: 160,
        }
    }
}

impl CrfParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_bilateral >= 0.0 && self.w_spatial >= 0.0)
            || !self.w_bilateral.is_finite()
            || !self.w_spatial.is_finite()
        {
            return Err(Error::Parameter("CRF weights must be finite and ≥ 0".into()));
        }
        for (name, s) in [
            ("sigma_xy_bi", self.sigma_xy_bi),
            ("sigma_rgb", self.sigma_rgb),
            ("sigma_xy_sp", self.sigma_xy_sp),
        ] {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Parameter(format!("CRF {name} must be > 0, got {s}")));
            }
        }
        if self.max_side == 0 {
            return Err(Error::Parameter("CRF max_side must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Refines `probs` against the colour image. Zero iterations return the
/// input unchanged.
pub fn crf_refine(image: &Grid<[u8; 3]>, probs: &SoftSemantics, params: &CrfParams) -> Result<SoftSemantics> {
    crf_refine_traced(image, probs, params).map(|(q, _)| q)
}

/// Like [`crf_refine`], also returning the largest per-pixel normalization
/// error observed after each iteration.
pub fn crf_refine_traced(
    image: &Grid<[u8; 3]>,
    probs: &SoftSemantics,
    params: &CrfParams,
) -> Result<(SoftSemantics, Vec<f64>)> {
    params.validate()?;
    if image.size() != probs.size() {
        return Err(Error::Shape(format!(
            "image is {:?}, probabilities {:?}",
            image.size(),
            probs.size()
        )));
    }
    if params.iterations == 0 {
        return Ok((probs.clone(), Vec::new()));
    }
    let (w, h) = probs.size();
    let (sw, sh) = inference_size(w, h, params.max_side);
    let small_probs = probs.resize(sw, sh);
    let small_image = resize_image(image, sw, sh);
    let step_x = w as f64 / sw as f64;
    let step_y = h as f64 / sh as f64;

    let (q, trace) = mean_field(&small_image, &small_probs, params, step_x, step_y);
    Ok((q.resize(w, h), trace))
}

fn inference_size(w: usize, h: usize, max_side: usize) -> (usize, usize) {
    let side = w.max(h);
    if side <= max_side {
        return (w, h);
    }
    let s = max_side as f64 / side as f64;
    (
        ((w as f64 * s).round() as usize).max(1),
        ((h as f64 * s).round() as usize).max(1),
    )
}

fn resize_image(image: &Grid<[u8; 3]>, w: usize, h: usize) -> Grid<[u8; 3]> {
    if image.size() == (w, h) {
        return image.clone();
    }
    let (iw, ih) = image.size();
    let planes: Vec<Vec<f64>> = (0..3)
        .map(|c| {
            let src: Vec<f64> = image.iter().map(|p| p[c] as f64).collect();
            resize_plane(&src, iw, ih, w, h)
        })
        .collect();
    Grid::from_fn(w, h, |x, y| {
        let i = y * w + x;
        [0, 1, 2].map(|c| planes[c][i].round().clamp(0.0, 255.0) as u8)
    })
}

fn gaussian_table(len: usize, step: f64, sigma: f64) -> Vec<f64> {
    (0..len)
        .map(|d| {
            let t = d as f64 * step / sigma;
            (-0.5 * t * t).exp()
        })
        .collect()
}

fn mean_field(
    image: &Grid<[u8; 3]>,
    probs: &SoftSemantics,
    params: &CrfParams,
    step_x: f64,
    step_y: f64,
) -> (SoftSemantics, Vec<f64>) {
    let (w, h) = probs.size();
    let n = w * h;
    let k = probs.k();

    // pixel-major unary log-probabilities
    let mut neg_unary = vec![0.0; n * k];
    for c in 0..k {
        for (i, &p) in probs.channel(c).iter().enumerate() {
            neg_unary[i * k + c] = (p + EPS).ln();
        }
    }

    let bx = gaussian_table(w, step_x, params.sigma_xy_bi);
    let by = gaussian_table(h, step_y, params.sigma_xy_bi);
    let sx = gaussian_table(w, step_x, params.sigma_xy_sp);
    let sy = gaussian_table(h, step_y, params.sigma_xy_sp);
    let colour: Vec<f64> = (0..=3 * 255 * 255)
        .map(|d| (-(d as f64) / (2.0 * params.sigma_rgb * params.sigma_rgb)).exp())
        .collect();
    let rgb: Vec<[i32; 3]> = image.iter().map(|p| p.map(|v| v as i32)).collect();

    let mut q = vec![0.0; n * k];
    softmax_rows(&neg_unary, &mut q, k);
    let mut trace = Vec::with_capacity(params.iterations);
    let mut next = vec![0.0; n * k];

    for _ in 0..params.iterations {
        next.par_chunks_mut(k).enumerate().for_each(|(i, out)| {
            let (xi, yi) = (i % w, i / w);
            let ci = rgb[i];
            out.copy_from_slice(&neg_unary[i * k..(i + 1) * k]);
            for yj in 0..h {
                let dy = yi.abs_diff(yj);
                let row_bi = params.w_bilateral * by[dy];
                let row_sp = params.w_spatial * sy[dy];
                for xj in 0..w {
                    let j = yj * w + xj;
                    if j == i {
                        continue;
                    }
                    let dx = xi.abs_diff(xj);
                    let cj = rgb[j];
                    let dc = ((ci[0] - cj[0]).pow(2) + (ci[1] - cj[1]).pow(2) + (ci[2] - cj[2]).pow(2)) as usize;
                    let weight = row_bi * bx[dx] * colour[dc] + row_sp * sx[dx];
                    // below the rounding of any message that includes a direct neighbour
                    if weight < NEGLIGIBLE {
                        continue;
                    }
                    for (o, qj) in out.iter_mut().zip(&q[j * k..(j + 1) * k]) {
                        *o += weight * qj;
                    }
                }
            }
        });
        softmax_rows(&next, &mut q, k);
        let err = q
            .chunks(k)
            .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max);
        trace.push(err);
    }

    let mut planar = vec![0.0; n * k];
    for i in 0..n {
        for c in 0..k {
            planar[c * n + i] = q[i * k + c];
        }
    }
    let out = SoftSemantics::from_scores(k, w, h, planar).expect("softmax output is valid");
    (out, trace)
}

fn softmax_rows(logits: &[f64], out: &mut [f64], k: usize) {
    for (src, dst) in logits.chunks(k).zip(out.chunks_mut(k)) {
        let max = src.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (d, s) in dst.iter_mut().zip(src) {
            *d = (s - max).exp();
            sum += *d;
        }
        for d in dst.iter_mut() {
            *d /= sum;
        }
    }
}
