//! Cross-run agreement scoring and overlap resolution for motion masks.

use crate::error::{Error, Result};
use crate::grid::{Grid, Mask};

/// Confidence-scored binary masks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InstanceMaskSet {
    pub masks: Vec<Mask>,
    pub scores: Vec<f64>,
}

impl InstanceMaskSet {
    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn is_disjoint(&self) -> bool {
        for i in 0..self.masks.len() {
            for j in i + 1..self.masks.len() {
                if self.masks[i].intersection_count(&self.masks[j]) > 0 {
                    return false;
                }
            }
        }
        true
    }
}

/// Agreement score of each pooled mask with the masks of all `n_runs` runs.
///
/// `cᵢ = (1/n) Σ_{p∈Mᵢ} Σⱼ Mⱼ(p) / |Mᵢ|`, clamped to `[0, 1]`: the mean
/// number of runs covering a pixel of `Mᵢ`, as a fraction of all runs. The
/// mask's own run counts once.
pub fn ensemble_consistency(masks: &[Mask], n_runs: usize) -> Result<Vec<f64>> {
    if n_runs == 0 {
        return Err(Error::Parameter("run count must be ≥ 1".into()));
    }
    let Some(first) = masks.first() else {
        return Ok(Vec::new());
    };
    let (w, h) = first.size();
    let mut coverage: Grid<u32> = Grid::filled(w, h, 0);
    for (i, m) in masks.iter().enumerate() {
        if m.size() != (w, h) {
            return Err(Error::Shape(format!("mask {i} differs in size")));
        }
        for (c, &b) in coverage.as_mut_slice().iter_mut().zip(m.iter()) {
            *c += b as u32;
        }
    }
    masks
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let area = m.count();
            if area == 0 {
                return Err(Error::Parameter(format!("mask {i} is empty")));
            }
            let overlap: u64 = m
                .iter()
                .zip(coverage.iter())
                .filter(|(b, _)| **b)
                .map(|(_, &c)| c as u64)
                .sum();
            let c = overlap as f64 / (area as f64 * n_runs as f64);
            Ok(c.clamp(0.0, 1.0))
        })
        .collect()
}

/// Keeps masks with `score ≥ keep_thresh`, in order.
pub fn filter_by_consistency(
    masks: Vec<Mask>,
    scores: Vec<f64>,
    keep_thresh: f64,
) -> Result<InstanceMaskSet> {
    if masks.len() != scores.len() {
        return Err(Error::Shape(format!(
            "{} masks vs {} scores",
            masks.len(),
            scores.len()
        )));
    }
    let (masks, scores) = masks
        .into_iter()
        .zip(scores)
        .filter(|(_, s)| *s >= keep_thresh)
        .unzip();
    Ok(InstanceMaskSet { masks, scores })
}

/// Gaussian matrix-NMS decay: `scoreⱼ · min_{i ranked above j} exp(−IoUᵢⱼ²/sigma)`.
pub(crate) fn decayed_scores(masks: &[Mask], scores: &[f64], sigma: f64) -> Vec<f64> {
    let m = masks.len();
    // rank by score desc, ties by input order
    let mut rank: Vec<usize> = (0..m).collect();
    rank.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let areas: Vec<usize> = masks.iter().map(|mk| mk.count()).collect();
    let mut decayed = vec![0.0; m];
    for (pos, &j) in rank.iter().enumerate() {
        let mut factor = 1.0f64;
        for &i in &rank[..pos] {
            let inter = masks[i].intersection_count(&masks[j]);
            if inter == 0 {
                continue;
            }
            let iou = inter as f64 / (areas[i] + areas[j] - inter) as f64;
            factor = factor.min((-(iou * iou) / sigma).exp());
        }
        decayed[j] = scores[j] * factor;
    }
    decayed
}

/// Matrix non-maximum suppression with a Gaussian decay, followed by hard
/// disjointness.
///
/// Each mask's score is multiplied by `min exp(−IoU²/sigma)` over all
/// higher-ranked masks. Masks whose decayed score drops below `final_thresh`
/// are removed; pixels still claimed by several survivors go to the one with
/// the highest decayed score. Survivors keep their original relative order
/// and are reported with their decayed scores.
pub fn matrix_nms(
    masks: &[Mask],
    scores: &[f64],
    sigma: f64,
    final_thresh: f64,
) -> Result<InstanceMaskSet> {
    if masks.len() != scores.len() {
        return Err(Error::Shape(format!(
            "{} masks vs {} scores",
            masks.len(),
            scores.len()
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::Parameter(format!("nms sigma must be > 0, got {sigma}")));
    }
    let decayed = decayed_scores(masks, scores, sigma);
    let m = masks.len();

    let survivors: Vec<usize> = (0..m).filter(|&i| decayed[i] >= final_thresh).collect();
    let Some(&first) = survivors.first() else {
        return Ok(InstanceMaskSet::default());
    };
    let (w, h) = masks[first].size();
    // owner per pixel: survivor with highest decayed score, ties by order
    let mut owner: Grid<Option<usize>> = Grid::filled(w, h, None);
    for &s in &survivors {
        for (o, &b) in owner.as_mut_slice().iter_mut().zip(masks[s].iter()) {
            if b && o.is_none_or(|cur| decayed[s] > decayed[cur]) {
                *o = Some(s);
            }
        }
    }
    let mut out = InstanceMaskSet::default();
    for &s in &survivors {
        let mask = owner.map(|o| *o == Some(s));
        if mask.count() > 0 {
            out.masks.push(mask);
            out.scores.push(decayed[s]);
        }
    }
    Ok(out)
}
