//! Class-agnostic mask average precision with 101-point interpolation.

use serde::Serialize;

use crate::grid::Mask;

/// Predictions and ground truth of one image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ApImage {
    pub preds: Vec<Mask>,
    pub scores: Vec<f64>,
    pub gts: Vec<Mask>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AreaRange {
    All,
    Small,
    Medium,
    Large,
}

impl AreaRange {
    fn contains(self, area: usize) -> bool {
        match self {
            AreaRange::All => true,
            AreaRange::Small => area < 32 * 32,
            AreaRange::Medium => (32 * 32..96 * 96).contains(&area),
            AreaRange::Large => area >= 96 * 96,
        }
    }
}

/// `None` where no ground truth falls in the range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ApReport {
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap_s: Option<f64>,
    pub ap_m: Option<f64>,
    pub ap_l: Option<f64>,
}

pub const IOU_THRESHOLDS: [f64; 10] = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95];

/// AP at one IoU threshold, restricted to ground truth in `range`.
///
/// Predictions are ranked by score (ties by image, then index). Each claims
/// the unmatched ground truth it overlaps best with IoU ≥ `thresh`,
/// preferring in-range ground truth. Matches to out-of-range ground truth,
/// and unmatched predictions whose own area is out of range, are left out of
/// the precision-recall curve.
pub fn average_precision(images: &[ApImage], thresh: f64, range: AreaRange) -> Option<f64> {
    let mut ranked: Vec<(f64, usize, usize)> = Vec::new();
    let mut n_pos = 0usize;
    for (i, im) in images.iter().enumerate() {
        ranked.extend(im.scores.iter().enumerate().map(|(j, &s)| (s, i, j)));
        n_pos += im.gts.iter().filter(|g| range.contains(g.count())).count();
    }
    if n_pos == 0 {
        return None;
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut taken: Vec<Vec<bool>> = images.iter().map(|im| vec![false; im.gts.len()]).collect();
    let mut hits: Vec<bool> = Vec::new();
    for &(_, i, j) in &ranked {
        let im = &images[i];
        let pred = &im.preds[j];
        let mut best: Option<(bool, f64, usize)> = None;
        for (g, gt) in im.gts.iter().enumerate() {
            if taken[i][g] {
                continue;
            }
            let iou = pred.iou(gt);
            if iou < thresh {
                continue;
            }
            let in_range = range.contains(gt.count());
            let better = match best {
                None => true,
                Some((b_in, b_iou, _)) => (in_range, iou) > (b_in, b_iou),
            };
            if better {
                best = Some((in_range, iou, g));
            }
        }
        match best {
            Some((in_range, _, g)) => {
                taken[i][g] = true;
                if in_range {
                    hits.push(true);
                }
            }
            None => {
                if range.contains(pred.count()) {
                    hits.push(false);
                }
            }
        }
    }

    let mut precision = Vec::with_capacity(hits.len());
    let mut recall = Vec::with_capacity(hits.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for h in hits {
        if h {
            tp += 1;
        } else {
            fp += 1;
        }
        precision.push(tp as f64 / (tp + fp) as f64);
        recall.push(tp as f64 / n_pos as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let total: f64 = (0..=100)
        .map(|r| {
            let r = r as f64 / 100.0;
            recall
                .iter()
                .position(|&x| x >= r)
                .map_or(0.0, |k| precision[k])
        })
        .sum();
    Some(total / 101.0)
}

fn mean_over_thresholds(images: &[ApImage], range: AreaRange) -> Option<f64> {
    let v: Vec<f64> = IOU_THRESHOLDS
        .iter()
        .filter_map(|&t| average_precision(images, t, range))
        .collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn mask_ap(images: &[ApImage]) -> ApReport {
    ApReport {
        ap: mean_over_thresholds(images, AreaRange::All),
        ap50: average_precision(images, 0.5, AreaRange::All),
        ap_s: mean_over_thresholds(images, AreaRange::Small),
        ap_m: mean_over_thresholds(images, AreaRange::Medium),
        ap_l: mean_over_thresholds(images, AreaRange::Large),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn rect(x0: usize, y0: usize, x1: usize, y1: usize) -> Mask {
        Grid::from_fn(40, 40, |x, y| x >= x0 && x < x1 && y >= y0 && y < y1)
    }

    #[test]
    fn perfect_predictions() {
        let gts = vec![rect(0, 0, 10, 10), rect(20, 20, 30, 35)];
        let im = ApImage {
            preds: gts.clone(),
            scores: vec![0.1, 0.7],
            gts,
        };
        let r = mask_ap(&[im]);
        assert_eq!(r.ap, Some(1.0));
        assert_eq!(r.ap50, Some(1.0));
        assert_eq!(r.ap_s, Some(1.0));
        assert_eq!(r.ap_m, None);
    }

    #[test]
    fn no_predictions_is_zero() {
        let im = ApImage {
            gts: vec![rect(0, 0, 5, 5)],
            ..Default::default()
        };
        assert_eq!(mask_ap(&[im]).ap, Some(0.0));
        assert_eq!(mask_ap(&[]).ap, None);
    }

    #[test]
    fn three_preds_two_gts() {
        // ranked: hit, miss, hit → P/R points (1, .5), (.5, .5), (2/3, 1)
        let g1 = rect(0, 0, 10, 10);
        let g2 = rect(20, 20, 30, 30);
        let im = ApImage {
            preds: vec![g1.clone(), rect(32, 0, 40, 8), g2.clone()],
            scores: vec![0.9, 0.8, 0.7],
            gts: vec![g1, g2],
        };
        let ap = average_precision(&[im], 0.5, AreaRange::All).unwrap();
        // recall ≤ 0.5: precision 1 (51 points); above: 2/3 (50 points)
        let expected = (51.0 + 50.0 * 2.0 / 3.0) / 101.0;
        assert!((ap - expected).abs() < 1e-12);
    }
}
