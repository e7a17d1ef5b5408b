//! Panoptic, segmentation, and recognition quality.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{PanopticLabel, IGNORE};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassPq {
    pub class: usize,
    pub is_thing: bool,
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PqReport {
    /// Classes with at least one segment in prediction or ground truth.
    pub per_class: Vec<ClassPq>,
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
    pub pq_thing: f64,
    pub pq_stuff: f64,
    pub classes_counted: usize,
}

/// Segment identity: `(class, instance)`, instance 0 for stuff.
type Segment = (u8, u16);

fn segment(sem: u8, inst: u16, thing: &[bool]) -> Result<Option<Segment>> {
    if sem == IGNORE {
        return Ok(None);
    }
    let Some(&is_thing) = thing.get(sem as usize) else {
        return Err(Error::Domain(format!("class {sem} has no thing/stuff flag")));
    };
    Ok(match (is_thing, inst) {
        // a thing pixel without an instance is unlabeled
        (true, 0) => None,
        (true, i) => Some((sem, i)),
        (false, _) => Some((sem, 0)),
    })
}

/// Per-image segment statistics, additive across images.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PqAccumulator {
    iou_sum: Vec<f64>,
    tp: Vec<usize>,
    fp: Vec<usize>,
    fn_: Vec<usize>,
}

impl PqAccumulator {
    pub fn new(n_classes: usize) -> Self {
        Self {
            iou_sum: vec![0.0; n_classes],
            tp: vec![0; n_classes],
            fp: vec![0; n_classes],
            fn_: vec![0; n_classes],
        }
    }

    /// Matches the segments of one image pair. A ground-truth and predicted
    /// segment of the same class match when their IoU exceeds 0.5, with
    /// ground-truth void excluded from the union. Unmatched predictions lying
    /// mostly on void are not false positives.
    pub fn add(&mut self, pred: &PanopticLabel, gt: &PanopticLabel, thing: &[bool]) -> Result<()> {
        if (pred.width(), pred.height()) != (gt.width(), gt.height()) {
            return Err(Error::Shape("prediction and ground truth differ in size".into()));
        }
        if thing.len() != self.tp.len() {
            return Err(Error::Shape(format!(
                "{} thing flags for {} classes",
                thing.len(),
                self.tp.len()
            )));
        }
        let mut gt_area: BTreeMap<Segment, u64> = BTreeMap::new();
        let mut pred_area: BTreeMap<Segment, u64> = BTreeMap::new();
        let mut inter: BTreeMap<(Option<Segment>, Option<Segment>), u64> = BTreeMap::new();
        let pixels = pred
            .semantic()
            .iter()
            .zip(pred.instance().iter())
            .zip(gt.semantic().iter().zip(gt.instance().iter()));
        for ((&ps, &pi), (&gs, &gi)) in pixels {
            let p = segment(ps, pi, thing)?;
            let g = segment(gs, gi, thing)?;
            if let Some(p) = p {
                *pred_area.entry(p).or_default() += 1;
            }
            if let Some(g) = g {
                *gt_area.entry(g).or_default() += 1;
            }
            *inter.entry((g, p)).or_default() += 1;
        }
        let void_overlap = |p: Segment| inter.get(&(None, Some(p))).copied().unwrap_or(0);

        let mut gt_matched: BTreeMap<Segment, bool> = gt_area.keys().map(|&g| (g, false)).collect();
        let mut pred_matched: BTreeMap<Segment, bool> = pred_area.keys().map(|&p| (p, false)).collect();
        for (&(g, p), &n) in &inter {
            let (Some(g), Some(p)) = (g, p) else { continue };
            if g.0 != p.0 {
                continue;
            }
            let union = pred_area[&p] + gt_area[&g] - n - void_overlap(p);
            let iou = n as f64 / union as f64;
            if iou > 0.5 {
                let c = g.0 as usize;
                self.tp[c] += 1;
                self.iou_sum[c] += iou;
                gt_matched.insert(g, true);
                pred_matched.insert(p, true);
            }
        }
        for (g, matched) in gt_matched {
            if !matched {
                self.fn_[g.0 as usize] += 1;
            }
        }
        for (p, matched) in pred_matched {
            if matched {
                continue;
            }
            if void_overlap(p) as f64 / pred_area[&p] as f64 > 0.5 {
                continue;
            }
            self.fp[p.0 as usize] += 1;
        }
        Ok(())
    }

    pub fn report(&self, thing: &[bool]) -> PqReport {
        let mut per_class = Vec::new();
        for c in 0..self.tp.len() {
            let (tp, fp, fn_) = (self.tp[c], self.fp[c], self.fn_[c]);
            if tp + fp + fn_ == 0 {
                continue;
            }
            let denom = tp as f64 + 0.5 * fp as f64 + 0.5 * fn_ as f64;
            let sq = if tp > 0 { self.iou_sum[c] / tp as f64 } else { 0.0 };
            let rq = tp as f64 / denom;
            per_class.push(ClassPq {
                class: c,
                is_thing: thing.get(c).copied().unwrap_or(false),
                pq: self.iou_sum[c] / denom,
                sq,
                rq,
                tp,
                fp,
                fn_,
            });
        }
        let mean = |f: &dyn Fn(&ClassPq) -> f64, sel: &dyn Fn(&ClassPq) -> bool| {
            let v: Vec<f64> = per_class.iter().filter(|c| sel(c)).map(f).collect();
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        PqReport {
            pq: mean(&|c| c.pq, &|_| true),
            sq: mean(&|c| c.sq, &|_| true),
            rq: mean(&|c| c.rq, &|_| true),
            pq_thing: mean(&|c| c.pq, &|c| c.is_thing),
            pq_stuff: mean(&|c| c.pq, &|c| !c.is_thing),
            classes_counted: per_class.len(),
            per_class,
        }
    }
}

/// PQ of one matched prediction against its ground truth. `thing[c]` flags
/// the ground-truth thing classes.
pub fn panoptic_quality(pred: &PanopticLabel, gt: &PanopticLabel, thing: &[bool]) -> Result<PqReport> {
    let mut acc = PqAccumulator::new(thing.len());
    acc.add(pred, gt, thing)?;
    Ok(acc.report(thing))
}
