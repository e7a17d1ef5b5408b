use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::io::IGNORE;

/// Pixel co-occurrence counts, `counts[p][g]` for predicted class `p` and
/// ground-truth class `g`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyMatrix {
    n_pred: usize,
    n_gt: usize,
    counts: Vec<u64>,
}

impl ContingencyMatrix {
    pub fn zeros(n_pred: usize, n_gt: usize) -> Self {
        Self {
            n_pred,
            n_gt,
            counts: vec![0; n_pred * n_gt],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n_gt = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_gt) {
            return Err(Error::Shape("ragged contingency rows".into()));
        }
        Ok(Self {
            n_pred: rows.len(),
            n_gt,
            counts: rows.concat(),
        })
    }

    pub fn n_pred(&self) -> usize {
        self.n_pred
    }

    pub fn n_gt(&self) -> usize {
        self.n_gt
    }

    #[inline]
    pub fn get(&self, p: usize, g: usize) -> u64 {
        self.counts[p * self.n_gt + g]
    }

    pub fn row(&self, p: usize) -> &[u64] {
        &self.counts[p * self.n_gt..(p + 1) * self.n_gt]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds another image's counts.
    pub fn add(&mut self, other: &Self) -> Result<()> {
        if (other.n_pred, other.n_gt) != (self.n_pred, self.n_gt) {
            return Err(Error::Shape(format!(
                "adding a {}×{} contingency matrix to a {}×{} one",
                other.n_pred, other.n_gt, self.n_pred, self.n_gt
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

/// Counts pixels by `(pred, gt)` class, skipping pixels where either side is
/// ignore (255).
pub fn contingency(pred: &Grid<u8>, gt: &Grid<u8>, n_pred: usize, n_gt: usize) -> Result<ContingencyMatrix> {
    if pred.size() != gt.size() {
        return Err(Error::Shape(format!(
            "prediction is {:?}, ground truth {:?}",
            pred.size(),
            gt.size()
        )));
    }
    let mut m = ContingencyMatrix::zeros(n_pred, n_gt);
    for (&p, &g) in pred.iter().zip(gt.iter()) {
        if p == IGNORE || g == IGNORE {
            continue;
        }
        let (p, g) = (p as usize, g as usize);
        if p >= n_pred {
            return Err(Error::Domain(format!("predicted class {p} ≥ {n_pred}")));
        }
        if g >= n_gt {
            return Err(Error::Domain(format!("ground-truth class {g} ≥ {n_gt}")));
        }
        m.counts[p * n_gt + g] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemanticMetrics {
    pub miou: f64,
    pub acc: f64,
    /// `None` for classes absent from the ground truth.
    pub per_class_iou: Vec<Option<f64>>,
    /// Classes entering the mean.
    pub classes_counted: usize,
}

/// mIoU over ground-truth classes that occur, and pixel accuracy, from a
/// square matrix whose rows are already mapped into the ground-truth space.
pub fn semantic_metrics(a: &ContingencyMatrix) -> Result<SemanticMetrics> {
    if a.n_pred != a.n_gt {
        return Err(Error::Shape(format!(
            "semantic metrics need a square matrix, got {}×{}",
            a.n_pred, a.n_gt
        )));
    }
    let n = a.n_gt;
    let total = a.total();
    let mut per_class_iou = Vec::with_capacity(n);
    let mut trace = 0u64;
    for g in 0..n {
        let diag = a.get(g, g);
        trace += diag;
        let row: u64 = a.row(g).iter().sum();
        let col: u64 = (0..n).map(|p| a.get(p, g)).sum();
        per_class_iou.push((col > 0).then(|| diag as f64 / (row + col - diag) as f64));
    }
    let present: Vec<f64> = per_class_iou.iter().flatten().copied().collect();
    Ok(SemanticMetrics {
        miou: if present.is_empty() { 0.0 } else { present.iter().sum::<f64>() / present.len() as f64 },
        acc: if total == 0 { 0.0 } else { trace as f64 / total as f64 },
        classes_counted: present.len(),
        per_class_iou,
    })
}
