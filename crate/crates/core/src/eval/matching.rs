//! Pseudo-class to ground-truth class matching.

use serde::Serialize;

use super::contingency::ContingencyMatrix;
use super::hungarian::{hungarian, Matrix};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::io::{PanopticLabel, IGNORE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchVia {
    Hungarian,
    MaxOverlap,
}

/// Maps every pseudo class to one ground-truth class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassMatching {
    pub assignment: Vec<usize>,
    pub via: Vec<MatchVia>,
}

impl ClassMatching {
    pub fn identity(n: usize) -> Self {
        Self {
            assignment: (0..n).collect(),
            via: vec![MatchVia::Hungarian; n],
        }
    }

    fn map(&self, p: usize) -> Result<usize> {
        self.assignment
            .get(p)
            .copied()
            .ok_or_else(|| Error::Mapping(format!("pseudo class {p} has no match")))
    }
}

/// Matches pseudo classes to ground-truth classes, things only with things
/// and stuff only with stuff.
///
/// Within each block the Hungarian method maximizes total overlap. Pseudo
/// classes left over after it map to their largest-overlap class in the
/// block; those with no overlap at all map to the block's first class.
pub fn match_classes(a: &ContingencyMatrix, pred_thing: &[bool], gt_thing: &[bool]) -> Result<ClassMatching> {
    if pred_thing.len() != a.n_pred() || gt_thing.len() != a.n_gt() {
        return Err(Error::Shape(format!(
            "{} / {} thing flags for a {}×{} matrix",
            pred_thing.len(),
            gt_thing.len(),
            a.n_pred(),
            a.n_gt()
        )));
    }
    let mut assignment = vec![usize::MAX; a.n_pred()];
    let mut via = vec![MatchVia::MaxOverlap; a.n_pred()];
    for thing in [true, false] {
        let preds: Vec<usize> = (0..a.n_pred()).filter(|&p| pred_thing[p] == thing).collect();
        let gts: Vec<usize> = (0..a.n_gt()).filter(|&g| gt_thing[g] == thing).collect();
        if preds.is_empty() {
            continue;
        }
        let block = if thing { "thing" } else { "stuff" };
        let Some(&first_gt) = gts.first() else {
            return Err(Error::Configuration(format!(
                "{} pseudo {block} classes but no ground-truth {block} classes",
                preds.len()
            )));
        };

        let overlap = |p: usize| -> Vec<u64> { gts.iter().map(|&g| a.get(p, g)).collect() };
        let mut rows: Vec<(usize, Vec<u64>)> = preds
            .iter()
            .map(|&p| (p, overlap(p)))
            .filter(|(_, r)| r.iter().any(|&v| v > 0))
            .collect();
        // order rows by content so the result does not depend on pseudo ids;
        // equal block rows fall back to the full row
        rows.sort_by(|x, y| {
            y.1.cmp(&x.1)
                .then_with(|| a.row(y.0).cmp(a.row(x.0)))
                .then(x.0.cmp(&y.0))
        });

        let m = Matrix::new(
            rows.len(),
            gts.len(),
            rows.iter().flat_map(|(_, r)| r.iter().map(|&v| v as f64)).collect(),
        )?;
        for (r, c) in hungarian(&m, true)? {
            assignment[rows[r].0] = gts[c];
            via[rows[r].0] = MatchVia::Hungarian;
        }
        for &p in &preds {
            if assignment[p] != usize::MAX {
                continue;
            }
            let o = overlap(p);
            let best = (0..gts.len()).max_by(|&x, &y| o[x].cmp(&o[y]).then(y.cmp(&x)));
            assignment[p] = match best {
                Some(i) if o[i] > 0 => gts[i],
                _ => first_gt,
            };
        }
    }
    Ok(ClassMatching { assignment, via })
}

/// Rewrites semantic ids through the matching. Ignore stays ignore.
pub fn remap_semantic(sem: &Grid<u8>, m: &ClassMatching) -> Result<Grid<u8>> {
    let mut table = [None; 256];
    table[IGNORE as usize] = Some(IGNORE);
    for p in 0..m.assignment.len().min(IGNORE as usize) {
        let g = m.assignment[p];
        if g >= IGNORE as usize {
            return Err(Error::Mapping(format!("pseudo class {p} maps to {g}, beyond 8-bit ids")));
        }
        table[p] = Some(g as u8);
    }
    let mut out = Grid::filled(sem.width(), sem.height(), 0u8);
    for (o, &s) in out.as_mut_slice().iter_mut().zip(sem.iter()) {
        *o = table[s as usize].ok_or_else(|| Error::Mapping(format!("pseudo class {s} has no match")))?;
    }
    Ok(out)
}

/// Applies the matching to a label's semantics; instance ids are kept.
pub fn apply_matching(label: &PanopticLabel, m: &ClassMatching) -> Result<PanopticLabel> {
    let sem = remap_semantic(label.semantic(), m)?;
    PanopticLabel::new(sem, label.instance().clone())
}

/// Sums rows of `a` that map to the same ground-truth class, giving a square
/// matrix in ground-truth space.
pub fn remap_contingency(a: &ContingencyMatrix, m: &ClassMatching) -> Result<ContingencyMatrix> {
    let n = a.n_gt();
    let mut rows = vec![vec![0u64; n]; n];
    for p in 0..a.n_pred() {
        let g = m.map(p)?;
        if g >= n {
            return Err(Error::Mapping(format!("pseudo class {p} maps to {g} ≥ {n}")));
        }
        for (acc, &v) in rows[g].iter_mut().zip(a.row(p)) {
            *acc += v;
        }
    }
    ContingencyMatrix::from_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matches_identity() {
        let a = ContingencyMatrix::from_rows(&[vec![9, 0, 1], vec![0, 7, 0], vec![2, 0, 8]]).unwrap();
        let m = match_classes(&a, &[false, true, false], &[false, true, false]).unwrap();
        assert_eq!(m, ClassMatching::identity(3));
    }

    #[test]
    fn extra_stuff_class_takes_max_overlap() {
        let a = ContingencyMatrix::from_rows(&[vec![10, 1], vec![2, 9], vec![6, 3]]).unwrap();
        let m = match_classes(&a, &[false; 3], &[false; 2]).unwrap();
        assert_eq!(m.assignment, vec![0, 1, 0]);
        assert_eq!(m.via, vec![MatchVia::Hungarian, MatchVia::Hungarian, MatchVia::MaxOverlap]);
    }

    #[test]
    fn blocks_are_respected() {
        // pseudo thing 1 overlaps gt stuff 0 heavily, but can only match gt thing 1
        let a = ContingencyMatrix::from_rows(&[vec![50, 0], vec![40, 2]]).unwrap();
        let m = match_classes(&a, &[false, true], &[false, true]).unwrap();
        assert_eq!(m.assignment, vec![0, 1]);
    }

    #[test]
    fn zero_rows_go_to_first_class_of_block() {
        let a = ContingencyMatrix::from_rows(&[vec![0, 5, 0], vec![0, 0, 0], vec![0, 0, 3]]).unwrap();
        let m = match_classes(&a, &[false; 3], &[false; 3]).unwrap();
        assert_eq!(m.assignment[1], 0);
        assert_eq!(m.via[1], MatchVia::MaxOverlap);
    }

    #[test]
    fn empty_gt_block_is_configuration_error() {
        let a = ContingencyMatrix::from_rows(&[vec![1], vec![1]]).unwrap();
        assert!(matches!(
            match_classes(&a, &[false, true], &[false]),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn apply_and_invert() {
        let sem = Grid::from_vec(4, 1, vec![0, 1, 2, IGNORE]).unwrap();
        let l = PanopticLabel::new(sem, Grid::from_vec(4, 1, vec![0, 0, 1, 0]).unwrap()).unwrap();
        assert_eq!(apply_matching(&l, &ClassMatching::identity(3)).unwrap(), l);
        let perm = ClassMatching {
            assignment: vec![2, 0, 1],
            via: vec![MatchVia::Hungarian; 3],
        };
        let inv = ClassMatching {
            assignment: vec![1, 2, 0],
            via: vec![MatchVia::Hungarian; 3],
        };
        let there = apply_matching(&l, &perm).unwrap();
        assert_eq!(there.semantic().as_slice(), &[2, 0, 1, IGNORE]);
        assert_eq!(apply_matching(&there, &inv).unwrap(), l);
        let merge = ClassMatching {
            assignment: vec![0, 0, 1],
            via: vec![MatchVia::Hungarian; 3],
        };
        let merged = apply_matching(&l, &merge).unwrap();
        assert_eq!(merged.semantic().as_slice(), &[0, 0, 1, IGNORE]);
        assert_eq!(merged.instance(), l.instance());
        let short = ClassMatching::identity(2);
        assert!(matches!(apply_matching(&l, &short), Err(Error::Mapping(_))));
    }
}
