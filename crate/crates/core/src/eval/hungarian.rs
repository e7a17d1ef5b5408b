//! Optimal linear assignment by the shortest-augmenting-path Hungarian
//! method with row and column potentials.

use crate::error::{Error, Result};

/// Dense row-major score or cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{} values for a {rows}×{cols} matrix", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged matrix rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// Optimal one-to-one assignment of `min(rows, cols)` pairs, sorted by row.
///
/// Minimizes the total by default and maximizes it when `maximize` is set.
/// Rectangular inputs are padded with zero-cost dummies.
pub fn hungarian(m: &Matrix, maximize: bool) -> Result<Vec<(usize, usize)>> {
    if m.data.iter().any(|v| v.is_nan()) {
        return Err(Error::Domain("assignment matrix contains NaN".into()));
    }
    if m.data.iter().any(|v| v.is_infinite()) {
        return Err(Error::Domain("assignment matrix contains an infinite entry".into()));
    }
    if m.rows == 0 || m.cols == 0 {
        return Ok(Vec::new());
    }
    // square cost matrix, minimization form
    let n = m.rows.max(m.cols);
    let sign = if maximize { -1.0 } else { 1.0 };
    let cost = |r: usize, c: usize| -> f64 {
        if r < m.rows && c < m.cols {
            sign * m.get(r, c)
        } else {
            0.0
        }
    };

    // 1-based arrays; p[j] = row assigned to column j
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out: Vec<(usize, usize)> = (1..=n)
        .filter(|&j| p[j] != 0 && p[j] - 1 < m.rows && j - 1 < m.cols)
        .map(|j| (p[j] - 1, j - 1))
        .collect();
    out.sort_unstable();
    Ok(out)
}
