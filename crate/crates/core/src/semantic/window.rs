//! High-resolution predictions assembled from overlapping windows.

use super::SoftSemantics;
use crate::error::{Error, Result};

/// Top-left corner of a window, in full-image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowOrigin {
    pub row: usize,
    pub col: usize,
}

/// Window origins for a `win_w × win_h` window slid with stride
/// `(stride_x, stride_y)`. The last window in each direction is clamped to
/// the image border so the grid always reaches the edge.
pub fn window_origins(
    width: usize,
    height: usize,
    win_w: usize,
    win_h: usize,
    stride_x: usize,
    stride_y: usize,
) -> Result<Vec<WindowOrigin>> {
    if win_w == 0 || win_h == 0 || win_w > width || win_h > height {
        return Err(Error::Parameter(format!(
            "window {win_w}×{win_h} does not fit a {width}×{height} image"
        )));
    }
    if stride_x == 0 || stride_y == 0 {
        return Err(Error::Parameter("window stride must be ≥ 1".into()));
    }
    let axis = |size: usize, win: usize, stride: usize| {
        let mut v: Vec<usize> = (0..).map(|i| i * stride).take_while(|&o| o + win < size).collect();
        v.push(size - win);
        v.dedup();
        v
    };
    let rows = axis(height, win_h, stride_y);
    let cols = axis(width, win_w, stride_x);
    Ok(rows
        .iter()
        .flat_map(|&row| cols.iter().map(move |&col| WindowOrigin { row, col }))
        .collect())
}

/// Per-pixel average of all windows covering each pixel, renormalized.
pub fn assemble_sliding_window(
    windows: &[(SoftSemantics, WindowOrigin)],
    width: usize,
    height: usize,
) -> Result<SoftSemantics> {
    let Some((first, _)) = windows.first() else {
        return Err(Error::MissingInput("no window predictions".into()));
    };
    let k = first.k();
    let n = width * height;
    let mut acc = vec![0.0; k * n];
    let mut hits = vec![0u32; n];
    for (i, (win, o)) in windows.iter().enumerate() {
        if win.k() != k {
            return Err(Error::Shape(format!("window {i} has {} classes, expected {k}", win.k())));
        }
        let (ww, wh) = win.size();
        if o.col + ww > width || o.row + wh > height {
            return Err(Error::Shape(format!(
                "window {i} at ({}, {}) of size {ww}×{wh} leaves the {width}×{height} image",
                o.row, o.col
            )));
        }
        for y in 0..wh {
            for x in 0..ww {
                let p = (o.row + y) * width + o.col + x;
                hits[p] += 1;
                for c in 0..k {
                    acc[c * n + p] += win.get(c, x, y);
                }
            }
        }
    }
    let uncovered: Vec<(usize, usize)> = (0..n)
        .filter(|&p| hits[p] == 0)
        .map(|p| (p / width, p % width))
        .collect();
    if !uncovered.is_empty() {
        return Err(Error::Coverage { pixels: uncovered });
    }
    for c in 0..k {
        for p in 0..n {
            acc[c * n + p] /= hits[p] as f64;
        }
    }
    SoftSemantics::from_scores(k, width, height, acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(k: usize, class: usize, w: usize, h: usize) -> SoftSemantics {
        let mut v = vec![0.0; k * w * h];
        v[class * w * h..(class + 1) * w * h].fill(1.0);
        SoftSemantics::new(k, w, h, v).unwrap()
    }

    #[test]
    fn single_window_is_identity() {
        let s = SoftSemantics::from_scores(3, 4, 2, (0..24).map(|v| v as f64 + 1.0).collect()).unwrap();
        let out = assemble_sliding_window(&[(s.clone(), WindowOrigin { row: 0, col: 0 })], 4, 2).unwrap();
        assert!(out.as_slice().iter().zip(s.as_slice()).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn disagreeing_overlap_averages() {
        let a = one_hot(3, 0, 4, 2);
        let b = one_hot(3, 2, 4, 2);
        let out = assemble_sliding_window(
            &[(a, WindowOrigin { row: 0, col: 0 }), (b, WindowOrigin { row: 0, col: 2 })],
            6,
            2,
        )
        .unwrap();
        assert_eq!(out.pixel(0, 1), vec![1.0, 0.0, 0.0]);
        assert_eq!(out.pixel(2, 0), vec![0.5, 0.0, 0.5]);
        assert_eq!(out.pixel(3, 1), vec![0.5, 0.0, 0.5]);
        assert_eq!(out.pixel(5, 0), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn uncovered_pixels_are_listed() {
        let a = one_hot(2, 0, 2, 2);
        match assemble_sliding_window(&[(a, WindowOrigin { row: 0, col: 0 })], 3, 2) {
            Err(Error::Coverage { pixels }) => assert_eq!(pixels, vec![(0, 2), (1, 2)]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn origins_clamp_to_border() {
        let o = window_origins(7, 4, 4, 2, 2, 1).unwrap();
        let cols: Vec<usize> = o.iter().filter(|w| w.row == 0).map(|w| w.col).collect();
        assert_eq!(cols, vec![0, 2, 3]);
        let rows: Vec<usize> = o.iter().filter(|w| w.col == 0).map(|w| w.row).collect();
        assert_eq!(rows, vec![0, 1, 2]);
    }
}
