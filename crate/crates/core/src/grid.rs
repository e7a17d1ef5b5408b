//! Dense row-major H×W storage with sub-pixel sampling.

use crate::error::{Error, Result};

/// A row-major `height × width` raster of `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Per-pixel boolean mask.
pub type Mask = Grid<bool>;

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "{} values do not fill a {}x{} grid",
                data.len(),
                height,
                width
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(width, height)`.
    #[inline]
    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn same_size<U>(&self, other: &Grid<U>) -> bool {
        self.size() == other.size()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        &mut self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64
    }
}

impl<T: Clone> Grid<T> {
    pub fn flip_horizontal(&self) -> Self {
        Grid::from_fn(self.width, self.height, |x, y| {
            self.get(self.width - 1 - x, y).clone()
        })
    }
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn and(&self, other: &Mask) -> Mask {
        debug_assert!(self.same_size(other));
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect(),
        }
    }

    pub fn intersection_count(&self, other: &Mask) -> usize {
        self.data.iter().zip(&other.data).filter(|(a, b)| **a && **b).count()
    }

    /// Intersection over union; two empty masks have IoU 0.
    pub fn iou(&self, other: &Mask) -> f64 {
        let inter = self.intersection_count(other);
        let union = self.count() + other.count() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Values that can be linearly blended by bilinear interpolation.
pub trait Lerp: Copy {
    fn zero() -> Self;
    fn add_scaled(self, other: Self, weight: f64) -> Self;
}

impl Lerp for f64 {
    fn zero() -> Self {
        0.0
    }
    #[inline]
    fn add_scaled(self, other: Self, weight: f64) -> Self {
        self + other * weight
    }
}

impl<const N: usize> Lerp for [f64; N] {
    fn zero() -> Self {
        [0.0; N]
    }
    #[inline]
    fn add_scaled(mut self, other: Self, weight: f64) -> Self {
        for (a, b) in self.iter_mut().zip(other) {
            *a += b * weight;
        }
        self
    }
}

impl<T: Lerp> Grid<T> {
    /// Bilinear lookup at continuous pixel coordinates.
    ///
    /// Returns `None` outside `[0, W-1] × [0, H-1]`. Neighbours that carry zero
    /// weight are never touched, so integer coordinates on the last row or
    /// column are in range.
    pub fn bilinear(&self, x: f64, y: f64) -> Option<T> {
        self.bilinear_where(x, y, |_, _| true)
    }

    /// Bilinear lookup that fails if any neighbour with non-zero weight is
    /// rejected by `usable`.
    pub fn bilinear_where(
        &self,
        x: f64,
        y: f64,
        usable: impl Fn(usize, usize) -> bool,
    ) -> Option<T> {
        if !x.is_finite() || !y.is_finite() || !self.contains(x, y) {
            return None;
        }
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let mut acc = T::zero();
        for (dx, wx) in [(0usize, 1.0 - fx), (1, fx)] {
            if wx == 0.0 {
                continue;
            }
            for (dy, wy) in [(0usize, 1.0 - fy), (1, fy)] {
                let w = wx * wy;
                if w == 0.0 {
                    continue;
                }
                let (xi, yi) = (x0 + dx, y0 + dy);
                if !usable(xi, yi) {
                    return None;
                }
                acc = acc.add_scaled(*self.get(xi, yi), w);
            }
        }
        Some(acc)
    }
}

/// Bilinear resampling of one row-major plane using pixel-centre alignment
/// (`src = (dst + 0.5) · in/out − 0.5`, clamped to the border).
pub fn resize_plane(src: &[f64], width: usize, height: usize, new_w: usize, new_h: usize) -> Vec<f64> {
    debug_assert_eq!(src.len(), width * height);
    if width == new_w && height == new_h {
        return src.to_vec();
    }
    let axis = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|i| {
                let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(inp - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let xs = axis(new_w, width);
    let ys = axis(new_h, height);
    let mut out = Vec::with_capacity(new_w * new_h);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let a = src[y0 * width + x0] * (1.0 - fx) + src[y0 * width + x1] * fx;
            let b = src[y1 * width + x0] * (1.0 - fx) + src[y1 * width + x1] * fx;
            out.push(a * (1.0 - fy) + b * fy);
        }
    }
    out
}
