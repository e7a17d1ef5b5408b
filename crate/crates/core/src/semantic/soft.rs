use crate::error::{Error, Result};
use crate::grid::{resize_plane, Grid};
use crate::io::Tensor;

/// Per-pixel class distributions stored channel-major (`K×H×W`).
#[derive(Debug, Clone, PartialEq)]
pub struct SoftSemantics {
    k: usize,
    width: usize,
    height: usize,
    probs: Vec<f64>,
}

const NORM_TOL: f64 = 1e-5;

impl SoftSemantics {
    /// Wraps normalized probabilities, checking non-negativity and per-pixel
    /// sums (within 1e-5).
    pub fn new(k: usize, width: usize, height: usize, probs: Vec<f64>) -> Result<Self> {
        let s = Self::unchecked(k, width, height, probs)?;
        if let Some(v) = s.probs.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!("probability {v} is negative or not finite")));
        }
        for i in 0..width * height {
            let sum = s.pixel_sum(i);
            if (sum - 1.0).abs() > NORM_TOL {
                return Err(Error::Domain(format!(
                    "pixel {} sums to {sum}",
                    i
                )));
            }
        }
        Ok(s)
    }

    /// Normalizes non-negative scores per pixel. Pixels whose scores sum to
    /// zero become uniform.
    pub fn from_scores(k: usize, width: usize, height: usize, scores: Vec<f64>) -> Result<Self> {
        let mut s = Self::unchecked(k, width, height, scores)?;
        if let Some(v) = s.probs.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!("score {v} is negative or not finite")));
        }
        s.renormalize();
        Ok(s)
    }

    fn unchecked(k: usize, width: usize, height: usize, probs: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(Error::Shape("soft semantics need at least one class".into()));
        }
        if probs.len() != k * width * height {
            return Err(Error::Shape(format!(
                "{} values for {k}×{height}×{width}",
                probs.len()
            )));
        }
        Ok(Self {
            k,
            width,
            height,
            probs,
        })
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (k, h, w, v) = t.to_planes()?;
        Self::new(k, w, h, v)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_f64(vec![self.k, self.height, self.width], &self.probs).expect("shape matches")
    }

    pub(crate) fn renormalize(&mut self) {
        let plane = self.width * self.height;
        for i in 0..plane {
            let sum = self.pixel_sum(i);
            for c in 0..self.k {
                let v = &mut self.probs[c * plane + i];
                *v = if sum > 0.0 { *v / sum } else { 1.0 / self.k as f64 };
            }
        }
    }

    fn pixel_sum(&self, i: usize) -> f64 {
        let plane = self.width * self.height;
        (0..self.k).map(|c| self.probs[c * plane + i]).sum()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.probs
    }

    #[inline]
    pub fn get(&self, class: usize, x: usize, y: usize) -> f64 {
        self.probs[(class * self.height + y) * self.width + x]
    }

    pub fn channel(&self, class: usize) -> &[f64] {
        let plane = self.width * self.height;
        &self.probs[class * plane..(class + 1) * plane]
    }

    /// Distribution at one pixel.
    pub fn pixel(&self, x: usize, y: usize) -> Vec<f64> {
        (0..self.k).map(|c| self.get(c, x, y)).collect()
    }

    /// Largest per-pixel sum deviation from 1.
    pub fn max_norm_error(&self) -> f64 {
        (0..self.width * self.height)
            .map(|i| (self.pixel_sum(i) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Most probable class per pixel; ties resolve to the smaller id.
    pub fn argmax(&self) -> Grid<usize> {
        Grid::from_fn(self.width, self.height, |x, y| {
            let mut best = 0;
            for c in 1..self.k {
                if self.get(c, x, y) > self.get(best, x, y) {
                    best = c;
                }
            }
            best
        })
    }

    /// Bilinear resize of every channel followed by renormalization.
    pub fn resize(&self, width: usize, height: usize) -> Self {
        if (width, height) == self.size() {
            return self.clone();
        }
        let mut probs = Vec::with_capacity(self.k * width * height);
        for c in 0..self.k {
            probs.extend(resize_plane(self.channel(c), self.width, self.height, width, height));
        }
        let mut out = Self {
            k: self.k,
            width,
            height,
            probs,
        };
        out.renormalize();
        out
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut probs = Vec::with_capacity(self.probs.len());
        for c in 0..self.k {
            for y in 0..self.height {
                for x in 0..self.width {
                    probs.push(self.get(c, self.width - 1 - x, y));
                }
            }
        }
        Self {
            k: self.k,
            width: self.width,
            height: self.height,
            probs,
        }
    }
}
