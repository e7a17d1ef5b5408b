//! Cosine-distance K-means on per-pixel feature vectors.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SoftSemantics;
use crate::error::{Error, Result};
use crate::io::Tensor;

/// Dense `C×H×W` feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || data.len() != channels * width * height {
            return Err(Error::Shape(format!(
                "{} values for a {channels}×{height}×{width} feature map",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("feature map contains non-finite values".into()));
        }
        Ok(Self {
            channels,
            width,
            height,
            data,
        })
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (c, h, w, v) = t.to_planes()?;
        Self::new(c, w, h, v)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_f64(vec![self.channels, self.height, self.width], &self.data).expect("shape matches data")
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Window of size `w×h` whose top-left pixel is `(col, row)`.
    pub fn crop(&self, col: usize, row: usize, w: usize, h: usize) -> Result<Self> {
        if col + w > self.width || row + h > self.height || w == 0 || h == 0 {
            return Err(Error::Shape(format!(
                "crop {w}×{h} at ({row}, {col}) leaves a {}×{} map",
                self.height, self.width
            )));
        }
        let n = self.width * self.height;
        let mut data = Vec::with_capacity(self.channels * w * h);
        for c in 0..self.channels {
            for y in row..row + h {
                let start = c * n + y * self.width + col;
                data.extend_from_slice(&self.data[start..start + w]);
            }
        }
        Self::new(self.channels, w, h, data)
    }

    /// Mean over non-overlapping `f×f` blocks; partial border blocks average what they hold.
    pub fn avg_pool(&self, f: usize) -> Result<Self> {
        if f == 0 {
            return Err(Error::Parameter("pooling factor must be ≥ 1".into()));
        }
        let (nw, nh) = (self.width.div_ceil(f), self.height.div_ceil(f));
        let n = self.width * self.height;
        let mut data = vec![0.0; self.channels * nw * nh];
        let mut counts = vec![0usize; nw * nh];
        for y in 0..self.height {
            for x in 0..self.width {
                counts[(y / f) * nw + x / f] += 1;
            }
        }
        for c in 0..self.channels {
            for y in 0..self.height {
                for x in 0..self.width {
                    data[c * nw * nh + (y / f) * nw + x / f] += self.data[c * n + y * self.width + x];
                }
            }
            for (i, cnt) in counts.iter().enumerate() {
                data[c * nw * nh + i] /= *cnt as f64;
            }
        }
        Self::new(self.channels, nw, nh, data)
    }

    /// Pixel-major `N×C` copy of the features.
    pub fn to_rows(&self) -> Vec<f64> {
        let n = self.width * self.height;
        let mut rows = vec![0.0; n * self.channels];
        for c in 0..self.channels {
            for i in 0..n {
                rows[i * self.channels + c] = self.data[c * n + i];
            }
        }
        rows
    }
}

/// Unit-norm cluster centres, `K×C` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroids {
    dim: usize,
    vectors: Vec<f64>,
}

impl Centroids {
    /// Normalizes each row to unit length; zero rows are rejected.
    pub fn new(dim: usize, vectors: Vec<f64>) -> Result<Self> {
        if dim == 0 || vectors.is_empty() || !vectors.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!("{} values with dimension {dim}", vectors.len())));
        }
        let mut out = Vec::with_capacity(vectors.len());
        for (k, row) in vectors.chunks(dim).enumerate() {
            let Some(u) = normalized(row) else {
                return Err(Error::Domain(format!("centroid {k} has zero norm")));
            };
            out.extend(u);
        }
        Ok(Self { dim, vectors: out })
    }

    pub fn k(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.dim..(k + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.vectors
    }
}

/// Result of a K-means fit.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centroids: Centroids,
    /// Hard assignment per input row.
    pub labels: Vec<usize>,
    /// Mean cosine distance after each Lloyd iteration.
    pub objective: Vec<f64>,
}

fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 1e-12 && n.is_finite()).then(|| v.iter().map(|x| x / n).collect())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn nearest(point: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, c) in centroids.chunks(dim).enumerate() {
        let s = dot(point, c);
        if s > best.1 {
            best = (k, s);
        }
    }
    best
}

/// Fits `k` unit centroids to `N×dim` row-major features.
///
/// Seeding is k-means++ on cosine distance; Lloyd iterations assign by
/// maximum cosine similarity and update with the normalized mean. Clusters
/// that lose all members are re-seeded from the point farthest from its
/// centroid. Stops early once assignments no longer change.
pub fn cosine_kmeans_fit(
    rows: &[f64],
    dim: usize,
    k: usize,
    iters: usize,
    seed: u64,
) -> Result<KMeansFit> {
    if k < 2 {
        return Err(Error::Parameter(format!("K must be ≥ 2, got {k}")));
    }
    if dim == 0 || !rows.len().is_multiple_of(dim) {
        return Err(Error::Shape(format!("{} values with dimension {dim}", rows.len())));
    }
    let points: Vec<f64> = rows
        .chunks(dim)
        .filter_map(normalized)
        .flatten()
        .collect();
    let n = points.len() / dim;
    let all_points = rows.len() / dim;
    if n != all_points {
        return Err(Error::Domain(format!(
            "{} feature vectors have zero norm",
            all_points - n
        )));
    }
    let distinct = count_distinct(&points, dim, k);
    if distinct < k {
        return Err(Error::InsufficientData(format!(
            "{distinct} distinct feature vectors for K = {k}"
        )));
    }
    let pt = |i: usize| &points[i * dim..(i + 1) * dim];

    // k-means++ seeding
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<f64> = Vec::with_capacity(k * dim);
    centroids.extend_from_slice(pt(rng.gen_range(0..n)));
    let mut dist: Vec<f64> = (0..n).map(|i| (1.0 - dot(pt(i), &centroids[..dim])).max(0.0)).collect();
    while centroids.len() < k * dim {
        let total: f64 = dist.iter().map(|d| d * d).sum();
        let next = if total > 0.0 {
            WeightedIndex::new(dist.iter().map(|d| d * d))
                .expect("positive total")
                .sample(&mut rng)
        } else {
            rng.gen_range(0..n)
        };
        let start = centroids.len();
        centroids.extend_from_slice(pt(next));
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min((1.0 - dot(pt(i), &centroids[start..])).max(0.0));
        }
    }

    let mut labels = vec![usize::MAX; n];
    let mut sims = vec![0.0; n];
    let mut objective = Vec::new();
    for _ in 0..iters.max(1) {
        let mut changed = false;
        let mut total = 0.0;
        for i in 0..n {
            let (c, s) = nearest(pt(i), &centroids, dim);
            total += 1.0 - s;
            sims[i] = s;
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        objective.push(total / n as f64);
        if !changed && objective.len() > 1 {
            break;
        }

        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for (s, v) in sums[labels[i] * dim..].iter_mut().zip(pt(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                if let Some(u) = normalized(&sums[c * dim..(c + 1) * dim]) {
                    centroids[c * dim..(c + 1) * dim].copy_from_slice(&u);
                }
                continue;
            }
            // empty cluster: re-seed from the worst-fitting point of a shared cluster
            let far = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .min_by(|&a, &b| sims[a].total_cmp(&sims[b]).then(a.cmp(&b)));
            if let Some(far) = far {
                counts[labels[far]] -= 1;
                counts[c] = 1;
                labels[far] = c;
                sims[far] = 1.0;
                centroids[c * dim..(c + 1) * dim].copy_from_slice(pt(far));
            }
        }
    }
    // final assignment and objective against the last centroids
    let mut total = 0.0;
    for (i, l) in labels.iter_mut().enumerate() {
        let (c, s) = nearest(pt(i), &centroids, dim);
        *l = c;
        total += 1.0 - s;
    }
    let last = total / n as f64;
    if objective.last().is_none_or(|&o| (o - last).abs() > 0.0) {
        objective.push(last);
    }

    Ok(KMeansFit {
        centroids: Centroids::new(dim, centroids)?,
        labels,
        objective,
    })
}

/// Number of distinct rows, counting no further than `limit`.
fn count_distinct(points: &[f64], dim: usize, limit: usize) -> usize {
    let mut reps: Vec<&[f64]> = Vec::new();
    for p in points.chunks(dim) {
        if !reps.iter().any(|r| r.iter().zip(p).all(|(a, b)| (a - b).abs() <= 1e-12)) {
            reps.push(p);
            if reps.len() >= limit {
                break;
            }
        }
    }
    reps.len()
}

/// Soft assignment `softmax_k(cos(f, c_k) / temperature)` for every pixel.
pub fn cosine_kmeans_assign(
    features: &FeatureMap,
    centroids: &Centroids,
    temperature: f64,
) -> Result<SoftSemantics> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Parameter(format!("temperature must be > 0, got {temperature}")));
    }
    if features.channels != centroids.dim {
        return Err(Error::Shape(format!(
            "features have {} channels, centroids {}",
            features.channels, centroids.dim
        )));
    }
    let (w, h) = features.size();
    let n = w * h;
    let k = centroids.k();
    let rows = features.to_rows();
    let mut probs = vec![0.0; k * n];
    let mut logits = vec![0.0; k];
    for (i, row) in rows.chunks(features.channels).enumerate() {
        let norm = dot(row, row).sqrt();
        for (c, l) in logits.iter_mut().enumerate() {
            let cos = if norm > 1e-12 { dot(row, centroids.vector(c)) / norm } else { 0.0 };
            *l = cos / temperature;
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        for (c, l) in logits.iter().enumerate() {
            probs[c * n + i] = (l - max).exp() / sum;
        }
    }
    SoftSemantics::new(k, w, h, probs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_vectors_are_recovered() {
        let k = 4;
        let mut rows = Vec::new();
        for rep in 0..5 {
            for c in 0..k {
                let mut v = vec![0.0; k];
                v[c] = 1.0 + rep as f64;
                rows.extend(v);
            }
        }
        let fit = cosine_kmeans_fit(&rows, k, k, 20, 7).unwrap();
        let mut found: Vec<usize> = (0..k)
            .map(|c| {
                let v = fit.centroids.vector(c);
                let hot = (0..k).find(|&j| (v[j] - 1.0).abs() < 1e-12).unwrap();
                assert!(v.iter().enumerate().all(|(j, x)| j == hot || x.abs() < 1e-12));
                hot
            })
            .collect();
        found.sort();
        assert_eq!(found, vec![0, 1, 2, 3]);
        // purity: every row with the same hot channel shares a label
        for (i, l) in fit.labels.iter().enumerate() {
            assert_eq!(*l, fit.labels[i % k]);
        }
    }

    #[test]
    fn identical_vectors_are_degenerate() {
        let rows = [0.3, 0.4].repeat(10);
        assert!(matches!(
            cosine_kmeans_fit(&rows, 2, 2, 10, 0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn k_below_two_rejected() {
        assert!(cosine_kmeans_fit(&[1.0, 0.0, 0.0, 1.0], 2, 1, 10, 0).is_err());
    }

    #[test]
    fn near_hard_assignment() {
        let cent = Centroids::new(2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let f = FeatureMap::new(2, 1, 1, vec![1.0, 0.0]).unwrap();
        let s = cosine_kmeans_assign(&f, &cent, 0.01).unwrap();
        assert!(s.get(0, 0, 0) > 0.99);
    }

    #[test]
    fn equidistant_is_uniform() {
        let cent = Centroids::new(2, vec![1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0]).unwrap();
        let f = FeatureMap::new(2, 1, 1, vec![0.0, 0.0]).unwrap();
        let s = cosine_kmeans_assign(&f, &cent, 0.1).unwrap();
        for c in 0..4 {
            assert!((s.get(c, 0, 0) - 0.25).abs() < 1e-12);
        }
        assert!(cosine_kmeans_assign(&f, &cent, 0.0).is_err());
    }
}
