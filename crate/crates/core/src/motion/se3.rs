//! Rigid motions and their closed-form least-squares fit.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// A rotation plus translation, `p ↦ R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidMotion {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidMotion {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Checks `‖RᵀR − I‖_F < 1e-9` and `det R > 0`.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        if !(ortho < 1e-9) || !(rotation.determinant() > 0.0) {
            return Err(Error::Domain(format!(
                "not a proper rotation (orthogonality error {ortho:e})"
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("translation is not finite".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    #[inline]
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let q = self.rotation * Vector3::from(p) + self.translation;
        [q.x, q.y, q.z]
    }

    /// Endpoint residual `‖R p + t − q‖`.
    #[inline]
    pub fn residual(&self, p: [f64; 3], q: [f64; 3]) -> f64 {
        let m = self.apply(p);
        ((m[0] - q[0]).powi(2) + (m[1] - q[1]).powi(2) + (m[2] - q[2]).powi(2)).sqrt()
    }
}

/// Weighted least-squares rigid alignment of `src` onto `dst`
/// (Kabsch / Umeyama without scale).
///
/// Minimizes `Σ wᵢ ‖R srcᵢ + t − dstᵢ‖²` over proper rotations; a reflection
/// in the SVD solution is flipped along the weakest singular direction.
pub fn fit_se3(src: &[[f64; 3]], dst: &[[f64; 3]], weights: Option<&[f64]>) -> Result<RigidMotion> {
    if src.len() != dst.len() {
        return Err(Error::Shape(format!(
            "{} source points vs {} targets",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "rigid fit needs at least 3 correspondences, got {}",
            src.len()
        )));
    }
    if let Some(w) = weights {
        if w.len() != src.len() {
            return Err(Error::Shape(format!("{} weights for {} points", w.len(), src.len())));
        }
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Parameter("weights must be finite and non-negative".into()));
        }
    }
    let weight = |i: usize| weights.map_or(1.0, |w| w[i]);
    let total: f64 = (0..src.len()).map(weight).sum();
    if !(total > 0.0) {
        return Err(Error::Parameter("weights sum to zero".into()));
    }

    let mut c_src = Vector3::zeros();
    let mut c_dst = Vector3::zeros();
    for i in 0..src.len() {
        c_src += Vector3::from(src[i]) * weight(i);
        c_dst += Vector3::from(dst[i]) * weight(i);
    }
    c_src /= total;
    c_dst /= total;

    let mut cov = Matrix3::zeros();
    let mut spread = 0.0;
    for i in 0..src.len() {
        let a = Vector3::from(src[i]) - c_src;
        let b = Vector3::from(dst[i]) - c_dst;
        cov += a * b.transpose() * weight(i);
        spread += weight(i) * (a.norm_squared() + b.norm_squared());
    }

    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let sv = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let (s_max, s_mid) = (sv[order[0]], sv[order[1]]);
    // Rank ≤ 1 (all points collinear or coincident) leaves the rotation about
    // the common axis undetermined.
    if !(s_max > 1e-12 * spread.max(f64::MIN_POSITIVE)) || !(s_mid > 1e-10 * s_max) {
        return Err(Error::Degenerate(format!(
            "rank-deficient covariance (singular values {:.3e}, {:.3e}, {:.3e})",
            sv[order[0]], sv[order[1]], sv[order[2]]
        )));
    }

    let v = v_t.transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(order[2], order[2])] = -1.0;
    }
    let rotation = v * d * u.transpose();
    let translation = c_dst - rotation * c_src;
    RigidMotion::new(rotation, translation)
}

/// Per-correspondence endpoint residuals `‖R pᵢ + t − pᵢ'‖`.
pub fn se3_residuals(motion: &RigidMotion, src: &[[f64; 3]], dst: &[[f64; 3]]) -> Result<Vec<f64>> {
    if src.len() != dst.len() {
        return Err(Error::Shape(format!(
            "{} source points vs {} targets",
            src.len(),
            dst.len()
        )));
    }
    Ok(src.iter().zip(dst).map(|(p, q)| motion.residual(*p, *q)).collect())
}
