//! Stereo geometry: depth from disparity, back-projection, scene flow, and
//! forward-backward / left-right consistency masks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Mask};
use crate::io::Tensor;

/// Rectified stereo pinhole camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRig {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Stereo baseline in meters.
    pub baseline: f64,
}

impl CameraRig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.fx) && ok(self.fy) && ok(self.baseline)) {
            return Err(Error::Parameter(format!(
                "camera needs fx, fy, baseline > 0 (got {}, {}, {})",
                self.fx, self.fy, self.baseline
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::Parameter("camera principal point must be finite".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn backproject_pixel(&self, u: f64, v: f64, depth: f64) -> [f64; 3] {
        [
            (u - self.cx) * depth / self.fx,
            (v - self.cy) * depth / self.fy,
            depth,
        ]
    }

    #[inline]
    pub fn project(&self, p: [f64; 3]) -> (f64, f64) {
        (
            self.fx * p[0] / p[2] + self.cx,
            self.fy * p[1] / p[2] + self.cy,
        )
    }

    /// `fx · baseline`, the disparity-depth product.
    #[inline]
    pub fn focal_baseline(&self) -> f64 {
        self.fx * self.baseline
    }
}

/// Horizontal disparity in pixels.
pub type DisparityMap = Grid<f64>;

/// Optical flow `(du, dv)` in pixels.
pub type FlowField = Grid<[f64; 2]>;

#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    /// Meters; zero where invalid.
    pub depth: Grid<f64>,
    pub valid: Mask,
}

impl DepthMap {
    pub fn size(&self) -> (usize, usize) {
        self.depth.size()
    }
}

/// Per-pixel 3D motion between `t` and `t+1`, in the camera frame at `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFlowField {
    /// Meters; zero where invalid.
    pub flow3d: Grid<[f64; 3]>,
    pub depth_t: Grid<f64>,
    pub valid: Mask,
}

impl SceneFlowField {
    pub fn size(&self) -> (usize, usize) {
        self.valid.size()
    }

    /// Invalidates every pixel not set in `mask`.
    pub fn restrict(&mut self, mask: &Mask) -> Result<()> {
        if !self.valid.same_size(mask) {
            return Err(Error::Shape("validity mask size differs from scene flow".into()));
        }
        for (i, keep) in mask.iter().enumerate() {
            if !keep {
                self.valid.as_mut_slice()[i] = false;
                self.flow3d.as_mut_slice()[i] = [0.0; 3];
            }
        }
        Ok(())
    }

    pub fn valid_count(&self) -> usize {
        self.valid.count()
    }
}

/// Reads a `2×H×W` flow tensor.
pub fn flow_from_tensor(t: &Tensor) -> Result<FlowField> {
    let (c, h, w, v) = t.to_planes()?;
    if c != 2 {
        return Err(Error::Shape(format!("flow needs 2 channels, got {c}")));
    }
    let plane = h * w;
    Ok(Grid::from_fn(w, h, |x, y| {
        let i = y * w + x;
        [v[i], v[plane + i]]
    }))
}

pub fn flow_to_tensor(flow: &FlowField) -> Tensor {
    let mut v: Vec<f64> = flow.iter().map(|f| f[0]).collect();
    v.extend(flow.iter().map(|f| f[1]));
    Tensor::from_f64(vec![2, flow.height(), flow.width()], &v).expect("shape matches")
}

/// `D = fx · baseline / disp` where `disp ≥ min_disp`; other pixels invalid.
pub fn depth_from_disparity(disp: &DisparityMap, rig: &CameraRig, min_disp: f64) -> Result<DepthMap> {
    if !(min_disp > 0.0) {
        return Err(Error::Parameter(format!("min_disp must be > 0, got {min_disp}")));
    }
    rig.validate()?;
    let fb = rig.focal_baseline();
    let valid = disp.map(|&d| d.is_finite() && d >= min_disp);
    let depth = Grid::from_fn(disp.width(), disp.height(), |x, y| {
        if *valid.get(x, y) {
            fb / disp.get(x, y)
        } else {
            0.0
        }
    });
    Ok(DepthMap { depth, valid })
}

/// Camera-frame 3D point per pixel; invalid pixels map to the origin.
pub fn backproject(depth: &DepthMap, rig: &CameraRig) -> Grid<[f64; 3]> {
    Grid::from_fn(depth.depth.width(), depth.depth.height(), |x, y| {
        if *depth.valid.get(x, y) {
            rig.backproject_pixel(x as f64, y as f64, *depth.depth.get(x, y))
        } else {
            [0.0; 3]
        }
    })
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Scene flow of the left view at `t`.
///
/// Each pixel `p` with valid depth is lifted to `P`, followed along
/// `flow_fw` to `q`, and lifted again with bilinearly sampled `t+1` depth.
/// Targets leaving the image or touching invalid depth are invalid.
pub fn scene_flow(
    flow_fw: &FlowField,
    depth_t: &DepthMap,
    depth_t1: &DepthMap,
    rig: &CameraRig,
) -> Result<SceneFlowField> {
    let size = flow_fw.size();
    if depth_t.size() != size || depth_t1.size() != size {
        return Err(Error::Shape(format!(
            "flow {:?}, depth_t {:?}, depth_t1 {:?}",
            size,
            depth_t.size(),
            depth_t1.size()
        )));
    }
    let (w, h) = size;
    let mut flow3d = Grid::filled(w, h, [0.0; 3]);
    let mut valid = Grid::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            if !*depth_t.valid.get(x, y) {
                continue;
            }
            let [du, dv] = *flow_fw.get(x, y);
            let (qx, qy) = (x as f64 + du, y as f64 + dv);
            let Some(d1) = depth_t1
                .depth
                .bilinear_where(qx, qy, |i, j| *depth_t1.valid.get(i, j))
            else {
                continue;
            };
            let p0 = rig.backproject_pixel(x as f64, y as f64, *depth_t.depth.get(x, y));
            let p1 = rig.backproject_pixel(qx, qy, d1);
            let f = sub3(p1, p0);
            if f.iter().all(|v| v.is_finite()) {
                flow3d.set(x, y, f);
                valid.set(x, y, true);
            }
        }
    }
    Ok(SceneFlowField {
        flow3d,
        depth_t: depth_t.depth.clone(),
        valid,
    })
}

/// Forward-backward flow check:
/// `|fw + bw(q)|² < alpha1 · (|fw|² + |bw(q)|²) + alpha2` with `q = p + fw(p)`.
pub fn fb_consistency(flow_fw: &FlowField, flow_bw: &FlowField, alpha1: f64, alpha2: f64) -> Result<Mask> {
    if !flow_fw.same_size(flow_bw) {
        return Err(Error::Shape("forward and backward flow differ in size".into()));
    }
    Ok(Grid::from_fn(flow_fw.width(), flow_fw.height(), |x, y| {
        let [u, v] = *flow_fw.get(x, y);
        let Some([bu, bv]) = flow_bw.bilinear(x as f64 + u, y as f64 + v) else {
            return false;
        };
        let diff = (u + bu).powi(2) + (v + bv).powi(2);
        let mag = u * u + v * v + bu * bu + bv * bv;
        diff < alpha1 * mag + alpha2
    }))
}

/// Left-right disparity check: `|d_lr(p) − d_rl(p − (d_lr(p), 0))| < tol`.
pub fn lr_consistency(d_lr: &DisparityMap, d_rl: &DisparityMap, tol: f64) -> Result<Mask> {
    if !d_lr.same_size(d_rl) {
        return Err(Error::Shape("left and right disparity differ in size".into()));
    }
    Ok(Grid::from_fn(d_lr.width(), d_lr.height(), |x, y| {
        let d = *d_lr.get(x, y);
        match d_rl.bilinear(x as f64 - d, y as f64) {
            Some(back) => (d - back).abs() < tol,
            None => false,
        }
    }))
}

/// Logical AND of all masks.
pub fn combine_validity(masks: &[&Mask]) -> Result<Mask> {
    let (first, rest) = masks
        .split_first()
        .ok_or_else(|| Error::Parameter("combine_validity needs at least one mask".into()))?;
    let mut out = (*first).clone();
    for m in rest {
        if !m.same_size(&out) {
            return Err(Error::Shape("validity masks differ in size".into()));
        }
        out = out.and(m);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rig() -> CameraRig {
        CameraRig {
            fx: 1000.0,
            fy: 900.0,
            cx: 3.5,
            cy: 2.5,
            baseline: 0.5,
        }
    }

    #[test]
    fn depth_formula_and_guard() {
        let disp = Grid::from_vec(3, 1, vec![10.0, 0.0, 0.4]).unwrap();
        let d = depth_from_disparity(&disp, &rig(), 0.5).unwrap();
        assert_eq!(*d.depth.get(0, 0), 50.0);
        assert_eq!(d.valid.as_slice(), &[true, false, false]);
        assert!(depth_from_disparity(&disp, &rig(), 0.0).is_err());
        assert!(depth_from_disparity(&disp, &rig(), -1.0).is_err());
    }

    #[test]
    fn doubling_baseline_doubles_depth() {
        let disp = Grid::from_fn(4, 3, |x, y| 1.0 + x as f64 + 0.5 * y as f64);
        let mut wide = rig();
        wide.baseline *= 2.0;
        let a = depth_from_disparity(&disp, &rig(), 0.5).unwrap();
        let b = depth_from_disparity(&disp, &wide, 0.5).unwrap();
        for (da, db) in a.depth.iter().zip(b.depth.iter()) {
            assert_eq!(2.0 * da, *db);
        }
    }

    #[test]
    fn backproject_principal_point_and_unit_ray() {
        let r = rig();
        assert_eq!(r.backproject_pixel(r.cx, r.cy, 5.0), [0.0, 0.0, 5.0]);
        assert_abs_diff_eq!(r.backproject_pixel(r.cx + r.fx, r.cy, 1.0)[0], 1.0);
    }

    #[test]
    fn zero_flow_static_depth_gives_zero_scene_flow() {
        let w = 8;
        let h = 6;
        let depth = DepthMap {
            depth: Grid::from_fn(w, h, |x, y| 5.0 + (x + y) as f64),
            valid: Grid::filled(w, h, true),
        };
        let flow = Grid::filled(w, h, [0.0, 0.0]);
        let sf = scene_flow(&flow, &depth, &depth, &rig()).unwrap();
        assert_eq!(sf.valid_count(), w * h);
        assert!(sf.flow3d.iter().all(|f| *f == [0.0; 3]));
    }

    #[test]
    fn depth_increase_moves_along_ray() {
        let (w, h) = (8, 6);
        let r = rig();
        let d0 = DepthMap {
            depth: Grid::filled(w, h, 4.0),
            valid: Grid::filled(w, h, true),
        };
        let d1 = DepthMap {
            depth: Grid::filled(w, h, 5.0),
            valid: Grid::filled(w, h, true),
        };
        let sf = scene_flow(&Grid::filled(w, h, [0.0, 0.0]), &d0, &d1, &r).unwrap();
        for y in 0..h {
            for x in 0..w {
                let f = sf.flow3d.get(x, y);
                assert_abs_diff_eq!(f[0], (x as f64 - r.cx) / r.fx, epsilon = 1e-12);
                assert_abs_diff_eq!(f[1], (y as f64 - r.cy) / r.fy, epsilon = 1e-12);
                assert_abs_diff_eq!(f[2], 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn flow_out_of_image_is_invalid() {
        let (w, h) = (5, 5);
        let d = DepthMap {
            depth: Grid::filled(w, h, 3.0),
            valid: Grid::filled(w, h, true),
        };
        let flow = Grid::filled(w, h, [2.5, 0.0]);
        let sf = scene_flow(&flow, &d, &d, &rig()).unwrap();
        for y in 0..h {
            for x in 0..w {
                assert_eq!(*sf.valid.get(x, y), x <= 1);
            }
        }
    }

    #[test]
    fn scene_flow_shape_mismatch() {
        let d = DepthMap {
            depth: Grid::filled(4, 4, 1.0),
            valid: Grid::filled(4, 4, true),
        };
        let flow = Grid::filled(3, 4, [0.0, 0.0]);
        assert!(matches!(scene_flow(&flow, &d, &d, &rig()), Err(Error::Shape(_))));
    }

    #[test]
    fn fb_perfect_inverse_valid_in_image() {
        let fw = Grid::filled(10, 6, [2.0, 1.0]);
        let bw = Grid::filled(10, 6, [-2.0, -1.0]);
        let m = fb_consistency(&fw, &bw, 0.01, 0.5).unwrap();
        for y in 0..6 {
            for x in 0..10 {
                assert_eq!(*m.get(x, y), x + 2 <= 9 && y < 5);
            }
        }
    }

    #[test]
    fn fb_zero_backward_flow_is_inconsistent() {
        // |10|² = 100 vs 0.01·100 + 0.5 = 1.5
        let fw = Grid::filled(30, 3, [10.0, 0.0]);
        let bw = Grid::filled(30, 3, [0.0, 0.0]);
        let m = fb_consistency(&fw, &bw, 0.01, 0.5).unwrap();
        assert_eq!(m.count(), 0);
        let m = fb_consistency(&fw, &bw, 0.01, f64::INFINITY).unwrap();
        assert_eq!(m.count(), 20 * 3);
    }

    #[test]
    fn lr_constant_disparity() {
        let d = Grid::filled(12, 2, 3.0);
        let m = lr_consistency(&d, &d, 1.0).unwrap();
        for x in 0..12 {
            assert_eq!(*m.get(x, 0), x >= 3);
        }
        let d_rl = Grid::filled(12, 2, 0.0);
        let d_lr = Grid::filled(12, 2, 5.0);
        assert_eq!(lr_consistency(&d_lr, &d_rl, 1.0).unwrap().count(), 0);
        assert_eq!(
            lr_consistency(&d_lr, &d_rl, f64::INFINITY).unwrap().count(),
            7 * 2
        );
    }

    #[test]
    fn combine_validity_rules() {
        assert!(combine_validity(&[]).is_err());
        let a = Grid::from_fn(4, 4, |x, y| (x + y) % 3 == 0);
        let b = Grid::from_fn(4, 4, |x, _| x > 1);
        let all = Grid::filled(4, 4, true);
        assert_eq!(combine_validity(&[&a]).unwrap(), a);
        assert_eq!(combine_validity(&[&a, &all]).unwrap(), a);
        assert_eq!(
            combine_validity(&[&a, &b]).unwrap(),
            combine_validity(&[&b, &a]).unwrap()
        );
    }
}
