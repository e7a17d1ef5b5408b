//! Analytic synthetic stereo-video scenes with ground truth.
//!
//! The static background is a stack of horizontal stuff bands, each either a
//! fronto-parallel plane or a stretch of ground plane, so its depth depends
//! on the image row only. Fronto-parallel rectangles ("movers") float in
//! front of it and translate rigidly between `t` and `t+1`. Every raster follows in closed form from the
//! pinhole model, so flow, disparity, and labels are exact.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{ThingStuffSplit, SPLIT_FILE};
use crate::geometry::{flow_to_tensor, CameraRig, DisparityMap, FlowField};
use crate::grid::Grid;
use crate::io::{write_npy, write_panoptic_png, write_rgb_png, DatasetManifest, FrameRecord, PanopticLabel, Tensor};
use crate::semantic::FeatureMap;

/// Ground-truth classes of synthetic scenes.
pub const CLASS_NAMES: [&str; 5] = ["sky", "building", "road", "car", "person"];
pub const THING_CLASSES: [bool; 5] = [false, false, false, true, true];
pub const SKY: u8 = 0;
pub const BUILDING: u8 = 1;
pub const ROAD: u8 = 2;
pub const CAR: u8 = 3;
pub const PERSON: u8 = 4;

const MAX_MOVERS: usize = 16;

const PALETTE: [[u8; 3]; 5] = [[110, 160, 230], [140, 110, 90], [80, 80, 85], [200, 30, 30], [230, 200, 40]];

/// Depth model of a background band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandDepth {
    /// Fronto-parallel plane at this depth (meters).
    Plane(f64),
    /// Horizontal ground plane this far below the camera (meters); rows at
    /// or above the horizon and depths beyond `max_depth` are clamped.
    Ground { camera_height: f64, max_depth: f64 },
}

/// A horizontal background band `[y0, y1)` of one stuff class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub y0: usize,
    pub y1: usize,
    pub class: u8,
    pub depth: BandDepth,
}

/// A rectangle covering pixel centres `[x0, x1) × [y0, y1)` at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mover {
    pub rect: [usize; 4],
    /// Meters.
    pub depth: f64,
    /// Meters per frame, camera frame.
    pub velocity: [f64; 3],
    pub class: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub rig: CameraRig,
    /// Depth of rows no band covers.
    pub background_depth: f64,
    pub bands: Vec<Band>,
    pub movers: Vec<Mover>,
    pub feature_dim: usize,
    /// Seeds the per-class feature directions; shared across a dataset.
    pub feature_seed: u64,
    /// Bound of the uniform per-channel feature noise.
    pub feature_noise: f64,
    /// Bound of the uniform noise added to flow (pixels).
    pub flow_noise: f64,
    /// Bound of the uniform noise added to disparity (pixels).
    pub disp_noise: f64,
    /// Seeds textures and noise of this frame.
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        self.rig.validate()?;
        if self.width == 0 || self.height == 0 {
            return Err(Error::Spec("image size must be positive".into()));
        }
        if !(self.background_depth > 0.0 && self.background_depth.is_finite()) {
            return Err(Error::Spec("background depth must be > 0".into()));
        }
        if self.movers.len() > MAX_MOVERS {
            return Err(Error::Spec(format!("{} movers exceed {MAX_MOVERS}", self.movers.len())));
        }
        if self.feature_dim == 0 {
            return Err(Error::Spec("feature_dim must be ≥ 1".into()));
        }
        for b in &self.bands {
            let depth_ok = match b.depth {
                BandDepth::Plane(z) => z > 0.0 && z.is_finite(),
                BandDepth::Ground {
                    camera_height,
                    max_depth,
                } => camera_height > 0.0 && max_depth > 0.0 && max_depth.is_finite(),
            };
            if b.y0 >= b.y1 || b.y1 > self.height || b.class as usize >= CLASS_NAMES.len() || !depth_ok {
                return Err(Error::Spec(format!("invalid band {b:?}")));
            }
        }
        for (i, m) in self.movers.iter().enumerate() {
            let [x0, y0, x1, y1] = m.rect;
            if x0 >= x1 || y0 >= y1 || x1 > self.width || y1 > self.height {
                return Err(Error::Spec(format!("mover {i} rectangle {:?} leaves the frame", m.rect)));
            }
            if m.class as usize >= CLASS_NAMES.len() {
                return Err(Error::Spec(format!("mover {i} has unknown class {}", m.class)));
            }
            let z1 = m.depth + m.velocity[2];
            if !(m.depth > 0.0 && z1 > 0.0) {
                return Err(Error::Spec(format!("mover {i} needs positive depth at t and t+1")));
            }
        }
        Ok(())
    }
}

/// All rasters of one rendered frame pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedScene {
    pub left_t: Grid<[u8; 3]>,
    pub right_t: Grid<[u8; 3]>,
    pub left_t1: Grid<[u8; 3]>,
    pub right_t1: Grid<[u8; 3]>,
    pub flow_fw: FlowField,
    pub flow_bw: FlowField,
    pub disp_t_lr: DisparityMap,
    pub disp_t_rl: DisparityMap,
    pub disp_t1_lr: DisparityMap,
    pub disp_t1_rl: DisparityMap,
    pub features: FeatureMap,
    /// Left view at `t`.
    pub gt: PanopticLabel,
    /// True 3D motion of the surface seen at each left-`t` pixel.
    pub motion3d: Grid<[f64; 3]>,
}

struct Renderer<'a> {
    spec: &'a SceneSpec,
    /// Mover indices sorted near to far at each time.
    order: [Vec<usize>; 2],
}

impl<'a> Renderer<'a> {
    fn new(spec: &'a SceneSpec) -> Self {
        let sorted = |tau: usize| {
            let mut v: Vec<usize> = (0..spec.movers.len()).collect();
            v.sort_by(|&a, &b| {
                let za = spec.movers[a].depth + tau as f64 * spec.movers[a].velocity[2];
                let zb = spec.movers[b].depth + tau as f64 * spec.movers[b].velocity[2];
                za.total_cmp(&zb).then(b.cmp(&a))
            });
            v
        };
        Self {
            spec,
            order: [sorted(0), sorted(1)],
        }
    }

    fn depth(&self, m: usize, tau: usize) -> f64 {
        let mv = &self.spec.movers[m];
        mv.depth + tau as f64 * mv.velocity[2]
    }

    /// Position at `t` of the mover point seen at left-view `(u, v)` at time `tau`.
    fn to_time0(&self, m: usize, tau: usize, u: f64, v: f64) -> (f64, f64) {
        if tau == 0 {
            return (u, v);
        }
        let mv = &self.spec.movers[m];
        let r = &self.spec.rig;
        let (z0, z1) = (mv.depth, self.depth(m, 1));
        (
            ((u - r.cx) * z1 - r.fx * mv.velocity[0]) / z0 + r.cx,
            ((v - r.cy) * z1 - r.fy * mv.velocity[1]) / z0 + r.cy,
        )
    }

    fn covers(&self, m: usize, tau: usize, u: f64, v: f64) -> Option<(f64, f64)> {
        let (u0, v0) = self.to_time0(m, tau, u, v);
        let [x0, y0, x1, y1] = self.spec.movers[m].rect;
        let inside = u0 >= x0 as f64 - 0.5 && u0 < x1 as f64 - 0.5 && v0 >= y0 as f64 - 0.5 && v0 < y1 as f64 - 0.5;
        inside.then_some((u0, v0))
    }

    /// Nearest mover visible at left-view `(u, v)` at time `tau`.
    fn left_surface(&self, tau: usize, u: f64, v: f64) -> Option<(usize, (f64, f64))> {
        self.order[tau]
            .iter()
            .find_map(|&m| self.covers(m, tau, u, v).map(|p| (m, p)))
    }

    /// Surface seen at right-view `(u, v)`: mover (with its left-view
    /// coordinate) or background.
    fn right_surface(&self, tau: usize, u: f64, v: f64) -> Option<(usize, f64)> {
        let fb = self.spec.rig.focal_baseline();
        self.order[tau].iter().find_map(|&m| {
            let ul = u + fb / self.depth(m, tau);
            self.covers(m, tau, ul, v).map(|_| (m, ul))
        })
    }

    fn band(&self, y: usize) -> Option<&Band> {
        self.spec.bands.iter().rev().find(|b| (b.y0..b.y1).contains(&y))
    }

    fn band_class(&self, y: usize) -> u8 {
        self.band(y).map_or(SKY, |b| b.class)
    }

    fn background_depth(&self, y: usize) -> f64 {
        match self.band(y).map(|b| b.depth) {
            None => self.spec.background_depth,
            Some(BandDepth::Plane(z)) => z,
            Some(BandDepth::Ground {
                camera_height,
                max_depth,
            }) => {
                let below = y as f64 - self.spec.rig.cy;
                if below <= 0.0 {
                    max_depth
                } else {
                    (self.spec.rig.fy * camera_height / below).min(max_depth)
                }
            }
        }
    }

    fn background_disparity(&self, y: usize) -> f64 {
        self.spec.rig.focal_baseline() / self.background_depth(y)
    }

    /// Every mover pixel must lie in front of the background it covers.
    fn check_occlusion(&self) -> Result<()> {
        for m in 0..self.spec.movers.len() {
            for tau in 0..2 {
                let z = self.depth(m, tau);
                for y in 0..self.spec.height {
                    let covered = (0..self.spec.width).any(|x| self.covers(m, tau, x as f64, y as f64).is_some());
                    if covered && z >= self.background_depth(y) {
                        return Err(Error::Spec(format!(
                            "mover {m} lies behind the background in row {y} at time {tau}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn texture(&self, surface: u64, x: i64, y: i64) -> i32 {
        let h = splitmix(self.spec.seed ^ surface.wrapping_mul(0x9E37) ^ ((x as u64) << 20) ^ (y as u64));
        (h % 17) as i32 - 8
    }

    fn colour(&self, class: u8, surface: u64, x: i64, y: i64) -> [u8; 3] {
        let t = self.texture(surface, x, y);
        PALETTE[class as usize].map(|c| (c as i32 + t).clamp(0, 255) as u8)
    }

    fn mover_colour(&self, m: usize, p0: (f64, f64)) -> [u8; 3] {
        let [x0, y0, ..] = self.spec.movers[m].rect;
        let lx = (p0.0.round() as i64) - x0 as i64;
        let ly = (p0.1.round() as i64) - y0 as i64;
        self.colour(self.spec.movers[m].class, m as u64 + 1, lx, ly)
    }

    fn background_colour(&self, x: i64, y: usize) -> [u8; 3] {
        self.colour(self.band_class(y), 0, x, y as i64)
    }

    fn left_image(&self, tau: usize) -> Grid<[u8; 3]> {
        Grid::from_fn(self.spec.width, self.spec.height, |x, y| {
            match self.left_surface(tau, x as f64, y as f64) {
                Some((m, p0)) => self.mover_colour(m, p0),
                None => self.background_colour(x as i64, y),
            }
        })
    }

    fn right_image(&self, tau: usize) -> Grid<[u8; 3]> {
        Grid::from_fn(self.spec.width, self.spec.height, |x, y| {
            match self.right_surface(tau, x as f64, y as f64) {
                Some((m, ul)) => self.mover_colour(m, self.to_time0(m, tau, ul, y as f64)),
                None => self.background_colour((x as f64 + self.background_disparity(y)).round() as i64, y),
            }
        })
    }

    fn disp_lr(&self, tau: usize) -> DisparityMap {
        let fb = self.spec.rig.focal_baseline();
        Grid::from_fn(self.spec.width, self.spec.height, |x, y| {
            match self.left_surface(tau, x as f64, y as f64) {
                Some((m, _)) => fb / self.depth(m, tau),
                None => self.background_disparity(y),
            }
        })
    }

    fn disp_rl(&self, tau: usize) -> DisparityMap {
        let fb = self.spec.rig.focal_baseline();
        Grid::from_fn(self.spec.width, self.spec.height, |x, y| {
            match self.right_surface(tau, x as f64, y as f64) {
                Some((m, _)) => fb / self.depth(m, tau),
                None => self.background_disparity(y),
            }
        })
    }

    fn flow_fw(&self) -> (FlowField, Grid<[f64; 3]>) {
        let r = &self.spec.rig;
        let (w, h) = (self.spec.width, self.spec.height);
        let mut flow = Grid::filled(w, h, [0.0; 2]);
        let mut motion = Grid::filled(w, h, [0.0; 3]);
        for y in 0..h {
            for x in 0..w {
                if let Some((m, _)) = self.left_surface(0, x as f64, y as f64) {
                    let mv = &self.spec.movers[m];
                    let p = r.backproject_pixel(x as f64, y as f64, mv.depth);
                    let q = [p[0] + mv.velocity[0], p[1] + mv.velocity[1], p[2] + mv.velocity[2]];
                    let (u1, v1) = r.project(q);
                    flow.set(x, y, [u1 - x as f64, v1 - y as f64]);
                    motion.set(x, y, mv.velocity);
                }
            }
        }
        (flow, motion)
    }

    fn flow_bw(&self) -> FlowField {
        Grid::from_fn(self.spec.width, self.spec.height, |x, y| {
            match self.left_surface(1, x as f64, y as f64) {
                Some((_, (u0, v0))) => [u0 - x as f64, v0 - y as f64],
                None => [0.0, 0.0],
            }
        })
    }

    fn ground_truth(&self) -> Result<PanopticLabel> {
        let (w, h) = (self.spec.width, self.spec.height);
        let owner: Grid<Option<usize>> =
            Grid::from_fn(w, h, |x, y| self.left_surface(0, x as f64, y as f64).map(|(m, _)| m));
        // ids follow mover order, counting only visible movers
        let mut ids = vec![0u16; self.spec.movers.len()];
        let mut next = 0u16;
        for (m, id) in ids.iter_mut().enumerate() {
            let is_thing = THING_CLASSES[self.spec.movers[m].class as usize];
            if is_thing && owner.iter().any(|o| *o == Some(m)) {
                next += 1;
                *id = next;
            }
        }
        let sem = Grid::from_fn(w, h, |x, y| match owner.get(x, y) {
            Some(m) => self.spec.movers[*m].class,
            None => self.band_class(y),
        });
        let inst = owner.map(|o| o.map_or(0, |m| ids[m]));
        PanopticLabel::new(sem, inst)
    }

    fn features(&self, gt: &PanopticLabel) -> Result<FeatureMap> {
        let c = self.spec.feature_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.feature_seed);
        let dirs: Vec<Vec<f64>> = (0..CLASS_NAMES.len())
            .map(|_| {
                let v: Vec<f64> = (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.into_iter().map(|x| x / n).collect()
            })
            .collect();
        let mut noise = ChaCha8Rng::seed_from_u64(splitmix(self.spec.seed ^ 0xFEA7));
        let (w, h) = (self.spec.width, self.spec.height);
        let n = w * h;
        let mut data = vec![0.0; c * n];
        for (i, &class) in gt.semantic().iter().enumerate() {
            for ch in 0..c {
                let e = if self.spec.feature_noise > 0.0 {
                    noise.gen_range(-self.spec.feature_noise..=self.spec.feature_noise)
                } else {
                    0.0
                };
                data[ch * n + i] = dirs[class as usize][ch] + e;
            }
        }
        FeatureMap::new(c, w, h, data)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn add_noise<const N: usize>(g: &mut Grid<[f64; N]>, bound: f64, rng: &mut ChaCha8Rng) {
    if bound > 0.0 {
        for v in g.as_mut_slice().iter_mut().flatten() {
            *v += rng.gen_range(-bound..=bound);
        }
    }
}

fn add_noise_scalar(g: &mut Grid<f64>, bound: f64, rng: &mut ChaCha8Rng) {
    if bound > 0.0 {
        for v in g.as_mut_slice() {
            *v += rng.gen_range(-bound..=bound);
        }
    }
}

pub fn render_scene(spec: &SceneSpec) -> Result<RenderedScene> {
    spec.validate()?;
    let r = Renderer::new(spec);
    r.check_occlusion()?;
    let gt = r.ground_truth()?;
    let features = r.features(&gt)?;
    let (mut flow_fw, motion3d) = r.flow_fw();
    let mut flow_bw = r.flow_bw();
    let mut disps = [r.disp_lr(0), r.disp_rl(0), r.disp_lr(1), r.disp_rl(1)];
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(spec.seed ^ 0x0015E));
    add_noise(&mut flow_fw, spec.flow_noise, &mut rng);
    add_noise(&mut flow_bw, spec.flow_noise, &mut rng);
    for d in &mut disps {
        add_noise_scalar(d, spec.disp_noise, &mut rng);
    }
    let [disp_t_lr, disp_t_rl, disp_t1_lr, disp_t1_rl] = disps;
    Ok(RenderedScene {
        left_t: r.left_image(0),
        right_t: r.right_image(0),
        left_t1: r.left_image(1),
        right_t1: r.right_image(1),
        flow_fw,
        flow_bw,
        disp_t_lr,
        disp_t_rl,
        disp_t1_lr,
        disp_t1_rl,
        features,
        gt,
        motion3d,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Static,
    OneMover,
    TwoMovers,
    Noisy,
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Scenario::Static),
            "one_mover" => Ok(Scenario::OneMover),
            "two_movers" => Ok(Scenario::TwoMovers),
            "noisy" => Ok(Scenario::Noisy),
            other => Err(Error::Parameter(format!(
                "unknown scenario {other:?} (static, one_mover, two_movers, noisy)"
            ))),
        }
    }
}

pub const WIDTH: usize = 128;
pub const HEIGHT: usize = 96;
pub const FEATURE_DIM: usize = 16;

pub fn default_rig() -> CameraRig {
    CameraRig {
        fx: 500.0,
        fy: 500.0,
        cx: WIDTH as f64 / 2.0,
        cy: HEIGHT as f64 / 2.0,
        baseline: 0.5,
    }
}

fn overlaps(a: [usize; 4], b: [usize; 4], margin: usize) -> bool {
    a[0] < b[2] + margin && b[0] < a[2] + margin && a[1] < b[3] + margin && b[1] < a[3] + margin
}

fn shifted(r: [usize; 4], dx: i64) -> [usize; 4] {
    let s = |v: usize| (v as i64 + dx).max(0) as usize;
    [s(r[0]), r[1], s(r[2]), r[3]]
}

/// Spec of frame `frame` of a scenario dataset.
pub fn scenario_spec(scenario: Scenario, seed: u64, frame: usize) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed.wrapping_mul(1000).wrapping_add(frame as u64)));
    let rig = default_rig();
    let fb = rig.focal_baseline();
    let (w, h) = (WIDTH, HEIGHT);
    let sky_end = 28 + rng.gen_range(0..4);
    let building_end = 52 + rng.gen_range(0..4);
    let bands = vec![
        Band {
            y0: 0,
            y1: sky_end,
            class: SKY,
            depth: BandDepth::Plane(100.0),
        },
        Band {
            y0: sky_end,
            y1: building_end,
            class: BUILDING,
            depth: BandDepth::Plane(30.0),
        },
        Band {
            y0: building_end,
            y1: h,
            class: ROAD,
            depth: BandDepth::Ground {
                camera_height: 1.5,
                max_depth: 100.0,
            },
        },
    ];

    // (class, size, depth, |vx| in m) per mover; later movers head the other way
    let templates: &[(u8, (usize, usize), f64, f64)] = match scenario {
        Scenario::Static => &[],
        Scenario::OneMover => &[(CAR, (36, 20), 10.0, 0.6)],
        Scenario::TwoMovers | Scenario::Noisy => &[(CAR, (36, 20), 10.0, 0.6), (PERSON, (16, 40), 10.0, 0.5)],
    };
    let first_sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let mut movers: Vec<Mover> = Vec::new();
    // whole layouts are redrawn until every mover fits
    for _ in 0..1000 {
        movers.clear();
        for (i, &(class, (mw, mh), depth, speed)) in templates.iter().enumerate() {
            let disp = (fb / depth).ceil() as i64;
            let vx = if i % 2 == 0 { first_sign * speed } else { -first_sign * speed };
            let shift = (rig.fx * vx / depth).round() as i64;
            // visible in both views at t and t+1
            let x_min = (disp + 2).max(disp + 2 - shift) as usize;
            let x_max = (w as i64 - mw as i64 - 2 - shift.max(0)) as usize;
            let (y_min, y_max) = (h / 4, h - mh - 2);
            let placed = (0..50)
                .map(|_| {
                    let (x0, y0) = (rng.gen_range(x_min..=x_max), rng.gen_range(y_min..=y_max));
                    [x0, y0, x0 + mw, y0 + mh]
                })
                .find(|&rect| {
                    movers.iter().all(|m| {
                        let other_shift = (rig.fx * m.velocity[0] / m.depth).round() as i64;
                        !overlaps(rect, m.rect, 4) && !overlaps(shifted(rect, shift), shifted(m.rect, other_shift), 4)
                    })
                });
            match placed {
                Some(rect) => movers.push(Mover {
                    rect,
                    depth,
                    velocity: [vx, 0.0, 0.0],
                    class,
                }),
                None => break,
            }
        }
        if movers.len() == templates.len() {
            break;
        }
    }

    let noisy = scenario == Scenario::Noisy;
    SceneSpec {
        width: w,
        height: h,
        rig,
        background_depth: 100.0,
        bands,
        movers,
        feature_dim: FEATURE_DIM,
        feature_seed: splitmix(seed ^ 0xC1A55),
        feature_noise: if noisy { 0.15 } else { 0.05 },
        flow_noise: if noisy { 0.05 } else { 0.0 },
        disp_noise: if noisy { 0.005 } else { 0.0 },
        seed: splitmix(seed.wrapping_add(frame as u64 * 7919)),
    }
}

/// Ground-truth class table written next to the labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtClass {
    pub name: String,
    pub is_thing: bool,
}

pub fn gt_classes() -> Vec<GtClass> {
    CLASS_NAMES
        .iter()
        .zip(THING_CLASSES)
        .map(|(n, t)| GtClass {
            name: n.to_string(),
            is_thing: t,
        })
        .collect()
}

/// Ground-truth thing/stuff flags in the split sidecar format.
pub fn gt_split() -> ThingStuffSplit {
    ThingStuffSplit {
        ratio: THING_CLASSES.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect(),
        is_thing: THING_CLASSES.to_vec(),
        threshold: f64::NAN,
    }
}

/// Writes `n_frames` frames of a scenario under `out_dir` and returns the
/// manifest path. Layout: `inputs/`, `gt/` (labels, `classes.json`, and the
/// thing/stuff sidecar), and
/// `manifest.json` whose output directory is `pseudo/`.
pub fn write_dataset(out_dir: &Path, scenario: Scenario, seed: u64, n_frames: usize) -> Result<PathBuf> {
    if n_frames == 0 {
        return Err(Error::Parameter("at least one frame is needed".into()));
    }
    let inputs = out_dir.join("inputs");
    let gt_dir = out_dir.join("gt");
    for d in [&inputs, &gt_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut frames = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let spec = scenario_spec(scenario, seed, f);
        let scene = render_scene(&spec)?;
        let stem = format!("frame_{f:04}");
        let rel = |s: &str| PathBuf::from("inputs").join(format!("{stem}_{s}"));
        let at = |p: &PathBuf| out_dir.join(p);
        let record = FrameRecord {
            name: Some(stem.clone()),
            left_t: rel("left_t.png"),
            right_t: rel("right_t.png"),
            left_t1: rel("left_t1.png"),
            right_t1: rel("right_t1.png"),
            flow_fw: rel("flow_fw.npy"),
            flow_bw: rel("flow_bw.npy"),
            disp_t_lr: rel("disp_t_lr.npy"),
            disp_t_rl: rel("disp_t_rl.npy"),
            disp_t1_lr: rel("disp_t1_lr.npy"),
            disp_t1_rl: rel("disp_t1_rl.npy"),
            features: Some(rel("features.npy")),
            low_res_pred: None,
            window_preds: Vec::new(),
        };
        write_rgb_png(at(&record.left_t), &scene.left_t)?;
        write_rgb_png(at(&record.right_t), &scene.right_t)?;
        write_rgb_png(at(&record.left_t1), &scene.left_t1)?;
        write_rgb_png(at(&record.right_t1), &scene.right_t1)?;
        write_npy(at(&record.flow_fw), &flow_to_tensor(&scene.flow_fw))?;
        write_npy(at(&record.flow_bw), &flow_to_tensor(&scene.flow_bw))?;
        write_npy(at(&record.disp_t_lr), &Tensor::from_grid(&scene.disp_t_lr))?;
        write_npy(at(&record.disp_t_rl), &Tensor::from_grid(&scene.disp_t_rl))?;
        write_npy(at(&record.disp_t1_lr), &Tensor::from_grid(&scene.disp_t1_lr))?;
        write_npy(at(&record.disp_t1_rl), &Tensor::from_grid(&scene.disp_t1_rl))?;
        write_npy(at(record.features.as_ref().expect("set above")), &scene.features.to_tensor())?;
        write_panoptic_png(
            &scene.gt,
            gt_dir.join(format!("{stem}_sem.png")),
            gt_dir.join(format!("{stem}_inst.png")),
        )?;
        frames.push(record);
    }
    let classes_path = gt_dir.join("classes.json");
    let classes = serde_json::to_string_pretty(&gt_classes()).expect("plain data serializes");
    fs::write(&classes_path, classes).map_err(|e| Error::io(&classes_path, e))?;
    gt_split().save(gt_dir.join(SPLIT_FILE))?;

    let manifest = DatasetManifest {
        frames,
        camera: default_rig(),
        output_dir: PathBuf::from("pseudo"),
    };
    let path = out_dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{depth_from_disparity, scene_flow};

    fn spec_with(movers: Vec<Mover>) -> SceneSpec {
        let mut s = scenario_spec(Scenario::Static, 1, 0);
        s.movers = movers;
        s
    }

    #[test]
    fn static_scene_has_zero_flow() {
        let s = render_scene(&scenario_spec(Scenario::Static, 3, 0)).unwrap();
        assert!(s.flow_fw.iter().all(|f| *f == [0.0, 0.0]));
        assert!(s.flow_bw.iter().all(|f| *f == [0.0, 0.0]));
        assert_eq!(s.gt.instance_count(), 0);
    }

    #[test]
    fn pinhole_flow_example() {
        let spec = spec_with(vec![Mover {
            rect: [40, 50, 60, 70],
            depth: 10.0,
            velocity: [0.5, 0.0, 0.0],
            class: CAR,
        }]);
        let s = render_scene(&spec).unwrap();
        assert_eq!(*s.flow_fw.get(45, 55), [25.0, 0.0]);
        assert_eq!(*s.flow_bw.get(70, 55), [-25.0, 0.0]);
        assert_eq!(*s.disp_t_lr.get(45, 55), 25.0);
        assert_eq!(s.gt.instance_count(), 1);
    }

    #[test]
    fn scene_flow_recovers_velocity() {
        let v = [0.2, -0.1, 0.0];
        let spec = spec_with(vec![Mover {
            rect: [40, 50, 76, 70],
            depth: 10.0,
            velocity: v,
            class: CAR,
        }]);
        let s = render_scene(&spec).unwrap();
        let d0 = depth_from_disparity(&s.disp_t_lr, &spec.rig, 0.5).unwrap();
        let d1 = depth_from_disparity(&s.disp_t1_lr, &spec.rig, 0.5).unwrap();
        let sf = scene_flow(&s.flow_fw, &d0, &d1, &spec.rig).unwrap();
        for y in 50..70 {
            for x in 40..76 {
                assert!(*sf.valid.get(x, y));
                let f = sf.flow3d.get(x, y);
                for k in 0..3 {
                    assert!((f[k] - v[k]).abs() < 1e-4, "{f:?}");
                }
            }
        }
    }

    #[test]
    fn behind_background_is_spec_error() {
        let spec = spec_with(vec![Mover {
            rect: [10, 10, 20, 20],
            depth: 150.0,
            velocity: [0.0; 3],
            class: CAR,
        }]);
        assert!(matches!(render_scene(&spec), Err(Error::Spec(_))));
    }

    #[test]
    fn scenarios_have_expected_instances() {
        for seed in 0..20 {
            let one = render_scene(&scenario_spec(Scenario::OneMover, seed, 0)).unwrap();
            assert_eq!(one.gt.instance_count(), 1);
            let two = render_scene(&scenario_spec(Scenario::TwoMovers, seed, 1)).unwrap();
            assert_eq!(two.gt.instance_count(), 2, "seed {seed}");
        }
    }

    #[test]
    fn right_view_is_consistent() {
        let spec = scenario_spec(Scenario::TwoMovers, 5, 0);
        let s = render_scene(&spec).unwrap();
        let lr = crate::geometry::lr_consistency(&s.disp_t_lr, &s.disp_t_rl, 0.5).unwrap();
        for m in &spec.movers {
            let [x0, y0, x1, y1] = m.rect;
            for y in y0..y1 {
                for x in x0..x1 {
                    assert!(*lr.get(x, y));
                }
            }
        }
    }
}
