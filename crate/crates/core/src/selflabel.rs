//! Label-side tools for self-training: test-time view inversion, view
//! ensembling, confidence thresholds, the drop-loss indicator, and
//! copy-paste compositing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{resize_plane, Grid, Mask};
use crate::io::{PanopticLabel, IGNORE};
use crate::semantic::SoftSemantics;

/// A test-time augmentation: rescale, then optionally mirror.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewTransform {
    pub scale: f64,
    pub hflip: bool,
}

impl ViewTransform {
    pub const IDENTITY: Self = Self {
        scale: 1.0,
        hflip: false,
    };

    pub fn new(scale: f64, hflip: bool) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Parameter(format!("view scale must be > 0, got {scale}")));
        }
        Ok(Self { scale, hflip })
    }

    /// The three scales 0.75, 1, 1.25, each with and without mirroring.
    pub fn standard_set() -> Vec<Self> {
        [0.75, 1.0, 1.25]
            .into_iter()
            .flat_map(|scale| [false, true].map(|hflip| Self { scale, hflip }))
            .collect()
    }

    /// Size of the transformed view of a `width × height` image.
    pub fn view_size(&self, width: usize, height: usize) -> (usize, usize) {
        let s = |v: usize| ((v as f64 * self.scale).round() as usize).max(1);
        (s(width), s(height))
    }

    pub fn apply_semantics(&self, p: &SoftSemantics) -> SoftSemantics {
        let (w, h) = self.view_size(p.width(), p.height());
        let scaled = p.resize(w, h);
        if self.hflip {
            scaled.flip_horizontal()
        } else {
            scaled
        }
    }

    /// Maps a prediction made on this view back to the canonical frame.
    pub fn invert_semantics(&self, p: &SoftSemantics, width: usize, height: usize) -> SoftSemantics {
        let unflipped = if self.hflip { p.flip_horizontal() } else { p.clone() };
        unflipped.resize(width, height)
    }

    pub fn apply_instances(&self, s: &ScoredInstances) -> ScoredInstances {
        let Some(first) = s.masks.first() else {
            return s.clone();
        };
        let (w, h) = self.view_size(first.width(), first.height());
        self.map_instances(s, |m| {
            let scaled = resize_soft(m, w, h);
            if self.hflip {
                scaled.flip_horizontal()
            } else {
                scaled
            }
        })
    }

    pub fn invert_instances(&self, s: &ScoredInstances, width: usize, height: usize) -> ScoredInstances {
        self.map_instances(s, |m| {
            let unflipped = if self.hflip { m.flip_horizontal() } else { m.clone() };
            resize_soft(&unflipped, width, height)
        })
    }

    fn map_instances(&self, s: &ScoredInstances, f: impl Fn(&Grid<f64>) -> Grid<f64>) -> ScoredInstances {
        ScoredInstances {
            masks: s.masks.iter().map(f).collect(),
            kappa: s.kappa.clone(),
        }
    }
}

fn resize_soft(m: &Grid<f64>, w: usize, h: usize) -> Grid<f64> {
    if m.size() == (w, h) {
        return m.clone();
    }
    let v = resize_plane(m.as_slice(), m.width(), m.height(), w, h);
    Grid::from_vec(w, h, v.into_iter().map(|x| x.clamp(0.0, 1.0)).collect()).expect("resize keeps size")
}

/// Soft instance masks in `[0, 1]` with one confidence each.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoredInstances {
    pub masks: Vec<Grid<f64>>,
    pub kappa: Vec<f64>,
}

impl ScoredInstances {
    pub fn new(masks: Vec<Grid<f64>>, kappa: Vec<f64>) -> Result<Self> {
        if masks.len() != kappa.len() {
            return Err(Error::Shape(format!("{} masks vs {} confidences", masks.len(), kappa.len())));
        }
        if let Some(k) = kappa.iter().find(|k| !(0.0..=1.0).contains(*k)) {
            return Err(Error::Domain(format!("confidence {k} outside [0, 1]")));
        }
        if masks.iter().flat_map(|m| m.iter()).any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain("soft mask value outside [0, 1]".into()));
        }
        Ok(Self { masks, kappa })
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Masks binarized at 0.5.
    pub fn binarized(&self) -> Vec<Mask> {
        self.masks.iter().map(binarize).collect()
    }
}

pub fn binarize(m: &Grid<f64>) -> Mask {
    m.map(|&v| v >= 0.5)
}

/// Per-pixel mean of the aligned view predictions.
pub fn ensemble_semantics(preds: &[SoftSemantics]) -> Result<SoftSemantics> {
    let Some(first) = preds.first() else {
        return Err(Error::Parameter("no views to ensemble".into()));
    };
    let mut acc = vec![0.0; first.as_slice().len()];
    for (i, p) in preds.iter().enumerate() {
        if p.k() != first.k() || p.size() != first.size() {
            return Err(Error::Shape(format!("view {i} differs in shape from view 0")));
        }
        for (a, v) in acc.iter_mut().zip(p.as_slice()) {
            *a += v;
        }
    }
    let n = preds.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    SoftSemantics::from_scores(first.k(), first.width(), first.height(), acc)
}

/// Merges instance predictions of several aligned views.
///
/// All masks are visited by descending confidence (ties by view, then
/// index). A mask joins the group whose first member overlaps it best, if
/// that binarized IoU is at least `group_iou`; otherwise it opens a group.
/// Each group yields the mean soft mask and mean confidence of its members.
pub fn ensemble_instances(views: &[ScoredInstances], group_iou: f64) -> Result<ScoredInstances> {
    let mut all: Vec<(f64, &Grid<f64>)> = Vec::new();
    for v in views {
        if v.masks.len() != v.kappa.len() {
            return Err(Error::Shape("view has unequal mask and confidence counts".into()));
        }
        all.extend(v.kappa.iter().copied().zip(&v.masks));
    }
    if let Some((_, first)) = all.first() {
        if all.iter().any(|(_, m)| m.size() != first.size()) {
            return Err(Error::Shape("instance masks differ in size".into()));
        }
    }
    // stable sort keeps view/index order among equal confidences
    all.sort_by(|a, b| b.0.total_cmp(&a.0));

    struct Group<'a> {
        rep: Mask,
        members: Vec<(f64, &'a Grid<f64>)>,
    }
    let mut groups: Vec<Group> = Vec::new();
    for (kappa, mask) in all {
        let bin = binarize(mask);
        let best = groups
            .iter()
            .enumerate()
            .map(|(g, group)| (g, group.rep.iou(&bin)))
            .filter(|&(_, iou)| iou >= group_iou)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        match best {
            Some((g, _)) => groups[g].members.push((kappa, mask)),
            None => groups.push(Group {
                rep: bin,
                members: vec![(kappa, mask)],
            }),
        }
    }

    let mut out = ScoredInstances::default();
    for g in groups {
        let n = g.members.len() as f64;
        let (w, h) = g.members[0].1.size();
        let mut mean = Grid::filled(w, h, 0.0);
        for (_, m) in &g.members {
            for (a, v) in mean.as_mut_slice().iter_mut().zip(m.iter()) {
                *a += v;
            }
        }
        mean.as_mut_slice().iter_mut().for_each(|a| *a /= n);
        out.masks.push(mean);
        out.kappa.push(g.members.iter().map(|(k, _)| k).sum::<f64>() / n);
    }
    Ok(out)
}

/// Keeps instances with `κ > gamma`, in order.
pub fn threshold_instances(s: &ScoredInstances, gamma: f64) -> ScoredInstances {
    let (masks, kappa) = s
        .masks
        .iter()
        .zip(&s.kappa)
        .filter(|(_, &k)| k > gamma)
        .map(|(m, &k)| (m.clone(), k))
        .unzip();
    ScoredInstances { masks, kappa }
}

/// Confidence-filtered hard labels with class-relative thresholds.
///
/// `ζ_k = zeta_hat · max P_k`; a pixel keeps its argmax class `k*` when
/// `P_k* ≥ ζ_k*` and is ignore (255) otherwise.
pub fn semantic_self_label(p: &SoftSemantics, zeta_hat: f64) -> Result<Grid<u8>> {
    if !(0.0..=1.0).contains(&zeta_hat) {
        return Err(Error::Parameter(format!("zeta_hat must lie in [0, 1], got {zeta_hat}")));
    }
    if p.k() > IGNORE as usize {
        return Err(Error::Capacity(format!("{} classes do not fit 8-bit labels", p.k())));
    }
    let zeta: Vec<f64> = (0..p.k())
        .map(|c| zeta_hat * p.channel(c).iter().cloned().fold(0.0, f64::max))
        .collect();
    let arg = p.argmax();
    Ok(Grid::from_fn(p.width(), p.height(), |x, y| {
        let c = *arg.get(x, y);
        if p.get(c, x, y) >= zeta[c] {
            c as u8
        } else {
            IGNORE
        }
    }))
}

/// Whether each prediction overlaps some pseudo mask with IoU above `tau_iou`.
pub fn drop_loss_indicator(preds: &[Mask], pseudo: &[Mask], tau_iou: f64) -> Vec<bool> {
    preds
        .iter()
        .map(|p| pseudo.iter().map(|q| p.iou(q)).fold(0.0, f64::max) > tau_iou)
        .collect()
}

/// An object that can be pasted: colour patch, soft mask, and class.
#[derive(Debug, Clone, PartialEq)]
pub struct BankEntry {
    pub patch: Grid<[u8; 3]>,
    pub mask: Grid<f64>,
    pub class: u8,
}

/// Record of one paste.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Paste {
    pub entry: usize,
    pub col: usize,
    pub row: usize,
}

/// Pastes between `n_range.0` and `n_range.1` bank objects onto the target.
///
/// Entries are drawn with replacement and placed uniformly so they fit the
/// image. Pixels where the mask is at least 0.5 take the patch colour and a
/// new instance of the entry's class; later pastes cover earlier ones.
/// Pasted instances are numbered after the largest existing id. Ids are
/// renumbered (order kept) only if some instance ends up fully covered.
pub fn copy_paste(
    image: &Grid<[u8; 3]>,
    label: &PanopticLabel,
    bank: &[BankEntry],
    seed: u64,
    n_range: (usize, usize),
) -> Result<(Grid<[u8; 3]>, PanopticLabel, Vec<Paste>)> {
    if bank.is_empty() {
        return Err(Error::Parameter("copy-paste bank is empty".into()));
    }
    if n_range.0 == 0 || n_range.0 > n_range.1 {
        return Err(Error::Parameter(format!("invalid paste count range {n_range:?}")));
    }
    let (w, h) = image.size();
    if (label.width(), label.height()) != (w, h) {
        return Err(Error::Shape("image and label differ in size".into()));
    }
    for (i, e) in bank.iter().enumerate() {
        let (pw, ph) = e.patch.size();
        if e.mask.size() != (pw, ph) {
            return Err(Error::Shape(format!("bank entry {i}: patch and mask differ in size")));
        }
        if pw > w || ph > h || pw == 0 || ph == 0 {
            return Err(Error::Parameter(format!("bank entry {i} ({pw}×{ph}) does not fit {w}×{h}")));
        }
        if e.class == IGNORE {
            return Err(Error::Parameter(format!("bank entry {i} has the ignore class")));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(n_range.0..=n_range.1);
    let mut out_image = image.clone();
    let mut sem = label.semantic().clone();
    let mut inst: Grid<u32> = label.instance().map(|&v| v as u32);
    let base = label.instance().iter().copied().max().unwrap_or(0) as u32;
    let mut pastes = Vec::with_capacity(n);
    for p in 0..n {
        let entry = rng.gen_range(0..bank.len());
        let e = &bank[entry];
        let (pw, ph) = e.patch.size();
        let col = rng.gen_range(0..=w - pw);
        let row = rng.gen_range(0..=h - ph);
        pastes.push(Paste { entry, col, row });
        let id = base + 1 + p as u32;
        for y in 0..ph {
            for x in 0..pw {
                if *e.mask.get(x, y) >= 0.5 {
                    out_image.set(col + x, row + y, *e.patch.get(x, y));
                    sem.set(col + x, row + y, e.class);
                    inst.set(col + x, row + y, id);
                }
            }
        }
    }

    // renumber only when an id vanished
    let max_id = base + n as u32;
    let mut present = vec![false; max_id as usize + 1];
    for &v in inst.iter() {
        present[v as usize] = true;
    }
    let mut remap = vec![0u32; max_id as usize + 1];
    let mut next = 0u32;
    for id in 1..=max_id as usize {
        if present[id] {
            next += 1;
            remap[id] = next;
        }
    }
    if next > u16::MAX as u32 {
        return Err(Error::Capacity(format!("{next} instances exceed 65535")));
    }
    let inst = inst.map(|&v| remap[v as usize] as u16);
    Ok((out_image, PanopticLabel::new(sem, inst)?, pastes))
}
