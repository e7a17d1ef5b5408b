//! Panoptic labels and their PNG encoding.
//!
//! Semantic maps are 8-bit grayscale PNGs where [`IGNORE`] marks unlabeled
//! pixels. Instance maps are 16-bit grayscale PNGs where 0 means "no
//! instance".

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::{Tensor, TensorData};
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Semantic id reserved for "ignore".
pub const IGNORE: u8 = 255;

/// Paired semantic-class and instance-id maps.
#[derive(Debug, Clone, PartialEq)]
pub struct PanopticLabel {
    semantic: Grid<u8>,
    instance: Grid<u16>,
}

impl PanopticLabel {
    /// Builds a label, rejecting any invariant violation.
    pub fn new(semantic: Grid<u8>, instance: Grid<u16>) -> Result<Self> {
        if !semantic.same_size(&instance) {
            return Err(Error::Shape(format!(
                "semantic {:?} vs instance {:?}",
                semantic.size(),
                instance.size()
            )));
        }
        let label = Self { semantic, instance };
        if let Some(problem) = label.violation() {
            return Err(Error::Domain(problem));
        }
        Ok(label)
    }

    /// Builds a label, repairing invariant violations.
    ///
    /// Instance pixels over ignore semantics, and instance pixels disagreeing
    /// with their instance's majority class, are reset to instance 0. Gaps in
    /// the id sequence are closed preserving order. Returns the number of
    /// repaired pixels plus renumbered ids.
    pub fn repaired(semantic: Grid<u8>, mut instance: Grid<u16>) -> Result<(Self, usize)> {
        if !semantic.same_size(&instance) {
            return Err(Error::Shape(format!(
                "semantic {:?} vs instance {:?}",
                semantic.size(),
                instance.size()
            )));
        }
        let mut warnings = 0;
        for (s, i) in semantic.iter().zip(instance.as_mut_slice()) {
            if *i != 0 && *s == IGNORE {
                *i = 0;
                warnings += 1;
            }
        }

        let mut hist: BTreeMap<u16, BTreeMap<u8, usize>> = BTreeMap::new();
        for (s, i) in semantic.iter().zip(instance.iter()) {
            if *i != 0 {
                *hist.entry(*i).or_default().entry(*s).or_default() += 1;
            }
        }
        let majority: BTreeMap<u16, u8> = hist
            .iter()
            .map(|(&id, counts)| {
                // max count, ties towards the smaller class id
                let (&class, _) = counts
                    .iter()
                    .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                    .expect("non-empty histogram");
                (id, class)
            })
            .collect();
        for (s, i) in semantic.iter().zip(instance.as_mut_slice()) {
            if *i != 0 && majority[i] != *s {
                *i = 0;
                warnings += 1;
            }
        }

        let remap: BTreeMap<u16, u16> = majority
            .keys()
            .enumerate()
            .map(|(n, &id)| (id, n as u16 + 1))
            .collect();
        warnings += remap.iter().filter(|(a, b)| a != b).count();
        for i in instance.as_mut_slice() {
            if *i != 0 {
                *i = remap[i];
            }
        }
        Ok((Self { semantic, instance }, warnings))
    }

    fn violation(&self) -> Option<String> {
        let mut class_of: BTreeMap<u16, u8> = BTreeMap::new();
        for (s, i) in self.semantic.iter().zip(self.instance.iter()) {
            if *i == 0 {
                continue;
            }
            if *s == IGNORE {
                return Some(format!("instance {i} covers an ignore pixel"));
            }
            if let Some(prev) = class_of.insert(*i, *s) {
                if prev != *s {
                    return Some(format!("instance {i} spans classes {prev} and {s}"));
                }
            }
        }
        if let Some((n, id)) = class_of
            .keys()
            .enumerate()
            .find(|(n, &id)| id as usize != n + 1)
        {
            return Some(format!("instance ids not contiguous: id {id} at rank {}", n + 1));
        }
        None
    }

    pub fn semantic(&self) -> &Grid<u8> {
        &self.semantic
    }

    pub fn instance(&self) -> &Grid<u16> {
        &self.instance
    }

    pub fn width(&self) -> usize {
        self.semantic.width()
    }

    pub fn height(&self) -> usize {
        self.semantic.height()
    }

    /// Number of instances (ids are contiguous from 1).
    pub fn instance_count(&self) -> usize {
        self.instance.iter().copied().max().unwrap_or(0) as usize
    }

    /// Binary mask of every instance, index `id - 1`.
    pub fn instance_masks(&self) -> Vec<Grid<bool>> {
        (1..=self.instance_count() as u16)
            .map(|id| self.instance.map(|&i| i == id))
            .collect()
    }

    pub fn into_parts(self) -> (Grid<u8>, Grid<u16>) {
        (self.semantic, self.instance)
    }
}

pub fn write_panoptic_png(
    label: &PanopticLabel,
    sem_path: impl AsRef<Path>,
    inst_path: impl AsRef<Path>,
) -> Result<()> {
    let (w, h) = (label.width() as u32, label.height() as u32);
    let sem: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(w, h, label.semantic.as_slice().to_vec()).expect("sized buffer");
    let inst: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w, h, label.instance.as_slice().to_vec()).expect("sized buffer");
    let sem_path = sem_path.as_ref();
    let inst_path = inst_path.as_ref();
    sem.save(sem_path).map_err(|source| Error::Image {
        path: sem_path.into(),
        source,
    })?;
    inst.save(inst_path).map_err(|source| Error::Image {
        path: inst_path.into(),
        source,
    })
}

fn open_image(path: &Path) -> Result<DynamicImage> {
    if !path.exists() {
        return Err(Error::MissingInput(path.display().to_string()));
    }
    image::open(path).map_err(|source| Error::Image {
        path: path.into(),
        source,
    })
}

/// Reads a label pair, repairing invariant violations.
///
/// Returns the label and the repair count (see [`PanopticLabel::repaired`]).
pub fn read_panoptic_png(
    sem_path: impl AsRef<Path>,
    inst_path: impl AsRef<Path>,
) -> Result<(PanopticLabel, usize)> {
    let sem_path = sem_path.as_ref();
    let inst_path = inst_path.as_ref();
    let sem = match open_image(sem_path)? {
        DynamicImage::ImageLuma8(img) => img,
        other => {
            return Err(Error::Unsupported(format!(
                "{}: semantic map must be 8-bit grayscale, got {:?}",
                sem_path.display(),
                other.color()
            )))
        }
    };
    let inst = match open_image(inst_path)? {
        DynamicImage::ImageLuma16(img) => img,
        other => {
            return Err(Error::Unsupported(format!(
                "{}: instance map must be 16-bit grayscale, got {:?}",
                inst_path.display(),
                other.color()
            )))
        }
    };
    if sem.dimensions() != inst.dimensions() {
        return Err(Error::Shape(format!(
            "{} is {:?} but {} is {:?}",
            sem_path.display(),
            sem.dimensions(),
            inst_path.display(),
            inst.dimensions()
        )));
    }
    let (w, h) = (sem.width() as usize, sem.height() as usize);
    PanopticLabel::repaired(
        Grid::from_vec(w, h, sem.into_raw())?,
        Grid::from_vec(w, h, inst.into_raw())?,
    )
}

pub fn read_rgb_png(path: impl AsRef<Path>) -> Result<Grid<[u8; 3]>> {
    let img = open_image(path.as_ref())?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let px = img.pixels().map(|p| p.0).collect();
    Grid::from_vec(w, h, px)
}

pub fn write_rgb_png(path: impl AsRef<Path>, image: &Grid<[u8; 3]>) -> Result<()> {
    let path = path.as_ref();
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_raw(
        image.width() as u32,
        image.height() as u32,
        image.iter().flatten().copied().collect(),
    )
    .expect("sized buffer");
    buf.save(path).map_err(|source| Error::Image {
        path: path.into(),
        source,
    })
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Color raster for a label. Ignore pixels are black; every distinct
/// `(class, instance)` segment gets a distinct non-black color drawn from a
/// generator keyed on `(palette_seed, class, instance)`.
pub fn colorize_rgb(label: &PanopticLabel, palette_seed: u64) -> Grid<[u8; 3]> {
    let mut keys: Vec<(u8, u16)> = label
        .semantic
        .iter()
        .zip(label.instance.iter())
        .filter(|(s, _)| **s != IGNORE)
        .map(|(s, i)| (*s, *i))
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    keys.sort_unstable();

    let mut used: HashSet<[u8; 3]> = HashSet::from([[0, 0, 0]]);
    let mut palette: BTreeMap<(u8, u16), [u8; 3]> = BTreeMap::new();
    for key in keys {
        let stream = splitmix(palette_seed ^ splitmix(((key.0 as u64) << 16) | key.1 as u64));
        let mut rng = ChaCha8Rng::seed_from_u64(stream);
        let color = loop {
            let c: [u8; 3] = rng.gen();
            if used.insert(c) {
                break c;
            }
        };
        palette.insert(key, color);
    }

    Grid::from_fn(label.width(), label.height(), |x, y| {
        let s = *label.semantic.get(x, y);
        if s == IGNORE {
            [0, 0, 0]
        } else {
            palette[&(s, *label.instance.get(x, y))]
        }
    })
}

/// [`colorize_rgb`] as an `H×W×3` uint8 tensor.
pub fn colorize_panoptic(label: &PanopticLabel, palette_seed: u64) -> Tensor {
    let rgb = colorize_rgb(label, palette_seed);
    Tensor::new(
        vec![rgb.height(), rgb.width(), 3],
        TensorData::U8(rgb.iter().flatten().copied().collect()),
    )
    .expect("shape matches")
}
