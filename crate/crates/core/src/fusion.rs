//! Thing/stuff partition of pseudo classes and panoptic label assembly.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Mask};
use crate::io::{PanopticLabel, IGNORE};

/// Per-class pixel counts under instance masks and overall.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThingStuffStats {
    pub inside: Vec<u64>,
    pub total: Vec<u64>,
}

impl ThingStuffStats {
    pub fn new(k: usize) -> Self {
        Self {
            inside: vec![0; k],
            total: vec![0; k],
        }
    }

    pub fn k(&self) -> usize {
        self.total.len()
    }

    /// Adds one image's counts.
    pub fn accumulate(&mut self, semantic: &Grid<usize>, masks: &[Mask]) -> Result<()> {
        let k = self.k();
        let (w, h) = semantic.size();
        let mut covered: Mask = Grid::filled(w, h, false);
        for (i, m) in masks.iter().enumerate() {
            if m.size() != (w, h) {
                return Err(Error::Shape(format!("mask {i} differs in size from the semantic map")));
            }
            for (c, &b) in covered.as_mut_slice().iter_mut().zip(m.iter()) {
                *c |= b;
            }
        }
        for (&class, &under) in semantic.iter().zip(covered.iter()) {
            if class >= k {
                return Err(Error::Domain(format!("class id {class} ≥ K = {k}")));
            }
            self.total[class] += 1;
            self.inside[class] += under as u64;
        }
        Ok(())
    }

    /// Sums partial counts, e.g. from parallel workers.
    pub fn merge(mut self, other: &Self) -> Result<Self> {
        if other.k() != self.k() {
            return Err(Error::Shape(format!("merging stats over {} and {} classes", self.k(), other.k())));
        }
        for (a, b) in self.inside.iter_mut().zip(&other.inside) {
            *a += b;
        }
        for (a, b) in self.total.iter_mut().zip(&other.total) {
            *a += b;
        }
        Ok(self)
    }

    /// Fraction of each class's pixels under a mask; 0 for absent classes.
    pub fn ratios(&self) -> Vec<f64> {
        self.inside
            .iter()
            .zip(&self.total)
            .map(|(&i, &t)| if t == 0 { 0.0 } else { i as f64 / t as f64 })
            .collect()
    }
}

/// Counts over a stream of `(argmax map, masks)` pairs.
pub fn thing_stuff_stats<'a>(
    k: usize,
    frames: impl IntoIterator<Item = (&'a Grid<usize>, &'a [Mask])>,
) -> Result<ThingStuffStats> {
    let mut stats = ThingStuffStats::new(k);
    for (sem, masks) in frames {
        stats.accumulate(sem, masks)?;
    }
    Ok(stats)
}

/// File name of the thing/stuff sidecar next to a label directory.
pub const SPLIT_FILE: &str = "thing_stuff.json";

#[derive(Debug, Clone, PartialEq)]
pub struct ThingStuffSplit {
    pub ratio: Vec<f64>,
    pub is_thing: Vec<bool>,
    pub threshold: f64,
}

#[derive(Serialize, Deserialize)]
struct ClassEntry {
    is_thing: bool,
    ratio: f64,
}

impl ThingStuffSplit {
    pub fn k(&self) -> usize {
        self.is_thing.len()
    }

    pub fn thing_classes(&self) -> Vec<usize> {
        (0..self.k()).filter(|&c| self.is_thing[c]).collect()
    }

    /// `{class_id: {is_thing, ratio}}` JSON sidecar.
    pub fn to_json(&self) -> serde_json::Value {
        let map: BTreeMap<String, ClassEntry> = (0..self.k())
            .map(|c| {
                (
                    c.to_string(),
                    ClassEntry {
                        is_thing: self.is_thing[c],
                        ratio: self.ratio[c],
                    },
                )
            })
            .collect();
        serde_json::to_value(map).expect("plain map serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.to_json()).expect("plain map serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Reads a sidecar written by [`ThingStuffSplit::save`]. The threshold is
    /// not stored and is reported as NaN.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let map: BTreeMap<String, ClassEntry> = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let mut entries: Vec<(usize, ClassEntry)> = Vec::with_capacity(map.len());
        for (key, entry) in map {
            let id: usize = key
                .parse()
                .map_err(|_| Error::Format(format!("{}: class key {key:?} is not an integer", path.display())))?;
            entries.push((id, entry));
        }
        entries.sort_by_key(|(id, _)| *id);
        if entries.iter().enumerate().any(|(i, (id, _))| i != *id) {
            return Err(Error::Format(format!("{}: class ids are not 0..K", path.display())));
        }
        Ok(Self {
            ratio: entries.iter().map(|(_, e)| e.ratio).collect(),
            is_thing: entries.iter().map(|(_, e)| e.is_thing).collect(),
            threshold: f64::NAN,
        })
    }
}

/// Classes with `ratio ≥ psi_ts` are things. Classes that never occur are
/// stuff.
pub fn split_thing_stuff(stats: &ThingStuffStats, psi_ts: f64) -> Result<ThingStuffSplit> {
    if !(psi_ts > 0.0 && psi_ts < 1.0) {
        return Err(Error::Parameter(format!("psi_ts must lie in (0, 1), got {psi_ts}")));
    }
    let ratio = stats.ratios();
    let is_thing = ratio
        .iter()
        .zip(&stats.total)
        .map(|(&r, &t)| t > 0 && r >= psi_ts)
        .collect();
    Ok(ThingStuffSplit {
        ratio,
        is_thing,
        threshold: psi_ts,
    })
}

/// Most frequent class under each mask; ties go to the smaller id.
pub fn align_instance_semantics(semantic: &Grid<usize>, masks: &[Mask]) -> Result<Vec<usize>> {
    masks
        .iter()
        .enumerate()
        .map(|(i, m)| {
            if m.size() != semantic.size() {
                return Err(Error::Shape(format!("mask {i} differs in size from the semantic map")));
            }
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for (&c, _) in semantic.iter().zip(m.iter()).filter(|(_, b)| **b) {
                *counts.entry(c).or_default() += 1;
            }
            counts
                .into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|(c, _)| c)
                .ok_or_else(|| Error::Parameter(format!("mask {i} is empty")))
        })
        .collect()
}

/// Builds the panoptic pseudo label for one image.
///
/// Masks aligned to a thing class become instances `1..` in input order and
/// force their class onto all their pixels. Masks aligned to a stuff class
/// are dropped. Remaining thing-class pixels become ignore.
pub fn assemble_panoptic(
    semantic: &Grid<usize>,
    masks: &[Mask],
    mask_classes: &[usize],
    split: &ThingStuffSplit,
) -> Result<PanopticLabel> {
    if masks.len() != mask_classes.len() {
        return Err(Error::Shape(format!(
            "{} masks vs {} mask classes",
            masks.len(),
            mask_classes.len()
        )));
    }
    let k = split.k();
    if k > IGNORE as usize {
        return Err(Error::Capacity(format!("{k} pseudo classes do not fit 8-bit labels")));
    }
    let kept: Vec<usize> = (0..masks.len()).filter(|&i| {
        mask_classes[i] < k && split.is_thing[mask_classes[i]]
    }).collect();
    if kept.len() > u16::MAX as usize {
        return Err(Error::Capacity(format!("{} instances exceed 65535", kept.len())));
    }
    if let Some(&c) = mask_classes.iter().find(|&&c| c >= k) {
        return Err(Error::Domain(format!("mask class {c} ≥ K = {k}")));
    }

    let (w, h) = semantic.size();
    let mut sem: Grid<u8> = Grid::filled(w, h, 0);
    for (o, &c) in sem.as_mut_slice().iter_mut().zip(semantic.iter()) {
        if c >= k {
            return Err(Error::Domain(format!("class id {c} ≥ K = {k}")));
        }
        *o = if split.is_thing[c] { IGNORE } else { c as u8 };
    }
    let mut inst: Grid<u16> = Grid::filled(w, h, 0);
    for (id, &i) in kept.iter().enumerate() {
        let m = &masks[i];
        if m.size() != (w, h) {
            return Err(Error::Shape(format!("mask {i} differs in size from the semantic map")));
        }
        for ((s, t), _) in sem
            .as_mut_slice()
            .iter_mut()
            .zip(inst.as_mut_slice().iter_mut())
            .zip(m.iter())
            .filter(|(_, b)| **b)
        {
            if *t != 0 {
                return Err(Error::Parameter(format!("mask {i} overlaps an earlier mask")));
            }
            *s = mask_classes[i] as u8;
            *t = id as u16 + 1;
        }
    }
    PanopticLabel::new(sem, inst)
}
