//! End-to-end drivers behind the command-line subcommands.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::eval::{
    apply_matching, average_precision, contingency, match_classes, remap_contingency, semantic_metrics, ApImage,
    AreaRange, ClassMatching, ClassPq, ContingencyMatrix, PqAccumulator,
};
use crate::fusion::{
    align_instance_semantics, assemble_panoptic, split_thing_stuff, ThingStuffSplit, ThingStuffStats, SPLIT_FILE,
};
use crate::geometry::{
    combine_validity, depth_from_disparity, fb_consistency, flow_from_tensor, lr_consistency, scene_flow, CameraRig,
    DepthMap,
};
use crate::grid::{Grid, Mask};
use crate::io::{
    colorize_rgb, read_npy, read_panoptic_png, read_rgb_png, write_panoptic_png, write_rgb_png, DatasetManifest,
    FrameRecord, PanopticLabel, Tensor, IGNORE,
};
use crate::motion::instance_pseudo_masks;
use crate::selflabel::{
    ensemble_instances, ensemble_semantics, semantic_self_label, threshold_instances, ScoredInstances, ViewTransform,
};
use crate::semantic::{
    assemble_sliding_window, cosine_kmeans_assign, cosine_kmeans_fit, crf_refine, depth_guided_fuse, window_origins,
    Centroids, FeatureMap, SoftSemantics, WindowOrigin,
};

/// Marker left in an output directory whose run did not finish cleanly.
pub const PARTIAL_MARKER: &str = ".partial";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn sem_file(stem: &str) -> String {
    format!("{stem}_sem.png")
}

pub fn inst_file(stem: &str) -> String {
    format!("{stem}_inst.png")
}

pub fn scores_file(stem: &str) -> String {
    format!("{stem}_scores.json")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSummary {
    pub name: String,
    /// Fraction of pixels with valid scene flow.
    pub valid_fraction: f64,
    /// Moving-object masks before fusion.
    pub motion_masks: usize,
    /// Instances in the written label.
    pub instances: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFailure {
    pub name: String,
    pub error: String,
    /// False when the failure is internal rather than caused by the input.
    pub input_error: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub k: usize,
    pub thing_classes: Vec<usize>,
    pub class_ratios: Vec<f64>,
    pub frames: Vec<FrameSummary>,
    pub failed: Vec<FrameFailure>,
    pub seconds: f64,
}

impl RunSummary {
    pub fn is_complete(&self) -> bool {
        self.failed.is_empty()
    }
}

struct FrameArtifacts {
    stem: String,
    semantic: Grid<usize>,
    masks: Vec<Mask>,
    scores: Vec<f64>,
    valid_fraction: f64,
    seconds: f64,
}

fn read_flow(path: &Path) -> Result<Grid<[f64; 2]>> {
    flow_from_tensor(&read_npy(path)?)
}

fn read_disp(path: &Path) -> Result<Grid<f64>> {
    read_npy(path)?.to_grid()
}

fn read_probs(path: &Path) -> Result<SoftSemantics> {
    SoftSemantics::from_tensor(&read_npy(path)?)
}

fn has_predictions(f: &FrameRecord) -> bool {
    f.low_res_pred.is_some() && !f.window_preds.is_empty()
}

fn frame_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add((index as u64) << 20)
}

/// Fits pseudo-class centroids on features pooled over every frame that
/// lacks precomputed predictions.
fn fit_centroids(manifest: &DatasetManifest, config: &PipelineConfig) -> Result<Option<Centroids>> {
    let paths: Vec<&PathBuf> = manifest
        .frames
        .iter()
        .filter(|f| !has_predictions(f))
        .filter_map(|f| f.features.as_ref())
        .collect();
    if paths.is_empty() {
        return Ok(None);
    }
    let maps: Vec<FeatureMap> = paths
        .iter()
        .map(|p| FeatureMap::from_tensor(&read_npy(p)?))
        .collect::<Result<_>>()?;
    let dim = maps[0].channels();
    if let Some(m) = maps.iter().find(|m| m.channels() != dim) {
        return Err(Error::Shape(format!(
            "feature maps disagree on channel count ({} vs {dim})",
            m.channels()
        )));
    }
    let total: usize = maps.iter().map(|m| m.size().0 * m.size().1).sum();
    let stride = total.div_ceil(config.semantic.kmeans_samples).max(1);
    let mut rows = Vec::new();
    let mut index = 0usize;
    for m in &maps {
        for row in m.to_rows().chunks(dim) {
            if index.is_multiple_of(stride) {
                rows.extend_from_slice(row);
            }
            index += 1;
        }
    }
    let fit = cosine_kmeans_fit(
        &rows,
        dim,
        config.semantic.k,
        config.semantic.kmeans_iters,
        config.seeds.base_seed,
    )?;
    Ok(Some(fit.centroids))
}

/// High- and low-resolution soft predictions emulated from a feature map:
/// sliding-window assignment over the full map, and assignment of the
/// average-pooled map.
fn predictions_from_features(
    features: &FeatureMap,
    centroids: &Centroids,
    config: &PipelineConfig,
) -> Result<(SoftSemantics, SoftSemantics)> {
    let s = &config.semantic;
    let (w, h) = features.size();
    let side = |v: usize, f: f64| ((v as f64 * f).ceil() as usize).clamp(1, v);
    let (ww, wh) = (side(w, s.window_fraction), side(h, s.window_fraction));
    let (sx, sy) = (side(ww, s.stride_fraction), side(wh, s.stride_fraction));
    let windows = window_origins(w, h, ww, wh, sx, sy)?
        .into_iter()
        .map(|o| {
            let crop = features.crop(o.col, o.row, ww, wh)?;
            Ok((cosine_kmeans_assign(&crop, centroids, s.temperature)?, o))
        })
        .collect::<Result<Vec<_>>>()?;
    let high = assemble_sliding_window(&windows, w, h)?;
    let low = cosine_kmeans_assign(&features.avg_pool(s.low_res_factor)?, centroids, s.temperature)?;
    Ok((high, low))
}

fn frame_semantics(
    frame: &FrameRecord,
    image: &Grid<[u8; 3]>,
    depth: &DepthMap,
    centroids: Option<&Centroids>,
    config: &PipelineConfig,
) -> Result<Grid<usize>> {
    let (w, h) = image.size();
    let (high, low) = if has_predictions(frame) {
        let low = read_probs(frame.low_res_pred.as_ref().expect("checked"))?;
        let windows = frame
            .window_preds
            .iter()
            .map(|wp| {
                let origin = WindowOrigin {
                    row: wp.origin[0],
                    col: wp.origin[1],
                };
                Ok((read_probs(&wp.path)?, origin))
            })
            .collect::<Result<Vec<_>>>()?;
        (assemble_sliding_window(&windows, w, h)?, low)
    } else {
        let path = frame
            .features
            .as_ref()
            .ok_or_else(|| Error::MissingInput("frame has neither features nor predictions".into()))?;
        let centroids = centroids.expect("centroids are fitted whenever a frame relies on features");
        let features = FeatureMap::from_tensor(&read_npy(path)?)?;
        predictions_from_features(&features, centroids, config)?
    };
    if high.k() != config.semantic.k || low.k() != config.semantic.k {
        return Err(Error::Shape(format!(
            "predictions carry {} / {} classes, config expects {}",
            high.k(),
            low.k(),
            config.semantic.k
        )));
    }
    let fused = depth_guided_fuse(&low, &high.resize(w, h), depth)?;
    let refined = crf_refine(image, &fused, &config.semantic.crf)?;
    Ok(refined.argmax())
}

fn process_frame(
    index: usize,
    frame: &FrameRecord,
    rig: &CameraRig,
    centroids: Option<&Centroids>,
    config: &PipelineConfig,
) -> Result<FrameArtifacts> {
    let start = Instant::now();
    let g = &config.geometry;
    let image = read_rgb_png(&frame.left_t)?;
    let flow_fw = read_flow(&frame.flow_fw)?;
    let flow_bw = read_flow(&frame.flow_bw)?;
    let d_t_lr = read_disp(&frame.disp_t_lr)?;
    let d_t_rl = read_disp(&frame.disp_t_rl)?;
    let d_t1_lr = read_disp(&frame.disp_t1_lr)?;
    let d_t1_rl = read_disp(&frame.disp_t1_rl)?;
    let size = image.size();
    for (name, s) in [
        ("flow_fw", flow_fw.size()),
        ("flow_bw", flow_bw.size()),
        ("disp_t_lr", d_t_lr.size()),
        ("disp_t_rl", d_t_rl.size()),
        ("disp_t1_lr", d_t1_lr.size()),
        ("disp_t1_rl", d_t1_rl.size()),
    ] {
        if s != size {
            return Err(Error::Shape(format!("{name} is {s:?}, image is {size:?}")));
        }
    }

    let depth_t = depth_from_disparity(&d_t_lr, rig, g.min_disp)?;
    let mut depth_t1 = depth_from_disparity(&d_t1_lr, rig, g.min_disp)?;
    let lr_t1 = lr_consistency(&d_t1_lr, &d_t1_rl, g.lr_tol)?;
    depth_t1.valid = depth_t1.valid.and(&lr_t1);
    let fb = fb_consistency(&flow_fw, &flow_bw, g.alpha1, g.alpha2)?;
    let lr_t = lr_consistency(&d_t_lr, &d_t_rl, g.lr_tol)?;
    let mut sf = scene_flow(&flow_fw, &depth_t, &depth_t1, rig)?;
    sf.restrict(&combine_validity(&[&fb, &lr_t])?)?;
    let valid_fraction = sf.valid_count() as f64 / (size.0 * size.1) as f64;

    let seed = frame_seed(config.seeds.base_seed, index);
    let masks = instance_pseudo_masks(&sf, rig, &config.motion, config.motion.n_runs, seed)?;
    let semantic = frame_semantics(frame, &image, &depth_t, centroids, config)?;
    Ok(FrameArtifacts {
        stem: frame.stem(index),
        semantic,
        masks: masks.masks,
        scores: masks.scores,
        valid_fraction,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("plain data serializes");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Stage-1 pseudo labels for every frame of `manifest`.
///
/// Pass one computes motion masks and refined semantics per frame; the
/// thing/stuff split is derived from statistics pooled over all frames; pass
/// two fuses and writes `<stem>_sem.png`, `<stem>_inst.png`, and
/// `<stem>_scores.json` plus the split sidecar and a run summary. Frames that
/// fail are listed in the summary and in a `.partial` marker; the other
/// frames are still written.
pub fn pseudo_label(manifest: &DatasetManifest, config: &PipelineConfig) -> Result<RunSummary> {
    let start = Instant::now();
    config.validate()?;
    manifest.validate()?;
    if manifest.frames.is_empty() {
        return Err(Error::MissingInput("no frames".into()));
    }
    let out = &manifest.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let marker = out.join(PARTIAL_MARKER);
    if marker.exists() {
        fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    }

    let centroids = fit_centroids(manifest, config)?;
    let results: Vec<Result<FrameArtifacts>> = manifest
        .frames
        .par_iter()
        .enumerate()
        .map(|(i, f)| process_frame(i, f, &manifest.camera, centroids.as_ref(), config))
        .collect();

    let k = config.semantic.k;
    let mut failed = Vec::new();
    let mut done = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(a) => done.push(a),
            Err(e) => failed.push(FrameFailure {
                name: manifest.frames[i].stem(i),
                error: e.to_string(),
                input_error: e.is_input_error(),
            }),
        }
    }

    let stats = done
        .par_iter()
        .map(|a| {
            let mut s = ThingStuffStats::new(k);
            s.accumulate(&a.semantic, &a.masks)?;
            Ok(s)
        })
        .try_reduce(|| ThingStuffStats::new(k), |a, b| a.merge(&b))?;
    let split = split_thing_stuff(&stats, config.fusion.psi_ts)?;
    split.save(out.join(SPLIT_FILE))?;

    let written: Vec<Result<FrameSummary>> = done
        .par_iter()
        .map(|a| {
            let classes = align_instance_semantics(&a.semantic, &a.masks)?;
            let label = assemble_panoptic(&a.semantic, &a.masks, &classes, &split)?;
            let kept: Vec<f64> = classes
                .iter()
                .zip(&a.scores)
                .filter(|(c, _)| split.is_thing[**c])
                .map(|(_, s)| *s)
                .collect();
            write_panoptic_png(&label, out.join(sem_file(&a.stem)), out.join(inst_file(&a.stem)))?;
            write_json(&out.join(scores_file(&a.stem)), &kept)?;
            Ok(FrameSummary {
                name: a.stem.clone(),
                valid_fraction: a.valid_fraction,
                motion_masks: a.masks.len(),
                instances: label.instance_count(),
                seconds: a.seconds,
            })
        })
        .collect();
    let mut frames = Vec::new();
    for (a, r) in done.iter().zip(written) {
        match r {
            Ok(s) => frames.push(s),
            Err(e) => failed.push(FrameFailure {
                name: a.stem.clone(),
                error: e.to_string(),
                input_error: e.is_input_error(),
            }),
        }
    }

    let summary = RunSummary {
        k,
        thing_classes: split.thing_classes(),
        class_ratios: split.ratio.clone(),
        frames,
        failed,
        seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    if !summary.is_complete() {
        write_json(&marker, &summary.failed)?;
    }
    Ok(summary)
}

/// One augmented view of a frame inside a self-label bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleView {
    pub scale: f64,
    pub hflip: bool,
    /// `K×h×w` probabilities.
    pub semantics: PathBuf,
    /// `J×h×w` soft masks.
    #[serde(default)]
    pub instances: Option<PathBuf>,
    /// One confidence per mask.
    #[serde(default)]
    pub kappa: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleFrame {
    pub name: String,
    /// Canonical (un-augmented) size.
    pub width: usize,
    pub height: usize,
    pub views: Vec<BundleView>,
}

/// `bundle.json` of a prediction bundle; paths are relative to the bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionBundle {
    pub frames: Vec<BundleFrame>,
}

pub const BUNDLE_FILE: &str = "bundle.json";

impl PredictionBundle {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(BUNDLE_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut bundle: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.clone(),
            source,
        })?;
        for v in bundle.frames.iter_mut().flat_map(|f| f.views.iter_mut()) {
            v.semantics = dir.join(&v.semantics);
            if let Some(p) = v.instances.as_mut() {
                *p = dir.join(&*p);
            }
        }
        Ok(bundle)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(BUNDLE_FILE), self)
    }
}

fn read_soft_masks(path: &Path, kappa: &[f64]) -> Result<ScoredInstances> {
    let t = read_npy(path)?;
    let masks = match t.shape() {
        [0, ..] => Vec::new(),
        _ => {
            let (j, h, w, v) = t.to_planes()?;
            (0..j)
                .map(|i| Grid::from_vec(w, h, v[i * w * h..(i + 1) * w * h].to_vec()))
                .collect::<Result<_>>()?
        }
    };
    ScoredInstances::new(masks, kappa.to_vec())
}

/// Self label of one frame from its aligned, ensembled views.
pub fn self_label_frame(
    views: &[(ViewTransform, SoftSemantics, Option<ScoredInstances>)],
    width: usize,
    height: usize,
    config: &PipelineConfig,
) -> Result<(PanopticLabel, Vec<f64>)> {
    let l = &config.selflabel;
    let sems: Vec<SoftSemantics> = views
        .iter()
        .map(|(t, p, _)| t.invert_semantics(p, width, height))
        .collect();
    let p = ensemble_semantics(&sems)?;
    let aligned: Vec<ScoredInstances> = views
        .iter()
        .filter_map(|(t, _, s)| s.as_ref().map(|s| t.invert_instances(s, width, height)))
        .collect();
    let inst = threshold_instances(&ensemble_instances(&aligned, l.group_iou)?, l.gamma);

    let mut sem = semantic_self_label(&p, l.zeta_hat)?;
    let hard = p.argmax();
    let mut ids: Grid<u16> = Grid::filled(width, height, 0);
    let mut kappa = Vec::new();
    let mut order: Vec<usize> = (0..inst.len()).collect();
    order.sort_by(|&a, &b| inst.kappa[b].total_cmp(&inst.kappa[a]).then(a.cmp(&b)));
    let binary = inst.binarized();
    for j in order {
        let owned: Vec<usize> = binary[j]
            .iter()
            .enumerate()
            .filter(|(i, b)| **b && ids.as_slice()[*i] == 0)
            .map(|(i, _)| i)
            .collect();
        if owned.is_empty() {
            continue;
        }
        let mut votes = vec![0usize; p.k()];
        for &i in &owned {
            votes[hard.as_slice()[i]] += 1;
        }
        let class = (0..p.k()).max_by(|&a, &b| votes[a].cmp(&votes[b]).then(b.cmp(&a))).expect("k ≥ 1");
        let id = kappa.len() as u16 + 1;
        for &i in &owned {
            ids.as_mut_slice()[i] = id;
            sem.as_mut_slice()[i] = class as u8;
        }
        kappa.push(inst.kappa[j]);
    }
    Ok((PanopticLabel::new(sem, ids)?, kappa))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfLabelSummary {
    pub frames: Vec<String>,
    pub instances: Vec<usize>,
    pub ignore_fraction: Vec<f64>,
}

/// Self labels for every frame of the bundle in `bundle_dir`, written to `out_dir`.
pub fn self_label(bundle_dir: &Path, out_dir: &Path, config: &PipelineConfig) -> Result<SelfLabelSummary> {
    config.validate()?;
    let bundle = PredictionBundle::load(bundle_dir)?;
    if bundle.frames.is_empty() {
        return Err(Error::MissingInput("bundle has no frames".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let results: Vec<(String, usize, f64)> = bundle
        .frames
        .par_iter()
        .map(|f| {
            if f.views.is_empty() {
                return Err(Error::MissingInput(format!("frame {} has no views", f.name)));
            }
            let views = f
                .views
                .iter()
                .map(|v| {
                    let t = ViewTransform::new(v.scale, v.hflip)?;
                    let p = read_probs(&v.semantics)?;
                    let s = match &v.instances {
                        Some(path) => Some(read_soft_masks(path, &v.kappa)?),
                        None if v.kappa.is_empty() => None,
                        None => {
                            return Err(Error::MissingInput(format!(
                                "frame {}: confidences given without instance masks",
                                f.name
                            )))
                        }
                    };
                    Ok((t, p, s))
                })
                .collect::<Result<Vec<_>>>()?;
            let (label, kappa) = self_label_frame(&views, f.width, f.height, config)?;
            write_panoptic_png(&label, out_dir.join(sem_file(&f.name)), out_dir.join(inst_file(&f.name)))?;
            write_json(&out_dir.join(scores_file(&f.name)), &kappa)?;
            let ignored = label.semantic().iter().filter(|&&s| s == IGNORE).count();
            Ok((f.name.clone(), kappa.len(), ignored as f64 / (f.width * f.height) as f64))
        })
        .collect::<Result<_>>()?;
    let summary = SelfLabelSummary {
        frames: results.iter().map(|r| r.0.clone()).collect(),
        instances: results.iter().map(|r| r.1).collect(),
        ignore_fraction: results.iter().map(|r| r.2).collect(),
    };
    write_json(&out_dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// Label stems (`<stem>_sem.png`) present in `dir`, sorted.
pub fn label_stems(dir: &Path) -> Result<BTreeSet<String>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut stems = BTreeSet::new();
    for e in entries {
        let e = e.map_err(|err| Error::io(dir, err))?;
        if let Some(stem) = e.file_name().to_str().and_then(|n| n.strip_suffix("_sem.png")) {
            stems.insert(stem.to_string());
        }
    }
    Ok(stems)
}

fn read_label(dir: &Path, stem: &str) -> Result<PanopticLabel> {
    read_panoptic_png(dir.join(sem_file(stem)), dir.join(inst_file(stem))).map(|(l, _)| l)
}

fn read_scores(dir: &Path, stem: &str, n: usize) -> Result<Vec<f64>> {
    let path = dir.join(scores_file(stem));
    if !path.exists() {
        return Ok(vec![1.0; n]);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let scores: Vec<f64> = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    if scores.len() != n {
        return Err(Error::Shape(format!(
            "{}: {} scores for {n} instances",
            path.display(),
            scores.len()
        )));
    }
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub frames: usize,
    pub per_class: Vec<ClassPq>,
    #[serde(rename = "PQ")]
    pub pq: f64,
    #[serde(rename = "SQ")]
    pub sq: f64,
    #[serde(rename = "RQ")]
    pub rq: f64,
    #[serde(rename = "PQ_thing")]
    pub pq_thing: f64,
    #[serde(rename = "PQ_stuff")]
    pub pq_stuff: f64,
    pub classes_counted: usize,
    #[serde(rename = "mIoU")]
    pub miou: f64,
    #[serde(rename = "Acc")]
    pub acc: f64,
    pub per_class_iou: Vec<Option<f64>>,
    #[serde(rename = "AP")]
    pub ap: Option<f64>,
    #[serde(rename = "AP50")]
    pub ap50: Option<f64>,
    #[serde(rename = "AP_S")]
    pub ap_s: Option<f64>,
    #[serde(rename = "AP_M")]
    pub ap_m: Option<f64>,
    #[serde(rename = "AP_L")]
    pub ap_l: Option<f64>,
    pub matching: ClassMatching,
    /// Instances per prediction frame, in stem order.
    pub pred_instances: Vec<usize>,
}

fn mean_ap(images: &[ApImage], thresholds: &[f64], range: AreaRange) -> Option<f64> {
    let v: Vec<f64> = thresholds
        .iter()
        .filter_map(|&t| average_precision(images, t, range))
        .collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Scores labels in memory; `preds` and `gts` are paired by position.
pub fn evaluate_labels(
    preds: &[PanopticLabel],
    pred_scores: &[Vec<f64>],
    gts: &[PanopticLabel],
    pred_split: &ThingStuffSplit,
    gt_split: &ThingStuffSplit,
    config: &PipelineConfig,
) -> Result<EvalReport> {
    if preds.len() != gts.len() || preds.len() != pred_scores.len() {
        return Err(Error::Shape(format!(
            "{} predictions, {} score lists, {} ground truths",
            preds.len(),
            pred_scores.len(),
            gts.len()
        )));
    }
    let (n_pred, n_gt) = (pred_split.k(), gt_split.k());
    let parts = preds
        .par_iter()
        .zip(gts)
        .map(|(p, g)| contingency(p.semantic(), g.semantic(), n_pred, n_gt))
        .collect::<Result<Vec<_>>>()?;
    let mut a = ContingencyMatrix::zeros(n_pred, n_gt);
    for part in &parts {
        a.add(part)?;
    }
    let matching = match_classes(&a, &pred_split.is_thing, &gt_split.is_thing)?;

    let mut acc = PqAccumulator::new(n_gt);
    let mut images = Vec::with_capacity(preds.len());
    for ((p, g), scores) in preds.iter().zip(gts).zip(pred_scores) {
        acc.add(&apply_matching(p, &matching)?, g, &gt_split.is_thing)?;
        let masks = p.instance_masks();
        if masks.len() != scores.len() {
            return Err(Error::Shape(format!("{} scores for {} instances", scores.len(), masks.len())));
        }
        images.push(ApImage {
            preds: masks,
            scores: scores.clone(),
            gts: g.instance_masks(),
        });
    }
    let pq = acc.report(&gt_split.is_thing);
    let sm = semantic_metrics(&remap_contingency(&a, &matching)?)?;
    let t = &config.eval.iou_thresholds;
    Ok(EvalReport {
        frames: preds.len(),
        per_class: pq.per_class,
        pq: pq.pq,
        sq: pq.sq,
        rq: pq.rq,
        pq_thing: pq.pq_thing,
        pq_stuff: pq.pq_stuff,
        classes_counted: pq.classes_counted,
        miou: sm.miou,
        acc: sm.acc,
        per_class_iou: sm.per_class_iou,
        ap: mean_ap(&images, t, AreaRange::All),
        ap50: average_precision(&images, 0.5, AreaRange::All),
        ap_s: mean_ap(&images, t, AreaRange::Small),
        ap_m: mean_ap(&images, t, AreaRange::Medium),
        ap_l: mean_ap(&images, t, AreaRange::Large),
        matching,
        pred_instances: preds.iter().map(|p| p.instance_count()).collect(),
    })
}

/// Evaluates every label pair of `pred_dir` against `gt_dir`. Split sidecars
/// default to `thing_stuff.json` inside each directory.
pub fn evaluate_dirs(
    pred_dir: &Path,
    gt_dir: &Path,
    pred_split: Option<&Path>,
    gt_split: Option<&Path>,
    config: &PipelineConfig,
) -> Result<EvalReport> {
    config.validate()?;
    let ps = label_stems(pred_dir)?;
    let gs = label_stems(gt_dir)?;
    let unpaired: Vec<String> = ps.symmetric_difference(&gs).cloned().collect();
    if !unpaired.is_empty() {
        return Err(Error::MissingInput(format!("unpaired label files: {}", unpaired.join(", "))));
    }
    if ps.is_empty() {
        return Err(Error::MissingInput(format!("no labels in {}", pred_dir.display())));
    }
    let pred_split = ThingStuffSplit::load(pred_split.map_or_else(|| pred_dir.join(SPLIT_FILE), Path::to_path_buf))?;
    let gt_split = ThingStuffSplit::load(gt_split.map_or_else(|| gt_dir.join(SPLIT_FILE), Path::to_path_buf))?;
    let stems: Vec<&String> = ps.iter().collect();
    let loaded = stems
        .par_iter()
        .map(|s| {
            let p = read_label(pred_dir, s)?;
            let scores = read_scores(pred_dir, s, p.instance_count())?;
            Ok((p, scores, read_label(gt_dir, s)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut preds = Vec::new();
    let mut scores = Vec::new();
    let mut gts = Vec::new();
    for (p, s, g) in loaded {
        preds.push(p);
        scores.push(s);
        gts.push(g);
    }
    evaluate_labels(&preds, &scores, &gts, &pred_split, &gt_split, config)
}

/// Colour rasters `<stem>_vis.png` for label pairs given by their semantic files.
pub fn visualize(sem_paths: &[PathBuf], out_dir: &Path, palette_seed: u64) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    sem_paths
        .iter()
        .map(|sem| {
            let name = sem.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            let stem = name
                .strip_suffix("_sem.png")
                .ok_or_else(|| Error::MissingInput(format!("{} is not a <stem>_sem.png file", sem.display())))?;
            let inst = sem.with_file_name(inst_file(stem));
            if !inst.exists() {
                return Err(Error::MissingInput(format!("{} has no instance map", sem.display())));
            }
            let (label, _) = read_panoptic_png(sem, &inst)?;
            let out = out_dir.join(format!("{stem}_vis.png"));
            write_rgb_png(&out, &colorize_rgb(&label, palette_seed))?;
            Ok(out)
        })
        .collect()
}

/// Writes soft predictions as a `K×H×W` NPY file.
pub fn write_probs(path: &Path, p: &SoftSemantics) -> Result<()> {
    crate::io::write_npy(path, &p.to_tensor())
}

/// Writes soft masks as a `J×H×W` NPY file.
pub fn write_soft_masks(path: &Path, masks: &[Grid<f64>], width: usize, height: usize) -> Result<()> {
    let mut values = Vec::with_capacity(masks.len() * width * height);
    for m in masks {
        if m.size() != (width, height) {
            return Err(Error::Shape(format!("mask is {:?}, expected {:?}", m.size(), (width, height))));
        }
        values.extend_from_slice(m.as_slice());
    }
    crate::io::write_npy(path, &Tensor::from_f64(vec![masks.len(), height, width], &values)?)
}
