//! Pipeline configuration: JSON sections with dotted-path overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::eval::IOU_THRESHOLDS;
use crate::motion::Sf2se3Params;
use crate::semantic::CrfParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub alpha1: f64,
    /// Squared pixels.
    pub alpha2: f64,
    /// Pixels.
    pub lr_tol: f64,
    /// Pixels.
    pub min_disp: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            alpha1: 0.01,
            alpha2: 0.5,
            lr_tol: 1.0,
            min_disp: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemanticConfig {
    /// Pseudo classes.
    pub k: usize,
    pub temperature: f64,
    pub kmeans_iters: usize,
    /// Feature vectors drawn (evenly strided) from all frames for fitting.
    pub kmeans_samples: usize,
    /// Window side as a fraction of the image side.
    pub window_fraction: f64,
    /// Stride as a fraction of the window side.
    pub stride_fraction: f64,
    /// Average-pooling factor that emulates the low-resolution pass.
    pub low_res_factor: usize,
    pub crf: CrfParams,
}

impl Default for SemanticConfig {
    fn default() -> Self {
        Self {
            k: 27,
            temperature: 0.1,
            kmeans_iters: 50,
            kmeans_samples: 50_000,
            window_fraction: 0.5,
            stride_fraction: 0.5,
            low_res_factor: 2,
            crf: CrfParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub psi_ts: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { psi_ts: 0.08 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelfLabelConfig {
    pub gamma: f64,
    pub zeta_hat: f64,
    pub scales: Vec<f64>,
    pub hflip: bool,
    pub group_iou: f64,
    pub tau_iou: f64,
}

impl Default for SelfLabelConfig {
    fn default() -> Self {
        Self {
            gamma: 0.7,
            zeta_hat: 0.5,
            scales: vec![0.75, 1.0, 1.25],
            hflip: true,
            group_iou: 0.5,
            tau_iou: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_thresholds: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: IOU_THRESHOLDS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    pub base_seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub geometry: GeometryConfig,
    pub motion: Sf2se3Params,
    pub semantic: SemanticConfig,
    pub fusion: FusionConfig,
    pub selflabel: SelfLabelConfig,
    pub eval: EvalConfig,
    pub seeds: SeedConfig,
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Configuration(msg()))
    }
}

fn unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

impl PipelineConfig {
    /// Reads a JSON file, applies `overrides` (`section.key=value`), and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_str(&text).map_err(|source| Error::Json {
                    path: p.to_path_buf(),
                    source,
                })?
            }
            None => Value::Object(Default::default()),
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: Self = serde_json::from_value(value).map_err(|e| Error::Configuration(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        check(g.alpha1 >= 0.0 && g.alpha1.is_finite(), || "geometry.alpha1 must be ≥ 0".into())?;
        check(g.alpha2 >= 0.0 && g.alpha2.is_finite(), || "geometry.alpha2 must be ≥ 0".into())?;
        check(g.lr_tol > 0.0 && g.lr_tol.is_finite(), || "geometry.lr_tol must be > 0".into())?;
        check(g.min_disp > 0.0 && g.min_disp.is_finite(), || "geometry.min_disp must be > 0".into())?;
        self.motion
            .validate()
            .map_err(|e| Error::Configuration(e.to_string()))?;

        let s = &self.semantic;
        check((2..=255).contains(&s.k), || format!("semantic.k must lie in [2, 255], got {}", s.k))?;
        check(s.temperature > 0.0 && s.temperature.is_finite(), || "semantic.temperature must be > 0".into())?;
        check(s.kmeans_iters >= 1, || "semantic.kmeans_iters must be ≥ 1".into())?;
        check(s.kmeans_samples >= s.k, || "semantic.kmeans_samples must be ≥ k".into())?;
        check(s.window_fraction > 0.0 && s.window_fraction <= 1.0, || {
            "semantic.window_fraction must lie in (0, 1]".into()
        })?;
        check(s.stride_fraction > 0.0 && s.stride_fraction <= 1.0, || {
            "semantic.stride_fraction must lie in (0, 1]".into()
        })?;
        check(s.low_res_factor >= 1, || "semantic.low_res_factor must be ≥ 1".into())?;
        s.crf.validate().map_err(|e| Error::Configuration(e.to_string()))?;

        let f = self.fusion.psi_ts;
        check(f > 0.0 && f < 1.0, || format!("fusion.psi_ts must lie in (0, 1), got {f}"))?;

        let l = &self.selflabel;
        check(unit(l.gamma), || "selflabel.gamma must lie in [0, 1]".into())?;
        check(unit(l.zeta_hat), || "selflabel.zeta_hat must lie in [0, 1]".into())?;
        check(unit(l.group_iou), || "selflabel.group_iou must lie in [0, 1]".into())?;
        check(unit(l.tau_iou), || "selflabel.tau_iou must lie in [0, 1]".into())?;
        check(
            !l.scales.is_empty() && l.scales.iter().all(|s| *s > 0.0 && s.is_finite()),
            || "selflabel.scales must be a nonempty list of positive factors".into(),
        )?;

        let t = &self.eval.iou_thresholds;
        check(!t.is_empty() && t.iter().all(|v| *v > 0.0 && *v <= 1.0), || {
            "eval.iou_thresholds must be a nonempty list in (0, 1]".into()
        })?;
        Ok(())
    }
}

/// Sets `a.b.c=value` inside a JSON object. The value is parsed as JSON when
/// possible and taken as a string otherwise.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let spec = spec.strip_prefix("--").unwrap_or(spec);
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Configuration(format!("override {spec:?} is not key=value")))?;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.len() < 2 || parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Configuration(format!("override key {key:?} must be section.key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Configuration(format!("{key}: {part} is not a section")))?;
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    node.as_object_mut()
        .ok_or_else(|| Error::Configuration(format!("{key}: parent is not a section")))?
        .insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        assert_eq!(c.semantic.k, 27);
        assert_eq!(c.fusion.psi_ts, 0.08);
        assert_eq!(c.motion.keep_thresh, 0.8);
        assert_eq!(c.selflabel.tau_iou, 0.4);
    }

    #[test]
    fn overrides_apply() {
        let c = PipelineConfig::load(
            None,
            &["--fusion.psi_ts=0.2".into(), "semantic.crf.max_side=64".into(), "seeds.base_seed=9".into()],
        )
        .unwrap();
        assert_eq!(c.fusion.psi_ts, 0.2);
        assert_eq!(c.semantic.crf.max_side, 64);
        assert_eq!(c.seeds.base_seed, 9);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(PipelineConfig::load(None, &["fusion.psi=0.2".into()]).is_err());
        assert!(PipelineConfig::load(None, &["nosuch.x=1".into()]).is_err());
        assert!(PipelineConfig::load(None, &["motion.bogus=1".into()]).is_err());
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(PipelineConfig::load(None, &["fusion.psi_ts=1.5".into()]).is_err());
        assert!(PipelineConfig::load(None, &["semantic.k=1".into()]).is_err());
        assert!(PipelineConfig::load(None, &["selflabel.gamma=-0.1".into()]).is_err());
    }
}
