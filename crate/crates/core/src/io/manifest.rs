use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CameraRig;

/// A precomputed soft prediction for one sliding window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowPred {
    pub path: PathBuf,
    /// Top-left corner as `[row, col]` in full-resolution pixels.
    pub origin: [usize; 2],
}

/// Inputs for one `(t, t+1)` stereo frame pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub left_t: PathBuf,
    pub right_t: PathBuf,
    pub left_t1: PathBuf,
    pub right_t1: PathBuf,
    pub flow_fw: PathBuf,
    pub flow_bw: PathBuf,
    pub disp_t_lr: PathBuf,
    pub disp_t_rl: PathBuf,
    pub disp_t1_lr: PathBuf,
    pub disp_t1_rl: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low_res_pred: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub window_preds: Vec<WindowPred>,
}

impl FrameRecord {
    fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        let mut paths = vec![
            &mut self.left_t,
            &mut self.right_t,
            &mut self.left_t1,
            &mut self.right_t1,
            &mut self.flow_fw,
            &mut self.flow_bw,
            &mut self.disp_t_lr,
            &mut self.disp_t_rl,
            &mut self.disp_t1_lr,
            &mut self.disp_t1_rl,
        ];
        paths.extend(self.features.as_mut());
        paths.extend(self.low_res_pred.as_mut());
        paths.extend(self.window_preds.iter_mut().map(|w| &mut w.path));
        paths
    }

    /// Output stem for frame `index`.
    pub fn stem(&self, index: usize) -> String {
        self.name.clone().unwrap_or_else(|| format!("frame_{index:04}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub frames: Vec<FrameRecord>,
    pub camera: CameraRig,
    pub output_dir: PathBuf,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::Configuration("manifest output_dir is empty".into()));
        }
        for (i, frame) in self.frames.iter().enumerate() {
            let mut frame = frame.clone();
            if frame.paths_mut().iter().any(|p| p.as_os_str().is_empty()) {
                return Err(Error::Configuration(format!("frame {i} has an empty path")));
            }
            let has_preds = frame.low_res_pred.is_some() && !frame.window_preds.is_empty();
            if frame.features.is_none() && !has_preds {
                return Err(Error::Configuration(format!(
                    "frame {i} needs either features or low_res_pred plus window_preds"
                )));
            }
        }
        Ok(())
    }

    /// Loads a manifest; relative paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|source| Error::Json {
                path: path.into(),
                source,
            })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for frame in &mut manifest.frames {
            for p in frame.paths_mut() {
                if p.is_relative() && !p.as_os_str().is_empty() {
                    *p = base.join(&*p);
                }
            }
        }
        if manifest.output_dir.is_relative() && !manifest.output_dir.as_os_str().is_empty() {
            manifest.output_dir = base.join(&manifest.output_dir);
        }
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame() -> FrameRecord {
        let p = |s: &str| PathBuf::from(s);
        FrameRecord {
            name: None,
            left_t: p("l0.png"),
            right_t: p("r0.png"),
            left_t1: p("l1.png"),
            right_t1: p("r1.png"),
            flow_fw: p("fw.npy"),
            flow_bw: p("bw.npy"),
            disp_t_lr: p("d0lr.npy"),
            disp_t_rl: p("d0rl.npy"),
            disp_t1_lr: p("d1lr.npy"),
            disp_t1_rl: p("d1rl.npy"),
            features: Some(p("feat.npy")),
            low_res_pred: None,
            window_preds: vec![],
        }
    }

    fn rig() -> CameraRig {
        CameraRig {
            fx: 500.0,
            fy: 500.0,
            cx: 64.0,
            cy: 48.0,
            baseline: 0.5,
        }
    }

    #[test]
    fn relative_paths_resolve_against_manifest_dir() {
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest {
            frames: vec![frame()],
            camera: rig(),
            output_dir: "out".into(),
        };
        let path = dir.path().join("manifest.json");
        m.save(&path).unwrap();
        let loaded = DatasetManifest::load(&path).unwrap();
        assert_eq!(loaded.frames[0].flow_fw, dir.path().join("fw.npy"));
        assert_eq!(loaded.output_dir, dir.path().join("out"));
    }

    #[test]
    fn empty_path_rejected() {
        let mut f = frame();
        f.flow_bw = PathBuf::new();
        let m = DatasetManifest {
            frames: vec![f],
            camera: rig(),
            output_dir: "out".into(),
        };
        assert!(m.validate().is_err());
    }

    #[test]
    fn unknown_field_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(
            &path,
            r#"{"frames": [], "camera": {"fx":1,"fy":1,"cx":0,"cy":0,"baseline":1}, "output_dir": "o", "extra": 1}"#,
        )
        .unwrap();
        assert!(matches!(DatasetManifest::load(&path), Err(Error::Json { .. })));
    }
}
