//! Scene resolution and the sweep/preview entry points shared by the CLI
//! and the HTTP service.

use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;

use grass_sim::ccm::ColorCorrectionMatrix;
use grass_sim::config::{Quality, SceneConfig};
use grass_sim::pipeline::{measure_length, sweep, Measurement, SweepOutcome, SweepRequest};
use grass_sim::scene::Viewpoint;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A scene config plus the directory its relative paths resolve against.
#[derive(Clone, Debug)]
pub struct Scene {
    pub config: SceneConfig,
    pub base_dir: PathBuf,
}

impl Scene {
    pub fn bundled(name: &str) -> Option<Scene> {
        SceneConfig::bundled().into_iter().find(|c| c.name == name).map(|config| Scene {
            config,
            base_dir: PathBuf::from("."),
        })
    }

    pub fn load(path: &Path) -> Result<Scene> {
        let config = SceneConfig::load(path)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Scene { config, base_dir })
    }

    /// A config file path, or the name of a bundled scene.
    pub fn resolve(arg: &str) -> Result<Scene> {
        let path = Path::new(arg);
        if path.is_file() {
            return Scene::load(path);
        }
        Scene::bundled(arg).ok_or_else(|| Error::NotFound(format!("scene {arg:?} is neither a config file nor a bundled scene")))
    }

    /// SHA-256 of the HDRI file, so edits to the image change every key
    /// derived from this scene.
    pub fn hdri_digest(&self) -> Result<Option<String>> {
        let Some(rel) = &self.config.lighting.hdri_path else {
            return Ok(None);
        };
        let path = self.base_dir.join(rel);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Some(hex::encode(Sha256::digest(bytes))))
    }
}

/// Everything besides the scene that determines a sweep's output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub viewpoint: Viewpoint,
    pub lengths: Vec<f64>,
    pub quality: Quality,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ccm: Option<ColorCorrectionMatrix>,
}

#[derive(Serialize)]
struct SweepKey<'a> {
    kind: &'static str,
    config: &'a SceneConfig,
    hdri_sha256: Option<String>,
    spec: &'a SweepSpec,
}

/// Content address of a sweep: SHA-256 over the full config, HDRI bytes
/// and spec.
pub fn sweep_key(scene: &Scene, spec: &SweepSpec) -> Result<String> {
    let key = SweepKey {
        kind: "sweep",
        config: &scene.config,
        hdri_sha256: scene.hdri_digest()?,
        spec,
    };
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(&key)?)))
}

pub fn run_sweep(
    scene: &Scene,
    spec: &SweepSpec,
    cancel: Option<&AtomicBool>,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<SweepOutcome> {
    let params = scene.config.grass.params()?;
    let rig = scene.config.lighting.build(&scene.base_dir)?;
    let mut req = SweepRequest::new(&params, &rig, spec.viewpoint, &spec.lengths, spec.quality, spec.seed);
    req.ccm = spec.ccm.as_ref();
    req.environment = scene.config.lighting.environment_id();
    Ok(sweep(&req, cancel, progress)?)
}

/// Full-frame render at one length.
pub fn render_view(scene: &Scene, v: &Viewpoint, length: f64, quality: Quality, seed: u64) -> Result<Measurement> {
    let params = scene.config.grass.params()?;
    let rig = scene.config.lighting.build(&scene.base_dir)?;
    let q = quality.preset();
    Ok(measure_length(&params, &rig, v, length, (q.width, q.height), &quality.settings(seed), true)?)
}

/// 8-bit sRGB PNG of an exposed render, for viewing only.
pub fn preview_png(m: &Measurement) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    m.image.to_preview_rgb8().write_to(&mut out, image::ImageFormat::Png)?;
    Ok(out.into_inner())
}
