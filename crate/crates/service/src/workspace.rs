//! On-disk artifact store. Curves, matrices and calibration tables are
//! content-addressed and written once; readers never take a lock.
//!
//! ```text
//! <root>/scenes/<name>.json
//! <root>/curves/<id>.csv          curves/<id>.json   (source + metadata)
//! <root>/ccms/<id>.json
//! <root>/calibrations/<id>.csv    calibrations/<id>.json
//! ```

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use grass_sim::ccm::ColorCorrectionMatrix;
use grass_sim::characteristic::{CalibrationTable, CharacteristicCurve, CurveMeta, CurveSource};
use grass_sim::config::SceneConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::runner::Scene;

/// Environment variable naming the workspace root.
pub const WORKSPACE_ENV: &str = "GRASS_SIM_WORKSPACE";

const DIRS: [&str; 4] = ["scenes", "curves", "ccms", "calibrations"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CurveHeader {
    source: CurveSource,
    meta: CurveMeta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationHeader {
    pub curve_id: String,
    pub r2_before: f64,
    pub r2_after: f64,
}

#[derive(Debug)]
pub struct Workspace {
    root: PathBuf,
    writer: Mutex<()>,
}

pub fn digest(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

fn check_id(id: &str) -> Result<()> {
    if id.len() == 64 && id.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase()) {
        Ok(())
    } else {
        Err(Error::NotFound(format!("artifact {id:?}")))
    }
}

fn read(path: &Path, what: &str) -> Result<Vec<u8>> {
    match std::fs::read(path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::NotFound(format!("{what} {}", path.display()))),
        Err(e) => Err(Error::io(path, e)),
    }
}

impl Workspace {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for d in DIRS {
            let p = root.join(d);
            std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        Ok(Workspace {
            root,
            writer: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes `bytes` unless the file exists. An existing file with
    /// different content is a conflict: artifacts never change.
    fn write_once(&self, path: &Path, bytes: &[u8]) -> Result<()> {
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        if path.exists() {
            return if read(path, "artifact")? == bytes {
                Ok(())
            } else {
                Err(Error::Conflict(format!("{} already holds different content", path.display())))
            };
        }
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    /// Bundled scenes followed by `scenes/*.json`; a workspace file
    /// replaces a bundled scene of the same name.
    pub fn scenes(&self) -> Result<Vec<Scene>> {
        let mut out: Vec<Scene> = SceneConfig::bundled()
            .into_iter()
            .map(|c| Scene::bundled(&c.name).expect("bundled"))
            .collect();
        let dir = self.root.join("scenes");
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for p in paths {
            let s = Scene::load(&p)?;
            out.retain(|o| o.config.name != s.config.name);
            out.push(s);
        }
        Ok(out)
    }

    pub fn scene(&self, name: &str) -> Result<Scene> {
        self.scenes()?
            .into_iter()
            .find(|s| s.config.name == name)
            .ok_or_else(|| Error::NotFound(format!("scene {name:?}")))
    }

    pub fn put_scene(&self, config: &SceneConfig) -> Result<PathBuf> {
        config.validate()?;
        if config.name.is_empty() || !config.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(Error::Invalid(format!("scene name {:?} must be [A-Za-z0-9_-]+", config.name)));
        }
        let path = self.root.join("scenes").join(format!("{}.json", config.name));
        self.write_once(&path, &serde_json::to_vec_pretty(config)?)?;
        Ok(path)
    }

    fn curve_path(&self, id: &str, ext: &str) -> PathBuf {
        self.root.join("curves").join(format!("{id}.{ext}"))
    }

    pub fn has_curve(&self, id: &str) -> bool {
        check_id(id).is_ok() && self.curve_path(id, "csv").exists() && self.curve_path(id, "json").exists()
    }

    pub fn put_curve(&self, id: &str, curve: &CharacteristicCurve) -> Result<()> {
        check_id(id)?;
        let mut csv = Vec::new();
        curve.write_csv(&mut csv)?;
        let header = CurveHeader {
            source: curve.source,
            meta: curve.meta.clone(),
        };
        // Header last: a curve counts as stored once both files exist.
        self.write_once(&self.curve_path(id, "csv"), &csv)?;
        self.write_once(&self.curve_path(id, "json"), &serde_json::to_vec_pretty(&header)?)
    }

    /// Stores an uploaded curve CSV under the hash of its bytes.
    pub fn put_real_curve(&self, csv: &[u8]) -> Result<(String, CharacteristicCurve)> {
        let curve = CharacteristicCurve::read_any_csv(csv, CurveSource::Real, CurveMeta::default())?;
        let id = digest(&[b"real", csv]);
        self.put_curve(&id, &curve)?;
        Ok((id, curve))
    }

    pub fn curve_csv(&self, id: &str) -> Result<Vec<u8>> {
        check_id(id)?;
        read(&self.curve_path(id, "csv"), "curve")
    }

    pub fn curve(&self, id: &str) -> Result<CharacteristicCurve> {
        let csv = self.curve_csv(id)?;
        let header: CurveHeader = serde_json::from_slice(&read(&self.curve_path(id, "json"), "curve")?)?;
        Ok(CharacteristicCurve::read_csv(csv.as_slice(), header.source, header.meta)?)
    }

    pub fn curve_ids(&self) -> Result<Vec<String>> {
        let dir = self.root.join("curves");
        let mut ids: Vec<String> = std::fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.path().file_stem().and_then(|s| s.to_str()).map(str::to_owned))
            .filter(|id| self.has_curve(id))
            .collect();
        ids.sort();
        ids.dedup();
        Ok(ids)
    }

    pub fn put_ccm(&self, ccm: &ColorCorrectionMatrix) -> Result<String> {
        let bytes = serde_json::to_vec_pretty(ccm)?;
        let id = digest(&[b"ccm", &bytes]);
        self.write_once(&self.root.join("ccms").join(format!("{id}.json")), &bytes)?;
        Ok(id)
    }

    pub fn ccm(&self, id: &str) -> Result<ColorCorrectionMatrix> {
        check_id(id)?;
        Ok(serde_json::from_slice(&read(&self.root.join("ccms").join(format!("{id}.json")), "matrix")?)?)
    }

    /// Stores the table computed from `curve_id`; its id is derived from
    /// the curve id.
    pub fn put_calibration(&self, curve_id: &str, table: &CalibrationTable) -> Result<String> {
        let id = digest(&[b"calibration", curve_id.as_bytes()]);
        let mut csv = Vec::new();
        table.write_csv(&mut csv)?;
        let header = CalibrationHeader {
            curve_id: curve_id.to_owned(),
            r2_before: table.r2_before,
            r2_after: table.r2_after,
        };
        let dir = self.root.join("calibrations");
        self.write_once(&dir.join(format!("{id}.csv")), &csv)?;
        self.write_once(&dir.join(format!("{id}.json")), &serde_json::to_vec_pretty(&header)?)?;
        Ok(id)
    }

    pub fn calibration(&self, id: &str) -> Result<(CalibrationHeader, CalibrationTable)> {
        check_id(id)?;
        let dir = self.root.join("calibrations");
        let header: CalibrationHeader = serde_json::from_slice(&read(&dir.join(format!("{id}.json")), "calibration")?)?;
        let csv = read(&dir.join(format!("{id}.csv")), "calibration")?;
        let mut r = csv::Reader::from_reader(csv.as_slice());
        let mut entries = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(grass_sim::Error::from)?;
            let v = rec
                .get(1)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::Invalid(format!("bad calibration row {rec:?}")))?;
            entries.push(v);
        }
        let table = CalibrationTable {
            entries,
            r2_before: header.r2_before,
            r2_after: header.r2_after,
        };
        Ok((header, table))
    }
}
