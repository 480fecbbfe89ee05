//! Scene configuration files and render quality presets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::colorimetry::{decode_srgb, EncodedSrgb};
use crate::error::{Error, Result};
use crate::lighting::{load_hdri, split_sun, synthetic, EnvironmentMap, LightingRig, SunLight};
use crate::render::RenderSettings;
use crate::scene::{CheckerLayout, GrassPixelParams, Viewpoint, DEMO_GREEN, DEMO_YELLOW};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    Preview,
    Default,
    High,
    /// Small frame, many samples: low-noise region means for sweeps.
    Measurement,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityPreset {
    pub width: usize,
    pub height: usize,
    pub spp: u32,
    pub bounces: u32,
}

impl Quality {
    pub const ALL: [Quality; 4] = [Quality::Preview, Quality::Default, Quality::High, Quality::Measurement];

    pub fn preset(self) -> QualityPreset {
        let (width, height, spp, bounces) = match self {
            Quality::Preview => (600, 400, 2, 1),
            Quality::Default => (600, 400, 8, 2),
            Quality::High => (600, 400, 64, 2),
            Quality::Measurement => (150, 100, 256, 2),
        };
        QualityPreset {
            width,
            height,
            spp,
            bounces,
        }
    }

    pub fn settings(self, seed: u64) -> RenderSettings {
        let p = self.preset();
        RenderSettings {
            bounces: p.bounces,
            ..RenderSettings::new(p.spp, seed)
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Quality::Preview => "preview",
            Quality::Default => "default",
            Quality::High => "high",
            Quality::Measurement => "measurement",
        }
    }
}

impl std::str::FromStr for Quality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Quality::ALL
            .into_iter()
            .find(|q| q.name() == s)
            .ok_or_else(|| Error::InvalidParam(format!("unknown quality preset {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticEnv {
    UniformSky,
    GradientSky,
    IndoorLampPanel,
}

impl SyntheticEnv {
    pub fn build(self, width: usize) -> EnvironmentMap {
        match self {
            SyntheticEnv::UniformSky => synthetic::uniform_sky(width),
            SyntheticEnv::GradientSky => synthetic::gradient_sky(width),
            SyntheticEnv::IndoorLampPanel => synthetic::indoor_lamp_panel(width),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SunConfig {
    /// Degrees from +z toward +x.
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    /// Horizontal illuminance with the sun, in lux.
    pub total_lux: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightingConfig {
    /// Radiance `.hdr` file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hdri_path: Option<PathBuf>,
    /// Used when no HDRI is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticEnv>,
    pub ambient_lux: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sun: Option<SunConfig>,
}

pub const SYNTHETIC_ENV_WIDTH: usize = 256;

impl LightingConfig {
    pub fn synthetic(env: SyntheticEnv, ambient_lux: f64) -> Self {
        LightingConfig {
            hdri_path: None,
            synthetic: Some(env),
            ambient_lux,
            sun: None,
        }
    }

    /// Short label for curve metadata.
    pub fn environment_id(&self) -> String {
        let base = match (&self.hdri_path, self.synthetic) {
            (Some(p), _) => p.display().to_string(),
            (None, Some(s)) => serde_json::to_value(s)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default(),
            (None, None) => "none".into(),
        };
        match &self.sun {
            Some(s) => format!("{base}@{}lx+sun{}lx", self.ambient_lux, s.total_lux),
            None => format!("{base}@{}lx", self.ambient_lux),
        }
    }

    pub fn build(&self, base_dir: &Path) -> Result<LightingRig> {
        let env = match (&self.hdri_path, self.synthetic) {
            (Some(p), _) => load_hdri(&base_dir.join(p))?,
            (None, Some(s)) => s.build(SYNTHETIC_ENV_WIDTH),
            (None, None) => return Err(Error::InvalidParam("lighting needs hdri_path or synthetic".into())),
        };
        let sun = match &self.sun {
            Some(s) => Some(sun_from_config(s, self.ambient_lux)?),
            None => None,
        };
        LightingRig::new(&env, self.ambient_lux, sun)
    }
}

/// The sun's share of the horizontal illuminance, converted to illuminance
/// normal to its direction.
fn sun_from_config(s: &SunConfig, ambient_lux: f64) -> Result<SunLight> {
    let dir = SunLight::direction_from_angles(s.azimuth_deg, s.elevation_deg);
    if dir.y <= 0.0 {
        return Err(Error::InvalidParam(format!("sun elevation {} must be above the horizon", s.elevation_deg)));
    }
    let mut sun = split_sun(s.total_lux, ambient_lux, dir)?;
    sun.illuminance /= dir.y;
    Ok(sun)
}

/// Grass pixel settings with albedos given as measured 8-bit sRGB.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrassConfig {
    pub surface_size: [f64; 2],
    pub base_height: f64,
    pub fixed_length: f64,
    pub slit_count: u32,
    pub slit_width: f64,
    pub slit_margin: f64,
    pub adjustable_range: [f64; 2],
    pub fixed_color: EncodedSrgb,
    pub adjustable_color: EncodedSrgb,
    pub base_color: EncodedSrgb,
    pub fixed_density: f64,
    pub adjustable_density: f64,
    pub blade_width: f64,
    pub blade_taper: f64,
    pub fixed_max_tilt_deg: f64,
    pub adjustable_max_tilt_deg: f64,
    pub smoothness: f64,
    pub seed: u64,
}

impl Default for GrassConfig {
    fn default() -> Self {
        let p = GrassPixelParams::default();
        GrassConfig {
            surface_size: p.surface_size,
            base_height: p.base_height,
            fixed_length: p.fixed_length,
            slit_count: p.slit_count,
            slit_width: p.slit_width,
            slit_margin: p.slit_margin,
            adjustable_range: p.adjustable_range,
            fixed_color: DEMO_YELLOW,
            adjustable_color: DEMO_GREEN,
            base_color: DEMO_YELLOW,
            fixed_density: p.fixed_density,
            adjustable_density: p.adjustable_density,
            blade_width: p.blade_width,
            blade_taper: p.blade_taper,
            fixed_max_tilt_deg: p.fixed_max_tilt_deg,
            adjustable_max_tilt_deg: p.adjustable_max_tilt_deg,
            smoothness: p.smoothness,
            seed: p.seed,
        }
    }
}

impl GrassConfig {
    pub fn params(&self) -> Result<GrassPixelParams> {
        let p = GrassPixelParams {
            surface_size: self.surface_size,
            base_height: self.base_height,
            fixed_length: self.fixed_length,
            slit_count: self.slit_count,
            slit_width: self.slit_width,
            slit_margin: self.slit_margin,
            adjustable_range: self.adjustable_range,
            fixed_albedo: decode_srgb(self.fixed_color),
            adjustable_albedo: decode_srgb(self.adjustable_color),
            base_albedo: decode_srgb(self.base_color),
            fixed_density: self.fixed_density,
            adjustable_density: self.adjustable_density,
            blade_width: self.blade_width,
            blade_taper: self.blade_taper,
            fixed_max_tilt_deg: self.fixed_max_tilt_deg,
            adjustable_max_tilt_deg: self.adjustable_max_tilt_deg,
            smoothness: self.smoothness,
            seed: self.seed,
        };
        p.validate()?;
        Ok(p)
    }
}

/// Standard 24-patch checker in 8-bit sRGB, row-major.
pub const COLOR_CHECKER_SRGB: [EncodedSrgb; 24] = [
    EncodedSrgb::new(115, 82, 68),
    EncodedSrgb::new(194, 150, 130),
    EncodedSrgb::new(98, 122, 157),
    EncodedSrgb::new(87, 108, 67),
    EncodedSrgb::new(133, 128, 177),
    EncodedSrgb::new(103, 189, 170),
    EncodedSrgb::new(214, 126, 44),
    EncodedSrgb::new(80, 91, 166),
    EncodedSrgb::new(193, 90, 99),
    EncodedSrgb::new(94, 60, 108),
    EncodedSrgb::new(157, 188, 64),
    EncodedSrgb::new(224, 163, 46),
    EncodedSrgb::new(56, 61, 150),
    EncodedSrgb::new(70, 148, 73),
    EncodedSrgb::new(175, 54, 60),
    EncodedSrgb::new(231, 199, 31),
    EncodedSrgb::new(187, 86, 149),
    EncodedSrgb::new(8, 133, 161),
    EncodedSrgb::new(243, 243, 242),
    EncodedSrgb::new(200, 200, 200),
    EncodedSrgb::new(160, 160, 160),
    EncodedSrgb::new(122, 122, 121),
    EncodedSrgb::new(85, 85, 85),
    EncodedSrgb::new(52, 52, 52),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckerConfig {
    pub colors: Vec<EncodedSrgb>,
    #[serde(default)]
    pub layout: CheckerLayout,
    /// Measured real patches (`R,G,B` ProPhoto linear CSV), relative to the
    /// config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub real_patches_csv: Option<PathBuf>,
}

impl Default for CheckerConfig {
    fn default() -> Self {
        CheckerConfig {
            colors: COLOR_CHECKER_SRGB.to_vec(),
            layout: CheckerLayout::default(),
            real_patches_csv: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub name: String,
    #[serde(default)]
    pub grass: GrassConfig,
    #[serde(default)]
    pub checker: CheckerConfig,
    pub lighting: LightingConfig,
    #[serde(default = "Viewpoint::standard_grid")]
    pub viewpoints: Vec<Viewpoint>,
    /// Lengths swept when none are requested, in millimeters.
    #[serde(default = "default_lengths")]
    pub lengths: Vec<f64>,
}

/// 0 to 20 mm in 1 mm steps.
pub fn default_lengths() -> Vec<f64> {
    (0..=20).map(f64::from).collect()
}

impl SceneConfig {
    /// Yellow/green demo pixel under the synthetic lamp-panel room.
    pub fn demo() -> Self {
        SceneConfig {
            name: "demo".into(),
            grass: GrassConfig::default(),
            checker: CheckerConfig::default(),
            lighting: LightingConfig::synthetic(SyntheticEnv::IndoorLampPanel, 2000.0),
            viewpoints: Viewpoint::standard_grid(),
            lengths: default_lengths(),
        }
    }

    /// The demo pixel outdoors: gradient sky plus a sun.
    pub fn demo_outdoor() -> Self {
        SceneConfig {
            name: "demo-outdoor".into(),
            lighting: LightingConfig {
                hdri_path: None,
                synthetic: Some(SyntheticEnv::GradientSky),
                ambient_lux: 20000.0,
                sun: Some(SunConfig {
                    azimuth_deg: 200.0,
                    elevation_deg: 50.0,
                    total_lux: 50000.0,
                }),
            },
            ..Self::demo()
        }
    }

    pub fn bundled() -> Vec<SceneConfig> {
        vec![Self::demo(), Self::demo_outdoor()]
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: SceneConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.grass.params()?;
        if !(self.lighting.ambient_lux > 0.0 && self.lighting.ambient_lux.is_finite()) {
            return Err(Error::InvalidParam(format!("ambient_lux {} must be > 0", self.lighting.ambient_lux)));
        }
        if self.checker.colors.len() != 24 {
            return Err(Error::PatchCount(self.checker.colors.len()));
        }
        for v in &self.viewpoints {
            Viewpoint::new(v.h, v.d, v.theta)?;
        }
        validate_lengths(&p, &self.lengths)
    }
}

/// Lengths must be strictly increasing and inside the adjustable range.
pub fn validate_lengths(p: &GrassPixelParams, lengths: &[f64]) -> Result<()> {
    if lengths.is_empty() {
        return Err(Error::EmptyCurve);
    }
    let [min, max] = p.adjustable_range;
    for &length in lengths {
        if !(length >= min && length <= max) {
            return Err(Error::LengthOutOfRange { length, min, max });
        }
    }
    if lengths.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParam("lengths must be strictly increasing".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_round_trips_through_json() {
        for c in SceneConfig::bundled() {
            let text = serde_json::to_string_pretty(&c).unwrap();
            assert_eq!(SceneConfig::from_json(&text).unwrap(), c);
        }
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let c = SceneConfig::from_json(r#"{"name":"x","lighting":{"synthetic":"gradient_sky","ambient_lux":1500}}"#).unwrap();
        assert_eq!(c.viewpoints.len(), 16);
        assert_eq!(c.lengths.len(), 21);
        assert_eq!(c.grass.params().unwrap(), GrassPixelParams::default());
        let rig = c.lighting.build(Path::new(".")).unwrap();
        assert!((rig.horizontal_illuminance() - 1500.0).abs() < 1.5);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            r#"{"name":"x","lighting":{"synthetic":"gradient_sky","ambient_lux":0}}"#,
            r#"{"name":"x","lighting":{"synthetic":"gradient_sky","ambient_lux":10},"lengths":[0,25]}"#,
            r#"{"name":"x","lighting":{"synthetic":"gradient_sky","ambient_lux":10},"lengths":[3,2]}"#,
            r#"{"name":"x","lighting":{"synthetic":"gradient_sky","ambient_lux":10},"grass":{"slit_width":0}}"#,
            r#"{"name":"x","lighting":{"synthetic":"gradient_sky","ambient_lux":10},"viewpoints":[{"h":170,"d":0,"theta":0}]}"#,
        ];
        for b in bad {
            assert!(SceneConfig::from_json(b).is_err(), "{b}");
        }
    }

    #[test]
    fn missing_hdri_names_the_path() {
        let mut l = LightingConfig::synthetic(SyntheticEnv::UniformSky, 100.0);
        l.hdri_path = Some("nowhere/sky.hdr".into());
        let e = l.build(Path::new("/tmp")).unwrap_err().to_string();
        assert!(e.contains("nowhere/sky.hdr"), "{e}");
    }

    #[test]
    fn sun_gets_the_illuminance_difference() {
        let c = SceneConfig::demo_outdoor();
        let rig = c.lighting.build(Path::new(".")).unwrap();
        assert!((rig.horizontal_illuminance() - 50000.0).abs() < 50.0);
        let sun = rig.sun.unwrap();
        assert!((sun.illuminance * sun.direction.y - 30000.0).abs() < 1e-6);
    }

    #[test]
    fn quality_names_parse() {
        for q in Quality::ALL {
            assert_eq!(q.name().parse::<Quality>().unwrap(), q);
        }
        assert!("ultra".parse::<Quality>().is_err());
    }
}
