//! Environment maps, photometric normalization and the sun.
//!
//! Radiance is linear display RGB in arbitrary "radiance units"; one unit of
//! luminance Y corresponds to 683 cd/m², so an illuminance in lux divided by
//! 683 gives the irradiance the renderer works with.
//!
//! Equirectangular convention: row 0 is the zenith, column u = 0.5 looks
//! toward -z, and u grows with atan2(x, -z).

use std::f64::consts::{PI, TAU};
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::colorimetry::luminance;
use crate::error::{Error, Result};
use crate::math::Vec3;

/// Luminous efficacy used to bridge radiance units and lux.
pub const LUMENS_PER_WATT: f64 = 683.0;

/// Maps below this many texels are sampled uniformly instead of by CDF.
const MIN_IMPORTANCE_TEXELS: usize = 64;

#[derive(Clone, Debug)]
pub struct EnvironmentMap {
    width: usize,
    height: usize,
    texels: Vec<[f64; 3]>,
    pub intensity_scale: f64,
    sampler: Option<TexelSampler>,
}

#[derive(Clone, Debug)]
struct TexelSampler {
    cdf: Vec<f64>,
    total: f64,
}

impl PartialEq for EnvironmentMap {
    fn eq(&self, o: &Self) -> bool {
        self.width == o.width
            && self.height == o.height
            && self.texels == o.texels
            && self.intensity_scale == o.intensity_scale
    }
}

fn row_bounds(j: usize, height: usize) -> (f64, f64) {
    (PI * j as f64 / height as f64, PI * (j + 1) as f64 / height as f64)
}

/// Sample of an environment direction with its solid-angle density.
#[derive(Clone, Copy, Debug)]
pub struct EnvSample {
    pub dir: Vec3,
    pub radiance: [f64; 3],
    pub pdf: f64,
}

impl EnvironmentMap {
    pub fn new(width: usize, height: usize, texels: Vec<[f64; 3]>) -> Result<Self> {
        if width == 0 || height == 0 || texels.len() != width * height {
            return Err(Error::InvalidParam(format!(
                "environment map {width}x{height} with {} texels",
                texels.len()
            )));
        }
        if width != 2 * height {
            return Err(Error::InvalidParam(format!(
                "environment map must be 2:1, got {width}x{height}"
            )));
        }
        if texels.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParam("environment radiance must be finite and non-negative".into()));
        }
        let mut env = EnvironmentMap {
            width,
            height,
            texels,
            intensity_scale: 1.0,
            sampler: None,
        };
        env.sampler = env.build_sampler();
        Ok(env)
    }

    pub fn uniform(radiance: [f64; 3], width: usize) -> Result<Self> {
        let height = (width / 2).max(1);
        Self::new(2 * height, height, vec![radiance; 2 * height * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn texel(&self, x: usize, y: usize) -> [f64; 3] {
        self.texels[y * self.width + x]
    }

    pub fn texels(&self) -> &[[f64; 3]] {
        &self.texels
    }

    fn texel_solid_angle(&self, j: usize) -> f64 {
        let (t0, t1) = row_bounds(j, self.height);
        TAU / self.width as f64 * (t0.cos() - t1.cos())
    }

    fn build_sampler(&self) -> Option<TexelSampler> {
        if self.texels.len() < MIN_IMPORTANCE_TEXELS {
            return None;
        }
        let mut cdf = Vec::with_capacity(self.texels.len());
        let mut acc = 0.0;
        for j in 0..self.height {
            let sa = self.texel_solid_angle(j);
            for i in 0..self.width {
                acc += luminance(self.texel(i, j)) * sa;
                cdf.push(acc);
            }
        }
        (acc > 0.0).then_some(TexelSampler { cdf, total: acc })
    }

    pub fn direction_to_texel(&self, dir: Vec3) -> (usize, usize) {
        let u = 0.5 + dir.x.atan2(-dir.z) / TAU;
        let v = dir.y.clamp(-1.0, 1.0).acos() / PI;
        let x = ((u * self.width as f64) as usize).min(self.width - 1);
        let y = ((v * self.height as f64) as usize).min(self.height - 1);
        (x, y)
    }

    /// Scaled radiance arriving from direction `dir` (unit, pointing away
    /// from the receiver).
    pub fn radiance(&self, dir: Vec3) -> [f64; 3] {
        let (x, y) = self.direction_to_texel(dir);
        self.texel(x, y).map(|v| v * self.intensity_scale)
    }

    /// Draws a direction proportionally to luminance × texel solid angle,
    /// or uniformly over the sphere for tiny or black maps.
    pub fn sample(&self, u: [f64; 3]) -> EnvSample {
        match &self.sampler {
            Some(s) => {
                let target = u[0] * s.total;
                let idx = s.cdf.partition_point(|&c| c <= target).min(s.cdf.len() - 1);
                let (i, j) = (idx % self.width, idx / self.width);
                let (t0, t1) = row_bounds(j, self.height);
                let cos_t = t0.cos() + u[1] * (t1.cos() - t0.cos());
                let phi_u = (i as f64 + u[2]) / self.width as f64;
                let dir = dir_from(cos_t, phi_u);
                let weight = luminance(self.texel(i, j)) * self.texel_solid_angle(j);
                let pdf = weight / s.total / self.texel_solid_angle(j);
                EnvSample {
                    dir,
                    radiance: self.texel(i, j).map(|v| v * self.intensity_scale),
                    pdf,
                }
            }
            None => {
                let cos_t = 1.0 - 2.0 * u[1];
                let dir = dir_from(cos_t, u[2]);
                EnvSample {
                    dir,
                    radiance: self.radiance(dir),
                    pdf: 1.0 / (4.0 * PI),
                }
            }
        }
    }

    /// Solid-angle density [`sample`](Self::sample) assigns to `dir`.
    pub fn pdf(&self, dir: Vec3) -> f64 {
        match &self.sampler {
            Some(s) => {
                let (x, y) = self.direction_to_texel(dir);
                luminance(self.texel(x, y)) / s.total
            }
            None => 1.0 / (4.0 * PI),
        }
    }

    pub fn scaled(&self, factor: f64) -> EnvironmentMap {
        let mut e = self.clone();
        e.intensity_scale *= factor;
        e
    }
}

/// Direction with polar cosine `cos_t` and azimuth fraction `u` in the
/// equirectangular convention.
fn dir_from(cos_t: f64, u: f64) -> Vec3 {
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let phi = (u - 0.5) * TAU;
    Vec3::new(sin_t * phi.sin(), cos_t, -sin_t * phi.cos())
}

/// Reads a Radiance RGBE (.hdr) file. Non-2:1 images are letterboxed with
/// black texels.
pub fn load_hdri(path: &Path) -> Result<EnvironmentMap> {
    use image::ImageDecoder;
    let malformed = |reason: String| Error::MalformedHdr {
        path: path.to_path_buf(),
        reason,
    };
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = image::codecs::hdr::HdrDecoder::new(BufReader::new(file)).map_err(|e| malformed(e.to_string()))?;
    let (w, h) = decoder.dimensions();
    let (w, h) = (w as usize, h as usize);
    let mut bytes = vec![0u8; decoder.total_bytes() as usize];
    decoder.read_image(&mut bytes).map_err(|e| malformed(e.to_string()))?;
    let floats: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_ne_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let texels: Vec<[f64; 3]> = floats
        .chunks_exact(3)
        .map(|c| [f64::from(c[0]), f64::from(c[1]), f64::from(c[2])])
        .collect();
    if w == 2 * h {
        return EnvironmentMap::new(w, h, texels);
    }
    log::warn!("{}: {w}x{h} is not 2:1, letterboxing", path.display());
    let (nw, nh) = if w > 2 * h { (w + w % 2, (w + w % 2) / 2) } else { (2 * h, h) };
    let (ox, oy) = ((nw - w) / 2, (nh - h) / 2);
    let mut padded = vec![[0.0; 3]; nw * nh];
    for y in 0..h {
        for x in 0..w {
            padded[(y + oy) * nw + x + ox] = texels[y * w + x];
        }
    }
    EnvironmentMap::new(nw, nh, padded)
}

/// Writes a map as an uncompressed RGBE file; used for fixtures and demos.
pub fn save_hdri(env: &EnvironmentMap, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let pixels: Vec<image::Rgb<f32>> = env
        .texels
        .iter()
        .map(|t| image::Rgb(t.map(|v| (v * env.intensity_scale) as f32)))
        .collect();
    image::codecs::hdr::HdrEncoder::new(std::io::BufWriter::new(file)).encode(&pixels, env.width, env.height)?;
    Ok(())
}

/// Horizontal illuminance in lux at the map's center, unoccluded:
/// 683 · ∫ Y(ω) cos θ dω over the upper hemisphere.
pub fn horizontal_illuminance(env: &EnvironmentMap) -> f64 {
    let dphi = TAU / env.width as f64;
    let mut sum = 0.0;
    for j in 0..env.height {
        let (t0, t1) = row_bounds(j, env.height);
        if t0 >= PI / 2.0 {
            break;
        }
        let t1 = t1.min(PI / 2.0);
        // ∫ cosθ sinθ dθ over the row, exact per texel.
        let w = 0.5 * (t1.sin().powi(2) - t0.sin().powi(2)) * dphi;
        let row: f64 = (0..env.width).map(|i| luminance(env.texel(i, j))).sum();
        sum += row * w;
    }
    LUMENS_PER_WATT * env.intensity_scale * sum
}

/// Rescales `env` so its horizontal illuminance equals `target_lux`.
pub fn normalize_to_lux(env: &EnvironmentMap, target_lux: f64) -> Result<EnvironmentMap> {
    if !(target_lux > 0.0 && target_lux.is_finite()) {
        return Err(Error::InvalidParam(format!("target illuminance {target_lux} must be > 0")));
    }
    let mut out = env.clone();
    out.intensity_scale = 1.0;
    let base = horizontal_illuminance(&out);
    if !(base > 0.0) {
        return Err(Error::ZeroEnergy);
    }
    out.intensity_scale = target_lux / base;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SunLight {
    /// Unit vector pointing toward the sun.
    pub direction: Vec3,
    /// Illuminance on a surface facing the sun, in lux.
    pub illuminance: f64,
}

impl SunLight {
    /// Direction from azimuth (degrees from +z toward +x) and elevation.
    pub fn direction_from_angles(azimuth_deg: f64, elevation_deg: f64) -> Vec3 {
        let (a, e) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
        Vec3::new(e.cos() * a.sin(), e.sin(), e.cos() * a.cos())
    }

    /// Irradiance in radiance units on a surface facing the sun.
    pub fn irradiance(&self) -> f64 {
        self.illuminance / LUMENS_PER_WATT
    }
}

/// Sun light carrying the difference between the readings with and without
/// direct sunlight.
pub fn split_sun(total_lux: f64, ambient_lux: f64, direction: Vec3) -> Result<SunLight> {
    if !(ambient_lux >= 0.0 && total_lux.is_finite()) {
        return Err(Error::InvalidParam(format!("ambient illuminance {ambient_lux} must be >= 0")));
    }
    if total_lux < ambient_lux {
        return Err(Error::SunBelowAmbient {
            total: total_lux,
            ambient: ambient_lux,
        });
    }
    let len = direction.length();
    if !((len - 1.0).abs() < 1e-6) {
        return Err(Error::InvalidParam(format!("sun direction must be unit length, got {len}")));
    }
    Ok(SunLight {
        direction,
        illuminance: total_lux - ambient_lux,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LightingRig {
    pub env: EnvironmentMap,
    pub sun: Option<SunLight>,
    pub ambient_lux: f64,
}

impl LightingRig {
    /// Normalizes `env` to `ambient_lux` and attaches the optional sun.
    pub fn new(env: &EnvironmentMap, ambient_lux: f64, sun: Option<SunLight>) -> Result<Self> {
        if !(ambient_lux > 0.0) {
            return Err(Error::InvalidParam(format!("ambient illuminance {ambient_lux} must be > 0")));
        }
        Ok(LightingRig {
            env: normalize_to_lux(env, ambient_lux)?,
            sun,
            ambient_lux,
        })
    }

    /// Horizontal illuminance at the origin from the map plus the sun.
    pub fn horizontal_illuminance(&self) -> f64 {
        let sun = self
            .sun
            .map(|s| s.illuminance * s.direction.y.max(0.0))
            .unwrap_or(0.0);
        horizontal_illuminance(&self.env) + sun
    }

    /// Every emitter multiplied by `k`.
    pub fn scaled(&self, k: f64) -> LightingRig {
        LightingRig {
            env: self.env.scaled(k),
            sun: self.sun.map(|s| SunLight {
                illuminance: s.illuminance * k,
                ..s
            }),
            ambient_lux: self.ambient_lux * k,
        }
    }
}

/// Bundled synthetic environments for tests and demos.
pub mod synthetic {
    use super::*;

    pub fn uniform_sky(width: usize) -> EnvironmentMap {
        EnvironmentMap::uniform([1.0, 1.0, 1.0], width).unwrap()
    }

    /// Bluish zenith fading to a pale horizon over a darker ground.
    pub fn gradient_sky(width: usize) -> EnvironmentMap {
        let height = width / 2;
        let zenith = [0.35, 0.55, 1.0];
        let horizon = [0.9, 0.92, 0.95];
        let ground = [0.18, 0.16, 0.13];
        let mut texels = Vec::with_capacity(width * height);
        for j in 0..height {
            let theta = PI * (j as f64 + 0.5) / height as f64;
            let c = if theta < PI / 2.0 {
                let t = (theta / (PI / 2.0)).powf(1.5);
                std::array::from_fn(|k| zenith[k] + (horizon[k] - zenith[k]) * t)
            } else {
                ground
            };
            texels.extend(std::iter::repeat_n(c, width));
        }
        EnvironmentMap::new(width, height, texels).unwrap()
    }

    /// A dim room lit by a bright rectangular ceiling panel roughly
    /// overhead, like a color evaluation booth.
    pub fn indoor_lamp_panel(width: usize) -> EnvironmentMap {
        let height = width / 2;
        let wall = [0.05, 0.05, 0.048];
        let floor = [0.03, 0.028, 0.025];
        let lamp = [40.0, 40.0, 38.0];
        let mut texels = Vec::with_capacity(width * height);
        for j in 0..height {
            let theta = PI * (j as f64 + 0.5) / height as f64;
            for i in 0..width {
                let d = dir_from(theta.cos(), (i as f64 + 0.5) / width as f64);
                // Panel spans |x/y| < 0.35, |z/y| < 0.6 on the ceiling,
                // offset slightly toward -z.
                let on_panel = d.y > 0.0 && (d.x / d.y).abs() < 0.35 && ((d.z + 0.2 * d.y) / d.y).abs() < 0.6;
                texels.push(if on_panel {
                    lamp
                } else if theta < PI / 2.0 {
                    wall
                } else {
                    floor
                });
            }
        }
        EnvironmentMap::new(width, height, texels).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_map_illuminance_is_pi_y() {
        let env = EnvironmentMap::uniform([0.5, 0.5, 0.5], 64).unwrap();
        let e = horizontal_illuminance(&env);
        let want = LUMENS_PER_WATT * PI * 0.5;
        assert!((e / want - 1.0).abs() < 1e-3, "{e} vs {want}");
    }

    #[test]
    fn black_map_has_zero_illuminance() {
        let env = EnvironmentMap::uniform([0.0; 3], 32).unwrap();
        assert_eq!(horizontal_illuminance(&env), 0.0);
        assert!(matches!(normalize_to_lux(&env, 100.0), Err(Error::ZeroEnergy)));
    }

    /// Independent Monte-Carlo integral of Y cos θ over the upper
    /// hemisphere, drawing cosine-weighted directions.
    fn mc_illuminance(env: &EnvironmentMap, n: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut acc = 0.0;
        for _ in 0..n {
            let (u1, u2): (f64, f64) = (rng.random(), rng.random());
            let r = u1.sqrt();
            let phi = TAU * u2;
            let dir = Vec3::new(r * phi.cos(), (1.0 - u1).sqrt(), r * phi.sin());
            acc += luminance(env.radiance(dir));
        }
        // pdf = cos/π, so the estimator of ∫Y cos dω is π·mean(Y).
        LUMENS_PER_WATT * PI * acc / n as f64
    }

    #[test]
    fn random_map_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (w, h) = (32, 16);
        let texels = (0..w * h).map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()]).collect();
        let env = EnvironmentMap::new(w, h, texels).unwrap();
        let e = horizontal_illuminance(&env);
        let mc = mc_illuminance(&env, 400_000, 5);
        assert!((e / mc - 1.0).abs() < 0.01, "{e} vs {mc}");
    }

    #[test]
    fn illuminance_converges_under_refinement() {
        let coarse = synthetic::gradient_sky(128);
        let fine = synthetic::gradient_sky(256);
        let (a, b) = (horizontal_illuminance(&coarse), horizontal_illuminance(&fine));
        assert!((a / b - 1.0).abs() < 0.005, "{a} vs {b}");
    }

    #[test]
    fn normalization_hits_target() {
        for env in [synthetic::gradient_sky(64), synthetic::indoor_lamp_panel(128)] {
            let n = normalize_to_lux(&env, 2000.0).unwrap();
            assert!((horizontal_illuminance(&n) / 2000.0 - 1.0).abs() < 1e-3);
            let again = normalize_to_lux(&n, 2000.0).unwrap();
            assert!((again.intensity_scale / n.intensity_scale - 1.0).abs() < 1e-12);
            let doubled = normalize_to_lux(&env, 4000.0).unwrap();
            assert!((doubled.intensity_scale / n.intensity_scale - 2.0).abs() < 1e-12);
        }
        let env = EnvironmentMap::uniform([1.0; 3], 32).unwrap();
        let current = horizontal_illuminance(&env);
        let same = normalize_to_lux(&env, current).unwrap();
        assert!((same.intensity_scale - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sun_split() {
        let up = Vec3::Y;
        assert_eq!(split_sun(50000.0, 20000.0, up).unwrap().illuminance, 30000.0);
        assert_eq!(split_sun(20000.0, 20000.0, up).unwrap().illuminance, 0.0);
        assert!(matches!(split_sun(1000.0, 2000.0, up), Err(Error::SunBelowAmbient { .. })));
        assert!(split_sun(3000.0, 2000.0, Vec3::new(1.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn importance_sampling_is_consistent() {
        // E[L/pdf] over the sphere equals the sphere integral of L.
        let env = synthetic::indoor_lamp_panel(128);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let s = env.sample([rng.random(), rng.random(), rng.random()]);
            assert!((s.pdf / env.pdf(s.dir) - 1.0).abs() < 1e-6 || luminance(s.radiance) == 0.0);
            acc += luminance(s.radiance) / s.pdf;
        }
        let est = acc / n as f64;
        let mut exact = 0.0;
        for j in 0..env.height() {
            for i in 0..env.width() {
                exact += luminance(env.texel(i, j)) * env.texel_solid_angle(j);
            }
        }
        assert!((est / exact - 1.0).abs() < 0.01, "{est} vs {exact}");
    }

    #[test]
    fn direction_round_trip() {
        let env = EnvironmentMap::uniform([1.0; 3], 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let (i, j) = (rng.random_range(0..64), rng.random_range(0..32));
            let d = dir_from(
                (PI * (j as f64 + 0.5) / 32.0).cos(),
                (i as f64 + 0.5) / 64.0,
            );
            assert_eq!(env.direction_to_texel(d), (i, j));
        }
        assert_eq!(env.direction_to_texel(Vec3::new(0.0, 0.0, -1.0)).0, 32);
    }

    #[test]
    fn hdr_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ones.hdr");
        save_hdri(&EnvironmentMap::uniform([1.0; 3], 4).unwrap(), &path).unwrap();
        let env = load_hdri(&path).unwrap();
        assert_eq!((env.width(), env.height()), (4, 2));
        assert!(env.texels().iter().all(|t| *t == [1.0, 1.0, 1.0]));
    }

    #[test]
    fn rig_scaling_and_sun() {
        let sun = SunLight {
            direction: SunLight::direction_from_angles(0.0, 30.0),
            illuminance: 10000.0,
        };
        let rig = LightingRig::new(&synthetic::gradient_sky(64), 5000.0, Some(sun)).unwrap();
        let e = rig.horizontal_illuminance();
        assert!((e - (5000.0 + 5000.0)).abs() < 5.0, "{e}");
        assert!((rig.scaled(2.0).horizontal_illuminance() / e - 2.0).abs() < 1e-12);
    }
}
