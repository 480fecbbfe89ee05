//! Monte-Carlo renderer producing scene-linear images.
//!
//! Each camera path does next-event estimation against the environment map
//! (luminance importance sampling, hard shadows) and the directional sun at
//! every vertex, and continues with cosine-sampled diffuse bounces. Escaping
//! bounce rays add nothing because the environment is already counted by
//! the light samples.

pub mod bvh;
pub mod image;
pub mod rng;

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lighting::{LightingRig, LUMENS_PER_WATT};
use crate::math::Vec3;
use crate::scene::{Material, SceneGeometry};

pub use self::image::{average_region, LinearImage, Quad, RenderMeta};
use self::bvh::Bvh;
use self::rng::SampleStream;

/// Offset along the facing normal for secondary ray origins, in meters.
const RAY_EPSILON: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    /// Vertical field of view in degrees.
    pub vertical_fov: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub const DEFAULT_RESOLUTION: (usize, usize) = (600, 400);

    pub fn new(position: Vec3, look_at: Vec3, up: Vec3, vertical_fov: f64, width: usize, height: usize) -> Self {
        Camera {
            position,
            look_at,
            up,
            vertical_fov,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fwd = self.look_at - self.position;
        if fwd.length() < 1e-12 || fwd.normalize().cross(self.up).length() < 1e-9 {
            return Err(Error::InvalidParam("camera position, look-at and up are colinear".into()));
        }
        if !(self.vertical_fov > 0.0 && self.vertical_fov < 180.0) {
            return Err(Error::InvalidParam(format!("field of view {} outside (0, 180)", self.vertical_fov)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParam("camera resolution must be non-zero".into()));
        }
        Ok(())
    }

    /// (right, up, forward), orthonormal.
    pub fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let fwd = (self.look_at - self.position).normalize();
        let right = fwd.cross(self.up).normalize();
        let up = right.cross(fwd);
        (right, up, fwd)
    }

    fn tan_half(&self) -> f64 {
        (self.vertical_fov.to_radians() * 0.5).tan()
    }

    /// Primary ray through image point (x, y), y growing downward.
    pub fn ray(&self, x: f64, y: f64) -> (Vec3, Vec3) {
        let (right, up, fwd) = self.basis();
        self.ray_with_basis(x, y, right, up, fwd)
    }

    #[inline]
    fn ray_with_basis(&self, x: f64, y: f64, right: Vec3, up: Vec3, fwd: Vec3) -> (Vec3, Vec3) {
        let t = self.tan_half();
        let h = self.height as f64;
        let sx = (2.0 * x - self.width as f64) / h * t;
        let sy = (h - 2.0 * y) / h * t;
        (self.position, (fwd + right * sx + up * sy).normalize())
    }

    /// Image coordinates of world point `p`.
    pub fn project(&self, p: Vec3) -> Result<[f64; 2]> {
        let (right, up, fwd) = self.basis();
        let d = p - self.position;
        let z = d.dot(fwd);
        if z <= 1e-9 {
            return Err(Error::BehindCamera);
        }
        let t = self.tan_half();
        let h = self.height as f64;
        let sx = d.dot(right) / z / t;
        let sy = d.dot(up) / z / t;
        Ok([(sx * h + self.width as f64) / 2.0, (h - sy * h) / 2.0])
    }
}

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelWindow {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelWindow {
    /// Pixels covering the bounding box of `quad`, clamped to the image.
    pub fn around(quad: &Quad, width: usize, height: usize) -> Self {
        let xs = quad.iter().map(|p| p[0]);
        let ys = quad.iter().map(|p| p[1]);
        let x0 = xs.clone().fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let x1 = (xs.fold(0.0, f64::max).ceil() as usize).min(width);
        let y0 = ys.clone().fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let y1 = (ys.fold(0.0, f64::max).ceil() as usize).min(height);
        PixelWindow { x0, y0, x1, y1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderSettings {
    pub spp: u32,
    pub seed: u64,
    pub bounces: u32,
    /// Worker count; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Only these pixels are computed; the rest stay black.
    pub window: Option<PixelWindow>,
}

impl RenderSettings {
    pub fn new(spp: u32, seed: u64) -> Self {
        RenderSettings {
            spp,
            seed,
            bounces: 2,
            threads: None,
            window: None,
        }
    }
}

#[inline]
fn brdf(m: &Material, n: Vec3, wo: Vec3, wi: Vec3) -> [f64; 3] {
    let cos_i = n.dot(wi);
    let cos_o = n.dot(wo).max(1e-6);
    let kd = (1.0 - m.metallic) * (1.0 - m.specular);
    let a = m.albedo.values;
    let mut f = a.map(|c| c * kd / PI);
    if m.specular > 0.0 || m.metallic > 0.0 {
        let h = (wi + wo).normalize();
        let roughness = 1.0 - m.smoothness;
        let alpha = (roughness * roughness).max(1e-3);
        let a2 = alpha * alpha;
        let nh = n.dot(h).max(0.0);
        let d = a2 / (PI * (nh * nh * (a2 - 1.0) + 1.0).powi(2));
        let g1 = |c: f64| 2.0 * c / (c + (a2 + (1.0 - a2) * c * c).sqrt());
        let g = g1(cos_i) * g1(cos_o);
        let fw = (1.0 - wi.dot(h).max(0.0)).powi(5);
        for (k, fk) in f.iter_mut().enumerate() {
            let f0 = m.specular + (a[k] - m.specular) * m.metallic;
            let fres = f0 + (1.0 - f0) * fw;
            *fk += d * g * fres / (4.0 * cos_i * cos_o);
        }
    }
    f
}

/// Cosine-weighted direction about `n`.
#[inline]
fn cosine_sample(n: Vec3, u: [f64; 2]) -> Vec3 {
    let r = u[0].sqrt();
    let phi = 2.0 * PI * u[1];
    let (t, b) = n.basis();
    (t * (r * phi.cos()) + b * (r * phi.sin()) + n * (1.0 - u[0]).max(0.0).sqrt()).normalize()
}

struct Integrator<'a> {
    scene: &'a SceneGeometry,
    bvh: &'a Bvh,
    rig: &'a LightingRig,
    bounces: u32,
}

impl Integrator<'_> {
    fn radiance(&self, origin: Vec3, dir: Vec3, rng: &mut SampleStream) -> [f64; 3] {
        let mut l = [0.0; 3];
        let mut beta = [1.0; 3];
        let (mut o, mut d) = (origin, dir);
        for depth in 0..=self.bounces {
            let Some(hit) = self.bvh.intersect(o, d, f64::INFINITY) else {
                if depth == 0 {
                    l = self.rig.env.radiance(d);
                }
                break;
            };
            let tri = &self.scene.triangles[hit.prim as usize];
            let mat = &self.scene.materials[tri.material as usize];
            let mut n = (tri.v[1] - tri.v[0]).cross(tri.v[2] - tri.v[0]).normalize();
            if n.dot(d) > 0.0 {
                n = -n;
            }
            let wo = -d;
            let p = o + d * hit.t + n * RAY_EPSILON;

            let s = self.rig.env.sample(rng.next3());
            let cos = n.dot(s.dir);
            if cos > 0.0 && s.pdf > 0.0 && !self.bvh.occluded(p, s.dir, f64::INFINITY) {
                let f = brdf(mat, n, wo, s.dir);
                for k in 0..3 {
                    l[k] += beta[k] * f[k] * s.radiance[k] * cos / s.pdf;
                }
            }

            if let Some(sun) = &self.rig.sun {
                let cos = n.dot(sun.direction);
                if sun.illuminance > 0.0 && cos > 0.0 && !self.bvh.occluded(p, sun.direction, f64::INFINITY) {
                    let e = sun.illuminance / LUMENS_PER_WATT * cos;
                    let kd = (1.0 - mat.metallic) * (1.0 - mat.specular) / PI;
                    for k in 0..3 {
                        l[k] += beta[k] * mat.albedo.values[k] * kd * e;
                    }
                }
            }

            if depth == self.bounces {
                break;
            }
            let kd = (1.0 - mat.metallic) * (1.0 - mat.specular);
            for k in 0..3 {
                beta[k] *= mat.albedo.values[k] * kd;
            }
            if beta.iter().all(|&b| b == 0.0) {
                break;
            }
            o = p;
            d = cosine_sample(n, rng.next2());
        }
        l
    }
}

/// Renders `scene` under `rig` from `cam`. Output depends only on the
/// inputs and `settings.spp`/`seed`/`bounces`, never on the worker count.
pub fn render(scene: &SceneGeometry, rig: &LightingRig, cam: &Camera, settings: &RenderSettings) -> Result<LinearImage> {
    let bvh = Bvh::build(scene);
    render_with_bvh(scene, &bvh, rig, cam, settings)
}

pub fn render_with_bvh(
    scene: &SceneGeometry,
    bvh: &Bvh,
    rig: &LightingRig,
    cam: &Camera,
    settings: &RenderSettings,
) -> Result<LinearImage> {
    if scene.triangles.is_empty() {
        return Err(Error::InvalidParam("cannot render an empty scene".into()));
    }
    if settings.spp == 0 {
        return Err(Error::InvalidParam("spp must be >= 1".into()));
    }
    cam.validate()?;
    let (w, h) = (cam.width, cam.height);
    let win = settings.window.unwrap_or(PixelWindow {
        x0: 0,
        y0: 0,
        x1: w,
        y1: h,
    });
    if win.x1 > w || win.y1 > h || win.x0 > win.x1 || win.y0 > win.y1 {
        return Err(Error::InvalidParam(format!("pixel window {win:?} outside {w}x{h}")));
    }
    let integ = Integrator {
        scene,
        bvh,
        rig,
        bounces: settings.bounces,
    };
    let (right, up, fwd) = cam.basis();
    let spp = settings.spp as usize;
    let cols = (spp as f64).sqrt().ceil() as usize;
    let rows = spp.div_ceil(cols);

    let shade_row = |y: usize, row: &mut [[f64; 3]]| {
        if y < win.y0 || y >= win.y1 {
            return;
        }
        for (x, out) in row.iter_mut().enumerate().take(win.x1).skip(win.x0) {
            let pixel = (y * w + x) as u64;
            let mut acc = [0.0; 3];
            for s in 0..spp {
                let mut rng = SampleStream::new(settings.seed, pixel, s as u64);
                let [jx, jy] = rng.next2();
                let sx = ((s % cols) as f64 + jx) / cols as f64;
                let sy = ((s / cols) as f64 + jy) / rows as f64;
                let (o, d) = cam.ray_with_basis(x as f64 + sx, y as f64 + sy, right, up, fwd);
                let l = integ.radiance(o, d, &mut rng);
                for k in 0..3 {
                    acc[k] += l[k];
                }
            }
            *out = acc.map(|v| v / spp as f64);
        }
    };

    let mut pixels = vec![[0.0; 3]; w * h];
    let run = |pixels: &mut Vec<[f64; 3]>| {
        pixels
            .par_chunks_mut(w)
            .enumerate()
            .for_each(|(y, row)| shade_row(y, row));
    };
    match settings.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidParam(format!("thread pool: {e}")))?
            .install(|| run(&mut pixels)),
        None => run(&mut pixels),
    }
    Ok(LinearImage::new(
        w,
        h,
        pixels,
        RenderMeta {
            spp: settings.spp,
            seed: settings.seed,
            bounce_count: settings.bounces,
        },
    ))
}

/// Exposure that makes an ideal horizontal 18% Lambertian card at the
/// origin read 0.18: π / E, with E the horizontal irradiance in radiance
/// units (lux / 683).
pub fn gray_card_scale(rig: &LightingRig) -> Result<f64> {
    let e = rig.horizontal_illuminance() / LUMENS_PER_WATT;
    if !(e > 0.0 && e.is_finite()) {
        return Err(Error::ZeroIlluminance);
    }
    Ok(PI / e)
}

pub fn expose_gray_card(img: &LinearImage, rig: &LightingRig) -> Result<LinearImage> {
    let s = gray_card_scale(rig)?;
    let mut out = img.clone();
    for p in &mut out.pixels {
        *p = p.map(|v| v * s);
    }
    out.exposure_scale *= s;
    Ok(out)
}

/// Image-space quad of the grass pixel's top footprint corners.
pub fn project_pixel_corners(scene: &SceneGeometry, cam: &Camera) -> Result<Quad> {
    let corners = scene
        .footprint_corners
        .ok_or_else(|| Error::InvalidParam("scene has no grass pixel footprint".into()))?;
    let mut q = [[0.0; 2]; 4];
    for (i, c) in corners.iter().enumerate() {
        q[i] = cam.project(*c)?;
    }
    Ok(q)
}

/// Image-space quads of the checker patches, in patch order.
pub fn project_patch_quads(scene: &SceneGeometry, cam: &Camera) -> Result<Vec<Quad>> {
    scene
        .patch_corners
        .iter()
        .map(|c| {
            let mut q = [[0.0; 2]; 4];
            for i in 0..4 {
                q[i] = cam.project(c[i])?;
            }
            Ok(q)
        })
        .collect()
}
