//! Procedural grass pixel, color checker and viewpoint cameras.
//!
//! World axes: meters, y up, the floor at y = 0. The grass pixel footprint
//! is centered on the origin. Slits run along x, so a viewer on the +z axis
//! (θ = 0) looks across them. Lengths arrive in millimeters and are
//! converted here.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::colorimetry::{decode_srgb, Color, EncodedSrgb, Space};
use crate::error::{Error, Result};
use crate::math::{Aabb, Vec3};
use crate::render::Camera;

const MM: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub albedo: Color,
    pub metallic: f64,
    pub smoothness: f64,
    /// Normal-incidence reflectance of the dielectric coat, at most 0.04.
    pub specular: f64,
}

impl Material {
    pub const DIELECTRIC_F0: f64 = 0.04;

    pub fn new(albedo: Color, metallic: f64, smoothness: f64) -> Result<Self> {
        Self::with_specular(albedo, metallic, smoothness, Self::DIELECTRIC_F0)
    }

    pub fn with_specular(albedo: Color, metallic: f64, smoothness: f64, specular: f64) -> Result<Self> {
        if albedo.space != Space::LinearDisplayRgb {
            return Err(Error::WrongSpace {
                expected: Space::LinearDisplayRgb,
                got: albedo.space,
            });
        }
        if albedo.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParam(format!("albedo {:?} outside [0, 1]", albedo.values)));
        }
        for (name, v, hi) in [
            ("metallic", metallic, 1.0),
            ("smoothness", smoothness, 1.0),
            ("specular", specular, Self::DIELECTRIC_F0),
        ] {
            if !(0.0..=hi).contains(&v) {
                return Err(Error::InvalidParam(format!("{name} {v} outside [0, {hi}]")));
            }
        }
        Ok(Material {
            albedo,
            metallic,
            smoothness,
            specular,
        })
    }

    /// Default engine-like surface: metallic 0, smoothness 0.5.
    pub fn standard(albedo: Color) -> Result<Self> {
        Self::new(albedo, 0.0, 0.5)
    }

    /// Pure Lambertian reflector without the specular coat.
    pub fn lambertian(albedo: Color) -> Result<Self> {
        Self::with_specular(albedo, 0.0, 0.5, 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Part {
    Base,
    FixedBlade,
    AdjustableBlade,
    Board,
    Patch(u8),
    Other,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triangle {
    pub v: [Vec3; 3],
    pub material: u32,
    pub part: Part,
}

impl Triangle {
    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::EMPTY;
        for p in self.v {
            b.grow(p);
        }
        b
    }
}

/// Immutable triangle soup plus the reference points measurement needs.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneGeometry {
    pub triangles: Vec<Triangle>,
    pub materials: Vec<Material>,
    pub bounds: Aabb,
    /// Top corners of the grass pixel footprint, counter-clockwise seen from
    /// above starting at (-x, -z).
    pub footprint_corners: Option<[Vec3; 4]>,
    /// Checker patch corners, row-major, same winding as the footprint.
    pub patch_corners: Vec<[Vec3; 4]>,
}

impl SceneGeometry {
    pub fn new(materials: Vec<Material>) -> Self {
        SceneGeometry {
            triangles: Vec::new(),
            materials,
            bounds: Aabb::EMPTY,
            footprint_corners: None,
            patch_corners: Vec::new(),
        }
    }

    pub fn push_triangle(&mut self, v: [Vec3; 3], material: u32, part: Part) {
        assert!((material as usize) < self.materials.len(), "material index");
        let t = Triangle { v, material, part };
        self.bounds = self.bounds.union(t.bounds());
        self.triangles.push(t);
    }

    /// Quad `a b c d` as two triangles.
    pub fn push_quad(&mut self, q: [Vec3; 4], material: u32, part: Part) {
        self.push_triangle([q[0], q[1], q[2]], material, part);
        self.push_triangle([q[0], q[2], q[3]], material, part);
    }

    pub fn count_part(&self, part: Part) -> usize {
        self.triangles.iter().filter(|t| t.part == part).count()
    }

    /// Merges another scene, offsetting its material indices.
    pub fn merge(&mut self, other: &SceneGeometry) {
        let offset = self.materials.len() as u32;
        self.materials.extend_from_slice(&other.materials);
        for t in &other.triangles {
            self.push_triangle(t.v, t.material + offset, t.part);
        }
        if self.footprint_corners.is_none() {
            self.footprint_corners = other.footprint_corners;
        }
        self.patch_corners.extend_from_slice(&other.patch_corners);
    }
}

/// Grass pixel description. Lengths in millimeters, densities in blades/cm².
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrassPixelParams {
    pub surface_size: [f64; 2],
    pub base_height: f64,
    pub fixed_length: f64,
    pub slit_count: u32,
    pub slit_width: f64,
    /// Solid rim kept at both slit ends along x.
    pub slit_margin: f64,
    pub adjustable_range: [f64; 2],
    pub fixed_albedo: Color,
    pub adjustable_albedo: Color,
    pub base_albedo: Color,
    pub fixed_density: f64,
    pub adjustable_density: f64,
    pub blade_width: f64,
    /// Tip width as a fraction of the root width.
    pub blade_taper: f64,
    pub fixed_max_tilt_deg: f64,
    pub adjustable_max_tilt_deg: f64,
    pub smoothness: f64,
    pub seed: u64,
}

pub const DEMO_YELLOW: EncodedSrgb = EncodedSrgb::new(214, 190, 72);
pub const DEMO_GREEN: EncodedSrgb = EncodedSrgb::new(62, 128, 52);

impl Default for GrassPixelParams {
    fn default() -> Self {
        GrassPixelParams {
            surface_size: [33.5, 33.5],
            base_height: 15.0,
            fixed_length: 10.0,
            slit_count: 3,
            slit_width: 5.7,
            slit_margin: 2.0,
            adjustable_range: [0.0, 20.0],
            fixed_albedo: decode_srgb(DEMO_YELLOW),
            adjustable_albedo: decode_srgb(DEMO_GREEN),
            base_albedo: decode_srgb(DEMO_YELLOW),
            fixed_density: 40.0,
            adjustable_density: 60.0,
            blade_width: 1.0,
            blade_taper: 0.35,
            fixed_max_tilt_deg: 12.0,
            adjustable_max_tilt_deg: 4.0,
            smoothness: 0.5,
            seed: 7,
        }
    }
}

/// A rectangle `[x0, x1] × [z0, z1]` in millimeters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub z0: f64,
    pub z1: f64,
}

impl Rect {
    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.z1 - self.z0)
    }

    pub fn contains(&self, x: f64, z: f64) -> bool {
        x >= self.x0 && x <= self.x1 && z >= self.z0 && z <= self.z1
    }
}

/// A sampled blade before it is turned into a card, in millimeters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BladeSample {
    pub root: [f64; 2],
    pub tilt_deg: f64,
    pub tilt_azimuth_deg: f64,
    pub yaw_deg: f64,
}

impl GrassPixelParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        let positive = [
            ("surface_size.x", self.surface_size[0]),
            ("surface_size.z", self.surface_size[1]),
            ("base_height", self.base_height),
            ("fixed_length", self.fixed_length),
            ("slit_width", self.slit_width),
            ("fixed_density", self.fixed_density),
            ("adjustable_density", self.adjustable_density),
            ("blade_width", self.blade_width),
            ("blade_taper", self.blade_taper),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be > 0, got {v}"));
            }
        }
        let [lo, hi] = self.adjustable_range;
        if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
            return bad(format!("adjustable_range {lo}..{hi} invalid"));
        }
        if self.slit_count == 0 {
            return bad("slit_count must be >= 1".into());
        }
        let solid = self.surface_size[1] - self.slit_count as f64 * self.slit_width;
        if solid <= 0.0 {
            return bad("slits do not fit within the surface".into());
        }
        if !(self.slit_margin > 0.0 && 2.0 * self.slit_margin < self.surface_size[0]) {
            return bad(format!("slit_margin {} invalid", self.slit_margin));
        }
        if self.blade_width >= self.slit_width {
            return bad("blade_width must be narrower than a slit".into());
        }
        for (name, v) in [
            ("fixed_max_tilt_deg", self.fixed_max_tilt_deg),
            ("adjustable_max_tilt_deg", self.adjustable_max_tilt_deg),
        ] {
            if !(0.0..60.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 60)"));
            }
        }
        for c in [&self.fixed_albedo, &self.adjustable_albedo, &self.base_albedo] {
            Material::standard(*c)?;
        }
        if !(0.0..=1.0).contains(&self.smoothness) {
            return bad(format!("smoothness {} outside [0, 1]", self.smoothness));
        }
        Ok(())
    }

    /// Solid strip width between slits (also the outer strips).
    pub fn strip_width(&self) -> f64 {
        (self.surface_size[1] - self.slit_count as f64 * self.slit_width) / (self.slit_count as f64 + 1.0)
    }

    /// Slit openings in millimeters, ordered by z.
    pub fn slits(&self) -> Vec<Rect> {
        let hx = self.surface_size[0] / 2.0;
        let hz = self.surface_size[1] / 2.0;
        let strip = self.strip_width();
        (0..self.slit_count)
            .map(|i| {
                let z0 = -hz + strip * (i as f64 + 1.0) + self.slit_width * i as f64;
                Rect {
                    x0: -hx + self.slit_margin,
                    x1: hx - self.slit_margin,
                    z0,
                    z1: z0 + self.slit_width,
                }
            })
            .collect()
    }

    pub fn fixed_area_mm2(&self) -> f64 {
        self.surface_size[0] * self.surface_size[1] - self.slits().iter().map(Rect::area).sum::<f64>()
    }

    pub fn slit_area_mm2(&self) -> f64 {
        self.slits().iter().map(Rect::area).sum()
    }

    pub fn fixed_blade_count(&self) -> usize {
        (self.fixed_density * self.fixed_area_mm2() / 100.0).round() as usize
    }

    pub fn adjustable_blade_count(&self) -> usize {
        (self.adjustable_density * self.slit_area_mm2() / 100.0).round() as usize
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// Seeded placement of the fixed (yellow) blades: uniform over the base
    /// surface outside the slits.
    pub fn sample_fixed_blades(&self) -> Vec<BladeSample> {
        let mut rng = self.rng(1);
        let hx = self.surface_size[0] / 2.0;
        let hz = self.surface_size[1] / 2.0;
        let slits = self.slits();
        let n = self.fixed_blade_count();
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let x = rng.random_range(-hx..hx);
            let z = rng.random_range(-hz..hz);
            if slits.iter().any(|s| s.contains(x, z)) {
                continue;
            }
            out.push(BladeSample {
                root: [x, z],
                tilt_deg: rng.random_range(0.0..=self.fixed_max_tilt_deg),
                tilt_azimuth_deg: rng.random_range(0.0..360.0),
                yaw_deg: rng.random_range(0.0..180.0),
            });
        }
        out
    }

    /// Seeded placement of the adjustable (green) blades inside the slits.
    /// Their tilt leans along the slit so the blades clear the slit walls.
    pub fn sample_adjustable_blades(&self) -> Vec<BladeSample> {
        let mut rng = self.rng(2);
        let slits = self.slits();
        let n = self.adjustable_blade_count();
        let inset = 0.5 * self.blade_width + 0.1;
        let areas: Vec<f64> = slits.iter().map(Rect::area).collect();
        let total: f64 = areas.iter().sum();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let mut pick = rng.random_range(0.0..total);
            let mut slit = slits[slits.len() - 1];
            for (s, a) in slits.iter().zip(&areas) {
                if pick < *a {
                    slit = *s;
                    break;
                }
                pick -= a;
            }
            let x = rng.random_range(slit.x0 + inset..slit.x1 - inset);
            let z = rng.random_range(slit.z0 + inset..slit.z1 - inset);
            let azimuth = if rng.random_bool(0.5) { 0.0 } else { 180.0 };
            out.push(BladeSample {
                root: [x, z],
                tilt_deg: rng.random_range(0.0..=self.adjustable_max_tilt_deg),
                tilt_azimuth_deg: azimuth,
                yaw_deg: rng.random_range(-30.0..30.0),
            });
        }
        out
    }

    /// Bounds of everything the pixel can ever occupy, used for zoom.
    pub fn max_bounds(&self) -> Aabb {
        let hx = self.surface_size[0] / 2.0 * MM;
        let hz = self.surface_size[1] / 2.0 * MM;
        let top = (self.base_height + self.fixed_length.max(self.adjustable_range[1])) * MM;
        Aabb {
            min: Vec3::new(-hx, 0.0, -hz),
            max: Vec3::new(hx, top, hz),
        }
    }
}

fn blade_card(geom: &mut SceneGeometry, base: Vec3, tip: Vec3, yaw_deg: f64, width: f64, taper: f64, mat: u32, part: Part) {
    let axis = (tip - base).normalize();
    let yaw = yaw_deg.to_radians();
    let across = Vec3::new(yaw.cos(), 0.0, yaw.sin());
    // Keep the width vector horizontal and perpendicular to the blade axis
    // so the tip edge stays at a single height.
    let mut w = across - axis * across.dot(axis);
    w.y = 0.0;
    let w = if w.length() > 1e-9 { w.normalize() } else { Vec3::new(1.0, 0.0, 0.0) };
    let hb = w * (0.5 * width);
    let ht = w * (0.5 * width * taper);
    geom.push_quad([base - hb, base + hb, tip + ht, tip - ht], mat, part);
}

fn tilt_dir(tilt_deg: f64, azimuth_deg: f64) -> Vec3 {
    let (t, a) = (tilt_deg.to_radians(), azimuth_deg.to_radians());
    Vec3::new(t.sin() * a.cos(), t.cos(), t.sin() * a.sin())
}

/// Builds the grass pixel with the adjustable blades' tips `length` mm above
/// the base surface.
pub fn build_grass_pixel(p: &GrassPixelParams, length: f64) -> Result<SceneGeometry> {
    p.validate()?;
    let [lo, hi] = p.adjustable_range;
    if !(length >= lo && length <= hi) {
        return Err(Error::LengthOutOfRange {
            length,
            min: lo,
            max: hi,
        });
    }
    let materials = vec![
        Material::new(p.base_albedo, 0.0, p.smoothness)?,
        Material::new(p.fixed_albedo, 0.0, p.smoothness)?,
        Material::new(p.adjustable_albedo, 0.0, p.smoothness)?,
    ];
    let mut g = SceneGeometry::new(materials);
    let top = p.base_height * MM;
    let hx = p.surface_size[0] / 2.0;
    let hz = p.surface_size[1] / 2.0;
    let slits = p.slits();
    let floor = MM.min(top * 0.5);

    // Base: a closed box with rectangular channels under each slit. Faces
    // are split on a shared grid so every edge is used by exactly two
    // triangles.
    let mut xs = vec![-hx, slits[0].x0, slits[0].x1, hx];
    xs.iter_mut().for_each(|v| *v *= MM);
    let mut zs = vec![-hz];
    for s in &slits {
        zs.push(s.z0);
        zs.push(s.z1);
    }
    zs.push(hz);
    zs.iter_mut().for_each(|v| *v *= MM);
    xs.dedup();
    let is_slit = |i: usize, k: usize| i == 1 && k % 2 == 1;
    for i in 0..xs.len() - 1 {
        for k in 0..zs.len() - 1 {
            let (x0, x1, z0, z1) = (xs[i], xs[i + 1], zs[k], zs[k + 1]);
            // Bottom, facing down.
            g.push_quad(
                [Vec3::new(x0, 0.0, z0), Vec3::new(x1, 0.0, z0), Vec3::new(x1, 0.0, z1), Vec3::new(x0, 0.0, z1)],
                0,
                Part::Base,
            );
            if is_slit(i, k) {
                let wall = |a: Vec3, b: Vec3| [a, b, Vec3::new(b.x, floor, b.z), Vec3::new(a.x, floor, a.z)];
                let c = [
                    Vec3::new(x0, top, z0),
                    Vec3::new(x1, top, z0),
                    Vec3::new(x1, top, z1),
                    Vec3::new(x0, top, z1),
                ];
                for e in 0..4 {
                    g.push_quad(wall(c[e], c[(e + 1) % 4]), 0, Part::Base);
                }
                g.push_quad(
                    [Vec3::new(x0, floor, z0), Vec3::new(x0, floor, z1), Vec3::new(x1, floor, z1), Vec3::new(x1, floor, z0)],
                    0,
                    Part::Base,
                );
            } else {
                g.push_quad(
                    [Vec3::new(x0, top, z0), Vec3::new(x0, top, z1), Vec3::new(x1, top, z1), Vec3::new(x1, top, z0)],
                    0,
                    Part::Base,
                );
            }
        }
    }
    let side = |g: &mut SceneGeometry, a: Vec3, b: Vec3| {
        g.push_quad([a, b, Vec3::new(b.x, top, b.z), Vec3::new(a.x, top, a.z)], 0, Part::Base);
    };
    for w in xs.windows(2) {
        side(&mut g, Vec3::new(w[0], 0.0, zs[0]), Vec3::new(w[1], 0.0, zs[0]));
        side(&mut g, Vec3::new(w[1], 0.0, *zs.last().unwrap()), Vec3::new(w[0], 0.0, *zs.last().unwrap()));
    }
    for w in zs.windows(2) {
        side(&mut g, Vec3::new(xs[0], 0.0, w[1]), Vec3::new(xs[0], 0.0, w[0]));
        side(&mut g, Vec3::new(*xs.last().unwrap(), 0.0, w[0]), Vec3::new(*xs.last().unwrap(), 0.0, w[1]));
    }

    // Fixed blades: rooted on the top surface, tips mirrored back inside the
    // footprint.
    let fixed_len = p.fixed_length * MM;
    for b in p.sample_fixed_blades() {
        let base = Vec3::new(b.root[0] * MM, top, b.root[1] * MM);
        let mut d = tilt_dir(b.tilt_deg, b.tilt_azimuth_deg);
        let tip_probe = base + d * fixed_len;
        if tip_probe.x.abs() > hx * MM {
            d.x = -d.x;
        }
        if tip_probe.z.abs() > hz * MM {
            d.z = -d.z;
        }
        blade_card(&mut g, base, base + d * fixed_len, b.yaw_deg, p.blade_width * MM, p.blade_taper, 1, Part::FixedBlade);
    }

    // Adjustable blades: tips exactly `length` above the base surface, long
    // enough to reach the channel floor at maximum extension.
    let blade_len = (top - floor) + hi * MM;
    for b in p.sample_adjustable_blades() {
        let d = tilt_dir(b.tilt_deg, b.tilt_azimuth_deg);
        let root_xz = Vec3::new(b.root[0] * MM, 0.0, b.root[1] * MM);
        let tip = Vec3::new(root_xz.x + d.x * blade_len, top + length * MM, root_xz.z + d.z * blade_len);
        // Clip the hidden part below the channel floor; the root narrows so
        // the taper profile is unchanged.
        let below = (tip.y - floor) / d.y;
        let (base, width) = if below < blade_len {
            let s = below / blade_len;
            (tip - d * below, p.blade_width * MM * (p.blade_taper + (1.0 - p.blade_taper) * s))
        } else {
            (tip - d * blade_len, p.blade_width * MM)
        };
        let taper = p.blade_width * MM * p.blade_taper / width;
        blade_card(&mut g, base, tip, b.yaw_deg, width, taper, 2, Part::AdjustableBlade);
    }

    g.footprint_corners = Some([
        Vec3::new(-hx * MM, top, -hz * MM),
        Vec3::new(-hx * MM, top, hz * MM),
        Vec3::new(hx * MM, top, hz * MM),
        Vec3::new(hx * MM, top, -hz * MM),
    ]);
    Ok(g)
}

/// Color checker layout in millimeters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckerLayout {
    pub patch_size: f64,
    pub gutter: f64,
    /// Height of the board surface above the floor.
    pub elevation: f64,
}

impl Default for CheckerLayout {
    fn default() -> Self {
        CheckerLayout {
            patch_size: 40.0,
            gutter: 6.0,
            elevation: 1.0,
        }
    }
}

impl CheckerLayout {
    pub const COLS: usize = 6;
    pub const ROWS: usize = 4;

    /// Extent of the patch grid (without the outer board rim).
    pub fn grid_extent(&self) -> [f64; 2] {
        [
            self.patch_size * Self::COLS as f64 + self.gutter * (Self::COLS - 1) as f64,
            self.patch_size * Self::ROWS as f64 + self.gutter * (Self::ROWS - 1) as f64,
        ]
    }
}

/// Dark board color behind the checker patches.
pub const CHECKER_BOARD: EncodedSrgb = EncodedSrgb::new(30, 30, 30);

/// Horizontal 4×6 checker centered on the origin. Patch 0 is the far-left
/// patch as seen from +z; rows advance toward +z.
pub fn build_color_checker(albedos: &[Color], layout: &CheckerLayout) -> Result<SceneGeometry> {
    if albedos.len() != 24 {
        return Err(Error::PatchCount(albedos.len()));
    }
    let mut materials = vec![Material::lambertian(decode_srgb(CHECKER_BOARD))?];
    for a in albedos {
        materials.push(Material::lambertian(*a)?);
    }
    let mut g = SceneGeometry::new(materials);
    let [ex, ez] = layout.grid_extent();
    let y = layout.elevation * MM;
    let lift = 0.05 * MM;
    let (bx, bz) = ((ex / 2.0 + layout.gutter) * MM, (ez / 2.0 + layout.gutter) * MM);
    g.push_quad(
        [Vec3::new(-bx, y, -bz), Vec3::new(-bx, y, bz), Vec3::new(bx, y, bz), Vec3::new(bx, y, -bz)],
        0,
        Part::Board,
    );
    for row in 0..CheckerLayout::ROWS {
        for col in 0..CheckerLayout::COLS {
            let idx = row * CheckerLayout::COLS + col;
            let x0 = (-ex / 2.0 + col as f64 * (layout.patch_size + layout.gutter)) * MM;
            let z0 = (-ez / 2.0 + row as f64 * (layout.patch_size + layout.gutter)) * MM;
            let (x1, z1) = (x0 + layout.patch_size * MM, z0 + layout.patch_size * MM);
            let c = [
                Vec3::new(x0, y + lift, z0),
                Vec3::new(x0, y + lift, z1),
                Vec3::new(x1, y + lift, z1),
                Vec3::new(x1, y + lift, z0),
            ];
            g.push_quad(c, idx as u32 + 1, Part::Patch(idx as u8));
            g.patch_corners.push(c);
        }
    }
    Ok(g)
}

/// Eye position relative to the grass pixel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Viewpoint {
    /// Eye height in centimeters.
    pub h: f64,
    /// Horizontal distance to the pixel center in meters.
    pub d: f64,
    /// Horizontal angle in degrees; 0 looks across the slits.
    pub theta: f64,
}

impl Viewpoint {
    pub fn new(h: f64, d: f64, theta: f64) -> Result<Self> {
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidParam(format!("viewpoint distance {d} must be > 0")));
        }
        if !(0.0..360.0).contains(&theta) {
            return Err(Error::InvalidParam(format!("viewpoint angle {theta} outside [0, 360)")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParam(format!("viewpoint height {h} must be > 0")));
        }
        Ok(Viewpoint { h, d, theta })
    }

    pub fn reference() -> Self {
        Viewpoint {
            h: 170.0,
            d: 2.0,
            theta: 0.0,
        }
    }

    /// The h × θ grid of the multi-viewpoint experiment at fixed d.
    pub fn grid(heights: &[f64], d: f64, thetas: &[f64]) -> Result<Vec<Viewpoint>> {
        let mut out = Vec::with_capacity(heights.len() * thetas.len());
        for &h in heights {
            for &t in thetas {
                out.push(Viewpoint::new(h, d, t)?);
            }
        }
        Ok(out)
    }

    pub fn standard_grid() -> Vec<Viewpoint> {
        Self::grid(&[150.0, 160.0, 170.0, 180.0], 2.0, &[0.0, 30.0, 60.0, 90.0]).unwrap()
    }

    pub fn position(&self) -> Vec3 {
        let t = self.theta.to_radians();
        Vec3::new(self.d * t.sin(), self.h / 100.0, self.d * t.cos())
    }
}

/// How the camera frames its target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZoomPolicy {
    pub target: Aabb,
    /// Fraction of the shorter image side the target's projection spans.
    pub fill: f64,
    pub width: usize,
    pub height: usize,
}

impl ZoomPolicy {
    pub const DEFAULT_FILL: f64 = 0.7;

    pub fn for_grass_pixel(p: &GrassPixelParams, width: usize, height: usize) -> Self {
        ZoomPolicy {
            target: p.max_bounds(),
            fill: Self::DEFAULT_FILL,
            width,
            height,
        }
    }

    pub fn for_checker(layout: &CheckerLayout, width: usize, height: usize) -> Self {
        let [ex, ez] = layout.grid_extent();
        let (hx, hz) = ((ex / 2.0 + layout.gutter) * MM, (ez / 2.0 + layout.gutter) * MM);
        ZoomPolicy {
            target: Aabb {
                min: Vec3::new(-hx, 0.0, -hz),
                max: Vec3::new(hx, (layout.elevation + 0.1) * MM, hz),
            },
            fill: 0.9,
            width,
            height,
        }
    }
}

/// Camera at the viewpoint aimed at the origin, with a vertical field of
/// view chosen so the target's projection spans `fill` of the shorter image
/// side. The target is off-center (it sits on the floor), so the view is
/// widened when needed to keep every corner inside a small margin.
pub fn viewpoint_to_camera(v: &Viewpoint, zoom: &ZoomPolicy) -> Camera {
    const EDGE_MARGIN: f64 = 0.98;
    let position = v.position();
    let mut cam = Camera::new(position, Vec3::ZERO, Vec3::Y, 30.0, zoom.width, zoom.height);
    let (right, up, fwd) = cam.basis();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for c in zoom.target.corners() {
        let d = c - position;
        let z = d.dot(fwd);
        let (x, y) = (d.dot(right) / z, d.dot(up) / z);
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    // A normalized offset s lands s / tan(fov/2) * H/2 pixels from center.
    let h = zoom.height as f64;
    let short = zoom.width.min(zoom.height) as f64;
    let span = (x1 - x0).max(y1 - y0);
    let ext = x0.abs().max(x1.abs()).max(y0.abs()).max(y1.abs());
    let tan_fill = span * h / (2.0 * zoom.fill * short);
    let tan_visible = ext * h / (EDGE_MARGIN * short);
    cam.vertical_fov = 2.0 * tan_fill.max(tan_visible).atan().to_degrees();
    cam
}
