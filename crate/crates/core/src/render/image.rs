use serde::{Deserialize, Serialize};

use crate::colorimetry::{self, Color};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderMeta {
    pub spp: u32,
    pub seed: u64,
    pub bounce_count: u32,
}

/// Scene-linear image in linear display RGB. Row-major, row 0 at the top.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f64; 3]>,
    pub exposure_scale: f64,
    pub meta: RenderMeta,
}

impl LinearImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>, meta: RenderMeta) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel buffer size");
        LinearImage {
            width,
            height,
            pixels,
            exposure_scale: 1.0,
            meta,
        }
    }

    pub fn filled(width: usize, height: usize, value: [f64; 3]) -> Self {
        Self::new(
            width,
            height,
            vec![value; width * height],
            RenderMeta {
                spp: 0,
                seed: 0,
                bounce_count: 0,
            },
        )
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: [f64; 3]) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn mean(&self) -> [f64; 3] {
        let mut acc = [0.0; 3];
        for p in &self.pixels {
            for c in 0..3 {
                acc[c] += p[c];
            }
        }
        let n = self.pixels.len().max(1) as f64;
        acc.map(|v| v / n)
    }

    /// 8-bit sRGB preview; clips, never used for measurement.
    pub fn to_preview_rgb8(&self) -> image::RgbImage {
        image::RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let [r, g, b] = self.get(x as usize, y as usize);
            let e = colorimetry::encode_srgb(&Color::display_rgb(r, g, b));
            image::Rgb([e.r, e.g, e.b])
        })
    }

    /// Writes a float OpenEXR dump of the linear pixels.
    pub fn write_exr(&self, path: &std::path::Path) -> Result<()> {
        let buf: Vec<f32> = self
            .pixels
            .iter()
            .flat_map(|p| p.map(|v| v as f32))
            .collect();
        let img = image::Rgb32FImage::from_raw(self.width as u32, self.height as u32, buf)
            .expect("buffer matches dimensions");
        image::DynamicImage::ImageRgb32F(img)
            .save_with_format(path, image::ImageFormat::OpenExr)?;
        Ok(())
    }
}

/// Four image-space corners `[x, y]` in pixel units, pixel centers at
/// half-integers.
pub type Quad = [[f64; 2]; 4];

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segments_cross(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    (d1 > 0.0) != (d2 > 0.0) && (d3 > 0.0) != (d4 > 0.0) && d1 != 0.0 && d2 != 0.0
}

pub fn quad_area(q: &Quad) -> f64 {
    let mut a = 0.0;
    for i in 0..4 {
        let p = q[i];
        let n = q[(i + 1) % 4];
        a += p[0] * n[1] - n[0] * p[1];
    }
    0.5 * a
}

pub fn validate_quad(q: &Quad) -> Result<()> {
    if q.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateQuad("non-finite corner"));
    }
    if segments_cross(q[0], q[1], q[2], q[3]) || segments_cross(q[1], q[2], q[3], q[0]) {
        return Err(Error::DegenerateQuad("self-intersecting"));
    }
    if quad_area(q).abs() < 1e-9 {
        return Err(Error::DegenerateQuad("zero area"));
    }
    Ok(())
}

pub fn point_in_quad(q: &Quad, p: [f64; 2]) -> bool {
    let mut inside = false;
    let mut j = 3;
    for i in 0..4 {
        let (a, b) = (q[i], q[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Shrinks a quad toward its vertex centroid by `fraction`.
pub fn shrink_quad(q: &Quad, fraction: f64) -> Quad {
    let cx = q.iter().map(|p| p[0]).sum::<f64>() / 4.0;
    let cy = q.iter().map(|p| p[1]).sum::<f64>() / 4.0;
    q.map(|[x, y]| [cx + (x - cx) * (1.0 - fraction), cy + (y - cy) * (1.0 - fraction)])
}

/// Mean linear RGB over pixels whose centers lie inside `quad`.
pub fn average_region(img: &LinearImage, quad: &Quad) -> Result<Color> {
    validate_quad(quad)?;
    let (w, h) = (img.width as f64, img.height as f64);
    if quad
        .iter()
        .any(|&[x, y]| x < 0.0 || y < 0.0 || x > w || y > h)
    {
        return Err(Error::DegenerateQuad("outside image bounds"));
    }
    let x0 = quad.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min).floor() as usize;
    let x1 = quad.iter().map(|p| p[0]).fold(0.0, f64::max).ceil() as usize;
    let y0 = quad.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min).floor() as usize;
    let y1 = quad.iter().map(|p| p[1]).fold(0.0, f64::max).ceil() as usize;
    let mut acc = [0.0; 3];
    let mut n = 0usize;
    for y in y0..y1.min(img.height) {
        for x in x0..x1.min(img.width) {
            if point_in_quad(quad, [x as f64 + 0.5, y as f64 + 0.5]) {
                let p = img.get(x, y);
                for c in 0..3 {
                    acc[c] += p[c];
                }
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::EmptyRegion);
    }
    let n = n as f64;
    Ok(Color::display_rgb(acc[0] / n, acc[1] / n, acc[2] / n))
}
