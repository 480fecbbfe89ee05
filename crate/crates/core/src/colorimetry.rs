//! Color spaces, conversions and the CIEDE2000 color difference.
//!
//! Everything is double precision and unclipped. RGB spaces are tied to
//! their native white: linear display RGB (sRGB/scRGB primaries) to D65,
//! ProPhoto linear RGB to D50. XYZ and CIELAB carry an explicit white tag,
//! and a Bradford transform bridges the two whites.

use std::sync::LazyLock;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Space {
    LinearDisplayRgb,
    Xyz,
    ProPhotoLinearRgb,
    Cielab,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WhitePoint {
    D65,
    D50,
}

impl WhitePoint {
    /// Tristimulus of the white, normalized to Y = 1.
    pub fn xyz(self) -> [f64; 3] {
        match self {
            WhitePoint::D65 => [0.95047, 1.0, 1.08883],
            WhitePoint::D50 => [0.96422, 1.0, 0.82521],
        }
    }
}

impl Space {
    /// Native white of an RGB space; `None` for XYZ and CIELAB.
    pub fn native_white(self) -> Option<WhitePoint> {
        match self {
            Space::LinearDisplayRgb => Some(WhitePoint::D65),
            Space::ProPhotoLinearRgb => Some(WhitePoint::D50),
            Space::Xyz | Space::Cielab => None,
        }
    }
}

/// A tristimulus triple tagged with its space and white point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Color {
    pub values: [f64; 3],
    pub space: Space,
    pub white: WhitePoint,
}

impl Color {
    pub fn new(values: [f64; 3], space: Space, white: WhitePoint) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(values));
        }
        if let Some(native) = space.native_white() {
            if native != white {
                return Err(Error::UnsupportedConversion {
                    from: space,
                    from_white: white,
                    to: space,
                    to_white: native,
                });
            }
        }
        Ok(Color {
            values,
            space,
            white,
        })
    }

    pub fn display_rgb(r: f64, g: f64, b: f64) -> Self {
        Color {
            values: [r, g, b],
            space: Space::LinearDisplayRgb,
            white: WhitePoint::D65,
        }
    }

    pub fn prophoto(r: f64, g: f64, b: f64) -> Self {
        Color {
            values: [r, g, b],
            space: Space::ProPhotoLinearRgb,
            white: WhitePoint::D50,
        }
    }

    pub fn xyz(x: f64, y: f64, z: f64, white: WhitePoint) -> Self {
        Color {
            values: [x, y, z],
            space: Space::Xyz,
            white,
        }
    }

    pub fn lab(l: f64, a: f64, b: f64, white: WhitePoint) -> Self {
        Color {
            values: [l, a, b],
            space: Space::Cielab,
            white,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn convert(&self, space: Space, white: WhitePoint) -> Result<Color> {
        convert(self, space, white)
    }
}

/// An 8-bit sRGB-encoded triple, as reported by a color measurement tool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncodedSrgb {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl EncodedSrgb {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        EncodedSrgb { r, g, b }
    }
}

/// sRGB electro-optical transfer for a normalized code value.
pub fn srgb_eotf(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

/// Inverse of [`srgb_eotf`]; input is clamped to [0, 1].
pub fn srgb_oetf(v: f64) -> f64 {
    let v = v.clamp(0.0, 1.0);
    if v <= 0.0031308 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

pub fn decode_srgb(c: EncodedSrgb) -> Color {
    let f = |x: u8| srgb_eotf(f64::from(x) / 255.0);
    Color::display_rgb(f(c.r), f(c.g), f(c.b))
}

/// Clipping display encode; only for previews.
pub fn encode_srgb(c: &Color) -> EncodedSrgb {
    let f = |x: f64| (srgb_oetf(x) * 255.0).round() as u8;
    EncodedSrgb::new(f(c.values[0]), f(c.values[1]), f(c.values[2]))
}

/// Rec.709 luminance of linear display RGB.
pub fn luminance(rgb: [f64; 3]) -> f64 {
    0.2126 * rgb[0] + 0.7152 * rgb[1] + 0.0722 * rgb[2]
}

fn rgb_to_xyz_matrix(primaries: [[f64; 2]; 3], white: WhitePoint) -> Matrix3<f64> {
    let col = |[x, y]: [f64; 2]| Vector3::new(x / y, 1.0, (1.0 - x - y) / y);
    let p = Matrix3::from_columns(&[col(primaries[0]), col(primaries[1]), col(primaries[2])]);
    let w = Vector3::from(white.xyz());
    let s = p
        .try_inverse()
        .expect("primaries are linearly independent")
        * w;
    p * Matrix3::from_diagonal(&s)
}

struct Matrices {
    display_to_xyz: Matrix3<f64>,
    xyz_to_display: Matrix3<f64>,
    prophoto_to_xyz: Matrix3<f64>,
    xyz_to_prophoto: Matrix3<f64>,
    d65_to_d50: Matrix3<f64>,
    d50_to_d65: Matrix3<f64>,
}

static MATRICES: LazyLock<Matrices> = LazyLock::new(|| {
    let display_to_xyz = rgb_to_xyz_matrix(
        [[0.64, 0.33], [0.30, 0.60], [0.15, 0.06]],
        WhitePoint::D65,
    );
    let prophoto_to_xyz = rgb_to_xyz_matrix(
        [[0.7347, 0.2653], [0.1596, 0.8404], [0.0366, 0.0001]],
        WhitePoint::D50,
    );
    let d65_to_d50 = bradford(WhitePoint::D65, WhitePoint::D50);
    Matrices {
        xyz_to_display: display_to_xyz.try_inverse().unwrap(),
        display_to_xyz,
        xyz_to_prophoto: prophoto_to_xyz.try_inverse().unwrap(),
        prophoto_to_xyz,
        d50_to_d65: d65_to_d50.try_inverse().unwrap(),
        d65_to_d50,
    }
});

/// Bradford chromatic adaptation matrix acting on XYZ.
pub fn bradford(from: WhitePoint, to: WhitePoint) -> Matrix3<f64> {
    #[rustfmt::skip]
    let cone = Matrix3::new(
         0.8951,  0.2664, -0.1614,
        -0.7502,  1.7135,  0.0367,
         0.0389, -0.0685,  1.0296,
    );
    let src = cone * Vector3::from(from.xyz());
    let dst = cone * Vector3::from(to.xyz());
    let gain = Matrix3::from_diagonal(&dst.component_div(&src));
    cone.try_inverse().unwrap() * gain * cone
}

/// Linear display RGB (D65) to ProPhoto linear RGB (D50) as one matrix.
pub fn display_to_prophoto_matrix() -> Matrix3<f64> {
    let m = &*MATRICES;
    m.xyz_to_prophoto * m.d65_to_d50 * m.display_to_xyz
}

const LAB_EPSILON: f64 = 216.0 / 24389.0;
const LAB_KAPPA: f64 = 24389.0 / 27.0;

fn xyz_to_lab(xyz: [f64; 3], white: WhitePoint) -> [f64; 3] {
    let w = white.xyz();
    let f = |t: f64| {
        if t > LAB_EPSILON {
            t.cbrt()
        } else {
            (LAB_KAPPA * t + 16.0) / 116.0
        }
    };
    let fx = f(xyz[0] / w[0]);
    let fy = f(xyz[1] / w[1]);
    let fz = f(xyz[2] / w[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

fn lab_to_xyz(lab: [f64; 3], white: WhitePoint) -> [f64; 3] {
    let w = white.xyz();
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let inv = |f: f64| {
        let f3 = f * f * f;
        if f3 > LAB_EPSILON {
            f3
        } else {
            (116.0 * f - 16.0) / LAB_KAPPA
        }
    };
    let yr = if lab[0] > LAB_KAPPA * LAB_EPSILON {
        fy * fy * fy
    } else {
        lab[0] / LAB_KAPPA
    };
    [inv(fx) * w[0], yr * w[1], inv(fz) * w[2]]
}

fn mul(m: &Matrix3<f64>, v: [f64; 3]) -> [f64; 3] {
    (m * Vector3::from(v)).into()
}

fn to_xyz(c: &Color) -> [f64; 3] {
    let m = &*MATRICES;
    match c.space {
        Space::LinearDisplayRgb => mul(&m.display_to_xyz, c.values),
        Space::ProPhotoLinearRgb => mul(&m.prophoto_to_xyz, c.values),
        Space::Xyz => c.values,
        Space::Cielab => lab_to_xyz(c.values, c.white),
    }
}

fn adapt(xyz: [f64; 3], from: WhitePoint, to: WhitePoint) -> [f64; 3] {
    let m = &*MATRICES;
    match (from, to) {
        (WhitePoint::D65, WhitePoint::D50) => mul(&m.d65_to_d50, xyz),
        (WhitePoint::D50, WhitePoint::D65) => mul(&m.d50_to_d65, xyz),
        _ => xyz,
    }
}

/// Convert `c` into `space` relative to `white`, adapting with Bradford
/// when the whites differ. RGB targets only accept their native white.
pub fn convert(c: &Color, space: Space, white: WhitePoint) -> Result<Color> {
    if !c.is_finite() {
        return Err(Error::NonFinite(c.values));
    }
    let unsupported = || Error::UnsupportedConversion {
        from: c.space,
        from_white: c.white,
        to: space,
        to_white: white,
    };
    if let Some(native) = space.native_white() {
        if native != white {
            return Err(unsupported());
        }
    }
    if let Some(native) = c.space.native_white() {
        if native != c.white {
            return Err(unsupported());
        }
    }
    if c.space == space && c.white == white {
        return Ok(*c);
    }
    let xyz = adapt(to_xyz(c), c.white, white);
    let m = &*MATRICES;
    let values = match space {
        Space::LinearDisplayRgb => mul(&m.xyz_to_display, xyz),
        Space::ProPhotoLinearRgb => mul(&m.xyz_to_prophoto, xyz),
        Space::Xyz => xyz,
        Space::Cielab => xyz_to_lab(xyz, white),
    };
    Ok(Color {
        values,
        space,
        white,
    })
}

/// CIEDE2000 color difference with unit parametric factors.
///
/// Written so that swapping the arguments yields a bit-identical result.
pub fn ciede2000(a: &Color, b: &Color) -> Result<f64> {
    for c in [a, b] {
        if c.space != Space::Cielab {
            return Err(Error::WrongSpace {
                expected: Space::Cielab,
                got: c.space,
            });
        }
    }
    if a.white != b.white {
        return Err(Error::WhiteMismatch(a.white, b.white));
    }
    Ok(delta_e_2000(a.values, b.values))
}

pub(crate) fn delta_e_2000(lab1: [f64; 3], lab2: [f64; 3]) -> f64 {
    use std::f64::consts::PI;
    let [l1, a1, b1] = lab1;
    let [l2, a2, b2] = lab2;

    let c1 = a1.hypot(b1);
    let c2 = a2.hypot(b2);
    let c_mean = 0.5 * (c1 + c2);
    let c7 = c_mean.powi(7);
    let g = 0.5 * (1.0 - (c7 / (c7 + 25f64.powi(7))).sqrt());

    let a1p = a1 * (1.0 + g);
    let a2p = a2 * (1.0 + g);
    let c1p = a1p.hypot(b1);
    let c2p = a2p.hypot(b2);

    let hue = |bb: f64, ap: f64| {
        if bb == 0.0 && ap == 0.0 {
            0.0
        } else {
            let h = bb.atan2(ap).to_degrees();
            if h < 0.0 {
                h + 360.0
            } else {
                h
            }
        }
    };
    let h1p = hue(b1, a1p);
    let h2p = hue(b2, a2p);

    let dl = l2 - l1;
    let dc = c2p - c1p;
    let chroma_product = c1p * c2p;
    let dh = if chroma_product == 0.0 {
        0.0
    } else {
        let d = h2p - h1p;
        if d > 180.0 {
            d - 360.0
        } else if d < -180.0 {
            d + 360.0
        } else {
            d
        }
    };
    let dh_big = 2.0 * chroma_product.sqrt() * (dh.to_radians() * 0.5).sin();

    let l_mean = 0.5 * (l1 + l2);
    let cp_mean = 0.5 * (c1p + c2p);
    let hp_sum = h1p + h2p;
    let hp_mean = if chroma_product == 0.0 {
        hp_sum
    } else if (h1p - h2p).abs() <= 180.0 {
        0.5 * hp_sum
    } else if hp_sum < 360.0 {
        0.5 * (hp_sum + 360.0)
    } else {
        0.5 * (hp_sum - 360.0)
    };

    let t = 1.0 - 0.17 * (hp_mean - 30.0).to_radians().cos()
        + 0.24 * (2.0 * hp_mean).to_radians().cos()
        + 0.32 * (3.0 * hp_mean + 6.0).to_radians().cos()
        - 0.20 * (4.0 * hp_mean - 63.0).to_radians().cos();
    let d_theta = 30.0 * (-((hp_mean - 275.0) / 25.0).powi(2)).exp();
    let cp7 = cp_mean.powi(7);
    let rc = 2.0 * (cp7 / (cp7 + 25f64.powi(7))).sqrt();
    let l50 = (l_mean - 50.0).powi(2);
    let sl = 1.0 + 0.015 * l50 / (20.0 + l50).sqrt();
    let sc = 1.0 + 0.045 * cp_mean;
    let sh = 1.0 + 0.015 * cp_mean * t;
    let rt = -(2.0 * d_theta * PI / 180.0).sin() * rc;

    let tl = dl / sl;
    let tc = dc / sc;
    let th = dh_big / sh;
    (tl * tl + tc * tc + th * th + rt * tc * th).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_endpoints_and_midgray() {
        let w = decode_srgb(EncodedSrgb::new(255, 255, 255));
        assert_eq!(w.values, [1.0, 1.0, 1.0]);
        let k = decode_srgb(EncodedSrgb::new(0, 0, 0));
        assert_eq!(k.values, [0.0, 0.0, 0.0]);
        // ((188/255 + 0.055) / 1.055)^2.4, evaluated by hand: 0.502886
        let g = decode_srgb(EncodedSrgb::new(188, 188, 188));
        for v in g.values {
            assert!((v - 0.502886).abs() < 1e-5, "{v}");
        }
    }

    #[test]
    fn decode_is_monotone() {
        let mut prev = -1.0;
        for code in 0..=255u8 {
            let v = decode_srgb(EncodedSrgb::new(code, 0, 0)).values[0];
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn encode_inverts_decode() {
        for code in 0..=255u8 {
            let c = decode_srgb(EncodedSrgb::new(code, code, code));
            assert_eq!(encode_srgb(&c).r, code);
        }
    }

    #[test]
    fn display_white_to_xyz() {
        let xyz = convert(&Color::display_rgb(1.0, 1.0, 1.0), Space::Xyz, WhitePoint::D65).unwrap();
        let want = [0.9505, 1.0000, 1.0890];
        for (v, w) in xyz.values.iter().zip(want) {
            assert!((v - w).abs() < 5e-4, "{:?}", xyz.values);
        }
    }

    #[test]
    fn white_maps_to_lab_100() {
        for white in [WhitePoint::D65, WhitePoint::D50] {
            let [x, y, z] = white.xyz();
            let lab = convert(&Color::xyz(x, y, z, white), Space::Cielab, white).unwrap();
            assert!((lab.values[0] - 100.0).abs() < 1e-12);
            assert!(lab.values[1].abs() < 1e-12 && lab.values[2].abs() < 1e-12);
        }
    }

    #[test]
    fn prophoto_black_to_lab_zero() {
        let lab = convert(&Color::prophoto(0.0, 0.0, 0.0), Space::Cielab, WhitePoint::D50).unwrap();
        assert_eq!(lab.values, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn display_white_lands_on_prophoto_white() {
        let p = convert(
            &Color::display_rgb(1.0, 1.0, 1.0),
            Space::ProPhotoLinearRgb,
            WhitePoint::D50,
        )
        .unwrap();
        for v in p.values {
            assert!((v - 1.0).abs() < 1e-9, "{:?}", p.values);
        }
    }

    #[test]
    fn rgb_with_foreign_white_is_rejected() {
        let err = convert(
            &Color::display_rgb(0.5, 0.5, 0.5),
            Space::ProPhotoLinearRgb,
            WhitePoint::D65,
        );
        assert!(matches!(err, Err(Error::UnsupportedConversion { .. })));
        assert!(Color::new([0.1; 3], Space::LinearDisplayRgb, WhitePoint::D50).is_err());
    }

    #[test]
    fn ciede2000_rejects_mixed_whites_and_spaces() {
        let a = Color::lab(50.0, 1.0, 1.0, WhitePoint::D50);
        let b = Color::lab(50.0, 1.0, 1.0, WhitePoint::D65);
        assert!(matches!(ciede2000(&a, &b), Err(Error::WhiteMismatch(..))));
        let c = Color::display_rgb(0.2, 0.2, 0.2);
        assert!(matches!(ciede2000(&a, &c), Err(Error::WrongSpace { .. })));
    }

    #[test]
    fn ciede2000_first_pairs() {
        let r = Color::lab(50.0, 0.0, -82.7485, WhitePoint::D50);
        let a = Color::lab(50.0, 2.6772, -79.7751, WhitePoint::D50);
        let b = Color::lab(50.0, 3.1571, -77.2803, WhitePoint::D50);
        assert!((ciede2000(&a, &r).unwrap() - 2.0425).abs() < 1e-4);
        assert!((ciede2000(&b, &r).unwrap() - 2.8615).abs() < 1e-4);
        assert_eq!(ciede2000(&a, &a).unwrap(), 0.0);
    }
}
