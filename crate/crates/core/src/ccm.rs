//! Color-checker driven 3×3 correction from virtual to real linear RGB.

use std::io::{Read, Write};

use nalgebra::{Matrix3, OMatrix, U3, Dyn};
use serde::{Deserialize, Serialize};

use crate::colorimetry::{Color, Space};
use crate::error::{Error, Result};
use crate::render::image::{average_region, shrink_quad, LinearImage, Quad};

pub const PATCH_COUNT: usize = 24;

/// Fraction by which each checker quad is pulled toward its centroid
/// before averaging.
pub const PATCH_SHRINK: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PatchSource {
    Real,
    Virtual,
}

/// 24 checker patch colors in ProPhoto linear RGB, row-major from the
/// top-left patch.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchSet {
    patches: Vec<Color>,
    pub source: PatchSource,
}

impl PatchSet {
    pub fn new(patches: Vec<Color>, source: PatchSource) -> Result<Self> {
        if patches.len() != PATCH_COUNT {
            return Err(Error::PatchCount(patches.len()));
        }
        for (index, p) in patches.iter().enumerate() {
            if p.space != Space::ProPhotoLinearRgb {
                return Err(Error::InvalidPatch {
                    index,
                    reason: format!("expected ProPhoto linear RGB, got {:?}", p.space),
                });
            }
            if !p.is_finite() || p.values.iter().any(|v| *v < 0.0) {
                return Err(Error::InvalidPatch {
                    index,
                    reason: format!("values must be finite and non-negative: {:?}", p.values),
                });
            }
        }
        Ok(PatchSet { patches, source })
    }

    pub fn patches(&self) -> &[Color] {
        &self.patches
    }

    /// Reads 24 rows of `R,G,B` (ProPhoto linear) with a header line.
    pub fn read_csv<R: Read>(reader: R, source: PatchSource) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut patches = Vec::new();
        for row in rdr.deserialize::<(f64, f64, f64)>() {
            let (r, g, b) = row?;
            patches.push(Color::prophoto(r, g, b));
        }
        PatchSet::new(patches, source)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["R", "G", "B"])?;
        for p in &self.patches {
            w.write_record(p.values.iter().map(|v| v.to_string()))?;
        }
        w.flush().map_err(|e| Error::io("<patch csv>", e))?;
        Ok(())
    }
}

/// The 3×3 map `real = m · virtual`, stored with its fit residual.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColorCorrectionMatrix {
    pub m: [[f64; 3]; 3],
    pub residual_rms: f64,
}

impl ColorCorrectionMatrix {
    pub fn identity() -> Self {
        ColorCorrectionMatrix {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            residual_rms: 0.0,
        }
    }

    pub fn from_rows(m: [[f64; 3]; 3]) -> Self {
        ColorCorrectionMatrix {
            m,
            residual_rms: 0.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.m[r][c])
    }
}

pub fn apply_ccm(ccm: &ColorCorrectionMatrix, c: &Color) -> Result<Color> {
    if c.space != Space::ProPhotoLinearRgb {
        return Err(Error::WrongSpace {
            expected: Space::ProPhotoLinearRgb,
            got: c.space,
        });
    }
    if !c.is_finite() {
        return Err(Error::NonFinite(c.values));
    }
    let [r, g, b] = c.values;
    let m = &ccm.m;
    Ok(Color::prophoto(
        m[0][0] * r + m[0][1] * g + m[0][2] * b,
        m[1][0] * r + m[1][1] * g + m[1][2] * b,
        m[2][0] * r + m[2][1] * g + m[2][2] * b,
    ))
}

/// Smallest-to-largest singular value ratio below which the virtual patch
/// matrix is treated as rank deficient.
const RANK_TOLERANCE: f64 = 1e-10;
/// Below this ratio the normal equations are skipped for the SVD
/// pseudo-inverse.
const NORMAL_EQ_TOLERANCE: f64 = 1e-5;

/// Least-squares fit of `real ≈ M · virtual` over the 24 patches, no offset.
pub fn fit_ccm(real: &PatchSet, virt: &PatchSet) -> Result<ColorCorrectionMatrix> {
    let rows = |set: &PatchSet| {
        OMatrix::<f64, Dyn, U3>::from_fn(PATCH_COUNT, |i, c| set.patches[i].values[c])
    };
    let v = rows(virt);
    let r = rows(real);

    let svd = v.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin / smax < RANK_TOLERANCE {
        return Err(Error::SingularFit);
    }

    // Solve V · Mᵀ = R.
    let mt: Matrix3<f64> = if smin / smax >= NORMAL_EQ_TOLERANCE {
        let vtv = v.transpose() * &v;
        let vtr = v.transpose() * &r;
        match vtv.cholesky() {
            Some(ch) => ch.solve(&vtr),
            None => svd.solve(&r, 0.0).map_err(|_| Error::SingularFit)?.fixed_view::<3, 3>(0, 0).into(),
        }
    } else {
        let sol = svd.solve(&r, smax * RANK_TOLERANCE).map_err(|_| Error::SingularFit)?;
        sol.fixed_view::<3, 3>(0, 0).into()
    };
    let m = mt.transpose();
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::SingularFit);
    }

    let mut ccm = ColorCorrectionMatrix {
        m: [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ],
        residual_rms: 0.0,
    };
    ccm.residual_rms = residual_rms(&ccm, real, virt);
    Ok(ccm)
}

/// Root mean square of the per-channel residuals `real − M·virtual`.
pub fn residual_rms(ccm: &ColorCorrectionMatrix, real: &PatchSet, virt: &PatchSet) -> f64 {
    let m = ccm.matrix();
    let mut sum = 0.0;
    for (re, vi) in real.patches.iter().zip(&virt.patches) {
        let pred = m * nalgebra::Vector3::from(vi.values);
        for c in 0..3 {
            let d = re.values[c] - pred[c];
            sum += d * d;
        }
    }
    (sum / (3 * PATCH_COUNT) as f64).sqrt()
}

/// Per-patch mean of `image` (converted to ProPhoto linear) over the 24
/// quads, each shrunk by [`PATCH_SHRINK`] toward its centroid.
pub fn patch_means(image: &LinearImage, quads: &[Quad]) -> Result<PatchSet> {
    if quads.len() != PATCH_COUNT {
        return Err(Error::PatchCount(quads.len()));
    }
    let mut patches = Vec::with_capacity(PATCH_COUNT);
    for q in quads {
        crate::render::image::validate_quad(q)?;
        let mean = average_region(image, &shrink_quad(q, PATCH_SHRINK))?;
        patches.push(mean.convert(Space::ProPhotoLinearRgb, crate::colorimetry::WhitePoint::D50)?);
    }
    PatchSet::new(patches, PatchSource::Virtual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(rng: &mut ChaCha8Rng, source: PatchSource) -> PatchSet {
        let patches = (0..PATCH_COUNT)
            .map(|_| Color::prophoto(rng.random(), rng.random(), rng.random()))
            .collect();
        PatchSet::new(patches, source).unwrap()
    }

    fn map(set: &PatchSet, m: [[f64; 3]; 3]) -> PatchSet {
        let ccm = ColorCorrectionMatrix::from_rows(m);
        let patches = set.patches.iter().map(|p| apply_ccm(&ccm, p).unwrap()).collect();
        PatchSet {
            patches,
            source: PatchSource::Real,
        }
    }

    #[test]
    fn identical_sets_fit_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = random_set(&mut rng, PatchSource::Virtual);
        let fit = fit_ccm(&v, &v).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                let want = if r == c { 1.0 } else { 0.0 };
                assert!((fit.m[r][c] - want).abs() < 1e-9);
            }
        }
        assert!(fit.residual_rms < 1e-12);
    }

    #[test]
    fn doubled_sets_fit_two_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = random_set(&mut rng, PatchSource::Virtual);
        let real = map(&v, [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]]);
        let fit = fit_ccm(&real, &v).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                let want = if r == c { 2.0 } else { 0.0 };
                assert!((fit.m[r][c] - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gray_patches_are_singular() {
        let patches = (0..PATCH_COUNT)
            .map(|i| {
                let g = 0.05 + i as f64 * 0.03;
                Color::prophoto(g, g, g)
            })
            .collect();
        let v = PatchSet::new(patches, PatchSource::Virtual).unwrap();
        assert!(matches!(fit_ccm(&v, &v), Err(Error::SingularFit)));
    }

    #[test]
    fn apply_matches_hand_multiply() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let m: [[f64; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-2.0..2.0)));
            let x: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..3.0));
            let got = apply_ccm(&ColorCorrectionMatrix::from_rows(m), &Color::prophoto(x[0], x[1], x[2]))
                .unwrap()
                .values;
            for r in 0..3 {
                let mut want = 0.0;
                for c in 0..3 {
                    want += m[r][c] * x[c];
                }
                assert!((got[r] - want).abs() <= 1e-15 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn apply_rejects_display_rgb() {
        let c = Color::display_rgb(0.1, 0.2, 0.3);
        assert!(apply_ccm(&ColorCorrectionMatrix::identity(), &c).is_err());
    }

    #[test]
    fn patch_set_validation() {
        assert!(matches!(
            PatchSet::new(vec![Color::prophoto(0.1, 0.1, 0.1); 23], PatchSource::Real),
            Err(Error::PatchCount(23))
        ));
        let mut p = vec![Color::prophoto(0.1, 0.1, 0.1); 24];
        p[5] = Color::prophoto(-0.1, 0.1, 0.1);
        assert!(matches!(
            PatchSet::new(p, PatchSource::Real),
            Err(Error::InvalidPatch { index: 5, .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = random_set(&mut rng, PatchSource::Real);
        let mut buf = Vec::new();
        v.write_csv(&mut buf).unwrap();
        let back = PatchSet::read_csv(buf.as_slice(), PatchSource::Real).unwrap();
        assert_eq!(back, v);
    }

    fn quad_at(x: f64, y: f64, w: f64) -> Quad {
        [[x, y], [x + w, y], [x + w, y + w], [x, y + w]]
    }

    #[test]
    fn patch_means_on_constant_and_two_tone_images() {
        let quads: Vec<Quad> = (0..24)
            .map(|i| quad_at((i % 6) as f64 * 10.0 + 1.0, (i / 6) as f64 * 10.0 + 1.0, 8.0))
            .collect();
        let img = LinearImage::filled(60, 40, [0.3, 0.2, 0.1]);
        let want = Color::display_rgb(0.3, 0.2, 0.1)
            .convert(Space::ProPhotoLinearRgb, crate::colorimetry::WhitePoint::D50)
            .unwrap();
        let set = patch_means(&img, &quads).unwrap();
        for p in set.patches() {
            for c in 0..3 {
                assert!((p.values[c] - want.values[c]).abs() < 1e-14);
            }
        }

        // Left half one tone, right half another; quads never straddle x = 30.
        let mut two = LinearImage::filled(60, 40, [0.5, 0.5, 0.5]);
        for y in 0..40 {
            for x in 30..60 {
                two.set(x, y, [0.1, 0.7, 0.2]);
            }
        }
        let set = patch_means(&two, &quads).unwrap();
        for (i, p) in set.patches().iter().enumerate() {
            let tone = if i % 6 < 3 { [0.5, 0.5, 0.5] } else { [0.1, 0.7, 0.2] };
            let want = Color::display_rgb(tone[0], tone[1], tone[2])
                .convert(Space::ProPhotoLinearRgb, crate::colorimetry::WhitePoint::D50)
                .unwrap();
            for c in 0..3 {
                assert!((p.values[c] - want.values[c]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn degenerate_patch_quad_errors() {
        let mut quads: Vec<Quad> = (0..24)
            .map(|i| quad_at((i % 6) as f64 * 10.0 + 1.0, (i / 6) as f64 * 10.0 + 1.0, 8.0))
            .collect();
        quads[7] = [[5.0, 5.0]; 4];
        let img = LinearImage::filled(60, 40, [0.3, 0.2, 0.1]);
        assert!(patch_means(&img, &quads).is_err());
    }
}
