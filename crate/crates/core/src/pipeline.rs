//! End-to-end measurement: build, render, expose, average, convert.

use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use crate::ccm::{fit_ccm, patch_means, ColorCorrectionMatrix, PatchSet, PatchSource};
use crate::characteristic::{prophoto_to_lab, CharacteristicCurve, CurveMeta, CurveSource};
use crate::colorimetry::{decode_srgb, Color, Space, WhitePoint};
use crate::config::{validate_lengths, Quality, SceneConfig};
use crate::error::{Error, Result};
use crate::lighting::LightingRig;
use crate::render::{
    average_region, expose_gray_card, project_patch_quads, project_pixel_corners, render, Camera, LinearImage,
    PixelWindow, Quad, RenderSettings,
};
use crate::scene::{build_color_checker, build_grass_pixel, viewpoint_to_camera, GrassPixelParams, Viewpoint, ZoomPolicy};

/// One rendered view of the grass pixel and its measured region.
#[derive(Clone, Debug)]
pub struct Measurement {
    /// Exposed image.
    pub image: LinearImage,
    pub camera: Camera,
    pub quad: Quad,
    /// Region mean in linear display RGB.
    pub mean: Color,
}

impl Measurement {
    pub fn prophoto(&self) -> Result<Color> {
        self.mean.convert(Space::ProPhotoLinearRgb, WhitePoint::D50)
    }
}

pub fn grass_camera(p: &GrassPixelParams, v: &Viewpoint, width: usize, height: usize) -> Camera {
    viewpoint_to_camera(v, &ZoomPolicy::for_grass_pixel(p, width, height))
}

/// Renders the grass pixel at `length`. With `full_frame` false only the
/// pixels around the measured region are traced.
pub fn measure_length(
    p: &GrassPixelParams,
    rig: &LightingRig,
    v: &Viewpoint,
    length: f64,
    size: (usize, usize),
    settings: &RenderSettings,
    full_frame: bool,
) -> Result<Measurement> {
    let scene = build_grass_pixel(p, length)?;
    let camera = grass_camera(p, v, size.0, size.1);
    let quad = project_pixel_corners(&scene, &camera)?;
    let mut settings = *settings;
    if !full_frame {
        settings.window = Some(PixelWindow::around(&quad, camera.width, camera.height));
    }
    let image = expose_gray_card(&render(&scene, rig, &camera, &settings)?, rig)?;
    let mean = average_region(&image, &quad)?;
    Ok(Measurement {
        image,
        camera,
        quad,
        mean,
    })
}

pub struct SweepRequest<'a> {
    pub params: &'a GrassPixelParams,
    pub rig: &'a LightingRig,
    pub viewpoint: Viewpoint,
    pub lengths: &'a [f64],
    pub ccm: Option<&'a ColorCorrectionMatrix>,
    pub size: (usize, usize),
    pub settings: RenderSettings,
    pub environment: String,
}

impl<'a> SweepRequest<'a> {
    pub fn new(params: &'a GrassPixelParams, rig: &'a LightingRig, viewpoint: Viewpoint, lengths: &'a [f64], quality: Quality, seed: u64) -> Self {
        let q = quality.preset();
        SweepRequest {
            params,
            rig,
            viewpoint,
            lengths,
            ccm: None,
            size: (q.width, q.height),
            settings: quality.settings(seed),
            environment: String::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    /// Every length measured before completion or cancellation.
    pub curve: CharacteristicCurve,
    pub cancelled: bool,
}

/// Measures each length in order. `cancel` is checked between lengths and
/// `progress` receives (done, total) after each one.
pub fn sweep(req: &SweepRequest, cancel: Option<&AtomicBool>, progress: Option<&(dyn Fn(usize, usize) + Sync)>) -> Result<SweepOutcome> {
    validate_lengths(req.params, req.lengths)?;
    let total = req.lengths.len();
    let mut labs = Vec::with_capacity(total);
    let mut cancelled = false;
    for &length in req.lengths {
        if cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
            cancelled = true;
            break;
        }
        let m = measure_length(req.params, req.rig, &req.viewpoint, length, req.size, &req.settings, false)?;
        labs.push(prophoto_to_lab(&m.prophoto()?, req.ccm)?);
        if let Some(f) = progress {
            f(labs.len(), total);
        }
    }
    if labs.is_empty() {
        return Err(Error::Cancelled);
    }
    let meta = CurveMeta {
        viewpoint: Some(req.viewpoint),
        environment: req.environment.clone(),
    };
    let curve = CharacteristicCurve::from_labs(&req.lengths[..labs.len()], labs, CurveSource::Virtual, meta)?;
    Ok(SweepOutcome { curve, cancelled })
}

/// Virtual checker patches seen from the reference viewpoint.
pub fn virtual_patches(config: &SceneConfig, rig: &LightingRig, quality: Quality, seed: u64) -> Result<PatchSet> {
    let albedos: Vec<Color> = config.checker.colors.iter().map(|&c| decode_srgb(c)).collect();
    let layout = &config.checker.layout;
    let scene = build_color_checker(&albedos, layout)?;
    let q = quality.preset();
    let camera = viewpoint_to_camera(&Viewpoint::reference(), &ZoomPolicy::for_checker(layout, q.width, q.height));
    let quads = project_patch_quads(&scene, &camera)?;
    let image = expose_gray_card(&render(&scene, rig, &camera, &quality.settings(seed))?, rig)?;
    let mut set = patch_means(&image, &quads)?;
    set.source = PatchSource::Virtual;
    Ok(set)
}

/// Matrix M from the configured real patch CSV and a virtual checker render.
pub fn derive_ccm(config: &SceneConfig, base_dir: &Path, rig: &LightingRig, quality: Quality, seed: u64) -> Result<ColorCorrectionMatrix> {
    let rel = config
        .checker
        .real_patches_csv
        .as_ref()
        .ok_or_else(|| Error::InvalidParam("checker.real_patches_csv is not set".into()))?;
    let path = base_dir.join(rel);
    let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let real = PatchSet::read_csv(file, PatchSource::Real)?;
    fit_ccm(&real, &virtual_patches(config, rig, quality, seed)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SceneConfig;
    use std::sync::atomic::AtomicUsize;

    fn small(quality: Quality) -> (usize, usize, RenderSettings) {
        let mut s = quality.settings(1);
        s.spp = 4;
        (60, 40, s)
    }

    #[test]
    fn sweep_starts_at_zero_and_reports_progress() {
        let c = SceneConfig::demo();
        let p = c.grass.params().unwrap();
        let rig = c.lighting.build(Path::new(".")).unwrap();
        let (w, h, s) = small(Quality::Default);
        let lengths = [0.0, 10.0, 20.0];
        let mut req = SweepRequest::new(&p, &rig, Viewpoint::reference(), &lengths, Quality::Default, 1);
        req.size = (w, h);
        req.settings = s;
        let seen = AtomicUsize::new(0);
        let progress = |d: usize, t: usize| {
            assert_eq!(t, 3);
            seen.store(d, Ordering::SeqCst);
        };
        let out = sweep(&req, None, Some(&progress)).unwrap();
        assert!(!out.cancelled);
        assert_eq!(seen.load(Ordering::SeqCst), 3);
        assert_eq!(out.curve.samples()[0].ogcd, 0.0);
        assert!(out.curve.samples()[2].ogcd > 1.0);

        let identity = ColorCorrectionMatrix::identity();
        req.ccm = Some(&identity);
        assert_eq!(sweep(&req, None, None).unwrap().curve, out.curve);
    }

    #[test]
    fn cancelled_sweep_keeps_partial_curve() {
        let c = SceneConfig::demo();
        let p = c.grass.params().unwrap();
        let rig = c.lighting.build(Path::new(".")).unwrap();
        let (w, h, s) = small(Quality::Preview);
        let lengths = [0.0, 5.0, 10.0, 15.0];
        let mut req = SweepRequest::new(&p, &rig, Viewpoint::reference(), &lengths, Quality::Preview, 1);
        req.size = (w, h);
        req.settings = s;
        let cancel = AtomicBool::new(false);
        let progress = |d: usize, _t: usize| {
            if d == 2 {
                cancel.store(true, Ordering::SeqCst);
            }
        };
        let out = sweep(&req, Some(&cancel), Some(&progress)).unwrap();
        assert!(out.cancelled);
        assert_eq!(out.curve.len(), 2);
        assert!(matches!(sweep(&req, Some(&cancel), None), Err(Error::Cancelled)));
    }

    #[test]
    fn sweep_rejects_out_of_range_length() {
        let c = SceneConfig::demo();
        let p = c.grass.params().unwrap();
        let rig = c.lighting.build(Path::new(".")).unwrap();
        let lengths = [0.0, 25.0];
        let req = SweepRequest::new(&p, &rig, Viewpoint::reference(), &lengths, Quality::Preview, 1);
        assert!(matches!(sweep(&req, None, None), Err(Error::LengthOutOfRange { .. })));
    }

    #[test]
    fn windowed_and_full_frame_agree_on_region() {
        let c = SceneConfig::demo();
        let p = c.grass.params().unwrap();
        let rig = c.lighting.build(Path::new(".")).unwrap();
        let (w, h, s) = small(Quality::Default);
        let v = Viewpoint::reference();
        let a = measure_length(&p, &rig, &v, 8.0, (w, h), &s, false).unwrap();
        let b = measure_length(&p, &rig, &v, 8.0, (w, h), &s, true).unwrap();
        assert_eq!(a.mean, b.mean);
    }

    #[test]
    fn ccm_from_self_rendered_patches_is_identity() {
        let c = SceneConfig::demo();
        let rig = c.lighting.build(Path::new(".")).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let virt = virtual_patches(&c, &rig, Quality::Preview, 4).unwrap();
        let path = dir.path().join("real.csv");
        virt.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
        let mut cfg = c.clone();
        cfg.checker.real_patches_csv = Some("real.csv".into());
        let m = derive_ccm(&cfg, dir.path(), &rig, Quality::Preview, 4).unwrap();
        for (r, row) in m.m.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                assert!((v - f64::from(u8::from(r == c))).abs() < 1e-9, "{m:?}");
            }
        }
        assert!(derive_ccm(&c, dir.path(), &rig, Quality::Preview, 4).is_err());
    }
}
