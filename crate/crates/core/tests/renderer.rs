use std::path::Path;

use grass_sim::config::{Quality, SceneConfig};
use grass_sim::math::Vec3;
use grass_sim::pipeline::{grass_camera, measure_length};
use grass_sim::render::{expose_gray_card, project_pixel_corners, render, Camera, Quad, RenderSettings};
use grass_sim::scene::{build_grass_pixel, GrassPixelParams, Viewpoint};

fn side(q: &Quad, i: usize) -> f64 {
    let (a, b) = (q[i], q[(i + 1) % 4]);
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn centroid(q: &Quad) -> [f64; 2] {
    let s = q.iter().fold([0.0, 0.0], |acc, p| [acc[0] + p[0], acc[1] + p[1]]);
    [s[0] / 4.0, s[1] / 4.0]
}

#[test]
fn projection_matches_pinhole_by_hand() {
    // 90° fov on a square frame: tan(fov/2) = 1, so x_px = 50 + 50·X/Z.
    let cam = Camera::new(Vec3::new(0.0, 0.0, 5.0), Vec3::splat(0.0), Vec3::new(0.0, 1.0, 0.0), 90.0, 100, 100);
    let cases = [
        (Vec3::splat(0.0), [50.0, 50.0]),
        (Vec3::new(0.5, 0.25, 0.0), [55.0, 47.5]),
        (Vec3::new(1.0, 0.0, 4.0), [100.0, 50.0]),
        (Vec3::new(-2.0, -1.0, 3.0), [0.0, 75.0]),
    ];
    for (p, want) in cases {
        let got = cam.project(p).unwrap();
        assert!((got[0] - want[0]).abs() < 1e-9 && (got[1] - want[1]).abs() < 1e-9, "{p:?}: {got:?} vs {want:?}");
    }
    assert!(cam.project(Vec3::new(0.0, 0.0, 6.0)).is_err());
}

#[test]
fn overhead_view_sees_a_centered_square() {
    let p = GrassPixelParams::default();
    let scene = build_grass_pixel(&p, 10.0).unwrap();
    let v = Viewpoint::new(400.0, 0.001, 0.0).unwrap();
    let cam = grass_camera(&p, &v, 600, 400);
    let q = project_pixel_corners(&scene, &cam).unwrap();
    let c = centroid(&q);
    assert!((c[0] - 300.0).abs() < 1.0 && (c[1] - 200.0).abs() < 1.0, "{c:?}");
    let sides: Vec<f64> = (0..4).map(|i| side(&q, i)).collect();
    let ratio = p.surface_size[0] / p.surface_size[1];
    assert!((sides[0] / sides[1] - ratio).abs() < 0.01 || (sides[1] / sides[0] - ratio).abs() < 0.01, "{sides:?}");
    assert!((sides[0] - sides[2]).abs() < 0.5 && (sides[1] - sides[3]).abs() < 0.5, "{sides:?}");
}

#[test]
fn frontal_view_sees_a_symmetric_trapezoid() {
    let p = GrassPixelParams::default();
    let scene = build_grass_pixel(&p, 10.0).unwrap();
    let cam = grass_camera(&p, &Viewpoint::reference(), 600, 400);
    let q = project_pixel_corners(&scene, &cam).unwrap();
    let mut xs: Vec<f64> = q.iter().map(|c| c[0] - 300.0).collect();
    xs.sort_by(f64::total_cmp);
    assert!((xs[0] + xs[3]).abs() < 0.5 && (xs[1] + xs[2]).abs() < 0.5, "{q:?}");
    let mut by_y = q.to_vec();
    by_y.sort_by(|a, b| a[1].total_cmp(&b[1]));
    let far = (by_y[0][0] - by_y[1][0]).abs();
    let near = (by_y[2][0] - by_y[3][0]).abs();
    assert!(near > far, "near {near} far {far}");
}

#[test]
fn exposure_cancels_lighting_scale() {
    let c = SceneConfig::demo_outdoor();
    let p = c.grass.params().unwrap();
    let rig = c.lighting.build(Path::new(".")).unwrap();
    let scene = build_grass_pixel(&p, 12.0).unwrap();
    let cam = grass_camera(&p, &Viewpoint::reference(), 90, 60);
    let s = RenderSettings::new(4, 3);
    let base = expose_gray_card(&render(&scene, &rig, &cam, &s).unwrap(), &rig).unwrap();
    let doubled_rig = rig.scaled(2.0);
    let doubled = expose_gray_card(&render(&scene, &doubled_rig, &cam, &s).unwrap(), &doubled_rig).unwrap();
    assert_eq!(base.pixels, doubled.pixels);
    let tripled_rig = rig.scaled(3.0);
    let tripled = expose_gray_card(&render(&scene, &tripled_rig, &cam, &s).unwrap(), &tripled_rig).unwrap();
    for (a, b) in base.pixels.iter().zip(&tripled.pixels) {
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() <= 1e-12 * a[k].abs().max(1e-3), "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn measurement_is_repeatable_and_seed_dependent() {
    let c = SceneConfig::demo();
    let p = c.grass.params().unwrap();
    let rig = c.lighting.build(Path::new(".")).unwrap();
    let v = Viewpoint::reference();
    let s = Quality::Preview.settings(1);
    let a = measure_length(&p, &rig, &v, 6.0, (120, 80), &s, false).unwrap();
    let b = measure_length(&p, &rig, &v, 6.0, (120, 80), &s, false).unwrap();
    assert_eq!(a.mean, b.mean);
    let other = measure_length(&p, &rig, &v, 6.0, (120, 80), &Quality::Preview.settings(2), false).unwrap();
    assert_ne!(a.mean, other.mean);
}
