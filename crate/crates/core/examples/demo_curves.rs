//! Prints demo OGCD curves at θ = 0° and 90° and the inflection counts.

use std::path::Path;
use std::time::Instant;

use grass_sim::characteristic::{calibrate_8bit, count_inflections, fit_monotone};
use grass_sim::config::{Quality, SceneConfig};
use grass_sim::pipeline::{sweep, SweepRequest};
use grass_sim::scene::Viewpoint;

fn main() -> grass_sim::Result<()> {
    let quality = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(Quality::Measurement);
    let config = SceneConfig::demo();
    let params = config.grass.params()?;
    let rig = config.lighting.build(Path::new("."))?;
    for theta in [0.0, 90.0] {
        let t = Instant::now();
        let v = Viewpoint::new(170.0, 2.0, theta)?;
        let req = SweepRequest::new(&params, &rig, v, &config.lengths, quality, 1);
        let curve = sweep(&req, None, None)?.curve;
        let fit = fit_monotone(&curve)?;
        let table = calibrate_8bit(&curve)?;
        println!("theta {theta}: {:.1?}", t.elapsed());
        for s in curve.samples() {
            println!("  {:5.1} mm  {:7.3}", s.length_mm, s.ogcd);
        }
        println!(
            "  inflections {}  r2 {:.4} -> {:.4}",
            count_inflections(&fit),
            table.r2_before,
            table.r2_after
        );
    }
    Ok(())
}
