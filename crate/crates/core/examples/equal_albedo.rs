//! Diagnoses the equal-albedo sweep: Lab per length at several bounce budgets.

use std::path::Path;

use grass_sim::config::{default_lengths, LightingConfig, Quality, SyntheticEnv};
use grass_sim::pipeline::{sweep, SweepRequest};
use grass_sim::scene::{GrassPixelParams, Viewpoint};

fn main() -> grass_sim::Result<()> {
    let mut p = GrassPixelParams::default();
    p.adjustable_albedo = p.fixed_albedo;
    p.base_albedo = p.fixed_albedo;
    let rig = LightingConfig::synthetic(SyntheticEnv::UniformSky, 2000.0).build(Path::new("."))?;
    let lengths = default_lengths();
    for bounces in [2, 6] {
        let mut req = SweepRequest::new(&p, &rig, Viewpoint::reference(), &lengths, Quality::Measurement, 1);
        req.settings.bounces = bounces;
        req.settings.spp = 64;
        let c = sweep(&req, None, None)?.curve;
        println!("bounces {bounces}");
        for (s, lab) in c.samples().iter().zip(c.labs()).step_by(4) {
            println!("  {:5.1} ogcd {:6.3}  Lab {:7.3} {:7.3} {:7.3}", s.length_mm, s.ogcd, lab.values[0], lab.values[1], lab.values[2]);
        }
    }
    Ok(())
}
