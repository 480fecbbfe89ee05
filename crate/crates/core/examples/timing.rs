//! Times one full-frame render + region mean per quality preset.

use std::path::Path;
use std::time::Instant;

use grass_sim::config::{Quality, SceneConfig};
use grass_sim::pipeline::measure_length;
use grass_sim::scene::Viewpoint;

fn main() -> grass_sim::Result<()> {
    let config = SceneConfig::demo();
    let params = config.grass.params()?;
    let rig = config.lighting.build(Path::new("."))?;
    for q in Quality::ALL {
        let p = q.preset();
        let t = Instant::now();
        let m = measure_length(&params, &rig, &Viewpoint::reference(), 10.0, (p.width, p.height), &q.settings(1), true)?;
        println!("{:12} {:>4}x{:<4} {:>4} spp  {:.2?}  mean {:?}", q.name(), p.width, p.height, p.spp, t.elapsed(), m.mean.values);
    }
    Ok(())
}
