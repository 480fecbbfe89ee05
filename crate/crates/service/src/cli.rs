//! `grass-sim` command line.

use std::fs::File;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use grass_sim::ccm::{apply_ccm, ColorCorrectionMatrix};
use grass_sim::characteristic::{calibrate_8bit, compare, CharacteristicCurve, CurveMeta, CurveSource};
use grass_sim::config::Quality;
use grass_sim::pipeline::derive_ccm;
use grass_sim::scene::Viewpoint;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::http::{serve, AppState};
use crate::jobs::JobQueue;
use crate::runner::{preview_png, render_view, run_sweep, sweep_key, Scene, SweepSpec};
use crate::workspace::{Workspace, WORKSPACE_ENV};

#[derive(Parser, Debug)]
#[command(name = "grass-sim", version, about = "Grass-pixel color characteristic simulator")]
pub struct Cli {
    /// Artifact workspace; sweeps are also stored here when set.
    #[arg(long, global = true, env = WORKSPACE_ENV)]
    pub workspace: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct RenderOpts {
    /// Quality preset: preview, default, high or measurement.
    #[arg(long, default_value = "default")]
    pub quality: Quality,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render one view, write an OpenEXR image and print the region mean.
    Render {
        /// Scene config file or bundled scene name.
        #[arg(long)]
        scene: String,
        /// Eye height in centimeters.
        #[arg(long)]
        h: f64,
        /// Horizontal distance in meters.
        #[arg(long)]
        d: f64,
        /// Horizontal angle in degrees.
        #[arg(long)]
        theta: f64,
        /// Adjustable grass length in millimeters.
        #[arg(long)]
        length: f64,
        #[arg(long)]
        out: PathBuf,
        /// Also write an 8-bit sRGB preview.
        #[arg(long)]
        png: Option<PathBuf>,
        /// Matrix JSON applied to the reported mean.
        #[arg(long)]
        ccm: Option<PathBuf>,
        #[command(flatten)]
        opts: RenderOpts,
    },
    /// Measure characteristic curves for one or more scenes and viewpoints.
    Sweep {
        /// Scene config file or bundled scene name; repeat for several
        /// environments.
        #[arg(long, required = true)]
        scene: Vec<String>,
        /// Single viewpoint as h,d,theta.
        #[arg(long, conflicts_with = "grid")]
        viewpoint: Option<String>,
        /// Viewpoint grid, e.g. `--grid h=150,160,170,180 theta=0,30,60,90`.
        /// Axes left out keep the reference view (h=170, d=2, theta=0).
        #[arg(long, num_args = 1..=3)]
        grid: Vec<String>,
        /// Comma-separated lengths in millimeters; default from the scene.
        #[arg(long, value_delimiter = ',')]
        lengths: Option<Vec<f64>>,
        #[arg(long)]
        ccm: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        opts: RenderOpts,
    },
    /// Compare two curve CSVs; prints frechet, max_error, max_error_length_mm.
    Compare { virtual_csv: PathBuf, real_csv: PathBuf },
    /// 256-level calibration table from a curve CSV.
    Calibrate {
        curve_csv: PathBuf,
        /// Table destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the correction matrix from measured checker patches.
    Ccm {
        #[arg(long)]
        scene: String,
        /// `R,G,B` rows of 24 linear ProPhoto patch means.
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: RenderOpts,
    },
    /// List bundled and workspace scenes.
    Scenes,
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Static UI assets served outside /api.
        #[arg(long)]
        ui: Option<PathBuf>,
    },
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

fn read_curve(path: &Path, source: CurveSource) -> Result<CharacteristicCurve> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(CharacteristicCurve::read_any_csv(f, source, CurveMeta::default())?)
}

fn read_ccm(path: &Path) -> Result<ColorCorrectionMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: Serialize>(out: &mut dyn Write, v: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, v)?;
    writeln!(out).map_err(|e| Error::io("<stdout>", e))
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Invalid(format!("{v:?} is not a number"))))
        .collect()
}

pub fn parse_viewpoint(s: &str) -> Result<Viewpoint> {
    match parse_list(s)?.as_slice() {
        &[h, d, theta] => Ok(Viewpoint::new(h, d, theta)?),
        _ => Err(Error::Invalid(format!("viewpoint {s:?} must be h,d,theta"))),
    }
}

/// `h=…`, `d=…`, `theta=…` axes to the full cartesian grid, h outermost.
pub fn parse_grid(axes: &[String]) -> Result<Vec<Viewpoint>> {
    let r = Viewpoint::reference();
    let (mut hs, mut ds, mut ts) = (vec![r.h], vec![r.d], vec![r.theta]);
    for a in axes {
        let (k, v) = a
            .split_once('=')
            .ok_or_else(|| Error::Invalid(format!("grid axis {a:?} must look like h=150,160")))?;
        let values = parse_list(v)?;
        match k.trim() {
            "h" => hs = values,
            "d" => ds = values,
            "theta" => ts = values,
            other => return Err(Error::Invalid(format!("unknown grid axis {other:?}; use h, d or theta"))),
        }
    }
    let mut out = Vec::new();
    for &h in &hs {
        for &d in &ds {
            for &t in &ts {
                out.push(Viewpoint::new(h, d, t)?);
            }
        }
    }
    Ok(out)
}

pub fn curve_file_name(scene: &str, v: &Viewpoint) -> String {
    format!("{scene}_h{}_d{}_theta{}.csv", v.h, v.d, v.theta)
}

#[derive(Serialize)]
struct ManifestEntry {
    scene: String,
    viewpoint: Viewpoint,
    #[serde(skip_serializing_if = "Option::is_none")]
    file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    seconds: f64,
}

/// Runs every (scene, viewpoint) pair, writing one CSV each. Failures do not
/// stop the batch; they are listed in `failures.json` and make the whole
/// call fail once everything else has been written.
pub fn run_batch(
    jobs: &[(Scene, Viewpoint)],
    out_dir: &Path,
    measure: &dyn Fn(&Scene, &Viewpoint) -> Result<CharacteristicCurve>,
    log: &mut dyn Write,
) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut manifest = Vec::new();
    for (i, (scene, v)) in jobs.iter().enumerate() {
        let start = Instant::now();
        let result = measure(scene, v).and_then(|c| {
            let name = curve_file_name(&scene.config.name, v);
            let path = out_dir.join(&name);
            c.write_csv(create(&path)?)?;
            Ok(name)
        });
        let seconds = start.elapsed().as_secs_f64();
        let _ = writeln!(
            log,
            "[{}/{}] {} h={} d={} theta={}: {} ({seconds:.1} s)",
            i + 1,
            jobs.len(),
            scene.config.name,
            v.h,
            v.d,
            v.theta,
            match &result {
                Ok(f) => f.clone(),
                Err(e) => format!("error: {e}"),
            }
        );
        let (file, error) = match result {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        };
        manifest.push(ManifestEntry {
            scene: scene.config.name.clone(),
            viewpoint: *v,
            file,
            error,
            seconds,
        });
    }
    write_json(&mut create(&out_dir.join("manifest.json"))?, &manifest)?;
    let failures: Vec<&ManifestEntry> = manifest.iter().filter(|m| m.error.is_some()).collect();
    let failures_path = out_dir.join("failures.json");
    if failures.is_empty() {
        if failures_path.exists() {
            std::fs::remove_file(&failures_path).map_err(|e| Error::io(&failures_path, e))?;
        }
        return Ok(());
    }
    write_json(&mut create(&failures_path)?, &failures)?;
    Err(Error::Invalid(format!(
        "{} of {} sweeps failed; see {}",
        failures.len(),
        manifest.len(),
        failures_path.display()
    )))
}

/// Runs a parsed command, writing reports to `out` and progress to `log`.
pub fn run(cli: Cli, out: &mut dyn Write, log: &mut dyn Write) -> Result<()> {
    let workspace = cli.workspace.map(Workspace::open).transpose()?;
    let resolve = |name: &str| match &workspace {
        Some(ws) if !Path::new(name).is_file() => ws.scene(name),
        _ => Scene::resolve(name),
    };
    match cli.command {
        Command::Render {
            scene,
            h,
            d,
            theta,
            length,
            out: path,
            png,
            ccm,
            opts,
        } => {
            let scene = resolve(&scene)?;
            let v = Viewpoint::new(h, d, theta)?;
            let ccm = ccm.as_deref().map(read_ccm).transpose()?;
            let m = render_view(&scene, &v, length, opts.quality, opts.seed)?;
            m.image.write_exr(&path)?;
            if let Some(p) = png {
                std::fs::write(&p, preview_png(&m)?).map_err(|e| Error::io(&p, e))?;
            }
            let rgb = m.prophoto()?;
            let [r, g, b] = rgb.values;
            let w = |e| Error::io("<stdout>", e);
            writeln!(out, "wrote {}", path.display()).map_err(w)?;
            writeln!(out, "mean ProPhoto RGB: {r:.6} {g:.6} {b:.6}").map_err(w)?;
            if let Some(c) = ccm {
                let [r, g, b] = apply_ccm(&c, &rgb)?.values;
                writeln!(out, "corrected ProPhoto RGB: {r:.6} {g:.6} {b:.6}").map_err(w)?;
            }
            Ok(())
        }
        Command::Sweep {
            scene,
            viewpoint,
            grid,
            lengths,
            ccm,
            out_dir,
            opts,
        } => {
            let scenes = scene.iter().map(|s| resolve(s)).collect::<Result<Vec<_>>>()?;
            let viewpoints = match (viewpoint, grid.is_empty()) {
                (Some(v), _) => vec![parse_viewpoint(&v)?],
                (None, false) => parse_grid(&grid)?,
                (None, true) => vec![Viewpoint::reference()],
            };
            let ccm = ccm.as_deref().map(read_ccm).transpose()?;
            let pairs: Vec<(Scene, Viewpoint)> = scenes
                .iter()
                .flat_map(|s| viewpoints.iter().map(move |v| (s.clone(), *v)))
                .collect();
            let measure = |scene: &Scene, v: &Viewpoint| {
                let spec = SweepSpec {
                    viewpoint: *v,
                    lengths: lengths.clone().unwrap_or_else(|| scene.config.lengths.clone()),
                    quality: opts.quality,
                    seed: opts.seed,
                    ccm,
                };
                let curve = run_sweep(scene, &spec, None, None)?.curve;
                if let Some(ws) = &workspace {
                    ws.put_curve(&sweep_key(scene, &spec)?, &curve)?;
                }
                Ok(curve)
            };
            run_batch(&pairs, &out_dir, &measure, log)
        }
        Command::Compare { virtual_csv, real_csv } => {
            let a = read_curve(&virtual_csv, CurveSource::Virtual)?;
            let b = read_curve(&real_csv, CurveSource::Real)?;
            write_json(out, &compare(&a, &b)?)
        }
        Command::Calibrate { curve_csv, out: path } => {
            let table = calibrate_8bit(&read_curve(&curve_csv, CurveSource::Virtual)?)?;
            match path {
                Some(p) => table.write_csv(create(&p)?)?,
                None => table.write_csv(&mut *out)?,
            }
            writeln!(log, "r2_before {} r2_after {}", table.r2_before, table.r2_after).map_err(|e| Error::io("<stderr>", e))
        }
        Command::Ccm { scene, real, out: path, opts } => {
            let mut scene = resolve(&scene)?;
            let real = std::path::absolute(&real).map_err(|e| Error::io(&real, e))?;
            scene.config.checker.real_patches_csv = Some(real);
            let rig = scene.config.lighting.build(&scene.base_dir)?;
            let m = derive_ccm(&scene.config, &scene.base_dir, &rig, opts.quality, opts.seed)?;
            write_json(&mut create(&path)?, &m)?;
            if let Some(ws) = &workspace {
                let id = ws.put_ccm(&m)?;
                writeln!(log, "stored matrix {id}").map_err(|e| Error::io("<stderr>", e))?;
            }
            write_json(out, &m)
        }
        Command::Scenes => {
            let scenes = match &workspace {
                Some(ws) => ws.scenes()?,
                None => grass_sim::config::SceneConfig::bundled()
                    .iter()
                    .filter_map(|c| Scene::bundled(&c.name))
                    .collect(),
            };
            for s in scenes {
                writeln!(out, "{}\t{}", s.config.name, s.config.lighting.environment_id()).map_err(|e| Error::io("<stdout>", e))?;
            }
            Ok(())
        }
        Command::Serve { addr, ui } => {
            let root = match workspace {
                Some(ws) => Arc::new(ws),
                None => return Err(Error::Invalid(format!("serve needs --workspace or {WORKSPACE_ENV}"))),
            };
            let ui = ui.or_else(|| Some(root.root().join("ui")).filter(|p| p.is_dir()));
            let state = AppState {
                jobs: Arc::new(JobQueue::with_cpu_count(root.clone())?),
                workspace: root,
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io("<tokio runtime>", e))?;
            rt.block_on(serve(state, addr, ui)).map_err(|e| Error::io(addr.to_string(), e))
        }
    }
}
