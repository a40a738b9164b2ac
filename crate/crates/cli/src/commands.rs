//! Subcommand definitions and their implementations.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use i4d_core::error::TrainError;
use i4d_core::gaussian::InitMode;
use i4d_core::geometry::{Intrinsics, PoseSE3};
use i4d_core::init::{initialize, InitConfig, InitReport};
use i4d_core::io::{self, load_bundle, load_checkpoint, manifest, ply, save_bundle, save_checkpoint};
use i4d_core::metrics::MetricReport;
use i4d_core::raster::{render, Camera, RenderSettings};
use i4d_core::synth::{reference_scene, SyntheticScene, SyntheticSceneSpec};
use i4d_core::trainer::{evaluate, train, views_from_bundle, TrainConfig};

use crate::report::{init_report_path, train_report_path, TrainReport};
use crate::server::{serve, ServeOptions};
use crate::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "i4d", version, about = "Motion-aware 4D Gaussian reconstruction from calibrated video")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Lite,
    Full,
}

impl From<ModeArg> for InitMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Lite => InitMode::Lite,
            ModeArg::Full => InitMode::Full,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic bundle from a scene description.
    Synth {
        /// Scene description JSON.
        #[arg(long, required_unless_present = "reference", conflicts_with = "reference")]
        spec: Option<PathBuf>,
        /// Use the built-in reference scene (256x256, 60 frames).
        #[arg(long)]
        reference: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write exact dynamic masks to `<out>/truth/`.
        #[arg(long)]
        truth: bool,
    },
    /// Motion masks, back-projection, grid pruning and model initialisation.
    Init {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, value_enum, default_value = "lite")]
        mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        lambda_static: Option<f64>,
        #[arg(long)]
        lambda_dynamic: Option<f64>,
        /// Back-project every n-th pixel.
        #[arg(long, default_value_t = 1)]
        stride: u32,
        /// Give every Gaussian this temporal scale in seconds (ablation).
        #[arg(long)]
        uniform_temporal_scale: Option<f64>,
        /// PLY view of the initial model.
        #[arg(long)]
        ply: Option<PathBuf>,
        /// PLY of the pruned seed cloud.
        #[arg(long)]
        seeds_ply: Option<PathBuf>,
        /// Directory for per-frame motion mask PNGs.
        #[arg(long)]
        masks_dir: Option<PathBuf>,
    },
    /// Optimise an initialised model against the bundle.
    Train {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// TrainConfig JSON; flags override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also optimise temporal means and scales.
        #[arg(long)]
        train_temporal: bool,
        #[arg(long)]
        log_every: Option<usize>,
        /// Report path (default `<out>.report.json`).
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        ply: Option<PathBuf>,
    },
    /// Render one frame to PNG.
    Render {
        #[arg(long)]
        model: PathBuf,
        /// JSON: a row-major 4x4 array or `{"pose": [...], "convention": "c2w"|"w2c"}`.
        #[arg(long)]
        pose: PathBuf,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        out: PathBuf,
        /// Take image size and intrinsics from this bundle.
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long, default_value_t = 640)]
        width: u32,
        #[arg(long, default_value_t = 360)]
        height: u32,
        #[arg(long, default_value_t = 60.0)]
        fov_y: f64,
        #[arg(long)]
        depth_pfm: Option<PathBuf>,
        #[arg(long)]
        alpha_pfm: Option<PathBuf>,
    },
    /// PSNR and SSIM over every frame of a bundle.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the viewer and stream rendered frames over a WebSocket.
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Built viewer assets; a minimal page is served when absent.
        #[arg(long)]
        viewer_dir: Option<PathBuf>,
    },
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth { spec, reference, out, seed, truth } => cmd_synth(spec.as_deref(), reference, &out, seed, truth),
        Command::Init {
            bundle,
            mode,
            out,
            lambda_static,
            lambda_dynamic,
            stride,
            uniform_temporal_scale,
            ply,
            seeds_ply,
            masks_dir,
        } => {
            let mut config = InitConfig::for_mode(mode.into());
            if let Some(l) = lambda_static {
                config.lambda_static = l;
            }
            if let Some(l) = lambda_dynamic {
                config.lambda_dynamic = l;
            }
            config.stride = stride;
            config.uniform_temporal_scale = uniform_temporal_scale;
            cmd_init(&bundle, &config, &out, ply.as_deref(), seeds_ply.as_deref(), masks_dir.as_deref())
        }
        Command::Train { bundle, init, iters, out, config, seed, train_temporal, log_every, report, ply } => {
            let mut cfg = match &config {
                Some(p) => read_json::<TrainConfig>(p)?,
                None => TrainConfig::default(),
            };
            if let Some(n) = iters {
                cfg.max_iters = n;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = log_every {
                cfg.log_every = n;
            }
            cfg.train_temporal |= train_temporal;
            let report = report.unwrap_or_else(|| train_report_path(&out));
            cmd_train(&bundle, &init, &cfg, &out, &report, ply.as_deref())
        }
        Command::Render { model, pose, t, out, bundle, width, height, fov_y, depth_pfm, alpha_pfm } => {
            let intrinsics = match bundle {
                Some(b) => load_bundle(&b).map_err(CliError::input)?.intrinsics,
                None => Intrinsics::from_fov_y(fov_y, width, height).map_err(CliError::input)?,
            };
            cmd_render(&model, &pose, t, &intrinsics, &out, depth_pfm.as_deref(), alpha_pfm.as_deref())
        }
        Command::Eval { model, bundle, out } => cmd_eval(&model, &bundle, &out),
        Command::Serve { model, port, host, viewer_dir } => {
            let model = load_checkpoint(&model).map_err(CliError::input)?;
            model.check_consistent().map_err(CliError::input)?;
            let options = ServeOptions { host, port, viewer_dir };
            let runtime = tokio::runtime::Runtime::new().map_err(CliError::other)?;
            runtime.block_on(serve(model, options)).map_err(CliError::other)
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display())).map_err(CliError::Input)?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display())).map_err(CliError::Input)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(CliError::other)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display())).map_err(CliError::Other)
}

fn cmd_synth(spec: Option<&Path>, reference: bool, out: &Path, seed: u64, truth: bool) -> CliResult<()> {
    let spec: SyntheticSceneSpec = match spec {
        Some(p) => read_json(p)?,
        None if reference => reference_scene(256, 256, 60),
        None => return Err(CliError::input(anyhow!("either --spec or --reference is required"))),
    };
    let scene = SyntheticScene::new(spec).map_err(CliError::input)?;
    let output = scene.generate(seed).map_err(CliError::input)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display())).map_err(CliError::Other)?;
    save_bundle(&output.bundle, out).map_err(CliError::other)?;
    if truth {
        let dir = out.join("truth");
        std::fs::create_dir_all(&dir).map_err(CliError::other)?;
        for (i, mask) in output.dynamic_truth.iter().enumerate() {
            io::save_mask_png(mask, &dir.join(format!("{i:05}.png"))).map_err(CliError::other)?;
        }
    }
    write_json(&out.join("scene.json"), &scene.spec)?;
    println!("wrote {} frames to {}", output.bundle.len(), out.display());
    Ok(())
}

fn cmd_init(
    bundle: &Path,
    config: &InitConfig,
    out: &Path,
    ply_path: Option<&Path>,
    seeds_ply: Option<&Path>,
    masks_dir: Option<&Path>,
) -> CliResult<()> {
    let bundle = load_bundle(bundle).map_err(CliError::input)?;
    if bundle.is_empty() {
        return Err(CliError::input(anyhow!("bundle has no frames")));
    }
    let output = initialize(&bundle, config).map_err(CliError::input)?;
    save_checkpoint(&output.model, out).map_err(CliError::other)?;
    write_json(&init_report_path(out), &output.report)?;
    if let Some(p) = ply_path {
        ply::write_model_ply(&output.model, p).map_err(CliError::other)?;
    }
    if let Some(p) = seeds_ply {
        let seeds: Vec<_> = output.static_seeds.iter().chain(&output.dynamic_seeds).cloned().collect();
        ply::write_seed_ply(&seeds, p).map_err(CliError::other)?;
    }
    if let Some(dir) = masks_dir {
        std::fs::create_dir_all(dir).map_err(CliError::other)?;
        for m in &output.masks.masks {
            io::save_mask_png(m, &dir.join(format!("{:05}.png", m.frame))).map_err(CliError::other)?;
        }
    }
    let r = &output.report;
    println!("motion threshold {:.4}", r.motion_threshold);
    println!("static points  {:>10} -> {:>8} seeds ({:.2}% reduction)", r.raw_static, r.static_seeds, 100.0 * r.static_reduction);
    println!("dynamic points {:>10} -> {:>8} seeds ({:.2}% reduction)", r.raw_dynamic, r.dynamic_seeds, 100.0 * r.dynamic_reduction);
    println!("total          {:>10} -> {:>8} gaussians ({:.2}% reduction)", r.raw_points, r.gaussians, 100.0 * r.total_reduction);
    Ok(())
}

fn cmd_train(bundle: &Path, init: &Path, config: &TrainConfig, out: &Path, report: &Path, ply_path: Option<&Path>) -> CliResult<()> {
    config.validate().map_err(CliError::input)?;
    let bundle = load_bundle(bundle).map_err(CliError::input)?;
    let mut model = load_checkpoint(init).map_err(CliError::input)?;
    let init_report: Option<InitReport> = {
        let p = init_report_path(init);
        if p.is_file() {
            Some(read_json(&p)?)
        } else {
            warn!("no init report at {}; geometry-recovery timings omitted", p.display());
            None
        }
    };
    let views = views_from_bundle(&bundle);
    let stdout = std::io::stdout();
    let summary = train(&mut model, &views, config, |p| {
        let mut lock = stdout.lock();
        if let Ok(line) = serde_json::to_string(p) {
            let _ = writeln!(lock, "{line}");
        }
    })
    .map_err(|e| match e {
        TrainError::NonFiniteLoss { .. } => CliError::NonFinite(e.into()),
        TrainError::Config(_) => CliError::Input(e.into()),
        other => CliError::Other(other.into()),
    })?;
    save_checkpoint(&model, out).map_err(CliError::other)?;
    if let Some(p) = ply_path {
        ply::write_model_ply(&model, p).map_err(CliError::other)?;
    }
    write_json(report, &TrainReport::new(&summary, &model, config, init_report))?;
    info!(
        "trained {} iterations in {:.1}s; final loss {:?}; checkpoint {}",
        summary.iterations,
        summary.total_s,
        summary.final_loss,
        out.display()
    );
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PoseFile {
    Matrix([f64; 16]),
    Object {
        pose: [f64; 16],
        #[serde(default)]
        convention: Option<i4d_core::bundle::PoseConvention>,
    },
}

/// Reads a camera-to-world pose from JSON.
pub fn read_pose(path: &Path) -> CliResult<PoseSE3> {
    let (m, convention) = match read_json::<PoseFile>(path)? {
        PoseFile::Matrix(m) => (m, None),
        PoseFile::Object { pose, convention } => (pose, convention),
    };
    let pose = PoseSE3::from_row_major(&m)
        .with_context(|| format!("pose in {}", path.display()))
        .map_err(CliError::Input)?;
    Ok(match convention {
        Some(i4d_core::bundle::PoseConvention::WorldToCamera) => pose.inverse(),
        _ => pose,
    })
}

fn cmd_render(
    model: &Path,
    pose: &Path,
    t: f64,
    intrinsics: &Intrinsics,
    out: &Path,
    depth_pfm: Option<&Path>,
    alpha_pfm: Option<&Path>,
) -> CliResult<()> {
    let model = load_checkpoint(model).map_err(CliError::input)?;
    let pose = read_pose(pose)?;
    if !t.is_finite() {
        return Err(CliError::input(anyhow!("t = {t} is not finite")));
    }
    let clamped = t.clamp(0.0, model.video_length);
    if clamped != t {
        warn!("t = {t} lies outside [0, {}]; clamped to {clamped}", model.video_length);
    }
    let frame = render(&model, &Camera::new(pose, *intrinsics), clamped, &RenderSettings::default())
        .map_err(CliError::input)?;
    io::save_png(&frame.rgb, out).map_err(CliError::other)?;
    let (w, h) = (intrinsics.width, intrinsics.height);
    if let Some(p) = depth_pfm {
        let d: Vec<f32> = frame.depth.iter().map(|v| *v as f32).collect();
        io::pfm::write_pfm(p, w, h, &d).map_err(CliError::other)?;
    }
    if let Some(p) = alpha_pfm {
        let a: Vec<f32> = frame.alpha.iter().map(|v| *v as f32).collect();
        io::pfm::write_pfm(p, w, h, &a).map_err(CliError::other)?;
    }
    info!(
        "rendered {}x{} at t = {clamped} with {} survivors in {:.1} ms",
        w,
        h,
        frame.stats.survivors,
        frame.stats.timings.total().as_secs_f64() * 1e3
    );
    Ok(())
}

/// Per-frame metrics written by `eval`; contains no timings so repeated runs
/// produce identical files.
#[derive(Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub frames: usize,
    pub gaussians: usize,
    pub metrics: MetricReport,
}

fn cmd_eval(model: &Path, bundle: &Path, out: &Path) -> CliResult<()> {
    let model = load_checkpoint(model).map_err(CliError::input)?;
    let bundle = load_bundle(bundle).map_err(CliError::input)?;
    let views = views_from_bundle(&bundle);
    let metrics = evaluate(&model, &views, &RenderSettings::default()).map_err(CliError::input)?;
    println!("psnr {:.3} dB  ssim {:.4}  over {} frames", metrics.psnr, metrics.ssim, views.len());
    write_json(out, &EvalReport { frames: views.len(), gaussians: model.len(), metrics })
}

/// Files a bundle directory's manifest refers to, for hashing in tests.
pub fn bundle_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let m = manifest::Manifest::read(&dir.join(manifest::MANIFEST_FILE)).map_err(CliError::input)?;
    Ok(manifest::referenced_files(&m))
}
