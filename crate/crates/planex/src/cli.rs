//! Command-line driver. Exit codes: 0 success, 1 usage error, 2 runtime
//! failure.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use planex_core::math::Vec3;
use planex_core::render::RenderConfig;
use planex_core::scene::{Dataset, Split};
use planex_core::synthetic::{make_dataset, SyntheticSpec, TextureKind};
use planex_core::train::LogRecord;

use crate::api::{CameraJson, DEFAULT_MAX_PIXELS};
use crate::bundle::{export_bundle, load_bundle};
use crate::checkpoint::{inspect_checkpoint, load_checkpoint, save_checkpoint, Checkpoint};
use crate::config::PipelineConfig;
use crate::error::{io_err, Error, Result};
use crate::log::NdjsonLog;
use crate::manifest::{load_dataset, quantize_images, write_dataset};
use crate::parallel::{init_threads, Rayon, WallClock};
use crate::pipeline::{self, compare, evaluate, metrics_summary, Driver, FrameMetrics};
use crate::server::{serve, ServiceState};
use crate::image_io;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;
pub const DEFAULT_PORT: u16 = 8080;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Full-length training schedule.
    Full,
    /// Short schedule for the built-in synthetic scene.
    Synthetic,
}

#[derive(Debug, Parser)]
#[command(name = "planex", version, about = "Planar-expert scene fitting, training and rendering")]
pub struct Cli {
    /// Base settings before `--config` and `--set` are applied.
    #[arg(long, global = true, value_enum, default_value_t = Preset::Full)]
    pub preset: Preset,
    /// JSON file overriding pipeline settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one setting, e.g. `--set schedule.teacher_epochs=30`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic rectangle scene with ground-truth views.
    MakeSynthetic(MakeSynthetic),
    /// Initialize rectangles from the point cloud and fit them.
    FitPlanes(FitPlanes),
    /// Train the teacher field jointly with the rectangles.
    Train(StageArgs),
    /// Distill the teacher into the per-plane experts.
    Distill(DistillArgs),
    /// Photometric fine-tuning of the experts.
    Finetune(StageArgs),
    /// Bake alpha textures into the checkpoint.
    Bake(BakeArgs),
    /// Fine-tune expert colors against the baked alpha.
    FinetuneRgb(StageArgs),
    /// Render one view to PNG (and optionally depth).
    Render(RenderArgs),
    /// PSNR/SSIM over a dataset split, written as CSV.
    Eval(EvalArgs),
    /// Export the baked bundle for the viewer.
    ExportBundle(ExportArgs),
    /// Run the HTTP/WebSocket render service.
    Serve(ServeArgs),
    /// Print a checkpoint header without reading parameters.
    Inspect(InspectArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TextureArg {
    Constant,
    Checker,
    Gradient,
    Mixed,
}

#[derive(Debug, Args)]
pub struct MakeSynthetic {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub planes: usize,
    #[arg(long, value_enum, default_value_t = TextureArg::Mixed)]
    pub texture: TextureArg,
    #[arg(long, default_value_t = 20)]
    pub train_views: usize,
    #[arg(long, default_value_t = 8)]
    pub test_views: usize,
    /// Image width and height.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 4000)]
    pub points: usize,
    /// Give every third plane alpha 0.6.
    #[arg(long)]
    pub translucent: bool,
}

#[derive(Debug, Args)]
pub struct FitPlanes {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// NDJSON training log.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StageArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BakeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Texture side length; defaults to the configured bake resolution.
    #[arg(long)]
    pub resolution: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Camera JSON (the `camera` object of a render request).
    #[arg(long, conflicts_with = "frame")]
    pub camera: Option<PathBuf>,
    /// Dataset manifest, used with `--frame`.
    #[arg(long, requires = "frame")]
    pub dataset: Option<PathBuf>,
    /// Frame name from the manifest (its image path).
    #[arg(long, requires = "dataset")]
    pub frame: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write `<stem>.png` (16-bit depth) and `<stem>.depth` (raw).
    #[arg(long)]
    pub depth: Option<PathBuf>,
    /// Render with no early termination or baked alpha.
    #[arg(long)]
    pub exact: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Checkpoint to render; mutually exclusive with `--renders`.
    #[arg(long, required_unless_present = "renders", conflicts_with = "renders")]
    pub checkpoint: Option<PathBuf>,
    /// Directory of pre-rendered PNGs laid out like the dataset's image paths.
    #[arg(long)]
    pub renders: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub exact: bool,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Reference view direction `x,y,z` used for the baked colors.
    #[arg(long, value_parser = parse_vec3, default_value = "0,0,-1")]
    pub direction: Vec3,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    #[arg(long, env = "PLANEX_PORT", default_value_t = DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
}

fn parse_vec3(s: &str) -> std::result::Result<Vec3, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match v.as_slice() {
        [x, y, z] if (x * x + y * y + z * z) > 0.0 => Ok(Vec3::new(*x, *y, *z)),
        [_, _, _] => Err("direction must be nonzero".into()),
        _ => Err("expected three comma-separated numbers".into()),
    }
}

/// Usage failure discovered after parsing (e.g. a missing input file).
#[derive(Debug)]
struct Usage(String);

fn require_exists(flag: &str, path: &Path) -> std::result::Result<(), Usage> {
    if path.exists() {
        Ok(())
    } else {
        Err(Usage(format!("{flag}: {} does not exist", path.display())))
    }
}

impl Command {
    fn check_inputs(&self) -> std::result::Result<(), Usage> {
        let ck = |p: &Path| require_exists("--checkpoint", p);
        let ds = |p: &Path| require_exists("--dataset", p);
        match self {
            Command::MakeSynthetic(_) => Ok(()),
            Command::FitPlanes(a) => ds(&a.dataset),
            Command::Train(a) | Command::Finetune(a) | Command::FinetuneRgb(a) => {
                ds(&a.dataset)?;
                ck(&a.checkpoint)
            }
            Command::Distill(a) => ck(&a.checkpoint),
            Command::Bake(a) => ck(&a.checkpoint),
            Command::Render(a) => {
                ck(&a.checkpoint)?;
                if let Some(c) = &a.camera {
                    require_exists("--camera", c)?;
                }
                if let Some(d) = &a.dataset {
                    ds(d)?;
                }
                if a.camera.is_none() && a.frame.is_none() {
                    return Err(Usage("render needs --camera or --dataset with --frame".into()));
                }
                Ok(())
            }
            Command::Eval(a) => {
                ds(&a.dataset)?;
                if let Some(c) = &a.checkpoint {
                    ck(c)?;
                }
                if let Some(r) = &a.renders {
                    require_exists("--renders", r)?;
                }
                Ok(())
            }
            Command::ExportBundle(a) => ck(&a.checkpoint),
            Command::Serve(a) => {
                ck(&a.checkpoint)?;
                if let Some(b) = &a.bundle {
                    require_exists("--bundle", b)?;
                }
                Ok(())
            }
            Command::Inspect(a) => ck(&a.checkpoint),
        }
    }
}

/// Parses `argv` (including the program name), runs, and returns the exit code.
pub fn cli_run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Err(Usage(msg)) = cli.command.check_inputs() {
        eprintln!("error: {msg}");
        return EXIT_USAGE;
    }
    let base = match cli.preset {
        Preset::Full => PipelineConfig::default(),
        Preset::Synthetic => PipelineConfig::synthetic(),
    };
    let config = match PipelineConfig::load_onto(base, cli.config.as_deref(), &cli.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    init_threads(cli.threads);
    match run(&cli, &config) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

fn open_log(path: Option<&Path>) -> Result<NdjsonLog<Box<dyn Write>>> {
    let out: Box<dyn Write> = match path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p).map_err(io_err(p))?)),
        None => Box::new(std::io::stderr()),
    };
    Ok(NdjsonLog::new(out))
}

fn with_driver<R>(
    cli: &Cli,
    config: &PipelineConfig,
    log_path: Option<&Path>,
    f: impl FnOnce(&mut Driver<'_, Rayon>) -> Result<R>,
) -> Result<R> {
    let mut log = open_log(log_path)?;
    let clock = WallClock::new();
    let mut sink = |r: &LogRecord| log.record(r);
    let mut driver = Driver {
        config,
        seed: cli.seed,
        executor: &Rayon,
        clock: &clock,
        log: &mut sink,
    };
    f(&mut driver)
}

fn dataset_render_config(config: &PipelineConfig, bg: [f64; 3], dataset: &Dataset, exact: bool) -> RenderConfig {
    let base = config.render_config(bg, dataset.near, dataset.far);
    if exact {
        RenderConfig {
            background: bg,
            t_near: dataset.near,
            t_far: dataset.far,
            max_hits_per_ray: base.max_hits_per_ray,
            ..RenderConfig::exact()
        }
    } else {
        base
    }
}

fn run(cli: &Cli, config: &PipelineConfig) -> Result<()> {
    match &cli.command {
        Command::MakeSynthetic(a) => {
            if a.planes == 0 {
                return Err(Error::Invalid("--planes must be at least 1".into()));
            }
            let spec = SyntheticSpec {
                planes: a.planes,
                texture: match a.texture {
                    TextureArg::Constant => TextureKind::Constant,
                    TextureArg::Checker => TextureKind::Checker,
                    TextureArg::Gradient => TextureKind::Gradient,
                    TextureArg::Mixed => TextureKind::Mixed,
                },
                seed: cli.seed,
                opaque: !a.translucent,
                width: a.size,
                height: a.size,
                train_views: a.train_views,
                test_views: a.test_views,
                cloud_points: a.points,
                ..SyntheticSpec::default()
            };
            let (mut dataset, _) = make_dataset(&spec)?;
            quantize_images(&mut dataset);
            let path = write_dataset(&a.out, &dataset)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::FitPlanes(a) => {
            let dataset = load_dataset(&a.dataset)?;
            let ck = with_driver(cli, config, a.log.as_deref(), |d| d.fit_planes(&dataset))?;
            save_checkpoint(&ck, &a.out)
        }
        Command::Train(a) => {
            let dataset = load_dataset(&a.dataset)?;
            let ck = load_checkpoint(&a.checkpoint)?;
            let ck = with_driver(cli, config, a.log.as_deref(), |d| d.train_teacher(ck, &dataset))?;
            save_checkpoint(&ck, &a.out)
        }
        Command::Distill(a) => {
            let ck = load_checkpoint(&a.checkpoint)?;
            let ck = with_driver(cli, config, a.log.as_deref(), |d| d.distill(ck))?;
            save_checkpoint(&ck, &a.out)
        }
        Command::Finetune(a) => {
            let dataset = load_dataset(&a.dataset)?;
            let ck = load_checkpoint(&a.checkpoint)?;
            let ck = with_driver(cli, config, a.log.as_deref(), |d| d.finetune(ck, &dataset))?;
            save_checkpoint(&ck, &a.out)
        }
        Command::FinetuneRgb(a) => {
            let dataset = load_dataset(&a.dataset)?;
            let ck = load_checkpoint(&a.checkpoint)?;
            let ck = with_driver(cli, config, a.log.as_deref(), |d| d.finetune_rgb(ck, &dataset))?;
            save_checkpoint(&ck, &a.out)
        }
        Command::Bake(a) => {
            let ck = load_checkpoint(&a.checkpoint)?;
            let ck = pipeline::bake(ck, a.resolution.unwrap_or(config.bake_resolution))?;
            save_checkpoint(&ck, &a.out)
        }
        Command::Render(a) => run_render(a, config),
        Command::Eval(a) => run_eval(a, config),
        Command::ExportBundle(a) => {
            let ck = load_checkpoint(&a.checkpoint)?;
            let m = export_bundle(&ck.scene, a.resolution.unwrap_or(config.bake_resolution), a.direction, &a.out)?;
            println!("{} planes written to {}", m.planes.len(), a.out.display());
            Ok(())
        }
        Command::Serve(a) => {
            let ck = load_checkpoint(&a.checkpoint)?;
            let bundle = a.bundle.as_deref().map(load_bundle).transpose()?;
            let state = Arc::new(ServiceState::new(ck.scene, bundle, config));
            let addr = SocketAddr::new(a.host, a.port);
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(|e| Error::Invalid(e.to_string()))?;
            rt.block_on(serve(state, addr)).map_err(|e| Error::Io {
                path: PathBuf::from(addr.to_string()),
                source: e,
            })
        }
        Command::Inspect(a) => {
            let h = inspect_checkpoint(&a.checkpoint)?;
            println!("version: {}", h.version);
            println!("stage: {}", h.stage);
            println!("seed: {}", h.seed);
            println!("planes: {}", h.plane_count());
            println!("expert parameters: {}", h.expert_param_count);
            if let Some(t) = h.teacher_config {
                let cfg: planex_core::radiance::NetConfig = t.into();
                println!("teacher parameters: {}", cfg.param_count());
            }
            if let Some([rx, ry]) = h.bake_resolution {
                println!("baked alpha: {rx}x{ry}");
            }
            Ok(())
        }
    }
}

fn run_render(a: &RenderArgs, config: &PipelineConfig) -> Result<()> {
    let ck: Checkpoint = load_checkpoint(&a.checkpoint)?;
    let bg = ck.scene.background;
    let (camera, mut rcfg) = match (&a.camera, &a.dataset, &a.frame) {
        (Some(path), _, _) => {
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            let cam: CameraJson = serde_json::from_str(&text).map_err(|e| Error::Parse {
                entry: path.display().to_string(),
                message: e.to_string(),
            })?;
            let camera = cam.to_camera(DEFAULT_MAX_PIXELS).map_err(|e| Error::InvalidCamera {
                entry: path.display().to_string(),
                message: e.to_string(),
            })?;
            (camera, config.render_config_default(bg))
        }
        (None, Some(ds), Some(name)) => {
            let dataset = load_dataset(ds)?;
            let frame = dataset
                .frames
                .iter()
                .find(|f| &f.name == name)
                .ok_or_else(|| Error::Invalid(format!("--frame: no frame named '{name}'")))?;
            (frame.camera, dataset_render_config(config, bg, &dataset, false))
        }
        _ => return Err(Error::Invalid("render needs --camera or --dataset with --frame".into())),
    };
    if a.exact {
        rcfg = RenderConfig {
            background: rcfg.background,
            t_near: rcfg.t_near,
            t_far: rcfg.t_far,
            max_hits_per_ray: rcfg.max_hits_per_ray,
            ..RenderConfig::exact()
        };
    }
    let out = pipeline::render(&ck.scene, &camera, &rcfg, &WallClock::new())?;
    image_io::write_png(&a.out, &out.image)?;
    if let Some(stem) = &a.depth {
        image_io::write_depth(stem, &out.depth, camera.width, camera.height, rcfg.t_far)?;
    }
    let t = out.stats.timings;
    eprintln!(
        "rendered {}x{}: {} evaluations, {:.1}% skipped, stages {:.4}/{:.4}/{:.4}/{:.4} s",
        camera.width,
        camera.height,
        out.stats.evaluations,
        100.0 * out.stats.skipped_fraction(),
        t.intersection,
        t.preprocessing,
        t.inference,
        t.integration
    );
    Ok(())
}

fn run_eval(a: &EvalArgs, config: &PipelineConfig) -> Result<()> {
    let dataset = load_dataset(&a.dataset)?;
    let split = match a.split {
        SplitArg::Train => Split::Train,
        SplitArg::Test => Split::Test,
    };
    let eval = if let Some(dir) = &a.renders {
        let mut frames = Vec::new();
        for f in dataset.split(split) {
            let img = image_io::read_png(&dir.join(&f.name))?;
            let (psnr, ssim) = compare(&img, &f.image)?;
            frames.push(FrameMetrics {
                name: f.name.clone(),
                psnr,
                ssim,
            });
        }
        if frames.is_empty() {
            return Err(Error::Invalid("split has no frames".into()));
        }
        metrics_summary(frames)
    } else {
        let ck = load_checkpoint(a.checkpoint.as_ref().expect("clap enforces --checkpoint"))?;
        let rcfg = dataset_render_config(config, ck.scene.background, &dataset, a.exact);
        evaluate(&ck.scene, &dataset, split, &rcfg)?
    };
    let csv = eval.to_csv();
    match &a.out {
        Some(p) => std::fs::write(p, &csv).map_err(io_err(p))?,
        None => print!("{csv}"),
    }
    eprintln!("mean PSNR {:.3} dB, mean SSIM {:.4}", eval.mean_psnr, eval.mean_ssim);
    Ok(())
}
