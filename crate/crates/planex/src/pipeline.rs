//! Stage drivers shared by the CLI, the service and the acceptance suite.
//! Each takes a checkpoint (or a dataset, for plane fitting) and returns the
//! next checkpoint.

use planex_core::geometry::init_planes;
use planex_core::radiance::{NetConfig, TeacherMlp};
use planex_core::render::{Clock, RenderConfig, RenderOutput, RenderScene};
use planex_core::scene::{Dataset, Image, Scene, Split};
use planex_core::train::{
    distill, finetune, finetune_rgb_after_bake, fit_planes, psnr, ssim, train_teacher, Executor, LogRecord, Stage,
    TrainContext,
};

use crate::checkpoint::Checkpoint;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::parallel::render_image_par;

/// Salt separating the teacher's initialization from the expert seeds.
const TEACHER_INIT_SALT: u64 = 0x7EAC_4E12;

pub struct Driver<'a, E: Executor> {
    pub config: &'a PipelineConfig,
    pub seed: u64,
    pub executor: &'a E,
    pub clock: &'a (dyn Clock + Sync),
    pub log: &'a mut dyn FnMut(&LogRecord),
}

impl<E: Executor> Driver<'_, E> {
    fn ctx(&mut self) -> TrainContext<'_, E> {
        TrainContext {
            executor: self.executor,
            clock: self.clock,
            log: &mut *self.log,
        }
    }

    /// Initial rectangles from the point cloud, fitted with the geometric
    /// loss; experts freshly initialized.
    pub fn fit_planes(&mut self, dataset: &Dataset) -> Result<Checkpoint> {
        let init = init_planes(&dataset.cloud, self.config.planes, &self.config.init_config(self.seed))?;
        let fit = fit_planes(&dataset.cloud, &init, &self.config.geometric_config())?;
        (self.log)(&LogRecord {
            stage: Stage::FitPlanes,
            step: self.config.geometric.iterations,
            epoch: 0,
            loss_color: 0.0,
            loss_geometric: Some(fit.loss),
            probe_psnr: None,
            wall_time: self.clock.now(),
        });
        Ok(Checkpoint {
            stage: Stage::FitPlanes,
            seed: self.seed,
            scene: Scene::with_new_experts(fit.planes, NetConfig::expert(), self.seed, dataset.background),
            teacher: None,
        })
    }

    /// Joint teacher and rectangle training. A missing teacher is created.
    pub fn train_teacher(&mut self, ck: Checkpoint, dataset: &Dataset) -> Result<Checkpoint> {
        let teacher = ck.teacher.clone().unwrap_or_else(|| {
            TeacherMlp::new(
                NetConfig::teacher().with_hidden(self.config.teacher_hidden),
                self.seed ^ TEACHER_INIT_SALT,
            )
        });
        let schedule = self.config.train_schedule(self.seed);
        let (teacher, planes) = train_teacher(dataset, &ck.scene.planes, teacher, &schedule, &mut self.ctx())?;
        Ok(Checkpoint {
            stage: Stage::Teacher,
            teacher: Some(teacher),
            scene: Scene {
                planes,
                baked: None,
                ..ck.scene
            },
            ..ck
        })
    }

    pub fn distill(&mut self, ck: Checkpoint) -> Result<Checkpoint> {
        let teacher = ck
            .teacher
            .as_ref()
            .ok_or_else(|| Error::Invalid("checkpoint has no teacher; run `train` first".into()))?;
        let schedule = self.config.train_schedule(self.seed);
        let experts = distill(teacher, &ck.scene.planes, ck.scene.experts.clone(), &schedule, &mut self.ctx())?;
        Ok(Checkpoint {
            stage: Stage::Distill,
            scene: Scene {
                experts,
                baked: None,
                ..ck.scene
            },
            ..ck
        })
    }

    pub fn finetune(&mut self, ck: Checkpoint, dataset: &Dataset) -> Result<Checkpoint> {
        let schedule = self.config.train_schedule(self.seed);
        let experts = finetune(ck.scene.experts.clone(), dataset, &ck.scene.planes, &schedule, &mut self.ctx())?;
        Ok(Checkpoint {
            stage: Stage::Finetune,
            scene: Scene {
                experts,
                baked: None,
                ..ck.scene
            },
            ..ck
        })
    }

    pub fn finetune_rgb(&mut self, ck: Checkpoint, dataset: &Dataset) -> Result<Checkpoint> {
        let schedule = self.config.train_schedule(self.seed);
        let experts = finetune_rgb_after_bake(&ck.scene, dataset, &schedule, &mut self.ctx())?;
        Ok(Checkpoint {
            stage: Stage::FinetuneRgb,
            scene: Scene { experts, ..ck.scene },
            ..ck
        })
    }

    /// fit-planes, teacher, distill, finetune.
    pub fn full(&mut self, dataset: &Dataset) -> Result<Checkpoint> {
        let ck = self.fit_planes(dataset)?;
        let ck = self.train_teacher(ck, dataset)?;
        let ck = self.distill(ck)?;
        self.finetune(ck, dataset)
    }

    /// fit-planes, then finetune from freshly initialized experts.
    pub fn init_only(&mut self, dataset: &Dataset) -> Result<Checkpoint> {
        let ck = self.fit_planes(dataset)?;
        self.finetune(ck, dataset)
    }
}

/// Bakes alpha textures into the checkpoint's scene.
pub fn bake(mut ck: Checkpoint, resolution: usize) -> Result<Checkpoint> {
    if resolution < 2 {
        return Err(Error::Invalid("bake resolution must be at least 2".into()));
    }
    ck.scene.bake(resolution);
    Ok(ck)
}

/// Per-image metrics over one split.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameMetrics {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub frames: Vec<FrameMetrics>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

impl Evaluation {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("image,psnr,ssim\n");
        for f in &self.frames {
            s.push_str(&format!("{},{:.6},{:.6}\n", f.name, f.psnr, f.ssim));
        }
        s.push_str(&format!("mean,{:.6},{:.6}\n", self.mean_psnr, self.mean_ssim));
        s
    }
}

/// Renders every frame of `split` and compares against the ground truth.
pub fn evaluate<S: RenderScene + Sync + ?Sized>(
    scene: &S,
    dataset: &Dataset,
    split: Split,
    config: &RenderConfig,
) -> Result<Evaluation> {
    let mut frames = Vec::new();
    for f in dataset.split(split) {
        let out = render_image_par(&f.camera, scene, config, &planex_core::render::NoClock)?;
        frames.push(FrameMetrics {
            name: f.name.clone(),
            psnr: psnr(&out.image, &f.image)?,
            ssim: ssim(&out.image, &f.image)?,
        });
    }
    if frames.is_empty() {
        return Err(Error::Invalid("split has no frames".into()));
    }
    Ok(metrics_summary(frames))
}

/// Mean PSNR over frames, matching the usual per-image averaging.
pub fn metrics_summary(frames: Vec<FrameMetrics>) -> Evaluation {
    let n = frames.len() as f64;
    let mean_psnr = frames.iter().map(|f| f.psnr).sum::<f64>() / n;
    let mean_ssim = frames.iter().map(|f| f.ssim).sum::<f64>() / n;
    Evaluation {
        frames,
        mean_psnr,
        mean_ssim,
    }
}

/// Image-pair metrics, for comparing two renders of the same camera.
pub fn compare(a: &Image, b: &Image) -> Result<(f64, f64)> {
    Ok((psnr(a, b)?, ssim(a, b)?))
}

/// Convenience wrapper used by the CLI and service.
pub fn render<S: RenderScene + Sync + ?Sized>(
    scene: &S,
    camera: &planex_core::render::PinholeCamera,
    config: &RenderConfig,
    clock: &(dyn Clock + Sync),
) -> Result<RenderOutput> {
    Ok(render_image_par(camera, scene, config, clock)?)
}
