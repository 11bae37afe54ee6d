//! Optimization: plane fitting, teacher training, distillation into the
//! experts, photometric fine-tuning, and evaluation metrics.

mod adam;
mod geometric;
mod metrics;
mod photometric;
mod stages;

use alloc::vec::Vec;

pub use adam::{Adam, DEFAULT_LEARNING_RATE};
pub use geometric::{
    fit_planes, fit_rmse, geometric_loss, nearest_rectangle, tighten_extents, GeometricLossConfig, PlaneFit, PlaneGradient,
    PlaneOptimizer,
};
pub use metrics::{mse, psnr, psnr_from_mse, ssim, PSNR_CAP};
pub use photometric::{expert_loss_and_grad, expert_render_pixels, photometric_loss, teacher_loss_and_grad, RaySet};
pub use stages::{distill, finetune, finetune_rgb_after_bake, train_teacher, TeacherScene};

use crate::render::{Clock, NoClock};

/// Runs independent jobs and returns their results in index order. Gradient
/// work is split into fixed-size chunks and merged in chunk order, so the
/// result does not depend on how an executor schedules the jobs.
pub trait Executor: Sync {
    fn map<R: Send, F: Fn(usize) -> R + Sync>(&self, n: usize, f: F) -> Vec<R>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Serial;

impl Executor for Serial {
    fn map<R: Send, F: Fn(usize) -> R + Sync>(&self, n: usize, f: F) -> Vec<R> {
        (0..n).map(f).collect()
    }
}

/// Rays per gradient chunk.
pub const GRAD_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainSchedule {
    /// One epoch is a full pass over the training pixels.
    pub teacher_epochs: usize,
    /// One epoch is one Adam step per expert on `distill_batch` samples.
    pub distill_epochs: usize,
    pub finetune_epochs: usize,
    /// Post-bake color fine-tuning, in passes over the training pixels.
    pub rgb_epochs: usize,
    pub ray_batch: usize,
    pub distill_batch: usize,
    pub learning_rate: f64,
    /// When set, every stage decays its step sizes geometrically so that the
    /// last step uses `final_learning_rate` (plane steps scale alike).
    pub final_learning_rate: Option<f64>,
    pub plane_learning_rate: f64,
    pub lambda_area: f64,
    pub max_hits_per_ray: usize,
    pub seed: u64,
    /// Log every this many optimizer steps (0 disables step logs).
    pub log_every: usize,
}

impl TrainSchedule {
    /// Step-size multiplier for step `step` of `total`.
    pub fn decay(&self, step: usize, total: usize) -> f64 {
        match self.final_learning_rate {
            Some(end) if total > 1 => {
                let f = step as f64 / (total - 1) as f64;
                crate::math::exp(f * crate::math::ln(end / self.learning_rate))
            }
            _ => 1.0,
        }
    }
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            teacher_epochs: 6000,
            distill_epochs: 1500,
            finetune_epochs: 2500,
            rgb_epochs: 100,
            ray_batch: 1024,
            distill_batch: 256,
            learning_rate: DEFAULT_LEARNING_RATE,
            final_learning_rate: None,
            plane_learning_rate: DEFAULT_LEARNING_RATE,
            lambda_area: 1e-4,
            max_hits_per_ray: 32,
            seed: 0,
            log_every: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stage {
    FitPlanes,
    Teacher,
    Distill,
    Finetune,
    FinetuneRgb,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::FitPlanes => "fit-planes",
            Stage::Teacher => "teacher",
            Stage::Distill => "distill",
            Stage::Finetune => "finetune",
            Stage::FinetuneRgb => "finetune-rgb",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRecord {
    pub stage: Stage,
    pub step: usize,
    pub epoch: usize,
    /// Photometric (or distillation) loss per sample of the last step.
    pub loss_color: f64,
    pub loss_geometric: Option<f64>,
    pub probe_psnr: Option<f64>,
    pub wall_time: f64,
}

/// Executor, clock and log sink shared by the training stages.
pub struct TrainContext<'a, E: Executor> {
    pub executor: &'a E,
    pub clock: &'a dyn Clock,
    pub log: &'a mut dyn FnMut(&LogRecord),
}

impl<'a> TrainContext<'a, Serial> {
    /// Serial, untimed, silent.
    pub fn quiet(log: &'a mut dyn FnMut(&LogRecord)) -> Self {
        TrainContext {
            executor: &Serial,
            clock: &NoClock,
            log,
        }
    }
}
