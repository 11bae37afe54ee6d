//! Pipeline configuration: defaults, a JSON override file, and `key=value`
//! overrides addressed by dotted path (`schedule.teacher_epochs=30`).

use std::path::Path;

use planex_core::geometry::InitConfig;
use planex_core::render::{RenderConfig, Renormalization, DEFAULT_BAKE_RESOLUTION};
use planex_core::train::{GeometricLossConfig, TrainSchedule};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{io_err, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Number of planar experts.
    pub planes: usize,
    pub teacher_hidden: usize,
    pub bake_resolution: usize,
    pub init: InitJson,
    pub geometric: GeometricJson,
    pub schedule: ScheduleJson,
    pub render: RenderJson,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            planes: 12,
            teacher_hidden: 64,
            bake_resolution: DEFAULT_BAKE_RESOLUTION,
            init: InitJson::default(),
            geometric: GeometricJson::default(),
            schedule: ScheduleJson::default(),
            render: RenderJson::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitJson {
    pub init_size: Option<f64>,
    pub k_neighbors: usize,
}

impl Default for InitJson {
    fn default() -> Self {
        let d = InitConfig::default();
        InitJson {
            init_size: d.init_size,
            k_neighbors: d.k_neighbors,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometricJson {
    pub lambda_area: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub final_learning_rate: Option<f64>,
}

impl Default for GeometricJson {
    fn default() -> Self {
        let d = GeometricLossConfig::default();
        GeometricJson {
            lambda_area: d.lambda_area,
            iterations: d.iterations,
            learning_rate: d.learning_rate,
            final_learning_rate: d.final_learning_rate,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleJson {
    pub teacher_epochs: usize,
    pub distill_epochs: usize,
    pub finetune_epochs: usize,
    pub rgb_epochs: usize,
    pub ray_batch: usize,
    pub distill_batch: usize,
    pub learning_rate: f64,
    pub final_learning_rate: Option<f64>,
    pub plane_learning_rate: f64,
    pub lambda_area: f64,
    pub max_hits_per_ray: usize,
    pub log_every: usize,
}

impl Default for ScheduleJson {
    fn default() -> Self {
        let d = TrainSchedule::default();
        ScheduleJson {
            teacher_epochs: d.teacher_epochs,
            distill_epochs: d.distill_epochs,
            finetune_epochs: d.finetune_epochs,
            rgb_epochs: d.rgb_epochs,
            ray_batch: d.ray_batch,
            distill_batch: d.distill_batch,
            learning_rate: d.learning_rate,
            final_learning_rate: d.final_learning_rate,
            plane_learning_rate: d.plane_learning_rate,
            lambda_area: d.lambda_area,
            max_hits_per_ray: d.max_hits_per_ray,
            log_every: d.log_every,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenormJson {
    Off,
    DivideByWeight,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderJson {
    pub termination_epsilon: f64,
    pub weight_filter_threshold: f64,
    pub renormalization: RenormJson,
    pub max_hits_per_ray: usize,
    pub use_baked_alpha: bool,
    /// Ray interval for renders without a dataset (CLI `--camera`, service).
    pub t_near: f64,
    pub t_far: f64,
}

impl Default for RenderJson {
    fn default() -> Self {
        let d = RenderConfig::default();
        RenderJson {
            termination_epsilon: d.termination_epsilon,
            weight_filter_threshold: d.weight_filter_threshold,
            renormalization: RenormJson::Off,
            max_hits_per_ray: d.max_hits_per_ray,
            use_baked_alpha: d.use_baked_alpha,
            t_near: 0.0,
            t_far: 10.0,
        }
    }
}

impl PipelineConfig {
    /// Short schedule sized for the built-in synthetic scene (64×64 views).
    pub fn synthetic() -> Self {
        PipelineConfig {
            schedule: ScheduleJson {
                teacher_epochs: 100,
                distill_epochs: 1500,
                finetune_epochs: 40,
                log_every: 200,
                ..ScheduleJson::default()
            },
            ..PipelineConfig::default()
        }
    }

    pub fn init_config(&self, seed: u64) -> InitConfig {
        InitConfig {
            init_size: self.init.init_size,
            k_neighbors: self.init.k_neighbors,
            seed,
        }
    }

    pub fn geometric_config(&self) -> GeometricLossConfig {
        let g = &self.geometric;
        GeometricLossConfig {
            lambda_area: g.lambda_area,
            iterations: g.iterations,
            learning_rate: g.learning_rate,
            final_learning_rate: g.final_learning_rate,
        }
    }

    pub fn train_schedule(&self, seed: u64) -> TrainSchedule {
        let s = &self.schedule;
        TrainSchedule {
            teacher_epochs: s.teacher_epochs,
            distill_epochs: s.distill_epochs,
            finetune_epochs: s.finetune_epochs,
            rgb_epochs: s.rgb_epochs,
            ray_batch: s.ray_batch,
            distill_batch: s.distill_batch,
            learning_rate: s.learning_rate,
            final_learning_rate: s.final_learning_rate,
            plane_learning_rate: s.plane_learning_rate,
            lambda_area: s.lambda_area,
            max_hits_per_ray: s.max_hits_per_ray,
            seed,
            log_every: s.log_every,
        }
    }

    /// Render settings for a scene with the given background and depth range.
    pub fn render_config(&self, background: [f64; 3], t_near: f64, t_far: f64) -> RenderConfig {
        let r = &self.render;
        RenderConfig {
            termination_epsilon: r.termination_epsilon,
            weight_filter_threshold: r.weight_filter_threshold,
            background,
            renormalization: match r.renormalization {
                RenormJson::Off => Renormalization::Off,
                RenormJson::DivideByWeight => Renormalization::DivideByWeight,
            },
            max_hits_per_ray: r.max_hits_per_ray,
            use_baked_alpha: r.use_baked_alpha,
            t_near,
            t_far,
        }
    }

    /// Render settings using the configured ray interval.
    pub fn render_config_default(&self, background: [f64; 3]) -> RenderConfig {
        self.render_config(background, self.render.t_near, self.render.t_far)
    }

    /// Defaults, then `file` merged on top, then each `key=value`.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        Self::load_onto(PipelineConfig::default(), file, overrides)
    }

    /// Like [`PipelineConfig::load`] starting from `base`.
    pub fn load_onto(base: PipelineConfig, file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = serde_json::to_value(base).expect("config serializes");
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            let patch: Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
                entry: path.display().to_string(),
                message: e.to_string(),
            })?;
            merge(&mut value, patch);
        }
        for item in overrides {
            apply_override(&mut value, item)?;
        }
        serde_json::from_value(value).map_err(|e| Error::Parse {
            entry: "config".into(),
            message: e.to_string(),
        })
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// `a.b.c=value`; the value is parsed as JSON, falling back to a string.
pub fn apply_override(value: &mut Value, item: &str) -> Result<()> {
    let bad = |m: String| Error::Parse {
        entry: item.to_string(),
        message: m,
    };
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| bad("expected key=value".into()))?;
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = value;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = slot
            .as_object_mut()
            .ok_or_else(|| bad(format!("'{}' is not a section", parts[..i].join("."))))?;
        slot = obj
            .get_mut(*part)
            .ok_or_else(|| bad(format!("unknown setting '{}'", parts[..=i].join("."))))?;
    }
    *slot = parsed;
    Ok(())
}
