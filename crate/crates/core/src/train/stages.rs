use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::Adam;
use super::geometric::{geometric_loss, GeometricLossConfig, PlaneGradient, PlaneOptimizer};
use super::metrics::psnr_from_mse;
use super::photometric::{expert_loss_and_grad, expert_render_pixels, teacher_loss_and_grad, RaySet};
use super::{Executor, LogRecord, Stage, TrainContext, TrainSchedule, GRAD_CHUNK};
use crate::error::{Error, Result};
use crate::geometry::{Ray, Rectangle};
use crate::math::{self, Vec3};
use crate::radiance::{ExpertMlp, Heads, Tape, TeacherMlp};
use crate::render::{render_rays, AlphaTexture, NoClock, PlaneQuery, RenderConfig, RenderScene};
use crate::scene::{Dataset, Scene};

const TEACHER_SALT: u64 = 0x7eac_4e12;
const DISTILL_SALT: u64 = 0xd157_1110;
const FINETUNE_SALT: u64 = 0xf17e_7a4e;
const RGB_SALT: u64 = 0x0126_bbbb;

/// The teacher seen through the planes: every intersection is shaded by the
/// teacher at its world position.
#[derive(Clone, Copy, Debug)]
pub struct TeacherScene<'a> {
    pub planes: &'a [Rectangle],
    pub teacher: &'a TeacherMlp<f32>,
}

impl RenderScene for TeacherScene<'_> {
    fn planes(&self) -> &[Rectangle] {
        self.planes
    }

    fn evaluate(&self, plane: usize, queries: &[PlaneQuery], heads: Heads, out: &mut Vec<[f64; 4]>) {
        let rect = &self.planes[plane];
        let (hw, hh) = rect.half_extents();
        let mut pos = Vec::with_capacity(queries.len() * 3);
        let mut dir = Vec::with_capacity(queries.len() * 3);
        for q in queries {
            let x = rect.to_world(q.local[0] * hw, q.local[1] * hh);
            pos.extend([x.x as f32, x.y as f32, x.z as f32]);
            dir.extend([q.dir.x as f32, q.dir.y as f32, q.dir.z as f32]);
        }
        let mut tape = Tape::new();
        let o = self.teacher.forward_tape(&pos, &dir, heads, &mut tape);
        out.extend(
            o.chunks_exact(4)
                .map(|v| [v[0] as f64, v[1] as f64, v[2] as f64, v[3] as f64]),
        );
    }
}

fn mix_seed(seed: u64, salt: u64, k: u64) -> u64 {
    let mut z = seed ^ salt.rotate_left(17) ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn gather(set: &RaySet, idx: &[usize]) -> (Vec<Ray>, Vec<[f64; 3]>) {
    (
        idx.iter().map(|&i| set.rays[i]).collect(),
        idx.iter().map(|&i| set.colors[i]).collect(),
    )
}

fn should_log(schedule: &TrainSchedule, step: usize, last: bool) -> bool {
    last || (schedule.log_every > 0 && step % schedule.log_every == 0)
}

fn probe_set(dataset: &Dataset) -> Result<RaySet> {
    RaySet::from_frames(dataset.train().take(1), dataset.near, dataset.far)
}

fn probe_psnr_pixels(probe: &RaySet, pixels: &[[f64; 3]]) -> Option<f64> {
    if probe.is_empty() {
        return None;
    }
    let mut s = 0.0;
    for (p, g) in pixels.iter().zip(&probe.colors) {
        for c in 0..3 {
            let d = p[c] as f32 as f64 - g[c];
            s += d * d;
        }
    }
    Some(psnr_from_mse(s / (3 * probe.len()) as f64))
}

/// Trains the teacher at the plane intersections with `L_c + L_g`, updating
/// teacher parameters and rectangles together. Returns the teacher and the
/// refined rectangles.
pub fn train_teacher<E: Executor>(
    dataset: &Dataset,
    planes: &[Rectangle],
    teacher: TeacherMlp<f32>,
    schedule: &TrainSchedule,
    ctx: &mut TrainContext<'_, E>,
) -> Result<(TeacherMlp<f32>, Vec<Rectangle>)> {
    let set = RaySet::train(dataset)?;
    if set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if planes.is_empty() {
        return Err(Error::EmptyInput("planes"));
    }
    let mut teacher = teacher;
    let mut planes = planes.to_vec();
    let mut adam = Adam::new(teacher.param_count(), schedule.learning_rate);
    let mut popt = PlaneOptimizer::new(planes.len(), schedule.plane_learning_rate);
    let geo = GeometricLossConfig {
        lambda_area: schedule.lambda_area,
        ..GeometricLossConfig::default()
    };
    let probe = probe_set(dataset)?;
    let bg = dataset.background;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(schedule.seed, TEACHER_SALT, 0));
    let mut order: Vec<usize> = (0..set.len()).collect();
    let start = ctx.clock.now();
    let batch = schedule.ray_batch.max(1);
    let steps_per_epoch = set.len().div_ceil(batch);
    let mut step = 0;
    for epoch in 0..schedule.teacher_epochs {
        order.shuffle(&mut rng);
        for (bi, idx) in order.chunks(batch).enumerate() {
            let chunks = idx.len().div_ceil(GRAD_CHUNK);
            let parts = ctx.executor.map(chunks, |c| {
                let sub = &idx[c * GRAD_CHUNK..((c + 1) * GRAD_CHUNK).min(idx.len())];
                let (rays, targets) = gather(&set, sub);
                let mut g = vec![0.0f32; teacher.param_count()];
                let mut pg = vec![PlaneGradient::default(); planes.len()];
                let l = teacher_loss_and_grad(
                    &planes,
                    &teacher,
                    &rays,
                    &targets,
                    bg,
                    schedule.max_hits_per_ray,
                    &mut g,
                    Some(&mut pg),
                );
                (l, g, pg)
            });
            let mut loss = 0.0;
            let mut grads = vec![0.0f32; teacher.param_count()];
            let mut pgrads = vec![PlaneGradient::default(); planes.len()];
            for (l, g, pg) in &parts {
                loss += l;
                for (a, b) in grads.iter_mut().zip(g) {
                    *a += *b;
                }
                for (a, b) in pgrads.iter_mut().zip(pg) {
                    a.add(b);
                }
            }
            let lg = if dataset.cloud.is_empty() {
                None
            } else {
                let (lg, gg) = geometric_loss(&dataset.cloud, &planes, &geo)?;
                for (a, b) in pgrads.iter_mut().zip(&gg) {
                    a.add(b);
                }
                Some(lg)
            };
            let m = schedule.decay(step, schedule.teacher_epochs * steps_per_epoch);
            adam.learning_rate = schedule.learning_rate * m;
            popt.adam.learning_rate = schedule.plane_learning_rate * m;
            adam.step(teacher.params_mut(), &grads);
            popt.step(&mut planes, &pgrads)?;
            step += 1;
            let last = epoch + 1 == schedule.teacher_epochs && bi + 1 == steps_per_epoch;
            if should_log(schedule, step, last) {
                let probe_psnr = if probe.is_empty() {
                    None
                } else {
                    let scene = TeacherScene {
                        planes: &planes,
                        teacher: &teacher,
                    };
                    let cfg = RenderConfig {
                        background: bg,
                        max_hits_per_ray: schedule.max_hits_per_ray,
                        ..RenderConfig::exact()
                    };
                    let (res, _) = render_rays(&scene, &probe.rays, &cfg, &NoClock, false);
                    let px: Vec<[f64; 3]> = res.iter().map(|r| r.color).collect();
                    probe_psnr_pixels(&probe, &px)
                };
                (ctx.log)(&LogRecord {
                    stage: Stage::Teacher,
                    step,
                    epoch,
                    loss_color: loss / idx.len() as f64,
                    loss_geometric: lg,
                    probe_psnr,
                    wall_time: ctx.clock.now() - start,
                });
            }
        }
    }
    Ok((teacher, planes))
}

fn hemisphere_dir(rng: &mut ChaCha8Rng, normal: Vec3) -> Vec3 {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let phi: f64 = rng.gen_range(0.0..core::f64::consts::TAU);
    let s = math::sqrt((1.0 - z * z).max(0.0));
    let d = Vec3::new(s * math::cos(phi), s * math::sin(phi), z);
    if d.dot(normal) > 0.0 {
        -d
    } else {
        d
    }
}

fn distill_one(
    teacher: &TeacherMlp<f32>,
    rect: &Rectangle,
    mut expert: ExpertMlp<f32>,
    schedule: &TrainSchedule,
    k: usize,
) -> (ExpertMlp<f32>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(schedule.seed, DISTILL_SALT, k as u64));
    let mut adam = Adam::new(expert.param_count(), schedule.learning_rate);
    let n = schedule.distill_batch.max(1);
    let (hw, hh) = rect.half_extents();
    let mut world = Vec::with_capacity(n * 3);
    let mut local = Vec::with_capacity(n * 2);
    let mut dir = Vec::with_capacity(n * 3);
    let mut t_tape = Tape::new();
    let mut e_tape = Tape::new();
    let mut grads = vec![0.0f32; expert.param_count()];
    let mut grad_out = vec![0.0f32; n * 4];
    let mut losses = Vec::with_capacity(schedule.distill_epochs);
    for step in 0..schedule.distill_epochs {
        adam.learning_rate = schedule.learning_rate * schedule.decay(step, schedule.distill_epochs);
        world.clear();
        local.clear();
        dir.clear();
        for _ in 0..n {
            let a: f64 = rng.gen_range(-1.0..=1.0);
            let b: f64 = rng.gen_range(-1.0..=1.0);
            let x = rect.to_world(a * hw, b * hh);
            let d = hemisphere_dir(&mut rng, rect.normal());
            world.extend([x.x as f32, x.y as f32, x.z as f32]);
            local.extend([a as f32, b as f32]);
            dir.extend([d.x as f32, d.y as f32, d.z as f32]);
        }
        let target = teacher.forward_tape(&world, &dir, Heads::BOTH, &mut t_tape);
        let out = expert.forward_tape(&local, &dir, Heads::BOTH, &mut e_tape);
        let mut loss = 0.0;
        for i in 0..n * 4 {
            let d = out[i] - target[i];
            loss += (d * d) as f64;
            grad_out[i] = 2.0 * d;
        }
        grads.iter_mut().for_each(|g| *g = 0.0);
        expert.backward(&e_tape, &grad_out, &mut grads, None);
        adam.step(expert.params_mut(), &grads);
        losses.push(loss / n as f64);
    }
    (expert, losses)
}

/// Fits each expert to the teacher on its rectangle: positions uniform over
/// the rectangle, directions uniform over the hemisphere facing its front
/// (`d·n < 0`), L2 on color and alpha.
pub fn distill<E: Executor>(
    teacher: &TeacherMlp<f32>,
    planes: &[Rectangle],
    experts: Vec<ExpertMlp<f32>>,
    schedule: &TrainSchedule,
    ctx: &mut TrainContext<'_, E>,
) -> Result<Vec<ExpertMlp<f32>>> {
    if experts.len() != planes.len() {
        return Err(Error::ShapeMismatch {
            expected: planes.len(),
            actual: experts.len(),
        });
    }
    let start = ctx.clock.now();
    let results = ctx
        .executor
        .map(planes.len(), |k| distill_one(teacher, &planes[k], experts[k].clone(), schedule, k));
    let epochs = schedule.distill_epochs;
    for e in 0..epochs {
        if should_log(schedule, e + 1, e + 1 == epochs) {
            let mean = results.iter().map(|(_, l)| l[e]).sum::<f64>() / results.len().max(1) as f64;
            (ctx.log)(&LogRecord {
                stage: Stage::Distill,
                step: e + 1,
                epoch: e,
                loss_color: mean,
                loss_geometric: None,
                probe_psnr: None,
                wall_time: ctx.clock.now() - start,
            });
        }
    }
    Ok(results.into_iter().map(|(e, _)| e).collect())
}

#[allow(clippy::too_many_arguments)]
fn photometric_train<E: Executor>(
    dataset: &Dataset,
    planes: &[Rectangle],
    mut experts: Vec<ExpertMlp<f32>>,
    baked: Option<&[AlphaTexture]>,
    epochs: usize,
    stage: Stage,
    salt: u64,
    schedule: &TrainSchedule,
    ctx: &mut TrainContext<'_, E>,
) -> Result<Vec<ExpertMlp<f32>>> {
    if experts.len() != planes.len() {
        return Err(Error::ShapeMismatch {
            expected: planes.len(),
            actual: experts.len(),
        });
    }
    if epochs == 0 {
        return Ok(experts);
    }
    let set = RaySet::train(dataset)?;
    if set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let color_only = baked.is_some();
    let ranges: Vec<_> = experts
        .iter()
        .map(|e| if color_only { e.color_params() } else { 0..e.param_count() })
        .collect();
    let mut adams: Vec<Adam> = ranges.iter().map(|r| Adam::new(r.len(), schedule.learning_rate)).collect();
    let probe = probe_set(dataset)?;
    let bg = dataset.background;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(schedule.seed, salt, 0));
    let mut order: Vec<usize> = (0..set.len()).collect();
    let start = ctx.clock.now();
    let batch = schedule.ray_batch.max(1);
    let steps_per_epoch = set.len().div_ceil(batch);
    let mut step = 0;
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        for (bi, idx) in order.chunks(batch).enumerate() {
            let chunks = idx.len().div_ceil(GRAD_CHUNK);
            let parts = ctx.executor.map(chunks, |c| {
                let sub = &idx[c * GRAD_CHUNK..((c + 1) * GRAD_CHUNK).min(idx.len())];
                let (rays, targets) = gather(&set, sub);
                let mut g: Vec<Vec<f32>> = experts.iter().map(|e| vec![0.0; e.param_count()]).collect();
                let l = expert_loss_and_grad(
                    planes,
                    &experts,
                    baked,
                    &rays,
                    &targets,
                    bg,
                    schedule.max_hits_per_ray,
                    &mut g,
                );
                (l, g)
            });
            let mut loss = 0.0;
            let mut iter = parts.into_iter();
            let (l0, mut grads) = iter.next().expect("non-empty batch");
            loss += l0;
            for (l, g) in iter {
                loss += l;
                for (a, b) in grads.iter_mut().zip(&g) {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += *y;
                    }
                }
            }
            let lr = schedule.learning_rate * schedule.decay(step, epochs * steps_per_epoch);
            for (k, e) in experts.iter_mut().enumerate() {
                let r = ranges[k].clone();
                adams[k].learning_rate = lr;
                adams[k].step(&mut e.params_mut()[r.clone()], &grads[k][r]);
            }
            step += 1;
            let last = epoch + 1 == epochs && bi + 1 == steps_per_epoch;
            if should_log(schedule, step, last) {
                let px = expert_render_pixels(planes, &experts, baked, &probe.rays, bg, schedule.max_hits_per_ray);
                (ctx.log)(&LogRecord {
                    stage,
                    step,
                    epoch,
                    loss_color: loss / idx.len() as f64,
                    loss_geometric: None,
                    probe_psnr: probe_psnr_pixels(&probe, &px),
                    wall_time: ctx.clock.now() - start,
                });
            }
        }
    }
    Ok(experts)
}

/// Photometric fine-tuning of the experts through the full render path with
/// the rectangles frozen.
pub fn finetune<E: Executor>(
    experts: Vec<ExpertMlp<f32>>,
    dataset: &Dataset,
    planes: &[Rectangle],
    schedule: &TrainSchedule,
    ctx: &mut TrainContext<'_, E>,
) -> Result<Vec<ExpertMlp<f32>>> {
    photometric_train(
        dataset,
        planes,
        experts,
        None,
        schedule.finetune_epochs,
        Stage::Finetune,
        FINETUNE_SALT,
        schedule,
        ctx,
    )
}

/// Color-branch fine-tuning against the baked alpha textures. Alpha-branch
/// parameters are untouched.
pub fn finetune_rgb_after_bake<E: Executor>(
    scene: &Scene,
    dataset: &Dataset,
    schedule: &TrainSchedule,
    ctx: &mut TrainContext<'_, E>,
) -> Result<Vec<ExpertMlp<f32>>> {
    let baked = scene
        .baked
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig("scene has no baked alpha textures".into()))?;
    photometric_train(
        dataset,
        &scene.planes,
        scene.experts.clone(),
        Some(baked),
        schedule.rgb_epochs,
        Stage::FinetuneRgb,
        RGB_SALT,
        schedule,
        ctx,
    )
}
