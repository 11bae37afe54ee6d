//! Differentiable rendering of ray batches: photometric loss and its
//! gradient with respect to expert, teacher and plane parameters.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use super::geometric::PlaneGradient;
use crate::error::{Error, Result};
use crate::geometry::{intersect_rectangle, Hit, Ray, Rectangle};
use crate::radiance::{Heads, RadianceNet, Tape};
use crate::render::{composite, composite_backward, sample_baked_alpha, AlphaTexture, RadianceSample, RenderConfig};
use crate::scene::{Dataset, Frame};

/// Sum of squared errors over a batch and its gradient `2 (c - c_gt)`.
pub fn photometric_loss(rendered: &[[f64; 3]], target: &[[f64; 3]]) -> Result<(f64, Vec<[f64; 3]>)> {
    if rendered.len() != target.len() {
        return Err(Error::ShapeMismatch {
            expected: target.len(),
            actual: rendered.len(),
        });
    }
    let mut loss = 0.0;
    let grads = rendered
        .iter()
        .zip(target)
        .map(|(c, g)| {
            let d = [c[0] - g[0], c[1] - g[1], c[2] - g[2]];
            loss += d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            d.map(|v| 2.0 * v)
        })
        .collect();
    Ok((loss, grads))
}

/// Camera rays of a set of frames with their pixel colors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RaySet {
    pub rays: Vec<Ray>,
    pub colors: Vec<[f64; 3]>,
}

impl RaySet {
    pub fn from_frames<'a>(frames: impl IntoIterator<Item = &'a Frame>, near: f64, far: f64) -> Result<Self> {
        let mut set = RaySet::default();
        for f in frames {
            let cam = &f.camera;
            for y in 0..cam.height {
                for x in 0..cam.width {
                    set.rays.push(cam.generate_ray(x, y, near, far)?);
                    let p = f.image.pixel(x, y);
                    set.colors.push([p[0] as f64, p[1] as f64, p[2] as f64]);
                }
            }
        }
        Ok(set)
    }

    pub fn train(dataset: &Dataset) -> Result<Self> {
        Self::from_frames(dataset.train(), dataset.near, dataset.far)
    }

    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }
}

/// Sorted, capped hits of each ray stored back to back.
struct BatchHits {
    hits: Vec<Hit>,
    spans: Vec<(usize, usize)>,
}

fn collect_hits(rays: &[Ray], planes: &[Rectangle], max_hits: usize) -> BatchHits {
    let mut hits = Vec::new();
    let mut spans = Vec::with_capacity(rays.len());
    for ray in rays {
        let s = hits.len();
        hits.extend(planes.iter().enumerate().filter_map(|(k, r)| intersect_rectangle(ray, r, k)));
        crate::render::sort_hits(&mut hits[s..]);
        hits.truncate(s + (hits.len() - s).min(max_hits));
        spans.push((s, hits.len()));
    }
    BatchHits { hits, spans }
}

/// Composites every ray from per-hit `(color, alpha)`, accumulates the
/// photometric loss and hands `(∂L/∂color, ∂L/∂alpha)` per hit to `sink`.
fn composite_rays(
    batch: &BatchHits,
    shade: impl Fn(usize) -> ([f64; 3], f64),
    targets: &[[f64; 3]],
    background: [f64; 3],
    pixels: Option<&mut Vec<[f64; 3]>>,
    mut sink: impl FnMut(usize, [f64; 3], f64),
) -> f64 {
    let mut loss = 0.0;
    let mut samples = Vec::new();
    let mut gc = Vec::new();
    let mut ga = Vec::new();
    let mut pixels = pixels;
    let cfg = RenderConfig {
        background,
        ..RenderConfig::exact()
    };
    for (r, &(s, e)) in batch.spans.iter().enumerate() {
        samples.clear();
        for i in s..e {
            let (color, alpha) = shade(i);
            samples.push(RadianceSample {
                t: batch.hits[i].t,
                color,
                alpha,
                plane_index: batch.hits[i].plane_index,
            });
        }
        let c = composite(&samples, &cfg).expect("hits are depth sorted").pixel(&cfg);
        if let Some(p) = pixels.as_mut() {
            p.push(c);
        }
        let g = targets[r];
        let d = [c[0] - g[0], c[1] - g[1], c[2] - g[2]];
        loss += d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        if samples.is_empty() {
            continue;
        }
        gc.clear();
        gc.resize(samples.len(), [0.0; 3]);
        ga.clear();
        ga.resize(samples.len(), 0.0);
        composite_backward(&samples, background, d.map(|v| 2.0 * v), &mut gc, &mut ga);
        for (j, i) in (s..e).enumerate() {
            sink(i, gc[j], ga[j]);
        }
    }
    loss
}

/// Photometric loss of a ray batch rendered with per-plane experts; adds
/// the parameter gradients into `grads[k]`. With `baked` textures the alpha
/// comes from the textures and only color gradients are produced.
#[allow(clippy::too_many_arguments)]
pub fn expert_loss_and_grad<T: Float>(
    planes: &[Rectangle],
    experts: &[RadianceNet<T>],
    baked: Option<&[AlphaTexture]>,
    rays: &[Ray],
    targets: &[[f64; 3]],
    background: [f64; 3],
    max_hits: usize,
    grads: &mut [Vec<T>],
) -> f64 {
    expert_forward_backward(planes, experts, baked, rays, targets, background, max_hits, Some(grads), None)
}

/// Pixel colors of the differentiable path (matches the renderer with exact
/// composition and background blending).
pub fn expert_render_pixels<T: Float>(
    planes: &[Rectangle],
    experts: &[RadianceNet<T>],
    baked: Option<&[AlphaTexture]>,
    rays: &[Ray],
    background: [f64; 3],
    max_hits: usize,
) -> Vec<[f64; 3]> {
    let targets = vec![[0.0; 3]; rays.len()];
    let mut px = Vec::with_capacity(rays.len());
    expert_forward_backward(planes, experts, baked, rays, &targets, background, max_hits, None, Some(&mut px));
    px
}

#[allow(clippy::too_many_arguments)]
fn expert_forward_backward<T: Float>(
    planes: &[Rectangle],
    experts: &[RadianceNet<T>],
    baked: Option<&[AlphaTexture]>,
    rays: &[Ray],
    targets: &[[f64; 3]],
    background: [f64; 3],
    max_hits: usize,
    grads: Option<&mut [Vec<T>]>,
    pixels: Option<&mut Vec<[f64; 3]>>,
) -> f64 {
    let batch = collect_hits(rays, planes, max_hits);
    let k_planes = planes.len();
    let heads = if baked.is_some() { Heads::COLOR } else { Heads::BOTH };
    // group hits by plane
    let mut slot_of = vec![(0usize, 0usize); batch.hits.len()];
    let mut pos: Vec<Vec<T>> = vec![Vec::new(); k_planes];
    let mut dir: Vec<Vec<T>> = vec![Vec::new(); k_planes];
    let mut baked_alpha = vec![0.0; batch.hits.len()];
    for (r, &(s, e)) in batch.spans.iter().enumerate() {
        let d = rays[r].dir;
        for i in s..e {
            let h = &batch.hits[i];
            let k = h.plane_index;
            let l = planes[k].normalized_local(h.local[0], h.local[1]);
            slot_of[i] = (k, pos[k].len() / 2);
            pos[k].extend([T::from(l[0]).unwrap(), T::from(l[1]).unwrap()]);
            dir[k].extend([T::from(d.x).unwrap(), T::from(d.y).unwrap(), T::from(d.z).unwrap()]);
            if let Some(b) = baked {
                baked_alpha[i] = sample_baked_alpha(&b[k], l);
            }
        }
    }
    let mut tapes: Vec<Tape<T>> = (0..k_planes).map(|_| Tape::new()).collect();
    for k in 0..k_planes {
        if !pos[k].is_empty() {
            experts[k].forward_tape(&pos[k], &dir[k], heads, &mut tapes[k]);
        }
    }
    let mut grad_out: Vec<Vec<T>> = tapes.iter().map(|t| vec![T::zero(); t.batch() * 4]).collect();
    let loss = composite_rays(
        &batch,
        |i| {
            let (k, b) = slot_of[i];
            let o = &tapes[k].outputs()[b * 4..b * 4 + 4];
            let c = [o[0].to_f64().unwrap(), o[1].to_f64().unwrap(), o[2].to_f64().unwrap()];
            let a = if baked.is_some() { baked_alpha[i] } else { o[3].to_f64().unwrap() };
            (c, a)
        },
        targets,
        background,
        pixels,
        |i, gc, ga| {
            let (k, b) = slot_of[i];
            let g = &mut grad_out[k][b * 4..b * 4 + 4];
            for c in 0..3 {
                g[c] = T::from(gc[c]).unwrap();
            }
            if baked.is_none() {
                g[3] = T::from(ga).unwrap();
            }
        },
    );
    if let Some(grads) = grads {
        for k in 0..k_planes {
            if tapes[k].batch() > 0 {
                experts[k].backward(&tapes[k], &grad_out[k], &mut grads[k], None);
            }
        }
    }
    loss
}

/// Photometric loss of a ray batch rendered with the teacher at the world
/// intersection points. Adds teacher parameter gradients into `grads` and,
/// when requested, the gradient with respect to each plane (through the
/// intersection points' dependence on center and orientation).
#[allow(clippy::too_many_arguments)]
pub fn teacher_loss_and_grad<T: Float>(
    planes: &[Rectangle],
    teacher: &RadianceNet<T>,
    rays: &[Ray],
    targets: &[[f64; 3]],
    background: [f64; 3],
    max_hits: usize,
    grads: &mut [T],
    plane_grads: Option<&mut [PlaneGradient]>,
) -> f64 {
    let batch = collect_hits(rays, planes, max_hits);
    let n = batch.hits.len();
    let mut pos = Vec::with_capacity(n * 3);
    let mut dir = Vec::with_capacity(n * 3);
    let mut ray_of = vec![0usize; n];
    for (r, &(s, e)) in batch.spans.iter().enumerate() {
        let d = rays[r].dir;
        for i in s..e {
            let x = batch.hits[i].point;
            ray_of[i] = r;
            pos.extend([T::from(x.x).unwrap(), T::from(x.y).unwrap(), T::from(x.z).unwrap()]);
            dir.extend([T::from(d.x).unwrap(), T::from(d.y).unwrap(), T::from(d.z).unwrap()]);
        }
    }
    let mut tape = Tape::new();
    if n > 0 {
        teacher.forward_tape(&pos, &dir, Heads::BOTH, &mut tape);
    }
    let mut grad_out = vec![T::zero(); n * 4];
    let loss = composite_rays(
        &batch,
        |i| {
            let o = &tape.outputs()[i * 4..i * 4 + 4];
            (
                [o[0].to_f64().unwrap(), o[1].to_f64().unwrap(), o[2].to_f64().unwrap()],
                o[3].to_f64().unwrap(),
            )
        },
        targets,
        background,
        None,
        |i, gc, ga| {
            let g = &mut grad_out[i * 4..i * 4 + 4];
            for c in 0..3 {
                g[c] = T::from(gc[c]).unwrap();
            }
            g[3] = T::from(ga).unwrap();
        },
    );
    if n == 0 {
        return loss;
    }
    match plane_grads {
        None => teacher.backward(&tape, &grad_out, grads, None),
        Some(pg) => {
            let mut gpos = vec![T::zero(); n * 3];
            teacher.backward(&tape, &grad_out, grads, Some(&mut gpos));
            for i in 0..n {
                let h = &batch.hits[i];
                let rect = &planes[h.plane_index];
                let d = rays[ray_of[i]].dir;
                let nrm = rect.normal();
                let gx = crate::math::Vec3::new(
                    gpos[i * 3].to_f64().unwrap(),
                    gpos[i * 3 + 1].to_f64().unwrap(),
                    gpos[i * 3 + 2].to_f64().unwrap(),
                );
                // x = o + t d with t = (p - o)·n / (d·n)
                let s = gx.dot(d) / d.dot(nrm);
                let g = &mut pg[h.plane_index];
                g.center = g.center + nrm * s;
                g.rotation = g.rotation + nrm.cross(rect.center - h.point) * s;
            }
        }
    }
    loss
}
