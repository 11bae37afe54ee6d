//! Ray casting over a planar-expert scene.
//!
//! Rendering a batch of rays runs four stages: intersection (closed-form
//! ray/rectangle tests), pre-processing (depth sort, baked-alpha lookup and
//! weight filtering), network inference (all queries for one plane evaluated
//! together), and integration (composition, depth, background).

mod bake;
mod camera;
mod composite;
mod textured;

use alloc::vec;
use alloc::vec::Vec;

pub use bake::{bake_alpha, sample_baked_alpha, AlphaTexture, DEFAULT_BAKE_RESOLUTION};
pub use camera::PinholeCamera;
pub use textured::{bake_rgba, FixedDirection, RgbaTexture, TexturedScene};
pub use composite::{
    composite, composite_backward, render_depth, Composite, RadianceSample, Renormalization, RenderConfig,
    INVALID_DEPTH,
};

use crate::error::Result;
use crate::geometry::{intersect_rectangle, Hit, Ray, Rectangle};
use crate::math::Vec3;
use crate::radiance::Heads;
use crate::scene::Image;

/// A point on a plane to be shaded: normalized local coordinate in `[-1, 1]²`
/// and the world-space ray direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneQuery {
    pub local: [f64; 2],
    pub dir: Vec3,
}

/// Anything that can shade points on its rectangles.
pub trait RenderScene {
    fn planes(&self) -> &[Rectangle];

    fn baked_alpha(&self, _plane: usize) -> Option<&AlphaTexture> {
        None
    }

    /// Appends `[r, g, b, alpha]` for each query on `plane`. Heads that are
    /// not requested may be left at any value.
    fn evaluate(&self, plane: usize, queries: &[PlaneQuery], heads: Heads, out: &mut Vec<[f64; 4]>);
}

/// Wall-clock source for stage timings; [`NoClock`] disables timing.
pub trait Clock {
    fn now(&self) -> f64;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> f64 {
        0.0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTimings {
    pub intersection: f64,
    pub preprocessing: f64,
    pub inference: f64,
    pub integration: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.intersection + self.preprocessing + self.inference + self.integration
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RenderStats {
    pub rays: usize,
    /// Ray/rectangle intersections kept after the per-ray cap.
    pub hits: usize,
    /// Samples sent through a network.
    pub evaluations: usize,
    pub timings: StageTimings,
}

impl RenderStats {
    pub fn skipped_fraction(&self) -> f64 {
        if self.hits == 0 {
            0.0
        } else {
            1.0 - self.evaluations as f64 / self.hits as f64
        }
    }

    pub fn merge(&mut self, o: &RenderStats) {
        self.rays += o.rays;
        self.hits += o.hits;
        self.evaluations += o.evaluations;
        self.timings.intersection += o.timings.intersection;
        self.timings.preprocessing += o.timings.preprocessing;
        self.timings.inference += o.timings.inference;
        self.timings.integration += o.timings.integration;
    }
}

/// All hits with `t` inside the ray interval, nearest first (ties by plane
/// index), truncated to `max_hits`.
pub fn gather_hits(ray: &Ray, planes: &[Rectangle], max_hits: usize) -> Vec<Hit> {
    let mut hits: Vec<Hit> = planes
        .iter()
        .enumerate()
        .filter_map(|(k, r)| intersect_rectangle(ray, r, k))
        .collect();
    sort_hits(&mut hits);
    hits.truncate(max_hits);
    hits
}

#[inline]
pub(crate) fn sort_hits(hits: &mut [Hit]) {
    hits.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.plane_index.cmp(&b.plane_index)));
}

/// Shaded samples for one ray, in depth order.
#[derive(Clone, Debug, Default)]
pub struct RayResult {
    pub color: [f64; 3],
    pub depth: f64,
    pub samples: Vec<RadianceSample>,
}

#[derive(Clone, Copy)]
struct Slot {
    hit: Hit,
    alpha: f64,
    color: [f64; 3],
    keep: bool,
}

/// Renders a batch of rays through the four-stage pipeline.
pub fn render_rays<S: RenderScene + ?Sized, C: Clock + ?Sized>(
    scene: &S,
    rays: &[Ray],
    config: &RenderConfig,
    clock: &C,
    keep_samples: bool,
) -> (Vec<RayResult>, RenderStats) {
    let planes = scene.planes();
    let mut stats = RenderStats {
        rays: rays.len(),
        ..RenderStats::default()
    };

    // intersection
    let t0 = clock.now();
    let mut slots: Vec<Slot> = Vec::new();
    let mut spans: Vec<(usize, usize)> = Vec::with_capacity(rays.len());
    for ray in rays {
        let start = slots.len();
        for (k, r) in planes.iter().enumerate() {
            if let Some(hit) = intersect_rectangle(ray, r, k) {
                slots.push(Slot {
                    hit,
                    alpha: 0.0,
                    color: [0.0; 3],
                    keep: true,
                });
            }
        }
        spans.push((start, slots.len()));
    }
    let t1 = clock.now();

    // pre-processing
    let mut kept_spans = Vec::with_capacity(rays.len());
    for &(s, e) in &spans {
        let span = &mut slots[s..e];
        span.sort_by(|a, b| {
            a.hit
                .t
                .total_cmp(&b.hit.t)
                .then(a.hit.plane_index.cmp(&b.hit.plane_index))
        });
        kept_spans.push((s, s + (e - s).min(config.max_hits_per_ray)));
    }
    stats.hits = kept_spans.iter().map(|(s, e)| e - s).sum();
    let baked = config.use_baked_alpha && (0..planes.len()).all(|k| scene.baked_alpha(k).is_some());
    if baked {
        for &(s, e) in &kept_spans {
            let mut trans = 1.0;
            for slot in &mut slots[s..e] {
                if trans < config.termination_epsilon {
                    slot.keep = false;
                    continue;
                }
                let rect = &planes[slot.hit.plane_index];
                let tex = scene.baked_alpha(slot.hit.plane_index).unwrap();
                let a = sample_baked_alpha(tex, rect.normalized_local(slot.hit.local[0], slot.hit.local[1]));
                slot.alpha = a;
                slot.keep = trans * a >= config.weight_filter_threshold;
                trans *= 1.0 - a;
            }
        }
    }
    let t2 = clock.now();

    // network inference
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); planes.len()];
    let mut queries = Vec::new();
    let mut out = Vec::new();
    let mut flush = |buckets: &mut Vec<Vec<usize>>, slots: &mut [Slot], heads: Heads, evals: &mut usize| {
        for (k, bucket) in buckets.iter_mut().enumerate() {
            if bucket.is_empty() {
                continue;
            }
            queries.clear();
            for &i in bucket.iter() {
                let h = &slots[i].hit;
                queries.push(PlaneQuery {
                    local: planes[k].normalized_local(h.local[0], h.local[1]),
                    dir: rays_dir(rays, &spans, i),
                });
            }
            out.clear();
            scene.evaluate(k, &queries, heads, &mut out);
            *evals += bucket.len();
            for (&i, o) in bucket.iter().zip(out.iter()) {
                slots[i].color = [o[0], o[1], o[2]];
                if heads.alpha {
                    slots[i].alpha = o[3];
                }
            }
            bucket.clear();
        }
    };
    if baked {
        for &(s, e) in &kept_spans {
            for i in s..e {
                if slots[i].keep {
                    buckets[slots[i].hit.plane_index].push(i);
                }
            }
        }
        flush(&mut buckets, &mut slots, Heads::COLOR, &mut stats.evaluations);
    } else if config.termination_epsilon <= 0.0 {
        for &(s, e) in &kept_spans {
            for i in s..e {
                buckets[slots[i].hit.plane_index].push(i);
            }
        }
        flush(&mut buckets, &mut slots, Heads::BOTH, &mut stats.evaluations);
    } else {
        // wavefront: the j-th hit of every live ray per round
        let mut trans = vec![1.0; rays.len()];
        let mut round = 0;
        loop {
            let mut any = false;
            for (r, &(s, e)) in kept_spans.iter().enumerate() {
                if s + round < e && trans[r] >= config.termination_epsilon {
                    buckets[slots[s + round].hit.plane_index].push(s + round);
                    any = true;
                }
            }
            if !any {
                break;
            }
            flush(&mut buckets, &mut slots, Heads::BOTH, &mut stats.evaluations);
            for (r, &(s, e)) in kept_spans.iter().enumerate() {
                if s + round < e && trans[r] >= config.termination_epsilon {
                    trans[r] *= 1.0 - slots[s + round].alpha;
                }
            }
            round += 1;
        }
        // hits past the termination point were never shaded
        for &(s, e) in &kept_spans {
            let mut t = 1.0;
            for slot in &mut slots[s..e] {
                if t < config.termination_epsilon {
                    slot.keep = false;
                } else {
                    t *= 1.0 - slot.alpha;
                }
            }
        }
    }
    let t3 = clock.now();

    // integration
    let mut results = Vec::with_capacity(rays.len());
    let mut samples = Vec::new();
    for &(s, e) in &kept_spans {
        samples.clear();
        samples.extend(slots[s..e].iter().filter(|sl| sl.keep).map(|sl| RadianceSample {
            t: sl.hit.t,
            color: sl.color,
            alpha: sl.alpha,
            plane_index: sl.hit.plane_index,
        }));
        let c = composite(&samples, config).expect("hits are depth sorted");
        results.push(RayResult {
            color: c.pixel(config),
            depth: render_depth(&samples, config),
            samples: if keep_samples { samples.clone() } else { Vec::new() },
        });
    }
    let t4 = clock.now();
    stats.timings = StageTimings {
        intersection: t1 - t0,
        preprocessing: t2 - t1,
        inference: t3 - t2,
        integration: t4 - t3,
    };
    (results, stats)
}

#[inline]
fn rays_dir(rays: &[Ray], spans: &[(usize, usize)], slot: usize) -> Vec3 {
    // spans are sorted and contiguous; binary search the owning ray
    let r = spans.partition_point(|&(_, e)| e <= slot);
    rays[r].dir
}

/// Rendered color and depth for one camera.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    pub image: Image,
    /// Per-pixel expected depth, [`INVALID_DEPTH`] where undefined.
    pub depth: Vec<f64>,
    pub stats: RenderStats,
}

/// Rays for image rows `rows`, row-major.
pub fn camera_rays(camera: &PinholeCamera, rows: core::ops::Range<usize>, config: &RenderConfig) -> Result<Vec<Ray>> {
    let mut rays = Vec::with_capacity(rows.len() * camera.width);
    for y in rows {
        for x in 0..camera.width {
            rays.push(camera.generate_ray(x, y, config.t_near, config.t_far)?);
        }
    }
    Ok(rays)
}

/// Renders rows `rows` of the camera's image.
pub fn render_rows<S: RenderScene + ?Sized, C: Clock + ?Sized>(
    camera: &PinholeCamera,
    scene: &S,
    config: &RenderConfig,
    rows: core::ops::Range<usize>,
    clock: &C,
) -> Result<(Vec<f32>, Vec<f64>, RenderStats)> {
    let rays = camera_rays(camera, rows, config)?;
    let (results, stats) = render_rays(scene, &rays, config, clock, false);
    let mut rgb = Vec::with_capacity(results.len() * 3);
    let mut depth = Vec::with_capacity(results.len());
    for r in &results {
        rgb.extend(r.color.iter().map(|c| *c as f32));
        depth.push(r.depth);
    }
    Ok((rgb, depth, stats))
}

/// Tile height (rows) used by [`render_image`]; the parallel renderer in the
/// companion crate uses the same tiling so results are bit-identical.
pub const TILE_ROWS: usize = 16;

/// Renders a full image serially, tile by tile.
pub fn render_image<S: RenderScene + ?Sized, C: Clock + ?Sized>(
    camera: &PinholeCamera,
    scene: &S,
    config: &RenderConfig,
    clock: &C,
) -> Result<RenderOutput> {
    camera.validate()?;
    config.validate()?;
    let mut data = Vec::with_capacity(camera.width * camera.height * 3);
    let mut depth = Vec::with_capacity(camera.width * camera.height);
    let mut stats = RenderStats::default();
    let mut y = 0;
    while y < camera.height {
        let end = (y + TILE_ROWS).min(camera.height);
        let (rgb, d, s) = render_rows(camera, scene, config, y..end, clock)?;
        data.extend(rgb);
        depth.extend(d);
        stats.merge(&s);
        y = end;
    }
    Ok(RenderOutput {
        image: Image {
            width: camera.width,
            height: camera.height,
            data,
        },
        depth,
        stats,
    })
}

/// Shades a list of sorted hits for one ray: one evaluation per hit, baked
/// alphas and weight filtering when available.
pub fn evaluate_hits<S: RenderScene + ?Sized>(
    ray: &Ray,
    scene: &S,
    config: &RenderConfig,
) -> (Vec<RadianceSample>, RenderStats) {
    let (mut res, stats) = render_rays(scene, core::slice::from_ref(ray), config, &NoClock, true);
    (core::mem::take(&mut res[0].samples), stats)
}
