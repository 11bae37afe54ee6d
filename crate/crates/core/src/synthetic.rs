//! Procedural rectangle scenes with known geometry, textures and opacity,
//! an independent reference renderer, and the posed datasets built from them.

use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{point_to_rectangle_distance, PointCloud, Rectangle};
use crate::math::{self, Vec3};
use crate::radiance::Heads;
use crate::render::{PinholeCamera, PlaneQuery, RenderScene};
use crate::scene::{Dataset, Frame, Image, Split};

/// Surface color as a function of normalized local coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Pattern {
    Constant([f64; 3]),
    Checker { cells: usize, a: [f64; 3], b: [f64; 3] },
    /// Linear blend along local axis 0 (right) or 1 (up).
    Gradient { from: [f64; 3], to: [f64; 3], axis: usize },
}

impl Pattern {
    pub fn color(&self, local: [f64; 2]) -> [f64; 3] {
        match *self {
            Pattern::Constant(c) => c,
            Pattern::Checker { cells, a, b } => {
                let cell = |v: f64| {
                    let u = Float::floor((v + 1.0) * 0.5 * cells as f64) as i64;
                    u.clamp(0, cells as i64 - 1)
                };
                if (cell(local[0]) + cell(local[1])) % 2 == 0 {
                    a
                } else {
                    b
                }
            }
            Pattern::Gradient { from, to, axis } => {
                let s = ((local[axis] + 1.0) * 0.5).clamp(0.0, 1.0);
                [
                    from[0] + (to[0] - from[0]) * s,
                    from[1] + (to[1] - from[1]) * s,
                    from[2] + (to[2] - from[2]) * s,
                ]
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticPlane {
    pub rect: Rectangle,
    pub pattern: Pattern,
    /// Uniform opacity over the rectangle.
    pub alpha: f64,
}

/// Ground-truth scene; shading is exact and view-independent.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthScene {
    planes: Vec<SyntheticPlane>,
    rects: Vec<Rectangle>,
    pub background: [f64; 3],
}

impl GroundTruthScene {
    pub fn new(planes: Vec<SyntheticPlane>, background: [f64; 3]) -> Self {
        let rects = planes.iter().map(|p| p.rect).collect();
        GroundTruthScene {
            planes,
            rects,
            background,
        }
    }

    pub fn synthetic_planes(&self) -> &[SyntheticPlane] {
        &self.planes
    }

    pub fn rectangles(&self) -> &[Rectangle] {
        &self.rects
    }

    pub fn is_opaque(&self) -> bool {
        self.planes.iter().all(|p| p.alpha >= 1.0)
    }
}

impl RenderScene for GroundTruthScene {
    fn planes(&self) -> &[Rectangle] {
        &self.rects
    }

    fn evaluate(&self, plane: usize, queries: &[PlaneQuery], _heads: Heads, out: &mut Vec<[f64; 4]>) {
        let p = &self.planes[plane];
        for q in queries {
            let c = p.pattern.color(q.local);
            out.push([c[0], c[1], c[2], p.alpha]);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TextureKind {
    Constant,
    Checker,
    Gradient,
    /// Cycles through constant, checker and gradient.
    Mixed,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub planes: usize,
    pub texture: TextureKind,
    pub seed: u64,
    /// Every plane fully opaque; otherwise every third plane has alpha 0.6.
    pub opaque: bool,
    pub width: usize,
    pub height: usize,
    pub train_views: usize,
    pub test_views: usize,
    pub cloud_points: usize,
    pub background: [f64; 3],
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            planes: 10,
            texture: TextureKind::Mixed,
            seed: 0,
            opaque: true,
            width: 64,
            height: 64,
            train_views: 20,
            test_views: 8,
            cloud_points: 4000,
            background: [0.0; 3],
        }
    }
}

/// Distance of every camera from the origin.
pub const CAMERA_RADIUS: f64 = 3.2;
/// Vertical field of view of every camera, radians.
pub const CAMERA_FOV_Y: f64 = 0.7;
/// Train cameras lie on a grid within this azimuth/elevation (radians) of +z.
pub const TRAIN_RANGE: [f64; 2] = [0.30, 0.18];
/// Test cameras are drawn uniformly inside this wider range, so some of them
/// look at the scene from outside the training poses.
pub const TEST_RANGE: [f64; 2] = [0.40, 0.24];
pub const NEAR: f64 = 0.5;
pub const FAR: f64 = 8.0;

fn random_color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [
        rng.gen_range(0.1..0.9),
        rng.gen_range(0.1..0.9),
        rng.gen_range(0.1..0.9),
    ]
}

fn random_pattern(kind: TextureKind, index: usize, rng: &mut ChaCha8Rng) -> Pattern {
    let kind = match kind {
        TextureKind::Mixed => [TextureKind::Constant, TextureKind::Checker, TextureKind::Gradient][index % 3],
        k => k,
    };
    match kind {
        TextureKind::Checker => Pattern::Checker {
            cells: rng.gen_range(2..=3),
            a: random_color(rng),
            b: random_color(rng),
        },
        TextureKind::Gradient => Pattern::Gradient {
            from: random_color(rng),
            to: random_color(rng),
            axis: rng.gen_range(0..2),
        },
        _ => Pattern::Constant(random_color(rng)),
    }
}

/// Smallest distance between two rectangles, estimated on an edge and
/// interior grid of each.
fn rect_gap(a: &Rectangle, b: &Rectangle) -> f64 {
    let probe = |r: &Rectangle, o: &Rectangle| {
        let (hw, hh) = r.half_extents();
        let mut m = f64::INFINITY;
        for i in 0..=10 {
            for j in 0..=10 {
                let p = r.to_world(hw * (i as f64 / 5.0 - 1.0), hh * (j as f64 / 5.0 - 1.0));
                m = m.min(point_to_rectangle_distance(p, o));
            }
        }
        m
    };
    probe(a, b).min(probe(b, a))
}

fn random_frame(rng: &mut ChaCha8Rng, max_tilt: f64) -> (Vec3, Vec3) {
    let tilt = rng.gen_range(0.0..max_tilt);
    let az = rng.gen_range(0.0..core::f64::consts::TAU);
    let n = Vec3::new(
        math::sin(tilt) * math::cos(az),
        math::sin(tilt) * math::sin(az),
        math::cos(tilt),
    );
    let roll = rng.gen_range(-0.6..0.6);
    let u0 = (Vec3::Y - n * n.dot(Vec3::Y)).normalized();
    (n, u0.rotated(n * roll))
}

/// Random non-intersecting rectangles inside the unit sphere, facing the
/// camera rig on the +z side.
pub fn generate_scene(spec: &SyntheticSpec) -> Result<GroundTruthScene> {
    if spec.planes == 0 {
        return Err(Error::InvalidConfig("plane count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut planes: Vec<SyntheticPlane> = Vec::with_capacity(spec.planes);
    let mut attempts = 0;
    while planes.len() < spec.planes {
        attempts += 1;
        if attempts > 20_000 {
            return Err(Error::InvalidConfig(format!(
                "could not place {} separated rectangles",
                spec.planes
            )));
        }
        let center = Vec3::new(
            rng.gen_range(-0.6..0.6),
            rng.gen_range(-0.6..0.6),
            rng.gen_range(-0.5..0.5),
        );
        let (n, u) = random_frame(&mut rng, 0.5);
        let w = rng.gen_range(0.35..0.6);
        let h = rng.gen_range(0.35..0.6);
        let rect = Rectangle::new(center, n, u, w, h)?;
        if rect.corners().iter().any(|c| c.norm() > 0.95) {
            continue;
        }
        if planes.iter().any(|p| rect_gap(&p.rect, &rect) < 0.08) {
            continue;
        }
        let index = planes.len();
        let alpha = if spec.opaque || index % 3 != 2 { 1.0 } else { 0.6 };
        planes.push(SyntheticPlane {
            rect,
            pattern: random_pattern(spec.texture, index, &mut rng),
            alpha,
        });
    }
    Ok(GroundTruthScene::new(planes, spec.background))
}

fn rig_camera(az: f64, el: f64, width: usize, height: usize) -> PinholeCamera {
    let eye = Vec3::new(
        CAMERA_RADIUS * math::cos(el) * math::sin(az),
        CAMERA_RADIUS * math::sin(el),
        CAMERA_RADIUS * math::cos(el) * math::cos(az),
    );
    PinholeCamera::look_at(eye, Vec3::ZERO, Vec3::Y, CAMERA_FOV_Y, width, height)
}

/// Cameras on a sphere of radius [`CAMERA_RADIUS`] looking at the origin,
/// on a jittered grid over `range = [azimuth, elevation]`.
pub fn rig_cameras(count: usize, range: [f64; 2], width: usize, height: usize, seed: u64) -> Vec<PinholeCamera> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols = (Float::ceil(math::sqrt(count as f64)) as usize).max(1);
    let rows = count.div_ceil(cols).max(1);
    (0..count)
        .map(|i| {
            let (c, r) = (i % cols, i / cols);
            let fx = if cols > 1 { c as f64 / (cols - 1) as f64 } else { 0.5 };
            let fy = if rows > 1 { r as f64 / (rows - 1) as f64 } else { 0.5 };
            let az = (2.0 * fx - 1.0) * range[0] + rng.gen_range(-0.02..0.02);
            let el = (2.0 * fy - 1.0) * range[1] + rng.gen_range(-0.02..0.02);
            rig_camera(az, el, width, height)
        })
        .collect()
}

/// Cameras at uniformly random azimuth/elevation inside `range`.
pub fn scattered_cameras(count: usize, range: [f64; 2], width: usize, height: usize, seed: u64) -> Vec<PinholeCamera> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let az = rng.gen_range(-range[0]..=range[0]);
            let el = rng.gen_range(-range[1]..=range[1]);
            rig_camera(az, el, width, height)
        })
        .collect()
}

/// Reference renderer: plane-equation intersection and back-to-front "over"
/// blending, written independently of the main render path.
pub fn oracle_render(scene: &GroundTruthScene, camera: &PinholeCamera, near: f64, far: f64) -> Result<Image> {
    let mut img = Image::new(camera.width, camera.height);
    let mut layers: Vec<(f64, usize, [f64; 2])> = Vec::new();
    for y in 0..camera.height {
        for x in 0..camera.width {
            let ray = camera.generate_ray(x, y, near, far)?;
            layers.clear();
            for (k, p) in scene.planes.iter().enumerate() {
                let n = p.rect.normal();
                let denom = ray.dir.dot(n);
                if denom.abs() < 1e-8 {
                    continue;
                }
                let t = (p.rect.center - ray.origin).dot(n) / denom;
                if t <= near || t >= far {
                    continue;
                }
                let off = ray.origin + ray.dir * t - p.rect.center;
                let a = off.dot(p.rect.right());
                let b = off.dot(p.rect.up());
                if a.abs() <= p.rect.width * 0.5 && b.abs() <= p.rect.height * 0.5 {
                    layers.push((t, k, [2.0 * a / p.rect.width, 2.0 * b / p.rect.height]));
                }
            }
            // farthest first; equal depths put the higher plane index behind
            layers.sort_by(|l, r| r.0.total_cmp(&l.0).then(r.1.cmp(&l.1)));
            let mut c = scene.background;
            for &(_, k, local) in &layers {
                let p = &scene.planes[k];
                let col = p.pattern.color(local);
                for i in 0..3 {
                    c[i] = p.alpha * col[i] + (1.0 - p.alpha) * c[i];
                }
            }
            img.set_pixel(x, y, [c[0] as f32, c[1] as f32, c[2] as f32]);
        }
    }
    Ok(img)
}

/// Per-pixel ray depth of the nearest surface (`None` where the ray misses).
pub fn analytic_depth(scene: &GroundTruthScene, camera: &PinholeCamera, near: f64, far: f64) -> Result<Vec<Option<f64>>> {
    let mut out = Vec::with_capacity(camera.width * camera.height);
    for y in 0..camera.height {
        for x in 0..camera.width {
            let ray = camera.generate_ray(x, y, near, far)?;
            let t = scene
                .rects
                .iter()
                .enumerate()
                .filter_map(|(k, r)| crate::geometry::intersect_rectangle(&ray, r, k))
                .map(|h| h.t)
                .fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.min(t))));
            out.push(t);
        }
    }
    Ok(out)
}

/// Points drawn uniformly by area from the scene's rectangles, with their
/// surface colors.
pub fn sample_cloud(scene: &GroundTruthScene, count: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let areas: Vec<f64> = scene.planes.iter().map(|p| p.rect.area()).collect();
    let total: f64 = areas.iter().sum();
    let mut points = Vec::with_capacity(count);
    let mut colors = Vec::with_capacity(count);
    for _ in 0..count {
        let mut pick = rng.gen_range(0.0..total);
        let mut k = 0;
        while k + 1 < areas.len() && pick >= areas[k] {
            pick -= areas[k];
            k += 1;
        }
        let p = &scene.planes[k];
        let l = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
        let (hw, hh) = p.rect.half_extents();
        points.push(p.rect.to_world(l[0] * hw, l[1] * hh));
        let c = p.pattern.color(l);
        colors.push(c.map(|v| Float::round(v * 255.0).clamp(0.0, 255.0) as u8));
    }
    PointCloud {
        points,
        colors: Some(colors),
    }
}

/// Generates the scene, renders every view with [`oracle_render`] and samples
/// the point cloud. Deterministic in `spec`.
pub fn make_dataset(spec: &SyntheticSpec) -> Result<(Dataset, GroundTruthScene)> {
    let scene = generate_scene(spec)?;
    let mut frames = Vec::with_capacity(spec.train_views + spec.test_views);
    let (w, h) = (spec.width, spec.height);
    let sets = [
        (Split::Train, rig_cameras(spec.train_views, TRAIN_RANGE, w, h, spec.seed ^ (1 << 32))),
        (Split::Test, scattered_cameras(spec.test_views, TEST_RANGE, w, h, spec.seed ^ (2 << 32))),
    ];
    for (split, cams) in sets {
        for (i, camera) in cams.into_iter().enumerate() {
            let image = oracle_render(&scene, &camera, NEAR, FAR)?;
            let tag = if split == Split::Train { "train" } else { "test" };
            frames.push(Frame {
                name: format!("{tag}_{i:03}"),
                camera,
                image,
                split,
            });
        }
    }
    let cloud = sample_cloud(&scene, spec.cloud_points, spec.seed.wrapping_add(7));
    Ok((
        Dataset {
            frames,
            cloud,
            near: NEAR,
            far: FAR,
            background: spec.background,
        },
        scene,
    ))
}

/// Cloud of `points` samples on `rects` random rectangles, recentred and
/// scaled so every point lies in the unit sphere. Returns the cloud and the
/// generating rectangles.
///
/// Any two rectangles are farther apart than the longest rectangle diagonal,
/// so farthest-point sampling with `k >= rects` seeds every rectangle.
pub fn rectangle_cloud(rects: usize, points: usize, seed: u64) -> Result<(PointCloud, Vec<Rectangle>)> {
    const SIDE: (f64, f64) = (0.08, 0.16);
    let gap = 1.1 * SIDE.1 * core::f64::consts::SQRT_2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Rectangle> = Vec::with_capacity(rects);
    let mut attempts = 0;
    while out.len() < rects {
        attempts += 1;
        if attempts > 200_000 {
            return Err(Error::InvalidConfig(format!("could not place {rects} rectangles")));
        }
        let center = Vec3::new(
            rng.gen_range(-0.9..0.9),
            rng.gen_range(-0.9..0.9),
            rng.gen_range(-0.9..0.9),
        );
        let (n, u) = random_frame(&mut rng, core::f64::consts::PI);
        let rect = Rectangle::new(center, n, u, rng.gen_range(SIDE.0..SIDE.1), rng.gen_range(SIDE.0..SIDE.1))?;
        if rect.corners().iter().any(|c| c.norm() > 1.0) || out.iter().any(|o| rect_gap(o, &rect) < gap) {
            continue;
        }
        out.push(rect);
    }
    let corners: Vec<Vec3> = out.iter().flat_map(|r| r.corners()).collect();
    let mid = corners.iter().fold(Vec3::ZERO, |a, &c| a + c) * (1.0 / corners.len() as f64);
    let radius = corners.iter().map(|&c| (c - mid).norm()).fold(0.0, f64::max);
    for r in &mut out {
        r.center = (r.center - mid) * (1.0 / radius);
        r.width /= radius;
        r.height /= radius;
    }
    let planes = out
        .iter()
        .map(|r| SyntheticPlane {
            rect: *r,
            pattern: Pattern::Constant([0.5; 3]),
            alpha: 1.0,
        })
        .collect();
    let mut cloud = sample_cloud(&GroundTruthScene::new(planes, [0.0; 3]), points, seed ^ 0x5eed);
    cloud.colors = None;
    Ok((cloud, out))
}
