//! Point-cloud fitting loss for the rectangles and its analytic gradient.

use alloc::vec::Vec;

use super::adam::Adam;
use crate::error::{Error, Result};
use crate::geometry::{closest_point, PointCloud, Rectangle};
use crate::math::{self, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeometricLossConfig {
    /// Weight of the `Σ (w h)²` area term.
    pub lambda_area: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    /// When set, the step size decays geometrically from `learning_rate` to
    /// this value over the run.
    pub final_learning_rate: Option<f64>,
}

impl Default for GeometricLossConfig {
    fn default() -> Self {
        GeometricLossConfig {
            lambda_area: 1e-4,
            iterations: 1000,
            learning_rate: 5e-3,
            final_learning_rate: Some(5e-5),
        }
    }
}

/// Gradient with respect to one rectangle: center, an axis-angle rotation
/// increment of the frame about the center, and log width / log height.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PlaneGradient {
    pub center: Vec3,
    pub rotation: Vec3,
    pub log_width: f64,
    pub log_height: f64,
}

impl PlaneGradient {
    pub fn add(&mut self, o: &PlaneGradient) {
        self.center = self.center + o.center;
        self.rotation = self.rotation + o.rotation;
        self.log_width += o.log_width;
        self.log_height += o.log_height;
    }

    pub fn scaled(&self, s: f64) -> PlaneGradient {
        PlaneGradient {
            center: self.center * s,
            rotation: self.rotation * s,
            log_width: self.log_width * s,
            log_height: self.log_height * s,
        }
    }
}

/// Nearest rectangle for `x` (lowest index on ties) and the distance.
#[inline]
pub fn nearest_rectangle(x: Vec3, planes: &[Rectangle]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, r) in planes.iter().enumerate() {
        let d = (x - closest_point(x, r).0).norm_squared();
        if d < best.1 {
            best = (k, d);
        }
    }
    (best.0, math::sqrt(best.1))
}

/// `Σᵢ minₖ d(xᵢ, sₖ) + λ Σₖ (wₖhₖ)²` and its gradient. The min term only
/// feeds the nearest rectangle; points lying on it contribute nothing.
pub fn geometric_loss(
    cloud: &PointCloud,
    planes: &[Rectangle],
    config: &GeometricLossConfig,
) -> Result<(f64, Vec<PlaneGradient>)> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput("point cloud"));
    }
    if planes.is_empty() {
        return Err(Error::EmptyInput("planes"));
    }
    let mut grads = alloc::vec![PlaneGradient::default(); planes.len()];
    let mut loss = 0.0;
    for &x in &cloud.points {
        let (k, d) = nearest_rectangle(x, planes);
        loss += d;
        if d == 0.0 {
            continue;
        }
        let rect = &planes[k];
        let (q, [qa, qb]) = closest_point(x, rect);
        let g = (x - q) / d;
        let v = x - rect.center;
        let (hw, hh) = rect.half_extents();
        let (a, b) = rect.local_coords(x);
        let pg = &mut grads[k];
        pg.center = pg.center - g;
        pg.rotation = pg.rotation + g.cross(v);
        if a.abs() > hw {
            // q slides with the clamped edge at ±w/2
            pg.log_width -= g.dot(rect.right()) * qa.signum() * hw;
        }
        if b.abs() > hh {
            pg.log_height -= g.dot(rect.up()) * qb.signum() * hh;
        }
    }
    for (r, pg) in planes.iter().zip(grads.iter_mut()) {
        let area2 = r.area() * r.area();
        loss += config.lambda_area * area2;
        pg.log_width += 2.0 * config.lambda_area * area2;
        pg.log_height += 2.0 * config.lambda_area * area2;
    }
    Ok((loss, grads))
}

/// Root mean square of the per-point distance to the nearest rectangle.
pub fn fit_rmse(cloud: &PointCloud, planes: &[Rectangle]) -> f64 {
    if cloud.is_empty() || planes.is_empty() {
        return 0.0;
    }
    let s: f64 = cloud
        .points
        .iter()
        .map(|&x| {
            let d = nearest_rectangle(x, planes).1;
            d * d
        })
        .sum();
    math::sqrt(s / cloud.len() as f64)
}

/// Adam over rectangle parameters. Each step applies the center, the
/// rotation increment and log-size updates, then re-orthonormalizes.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneOptimizer {
    pub adam: Adam,
}

impl PlaneOptimizer {
    pub fn new(planes: usize, learning_rate: f64) -> Self {
        PlaneOptimizer {
            adam: Adam::new(planes * 8, learning_rate),
        }
    }

    pub fn step(&mut self, planes: &mut [Rectangle], grads: &[PlaneGradient]) -> Result<()> {
        let mut x = Vec::with_capacity(planes.len() * 8);
        let mut g = Vec::with_capacity(planes.len() * 8);
        for (r, pg) in planes.iter().zip(grads) {
            x.extend([
                r.center.x,
                r.center.y,
                r.center.z,
                0.0,
                0.0,
                0.0,
                math::ln(r.width),
                math::ln(r.height),
            ]);
            g.extend([
                pg.center.x,
                pg.center.y,
                pg.center.z,
                pg.rotation.x,
                pg.rotation.y,
                pg.rotation.z,
                pg.log_width,
                pg.log_height,
            ]);
        }
        self.adam.step(&mut x, &g);
        for (r, p) in planes.iter_mut().zip(x.chunks_exact(8)) {
            r.center = Vec3::new(p[0], p[1], p[2]);
            r.rotate(Vec3::new(p[3], p[4], p[5]))?;
            r.width = math::exp(p[6]);
            r.height = math::exp(p[7]);
        }
        Ok(())
    }
}

/// Result of [`fit_planes`].
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneFit {
    pub planes: Vec<Rectangle>,
    pub loss: f64,
    pub rmse: f64,
}

/// Smallest side given to a rectangle, relative to the cloud's extent.
const MIN_EXTENT: f64 = 1e-6;

/// Re-estimates every rectangle's extent with its plane held fixed. Each
/// rectangle becomes the minimum-area rectangle, within its plane, enclosing
/// the `n` points it is nearest to, widened by `(n+1)/(n-1)` along both sides:
/// the range of `n` uniform samples falls short of the true length by that
/// factor on average. Rectangles nearest to no point collapse to a negligible
/// square. No point's distance to its nearest rectangle increases.
pub fn tighten_extents(cloud: &PointCloud, planes: &[Rectangle]) -> Result<Vec<Rectangle>> {
    let mut local: Vec<Vec<[f64; 2]>> = alloc::vec![Vec::new(); planes.len()];
    let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut hi = -lo;
    for &x in &cloud.points {
        lo = Vec3::new(lo.x.min(x.x), lo.y.min(x.y), lo.z.min(x.z));
        hi = Vec3::new(hi.x.max(x.x), hi.y.max(x.y), hi.z.max(x.z));
        let (k, _) = nearest_rectangle(x, planes);
        let (a, b) = planes[k].local_coords(x);
        local[k].push([a, b]);
    }
    let floor = MIN_EXTENT * (hi - lo).norm().max(1.0);
    planes
        .iter()
        .zip(&local)
        .map(|(r, pts)| {
            if pts.is_empty() {
                return Rectangle::from_frame(r.center, r.normal(), r.up(), floor, floor);
            }
            let fit = min_area_rectangle(pts);
            let n = pts.len() as f64;
            let grow = if pts.len() > 1 { (n + 1.0) / (n - 1.0) } else { 1.0 };
            let [c, s] = fit.axis;
            let right = r.right() * c + r.up() * s;
            let up = r.up() * c - r.right() * s;
            let center = r.to_world(fit.center[0], fit.center[1]);
            Rectangle::from_frame(center, r.normal(), up, (grow * fit.size[0]).max(floor), (grow * fit.size[1]).max(floor))
                .map(|t| {
                    debug_assert!((t.right() - right).norm() < 1e-9);
                    t
                })
        })
        .collect()
}

struct Rect2 {
    /// Unit direction of the first side.
    axis: [f64; 2],
    center: [f64; 2],
    size: [f64; 2],
}

/// Minimum-area enclosing rectangle of 2D points. One side of the optimum is
/// collinear with an edge of the convex hull, so every hull edge is tried;
/// ties keep the earliest candidate, with the unrotated axes first.
fn min_area_rectangle(pts: &[[f64; 2]]) -> Rect2 {
    let hull = convex_hull(pts);
    let mut axes = alloc::vec![[1.0, 0.0]];
    for i in 0..hull.len() {
        let p = hull[i];
        let q = hull[(i + 1) % hull.len()];
        let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
        let len = math::sqrt(dx * dx + dy * dy);
        if len > 0.0 {
            // fold into the quarter turn around the current axes
            let (mut c, mut s) = (dx / len, dy / len);
            while !(c > 0.0 && s >= 0.0) {
                (c, s) = (s, -c);
            }
            axes.push([c, s]);
        }
    }
    let mut best: Option<(f64, Rect2)> = None;
    for [c, s] in axes {
        let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        for p in &hull {
            let u = p[0] * c + p[1] * s;
            let v = -p[0] * s + p[1] * c;
            b = [b[0].min(u), b[1].max(u), b[2].min(v), b[3].max(v)];
        }
        let size = [b[1] - b[0], b[3] - b[2]];
        let area = size[0] * size[1];
        if best.as_ref().is_none_or(|(a, _)| area < *a) {
            let (mu, mv) = (0.5 * (b[0] + b[1]), 0.5 * (b[2] + b[3]));
            let center = [mu * c - mv * s, mu * s + mv * c];
            best = Some((area, Rect2 { axis: [c, s], center, size }));
        }
    }
    best.expect("at least the unrotated axes").1
}

/// Andrew's monotone chain; collinear points are dropped.
fn convex_hull(pts: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut p = pts.to_vec();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: alloc::boxed::Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { alloc::boxed::Box::new(p.iter()) } else { alloc::boxed::Box::new(p.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    hull
}

/// Minimizes [`geometric_loss`] with Adam for `config.iterations` steps, then
/// (for a positive area weight) applies [`tighten_extents`].
pub fn fit_planes(cloud: &PointCloud, planes_init: &[Rectangle], config: &GeometricLossConfig) -> Result<PlaneFit> {
    let mut planes = planes_init.to_vec();
    let mut opt = PlaneOptimizer::new(planes.len(), config.learning_rate);
    let mut loss = geometric_loss(cloud, &planes, config)?.0;
    let n = config.iterations;
    for it in 0..n {
        if let Some(lr_end) = config.final_learning_rate {
            let f = if n > 1 { it as f64 / (n - 1) as f64 } else { 0.0 };
            opt.adam.learning_rate = config.learning_rate * math::exp(f * math::ln(lr_end / config.learning_rate));
        }
        let (l, g) = geometric_loss(cloud, &planes, config)?;
        loss = l;
        opt.step(&mut planes, &g)?;
    }
    if config.lambda_area > 0.0 {
        planes = tighten_extents(cloud, &planes)?;
    }
    if n > 0 || config.lambda_area > 0.0 {
        loss = geometric_loss(cloud, &planes, config)?.0;
    }
    let rmse = fit_rmse(cloud, &planes);
    Ok(PlaneFit { planes, loss, rmse })
}
