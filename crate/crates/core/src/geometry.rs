//! Oriented rectangles, rays, and the point-cloud operations used to place them.
//!
//! Every rectangle carries a right-handed local frame `(r, u, n)` with
//! `r = u × n`. Plane-local coordinates `(a, b)` are measured from the center
//! along `r` and `u` in scene units; textures, experts and exports all use
//! that convention.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};

/// Rays closer to parallel than this count as misses.
pub const PARALLEL_EPS: f64 = 1e-8;

/// Orthonormalizes a raw (normal, up) pair and returns `(n, u, r)`.
pub fn normalize_frame(n_raw: Vec3, u_raw: Vec3) -> Result<(Vec3, Vec3, Vec3)> {
    let n_len = n_raw.norm();
    if !(n_len > 1e-12) || !n_len.is_finite() {
        return Err(Error::DegenerateFrame("normal has zero length"));
    }
    let n = n_raw / n_len;
    let u_len = u_raw.norm();
    if !(u_len > 1e-12) || !u_len.is_finite() {
        return Err(Error::DegenerateFrame("up vector has zero length"));
    }
    // sin of the angle between u_raw and n must exceed ~1e-6.
    let u_perp = u_raw - n * n.dot(u_raw);
    let perp_len = u_perp.norm();
    if perp_len <= 1e-6 * u_len {
        return Err(Error::DegenerateFrame("up vector parallel to normal"));
    }
    let mut u = u_perp / perp_len;
    // one more pass keeps n·u at rounding level for nearly parallel inputs
    u = u - n * n.dot(u);
    u = u / u.norm();
    let r = u.cross(n);
    Ok((n, u, r))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rectangle {
    pub center: Vec3,
    normal: Vec3,
    up: Vec3,
    right: Vec3,
    pub width: f64,
    pub height: f64,
}

impl Rectangle {
    pub fn new(center: Vec3, normal: Vec3, up: Vec3, width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0 && height > 0.0) || !width.is_finite() || !height.is_finite() {
            return Err(Error::DegenerateFrame("rectangle size must be positive"));
        }
        let (normal, up, right) = normalize_frame(normal, up)?;
        Ok(Rectangle {
            center,
            normal,
            up,
            right,
            width,
            height,
        })
    }

    /// Keeps an already orthonormal frame bit for bit (e.g. when reloading a
    /// saved rectangle); falls back to re-orthonormalizing otherwise.
    pub fn from_frame(center: Vec3, normal: Vec3, up: Vec3, width: f64, height: f64) -> Result<Self> {
        let mut r = Self::new(center, normal, up, width, height)?;
        let exact = Rectangle {
            normal,
            up,
            right: up.cross(normal),
            ..r
        };
        if exact.frame_error() < 1e-12 {
            r = exact;
        }
        Ok(r)
    }

    #[inline]
    pub fn normal(&self) -> Vec3 {
        self.normal
    }

    #[inline]
    pub fn up(&self) -> Vec3 {
        self.up
    }

    #[inline]
    pub fn right(&self) -> Vec3 {
        self.right
    }

    pub fn half_extents(&self) -> (f64, f64) {
        (0.5 * self.width, 0.5 * self.height)
    }

    /// Replaces the frame, re-orthonormalizing it.
    pub fn set_frame(&mut self, normal: Vec3, up: Vec3) -> Result<()> {
        let (n, u, r) = normalize_frame(normal, up)?;
        self.normal = n;
        self.up = u;
        self.right = r;
        Ok(())
    }

    /// Rotates the frame by an axis-angle increment and re-orthonormalizes.
    pub fn rotate(&mut self, w: Vec3) -> Result<()> {
        let n = self.normal.rotated(w);
        let u = self.up.rotated(w);
        self.set_frame(n, u)
    }

    /// Plane-local `(a, b)` of the projection of `x`.
    #[inline]
    pub fn local_coords(&self, x: Vec3) -> (f64, f64) {
        let d = x - self.center;
        (d.dot(self.right), d.dot(self.up))
    }

    #[inline]
    pub fn to_world(&self, a: f64, b: f64) -> Vec3 {
        self.center + self.right * a + self.up * b
    }

    /// `(a, b)` divided by the half extents, i.e. in `[-1, 1]²` on the rectangle.
    #[inline]
    pub fn normalized_local(&self, a: f64, b: f64) -> [f64; 2] {
        [a / (0.5 * self.width), b / (0.5 * self.height)]
    }

    /// Corners counter-clockwise when viewed from the `+n` side.
    pub fn corners(&self) -> [Vec3; 4] {
        let (hw, hh) = self.half_extents();
        [
            self.to_world(-hw, -hh),
            self.to_world(hw, -hh),
            self.to_world(hw, hh),
            self.to_world(-hw, hh),
        ]
    }

    /// Largest violation of the frame invariants.
    pub fn frame_error(&self) -> f64 {
        let m = Mat3::from_cols(self.right, self.up, self.normal);
        m.orthonormality_error()
            .max((self.right.cross(self.up) - self.normal).max_abs())
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
    pub t_near: f64,
    pub t_far: f64,
}

impl Ray {
    /// Builds a ray, normalizing `dir`.
    pub fn new(origin: Vec3, dir: Vec3, t_near: f64, t_far: f64) -> Self {
        Ray {
            origin,
            dir: dir.normalized(),
            t_near,
            t_far,
        }
    }

    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub plane_index: usize,
    pub t: f64,
    pub point: Vec3,
    /// `(a, b)` in scene units from the rectangle center.
    pub local: [f64; 2],
}

/// Closed-form ray/rectangle test. Boundary points count as hits.
#[inline]
pub fn intersect_rectangle(ray: &Ray, rect: &Rectangle, plane_index: usize) -> Option<Hit> {
    let denom = ray.dir.dot(rect.normal);
    if denom.abs() < PARALLEL_EPS {
        return None;
    }
    let t = (rect.center - ray.origin).dot(rect.normal) / denom;
    if !(t > ray.t_near && t < ray.t_far) {
        return None;
    }
    let point = ray.at(t);
    let (a, b) = rect.local_coords(point);
    let (hw, hh) = rect.half_extents();
    if a.abs() <= hw && b.abs() <= hh {
        Some(Hit {
            plane_index,
            t,
            point,
            local: [a, b],
        })
    } else {
        None
    }
}

/// Closest point of the bounded rectangle to `x`, with its clamped local coordinates.
#[inline]
pub fn closest_point(x: Vec3, rect: &Rectangle) -> (Vec3, [f64; 2]) {
    let (a, b) = rect.local_coords(x);
    let (hw, hh) = rect.half_extents();
    let ca = a.clamp(-hw, hw);
    let cb = b.clamp(-hh, hh);
    (rect.to_world(ca, cb), [ca, cb])
}

/// Euclidean distance from `x` to the bounded rectangle.
#[inline]
pub fn point_to_rectangle_distance(x: Vec3, rect: &Rectangle) -> f64 {
    (x - closest_point(x, rect).0).norm()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub colors: Option<Vec<[u8; 3]>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        PointCloud {
            points,
            colors: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Indices of the `k` nearest points to `q`, nearest first (ties by index).
    pub fn nearest(&self, q: Vec3, k: usize) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| ((*p - q).norm_squared(), i))
            .collect();
        let k = k.min(d.len());
        let cmp = |x: &(f64, usize), y: &(f64, usize)| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1));
        if k < d.len() && k > 0 {
            d.select_nth_unstable_by(k - 1, cmp);
            d.truncate(k);
        }
        d.sort_by(cmp);
        d.into_iter().map(|(_, i)| i).collect()
    }
}

/// Greedy farthest point sampling. The first index is drawn from `seed`;
/// later picks maximize the distance to the selected set, lowest index on ties.
pub fn farthest_point_sample(cloud: &PointCloud, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = cloud.len();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, available: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.gen_range(0..n);
    farthest_point_sample_from(cloud, k, first)
}

/// Farthest point sampling with an explicit first pick.
pub fn farthest_point_sample_from(cloud: &PointCloud, k: usize, first: usize) -> Result<Vec<usize>> {
    let n = cloud.len();
    if k == 0 || k > n || first >= n {
        return Err(Error::InvalidK { k, available: n });
    }
    let pts = &cloud.points;
    let mut selected = Vec::with_capacity(k);
    let mut min_d2 = alloc::vec![f64::INFINITY; n];
    let mut taken = alloc::vec![false; n];
    let mut current = first;
    loop {
        selected.push(current);
        taken[current] = true;
        if selected.len() == k {
            break;
        }
        let c = pts[current];
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for i in 0..n {
            let d = (pts[i] - c).norm_squared();
            if d < min_d2[i] {
                min_d2[i] = d;
            }
            if !taken[i] && min_d2[i] > best_d {
                best_d = min_d2[i];
                best = i;
            }
        }
        current = best;
    }
    Ok(selected)
}

/// Flips `v` so its first non-negligible component in (z, y, x) order is positive.
pub fn canonical_sign(v: Vec3) -> Vec3 {
    const TIE: f64 = 1e-12;
    for c in [v.z, v.y, v.x] {
        if c > TIE {
            return v;
        }
        if c < -TIE {
            return -v;
        }
    }
    v
}

/// PCA frame of the `k_neighbors` points closest to `center`: the normal is the
/// least-variance direction, the up vector the second least.
pub fn estimate_local_frame(
    cloud: &PointCloud,
    center: Vec3,
    k_neighbors: usize,
) -> Result<(Vec3, Vec3)> {
    if k_neighbors < 3 {
        return Err(Error::InvalidConfig(alloc::format!(
            "k_neighbors must be at least 3, got {k_neighbors}"
        )));
    }
    if cloud.is_empty() {
        return Err(Error::EmptyInput("point cloud"));
    }
    let idx = cloud.nearest(center, k_neighbors);
    let m = idx.len() as f64;
    let mean = idx
        .iter()
        .fold(Vec3::ZERO, |acc, &i| acc + cloud.points[i])
        / m;
    let mut cov = [[0.0; 3]; 3];
    for &i in &idx {
        let d = cloud.points[i] - mean;
        let d = d.to_array();
        for r in 0..3 {
            for c in 0..3 {
                cov[r][c] += d[r] * d[c];
            }
        }
    }
    let (vals, vecs) = Mat3 { m: cov }.symmetric_eigen();
    if !(vals[2] > 0.0) || vals[1] <= 1e-10 * vals[2] {
        return Err(Error::DegenerateNeighborhood);
    }
    let n = canonical_sign(vecs[0]);
    let (n, u, _) = normalize_frame(n, canonical_sign(vecs[1]))?;
    Ok((n, u))
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitConfig {
    /// Initial side length; `None` uses twice the median center spacing.
    pub init_size: Option<f64>,
    pub k_neighbors: usize,
    pub seed: u64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            init_size: None,
            k_neighbors: 16,
            seed: 0,
        }
    }
}

/// Places `k` square rectangles on the cloud: centers by farthest point
/// sampling, orientation from local PCA.
pub fn init_planes(cloud: &PointCloud, k: usize, config: &InitConfig) -> Result<Vec<Rectangle>> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput("point cloud"));
    }
    let centers: Vec<Vec3> = farthest_point_sample(cloud, k, config.seed)?
        .into_iter()
        .map(|i| cloud.points[i])
        .collect();
    let size = match config.init_size {
        Some(s) => s,
        None => default_init_size(cloud, &centers),
    };
    if !(size > 0.0) {
        return Err(Error::InvalidConfig(alloc::format!(
            "initial rectangle size must be positive, got {size}"
        )));
    }
    centers
        .iter()
        .map(|&c| {
            let (n, u) = estimate_local_frame(cloud, c, config.k_neighbors)?;
            Rectangle::new(c, n, u, size, size)
        })
        .collect()
}

/// Twice the median nearest-neighbour spacing of the centers. A single
/// center falls back to the cloud's diameter around it.
fn default_init_size(cloud: &PointCloud, centers: &[Vec3]) -> f64 {
    if centers.len() < 2 {
        let c = centers[0];
        let radius = cloud
            .points
            .iter()
            .map(|p| (*p - c).norm())
            .fold(0.0, f64::max);
        return 2.0 * radius;
    }
    let mut spacing: Vec<f64> = centers
        .iter()
        .enumerate()
        .map(|(i, a)| {
            centers
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| (*a - *b).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    spacing.sort_by(f64::total_cmp);
    let m = spacing.len();
    let median = if m % 2 == 1 {
        spacing[m / 2]
    } else {
        0.5 * (spacing[m / 2 - 1] + spacing[m / 2])
    };
    2.0 * median
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::sqrt;

    fn rect(center: Vec3, n: Vec3, u: Vec3, w: f64, h: f64) -> Rectangle {
        Rectangle::new(center, n, u, w, h).unwrap()
    }

    #[test]
    fn normalize_frame_examples() {
        let (n, u, r) = normalize_frame(Vec3::new(0.0, 0.0, 2.0), Vec3::Y).unwrap();
        assert_eq!((n, u, r), (Vec3::Z, Vec3::Y, Vec3::X));

        let (n, u, _) = normalize_frame(Vec3::Z, Vec3::new(0.0, 1.0, 1.0)).unwrap();
        assert_eq!(n, Vec3::Z);
        assert!((u - Vec3::Y).norm() < 1e-15);

        let (n, u, r) = normalize_frame(Vec3::new(1.0, 1.0, 1.0), Vec3::Z).unwrap();
        assert!((n.norm() - 1.0).abs() < 1e-12);
        assert!((u.norm() - 1.0).abs() < 1e-12);
        assert!(n.dot(u).abs() < 1e-12);
        assert!((r.cross(u) - n).norm() < 1e-12);
    }

    #[test]
    fn normalize_frame_rejects_degenerate_input() {
        assert!(matches!(
            normalize_frame(Vec3::ZERO, Vec3::Y),
            Err(Error::DegenerateFrame(_))
        ));
        assert!(matches!(
            normalize_frame(Vec3::Z, Vec3::Z * 3.0),
            Err(Error::DegenerateFrame(_))
        ));
        assert!(Rectangle::new(Vec3::ZERO, Vec3::Z, Vec3::Y, 0.0, 1.0).is_err());
    }

    #[test]
    fn head_on_center_hit() {
        let ray = Ray::new(Vec3::ZERO, Vec3::Z, 0.0, 100.0);
        let r = rect(Vec3::new(0.0, 0.0, 2.0), -Vec3::Z, Vec3::Y, 2.0, 2.0);
        let hit = intersect_rectangle(&ray, &r, 7).unwrap();
        assert_eq!(hit.plane_index, 7);
        assert_eq!(hit.t, 2.0);
        assert_eq!(hit.point, Vec3::new(0.0, 0.0, 2.0));
        assert_eq!(hit.local, [0.0, 0.0]);
    }

    #[test]
    fn parallel_ray_misses() {
        let ray = Ray::new(Vec3::ZERO, Vec3::X, 0.0, 100.0);
        let r = rect(Vec3::ZERO, Vec3::Z, Vec3::Y, 2.0, 2.0);
        assert!(intersect_rectangle(&ray, &r, 0).is_none());
    }

    #[test]
    fn diagonal_hit_local_coordinates() {
        let ray = Ray::new(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0), 0.0, 100.0);
        let r = rect(Vec3::new(0.0, 0.0, 3.0), Vec3::Z, Vec3::Y, 10.0, 10.0);
        let hit = intersect_rectangle(&ray, &r, 0).unwrap();
        assert!((hit.t - 3.0 * sqrt(3.0)).abs() < 1e-12);
        assert!((hit.point - Vec3::splat(3.0)).norm() < 1e-12);
        assert!((hit.local[0] - 3.0).abs() < 1e-12 && (hit.local[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_counts_as_hit_and_behind_is_excluded() {
        let r = rect(Vec3::new(0.0, 0.0, 1.0), Vec3::Z, Vec3::Y, 2.0, 2.0);
        let edge = Ray::new(Vec3::new(1.0, 0.0, 0.0), Vec3::Z, 0.0, 10.0);
        assert!(intersect_rectangle(&edge, &r, 0).is_some());
        let behind = Ray::new(Vec3::new(0.0, 0.0, 2.0), Vec3::Z, 0.0, 10.0);
        assert!(intersect_rectangle(&behind, &r, 0).is_none());
    }

    #[test]
    fn distance_examples() {
        let r = rect(Vec3::ZERO, Vec3::Z, Vec3::Y, 2.0, 2.0);
        assert_eq!(point_to_rectangle_distance(Vec3::ZERO, &r), 0.0);
        assert_eq!(point_to_rectangle_distance(Vec3::Z * 2.0, &r), 2.0);
        let d = point_to_rectangle_distance(Vec3::new(2.0, 2.0, 1.0), &r);
        assert!((d - sqrt(3.0)).abs() < 1e-15);
    }

    #[test]
    fn fps_line_and_exhaustion() {
        let cloud = PointCloud::new(alloc::vec![Vec3::ZERO, Vec3::X, Vec3::X * 2.0]);
        assert_eq!(farthest_point_sample_from(&cloud, 2, 0).unwrap(), alloc::vec![0, 2]);
        let mut all = farthest_point_sample(&cloud, 3, 5).unwrap();
        all.sort();
        assert_eq!(all, alloc::vec![0, 1, 2]);
        assert!(matches!(
            farthest_point_sample(&cloud, 0, 0),
            Err(Error::InvalidK { .. })
        ));
        assert!(matches!(
            farthest_point_sample(&cloud, 4, 0),
            Err(Error::InvalidK { .. })
        ));
    }

    #[test]
    fn fps_ties_take_lowest_index() {
        // equidistant from the first pick
        let cloud = PointCloud::new(alloc::vec![Vec3::ZERO, Vec3::X, -Vec3::X, Vec3::Y]);
        assert_eq!(farthest_point_sample_from(&cloud, 2, 0).unwrap(), alloc::vec![0, 1]);
    }

    fn grid_on(f: impl Fn(f64, f64) -> Vec3) -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..11 {
            for j in 0..11 {
                pts.push(f(i as f64 / 10.0 - 0.5, j as f64 / 10.0 - 0.5));
            }
        }
        PointCloud::new(pts)
    }

    #[test]
    fn pca_normals_follow_sign_rule() {
        let z0 = grid_on(|a, b| Vec3::new(a, b * 0.7, 0.0));
        let (n, u) = estimate_local_frame(&z0, Vec3::ZERO, 30).unwrap();
        assert!((n - Vec3::Z).norm() < 1e-12, "{n:?}");
        assert!(n.dot(u).abs() < 1e-12);

        let x0 = grid_on(|a, b| Vec3::new(0.0, a, b * 0.6));
        let (n, _) = estimate_local_frame(&x0, Vec3::ZERO, 30).unwrap();
        assert!((n - Vec3::X).norm() < 1e-12, "{n:?}");
    }

    #[test]
    fn collinear_neighborhood_is_degenerate() {
        let line = PointCloud::new((0..20).map(|i| Vec3::X * i as f64).collect());
        assert_eq!(
            estimate_local_frame(&line, Vec3::ZERO, 8),
            Err(Error::DegenerateNeighborhood)
        );
    }

    #[test]
    fn init_planes_single_square() {
        let cloud = grid_on(|a, b| Vec3::new(a, b, 0.25 * a));
        let planes = init_planes(&cloud, 1, &InitConfig::default()).unwrap();
        assert_eq!(planes.len(), 1);
        let truth = Vec3::new(-0.25, 0.0, 1.0).normalized();
        let angle = crate::math::acos(planes[0].normal().dot(truth).abs().min(1.0));
        assert!(angle < 5f64.to_radians());
        assert!(planes[0].frame_error() < 1e-9);
        assert!(matches!(
            init_planes(&cloud, 0, &InitConfig::default()),
            Err(Error::InvalidK { .. })
        ));
    }

    #[test]
    fn corners_wind_counter_clockwise_about_normal() {
        let r = rect(Vec3::new(1.0, 2.0, 3.0), Vec3::new(1.0, 2.0, -0.5), Vec3::Z, 0.7, 0.3);
        let c = r.corners();
        let cross = (c[1] - c[0]).cross(c[2] - c[1]);
        assert!(cross.normalized().dot(r.normal()) > 1.0 - 1e-12);
    }
}
