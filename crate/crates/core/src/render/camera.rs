use alloc::format;

use crate::error::{Error, Result};
use crate::geometry::Ray;
use crate::math::{Mat3, Vec3};

/// Pinhole camera looking down its local `+z`, with `+x` right and `+y` down
/// in image space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PinholeCamera {
    /// World-from-camera rotation.
    pub rotation: Mat3,
    /// Camera center in world coordinates.
    pub center: Vec3,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl PinholeCamera {
    /// Camera at `eye` looking at `target`; `up_hint` fixes the roll.
    pub fn look_at(eye: Vec3, target: Vec3, up_hint: Vec3, fov_y: f64, width: usize, height: usize) -> Self {
        let forward = (target - eye).normalized();
        let right = forward.cross(up_hint).normalized();
        let down = forward.cross(right);
        let fy = 0.5 * height as f64 / crate::math::sin(0.5 * fov_y) * crate::math::cos(0.5 * fov_y);
        PinholeCamera {
            rotation: Mat3::from_cols(right, down, forward),
            center: eye,
            fx: fy,
            fy,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera(format!(
                "image size {}x{} must be at least 1x1",
                self.width, self.height
            )));
        }
        let err = self.rotation.orthonormality_error();
        if !(err <= 1e-8) {
            return Err(Error::InvalidCamera(format!(
                "rotation is not orthonormal (deviation {err:e})"
            )));
        }
        if !(self.rotation.determinant() > 0.0) {
            return Err(Error::InvalidCamera("rotation is a reflection".into()));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(Error::InvalidCamera(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.center.x.is_finite() && self.center.y.is_finite() && self.center.z.is_finite()) {
            return Err(Error::InvalidCamera("center is not finite".into()));
        }
        Ok(())
    }

    /// Ray through the center of pixel `(px, py)`.
    pub fn generate_ray(&self, px: usize, py: usize, t_near: f64, t_far: f64) -> Result<Ray> {
        self.generate_ray_at(px as f64, py as f64, [0.5, 0.5], t_near, t_far)
    }

    /// Ray through `(px + offset.0, py + offset.1)`.
    pub fn generate_ray_at(&self, px: f64, py: f64, offset: [f64; 2], t_near: f64, t_far: f64) -> Result<Ray> {
        if !(px >= 0.0 && py >= 0.0 && px < self.width as f64 && py < self.height as f64) {
            return Err(Error::OutOfImage {
                x: px,
                y: py,
                width: self.width,
                height: self.height,
            });
        }
        let d_cam = Vec3::new(
            (px + offset[0] - self.cx) / self.fx,
            (py + offset[1] - self.cy) / self.fy,
            1.0,
        );
        Ok(Ray::new(self.center, self.rotation.mul_vec(d_cam), t_near, t_far))
    }

    /// Image-plane position of a world point, `None` behind the camera.
    pub fn project(&self, x: Vec3) -> Option<[f64; 2]> {
        let p = self.rotation.transpose().mul_vec(x - self.center);
        if p.z <= 0.0 {
            return None;
        }
        Some([self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn axis_camera(fx: f64) -> PinholeCamera {
        PinholeCamera {
            rotation: Mat3::IDENTITY,
            center: Vec3::ZERO,
            fx,
            fy: fx,
            cx: 32.0,
            cy: 24.0,
            width: 64,
            height: 48,
        }
    }

    #[test]
    fn principal_point_looks_down_z() {
        let cam = axis_camera(50.0);
        let ray = cam.generate_ray_at(32.0, 24.0, [0.0, 0.0], 0.0, 10.0).unwrap();
        assert_eq!(ray.dir, Vec3::Z);
    }

    #[test]
    fn doubling_focal_halves_tangent() {
        let a = axis_camera(50.0).generate_ray_at(42.0, 24.0, [0.0, 0.0], 0.0, 1.0).unwrap();
        let b = axis_camera(100.0).generate_ray_at(42.0, 24.0, [0.0, 0.0], 0.0, 1.0).unwrap();
        let tan = |d: Vec3| d.x / d.z;
        assert!((tan(a.dir) - 2.0 * tan(b.dir)).abs() < 1e-15);
    }

    #[test]
    fn out_of_image_is_an_error() {
        let cam = axis_camera(50.0);
        assert!(matches!(cam.generate_ray(64, 0, 0.0, 1.0), Err(Error::OutOfImage { .. })));
    }

    #[test]
    fn rays_reproject_to_their_pixel() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let eye = Vec3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let target = Vec3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
            let cam = PinholeCamera::look_at(eye, target, Vec3::Y, 0.9, 80, 60);
            cam.validate().unwrap();
            let (px, py) = (rng.gen_range(0..80), rng.gen_range(0..60));
            let ray = cam.generate_ray(px, py, 0.0, 100.0).unwrap();
            let p = cam.project(ray.at(rng.gen_range(0.5..5.0))).unwrap();
            assert!((p[0] - (px as f64 + 0.5)).abs() < 1e-4);
            assert!((p[1] - (py as f64 + 0.5)).abs() < 1e-4);
        }
    }

    #[test]
    fn skewed_rotation_rejected() {
        let mut cam = axis_camera(50.0);
        cam.rotation.m[0][1] = 0.1;
        assert!(matches!(cam.validate(), Err(Error::InvalidCamera(_))));
    }
}
