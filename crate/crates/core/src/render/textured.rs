//! RGBA textures baked at a fixed view direction, and scenes shaded from them.

use alloc::vec::Vec;

use num_traits::Float;

use super::{AlphaTexture, PlaneQuery, RenderScene};
use crate::geometry::Rectangle;
use crate::math::Vec3;
use crate::radiance::{ExpertMlp, Heads, Tape};

/// Non-premultiplied RGBA on the same cell-center grid as [`AlphaTexture`]
/// (row `j` along up, column `i` along right).
#[derive(Clone, Debug, PartialEq)]
pub struct RgbaTexture {
    pub res_x: usize,
    pub res_y: usize,
    pub texels: Vec<[f32; 4]>,
}

impl RgbaTexture {
    pub fn constant(res: usize, rgba: [f32; 4]) -> Self {
        RgbaTexture {
            res_x: res,
            res_y: res,
            texels: alloc::vec![rgba; res * res],
        }
    }

    #[inline]
    pub fn texel(&self, i: usize, j: usize) -> [f32; 4] {
        self.texels[j * self.res_x + i]
    }

    /// Bilinear lookup at a normalized local coordinate, clamped at the border.
    pub fn sample(&self, local: [f64; 2]) -> [f64; 4] {
        let (i0, i1, fx) = axis(local[0], self.res_x);
        let (j0, j1, fy) = axis(local[1], self.res_y);
        let mut out = [0.0; 4];
        let t = |i: usize, j: usize| self.texels[j * self.res_x + i];
        let (a, b, c, d) = (t(i0, j0), t(i1, j0), t(i0, j1), t(i1, j1));
        for k in 0..4 {
            let top = a[k] as f64 * (1.0 - fx) + b[k] as f64 * fx;
            let bottom = c[k] as f64 * (1.0 - fx) + d[k] as f64 * fx;
            out[k] = top * (1.0 - fy) + bottom * fy;
        }
        out
    }

    /// Alpha channel as an [`AlphaTexture`].
    pub fn alpha(&self, plane_index: usize) -> AlphaTexture {
        AlphaTexture {
            plane_index,
            res_x: self.res_x,
            res_y: self.res_y,
            values: self.texels.iter().map(|t| t[3]).collect(),
        }
    }
}

#[inline]
fn axis(x: f64, res: usize) -> (usize, usize, f64) {
    if res == 1 {
        return (0, 0, 0.0);
    }
    let u = ((x + 1.0) * 0.5 * res as f64 - 0.5).clamp(0.0, (res - 1) as f64);
    let i0 = (u as usize).min(res - 2);
    (i0, i0 + 1, u - i0 as f64)
}

/// Expert alpha and color at every cell center, color evaluated with the
/// fixed direction `reference_dir`.
pub fn bake_rgba<T: Float>(expert: &ExpertMlp<T>, resolution: usize, reference_dir: Vec3) -> RgbaTexture {
    assert!(resolution >= 2, "bake resolution must be at least 2");
    let d = reference_dir.normalized();
    let n = resolution * resolution;
    let mut pos = Vec::with_capacity(n * 2);
    let mut dir = Vec::with_capacity(n * 3);
    for j in 0..resolution {
        for i in 0..resolution {
            let l = AlphaTexture::node_local(resolution, resolution, i, j);
            pos.extend([T::from(l[0]).unwrap(), T::from(l[1]).unwrap()]);
            dir.extend([T::from(d.x).unwrap(), T::from(d.y).unwrap(), T::from(d.z).unwrap()]);
        }
    }
    let mut tape = Tape::new();
    let out = expert.forward_tape(&pos, &dir, Heads::BOTH, &mut tape);
    RgbaTexture {
        res_x: resolution,
        res_y: resolution,
        texels: out
            .chunks_exact(4)
            .map(|o| [o[0], o[1], o[2], o[3]].map(|v| v.to_f32().unwrap()))
            .collect(),
    }
}

/// Rectangles shaded purely from RGBA textures.
#[derive(Clone, Debug, PartialEq)]
pub struct TexturedScene {
    pub planes: Vec<Rectangle>,
    pub textures: Vec<RgbaTexture>,
    alpha: Vec<AlphaTexture>,
}

impl TexturedScene {
    pub fn new(planes: Vec<Rectangle>, textures: Vec<RgbaTexture>) -> Self {
        assert_eq!(planes.len(), textures.len(), "one texture per plane");
        let alpha = textures.iter().enumerate().map(|(k, t)| t.alpha(k)).collect();
        TexturedScene {
            planes,
            textures,
            alpha,
        }
    }
}

impl RenderScene for TexturedScene {
    fn planes(&self) -> &[Rectangle] {
        &self.planes
    }

    fn baked_alpha(&self, plane: usize) -> Option<&AlphaTexture> {
        self.alpha.get(plane)
    }

    fn evaluate(&self, plane: usize, queries: &[PlaneQuery], _heads: Heads, out: &mut Vec<[f64; 4]>) {
        let tex = &self.textures[plane];
        out.extend(queries.iter().map(|q| tex.sample(q.local)));
    }
}

/// Wraps a scene so every query is shaded with one fixed direction.
#[derive(Clone, Copy, Debug)]
pub struct FixedDirection<'a, S: ?Sized> {
    pub scene: &'a S,
    pub dir: Vec3,
}

impl<S: RenderScene + ?Sized> RenderScene for FixedDirection<'_, S> {
    fn planes(&self) -> &[Rectangle] {
        self.scene.planes()
    }

    fn baked_alpha(&self, plane: usize) -> Option<&AlphaTexture> {
        self.scene.baked_alpha(plane)
    }

    fn evaluate(&self, plane: usize, queries: &[PlaneQuery], heads: Heads, out: &mut Vec<[f64; 4]>) {
        let d = self.dir.normalized();
        let fixed: Vec<PlaneQuery> = queries.iter().map(|q| PlaneQuery { local: q.local, dir: d }).collect();
        self.scene.evaluate(plane, &fixed, heads, out);
    }
}
