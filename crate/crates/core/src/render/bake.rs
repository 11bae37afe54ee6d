//! Alpha baking: a plane's view-independent opacity tabulated on a grid of
//! cell centers and read back by bilinear interpolation.

use alloc::vec::Vec;

use num_traits::Float;

use crate::radiance::{ExpertMlp, Heads, Tape};

pub const DEFAULT_BAKE_RESOLUTION: usize = 200;

/// Row-major grid over normalized plane coordinates `[-1, 1]²`; column `i`
/// runs along the right axis, row `j` along the up axis.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaTexture {
    pub plane_index: usize,
    pub res_x: usize,
    pub res_y: usize,
    pub values: Vec<f32>,
}

impl AlphaTexture {
    /// Normalized local coordinate of node `(i, j)`.
    #[inline]
    pub fn node_local(res_x: usize, res_y: usize, i: usize, j: usize) -> [f64; 2] {
        [
            (2 * i + 1) as f64 / res_x as f64 - 1.0,
            (2 * j + 1) as f64 / res_y as f64 - 1.0,
        ]
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> f32 {
        self.values[j * self.res_x + i]
    }

    pub fn constant(plane_index: usize, res: usize, value: f32) -> Self {
        AlphaTexture {
            plane_index,
            res_x: res,
            res_y: res,
            values: alloc::vec![value; res * res],
        }
    }
}

/// Tabulates the expert's alpha head at every cell center of a
/// `resolution × resolution` grid.
pub fn bake_alpha<T: Float>(expert: &ExpertMlp<T>, plane_index: usize, resolution: usize) -> AlphaTexture {
    assert!(resolution >= 2, "bake resolution must be at least 2");
    let mut pos = Vec::with_capacity(resolution * resolution * 2);
    for j in 0..resolution {
        for i in 0..resolution {
            let l = AlphaTexture::node_local(resolution, resolution, i, j);
            pos.push(T::from(l[0]).unwrap());
            pos.push(T::from(l[1]).unwrap());
        }
    }
    let mut tape = Tape::new();
    let out = expert.forward_tape(&pos, &[], Heads::ALPHA, &mut tape);
    let values = out.chunks_exact(4).map(|o| o[3].to_f32().unwrap()).collect();
    AlphaTexture {
        plane_index,
        res_x: resolution,
        res_y: resolution,
        values,
    }
}

/// Bilinear lookup at a normalized local coordinate. The half-cell border
/// outside the outermost centers clamps to the edge values.
#[inline]
pub fn sample_baked_alpha(texture: &AlphaTexture, local: [f64; 2]) -> f64 {
    let (i0, i1, fx) = axis(local[0], texture.res_x);
    let (j0, j1, fy) = axis(local[1], texture.res_y);
    let v = |i: usize, j: usize| texture.values[j * texture.res_x + i] as f64;
    let top = v(i0, j0) * (1.0 - fx) + v(i1, j0) * fx;
    let bottom = v(i0, j1) * (1.0 - fx) + v(i1, j1) * fx;
    top * (1.0 - fy) + bottom * fy
}

#[inline]
fn axis(x: f64, res: usize) -> (usize, usize, f64) {
    let u = ((x + 1.0) * 0.5 * res as f64 - 0.5).clamp(0.0, (res - 1) as f64);
    let i0 = (u as usize).min(res - 2);
    (i0, i0 + 1, u - i0 as f64)
}
