//! Fourier feature encoding.

use num_traits::Float;

use crate::scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncodingConfig {
    /// Frequency bands applied to positions.
    pub pos_bands: usize,
    /// Frequency bands applied to directions.
    pub dir_bands: usize,
    pub include_identity: bool,
}

impl EncodingConfig {
    pub fn new(pos_bands: usize, dir_bands: usize, include_identity: bool) -> Self {
        EncodingConfig {
            pos_bands,
            dir_bands,
            include_identity,
        }
    }

    pub fn pos_dim(&self, input_dims: usize) -> usize {
        encoded_dim(input_dims, self.pos_bands, self.include_identity)
    }

    pub fn dir_dim(&self) -> usize {
        encoded_dim(3, self.dir_bands, self.include_identity)
    }
}

/// `D·(1 + 2L)` with the identity term, `D·2L` without.
pub const fn encoded_dim(input_dims: usize, bands: usize, include_identity: bool) -> usize {
    input_dims * (2 * bands + include_identity as usize)
}

/// Writes `[x, sin(2⁰πx), cos(2⁰πx), …, sin(2^{L-1}πx), cos(2^{L-1}πx)]` per
/// component of `v`, components concatenated in input order.
pub fn fourier_encode<T: Float>(v: &[T], bands: usize, include_identity: bool, out: &mut [T]) {
    debug_assert_eq!(out.len(), encoded_dim(v.len(), bands, include_identity));
    let pi: T = scalar(core::f64::consts::PI);
    let mut k = 0;
    for &x in v {
        if include_identity {
            out[k] = x;
            k += 1;
        }
        let mut freq = pi;
        for _ in 0..bands {
            let (s, c) = (freq * x).sin_cos();
            out[k] = s;
            out[k + 1] = c;
            k += 2;
            freq = freq + freq;
        }
    }
}

/// Chains `d/d(encoded)` back to `d/dv` for the encoding of `v`.
pub fn fourier_encode_backward<T: Float>(
    v: &[T],
    bands: usize,
    include_identity: bool,
    grad_encoded: &[T],
    grad_v: &mut [T],
) {
    let pi: T = scalar(core::f64::consts::PI);
    let mut k = 0;
    for (x, g) in v.iter().zip(grad_v.iter_mut()) {
        let mut acc = T::zero();
        if include_identity {
            acc = acc + grad_encoded[k];
            k += 1;
        }
        let mut freq = pi;
        for _ in 0..bands {
            let (s, c) = (freq * *x).sin_cos();
            acc = acc + freq * (c * grad_encoded[k] - s * grad_encoded[k + 1]);
            k += 2;
            freq = freq + freq;
        }
        *g = acc;
    }
}
