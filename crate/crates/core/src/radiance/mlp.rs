//! Two-branch radiance MLP shared by the planar experts and the teacher.
//!
//! The alpha branch sees only encoded positions, so opacity is
//! view-independent by construction. The color branch sees encoded position
//! and direction. Each branch has `depth` ReLU hidden layers of width
//! `hidden` and sigmoid outputs. Parameters live in one flat vector: alpha
//! branch first, color branch after, each layer as an input-major weight
//! matrix followed by its bias.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::encoding::{fourier_encode, fourier_encode_backward, EncodingConfig};
use crate::scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetConfig {
    /// Dimension of the position input (2 for experts, 3 for the teacher).
    pub pos_dims: usize,
    pub encoding: EncodingConfig,
    pub hidden: usize,
    /// Hidden layers per branch.
    pub depth: usize,
}

impl NetConfig {
    /// Planar expert: plane-local 2D input, three hidden layers of 32.
    pub const fn expert() -> Self {
        NetConfig {
            pos_dims: 2,
            encoding: EncodingConfig {
                pos_bands: 6,
                dir_bands: 4,
                include_identity: true,
            },
            hidden: 32,
            depth: 3,
        }
    }

    /// Teacher field over 3D world positions, four hidden layers of 128.
    pub const fn teacher() -> Self {
        NetConfig {
            pos_dims: 3,
            encoding: EncodingConfig {
                pos_bands: 8,
                dir_bands: 4,
                include_identity: true,
            },
            hidden: 128,
            depth: 4,
        }
    }

    pub fn with_hidden(mut self, hidden: usize) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn pos_features(&self) -> usize {
        self.encoding.pos_dim(self.pos_dims)
    }

    pub fn dir_features(&self) -> usize {
        self.encoding.dir_dim()
    }

    fn branch_params(&self, input: usize, outputs: usize) -> usize {
        let h = self.hidden;
        (input + 1) * h + self.depth.saturating_sub(1) * (h + 1) * h + (h + 1) * outputs
    }

    pub fn alpha_param_count(&self) -> usize {
        self.branch_params(self.pos_features(), 1)
    }

    pub fn color_param_count(&self) -> usize {
        self.branch_params(self.pos_features() + self.dir_features(), 3)
    }

    pub fn param_count(&self) -> usize {
        self.alpha_param_count() + self.color_param_count()
    }
}

/// Parameter count of one expert with hidden width `hidden` and the given
/// band counts (identity features on, 2D position, 3D direction).
pub fn expert_param_count(hidden: usize, pos_bands: usize, dir_bands: usize) -> usize {
    let mut cfg = NetConfig::expert();
    cfg.hidden = hidden;
    cfg.encoding.pos_bands = pos_bands;
    cfg.encoding.dir_bands = dir_bands;
    cfg.param_count()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    offset: usize,
}

impl Layer {
    fn weights(&self) -> Range<usize> {
        self.offset..self.offset + self.fan_in * self.fan_out
    }

    fn bias(&self) -> Range<usize> {
        let s = self.offset + self.fan_in * self.fan_out;
        s..s + self.fan_out
    }

    fn end(&self) -> usize {
        self.offset + (self.fan_in + 1) * self.fan_out
    }
}

fn build_branch(input: usize, hidden: usize, depth: usize, outputs: usize, offset: usize) -> Vec<Layer> {
    let mut layers = Vec::with_capacity(depth + 1);
    let mut off = offset;
    let mut fan_in = input;
    for _ in 0..depth {
        let l = Layer {
            fan_in,
            fan_out: hidden,
            offset: off,
        };
        off = l.end();
        layers.push(l);
        fan_in = hidden;
    }
    layers.push(Layer {
        fan_in,
        fan_out: outputs,
        offset: off,
    });
    layers
}

/// Which output heads a forward pass evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Heads {
    pub alpha: bool,
    pub color: bool,
}

impl Heads {
    pub const BOTH: Heads = Heads {
        alpha: true,
        color: true,
    };
    pub const ALPHA: Heads = Heads {
        alpha: true,
        color: false,
    };
    pub const COLOR: Heads = Heads {
        alpha: false,
        color: true,
    };
}

/// Activations cached by [`RadianceNet::forward_tape`] for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    batch: usize,
    heads: Option<Heads>,
    pos: Vec<T>,
    /// `[encoded position | encoded direction]` per sample.
    features: Vec<T>,
    alpha_in: Vec<T>,
    alpha_acts: Vec<Vec<T>>,
    color_acts: Vec<Vec<T>>,
    out: Vec<T>,
}

impl<T: Float> Tape<T> {
    pub fn new() -> Self {
        Tape {
            batch: 0,
            heads: None,
            pos: Vec::new(),
            features: Vec::new(),
            alpha_in: Vec::new(),
            alpha_acts: Vec::new(),
            color_acts: Vec::new(),
            out: Vec::new(),
        }
    }

    /// `[r, g, b, alpha]` per sample; heads not evaluated are left at zero.
    pub fn outputs(&self) -> &[T] {
        &self.out[..self.batch * 4]
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadianceNet<T> {
    config: NetConfig,
    params: Vec<T>,
    alpha: Vec<Layer>,
    color: Vec<Layer>,
}

/// Per-plane expert network.
pub type ExpertMlp<T = f32> = RadianceNet<T>;
/// World-space teacher network.
pub type TeacherMlp<T = f32> = RadianceNet<T>;

impl<T: Float> RadianceNet<T> {
    /// Uniform `±1/√fan_in` initialization for every weight and bias.
    pub fn new(config: NetConfig, seed: u64) -> Self {
        let mut net = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers: Vec<Layer> = net.alpha.iter().chain(net.color.iter()).copied().collect();
        for l in layers {
            let bound = 1.0 / crate::math::sqrt(l.fan_in as f64);
            for p in &mut net.params[l.offset..l.end()] {
                *p = scalar(rng.gen_range(-bound..bound));
            }
        }
        net
    }

    pub fn zeros(config: NetConfig) -> Self {
        let pf = config.pos_features();
        let df = config.dir_features();
        let alpha = build_branch(pf, config.hidden, config.depth, 1, 0);
        let split = alpha.last().map_or(0, Layer::end);
        let color = build_branch(pf + df, config.hidden, config.depth, 3, split);
        let total = color.last().map_or(split, Layer::end);
        assert_eq!(total, config.param_count(), "layout disagrees with parameter count");
        RadianceNet {
            config,
            params: vec![T::zero(); total],
            alpha,
            color,
        }
    }

    pub fn from_params(config: NetConfig, params: Vec<T>) -> Option<Self> {
        let mut net = Self::zeros(config);
        if params.len() != net.params.len() {
            return None;
        }
        net.params = params;
        Some(net)
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Parameters that only influence the alpha output.
    pub fn alpha_params(&self) -> Range<usize> {
        0..self.config.alpha_param_count()
    }

    /// Parameters that only influence the color output.
    pub fn color_params(&self) -> Range<usize> {
        self.config.alpha_param_count()..self.params.len()
    }

    /// Zeroes the output layer of both branches.
    pub fn zero_output_layers(&mut self) {
        for l in [*self.alpha.last().unwrap(), *self.color.last().unwrap()] {
            for p in &mut self.params[l.offset..l.end()] {
                *p = T::zero();
            }
        }
    }

    pub fn cast<U: Float>(&self) -> RadianceNet<U> {
        RadianceNet {
            config: self.config,
            params: self.params.iter().map(|p| U::from(*p).unwrap()).collect(),
            alpha: self.alpha.clone(),
            color: self.color.clone(),
        }
    }

    /// Evaluates one sample, returning `([r, g, b], alpha)`.
    pub fn eval(&self, pos: &[T], dir: &[T; 3]) -> ([T; 3], T) {
        let mut tape = Tape::new();
        self.forward_tape(pos, dir, Heads::BOTH, &mut tape);
        let o = tape.outputs();
        ([o[0], o[1], o[2]], o[3])
    }

    /// Batched evaluation. `pos` is `B × pos_dims`, `dir` is `B × 3`; the
    /// returned slice holds `[r, g, b, alpha]` per sample.
    pub fn forward_tape<'a>(&self, pos: &[T], dir: &[T], heads: Heads, tape: &'a mut Tape<T>) -> &'a [T] {
        let pd = self.config.pos_dims;
        let batch = pos.len() / pd;
        debug_assert_eq!(pos.len(), batch * pd);
        let pf = self.config.pos_features();
        let df = self.config.dir_features();
        let feat = pf + df;
        let enc = self.config.encoding;

        tape.batch = batch;
        tape.heads = Some(heads);
        tape.pos.clear();
        tape.pos.extend_from_slice(pos);
        tape.features.resize(batch * feat, T::zero());
        tape.out.clear();
        tape.out.resize(batch * 4, T::zero());
        if heads.color {
            debug_assert_eq!(dir.len(), batch * 3);
        }
        for b in 0..batch {
            let row = &mut tape.features[b * feat..(b + 1) * feat];
            let (pos_part, dir_part) = row.split_at_mut(pf);
            fourier_encode(&pos[b * pd..(b + 1) * pd], enc.pos_bands, enc.include_identity, pos_part);
            if heads.color {
                fourier_encode(&dir[b * 3..b * 3 + 3], enc.dir_bands, enc.include_identity, dir_part);
            }
        }

        let mut logits = Vec::new();
        if heads.alpha {
            tape.alpha_in.resize(batch * pf, T::zero());
            for b in 0..batch {
                tape.alpha_in[b * pf..(b + 1) * pf].copy_from_slice(&tape.features[b * feat..b * feat + pf]);
            }
            run_branch(&self.params, &self.alpha, &tape.alpha_in, batch, &mut tape.alpha_acts, &mut logits);
            for b in 0..batch {
                tape.out[b * 4 + 3] = sigmoid(logits[b]);
            }
        }
        if heads.color {
            run_branch(&self.params, &self.color, &tape.features, batch, &mut tape.color_acts, &mut logits);
            for b in 0..batch {
                for c in 0..3 {
                    tape.out[b * 4 + c] = sigmoid(logits[b * 3 + c]);
                }
            }
        }
        tape.outputs()
    }

    /// Accumulates (sums) parameter gradients for `grad_out` (`B × 4`, with
    /// respect to the sigmoid outputs) into `grads`. When `grad_pos` is given
    /// it receives the gradient with respect to the raw position inputs.
    pub fn backward(&self, tape: &Tape<T>, grad_out: &[T], grads: &mut [T], grad_pos: Option<&mut [T]>) {
        let batch = tape.batch;
        let heads = tape.heads.expect("backward called before forward_tape");
        assert_eq!(grads.len(), self.params.len());
        debug_assert_eq!(grad_out.len(), batch * 4);
        let pf = self.config.pos_features();
        let feat = pf + self.config.dir_features();
        let want_input = grad_pos.is_some();
        let mut grad_feat_pos = if want_input {
            vec![T::zero(); batch * pf]
        } else {
            Vec::new()
        };

        if heads.alpha {
            let mut gz = vec![T::zero(); batch];
            for b in 0..batch {
                let s = tape.out[b * 4 + 3];
                gz[b] = grad_out[b * 4 + 3] * s * (T::one() - s);
            }
            let gin = backprop_branch(
                &self.params,
                &self.alpha,
                &tape.alpha_in,
                &tape.alpha_acts,
                gz,
                batch,
                grads,
                want_input,
            );
            if want_input {
                for (g, v) in grad_feat_pos.iter_mut().zip(gin) {
                    *g = *g + v;
                }
            }
        }
        if heads.color {
            let mut gz = vec![T::zero(); batch * 3];
            for b in 0..batch {
                for c in 0..3 {
                    let s = tape.out[b * 4 + c];
                    gz[b * 3 + c] = grad_out[b * 4 + c] * s * (T::one() - s);
                }
            }
            let gin = backprop_branch(
                &self.params,
                &self.color,
                &tape.features,
                &tape.color_acts,
                gz,
                batch,
                grads,
                want_input,
            );
            if want_input {
                for b in 0..batch {
                    for k in 0..pf {
                        grad_feat_pos[b * pf + k] = grad_feat_pos[b * pf + k] + gin[b * feat + k];
                    }
                }
            }
        }
        if let Some(gp) = grad_pos {
            let pd = self.config.pos_dims;
            let enc = self.config.encoding;
            for b in 0..batch {
                fourier_encode_backward(
                    &tape.pos[b * pd..(b + 1) * pd],
                    enc.pos_bands,
                    enc.include_identity,
                    &grad_feat_pos[b * pf..(b + 1) * pf],
                    &mut gp[b * pd..(b + 1) * pd],
                );
            }
        }
    }
}

#[inline]
fn sigmoid<T: Float>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

fn run_branch<T: Float>(
    params: &[T],
    layers: &[Layer],
    input: &[T],
    batch: usize,
    acts: &mut Vec<Vec<T>>,
    logits: &mut Vec<T>,
) {
    let hidden = layers.len() - 1;
    acts.resize_with(hidden, Vec::new);
    for (li, l) in layers.iter().enumerate() {
        let w = &params[l.weights()];
        let bias = &params[l.bias()];
        let last = li == hidden;
        let mut out = if last {
            core::mem::take(logits)
        } else {
            core::mem::take(&mut acts[li])
        };
        out.resize(batch * l.fan_out, T::zero());
        {
            let x: &[T] = if li == 0 { input } else { &acts[li - 1] };
            dense_forward(w, bias, l.fan_in, l.fan_out, x, &mut out, !last);
        }
        if last {
            *logits = out;
        } else {
            acts[li] = out;
        }
    }
}

fn dense_forward<T: Float>(w: &[T], bias: &[T], fan_in: usize, fan_out: usize, x: &[T], y: &mut [T], relu: bool) {
    for (xr, yr) in x.chunks_exact(fan_in).zip(y.chunks_exact_mut(fan_out)) {
        yr.copy_from_slice(bias);
        for (i, &xi) in xr.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            let wr = &w[i * fan_out..(i + 1) * fan_out];
            for (yv, &wv) in yr.iter_mut().zip(wr) {
                *yv = *yv + xi * wv;
            }
        }
        if relu {
            for v in yr.iter_mut() {
                *v = v.max(T::zero());
            }
        }
    }
}

/// Backpropagates logit gradients `gz` through one branch, accumulating
/// parameter gradients. Returns the gradient with respect to the branch input
/// when `want_input` is set.
#[allow(clippy::too_many_arguments)]
fn backprop_branch<T: Float>(
    params: &[T],
    layers: &[Layer],
    input: &[T],
    acts: &[Vec<T>],
    gz: Vec<T>,
    batch: usize,
    grads: &mut [T],
    want_input: bool,
) -> Vec<T> {
    let mut gy = gz;
    for li in (0..layers.len()).rev() {
        let l = layers[li];
        let x: &[T] = if li == 0 { input } else { &acts[li - 1] };
        let need_gx = li > 0 || want_input;
        let mut gx = if need_gx {
            vec![T::zero(); batch * l.fan_in]
        } else {
            Vec::new()
        };
        let w = &params[l.weights()];
        {
            let (gw, gb) = grads[l.offset..l.end()].split_at_mut(l.fan_in * l.fan_out);
            for b in 0..batch {
                let gyr = &gy[b * l.fan_out..(b + 1) * l.fan_out];
                let xr = &x[b * l.fan_in..(b + 1) * l.fan_in];
                for (g, &v) in gb.iter_mut().zip(gyr) {
                    *g = *g + v;
                }
                for (i, &xi) in xr.iter().enumerate() {
                    if xi != T::zero() {
                        let gwr = &mut gw[i * l.fan_out..(i + 1) * l.fan_out];
                        for (g, &v) in gwr.iter_mut().zip(gyr) {
                            *g = *g + xi * v;
                        }
                    }
                }
                if need_gx {
                    let gxr = &mut gx[b * l.fan_in..(b + 1) * l.fan_in];
                    for (i, g) in gxr.iter_mut().enumerate() {
                        // hidden inputs are post-ReLU: zero means inactive
                        if li > 0 && !(xr[i] > T::zero()) {
                            continue;
                        }
                        *g = dot(&w[i * l.fan_out..(i + 1) * l.fan_out], gyr);
                    }
                }
            }
        }
        gy = gx;
    }
    gy
}

#[inline]
fn dot<T: Float>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s = s + *x * *y;
    }
    s
}
