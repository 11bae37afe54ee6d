//! Scenes, images and posed datasets.

use alloc::string::String;
use alloc::vec::Vec;

use crate::geometry::{PointCloud, Rectangle};
use crate::radiance::{ExpertMlp, Heads, NetConfig, Tape};
use crate::render::{AlphaTexture, PinholeCamera, PlaneQuery, RenderScene};

/// Interleaved RGB image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            data: alloc::vec![0.0; width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let mut img = Image::new(width, height);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        img
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub name: String,
    pub camera: PinholeCamera,
    pub image: Image,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub frames: Vec<Frame>,
    pub cloud: PointCloud,
    pub near: f64,
    pub far: f64,
    pub background: [f64; 3],
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Frame> {
        self.frames.iter().filter(move |f| f.split == split)
    }

    pub fn train(&self) -> impl Iterator<Item = &Frame> {
        self.split(Split::Train)
    }

    pub fn test(&self) -> impl Iterator<Item = &Frame> {
        self.split(Split::Test)
    }
}

/// Rectangles, one expert per rectangle, and optional baked alpha textures.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub planes: Vec<Rectangle>,
    pub experts: Vec<ExpertMlp<f32>>,
    pub baked: Option<Vec<AlphaTexture>>,
    pub background: [f64; 3],
}

impl Scene {
    /// Fresh experts, seeded per plane from `seed`.
    pub fn with_new_experts(planes: Vec<Rectangle>, config: NetConfig, seed: u64, background: [f64; 3]) -> Self {
        let experts = (0..planes.len())
            .map(|k| ExpertMlp::new(config, expert_seed(seed, k)))
            .collect();
        Scene {
            planes,
            experts,
            baked: None,
            background,
        }
    }

    pub fn expert_config(&self) -> Option<NetConfig> {
        self.experts.first().map(|e| *e.config())
    }

    /// Bakes every plane's alpha at `resolution × resolution`.
    pub fn bake(&mut self, resolution: usize) {
        self.baked = Some(
            self.experts
                .iter()
                .enumerate()
                .map(|(k, e)| crate::render::bake_alpha(e, k, resolution))
                .collect(),
        );
    }
}

pub(crate) fn expert_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64 + 1)
}

impl RenderScene for Scene {
    fn planes(&self) -> &[Rectangle] {
        &self.planes
    }

    fn baked_alpha(&self, plane: usize) -> Option<&AlphaTexture> {
        self.baked.as_ref().and_then(|b| b.get(plane))
    }

    fn evaluate(&self, plane: usize, queries: &[PlaneQuery], heads: Heads, out: &mut Vec<[f64; 4]>) {
        let mut pos = Vec::with_capacity(queries.len() * 2);
        let mut dir = Vec::with_capacity(queries.len() * 3);
        for q in queries {
            pos.extend([q.local[0] as f32, q.local[1] as f32]);
            dir.extend([q.dir.x as f32, q.dir.y as f32, q.dir.z as f32]);
        }
        let mut tape = Tape::new();
        let o = self.experts[plane].forward_tape(&pos, &dir, heads, &mut tape);
        out.extend(
            o.chunks_exact(4)
                .map(|v| [v[0] as f64, v[1] as f64, v[2] as f64, v[3] as f64]),
        );
    }
}
