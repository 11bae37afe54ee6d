//! Thread-pool execution for training and rendering.

use std::time::Instant;

use planex_core::render::{render_rows, Clock, RenderConfig, RenderOutput, RenderScene, RenderStats, TILE_ROWS};
use planex_core::scene::Image;
use planex_core::render::PinholeCamera;
use planex_core::train::Executor;
use rayon::prelude::*;

/// Runs executor jobs on the current rayon pool. Results come back in index
/// order, so merged gradients match [`planex_core::train::Serial`] exactly.
#[derive(Clone, Copy, Debug, Default)]
pub struct Rayon;

impl Executor for Rayon {
    fn map<R: Send, F: Fn(usize) -> R + Sync>(&self, n: usize, f: F) -> Vec<R> {
        let f = &f;
        (0..n).into_par_iter().map(f).collect()
    }
}

/// Seconds since construction.
#[derive(Clone, Copy, Debug)]
pub struct WallClock(Instant);

impl WallClock {
    pub fn new() -> Self {
        WallClock(Instant::now())
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Tile-parallel version of [`planex_core::render::render_image`]; same
/// tiling, so the pixels are bit-identical.
pub fn render_image_par<S, C>(
    camera: &PinholeCamera,
    scene: &S,
    config: &RenderConfig,
    clock: &C,
) -> planex_core::Result<RenderOutput>
where
    S: RenderScene + Sync + ?Sized,
    C: Clock + Sync + ?Sized,
{
    camera.validate()?;
    config.validate()?;
    let tiles: Vec<usize> = (0..camera.height).step_by(TILE_ROWS).collect();
    let parts = tiles
        .par_iter()
        .map(|&y| render_rows(camera, scene, config, y..(y + TILE_ROWS).min(camera.height), clock))
        .collect::<planex_core::Result<Vec<_>>>()?;
    let mut data = Vec::with_capacity(camera.width * camera.height * 3);
    let mut depth = Vec::with_capacity(camera.width * camera.height);
    let mut stats = RenderStats::default();
    for (rgb, d, s) in parts {
        data.extend(rgb);
        depth.extend(d);
        stats.merge(&s);
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

/// Builds the global pool once; `threads == 0` keeps rayon's default.
pub fn init_threads(threads: usize) {
    if threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
}
