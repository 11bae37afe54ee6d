//! Baked bundles: a directory holding `bundle.json` and one non-premultiplied
//! RGBA8 PNG per plane (`plane_0000.png`, ...).
//!
//! Each plane lists its four world-space corners counter-clockwise as seen
//! from the `+n` side. Corner 0 is the texture's bottom-left, corner 1 its
//! bottom-right, corner 3 its top-left; PNG row 0 is the top edge.

use std::path::{Path, PathBuf};

use planex_core::math::Vec3;
use planex_core::render::{bake_rgba, RgbaTexture, TexturedScene};
use planex_core::scene::Scene;
use serde::{Deserialize, Serialize};

use crate::checkpoint::RectangleJson;
use crate::error::{io_err, Error, Result};
use crate::image_io;

pub const BUNDLE_VERSION: u32 = 1;
pub const BUNDLE_MANIFEST: &str = "bundle.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub version: u32,
    pub background: [f64; 3],
    pub reference_direction: [f64; 3],
    pub resolution: [usize; 2],
    pub planes: Vec<BundlePlane>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundlePlane {
    pub texture: String,
    pub corners: [[f64; 3]; 4],
    #[serde(flatten)]
    pub rectangle: RectangleJson,
}

pub fn texture_name(k: usize) -> String {
    format!("plane_{k:04}.png")
}

/// Bakes every expert at `resolution²` and writes the bundle into `dir`.
pub fn export_bundle(scene: &Scene, resolution: usize, reference_direction: Vec3, dir: &Path) -> Result<BundleManifest> {
    if resolution < 2 {
        return Err(Error::Invalid("bundle resolution must be at least 2".into()));
    }
    if !(reference_direction.norm() > 0.0) {
        return Err(Error::Invalid("reference direction must be nonzero".into()));
    }
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let d = reference_direction.normalized();
    let mut planes = Vec::with_capacity(scene.planes.len());
    for (k, (rect, expert)) in scene.planes.iter().zip(&scene.experts).enumerate() {
        let tex = bake_rgba(expert, resolution, d);
        let name = texture_name(k);
        let path = dir.join(&name);
        std::fs::write(&path, image_io::encode_rgba_png(&tex)).map_err(io_err(&path))?;
        planes.push(BundlePlane {
            texture: name,
            corners: rect.corners().map(|c| c.to_array()),
            rectangle: rect.into(),
        });
    }
    let manifest = BundleManifest {
        version: BUNDLE_VERSION,
        background: scene.background,
        reference_direction: d.to_array(),
        resolution: [resolution, resolution],
        planes,
    };
    let path = dir.join(BUNDLE_MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("bundle serializes");
    std::fs::write(&path, text).map_err(io_err(&path))?;
    Ok(manifest)
}

/// A bundle read back from disk.
#[derive(Clone, Debug)]
pub struct LoadedBundle {
    pub dir: PathBuf,
    pub manifest: BundleManifest,
    pub scene: TexturedScene,
}

pub fn load_bundle(dir: &Path) -> Result<LoadedBundle> {
    let path = dir.join(BUNDLE_MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: BundleManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        entry: path.display().to_string(),
        message: e.to_string(),
    })?;
    if manifest.version != BUNDLE_VERSION {
        return Err(Error::VersionMismatch {
            found: manifest.version,
            expected: BUNDLE_VERSION,
        });
    }
    let mut rects = Vec::with_capacity(manifest.planes.len());
    let mut textures: Vec<RgbaTexture> = Vec::with_capacity(manifest.planes.len());
    for (k, p) in manifest.planes.iter().enumerate() {
        let entry = format!("planes[{k}]");
        rects.push(p.rectangle.to_rectangle().map_err(|e| Error::Parse {
            entry: entry.clone(),
            message: e.to_string(),
        })?);
        let tpath = dir.join(&p.texture);
        let bytes = std::fs::read(&tpath).map_err(io_err(&tpath))?;
        let tex = image_io::decode_rgba_png(&bytes, &tpath)?;
        if [tex.res_x, tex.res_y] != manifest.resolution {
            return Err(Error::Parse {
                entry,
                message: format!(
                    "texture is {}x{} but the bundle declares {}x{}",
                    tex.res_x, tex.res_y, manifest.resolution[0], manifest.resolution[1]
                ),
            });
        }
        textures.push(tex);
    }
    Ok(LoadedBundle {
        dir: dir.to_path_buf(),
        scene: TexturedScene::new(rects, textures),
        manifest,
    })
}

/// Resolves a texture file name from the manifest, refusing anything else.
pub fn texture_path(bundle: &LoadedBundle, file: &str) -> Option<PathBuf> {
    bundle
        .manifest
        .planes
        .iter()
        .any(|p| p.texture == file)
        .then(|| bundle.dir.join(file))
}
