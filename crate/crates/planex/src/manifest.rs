//! Dataset manifests: one JSON file listing posed images, a PLY point cloud
//! and the transform that maps the scene into the unit sphere.
//!
//! ```json
//! {
//!   "version": 1,
//!   "near": 0.5,
//!   "far": 8.0,
//!   "background": [0, 0, 0],
//!   "point_cloud": "points.ply",
//!   "normalization": { "center": [0, 0, 0], "scale": 1.0 },
//!   "frames": [
//!     {
//!       "image": "train/0000.png",
//!       "split": "train",
//!       "camera_to_world": [[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]],
//!       "intrinsics": { "fx": 60, "fy": 60, "cx": 32, "cy": 32, "width": 64, "height": 64 }
//!     }
//!   ]
//! }
//! ```
//!
//! Paths are relative to the manifest. Camera axes: `+x` right, `+y` down,
//! `+z` forward (the columns of the upper-left 3×3 block). Normalization maps
//! `x ↦ (x − center) · scale`; `near`/`far` are given in normalized units.
//! When `normalization` is omitted it is computed from the point cloud
//! (centroid, and the inverse of the largest distance from it).

use std::path::{Path, PathBuf};

use planex_core::math::{Mat3, Vec3};
use planex_core::render::PinholeCamera;
use planex_core::scene::{Dataset, Frame, Split};
use planex_core::PointCloud;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::{image_io, ply};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default = "default_version")]
    pub version: u32,
    pub near: f64,
    pub far: f64,
    #[serde(default)]
    pub background: [f64; 3],
    pub point_cloud: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<Normalization>,
    pub frames: Vec<FrameEntry>,
}

fn default_version() -> u32 {
    MANIFEST_VERSION
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub center: [f64; 3],
    pub scale: f64,
}

impl Normalization {
    pub const IDENTITY: Normalization = Normalization {
        center: [0.0; 3],
        scale: 1.0,
    };

    /// Centroid and inverse max radius, so every point lands in the unit ball.
    pub fn fit(cloud: &PointCloud) -> Normalization {
        if cloud.is_empty() {
            return Normalization::IDENTITY;
        }
        let n = cloud.len() as f64;
        let c = cloud.points.iter().fold(Vec3::ZERO, |a, p| a + *p) * (1.0 / n);
        let r = cloud.points.iter().map(|p| (*p - c).norm()).fold(0.0, f64::max);
        Normalization {
            center: c.to_array(),
            scale: if r > 0.0 { 1.0 / r } else { 1.0 },
        }
    }

    pub fn apply(&self, x: Vec3) -> Vec3 {
        (x - Vec3::from_array(self.center)) * self.scale
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitLabel {
    Train,
    Test,
}

impl From<SplitLabel> for Split {
    fn from(s: SplitLabel) -> Split {
        match s {
            SplitLabel::Train => Split::Train,
            SplitLabel::Test => Split::Test,
        }
    }
}

impl From<Split> for SplitLabel {
    fn from(s: Split) -> SplitLabel {
        match s {
            Split::Train => SplitLabel::Train,
            Split::Test => SplitLabel::Test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub image: String,
    pub split: SplitLabel,
    pub camera_to_world: [[f64; 4]; 4],
    pub intrinsics: Intrinsics,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

pub fn camera_to_matrix(c: &PinholeCamera) -> [[f64; 4]; 4] {
    let r = &c.rotation.m;
    [
        [r[0][0], r[0][1], r[0][2], c.center.x],
        [r[1][0], r[1][1], r[1][2], c.center.y],
        [r[2][0], r[2][1], r[2][2], c.center.z],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

/// Camera from a 4×4 camera-to-world matrix; `entry` names the frame in errors.
pub fn camera_from_matrix(m: &[[f64; 4]; 4], k: &Intrinsics, entry: &str) -> Result<PinholeCamera> {
    let invalid = |message: String| Error::InvalidCamera {
        entry: entry.to_string(),
        message,
    };
    if m[3] != [0.0, 0.0, 0.0, 1.0] {
        return Err(invalid("last row of camera_to_world must be [0, 0, 0, 1]".into()));
    }
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(invalid("camera_to_world has non-finite entries".into()));
    }
    let cam = PinholeCamera {
        rotation: Mat3 {
            m: [
                [m[0][0], m[0][1], m[0][2]],
                [m[1][0], m[1][1], m[1][2]],
                [m[2][0], m[2][1], m[2][2]],
            ],
        },
        center: Vec3::new(m[0][3], m[1][3], m[2][3]),
        fx: k.fx,
        fy: k.fy,
        cx: k.cx,
        cy: k.cy,
        width: k.width,
        height: k.height,
    };
    cam.validate().map_err(|e| invalid(e.to_string()))?;
    Ok(cam)
}

fn parse_err(entry: impl Into<String>, message: impl ToString) -> Error {
    Error::Parse {
        entry: entry.into(),
        message: message.to_string(),
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path.display().to_string(), e))
}

/// Loads images and point cloud and applies the normalization.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let manifest = read_manifest(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::VersionMismatch {
            found: manifest.version,
            expected: MANIFEST_VERSION,
        });
    }
    if !(manifest.near >= 0.0 && manifest.far > manifest.near) {
        return Err(parse_err("near/far", format!("need 0 <= near < far, got {} and {}", manifest.near, manifest.far)));
    }
    let raw_cloud = ply::read_ply(&dir.join(&manifest.point_cloud))?;
    let norm = match manifest.normalization {
        Some(n) if !(n.scale > 0.0 && n.scale.is_finite()) => {
            return Err(parse_err("normalization", format!("scale must be positive, got {}", n.scale)))
        }
        Some(n) => n,
        None => Normalization::fit(&raw_cloud),
    };
    let cloud = PointCloud {
        points: raw_cloud.points.iter().map(|p| norm.apply(*p)).collect(),
        colors: raw_cloud.colors,
    };
    let mut frames = Vec::with_capacity(manifest.frames.len());
    for (i, f) in manifest.frames.iter().enumerate() {
        let entry = format!("frames[{i}] ({})", f.image);
        let mut camera = camera_from_matrix(&f.camera_to_world, &f.intrinsics, &entry)?;
        camera.center = norm.apply(camera.center);
        let image_path = dir.join(&f.image);
        let image = image_io::read_png(&image_path)?;
        if image.width != camera.width || image.height != camera.height {
            return Err(Error::InvalidCamera {
                entry,
                message: format!(
                    "image is {}x{} but intrinsics say {}x{}",
                    image.width, image.height, camera.width, camera.height
                ),
            });
        }
        frames.push(Frame {
            name: f.image.clone(),
            camera,
            image,
            split: f.split.into(),
        });
    }
    Ok(Dataset {
        frames,
        cloud,
        near: manifest.near,
        far: manifest.far,
        background: manifest.background,
    })
}

/// Writes `manifest.json`, `points.ply` and one PNG per frame into `dir`.
/// The dataset is assumed normalized already (identity transform recorded).
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<PathBuf> {
    for sub in ["train", "test"] {
        let d = dir.join(sub);
        std::fs::create_dir_all(&d).map_err(io_err(&d))?;
    }
    let mut entries = Vec::with_capacity(dataset.frames.len());
    let mut counters = [0usize; 2];
    for f in &dataset.frames {
        let (sub, c) = match f.split {
            Split::Train => ("train", &mut counters[0]),
            Split::Test => ("test", &mut counters[1]),
        };
        let rel = format!("{sub}/{:04}.png", *c);
        *c += 1;
        image_io::write_png(&dir.join(&rel), &f.image)?;
        let cam = &f.camera;
        entries.push(FrameEntry {
            image: rel,
            split: f.split.into(),
            camera_to_world: camera_to_matrix(cam),
            intrinsics: Intrinsics {
                fx: cam.fx,
                fy: cam.fy,
                cx: cam.cx,
                cy: cam.cy,
                width: cam.width,
                height: cam.height,
            },
        });
    }
    ply::write_ply(&dir.join("points.ply"), &dataset.cloud)?;
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        near: dataset.near,
        far: dataset.far,
        background: dataset.background,
        point_cloud: "points.ply".into(),
        normalization: Some(Normalization::IDENTITY),
        frames: entries,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text).map_err(io_err(&path))?;
    Ok(path)
}

/// Rounds every pixel to the nearest 8-bit level, matching what a PNG
/// round trip produces.
pub fn quantize_images(dataset: &mut Dataset) {
    for f in &mut dataset.frames {
        for v in &mut f.image.data {
            *v = image_io::to_u8(*v) as f32 / 255.0;
        }
    }
}
