//! JSON bodies of the render service, also accepted by `planex render --camera`.
//!
//! ```json
//! {
//!   "camera": {
//!     "rotation": [[1,0,0],[0,1,0],[0,0,1]],
//!     "center": [0, 0, -3],
//!     "fx": 60, "fy": 60, "cx": 32, "cy": 32,
//!     "width": 64, "height": 64
//!   },
//!   "mode": "neural",
//!   "include_depth": false
//! }
//! ```
//!
//! `rotation` is world-from-camera, row-major; its columns are the camera's
//! right, down and forward axes in world space.

use planex_core::math::{Mat3, Vec3};
use planex_core::render::{PinholeCamera, RenderStats};
use serde::{Deserialize, Serialize};

/// Largest accepted image, in pixels.
pub const DEFAULT_MAX_PIXELS: usize = 1920 * 1080;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraJson {
    pub rotation: [[f64; 3]; 3],
    pub center: [f64; 3],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl From<&PinholeCamera> for CameraJson {
    fn from(c: &PinholeCamera) -> Self {
        CameraJson {
            rotation: c.rotation.m,
            center: c.center.to_array(),
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderMode {
    #[default]
    Neural,
    Baked,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderRequest {
    pub camera: CameraJson,
    #[serde(default)]
    pub mode: RenderMode,
    #[serde(default)]
    pub include_depth: bool,
}

/// A request field that failed validation.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
    pub too_large: bool,
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn field(field: &str, message: impl Into<String>) -> FieldError {
    FieldError {
        field: field.into(),
        message: message.into(),
        too_large: false,
    }
}

impl CameraJson {
    /// Checks each field and names the first bad one.
    pub fn to_camera(&self, max_pixels: usize) -> Result<PinholeCamera, FieldError> {
        if self.width == 0 {
            return Err(field("width", "must be positive"));
        }
        if self.height == 0 {
            return Err(field("height", "must be positive"));
        }
        if self.width.saturating_mul(self.height) > max_pixels {
            return Err(FieldError {
                too_large: true,
                ..field(
                    "width",
                    format!("{}x{} exceeds the {max_pixels}-pixel cap", self.width, self.height),
                )
            });
        }
        let rotation = Mat3 { m: self.rotation };
        if self.rotation.iter().flatten().any(|v| !v.is_finite()) {
            return Err(field("rotation", "has non-finite entries"));
        }
        let err = rotation.orthonormality_error();
        if !(err <= 1e-8) {
            return Err(field("rotation", format!("is not orthonormal (deviation {err:.3e})")));
        }
        if rotation.determinant() <= 0.0 {
            return Err(field("rotation", "is a reflection"));
        }
        if self.center.iter().any(|v| !v.is_finite()) {
            return Err(field("center", "has non-finite entries"));
        }
        for (name, v) in [("fx", self.fx), ("fy", self.fy)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(field(name, "must be positive and finite"));
            }
        }
        for (name, v) in [("cx", self.cx), ("cy", self.cy)] {
            if !v.is_finite() {
                return Err(field(name, "must be finite"));
            }
        }
        Ok(PinholeCamera {
            rotation,
            center: Vec3::from_array(self.center),
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            width: self.width,
            height: self.height,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingsJson {
    pub intersection: f64,
    pub preprocessing: f64,
    pub inference: f64,
    pub integration: f64,
    pub total: f64,
}

/// Body of `GET /stats`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsJson {
    pub frames: u64,
    pub mode: Option<RenderMode>,
    pub width: usize,
    pub height: usize,
    pub rays: usize,
    pub hits: usize,
    pub evaluations: usize,
    pub skipped_fraction: f64,
    /// Seconds per stage for the last frame.
    pub timings: TimingsJson,
}

impl StatsJson {
    pub fn from_stats(frames: u64, mode: RenderMode, width: usize, height: usize, s: &RenderStats) -> Self {
        StatsJson {
            frames,
            mode: Some(mode),
            width,
            height,
            rays: s.rays,
            hits: s.hits,
            evaluations: s.evaluations,
            skipped_fraction: s.skipped_fraction(),
            timings: TimingsJson {
                intersection: s.timings.intersection,
                preprocessing: s.timings.preprocessing,
                inference: s.timings.inference,
                integration: s.timings.integration,
                total: s.timings.total(),
            },
        }
    }
}

/// Body of `POST /render` when `include_depth` is set. Binary payloads are
/// base64: the color PNG, the 16-bit depth PNG and the raw depth sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderResponse {
    pub width: usize,
    pub height: usize,
    pub image_png: String,
    pub depth_png: String,
    pub depth_raw: String,
}

/// One WebSocket message from the client.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamRequest {
    #[serde(default)]
    pub id: u64,
    pub camera: CameraJson,
    #[serde(default)]
    pub mode: RenderMode,
}

/// One WebSocket reply; exactly one of `png` and `error` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamFrame {
    pub id: u64,
    pub width: usize,
    pub height: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub png: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}
