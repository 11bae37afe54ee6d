//! PNG color and depth output, and the raw float depth sidecar.
//!
//! Depth sidecar layout (all little-endian):
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 8    | magic `PXDEPTH\0`             |
//! | 8      | 4    | u32 version (1)               |
//! | 12     | 4    | u32 width                     |
//! | 16     | 4    | u32 height                    |
//! | 20     | 4·wh | f32 depth, row-major; -1 = no surface |

use std::io::Cursor;
use std::path::Path;

use image::{ImageBuffer, ImageFormat, Luma, Rgb, Rgba};
use planex_core::render::{RgbaTexture, INVALID_DEPTH};
use planex_core::scene::Image;

use crate::error::{io_err, Error, Result};

pub const DEPTH_MAGIC: &[u8; 8] = b"PXDEPTH\0";
pub const DEPTH_VERSION: u32 = 1;

#[inline]
pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn image_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn rgb8(img: &Image) -> ImageBuffer<Rgb<u8>, Vec<u8>> {
    let data = img.data.iter().map(|&v| to_u8(v)).collect();
    ImageBuffer::from_raw(img.width as u32, img.height as u32, data).expect("buffer matches size")
}

pub fn encode_png(img: &Image) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    rgb8(img)
        .write_to(&mut out, ImageFormat::Png)
        .expect("in-memory PNG encode");
    out.into_inner()
}

pub fn write_png(path: &Path, img: &Image) -> Result<()> {
    std::fs::write(path, encode_png(img)).map_err(io_err(path))
}

/// Decodes any 8/16-bit PNG into RGB floats in `[0, 1]`; alpha is dropped.
pub fn decode_png(bytes: &[u8], path: &Path) -> Result<Image> {
    let dyn_img = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| image_err(path, e))?;
    let rgb = dyn_img.to_rgb8();
    Ok(Image {
        width: rgb.width() as usize,
        height: rgb.height() as usize,
        data: rgb.as_raw().iter().map(|&v| v as f32 / 255.0).collect(),
    })
}

pub fn read_png(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    decode_png(&bytes, path)
}

/// 16-bit grayscale: `depth / t_far` scaled to 65535; invalid pixels are 0.
pub fn encode_depth_png(depth: &[f64], width: usize, height: usize, t_far: f64) -> Vec<u8> {
    let data: Vec<u16> = depth
        .iter()
        .map(|&d| {
            if d == INVALID_DEPTH || !d.is_finite() || d < 0.0 {
                0
            } else {
                ((d / t_far).clamp(0.0, 1.0) * 65535.0).round() as u16
            }
        })
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(width as u32, height as u32, data).expect("buffer matches size");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png).expect("in-memory PNG encode");
    out.into_inner()
}

pub fn encode_depth_raw(depth: &[f64], width: usize, height: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + depth.len() * 4);
    out.extend_from_slice(DEPTH_MAGIC);
    out.extend_from_slice(&DEPTH_VERSION.to_le_bytes());
    out.extend_from_slice(&(width as u32).to_le_bytes());
    out.extend_from_slice(&(height as u32).to_le_bytes());
    for &d in depth {
        out.extend_from_slice(&(d as f32).to_le_bytes());
    }
    out
}

/// Returns `(width, height, depth)`.
pub fn decode_depth_raw(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    let bad = |m: &str| Error::CorruptBlock {
        block: "depth".into(),
        message: m.into(),
    };
    if bytes.len() < 20 || &bytes[..8] != DEPTH_MAGIC {
        return Err(bad("missing depth header"));
    }
    let u = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u(8);
    if version != DEPTH_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: DEPTH_VERSION,
        });
    }
    let (w, h) = (u(12) as usize, u(16) as usize);
    if bytes.len() != 20 + w * h * 4 {
        return Err(bad("payload length does not match width x height"));
    }
    let depth = bytes[20..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((w, h, depth))
}

/// Writes `<stem>.png` (16-bit) and `<stem>.depth` (raw floats).
pub fn write_depth(stem: &Path, depth: &[f64], width: usize, height: usize, t_far: f64) -> Result<()> {
    let png = stem.with_extension("png");
    std::fs::write(&png, encode_depth_png(depth, width, height, t_far)).map_err(io_err(&png))?;
    let raw = stem.with_extension("depth");
    std::fs::write(&raw, encode_depth_raw(depth, width, height)).map_err(io_err(&raw))
}

/// Non-premultiplied RGBA8 PNG of a texture. Row 0 of the PNG is the top of
/// the rectangle (largest `up` coordinate).
pub fn encode_rgba_png(tex: &RgbaTexture) -> Vec<u8> {
    let mut data = Vec::with_capacity(tex.texels.len() * 4);
    for row in (0..tex.res_y).rev() {
        for i in 0..tex.res_x {
            data.extend(tex.texel(i, row).map(to_u8));
        }
    }
    let buf: ImageBuffer<Rgba<u8>, Vec<u8>> =
        ImageBuffer::from_raw(tex.res_x as u32, tex.res_y as u32, data).expect("buffer matches size");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png).expect("in-memory PNG encode");
    out.into_inner()
}

pub fn decode_rgba_png(bytes: &[u8], path: &Path) -> Result<RgbaTexture> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| image_err(path, e))?
        .to_rgba8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut texels = vec![[0f32; 4]; w * h];
    for (x, y, p) in img.enumerate_pixels() {
        let row = h - 1 - y as usize;
        texels[row * w + x as usize] = p.0.map(|v| v as f32 / 255.0);
    }
    Ok(RgbaTexture {
        res_x: w,
        res_y: h,
        texels,
    })
}
