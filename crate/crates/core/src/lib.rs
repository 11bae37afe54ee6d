//! Mixture-of-planar-experts scene representation.
//!
//! A scene is a set of oriented rectangles, each paired with a tiny radiance
//! network. Rays are intersected with the rectangles in closed form, the
//! experts are evaluated at the hit points, and the samples are alpha
//! composited front to back. This crate holds the algorithmic core and builds
//! without `std` (with the `libm` feature); file formats, threading and the
//! command line live in the `planex` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod geometry;
pub mod math;
pub mod oracle;
pub mod radiance;
pub mod render;
pub mod scene;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
pub use geometry::{Hit, PointCloud, Ray, Rectangle};
pub use math::Vec3;

#[inline]
pub(crate) fn scalar<T: num_traits::Float>(x: f64) -> T {
    T::from(x).expect("representable float")
}
