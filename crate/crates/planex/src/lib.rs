//! Companion crate for `planex-core`: dataset manifests, PLY and PNG IO,
//! checkpoints, baked bundles, multi-threaded training and rendering, the
//! `planex` command line and the render service.

pub mod api;
pub mod bundle;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod image_io;
pub mod log;
pub mod manifest;
pub mod parallel;
pub mod pipeline;
pub mod ply;
pub mod server;

pub use error::{Error, Result};
pub use planex_core as core;
