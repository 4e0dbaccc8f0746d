//! Reconstruction of soccer broadcast footage into calibrated cameras, player
//! tracks, instance masks, metric depth maps, textured meshes and smoothed
//! 3D trajectories.
//!
//! Each module covers one stage; [`pipeline`] chains them over a directory of
//! per-frame inputs and [`synth`] renders scenes with exact ground truth.

pub mod calibration;
pub mod commands;
pub mod depthmesh;
pub mod error;
pub mod extract;
pub mod gamecam;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod lsq;
pub mod metrics;
pub mod pipeline;
pub mod segmentation;
pub mod synth;
pub mod tracking;
pub mod trajectory;

pub use error::{Error, Result};
pub use geometry::{Camera, GlCamera, ImageSize, Ray};
pub use grid::{Grid, Mask};
