//! Camera-LiDAR fusion in bird's-eye view with a keypoint-gated lifting
//! stage: only pixels whose keypoint heatmap score clears a threshold are
//! back-projected into 3D and max-pooled onto the BEV grid.

pub mod augment;
pub mod config;
pub mod bev;
pub mod depthfill;
pub mod geometry;
pub mod heatmap;
pub mod io;
pub mod rng;
pub mod pipeline;
pub mod simscene;

pub use nalgebra::{Point3, Vector3};
