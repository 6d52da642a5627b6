//! Blind detection and compensation of lens distortion.
//!
//! Distortion is detected without a calibration target: candidate distortion
//! coefficients are swept over a grid, the image is provisionally undistorted
//! along slices through the center, and the candidate whose slices carry the
//! least third-order spectral correlation (bicoherence) wins.
//!
//! Modules, bottom-up:
//!
//! - [`image`]: grayscale images, PGM/PNG I/O, bilinear sampling, slices.
//! - [`hosa`]: DFT, segmentation, bicoherence estimation and objectives.
//! - [`models`]: polynomial and rational distortion models with closed-form
//!   inverses, coefficient frame conversion and search ranges.
//! - [`detect`]: the grid-search detector for radial and geometric models.
//! - [`warp`]: whole-image distortion and compensation.
//! - [`synthgen`]: synthetic scenes and known-distortion fixtures.

pub mod detect;
pub mod error;
pub mod hosa;
pub mod image;
pub mod models;
pub mod synthgen;
pub mod warp;

pub use error::{Error, Result};
