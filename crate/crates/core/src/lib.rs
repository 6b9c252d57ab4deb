//! Two-stage low-light image enhancement with a Fourier-spectrum adversarial
//! objective.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`] – tensors, convolution, resampling, 2-D FFT and a small
//!   reverse-mode tape used by every network in the crate.
//! * [`isp`] – Bayer mosaic packing and PNG ingestion for sRGB and RAW inputs.
//! * [`generator`] – the illumination-balancing UNet built from cMSFE-A blocks
//!   and the full-resolution restoration stage built from residual dense blocks.
//! * [`discriminators`] – the PatchGAN critic and the Fourier-spectrum critic.
//! * [`losses`] – L1, MS-SSIM, contrastive, and least-squares adversarial terms.
//! * [`training`] – optimiser, schedule, augmentation, checkpoints, and the loop.
//! * [`analysis`] – PSNR/SSIM, power spectral density curves, spectrum heatmaps,
//!   and multiply-accumulate accounting.
//! * [`config`] – the plain-text `key = value` run configuration.

pub mod analysis;
pub mod config;
pub mod discriminators;
pub mod error;
pub mod generator;
pub mod isp;
pub mod losses;
pub mod nn;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
pub use numerics::graph::{Graph, Var};
pub use numerics::tensor::{Scalar, Shape, Tensor};
