//! Evaluation metrics, frequency diagnostics and inference-cost accounting.

pub mod macs;
pub mod metrics;
pub mod spectral;

pub use macs::MacReport;
pub use metrics::{ms_ssim, psnr, ssim};
pub use spectral::{fft_diff_heatmap, psd_curve, PsdCurve};
