//! Full-reference image quality metrics.

use crate::error::{bail, Result};
use crate::losses;
use crate::numerics::graph::Graph;
use crate::numerics::ops::grayscale;
use crate::numerics::tensor::Tensor;

fn check_pair(x: &Tensor, y: &Tensor) -> Result<()> {
    if x.shape() != y.shape() {
        bail!(Dimension, "metric inputs differ: {} vs {}", x.shape(), y.shape());
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB; identical inputs give `+inf`.
pub fn psnr(x: &Tensor, y: &Tensor, peak: f64) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.numel() as f64;
    let mse = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Mean local SSIM; 3-channel inputs are converted to luma first.
pub fn ssim(x: &Tensor, y: &Tensor) -> Result<f64> {
    check_pair(x, y)?;
    let (x, y) = if x.shape().c == 3 {
        (grayscale(x)?, grayscale(y)?)
    } else {
        (x.clone(), y.clone())
    };
    let mut g = Graph::<f64>::new();
    let xv = g.constant(x.cast());
    let yv = g.constant(y.cast());
    let parts = losses::ssim_parts(&mut g, xv, yv)?;
    Ok(g.value(parts.ssim).item())
}

/// Multi-scale SSIM averaged over channels.
pub fn ms_ssim(x: &Tensor, y: &Tensor, levels: usize) -> Result<f64> {
    check_pair(x, y)?;
    let mut g = Graph::<f64>::new();
    let xv = g.constant(x.cast());
    let yv = g.constant(y.cast());
    let m = losses::ms_ssim(&mut g, xv, yv, levels)?;
    Ok(g.value(m).item())
}
