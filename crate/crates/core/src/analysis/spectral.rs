//! Radially averaged power spectra and spectrum difference maps.

use std::f64::consts::PI;

use crate::error::{bail, Result};
use crate::numerics::fft::{fft2d, fftshift, SpectrumFeatures};
use crate::numerics::ops::grayscale;
use crate::numerics::tensor::{Shape, Tensor};

/// Power floor inside the logarithm.
pub const PSD_FLOOR: f64 = 1e-12;

/// Mean `log10` power per integer radius from the spectrum centre.
#[derive(Clone, Debug, PartialEq)]
pub struct PsdCurve {
    /// Bin frequency in cycles per pixel, `k / min(H, W)`.
    pub frequency: Vec<f64>,
    pub log_power: Vec<f64>,
}

impl PsdCurve {
    pub fn len(&self) -> usize {
        self.log_power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_power.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin,frequency,log10_power\n");
        for (k, (f, p)) in self.frequency.iter().zip(&self.log_power).enumerate() {
            s.push_str(&format!("{k},{f:.6},{p:.9}\n"));
        }
        s
    }

    /// Mean absolute difference over the top quarter of bins.
    pub fn high_band_distance(&self, other: &PsdCurve) -> Result<f64> {
        if self.len() != other.len() || self.is_empty() {
            bail!(Dimension, "PSD curves have {} and {} bins", self.len(), other.len());
        }
        let start = self.len() - self.len().div_ceil(4);
        let d: f64 = (start..self.len())
            .map(|k| (self.log_power[k] - other.log_power[k]).abs())
            .sum();
        Ok(d / (self.len() - start) as f64)
    }
}

/// Single luma (or lone channel) plane of sample `n` in f64.
pub fn luma_plane(img: &Tensor, n: usize) -> Result<Vec<f64>> {
    let s = img.shape();
    if n >= s.n {
        bail!(Dimension, "sample {n} out of range for batch of {}", s.n);
    }
    let one = img.sample(n);
    let plane = match s.c {
        1 => one,
        3 => grayscale(&one)?,
        c => bail!(Dimension, "expected 1 or 3 channels, got {c}"),
    };
    Ok(plane.data().iter().map(|&v| v as f64).collect())
}

/// Radial power spectral density of sample `n`.
///
/// `P = |fftshift(F)|^2 / (H W)`; each bin `k` averages `log10(P + 1e-12)` over
/// bins whose distance from the centre floors to `k`.
pub fn psd_curve(img: &Tensor, n: usize) -> Result<PsdCurve> {
    let Shape { h, w, .. } = img.shape();
    let plane = luma_plane(img, n)?;
    let spec = fftshift(&fft2d(&plane, h, w)?);
    let bins = h.min(w) / 2;
    if bins == 0 {
        bail!(Dimension, "image {h}x{w} too small for a PSD curve");
    }
    let (cy, cx) = ((h / 2) as f64, (w / 2) as f64);
    let mut sum = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    let hw = (h * w) as f64;
    for y in 0..h {
        for x in 0..w {
            let r = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt().floor() as usize;
            if r < bins {
                let m = spec.magnitude(y * w + x);
                sum[r] += (m * m / hw + PSD_FLOOR).log10();
                count[r] += 1;
            }
        }
    }
    let side = h.min(w) as f64;
    Ok(PsdCurve {
        frequency: (0..bins).map(|k| k as f64 / side).collect(),
        log_power: sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect(),
    })
}

/// Normalised log-magnitude and phase planes of sample `n`'s luma.
pub fn spectrum_planes(img: &Tensor, n: usize) -> Result<SpectrumFeatures> {
    let s = img.shape();
    SpectrumFeatures::compute(&luma_plane(img, n)?, s.h, s.w)
}

/// Magnitude and wrapped phase differences between two images, both in [0, 1].
#[derive(Clone, Debug)]
pub struct SpectrumDiff {
    pub height: usize,
    pub width: usize,
    pub magnitude: Vec<f64>,
    pub phase: Vec<f64>,
}

pub fn fft_diff_heatmap(a: &Tensor, b: &Tensor, n: usize) -> Result<SpectrumDiff> {
    if a.shape() != b.shape() {
        bail!(Dimension, "heatmap inputs differ: {} vs {}", a.shape(), b.shape());
    }
    let fa = spectrum_planes(a, n)?;
    let fb = spectrum_planes(b, n)?;
    let magnitude = fa
        .magnitude
        .iter()
        .zip(&fb.magnitude)
        .map(|(x, y)| (x - y).abs())
        .collect();
    let phase = fa
        .phase
        .iter()
        .zip(&fb.phase)
        .map(|(x, y)| {
            let d = ((x - y) * PI).abs() % (2.0 * PI);
            d.min(2.0 * PI - d) / PI
        })
        .collect();
    Ok(SpectrumDiff {
        height: a.shape().h,
        width: a.shape().w,
        magnitude,
        phase,
    })
}

/// Linear blue (0) to red (1) ramp.
pub fn blue_red(v: f64) -> [u8; 3] {
    let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    let r = (255.0 * v + 0.5).floor() as u8;
    [r, 0, 255 - r]
}

/// Colour-mapped `1 x 3 x h x w` image of a plane with values in [0, 1].
pub fn colormap_image(plane: &[f64], h: usize, w: usize) -> Result<Tensor> {
    if plane.len() != h * w {
        bail!(Dimension, "plane of {} values is not {h}x{w}", plane.len());
    }
    let rgb: Vec<[u8; 3]> = plane.iter().map(|&v| blue_red(v)).collect();
    Ok(Tensor::from_fn(Shape::new(1, 3, h, w), |_, c, y, x| {
        rgb[y * w + x][c] as f32 / 255.0
    }))
}
