//! 2-D discrete Fourier transform on real image planes, plus the normalised
//! log-magnitude / phase feature planes consumed by the Fourier critic.

use std::cell::RefCell;
use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{bail, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Complex `height x width` spectrum stored as separate real/imaginary planes.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrum {
    pub height: usize,
    pub width: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexSpectrum {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            re: vec![0.0; height * width],
            im: vec![0.0; height * width],
        }
    }

    pub fn magnitude(&self, i: usize) -> f64 {
        self.re[i].hypot(self.im[i])
    }

    pub fn get(&self, u: usize, v: usize) -> Complex<f64> {
        let i = u * self.width + v;
        Complex::new(self.re[i], self.im[i])
    }

    fn to_complex(&self) -> Vec<Complex<f64>> {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(&r, &i)| Complex::new(r, i))
            .collect()
    }

    fn from_complex(height: usize, width: usize, buf: &[Complex<f64>]) -> Self {
        Self {
            height,
            width,
            re: buf.iter().map(|c| c.re).collect(),
            im: buf.iter().map(|c| c.im).collect(),
        }
    }
}

fn transform_2d(buf: &mut [Complex<f64>], h: usize, w: usize, inverse: bool) {
    PLANNER.with(|p| {
        let mut planner = p.borrow_mut();
        let (row, col) = if inverse {
            (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
        } else {
            (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
        };
        row.process(buf);
        let mut column = vec![Complex::new(0.0, 0.0); h];
        for x in 0..w {
            for (y, c) in column.iter_mut().enumerate() {
                *c = buf[y * w + x];
            }
            col.process(&mut column);
            for (y, c) in column.iter().enumerate() {
                buf[y * w + x] = *c;
            }
        }
    });
}

/// Unnormalised forward transform of a real `h x w` plane.
pub fn fft2d(plane: &[f64], h: usize, w: usize) -> Result<ComplexSpectrum> {
    if plane.len() != h * w || h == 0 || w == 0 {
        bail!(Dimension, "plane of {} values is not {h}x{w}", plane.len());
    }
    let mut buf: Vec<_> = plane.iter().map(|&v| Complex::new(v, 0.0)).collect();
    transform_2d(&mut buf, h, w, false);
    Ok(ComplexSpectrum::from_complex(h, w, &buf))
}

/// Inverse transform (divides by `h * w`), returning the complex result.
pub fn ifft2d_complex(spec: &ComplexSpectrum) -> ComplexSpectrum {
    let (h, w) = (spec.height, spec.width);
    let mut buf = spec.to_complex();
    transform_2d(&mut buf, h, w, true);
    let inv = 1.0 / (h * w) as f64;
    for c in &mut buf {
        *c *= inv;
    }
    ComplexSpectrum::from_complex(h, w, &buf)
}

/// Inverse transform keeping the real part.
pub fn ifft2d(spec: &ComplexSpectrum) -> Vec<f64> {
    ifft2d_complex(spec).re
}

fn shift_by<V: Copy>(src: &[V], h: usize, w: usize, dy: usize, dx: usize) -> Vec<V> {
    let mut out = src.to_vec();
    for y in 0..h {
        for x in 0..w {
            out[((y + dy) % h) * w + (x + dx) % w] = src[y * w + x];
        }
    }
    out
}

/// Moves the DC coefficient to `(h / 2, w / 2)`.
pub fn fftshift(spec: &ComplexSpectrum) -> ComplexSpectrum {
    let (h, w) = (spec.height, spec.width);
    ComplexSpectrum {
        height: h,
        width: w,
        re: shift_by(&spec.re, h, w, h / 2, w / 2),
        im: shift_by(&spec.im, h, w, h / 2, w / 2),
    }
}

/// Inverse of [`fftshift`] for any parity.
pub fn ifftshift(spec: &ComplexSpectrum) -> ComplexSpectrum {
    let (h, w) = (spec.height, spec.width);
    ComplexSpectrum {
        height: h,
        width: w,
        re: shift_by(&spec.re, h, w, h - h / 2, w - w / 2),
        im: shift_by(&spec.im, h, w, h - h / 2, w - w / 2),
    }
}

pub(crate) fn shift_plane(src: &[f64], h: usize, w: usize, inverse: bool) -> Vec<f64> {
    if inverse {
        shift_by(src, h, w, h - h / 2, w - w / 2)
    } else {
        shift_by(src, h, w, h / 2, w / 2)
    }
}

/// Forward transform of a real plane with the imaginary part of every
/// self-conjugate bin pinned to `+0.0`, so phases of real-valued bins do not
/// flip between `+pi` and `-pi` on rounding noise.
pub fn real_fft2d(plane: &[f64], h: usize, w: usize) -> Result<ComplexSpectrum> {
    let mut spec = fft2d(plane, h, w)?;
    for u in [0, h / 2] {
        for v in [0, w / 2] {
            if (2 * u) % h == 0 && (2 * v) % w == 0 {
                spec.im[u * w + v] = 0.0;
            }
        }
    }
    Ok(spec)
}

/// Centred, min-max normalised `ln(1 + |F|)` and `atan2(Im, Re) / pi` planes.
#[derive(Clone, Debug)]
pub struct SpectrumFeatures {
    pub magnitude: Vec<f64>,
    pub phase: Vec<f64>,
    /// Centred spectrum the features were computed from.
    pub spectrum: ComplexSpectrum,
    log_mag: Vec<f64>,
    argmin: usize,
    argmax: usize,
}

impl SpectrumFeatures {
    pub fn compute(plane: &[f64], h: usize, w: usize) -> Result<Self> {
        let spectrum = fftshift(&real_fft2d(plane, h, w)?);
        let log_mag: Vec<f64> = (0..h * w).map(|i| spectrum.magnitude(i).ln_1p()).collect();
        let (mut argmin, mut argmax) = (0, 0);
        for (i, &m) in log_mag.iter().enumerate() {
            if m < log_mag[argmin] {
                argmin = i;
            }
            if m > log_mag[argmax] {
                argmax = i;
            }
        }
        let (lo, hi) = (log_mag[argmin], log_mag[argmax]);
        let range = hi - lo;
        let magnitude = if range > 0.0 {
            log_mag.iter().map(|m| (m - lo) / range).collect()
        } else {
            vec![0.0; h * w]
        };
        let phase = spectrum
            .re
            .iter()
            .zip(&spectrum.im)
            .map(|(&re, &im)| im.atan2(re) / PI)
            .collect();
        Ok(Self {
            magnitude,
            phase,
            spectrum,
            log_mag,
            argmin,
            argmax,
        })
    }

    /// Pulls gradients on the magnitude and phase planes back to the input plane.
    pub fn backward(&self, g_mag: &[f64], g_phase: &[f64]) -> Vec<f64> {
        let (h, w) = (self.spectrum.height, self.spectrum.width);
        let n = h * w;
        let mut d_log = vec![0.0; n];
        let range = self.log_mag[self.argmax] - self.log_mag[self.argmin];
        if range > 0.0 {
            let (mut g_lo, mut g_hi) = (0.0, 0.0);
            for i in 0..n {
                d_log[i] = g_mag[i] / range;
                g_lo += g_mag[i] * (self.magnitude[i] - 1.0) / range;
                g_hi -= g_mag[i] * self.magnitude[i] / range;
            }
            d_log[self.argmin] += g_lo;
            d_log[self.argmax] += g_hi;
        }
        let mut d_re = vec![0.0; n];
        let mut d_im = vec![0.0; n];
        for i in 0..n {
            let (re, im) = (self.spectrum.re[i], self.spectrum.im[i]);
            let a2 = re * re + im * im;
            if a2 <= 0.0 {
                continue;
            }
            let a = a2.sqrt();
            let da = d_log[i] / (1.0 + a);
            d_re[i] += da * re / a - g_phase[i] * im / (PI * a2);
            d_im[i] += da * im / a + g_phase[i] * re / (PI * a2);
        }
        let mut grad = ComplexSpectrum {
            height: h,
            width: w,
            re: shift_plane(&d_re, h, w, true),
            im: shift_plane(&d_im, h, w, true),
        };
        // pinned bins carry no dependence on the input through their imaginary part
        for u in [0, h / 2] {
            for v in [0, w / 2] {
                if (2 * u) % h == 0 && (2 * v) % w == 0 {
                    grad.im[u * w + v] = 0.0;
                }
            }
        }
        let scale = n as f64;
        ifft2d(&grad).into_iter().map(|v| v * scale).collect()
    }
}
