//! Shared fixtures and independent reference implementations for the
//! integration suites.

#![allow(dead_code)]

pub mod grad_cases;
pub mod overfit;

use afnet::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: Shape, lo: f64, hi: f64, seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    Tensor::from_fn(shape, |_, _, _, _| r.random_range(lo..hi))
}

pub fn uniform_f32(shape: Shape, lo: f64, hi: f64, seed: u64) -> Tensor {
    uniform(shape, lo, hi, seed).cast()
}

/// Uniform values with magnitude in `[gap, 1]` and random sign, keeping
/// piecewise-linear ops away from their kinks.
pub fn away_from_zero(shape: Shape, gap: f64, seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    Tensor::from_fn(shape, |_, _, _, _| {
        let m = r.random_range(gap..1.0);
        if r.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Textbook cross-correlation by direct summation.
pub fn conv_direct(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    b: Option<&[f64]>,
    stride: usize,
    pad: usize,
    groups: usize,
) -> Tensor<f64> {
    let xs = x.shape();
    let ws = w.shape();
    let (k_h, k_w) = (ws.h, ws.w);
    let ho = (xs.h + 2 * pad - k_h) / stride + 1;
    let wo = (xs.w + 2 * pad - k_w) / stride + 1;
    let cin_g = xs.c / groups;
    let cout_g = ws.n / groups;
    Tensor::from_fn(Shape::new(xs.n, ws.n, ho, wo), |n, o, y, xx| {
        let grp = o / cout_g;
        let mut acc = b.map_or(0.0, |b| b[o]);
        for ci in 0..cin_g {
            for ky in 0..k_h {
                for kx in 0..k_w {
                    let iy = (y * stride + ky) as isize - pad as isize;
                    let ix = (xx * stride + kx) as isize - pad as isize;
                    if iy < 0 || ix < 0 || iy >= xs.h as isize || ix >= xs.w as isize {
                        continue;
                    }
                    acc += w.at(o, ci, ky, kx) * x.at(n, grp * cin_g + ci, iy as usize, ix as usize);
                }
            }
        }
        acc
    })
}

/// `sum x[m,n] exp(-2 pi i (u m / H + v n / W))` evaluated term by term.
pub fn dft_direct(plane: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let mut re = vec![0.0; h * w];
    let mut im = vec![0.0; h * w];
    for u in 0..h {
        for v in 0..w {
            let (mut sr, mut si) = (0.0, 0.0);
            for m in 0..h {
                for n in 0..w {
                    let t = -2.0 * std::f64::consts::PI * ((u * m) as f64 / h as f64 + (v * n) as f64 / w as f64);
                    sr += plane[m * w + n] * t.cos();
                    si += plane[m * w + n] * t.sin();
                }
            }
            re[u * w + v] = sr;
            im[u * w + v] = si;
        }
    }
    (re, im)
}

fn gauss_taps() -> Vec<f64> {
    let raw: Vec<f64> = (0..11)
        .map(|i| (-((i as f64 - 5.0).powi(2)) / (2.0 * 1.5 * 1.5)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

/// Mean SSIM and mean contrast-structure over every valid 11x11 window,
/// evaluated window by window with the 2-D Gaussian weights.
pub fn ssim_sliding(x: &Tensor<f64>, y: &Tensor<f64>) -> (f64, f64) {
    let g = gauss_taps();
    let s = x.shape();
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let (mut ssim, mut cs, mut count) = (0.0, 0.0, 0usize);
    for n in 0..s.n {
        for c in 0..s.c {
            for oy in 0..=s.h - 11 {
                for ox in 0..=s.w - 11 {
                    let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for i in 0..11 {
                        for j in 0..11 {
                            let wt = g[i] * g[j];
                            let a = x.at(n, c, oy + i, ox + j);
                            let b = y.at(n, c, oy + i, ox + j);
                            mx += wt * a;
                            my += wt * b;
                            sxx += wt * a * a;
                            syy += wt * b * b;
                            sxy += wt * a * b;
                        }
                    }
                    let (vx, vy, cov) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
                    let l = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
                    let k = (2.0 * cov + c2) / (vx + vy + c2);
                    ssim += l * k;
                    cs += k;
                    count += 1;
                }
            }
        }
    }
    (ssim / count as f64, cs / count as f64)
}

fn halve(t: &Tensor<f64>) -> Tensor<f64> {
    let s = t.shape();
    Tensor::from_fn(Shape::new(s.n, s.c, s.h / 2, s.w / 2), |n, c, y, x| {
        0.25 * (t.at(n, c, 2 * y, 2 * x)
            + t.at(n, c, 2 * y + 1, 2 * x)
            + t.at(n, c, 2 * y, 2 * x + 1)
            + t.at(n, c, 2 * y + 1, 2 * x + 1))
    })
}

/// `prod_j cs_j^{w_j} * ssim_M^{w_M}` with the standard five weights
/// truncated to `levels` and renormalised.
pub fn ms_ssim_sliding(x: &Tensor<f64>, y: &Tensor<f64>, levels: usize) -> f64 {
    let full = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
    let total: f64 = full[..levels].iter().sum();
    let (mut x, mut y) = (x.clone(), y.clone());
    let mut out = 1.0;
    for (j, wj) in full.iter().take(levels).enumerate() {
        let (s, c) = ssim_sliding(&x, &y);
        let w = wj / total;
        if j + 1 == levels {
            out *= s.max(1e-6).powf(w);
        } else {
            out *= c.max(1e-6).powf(w);
            x = halve(&x);
            y = halve(&y);
        }
    }
    out
}

/// Colour texture with a natural-image-like `1/f^2` power spectrum: many
/// plane waves with log-uniform radial frequency up to Nyquist, rescaled
/// into [0.05, 0.95].
pub fn texture(h: usize, w: usize, seed: u64) -> Tensor {
    use std::f64::consts::TAU;
    let mut r = rng(seed);
    let (f_lo, f_hi) = (1.0 / h.max(w) as f64, 0.5f64);
    let waves: Vec<(f64, f64, f64, [f64; 3])> = (0..160)
        .map(|_| {
            let f = (r.random_range(f_lo.ln()..f_hi.ln())).exp();
            let theta = r.random_range(0.0..TAU);
            let mix = [0, 1, 2].map(|_| r.random_range(0.6..1.0));
            (f * theta.cos(), f * theta.sin(), r.random_range(0.0..TAU), mix)
        })
        .collect();
    let raw = Tensor::<f64>::from_fn(Shape::new(1, 3, h, w), |_, c, y, x| {
        waves
            .iter()
            .map(|(fy, fx, ph, mix)| mix[c] * (TAU * (fy * y as f64 + fx * x as f64) + ph).sin())
            .sum()
    });
    let (lo, hi) = raw.min_max();
    raw.map(|v| 0.05 + 0.9 * (v - lo) / (hi - lo)).cast()
}

/// Low-light rendition: `gain * gt^gamma` plus Gaussian noise, clipped.
pub fn darken(gt: &Tensor, gamma: f64, gain: f64, sigma: f64, seed: u64) -> Tensor {
    use rand_distr::{Distribution, Normal};
    let mut r = rng(seed);
    let normal = Normal::new(0.0, sigma).unwrap();
    let noise = Tensor::from_fn(gt.shape(), |_, _, _, _| normal.sample(&mut r) as f32);
    gt.zip_map(&noise, |v, n| {
        ((v as f64).powf(gamma) * gain + n as f64).clamp(0.0, 1.0) as f32
    })
}
