//! Training objective: pixel L1, multi-scale SSIM, the supervised contrastive
//! feature term and the least-squares adversarial terms, plus their weighted
//! combination.

use crate::error::{bail, Result};
use crate::numerics::graph::{Graph, Var};
use crate::numerics::ops::Conv2dSpec;
use crate::numerics::tensor::{Scalar, Shape, Tensor};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// Five-level MS-SSIM weights, finest first.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
pub const SCAL_TEMPERATURE: f64 = 0.5;
pub const COSINE_EPS: f64 = 1e-8;
/// Floor applied to per-level SSIM terms before exponentiation.
const MS_SSIM_FLOOR: f64 = 1e-6;

pub const TERM_NAMES: [&str; 5] = ["l1", "ms_ssim", "scal", "p_adv", "f_adv"];

/// Normalised 1-D Gaussian taps.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

fn window_weight<T: Scalar>(channels: usize) -> Tensor<T> {
    let g = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
    Tensor::from_fn(Shape::new(channels, 1, SSIM_WINDOW, SSIM_WINDOW), |_, _, y, x| {
        T::of(g[y] * g[x])
    })
}

/// Mean SSIM and mean contrast-structure term of one scale.
#[derive(Clone, Copy, Debug)]
pub struct SsimParts {
    pub ssim: Var,
    pub cs: Var,
}

/// Gaussian-window SSIM over valid windows, computed per channel and averaged.
pub fn ssim_parts<T: Scalar>(g: &mut Graph<T>, x: Var, y: Var) -> Result<SsimParts> {
    let s = g.shape(x);
    if s != g.shape(y) {
        bail!(Dimension, "SSIM inputs differ: {} vs {}", s, g.shape(y));
    }
    if s.h < SSIM_WINDOW || s.w < SSIM_WINDOW {
        bail!(
            Parameter,
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
            s.h,
            s.w
        );
    }
    let w = g.constant(window_weight(s.c));
    let spec = Conv2dSpec::new(1, 0, s.c);
    let filt = |g: &mut Graph<T>, v: Var| g.conv2d(v, w, None, spec);
    let mu_x = filt(g, x)?;
    let mu_y = filt(g, y)?;
    let xx = g.square(x)?;
    let yy = g.square(y)?;
    let xy = g.mul(x, y)?;
    let e_xx = filt(g, xx)?;
    let e_yy = filt(g, yy)?;
    let e_xy = filt(g, xy)?;
    let mu_xx = g.square(mu_x)?;
    let mu_yy = g.square(mu_y)?;
    let mu_xy = g.mul(mu_x, mu_y)?;
    let s_xx = g.sub(e_xx, mu_xx)?;
    let s_yy = g.sub(e_yy, mu_yy)?;
    let s_xy = g.sub(e_xy, mu_xy)?;
    let (c1, c2) = (SSIM_K1 * SSIM_K1, SSIM_K2 * SSIM_K2);

    let cs_num = g.affine(s_xy, 2.0, c2)?;
    let var_sum = g.add(s_xx, s_yy)?;
    let cs_den = g.affine(var_sum, 1.0, c2)?;
    let cs_map = g.div(cs_num, cs_den)?;
    let l_num = g.affine(mu_xy, 2.0, c1)?;
    let mu_sum = g.add(mu_xx, mu_yy)?;
    let l_den = g.affine(mu_sum, 1.0, c1)?;
    let l_map = g.div(l_num, l_den)?;
    let ssim_map = g.mul(l_map, cs_map)?;
    Ok(SsimParts {
        ssim: g.mean(ssim_map)?,
        cs: g.mean(cs_map)?,
    })
}

/// Level weights truncated to `levels` and renormalised to sum to one.
pub fn ms_ssim_weights(levels: usize) -> Result<Vec<f64>> {
    if levels == 0 || levels > MS_SSIM_WEIGHTS.len() {
        bail!(Parameter, "MS-SSIM levels must be in 1..=5, got {levels}");
    }
    let w = &MS_SSIM_WEIGHTS[..levels];
    let s: f64 = w.iter().sum();
    Ok(w.iter().map(|v| v / s).collect())
}

/// Smallest spatial size supporting `levels` scales.
pub fn ms_ssim_min_size(levels: usize) -> usize {
    (1 << levels.saturating_sub(1)) * SSIM_WINDOW
}

/// Multi-scale SSIM as a scalar node.
pub fn ms_ssim<T: Scalar>(g: &mut Graph<T>, x: Var, y: Var, levels: usize) -> Result<Var> {
    let weights = ms_ssim_weights(levels)?;
    let s = g.shape(x);
    let need = ms_ssim_min_size(levels);
    if s.h.min(s.w) < need {
        bail!(
            Parameter,
            "{levels}-level MS-SSIM needs at least {need}px, got {}x{}",
            s.h,
            s.w
        );
    }
    let (mut x, mut y) = (x, y);
    let mut acc: Option<Var> = None;
    for (j, &w) in weights.iter().enumerate() {
        let parts = ssim_parts(g, x, y)?;
        let last = j + 1 == levels;
        let term = if last { parts.ssim } else { parts.cs };
        let term = g.clamp_min(term, MS_SSIM_FLOOR)?;
        let factor = g.powf(term, w)?;
        acc = Some(match acc {
            Some(a) => g.mul(a, factor)?,
            None => factor,
        });
        if !last {
            x = g.avg_pool2(x)?;
            y = g.avg_pool2(y)?;
        }
    }
    Ok(acc.expect("at least one level"))
}

/// `1 - ms_ssim`.
pub fn ms_ssim_loss<T: Scalar>(g: &mut Graph<T>, pred: Var, target: Var, levels: usize) -> Result<Var> {
    let m = ms_ssim(g, pred, target, levels)?;
    g.affine(m, -1.0, 1.0)
}

/// Mean absolute difference.
pub fn l1_loss<T: Scalar>(g: &mut Graph<T>, pred: Var, target: Var) -> Result<Var> {
    let d = g.sub(pred, target)?;
    let a = g.abs(d)?;
    g.mean(a)
}

/// Contrastive loss over feature vectors with `anchor` pulled toward
/// `positive` and pushed from `negative`:
/// `-log(e^{cos(a,p)/t} / (e^{cos(a,p)/t} + e^{cos(a,n)/t}))`, batch-averaged.
pub fn scal_loss<T: Scalar>(g: &mut Graph<T>, anchor: Var, positive: Var, negative: Var, tau: f64) -> Result<Var> {
    if tau <= 0.0 {
        bail!(Parameter, "contrastive temperature must be positive, got {tau}");
    }
    let ap = g.cosine(anchor, positive, COSINE_EPS)?;
    let an = g.cosine(anchor, negative, COSINE_EPS)?;
    let d = g.sub(an, ap)?;
    let z = g.affine(d, 1.0 / tau, 0.0)?;
    let l = g.softplus(z)?;
    g.mean(l)
}

fn half_mean_sq_to<T: Scalar>(g: &mut Graph<T>, scores: Var, target: f64) -> Result<Var> {
    let d = g.affine(scores, 1.0, -target)?;
    let sq = g.square(d)?;
    let m = g.mean(sq)?;
    g.affine(m, 0.5, 0.0)
}

/// `0.5 * mean((real - 1)^2) + 0.5 * mean(fake^2)`.
pub fn lsgan_d_loss<T: Scalar>(g: &mut Graph<T>, real: Var, fake: Var) -> Result<Var> {
    let r = half_mean_sq_to(g, real, 1.0)?;
    let f = half_mean_sq_to(g, fake, 0.0)?;
    g.add(r, f)
}

/// `0.5 * mean((fake - 1)^2)`.
pub fn lsgan_g_loss<T: Scalar>(g: &mut Graph<T>, fake: Var) -> Result<Var> {
    half_mean_sq_to(g, fake, 1.0)
}

/// Coefficients of the generator objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub l1: f64,
    pub ms_ssim: f64,
    pub scal: f64,
    pub p_adv: f64,
    pub f_adv: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            l1: 1.0,
            ms_ssim: 1.0,
            scal: 0.01,
            p_adv: 0.5,
            f_adv: 0.5,
        }
    }
}

impl LossWeights {
    pub fn as_array(&self) -> [f64; 5] {
        [self.l1, self.ms_ssim, self.scal, self.p_adv, self.f_adv]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in TERM_NAMES.iter().zip(self.as_array()) {
            if !(w.is_finite() && w >= 0.0) {
                bail!(Parameter, "loss weight {name} must be finite and non-negative, got {w}");
            }
        }
        Ok(())
    }
}

/// Unweighted and weighted value of every term; absent terms were not computed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub terms: [Option<f64>; 5],
    pub weighted: [Option<f64>; 5],
    pub total: f64,
}

impl LossBreakdown {
    pub fn get(&self, name: &str) -> Option<f64> {
        TERM_NAMES.iter().position(|n| *n == name).and_then(|i| self.terms[i])
    }
}

/// Everything the generator objective may consume for one batch.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorLossInputs {
    pub pred: Var,
    pub target: Var,
    /// Patch critic scores on `pred`.
    pub patch_fake: Option<Var>,
    /// Fourier critic scores on `pred`.
    pub fourier_fake: Option<Var>,
    /// Pooled critic features of (enhanced, ground truth, degraded input).
    pub features: Option<(Var, Var, Var)>,
}

/// Weighted generator objective. Terms with zero weight or missing inputs are
/// not built at all, so they contribute nothing to the gradient.
pub fn total_generator_loss<T: Scalar>(
    g: &mut Graph<T>,
    inputs: &GeneratorLossInputs,
    weights: &LossWeights,
    ms_ssim_levels: usize,
) -> Result<(Var, LossBreakdown)> {
    weights.validate()?;
    let w = weights.as_array();
    let mut vars: [Option<Var>; 5] = [None; 5];
    if w[0] > 0.0 {
        vars[0] = Some(l1_loss(g, inputs.pred, inputs.target)?);
    }
    if w[1] > 0.0 {
        vars[1] = Some(ms_ssim_loss(g, inputs.pred, inputs.target, ms_ssim_levels)?);
    }
    if w[2] > 0.0 {
        if let Some((a, p, n)) = inputs.features {
            vars[2] = Some(scal_loss(g, a, p, n, SCAL_TEMPERATURE)?);
        }
    }
    if w[3] > 0.0 {
        if let Some(f) = inputs.patch_fake {
            vars[3] = Some(lsgan_g_loss(g, f)?);
        }
    }
    if w[4] > 0.0 {
        if let Some(f) = inputs.fourier_fake {
            vars[4] = Some(lsgan_g_loss(g, f)?);
        }
    }
    let mut breakdown = LossBreakdown::default();
    let mut sum = Vec::new();
    for i in 0..5 {
        if let Some(v) = vars[i] {
            let value = g.value(v).item().f64();
            breakdown.terms[i] = Some(value);
            breakdown.weighted[i] = Some(w[i] * value);
            sum.push((v, w[i]));
        }
    }
    let total = if sum.is_empty() {
        g.constant(Tensor::scalar(T::zero()))
    } else {
        g.weighted_sum(&sum)?
    };
    breakdown.total = g.value(total).item().f64();
    Ok((total, breakdown))
}
