//! Forward kernels and their vector-Jacobian products.
//!
//! Every function here is a pure function of its arguments. The tape in
//! [`super::graph`] records which kernel produced a node and calls the matching
//! backward routine.

use crate::error::{bail, Result};
use crate::numerics::tensor::{Scalar, Shape, Tensor};

/// Stride, zero padding and group count of a 2-D cross-correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Conv2dSpec {
    pub const fn new(stride: usize, padding: usize, groups: usize) -> Self {
        Self {
            stride,
            padding,
            groups,
        }
    }

    /// Stride-1 "same" padding for an odd kernel.
    pub const fn same(kernel: usize) -> Self {
        Self::new(1, kernel / 2, 1)
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    k: usize,
    ho: usize,
    wo: usize,
    g: usize,
    cin_g: usize,
    cout_g: usize,
    spec: Conv2dSpec,
}

impl ConvGeom {
    fn new(input: Shape, weight: Shape, spec: Conv2dSpec) -> Result<Self> {
        if spec.stride == 0 {
            bail!(Parameter, "conv stride must be at least 1");
        }
        if spec.groups == 0 || !input.c.is_multiple_of(spec.groups) || !weight.n.is_multiple_of(spec.groups) {
            bail!(
                Dimension,
                "channels {} -> {} not divisible by {} groups",
                input.c,
                weight.n,
                spec.groups
            );
        }
        if weight.h != weight.w {
            bail!(Dimension, "only square kernels are supported, got {weight}");
        }
        let cin_g = input.c / spec.groups;
        if weight.c != cin_g {
            bail!(
                Dimension,
                "weight {weight} expects {} input channels per group, input has {cin_g}",
                weight.c
            );
        }
        let k = weight.h;
        let ph = input.h + 2 * spec.padding;
        let pw = input.w + 2 * spec.padding;
        if ph < k || pw < k {
            bail!(Dimension, "kernel {k} larger than padded input {}x{}", ph, pw);
        }
        Ok(Self {
            n: input.n,
            cin: input.c,
            h: input.h,
            w: input.w,
            cout: weight.n,
            k,
            ho: (ph - k) / spec.stride + 1,
            wo: (pw - k) / spec.stride + 1,
            g: spec.groups,
            cin_g,
            cout_g: weight.n / spec.groups,
            spec,
        })
    }

    fn out_shape(&self) -> Shape {
        Shape::new(self.n, self.cout, self.ho, self.wo)
    }

    fn col_rows(&self) -> usize {
        self.cin_g * self.k * self.k
    }

    fn col_cols(&self) -> usize {
        self.ho * self.wo
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.spec.stride == 1 && self.spec.padding == 0
    }
}

/// Output spatial size of a convolution along one axis.
pub fn conv_out_len(len: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (len + 2 * padding - kernel) / stride + 1
}

/// Multiply-accumulates performed by one convolution.
pub fn conv_macs(input: Shape, weight: Shape, spec: Conv2dSpec) -> Result<u64> {
    let g = ConvGeom::new(input, weight, spec)?;
    Ok((g.k * g.k * g.cin_g * g.cout * g.ho * g.wo * g.n) as u64)
}

/// Output columns `lo..hi` whose input column `ox * s - p + kx` lies inside `0..w`.
fn valid_cols(w: usize, wo: usize, s: usize, p: usize, kx: usize) -> (usize, usize) {
    let lo = if p > kx { (p - kx).div_ceil(s) } else { 0 };
    let hi = if w + p > kx {
        ((w - 1 + p - kx) / s + 1).min(wo)
    } else {
        0
    };
    (lo.min(hi), hi)
}

fn im2col<T: Scalar>(src: &[T], geo: &ConvGeom, cols: &mut [T]) {
    let (k, s, p) = (geo.k, geo.spec.stride, geo.spec.padding);
    let hw = geo.col_cols();
    for ci in 0..geo.cin_g {
        let plane = &src[ci * geo.h * geo.w..(ci + 1) * geo.h * geo.w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ci * k + ky) * k + kx) * hw..][..hw];
                let (lo, hi) = valid_cols(geo.w, geo.wo, s, p, kx);
                for oy in 0..geo.ho {
                    let iy = (oy * s + ky) as isize - p as isize;
                    let dst = &mut row[oy * geo.wo..(oy + 1) * geo.wo];
                    if iy < 0 || iy >= geo.h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src_row = &plane[iy as usize * geo.w..(iy as usize + 1) * geo.w];
                    dst[..lo].fill(T::zero());
                    dst[hi..].fill(T::zero());
                    if lo < hi {
                        let start = lo * s + kx - p;
                        if s == 1 {
                            dst[lo..hi].copy_from_slice(&src_row[start..start + hi - lo]);
                        } else {
                            for (d, v) in dst[lo..hi].iter_mut().zip(src_row[start..].iter().step_by(s)) {
                                *d = *v;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], geo: &ConvGeom, dst: &mut [T]) {
    let (k, s, p) = (geo.k, geo.spec.stride, geo.spec.padding);
    let hw = geo.col_cols();
    for ci in 0..geo.cin_g {
        let plane = &mut dst[ci * geo.h * geo.w..(ci + 1) * geo.h * geo.w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ci * k + ky) * k + kx) * hw..][..hw];
                let (lo, hi) = valid_cols(geo.w, geo.wo, s, p, kx);
                if lo >= hi {
                    continue;
                }
                let start = lo * s + kx - p;
                for oy in 0..geo.ho {
                    let iy = (oy * s + ky) as isize - p as isize;
                    if iy < 0 || iy >= geo.h as isize {
                        continue;
                    }
                    let drow = &mut plane[iy as usize * geo.w..(iy as usize + 1) * geo.w];
                    let srow = &row[oy * geo.wo + lo..oy * geo.wo + hi];
                    if s == 1 {
                        for (d, v) in drow[start..start + srow.len()].iter_mut().zip(srow) {
                            *d += *v;
                        }
                    } else {
                        for (d, v) in drow[start..].iter_mut().step_by(s).zip(srow) {
                            *d += *v;
                        }
                    }
                }
            }
        }
    }
}

/// 2-D cross-correlation with zero padding.
///
/// `weight` is laid out as `cout x (cin / groups) x k x k`, `bias` as
/// `1 x cout x 1 x 1`.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: Conv2dSpec,
) -> Result<Tensor<T>> {
    let geo = ConvGeom::new(input.shape(), weight.shape(), spec)?;
    if let Some(b) = bias {
        if b.numel() != geo.cout {
            bail!(Dimension, "bias {} does not match {} outputs", b.shape(), geo.cout);
        }
        b.check_finite("conv bias")?;
    }
    weight.check_finite("conv weight")?;
    input.check_finite("conv input")?;

    let mut out = Tensor::zeros(geo.out_shape());
    let (rows, hw) = (geo.col_rows(), geo.col_cols());
    let mut cols = if geo.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); rows * hw]
    };
    let in_per = geo.cin * geo.h * geo.w;
    let out_per = geo.cout * hw;
    for n in 0..geo.n {
        for gi in 0..geo.g {
            let src = &input.data()[n * in_per + gi * geo.cin_g * geo.h * geo.w..][..geo.cin_g * geo.h * geo.w];
            let b_mat: &[T] = if geo.is_pointwise() {
                src
            } else {
                im2col(src, &geo, &mut cols);
                &cols
            };
            let w_mat = &weight.data()[gi * geo.cout_g * rows..][..geo.cout_g * rows];
            let dst = &mut out.data_mut()[n * out_per + gi * geo.cout_g * hw..][..geo.cout_g * hw];
            T::gemm(
                false,
                false,
                geo.cout_g,
                hw,
                rows,
                T::one(),
                w_mat,
                b_mat,
                T::zero(),
                dst,
            );
        }
        if let Some(b) = bias {
            for co in 0..geo.cout {
                let bv = b.data()[co];
                for v in &mut out.data_mut()[n * out_per + co * hw..][..hw] {
                    *v += bv;
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of a convolution; each is computed only when requested.
pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    spec: Conv2dSpec,
    grad_out: &Tensor<T>,
    want: (bool, bool, bool),
) -> Result<ConvGrads<T>> {
    let geo = ConvGeom::new(input.shape(), weight.shape(), spec)?;
    let (want_in, want_w, want_b) = want;
    let (rows, hw) = (geo.col_rows(), geo.col_cols());
    let in_per = geo.cin * geo.h * geo.w;
    let out_per = geo.cout * hw;
    let mut d_in = want_in.then(|| Tensor::zeros(input.shape()));
    let mut d_w = want_w.then(|| Tensor::zeros(weight.shape()));
    let mut cols = vec![T::zero(); if geo.is_pointwise() { 0 } else { rows * hw }];
    let mut dcols = vec![T::zero(); if want_in && !geo.is_pointwise() { rows * hw } else { 0 }];

    for n in 0..geo.n {
        for gi in 0..geo.g {
            let g_out = &grad_out.data()[n * out_per + gi * geo.cout_g * hw..][..geo.cout_g * hw];
            let w_mat = &weight.data()[gi * geo.cout_g * rows..][..geo.cout_g * rows];
            let src_off = n * in_per + gi * geo.cin_g * geo.h * geo.w;
            let src_len = geo.cin_g * geo.h * geo.w;
            if let Some(dw) = d_w.as_mut() {
                let src = &input.data()[src_off..][..src_len];
                let b_mat: &[T] = if geo.is_pointwise() {
                    src
                } else {
                    im2col(src, &geo, &mut cols);
                    &cols
                };
                let dst = &mut dw.data_mut()[gi * geo.cout_g * rows..][..geo.cout_g * rows];
                // dW += dOut * cols^T
                T::gemm(false, true, geo.cout_g, rows, hw, T::one(), g_out, b_mat, T::one(), dst);
            }
            if let Some(di) = d_in.as_mut() {
                let dst = &mut di.data_mut()[src_off..][..src_len];
                if geo.is_pointwise() {
                    T::gemm(true, false, rows, hw, geo.cout_g, T::one(), w_mat, g_out, T::one(), dst);
                } else {
                    T::gemm(
                        true,
                        false,
                        rows,
                        hw,
                        geo.cout_g,
                        T::one(),
                        w_mat,
                        g_out,
                        T::zero(),
                        &mut dcols,
                    );
                    col2im(&dcols, &geo, dst);
                }
            }
        }
    }
    let d_b = want_b.then(|| {
        let mut db = Tensor::zeros(Shape::new(1, geo.cout, 1, 1));
        for n in 0..geo.n {
            for co in 0..geo.cout {
                let s: T = grad_out.data()[n * out_per + co * hw..][..hw].iter().copied().sum();
                db.data_mut()[co] += s;
            }
        }
        db
    });
    Ok(ConvGrads {
        input: d_in,
        weight: d_w,
        bias: d_b,
    })
}

/// Positive rational resampling factor `num / den`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Scale {
    pub num: usize,
    pub den: usize,
}

impl Scale {
    pub const fn new(num: usize, den: usize) -> Self {
        Self { num, den }
    }

    pub const fn integer(k: usize) -> Self {
        Self::new(k, 1)
    }

    pub fn apply(&self, len: usize) -> Result<usize> {
        if self.num == 0 || self.den == 0 {
            bail!(Parameter, "scale {}/{} must be positive", self.num, self.den);
        }
        if !(len * self.num).is_multiple_of(self.den) {
            bail!(
                Parameter,
                "scale {}/{} maps length {len} to a non-integral size",
                self.num,
                self.den
            );
        }
        Ok(len * self.num / self.den)
    }
}

/// Keys cubic convolution kernel with `a = -0.5`.
pub fn cubic_kernel(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        (A + 2.0) * x * x * x - (A + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        A * x * x * x - 5.0 * A * x * x + 8.0 * A * x - 4.0 * A
    } else {
        0.0
    }
}

/// Four-tap interpolation weights for every output sample along one axis.
#[derive(Clone, Debug)]
pub struct AxisPlan {
    pub in_len: usize,
    pub taps: Vec<[(usize, f64); 4]>,
}

impl AxisPlan {
    /// Half-pixel-centre mapping with edge replication.
    pub fn bicubic(in_len: usize, scale: Scale) -> Result<Self> {
        let out_len = scale.apply(in_len)?;
        let inv = scale.den as f64 / scale.num as f64;
        let last = in_len as isize - 1;
        let taps = (0..out_len)
            .map(|o| {
                let src = (o as f64 + 0.5) * inv - 0.5;
                let base = src.floor();
                let t = src - base;
                let b = base as isize;
                let mut row = [(0usize, 0.0); 4];
                for (j, slot) in row.iter_mut().enumerate() {
                    let off = j as isize - 1;
                    let idx = (b + off).clamp(0, last) as usize;
                    *slot = (idx, cubic_kernel(t - off as f64));
                }
                row
            })
            .collect();
        Ok(Self { in_len, taps })
    }

    pub fn out_len(&self) -> usize {
        self.taps.len()
    }
}

/// Separable resampling plan for both spatial axes.
#[derive(Clone, Debug)]
pub struct ResamplePlan {
    pub rows: AxisPlan,
    pub cols: AxisPlan,
}

impl ResamplePlan {
    pub fn bicubic(h: usize, w: usize, scale: Scale) -> Result<Self> {
        Ok(Self {
            rows: AxisPlan::bicubic(h, scale)?,
            cols: AxisPlan::bicubic(w, scale)?,
        })
    }

    pub fn out_shape(&self, s: Shape) -> Shape {
        s.with_hw(self.rows.out_len(), self.cols.out_len())
    }
}

pub fn resample<T: Scalar>(input: &Tensor<T>, plan: &ResamplePlan) -> Result<Tensor<T>> {
    let s = input.shape();
    if s.h != plan.rows.in_len || s.w != plan.cols.in_len {
        bail!(
            Dimension,
            "resample plan built for {}x{}, got {s}",
            plan.rows.in_len,
            plan.cols.in_len
        );
    }
    let os = plan.out_shape(s);
    let mut out = Tensor::zeros(os);
    let mut tmp = vec![T::zero(); s.h * os.w];
    let wts_c: Vec<[(usize, T); 4]> = plan.cols.taps.iter().map(|r| r.map(|(i, w)| (i, T::of(w)))).collect();
    let wts_r: Vec<[(usize, T); 4]> = plan.rows.taps.iter().map(|r| r.map(|(i, w)| (i, T::of(w)))).collect();
    for n in 0..s.n {
        for c in 0..s.c {
            let src = input.plane(n, c);
            for y in 0..s.h {
                let row = &src[y * s.w..(y + 1) * s.w];
                for (x, taps) in wts_c.iter().enumerate() {
                    tmp[y * os.w + x] = taps.iter().map(|&(i, w)| w * row[i]).sum();
                }
            }
            let dst = out.plane_mut(n, c);
            for (y, taps) in wts_r.iter().enumerate() {
                for x in 0..os.w {
                    dst[y * os.w + x] = taps.iter().map(|&(i, w)| w * tmp[i * os.w + x]).sum();
                }
            }
        }
    }
    Ok(out)
}

pub fn resample_backward<T: Scalar>(grad_out: &Tensor<T>, in_shape: Shape, plan: &ResamplePlan) -> Tensor<T> {
    let os = grad_out.shape();
    let mut d_in = Tensor::zeros(in_shape);
    let mut tmp = vec![T::zero(); in_shape.h * os.w];
    for n in 0..os.n {
        for c in 0..os.c {
            tmp.fill(T::zero());
            let g = grad_out.plane(n, c);
            for (y, taps) in plan.rows.taps.iter().enumerate() {
                for &(i, w) in taps {
                    let w = T::of(w);
                    for x in 0..os.w {
                        tmp[i * os.w + x] += w * g[y * os.w + x];
                    }
                }
            }
            let dst = d_in.plane_mut(n, c);
            for y in 0..in_shape.h {
                for (x, taps) in plan.cols.taps.iter().enumerate() {
                    let gv = tmp[y * os.w + x];
                    for &(i, w) in taps {
                        dst[y * in_shape.w + i] += T::of(w) * gv;
                    }
                }
            }
        }
    }
    d_in
}

/// Bicubic (`a = -0.5`) resampling by a rational factor.
pub fn bicubic_resample<T: Scalar>(input: &Tensor<T>, scale: Scale) -> Result<Tensor<T>> {
    let s = input.shape();
    resample(input, &ResamplePlan::bicubic(s.h, s.w, scale)?)
}

/// Pointwise nonlinearities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    /// Negative slope fixed at 0.2.
    LeakyRelu,
    Sigmoid,
    Tanh,
}

pub const LEAKY_SLOPE: f64 = 0.2;

impl Activation {
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Self::Relu => x.max(T::zero()),
            Self::LeakyRelu => {
                if x > T::zero() {
                    x
                } else {
                    x * T::of(LEAKY_SLOPE)
                }
            }
            Self::Sigmoid => T::one() / (T::one() + (-x).exp()),
            Self::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    pub fn derivative<T: Scalar>(self, x: T, y: T) -> T {
        match self {
            Self::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Self::LeakyRelu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::of(LEAKY_SLOPE)
                }
            }
            Self::Sigmoid => y * (T::one() - y),
            Self::Tanh => T::one() - y * y,
        }
    }
}

pub fn activation<T: Scalar>(kind: Activation, input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| kind.apply(v))
}

/// Per-channel spatial mean, `N x C x 1 x 1`.
pub fn global_avg_pool<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let s = input.shape();
    if s.h == 0 || s.w == 0 {
        bail!(Dimension, "cannot pool an empty plane {s}");
    }
    let inv = T::of(1.0 / s.plane() as f64);
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, 1, 1));
    for n in 0..s.n {
        for c in 0..s.c {
            let sum: T = input.plane(n, c).iter().copied().sum();
            out.data_mut()[n * s.c + c] = sum * inv;
        }
    }
    Ok(out)
}

/// 2x2 mean pooling with stride 2; odd trailing rows/columns are dropped.
pub fn avg_pool2<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let s = input.shape();
    let (ho, wo) = (s.h / 2, s.w / 2);
    let q = T::of(0.25);
    let mut out = Tensor::zeros(s.with_hw(ho, wo));
    for n in 0..s.n {
        for c in 0..s.c {
            let src = input.plane(n, c);
            let dst = out.plane_mut(n, c);
            for y in 0..ho {
                for x in 0..wo {
                    let a = src[2 * y * s.w + 2 * x] + src[2 * y * s.w + 2 * x + 1];
                    let b = src[(2 * y + 1) * s.w + 2 * x] + src[(2 * y + 1) * s.w + 2 * x + 1];
                    dst[y * wo + x] = (a + b) * q;
                }
            }
        }
    }
    out
}

pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Rec. 601 luma of an RGB tensor.
pub fn grayscale<T: Scalar>(rgb: &Tensor<T>) -> Result<Tensor<T>> {
    let s = rgb.shape();
    if s.c != 3 {
        bail!(Dimension, "grayscale expects 3 channels, got {}", s.c);
    }
    let w = LUMA.map(T::of);
    let mut out = Tensor::zeros(s.with_c(1));
    for n in 0..s.n {
        let (r, g, b) = (rgb.plane(n, 0), rgb.plane(n, 1), rgb.plane(n, 2));
        for (i, d) in out.plane_mut(n, 0).iter_mut().enumerate() {
            *d = w[0] * r[i] + w[1] * g[i] + w[2] * b[i];
        }
    }
    Ok(out)
}

/// Concatenates along the channel axis.
pub fn concat_channels<T: Scalar>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| crate::Error::Dimension("concat of zero tensors".into()))?
        .shape();
    let mut c = 0;
    for p in parts {
        let s = p.shape();
        if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
            bail!(Dimension, "cannot concat {s} with {first}");
        }
        c += s.c;
    }
    let out_shape = first.with_c(c);
    let mut data = Vec::with_capacity(out_shape.numel());
    for n in 0..first.n {
        for p in parts {
            let per = p.shape().c * first.plane();
            data.extend_from_slice(&p.data()[n * per..(n + 1) * per]);
        }
    }
    Tensor::from_vec(out_shape, data)
}

/// Channels `start..start + len`.
pub fn slice_channels<T: Scalar>(input: &Tensor<T>, start: usize, len: usize) -> Result<Tensor<T>> {
    let s = input.shape();
    if start + len > s.c || len == 0 {
        bail!(Dimension, "channel slice {start}..{} out of range for {s}", start + len);
    }
    let p = s.plane();
    let mut data = Vec::with_capacity(s.n * len * p);
    for n in 0..s.n {
        data.extend_from_slice(&input.data()[(n * s.c + start) * p..(n * s.c + start + len) * p]);
    }
    Tensor::from_vec(s.with_c(len), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Shape, v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn pointwise_identity_conv() {
        let x = Tensor::from_fn(Shape::new(2, 1, 3, 5), |n, _, y, x| (n * 100 + y * 10 + x) as f64);
        let w = Tensor::full(Shape::new(1, 1, 1, 1), 1.0);
        let b = Tensor::zeros(Shape::new(1, 1, 1, 1));
        let out = conv2d(&x, &w, Some(&b), Conv2dSpec::new(1, 0, 1)).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn all_ones_kernel_counts_overlap() {
        let x = Tensor::<f32>::full(Shape::new(1, 1, 4, 4), 1.0);
        let w = Tensor::full(Shape::new(1, 1, 3, 3), 1.0);
        let out = conv2d(&x, &w, None, Conv2dSpec::same(3)).unwrap();
        let expect = [4., 6., 6., 4., 6., 9., 9., 6., 6., 9., 9., 6., 4., 6., 6., 4.];
        assert_eq!(out.data(), &expect);
    }

    #[test]
    fn conv_shape_errors() {
        let x = Tensor::<f32>::zeros(Shape::new(1, 3, 4, 4));
        let w = Tensor::zeros(Shape::new(4, 2, 3, 3));
        assert!(conv2d(&x, &w, None, Conv2dSpec::new(1, 1, 1)).is_err());
        let w = Tensor::zeros(Shape::new(4, 3, 3, 3));
        assert!(conv2d(&x, &w, None, Conv2dSpec::new(0, 1, 1)).is_err());
        assert!(conv2d(&x, &w, None, Conv2dSpec::new(1, 1, 2)).is_err());
    }

    #[test]
    fn non_finite_weight_rejected() {
        let x = Tensor::<f32>::zeros(Shape::new(1, 1, 4, 4));
        let mut w = Tensor::zeros(Shape::new(1, 1, 3, 3));
        w.data_mut()[4] = f32::NAN;
        assert!(matches!(
            conv2d(&x, &w, None, Conv2dSpec::same(3)),
            Err(crate::Error::Numeric(_))
        ));
    }

    #[test]
    fn cubic_kernel_partition_of_unity() {
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            let s: f64 = (-1..=2).map(|j| cubic_kernel(t - j as f64)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(cubic_kernel(0.0), 1.0);
        assert_eq!(cubic_kernel(1.0), 0.0);
        assert_eq!(cubic_kernel(2.0), 0.0);
    }

    #[test]
    fn resample_scale_one_is_identity() {
        let x = Tensor::from_fn(Shape::new(1, 2, 5, 3), |_, c, y, x| (c + y * y + 3 * x) as f64);
        assert_eq!(bicubic_resample(&x, Scale::integer(1)).unwrap(), x);
    }

    #[test]
    fn resample_constant_and_bad_scale() {
        let x = Tensor::full(Shape::new(1, 1, 6, 4), 0.3f64);
        let up = bicubic_resample(&x, Scale::integer(2)).unwrap();
        assert_eq!(up.shape(), Shape::new(1, 1, 12, 8));
        assert!(up.data().iter().all(|v| (v - 0.3).abs() < 1e-12));
        assert!(bicubic_resample(&x, Scale::new(2, 3)).is_err());
        let down = bicubic_resample(&x, Scale::new(1, 2)).unwrap();
        assert_eq!(down.shape(), Shape::new(1, 1, 3, 2));
    }

    #[test]
    fn activation_values() {
        let x = t(Shape::new(1, 1, 1, 3), &[-1.0, 0.0, 2.0]);
        assert_eq!(activation(Activation::Relu, &x).data(), &[0.0, 0.0, 2.0]);
        assert_eq!(Activation::Sigmoid.apply(0.0f64), 0.5);
        assert_eq!(Activation::LeakyRelu.apply(-10.0f64), -2.0);
        assert_eq!(Activation::Tanh.apply(0.0f32), 0.0);
    }

    #[test]
    fn pooling_values() {
        let x = t(Shape::new(1, 1, 2, 2), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(global_avg_pool(&x).unwrap().item(), 2.5);
        assert_eq!(avg_pool2(&x).item(), 2.5);
        let c = Tensor::full(Shape::new(2, 3, 5, 7), 0.7f64);
        let p = global_avg_pool(&c).unwrap();
        assert!(p.data().iter().all(|v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn grayscale_weights() {
        let white = Tensor::full(Shape::new(1, 3, 1, 1), 1.0f64);
        assert!((grayscale(&white).unwrap().item() - 1.0).abs() < 1e-15);
        let green = t(Shape::new(1, 3, 1, 1), &[0.0, 1.0, 0.0]);
        assert_eq!(grayscale(&green).unwrap().item(), 0.587);
        assert!(grayscale(&Tensor::<f32>::zeros(Shape::new(1, 4, 2, 2))).is_err());
    }

    #[test]
    fn concat_slice_roundtrip() {
        let x = Tensor::from_fn(Shape::new(2, 5, 2, 3), |n, c, y, x| {
            (n * 1000 + c * 100 + y * 10 + x) as f32
        });
        let a = slice_channels(&x, 0, 2).unwrap();
        let b = slice_channels(&x, 2, 3).unwrap();
        assert_eq!(concat_channels(&[&a, &b]).unwrap(), x);
        assert!(slice_channels(&x, 4, 2).is_err());
    }
}
