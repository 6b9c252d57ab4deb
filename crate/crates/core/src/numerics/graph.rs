//! Reverse-mode differentiation over a linear tape.
//!
//! A [`Graph`] owns every intermediate value of one forward pass. Each node
//! keeps the operation that produced it together with references to its
//! inputs, so [`Graph::backward`] can replay the tape in reverse and
//! [`Graph::replay`] can recompute any node from its recorded inputs.

use std::collections::HashMap;

use crate::error::{bail, Result};
use crate::nn::{ParamId, ParamStore};
use crate::numerics::fft::SpectrumFeatures;
use crate::numerics::ops::{self, Activation, Conv2dSpec, ResamplePlan, Scale};
use crate::numerics::tensor::{Scalar, Shape, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation that produced a node, with the inputs needed to differentiate it.
#[derive(Clone, Debug)]
pub enum Op<T: Scalar> {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        spec: Conv2dSpec,
    },
    Resample {
        input: Var,
        plan: Box<ResamplePlan>,
    },
    Activation {
        input: Var,
        kind: Activation,
    },
    GlobalAvgPool(Var),
    AvgPool2(Var),
    Grayscale(Var),
    Concat(Vec<Var>),
    Slice {
        input: Var,
        start: usize,
        len: usize,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    /// `x * gate` with `gate` of shape `N x C x 1 x 1`.
    ScaleChannels {
        x: Var,
        gate: Var,
    },
    /// `x * mul + add`.
    Affine {
        input: Var,
        mul: T,
        add: T,
    },
    Square(Var),
    Abs(Var),
    Ln(Var),
    Powf {
        input: Var,
        exponent: T,
    },
    ClampMin {
        input: Var,
        min: T,
    },
    Softplus(Var),
    /// Mean over every element, producing a scalar.
    Mean(Var),
    /// Per-sample mean, producing `N x 1 x 1 x 1`.
    SampleMean(Var),
    /// Cosine similarity of per-sample channel vectors, `N x 1 x 1 x 1`.
    Cosine {
        a: Var,
        b: Var,
        eps: T,
    },
    /// Centred log-magnitude and phase planes: `N x C x H x W -> N x 2C x H x W`.
    Spectrum(Var),
    /// Weighted sum of same-shaped nodes.
    WeightedSum(Vec<(Var, T)>),
}

impl<T: Scalar> Op<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::Resample { .. } => "resample",
            Op::Activation { .. } => "activation",
            Op::GlobalAvgPool(_) => "global_avg_pool",
            Op::AvgPool2(_) => "avg_pool2",
            Op::Grayscale(_) => "grayscale",
            Op::Concat(_) => "concat",
            Op::Slice { .. } => "slice",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::ScaleChannels { .. } => "scale_channels",
            Op::Affine { .. } => "affine",
            Op::Square(_) => "square",
            Op::Abs(_) => "abs",
            Op::Ln(_) => "ln",
            Op::Powf { .. } => "powf",
            Op::ClampMin { .. } => "clamp_min",
            Op::Softplus(_) => "softplus",
            Op::Mean(_) => "mean",
            Op::SampleMean(_) => "sample_mean",
            Op::Cosine { .. } => "cosine",
            Op::Spectrum(_) => "spectrum",
            Op::WeightedSum(_) => "weighted_sum",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Conv2d {
                input, weight, bias, ..
            } => {
                let mut v = vec![*input, *weight];
                v.extend(bias);
                v
            }
            Op::Resample { input, .. }
            | Op::Activation { input, .. }
            | Op::Slice { input, .. }
            | Op::Affine { input, .. }
            | Op::Powf { input, .. }
            | Op::ClampMin { input, .. } => vec![*input],
            Op::GlobalAvgPool(x)
            | Op::AvgPool2(x)
            | Op::Grayscale(x)
            | Op::Square(x)
            | Op::Abs(x)
            | Op::Ln(x)
            | Op::Softplus(x)
            | Op::Mean(x)
            | Op::SampleMean(x)
            | Op::Spectrum(x) => vec![*x],
            Op::Concat(xs) => xs.clone(),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => vec![*a, *b],
            Op::ScaleChannels { x, gate } => vec![*x, *gate],
            Op::Cosine { a, b, .. } => vec![*a, *b],
            Op::WeightedSum(terms) => terms.iter().map(|t| t.0).collect(),
        }
    }
}

/// Intermediates kept for the backward pass beyond the input values.
#[derive(Clone, Debug)]
enum Saved {
    None,
    Spectrum(Vec<SpectrumFeatures>),
}

#[derive(Clone, Debug)]
struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
    saved: Saved,
    needs_grad: bool,
}

/// Tape of one forward computation.
#[derive(Debug)]
pub struct Graph<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    params: HashMap<(u32, usize), Var>,
    macs: u64,
    conv_trace: Vec<Shape>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn same_shape<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        bail!(Dimension, "{what}: {} vs {}", a.shape(), b.shape());
    }
    Ok(())
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
            macs: 0,
            conv_trace: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    /// Every node in recording order.
    pub fn vars(&self) -> impl Iterator<Item = Var> {
        (0..self.nodes.len()).map(Var)
    }

    pub fn op(&self, v: Var) -> &Op<T> {
        &self.nodes[v.0].op
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Multiply-accumulates executed by convolutions recorded on this tape.
    pub fn macs(&self) -> u64 {
        self.macs
    }

    /// Output shape of every convolution in recording order.
    pub fn conv_trace(&self) -> &[Shape] {
        &self.conv_trace
    }

    /// Constant input (no gradient).
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// Input whose gradient will be computed.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    fn leaf(&mut self, value: Tensor<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            saved: Saved::None,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Binds a stored parameter as a leaf; repeated binds return the same node.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId, trainable: bool) -> Var {
        let key = (store.tag(), id.index());
        if let Some(&v) = self.params.get(&key) {
            return v;
        }
        let v = self.leaf(store.get(id).clone(), trainable);
        self.params.insert(key, v);
        v
    }

    /// Routes later binds of parameter `id` to an existing node.
    pub fn bind_param(&mut self, store: &ParamStore<T>, id: ParamId, v: Var) {
        self.params.insert((store.tag(), id.index()), v);
    }

    /// Leaf node bound to parameter `id` of `store`, if any.
    pub fn param_var(&self, store: &ParamStore<T>, id: ParamId) -> Option<Var> {
        self.params.get(&(store.tag(), id.index())).copied()
    }

    /// Copies a node's value into a fresh constant leaf.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    fn eval(&self, op: &Op<T>) -> Result<(Tensor<T>, Saved)> {
        let val = |v: &Var| &self.nodes[v.0].value;
        let out = match op {
            Op::Leaf => bail!(Parameter, "leaf nodes cannot be evaluated"),
            Op::Conv2d {
                input,
                weight,
                bias,
                spec,
            } => ops::conv2d(val(input), val(weight), bias.as_ref().map(val), *spec)?,
            Op::Resample { input, plan } => ops::resample(val(input), plan)?,
            Op::Activation { input, kind } => ops::activation(*kind, val(input)),
            Op::GlobalAvgPool(x) => ops::global_avg_pool(val(x))?,
            Op::AvgPool2(x) => ops::avg_pool2(val(x)),
            Op::Grayscale(x) => ops::grayscale(val(x))?,
            Op::Concat(xs) => {
                let parts: Vec<_> = xs.iter().map(val).collect();
                ops::concat_channels(&parts)?
            }
            Op::Slice { input, start, len } => ops::slice_channels(val(input), *start, *len)?,
            Op::Add(a, b) => {
                same_shape(val(a), val(b), "add")?;
                val(a).zip_map(val(b), |x, y| x + y)
            }
            Op::Sub(a, b) => {
                same_shape(val(a), val(b), "sub")?;
                val(a).zip_map(val(b), |x, y| x - y)
            }
            Op::Mul(a, b) => {
                same_shape(val(a), val(b), "mul")?;
                val(a).zip_map(val(b), |x, y| x * y)
            }
            Op::Div(a, b) => {
                same_shape(val(a), val(b), "div")?;
                val(a).zip_map(val(b), |x, y| x / y)
            }
            Op::ScaleChannels { x, gate } => {
                let (xs, gs) = (val(x).shape(), val(gate).shape());
                if gs != Shape::new(xs.n, xs.c, 1, 1) {
                    bail!(Dimension, "gate {gs} cannot scale {xs}");
                }
                let mut out = val(x).clone();
                for n in 0..xs.n {
                    for c in 0..xs.c {
                        let g = val(gate).data()[n * xs.c + c];
                        for v in out.plane_mut(n, c) {
                            *v *= g;
                        }
                    }
                }
                out
            }
            Op::Affine { input, mul, add } => val(input).map(|x| x * *mul + *add),
            Op::Square(x) => val(x).map(|v| v * v),
            Op::Abs(x) => val(x).map(|v| v.abs()),
            Op::Ln(x) => val(x).map(|v| v.ln()),
            Op::Powf { input, exponent } => val(input).map(|v| v.powf(*exponent)),
            Op::ClampMin { input, min } => val(input).map(|v| v.max(*min)),
            Op::Softplus(x) => val(x).map(softplus),
            Op::Mean(x) => Tensor::scalar(val(x).mean()),
            Op::SampleMean(x) => {
                let s = val(x).shape();
                let per = s.c * s.plane();
                let data = val(x)
                    .data()
                    .chunks(per)
                    .map(|c| c.iter().copied().sum::<T>() / T::of(per as f64))
                    .collect();
                Tensor::from_vec(Shape::new(s.n, 1, 1, 1), data)?
            }
            Op::Cosine { a, b, eps } => {
                same_shape(val(a), val(b), "cosine")?;
                let s = val(a).shape();
                let per = s.c * s.plane();
                let data = (0..s.n)
                    .map(|n| {
                        let (x, y) = (&val(a).data()[n * per..][..per], &val(b).data()[n * per..][..per]);
                        let (dot, nx, ny) = cosine_parts(x, y);
                        dot / (nx * ny).max(*eps)
                    })
                    .collect();
                Tensor::from_vec(Shape::new(s.n, 1, 1, 1), data)?
            }
            Op::Spectrum(x) => {
                let s = val(x).shape();
                let mut out = Tensor::zeros(s.with_c(2 * s.c));
                let mut feats = Vec::with_capacity(s.n * s.c);
                for n in 0..s.n {
                    for c in 0..s.c {
                        let plane: Vec<f64> = val(x).plane(n, c).iter().map(|v| v.f64()).collect();
                        let f = SpectrumFeatures::compute(&plane, s.h, s.w)?;
                        for (d, &m) in out.plane_mut(n, c).iter_mut().zip(&f.magnitude) {
                            *d = T::of(m);
                        }
                        for (d, &p) in out.plane_mut(n, s.c + c).iter_mut().zip(&f.phase) {
                            *d = T::of(p);
                        }
                        feats.push(f);
                    }
                }
                return Ok((out, Saved::Spectrum(feats)));
            }
            Op::WeightedSum(terms) => {
                let (first, _) = terms
                    .first()
                    .ok_or_else(|| crate::Error::Dimension("empty weighted sum".into()))?;
                let mut out = Tensor::zeros(val(first).shape());
                for (v, w) in terms {
                    same_shape(&out, val(v), "weighted_sum")?;
                    for (o, &x) in out.data_mut().iter_mut().zip(val(v).data()) {
                        *o += *w * x;
                    }
                }
                out
            }
        };
        Ok((out, Saved::None))
    }

    fn record(&mut self, op: Op<T>) -> Result<Var> {
        let (value, saved) = self.eval(&op)?;
        value.check_finite(op.name())?;
        if let Op::Conv2d {
            input, weight, spec, ..
        } = &op
        {
            self.macs += ops::conv_macs(self.shape(*input), self.shape(*weight), *spec)?;
            self.conv_trace.push(value.shape());
        }
        let needs_grad = op.inputs().iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            saved,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Recomputes node `v` from the recorded values of its inputs.
    pub fn replay(&self, v: Var) -> Result<Tensor<T>> {
        let node = &self.nodes[v.0];
        if matches!(node.op, Op::Leaf) {
            return Ok(node.value.clone());
        }
        Ok(self.eval(&node.op)?.0)
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, spec: Conv2dSpec) -> Result<Var> {
        self.record(Op::Conv2d {
            input,
            weight,
            bias,
            spec,
        })
    }

    pub fn resample(&mut self, input: Var, scale: Scale) -> Result<Var> {
        let s = self.shape(input);
        let plan = Box::new(ResamplePlan::bicubic(s.h, s.w, scale)?);
        self.record(Op::Resample { input, plan })
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Result<Var> {
        self.record(Op::Activation { input, kind })
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Relu)
    }

    pub fn leaky_relu(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::LeakyRelu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        self.record(Op::GlobalAvgPool(x))
    }

    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        self.record(Op::AvgPool2(x))
    }

    pub fn grayscale(&mut self, x: Var) -> Result<Var> {
        self.record(Op::Grayscale(x))
    }

    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.len() == 1 {
            return Ok(xs[0]);
        }
        self.record(Op::Concat(xs.to_vec()))
    }

    pub fn slice(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        if start == 0 && len == self.shape(input).c {
            return Ok(input);
        }
        self.record(Op::Slice { input, start, len })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Div(a, b))
    }

    pub fn scale_channels(&mut self, x: Var, gate: Var) -> Result<Var> {
        self.record(Op::ScaleChannels { x, gate })
    }

    pub fn affine(&mut self, input: Var, mul: f64, add: f64) -> Result<Var> {
        self.record(Op::Affine {
            input,
            mul: T::of(mul),
            add: T::of(add),
        })
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.record(Op::Square(x))
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        self.record(Op::Abs(x))
    }

    pub fn ln(&mut self, x: Var) -> Result<Var> {
        self.record(Op::Ln(x))
    }

    pub fn powf(&mut self, input: Var, exponent: f64) -> Result<Var> {
        self.record(Op::Powf {
            input,
            exponent: T::of(exponent),
        })
    }

    pub fn clamp_min(&mut self, input: Var, min: f64) -> Result<Var> {
        self.record(Op::ClampMin { input, min: T::of(min) })
    }

    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        self.record(Op::Softplus(x))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.record(Op::Mean(x))
    }

    pub fn sample_mean(&mut self, x: Var) -> Result<Var> {
        self.record(Op::SampleMean(x))
    }

    pub fn cosine(&mut self, a: Var, b: Var, eps: f64) -> Result<Var> {
        self.record(Op::Cosine { a, b, eps: T::of(eps) })
    }

    pub fn spectrum(&mut self, x: Var) -> Result<Var> {
        self.record(Op::Spectrum(x))
    }

    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        self.record(Op::WeightedSum(terms.iter().map(|&(v, w)| (v, T::of(w))).collect()))
    }

    /// Gradients of the scalar node `loss` with respect to every node that
    /// depends on a gradient-requiring leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).numel() != 1 {
            bail!(Dimension, "backward needs a scalar loss, got {}", self.shape(loss));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(self.shape(loss), T::one()));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            for (input, dg) in self.vjp(node, &g)? {
                if !self.nodes[input.0].needs_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&dg),
                    slot @ None => *slot = Some(dg),
                }
            }
            if i == loss.0 {
                grads[i] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }

    fn vjp(&self, node: &Node<T>, g: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let val = |v: &Var| &self.nodes[v.0].value;
        let wants = |v: &Var| self.nodes[v.0].needs_grad;
        let y = &node.value;
        let out = match &node.op {
            Op::Leaf => vec![],
            Op::Conv2d {
                input,
                weight,
                bias,
                spec,
            } => {
                let want_b = bias.as_ref().is_some_and(wants);
                let r = ops::conv2d_backward(val(input), val(weight), *spec, g, (wants(input), wants(weight), want_b))?;
                let mut v = Vec::new();
                if let Some(t) = r.input {
                    v.push((*input, t));
                }
                if let Some(t) = r.weight {
                    v.push((*weight, t));
                }
                if let (Some(b), Some(t)) = (bias, r.bias) {
                    v.push((*b, t));
                }
                v
            }
            Op::Resample { input, plan } => {
                vec![(*input, ops::resample_backward(g, val(input).shape(), plan))]
            }
            Op::Activation { input, kind } => {
                let x = val(input);
                let mut d = g.clone();
                for ((d, &xv), &yv) in d.data_mut().iter_mut().zip(x.data()).zip(y.data()) {
                    *d *= kind.derivative(xv, yv);
                }
                vec![(*input, d)]
            }
            Op::GlobalAvgPool(x) => {
                let s = val(x).shape();
                let inv = T::of(1.0 / s.plane() as f64);
                let mut d = Tensor::zeros(s);
                for n in 0..s.n {
                    for c in 0..s.c {
                        let gv = g.data()[n * s.c + c] * inv;
                        d.plane_mut(n, c).fill(gv);
                    }
                }
                vec![(*x, d)]
            }
            Op::AvgPool2(x) => {
                let s = val(x).shape();
                let os = g.shape();
                let q = T::of(0.25);
                let mut d = Tensor::zeros(s);
                for n in 0..s.n {
                    for c in 0..s.c {
                        let gp = g.plane(n, c);
                        let dp = d.plane_mut(n, c);
                        for yy in 0..os.h {
                            for xx in 0..os.w {
                                let gv = gp[yy * os.w + xx] * q;
                                dp[2 * yy * s.w + 2 * xx] = gv;
                                dp[2 * yy * s.w + 2 * xx + 1] = gv;
                                dp[(2 * yy + 1) * s.w + 2 * xx] = gv;
                                dp[(2 * yy + 1) * s.w + 2 * xx + 1] = gv;
                            }
                        }
                    }
                }
                vec![(*x, d)]
            }
            Op::Grayscale(x) => {
                let s = val(x).shape();
                let w = ops::LUMA.map(T::of);
                let mut d = Tensor::zeros(s);
                for n in 0..s.n {
                    let gp = g.plane(n, 0).to_vec();
                    for (c, wc) in w.iter().enumerate() {
                        for (dv, &gv) in d.plane_mut(n, c).iter_mut().zip(&gp) {
                            *dv = *wc * gv;
                        }
                    }
                }
                vec![(*x, d)]
            }
            Op::Concat(xs) => {
                let mut start = 0;
                let mut v = Vec::with_capacity(xs.len());
                for x in xs {
                    let c = val(x).shape().c;
                    if wants(x) {
                        v.push((*x, ops::slice_channels(g, start, c)?));
                    }
                    start += c;
                }
                v
            }
            Op::Slice { input, start, len } => {
                let s = val(input).shape();
                let mut d = Tensor::zeros(s);
                for n in 0..s.n {
                    for c in 0..*len {
                        d.plane_mut(n, start + c).copy_from_slice(g.plane(n, c));
                    }
                }
                vec![(*input, d)]
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|v| -v))],
            Op::Mul(a, b) => vec![
                (*a, g.zip_map(val(b), |gv, bv| gv * bv)),
                (*b, g.zip_map(val(a), |gv, av| gv * av)),
            ],
            Op::Div(a, b) => {
                let (av, bv) = (val(a), val(b));
                let da = g.zip_map(bv, |gv, b| gv / b);
                let mut db = g.clone();
                for ((d, &a), &b) in db.data_mut().iter_mut().zip(av.data()).zip(bv.data()) {
                    *d = -*d * a / (b * b);
                }
                vec![(*a, da), (*b, db)]
            }
            Op::ScaleChannels { x, gate } => {
                let (xv, gv) = (val(x), val(gate));
                let s = xv.shape();
                let mut dx = g.clone();
                let mut dg = Tensor::zeros(gv.shape());
                for n in 0..s.n {
                    for c in 0..s.c {
                        let k = n * s.c + c;
                        dg.data_mut()[k] = g.plane(n, c).iter().zip(xv.plane(n, c)).map(|(&a, &b)| a * b).sum();
                        let gate_v = gv.data()[k];
                        for d in dx.plane_mut(n, c) {
                            *d *= gate_v;
                        }
                    }
                }
                vec![(*x, dx), (*gate, dg)]
            }
            Op::Affine { input, mul, .. } => vec![(*input, g.map(|v| v * *mul))],
            Op::Square(x) => vec![(*x, g.zip_map(val(x), |gv, xv| gv * (xv + xv)))],
            Op::Abs(x) => vec![(*x, g.zip_map(val(x), |gv, xv| gv * sign(xv)))],
            Op::Ln(x) => vec![(*x, g.zip_map(val(x), |gv, xv| gv / xv))],
            Op::Powf { input, exponent } => {
                let e = *exponent;
                vec![(*input, g.zip_map(val(input), |gv, xv| gv * e * xv.powf(e - T::one())))]
            }
            Op::ClampMin { input, min } => {
                let m = *min;
                vec![(
                    *input,
                    g.zip_map(val(input), |gv, xv| if xv > m { gv } else { T::zero() }),
                )]
            }
            Op::Softplus(x) => vec![(*x, g.zip_map(val(x), |gv, xv| gv * sigmoid(xv)))],
            Op::Mean(x) => {
                let s = val(x).shape();
                let gv = g.item() / T::of(s.numel() as f64);
                vec![(*x, Tensor::full(s, gv))]
            }
            Op::SampleMean(x) => {
                let s = val(x).shape();
                let per = s.c * s.plane();
                let mut d = Tensor::zeros(s);
                for (n, chunk) in d.data_mut().chunks_mut(per).enumerate() {
                    chunk.fill(g.data()[n] / T::of(per as f64));
                }
                vec![(*x, d)]
            }
            Op::Cosine { a, b, eps } => {
                let (av, bv) = (val(a), val(b));
                let s = av.shape();
                let per = s.c * s.plane();
                let mut da = Tensor::zeros(s);
                let mut db = Tensor::zeros(s);
                for n in 0..s.n {
                    let (x, z) = (&av.data()[n * per..][..per], &bv.data()[n * per..][..per]);
                    let (dot, nx, nz) = cosine_parts(x, z);
                    let gn = g.data()[n];
                    let denom = nx * nz;
                    let (dx, dz) = (
                        &mut da.data_mut()[n * per..][..per],
                        &mut db.data_mut()[n * per..][..per],
                    );
                    if denom > *eps {
                        let c = dot / denom;
                        for i in 0..per {
                            dx[i] = gn * (z[i] / denom - c * x[i] / (nx * nx));
                            dz[i] = gn * (x[i] / denom - c * z[i] / (nz * nz));
                        }
                    } else {
                        for i in 0..per {
                            dx[i] = gn * z[i] / *eps;
                            dz[i] = gn * x[i] / *eps;
                        }
                    }
                }
                vec![(*a, da), (*b, db)]
            }
            Op::Spectrum(x) => {
                let Saved::Spectrum(feats) = &node.saved else {
                    bail!(Parameter, "spectrum node lost its saved features");
                };
                let s = val(x).shape();
                let mut d = Tensor::zeros(s);
                for n in 0..s.n {
                    for c in 0..s.c {
                        let gm: Vec<f64> = g.plane(n, c).iter().map(|v| v.f64()).collect();
                        let gp: Vec<f64> = g.plane(n, s.c + c).iter().map(|v| v.f64()).collect();
                        let dx = feats[n * s.c + c].backward(&gm, &gp);
                        for (dv, v) in d.plane_mut(n, c).iter_mut().zip(dx) {
                            *dv = T::of(v);
                        }
                    }
                }
                vec![(*x, d)]
            }
            Op::WeightedSum(terms) => terms
                .iter()
                .filter(|(v, _)| wants(v))
                .map(|(v, w)| (*v, g.map(|gv| gv * *w)))
                .collect(),
        };
        Ok(out)
    }
}

fn sign<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn softplus<T: Scalar>(x: T) -> T {
    // log(1 + e^x) without overflow
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

fn cosine_parts<T: Scalar>(x: &[T], y: &[T]) -> (T, T, T) {
    let dot = x.iter().zip(y).map(|(&a, &b)| a * b).sum();
    let nx = x.iter().map(|&a| a * a).sum::<T>().sqrt();
    let ny = y.iter().map(|&b| b * b).sum::<T>().sqrt();
    (dot, nx, ny)
}

/// Result of [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for each parameter of `store` bound on `graph`, in id order.
    pub fn for_store(&self, graph: &Graph<T>, store: &ParamStore<T>) -> Vec<Option<Tensor<T>>> {
        store
            .ids()
            .map(|id| graph.param_var(store, id).and_then(|v| self.get(v).cloned()))
            .collect()
    }
}
