//! Named parameter storage and the convolution layer shared by every network.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicU32, Ordering};

use rand::Rng;

use crate::analysis::macs::MacReport;
use crate::error::{bail, Result};
use crate::numerics::graph::{Graph, Var};
use crate::numerics::ops::{conv_macs, conv_out_len, Conv2dSpec};
use crate::numerics::tensor::{Scalar, Shape, Tensor};

static NEXT_TAG: AtomicU32 = AtomicU32::new(1);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered, named set of learnable tensors for one network.
#[derive(Clone, Debug)]
pub struct ParamStore<T: Scalar = f32> {
    tag: u32,
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            tag: NEXT_TAG.fetch_add(1, Ordering::Relaxed),
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Identity used by [`Graph`] to key bound parameters.
    pub fn tag(&self) -> u32 {
        self.tag
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            bail!(Parameter, "duplicate parameter name {name}");
        }
        self.index.insert(name.clone(), self.tensors.len());
        self.names.push(name);
        self.tensors.push(value);
        Ok(ParamId(self.tensors.len() - 1))
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Same names and values in another precision; the copy keeps this store's tag.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            tag: self.tag,
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }

    /// Hash of every name, shape and value bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for (name, t) in self.iter() {
            name.hash(&mut h);
            t.shape().hash(&mut h);
            for v in t.data() {
                v.f64().to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    /// Replaces the value of `name`, checking its shape.
    pub fn assign(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let Some(id) = self.find(name) else {
            bail!(Checkpoint, "unknown tensor name {name}");
        };
        if self.tensors[id.0].shape() != value.shape() {
            bail!(
                Checkpoint,
                "tensor {name} has shape {}, expected {}",
                value.shape(),
                self.tensors[id.0].shape()
            );
        }
        self.tensors[id.0] = value;
        Ok(())
    }
}

/// Parameter source for one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Bind<'a, T: Scalar> {
    pub store: &'a ParamStore<T>,
    /// Whether gradients should flow into these parameters.
    pub trainable: bool,
}

impl<'a, T: Scalar> Bind<'a, T> {
    pub fn trainable(store: &'a ParamStore<T>) -> Self {
        Self { store, trainable: true }
    }

    pub fn frozen(store: &'a ParamStore<T>) -> Self {
        Self {
            store,
            trainable: false,
        }
    }

    pub fn var(&self, g: &mut Graph<T>, id: ParamId) -> Var {
        g.param(self.store, id, self.trainable)
    }
}

/// Fan-in scaled uniform initialisation, `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`.
pub fn he_uniform<T: Scalar>(shape: Shape, fan_in: usize, rng: &mut impl Rng) -> Tensor<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_, _, _, _| T::of(rng.random_range(-bound..bound)))
}

/// Convolution layer with bias.
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub spec: Conv2dSpec,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub name: String,
}

impl Conv {
    /// Stride-1 "same" convolution.
    pub fn same<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Self::new(store, name, cin, cout, kernel, Conv2dSpec::same(kernel), rng)
    }

    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        spec: Conv2dSpec,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if !cin.is_multiple_of(spec.groups) || !cout.is_multiple_of(spec.groups) {
            bail!(
                Parameter,
                "{name}: {cin} -> {cout} not divisible by {} groups",
                spec.groups
            );
        }
        let fan_in = cin / spec.groups * kernel * kernel;
        let w = he_uniform(Shape::new(cout, cin / spec.groups, kernel, kernel), fan_in, rng);
        let weight = store.add(format!("{name}.weight"), w)?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(Shape::new(1, cout, 1, 1)))?;
        Ok(Self {
            weight,
            bias,
            spec,
            cin,
            cout,
            kernel,
            name: name.to_string(),
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: Bind<T>, x: Var) -> Result<Var> {
        let w = p.var(g, self.weight);
        let b = p.var(g, self.bias);
        g.conv2d(x, w, Some(b), self.spec)
    }

    pub fn out_shape(&self, input: Shape) -> Shape {
        Shape::new(
            input.n,
            self.cout,
            conv_out_len(input.h, self.kernel, self.spec.stride, self.spec.padding),
            conv_out_len(input.w, self.kernel, self.spec.stride, self.spec.padding),
        )
    }

    /// Records this layer's multiply-accumulates and returns its output shape.
    pub fn count(&self, input: Shape, report: &mut MacReport) -> Result<Shape> {
        let wshape = Shape::new(self.cout, self.cin / self.spec.groups, self.kernel, self.kernel);
        let macs = conv_macs(input, wshape, self.spec)?;
        report.push(&self.name, macs);
        Ok(self.out_shape(input))
    }
}
