//! Multiply-accumulate accounting.
//!
//! Convolutions cost `K * K * (Cin / g) * Cout * Hout * Wout`, fully-connected
//! layers `Cin * Cout`. Activations, pooling, resampling and the FFT are free.

use std::fmt::Write;

use crate::numerics::tensor::Shape;

/// Per-layer MAC counts for one input resolution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MacReport {
    pub input: Shape,
    pub layers: Vec<(String, u64)>,
}

impl MacReport {
    pub fn new(input: Shape) -> Self {
        Self {
            input,
            layers: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, macs: u64) {
        self.layers.push((name.to_string(), macs));
    }

    pub fn total(&self) -> u64 {
        self.layers.iter().map(|l| l.1).sum()
    }

    pub fn gmacs(&self) -> f64 {
        self.total() as f64 / 1e9
    }

    /// Merges another report's layers after this one's.
    pub fn extend(&mut self, other: &MacReport) {
        self.layers.extend(other.layers.iter().cloned());
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let i = self.input;
        let _ = writeln!(s, "input {}x{}x{}", i.c, i.h, i.w);
        for (name, m) in &self.layers {
            let _ = writeln!(s, "{name} {m}");
        }
        let _ = writeln!(s, "total_macs {}", self.total());
        let _ = writeln!(s, "total_gmacs {:.6}", self.gmacs());
        s
    }
}

/// MACs of one convolution layer from its hyperparameters.
pub fn conv_layer_macs(kernel: usize, cin: usize, cout: usize, groups: usize, hout: usize, wout: usize) -> u64 {
    (kernel * kernel * (cin / groups) * cout) as u64 * (hout * wout) as u64
}

pub fn linear_macs(cin: usize, cout: usize) -> u64 {
    (cin * cout) as u64
}
