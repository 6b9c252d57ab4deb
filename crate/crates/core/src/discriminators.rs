//! The two critics: a PatchGAN scoring local texture and a Fourier critic that
//! sees the image together with its normalised log-magnitude and phase spectra.
//!
//! Both share one body, a stack of 4x4 stride-2 convolutions with leaky relu
//! followed by a 3x3 convolution to a single raw score channel.

use rand::Rng;

use crate::analysis::macs::MacReport;
use crate::error::{bail, Result};
use crate::nn::{Bind, Conv, ParamStore};
use crate::numerics::graph::{Graph, Var};
use crate::numerics::ops::Conv2dSpec;
use crate::numerics::tensor::{Scalar, Shape};

pub const DEFAULT_WIDTHS: [usize; 4] = [32, 64, 128, 256];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectrumSource {
    Gray,
    PerRgbChannel,
}

impl SpectrumSource {
    /// Number of source planes whose spectrum is taken.
    pub fn planes(self) -> usize {
        match self {
            Self::Gray => 1,
            Self::PerRgbChannel => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Gray => "gray",
            Self::PerRgbChannel => "per_rgb_channel",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gray" => Ok(Self::Gray),
            "per_rgb_channel" | "rgb" => Ok(Self::PerRgbChannel),
            _ => bail!(
                Config,
                "unknown spectrum source {s:?} (expected gray or per_rgb_channel)"
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchDiscConfig {
    /// Output width of each stride-2 layer.
    pub widths: Vec<usize>,
}

impl Default for PatchDiscConfig {
    fn default() -> Self {
        Self {
            widths: DEFAULT_WIDTHS.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FourierDiscConfig {
    pub source: SpectrumSource,
    pub widths: Vec<usize>,
}

impl Default for FourierDiscConfig {
    fn default() -> Self {
        Self {
            source: SpectrumSource::Gray,
            widths: DEFAULT_WIDTHS.to_vec(),
        }
    }
}

impl FourierDiscConfig {
    pub fn in_channels(&self) -> usize {
        3 + 2 * self.source.planes()
    }
}

/// Score map plus the pooled output of the last stride-2 layer.
#[derive(Clone, Copy, Debug)]
pub struct DiscOutput {
    pub scores: Var,
    pub features: Var,
}

#[derive(Clone, Debug)]
pub struct ConvStack {
    pub layers: Vec<Conv>,
    pub head: Conv,
}

impl ConvStack {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        widths: &[usize],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if widths.is_empty() || widths.contains(&0) {
            bail!(Parameter, "{name}: widths must be non-empty and positive");
        }
        let mut layers = Vec::with_capacity(widths.len());
        let mut c = cin;
        for (i, &w) in widths.iter().enumerate() {
            layers.push(Conv::new(
                store,
                &format!("{name}.down{i}"),
                c,
                w,
                4,
                Conv2dSpec::new(2, 1, 1),
                rng,
            )?);
            c = w;
        }
        let head = Conv::same(store, &format!("{name}.head"), c, 1, 3, rng)?;
        Ok(Self { layers, head })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: Bind<T>, x: Var) -> Result<DiscOutput> {
        let mut h = x;
        for layer in &self.layers {
            let y = layer.forward(g, p, h)?;
            h = g.leaky_relu(y)?;
        }
        let features = g.global_avg_pool(h)?;
        let scores = self.head.forward(g, p, h)?;
        Ok(DiscOutput { scores, features })
    }

    pub fn count(&self, input: Shape, r: &mut MacReport) -> Result<Shape> {
        let mut s = input;
        for layer in &self.layers {
            s = layer.count(s, r)?;
        }
        self.head.count(s, r)
    }

    /// Receptive field of one score in input pixels.
    pub fn receptive_field(&self) -> usize {
        let mut rf = self.head.kernel;
        for layer in self.layers.iter().rev() {
            rf = (rf - 1) * layer.spec.stride + layer.kernel;
        }
        rf
    }
}

fn check_image<T: Scalar>(g: &Graph<T>, img: Var) -> Result<()> {
    let c = g.shape(img).c;
    if c != 3 {
        bail!(Dimension, "critics take 3-channel images, got {c}");
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct PatchDiscriminator {
    pub cfg: PatchDiscConfig,
    pub body: ConvStack,
}

impl PatchDiscriminator {
    pub fn new<T: Scalar>(cfg: &PatchDiscConfig, store: &mut ParamStore<T>, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            cfg: cfg.clone(),
            body: ConvStack::new(store, "patch", 3, &cfg.widths, rng)?,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: Bind<T>, img: Var) -> Result<DiscOutput> {
        check_image(g, img)?;
        self.body.forward(g, p, img)
    }

    pub fn count_macs(&self, input: Shape) -> Result<MacReport> {
        let mut r = MacReport::new(input);
        self.body.count(input, &mut r)?;
        Ok(r)
    }
}

/// Image concatenated with the magnitude planes then the phase planes of its
/// spectrum source.
pub fn fourier_features<T: Scalar>(g: &mut Graph<T>, img: Var, source: SpectrumSource) -> Result<Var> {
    check_image(g, img)?;
    let src = match source {
        SpectrumSource::Gray => g.grayscale(img)?,
        SpectrumSource::PerRgbChannel => img,
    };
    let spec = g.spectrum(src)?;
    g.concat(&[img, spec])
}

#[derive(Clone, Debug)]
pub struct FourierDiscriminator {
    pub cfg: FourierDiscConfig,
    pub body: ConvStack,
}

impl FourierDiscriminator {
    pub fn new<T: Scalar>(cfg: &FourierDiscConfig, store: &mut ParamStore<T>, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            cfg: cfg.clone(),
            body: ConvStack::new(store, "fourier", cfg.in_channels(), &cfg.widths, rng)?,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: Bind<T>, img: Var) -> Result<DiscOutput> {
        let x = fourier_features(g, img, self.cfg.source)?;
        self.body.forward(g, p, x)
    }

    pub fn count_macs(&self, input: Shape) -> Result<MacReport> {
        let mut r = MacReport::new(input);
        self.body.count(input.with_c(self.cfg.in_channels()), &mut r)?;
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_patch_geometry() {
        let mut store = ParamStore::<f32>::new();
        let d = PatchDiscriminator::new(
            &PatchDiscConfig::default(),
            &mut store,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let r = d.count_macs(Shape::new(1, 3, 256, 256)).unwrap();
        assert_eq!(r.layers.len(), 5);
        assert_eq!(d.body.receptive_field(), 78);
        let out = d
            .body
            .count(
                Shape::new(1, 3, 256, 256),
                &mut MacReport::new(Shape::new(1, 3, 256, 256)),
            )
            .unwrap();
        assert_eq!((out.c, out.h, out.w), (1, 16, 16));
    }

    #[test]
    fn fourier_input_channels() {
        assert_eq!(FourierDiscConfig::default().in_channels(), 5);
        let cfg = FourierDiscConfig {
            source: SpectrumSource::PerRgbChannel,
            ..Default::default()
        };
        assert_eq!(cfg.in_channels(), 9);
    }
}
