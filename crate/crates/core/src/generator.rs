//! The two-stage enhancement network.
//!
//! Stage 1 balances illumination with a three-scale encoder-decoder (features
//! at 1/2, 1/8 and 1/32 resolution) built from cMSFE-A blocks. Stage 2 restores
//! texture at full resolution from the concatenation of the original input and
//! the balanced image, using a chain of residual dense blocks.

use rand::{Rng, SeedableRng};

use crate::analysis::macs::MacReport;
use crate::error::{bail, Result};
use crate::nn::{Bind, Conv, ParamStore};
use crate::numerics::graph::{Graph, Var};
use crate::numerics::ops::{Conv2dSpec, Scale};
use crate::numerics::tensor::{Scalar, Shape};

/// Spatial scales at which Stage 1 extracts features, as `1 / divisor`.
pub const STAGE1_SCALES: [usize; 3] = [2, 8, 32];

/// Channel-split multi-scale block settings. `channels` is filled in per use.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CmsfeaConfig {
    pub channels: usize,
    pub split: usize,
    pub kernel_sizes: Vec<usize>,
    pub reduction: usize,
}

impl Default for CmsfeaConfig {
    fn default() -> Self {
        Self {
            channels: 16,
            split: 4,
            kernel_sizes: vec![1, 3, 5, 7],
            reduction: 2,
        }
    }
}

impl CmsfeaConfig {
    pub fn with_channels(&self, channels: usize) -> Self {
        Self {
            channels,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.split == 0 || !self.channels.is_multiple_of(self.split) {
            bail!(
                Parameter,
                "cMSFE-A: {} channels not divisible by split {}",
                self.channels,
                self.split
            );
        }
        if self.kernel_sizes.len() != self.split {
            bail!(
                Parameter,
                "cMSFE-A: {} kernel sizes for split {}",
                self.kernel_sizes.len(),
                self.split
            );
        }
        if let Some(k) = self.kernel_sizes.iter().find(|k| *k % 2 == 0) {
            bail!(Parameter, "cMSFE-A: kernel size {k} is not odd");
        }
        if self.reduction == 0 || self.channels / self.reduction < 1 {
            bail!(
                Parameter,
                "cMSFE-A: reduction {} too large for {} channels",
                self.reduction,
                self.channels
            );
        }
        Ok(())
    }

    pub fn part_channels(&self) -> usize {
        self.channels / self.split
    }

    /// Hidden width of each branch's attention bottleneck.
    pub fn attention_hidden(&self) -> usize {
        (self.part_channels() / self.reduction).max(1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stage1Config {
    pub base_channels: usize,
    pub blocks_per_scale: usize,
    /// Ablation switch: without it the scale blocks are omitted.
    pub use_cmsfe_a: bool,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self {
            base_channels: 16,
            blocks_per_scale: 1,
            use_cmsfe_a: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RdbConfig {
    pub num_blocks: usize,
    pub layers: usize,
    pub growth: usize,
    pub block_channels: usize,
}

impl Default for RdbConfig {
    fn default() -> Self {
        Self {
            num_blocks: 7,
            layers: 4,
            growth: 8,
            block_channels: 16,
        }
    }
}

impl RdbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_blocks == 0 {
            bail!(Parameter, "RDB count must be positive");
        }
        if self.layers == 0 || self.growth == 0 || self.block_channels == 0 {
            bail!(Parameter, "RDB layers, growth and width must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputMode {
    /// 3-channel sRGB in, same-size sRGB out.
    Srgb3,
    /// Packed 4-channel RAW in, sRGB at twice the packed resolution out.
    Raw4,
}

impl InputMode {
    pub fn channels(self) -> usize {
        match self {
            Self::Srgb3 => 3,
            Self::Raw4 => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Srgb3 => "srgb3",
            Self::Raw4 => "raw4",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "srgb3" => Ok(Self::Srgb3),
            "raw4" => Ok(Self::Raw4),
            _ => bail!(Config, "unknown input mode {s:?} (expected srgb3 or raw4)"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratorConfig {
    pub stage1: Stage1Config,
    pub stage2: RdbConfig,
    pub input_mode: InputMode,
    pub cmsfe: CmsfeaConfig,
    /// Ablation: run Stage 1 only.
    pub single_stage: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            stage1: Stage1Config::default(),
            stage2: RdbConfig::default(),
            input_mode: InputMode::Srgb3,
            cmsfe: CmsfeaConfig::default(),
            single_stage: false,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let b = self.stage1.base_channels;
        if b == 0 {
            bail!(Parameter, "base_channels must be positive");
        }
        if self.stage1.use_cmsfe_a {
            for c in [b, 2 * b, 4 * b] {
                self.cmsfe.with_channels(c).validate()?;
            }
        }
        self.stage2.validate()?;
        if self.single_stage && self.input_mode == InputMode::Raw4 {
            bail!(Parameter, "single_stage is only defined for srgb3 input");
        }
        Ok(())
    }
}

/// Splits `x` into `parts` contiguous channel groups of equal size.
pub fn channel_split<T: Scalar>(g: &mut Graph<T>, x: Var, parts: usize) -> Result<Vec<Var>> {
    let c = g.shape(x).c;
    if parts == 0 || !c.is_multiple_of(parts) {
        bail!(Parameter, "{c} channels not divisible by split {parts}");
    }
    let each = c / parts;
    (0..parts).map(|i| g.slice(x, i * each, each)).collect()
}

/// Squeeze-excitation gate: pool, 1x1 reduce, relu, 1x1 expand, sigmoid, scale.
#[derive(Clone, Debug)]
pub struct ChannelAttention {
    pub reduce: Conv,
    pub expand: Conv,
}

impl ChannelAttention {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if hidden == 0 {
            bail!(Parameter, "{name}: attention bottleneck must be at least one channel");
        }
        Ok(Self {
            reduce: Conv::same(store, &format!("{name}.reduce"), channels, hidden, 1, rng)?,
            expand: Conv::same(store, &format!("{name}.expand"), hidden, channels, 1, rng)?,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: Bind<T>, x: Var) -> Result<Var> {
        let s = g.global_avg_pool(x)?;
        let s = self.reduce.forward(g, p, s)?;
        let s = g.relu(s)?;
        let s = self.expand.forward(g, p, s)?;
        let gate = g.sigmoid(s)?;
        g.scale_channels(x, gate)
    }

    pub fn count(&self, input: Shape, r: &mut MacReport) -> Result<Shape> {
        let pooled = input.with_hw(1, 1);
        let s = self.reduce.count(pooled, r)?;
        self.expand.count(s, r)?;
        Ok(input)
    }
}

/// Compact multi-scale feature extraction with attention.
#[derive(Clone, Debug)]
pub struct Cmsfea {
    pub cfg: CmsfeaConfig,
    pub branches: Vec<(Conv, ChannelAttention)>,
    pub fuse: Conv,
}

impl Cmsfea {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        cfg: &CmsfeaConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let part = cfg.part_channels();
        let mut branches = Vec::with_capacity(cfg.split);
        for (i, &k) in cfg.kernel_sizes.iter().enumerate() {
            let conv = Conv::same(store, &format!("{name}.branch{i}.conv"), part, part, k, rng)?;
            let attn = ChannelAttention::new(
                store,
                &format!("{name}.branch{i}.attn"),
                part,
                cfg.attention_hidden(),
                rng,
            )?;
            branches.push((conv, attn));
        }
        let fuse = Conv::same(store, &format!("{name}.fuse"), cfg.channels, cfg.channels, 1, rng)?;
        Ok(Self {
            cfg: cfg.clone(),
            branches,
            fuse,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: Bind<T>, x: Var) -> Result<Var> {
        if g.shape(x).c != self.cfg.channels {
            bail!(
                Dimension,
                "cMSFE-A expects {} channels, got {}",
                self.cfg.channels,
                g.shape(x).c
            );
        }
        let parts = channel_split(g, x, self.cfg.split)?;
        let mut outs = Vec::with_capacity(parts.len());
        for (part, (conv, attn)) in parts.into_iter().zip(&self.branches) {
            let y = conv.forward(g, p, part)?;
            outs.push(attn.forward(g, p, y)?);
        }
        let cat = g.concat(&outs)?;
        let fused = self.fuse.forward(g, p, cat)?;
        g.add(fused, x)
    }

    pub fn count(&self, input: Shape, r: &mut MacReport) -> Result<Shape> {
        let part = input.with_c(self.cfg.part_channels());
        for (conv, attn) in &self.branches {
            let y = conv.count(part, r)?;
            attn.count(y, r)?;
        }
        self.fuse.count(input, r)
    }
}

/// Illumination-balancing encoder-decoder.
#[derive(Clone, Debug)]
pub struct Stage1 {
    pub stem: Conv,
    pub enc: [Vec<Cmsfea>; 3],
    pub down_mid: [Conv; 2],
    pub down_low: [Conv; 2],
    pub merge_mid: Conv,
    pub dec_mid: Vec<Cmsfea>,
    pub merge_top: Conv,
    pub dec_top: Vec<Cmsfea>,
    pub head: Conv,
}

fn blocks<T: Scalar>(
    store: &mut ParamStore<T>,
    name: &str,
    channels: usize,
    cfg: &GeneratorConfig,
    rng: &mut impl Rng,
) -> Result<Vec<Cmsfea>> {
    if !cfg.stage1.use_cmsfe_a {
        return Ok(Vec::new());
    }
    (0..cfg.stage1.blocks_per_scale)
        .map(|i| Cmsfea::new(store, &format!("{name}.{i}"), &cfg.cmsfe.with_channels(channels), rng))
        .collect()
}

fn run_blocks<T: Scalar>(bs: &[Cmsfea], g: &mut Graph<T>, p: Bind<T>, mut x: Var) -> Result<Var> {
    for b in bs {
        x = b.forward(g, p, x)?;
    }
    Ok(x)
}

fn count_blocks(bs: &[Cmsfea], s: Shape, r: &mut MacReport) -> Result<Shape> {
    for b in bs {
        b.count(s, r)?;
    }
    Ok(s)
}

impl Stage1 {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, cfg: &GeneratorConfig, rng: &mut impl Rng) -> Result<Self> {
        let cin = cfg.input_mode.channels();
        let b = cfg.stage1.base_channels;
        let s2 = Conv2dSpec::new(2, 1, 1);
        let stem = Conv::new(store, "s1.stem", cin, b, 3, s2, rng)?;
        let enc0 = blocks(store, "s1.enc0", b, cfg, rng)?;
        let down_mid = [
            Conv::new(store, "s1.down1a", b, 2 * b, 3, s2, rng)?,
            Conv::new(store, "s1.down1b", 2 * b, 2 * b, 3, s2, rng)?,
        ];
        let enc1 = blocks(store, "s1.enc1", 2 * b, cfg, rng)?;
        let down_low = [
            Conv::new(store, "s1.down2a", 2 * b, 4 * b, 3, s2, rng)?,
            Conv::new(store, "s1.down2b", 4 * b, 4 * b, 3, s2, rng)?,
        ];
        let enc2 = blocks(store, "s1.enc2", 4 * b, cfg, rng)?;
        let merge_mid = Conv::same(store, "s1.merge1", 6 * b, 2 * b, 3, rng)?;
        let dec_mid = blocks(store, "s1.dec1", 2 * b, cfg, rng)?;
        let merge_top = Conv::same(store, "s1.merge0", 3 * b, b, 3, rng)?;
        let dec_top = blocks(store, "s1.dec0", b, cfg, rng)?;
        let head = Conv::same(store, "s1.head", b, cin, 3, rng)?;
        Ok(Self {
            stem,
            enc: [enc0, enc1, enc2],
            down_mid,
            down_low,
            merge_mid,
            dec_mid,
            merge_top,
            dec_top,
            head,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: Bind<T>, x: Var) -> Result<Var> {
        let s = g.shape(x);
        if !s.h.is_multiple_of(32) || !s.w.is_multiple_of(32) || s.h == 0 || s.w == 0 {
            bail!(
                Dimension,
                "stage 1 needs spatial dims divisible by 32, got {}x{}",
                s.h,
                s.w
            );
        }
        let conv_relu = |c: &Conv, g: &mut Graph<T>, v: Var| -> Result<Var> {
            let y = c.forward(g, p, v)?;
            g.relu(y)
        };
        let e0 = conv_relu(&self.stem, g, x)?;
        let e0 = run_blocks(&self.enc[0], g, p, e0)?;
        let d = conv_relu(&self.down_mid[0], g, e0)?;
        let e1 = conv_relu(&self.down_mid[1], g, d)?;
        let e1 = run_blocks(&self.enc[1], g, p, e1)?;
        let d = conv_relu(&self.down_low[0], g, e1)?;
        let e2 = conv_relu(&self.down_low[1], g, d)?;
        let e2 = run_blocks(&self.enc[2], g, p, e2)?;

        let up = g.resample(e2, Scale::integer(4))?;
        let cat = g.concat(&[up, e1])?;
        let m1 = conv_relu(&self.merge_mid, g, cat)?;
        let m1 = run_blocks(&self.dec_mid, g, p, m1)?;
        let up = g.resample(m1, Scale::integer(4))?;
        let cat = g.concat(&[up, e0])?;
        let m0 = conv_relu(&self.merge_top, g, cat)?;
        let m0 = run_blocks(&self.dec_top, g, p, m0)?;
        let full = g.resample(m0, Scale::integer(2))?;
        let out = self.head.forward(g, p, full)?;
        g.sigmoid(out)
    }

    pub fn count(&self, input: Shape, r: &mut MacReport) -> Result<Shape> {
        let e0 = self.stem.count(input, r)?;
        count_blocks(&self.enc[0], e0, r)?;
        let d = self.down_mid[0].count(e0, r)?;
        let e1 = self.down_mid[1].count(d, r)?;
        count_blocks(&self.enc[1], e1, r)?;
        let d = self.down_low[0].count(e1, r)?;
        let e2 = self.down_low[1].count(d, r)?;
        count_blocks(&self.enc[2], e2, r)?;
        let cat = e1.with_c(e2.c + e1.c);
        let m1 = self.merge_mid.count(cat, r)?;
        count_blocks(&self.dec_mid, m1, r)?;
        let cat = e0.with_c(m1.c + e0.c);
        let m0 = self.merge_top.count(cat, r)?;
        count_blocks(&self.dec_top, m0, r)?;
        self.head.count(m0.with_hw(input.h, input.w), r)
    }
}

/// Residual dense block: densely connected 3x3 layers, 1x1 local fusion,
/// local residual.
#[derive(Clone, Debug)]
pub struct Rdb {
    pub layers: Vec<Conv>,
    pub fuse: Conv,
    pub channels: usize,
}

impl Rdb {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, cfg: &RdbConfig, rng: &mut impl Rng) -> Result<Self> {
        let c = cfg.block_channels;
        let layers = (0..cfg.layers)
            .map(|i| {
                Conv::same(
                    store,
                    &format!("{name}.layer{i}"),
                    c + i * cfg.growth,
                    cfg.growth,
                    3,
                    rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let fuse = Conv::same(store, &format!("{name}.fuse"), c + cfg.layers * cfg.growth, c, 1, rng)?;
        Ok(Self {
            layers,
            fuse,
            channels: c,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: Bind<T>, x: Var) -> Result<Var> {
        if g.shape(x).c != self.channels {
            bail!(
                Dimension,
                "RDB expects {} channels, got {}",
                self.channels,
                g.shape(x).c
            );
        }
        let mut feats = vec![x];
        for layer in &self.layers {
            let cat = g.concat(&feats)?;
            let y = layer.forward(g, p, cat)?;
            feats.push(g.relu(y)?);
        }
        let cat = g.concat(&feats)?;
        let fused = self.fuse.forward(g, p, cat)?;
        g.add(fused, x)
    }

    pub fn count(&self, input: Shape, r: &mut MacReport) -> Result<Shape> {
        let mut c = input.c;
        for layer in &self.layers {
            let y = layer.count(input.with_c(c), r)?;
            c += y.c;
        }
        self.fuse.count(input.with_c(c), r)
    }
}

/// Full-resolution restoration network.
#[derive(Clone, Debug)]
pub struct Stage2 {
    pub stem: Conv,
    pub blocks: Vec<Rdb>,
    pub global_fuse: Conv,
    pub head: Conv,
    pub upsample_output: bool,
}

impl Stage2 {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, cfg: &GeneratorConfig, rng: &mut impl Rng) -> Result<Self> {
        let r = &cfg.stage2;
        let cin = cfg.input_mode.channels();
        let c = r.block_channels;
        let stem = Conv::same(store, "s2.stem", 2 * cin, c, 3, rng)?;
        let blocks = (0..r.num_blocks)
            .map(|i| Rdb::new(store, &format!("s2.rdb{i}"), r, rng))
            .collect::<Result<Vec<_>>>()?;
        let global_fuse = Conv::same(store, "s2.gff", r.num_blocks * c, c, 1, rng)?;
        let head = Conv::same(store, "s2.head", c, 3, 3, rng)?;
        Ok(Self {
            stem,
            blocks,
            global_fuse,
            head,
            upsample_output: cfg.input_mode == InputMode::Raw4,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: Bind<T>, original: Var, balanced: Var) -> Result<Var> {
        if g.shape(original) != g.shape(balanced) {
            bail!(
                Dimension,
                "stage 2 inputs differ: {} vs {}",
                g.shape(original),
                g.shape(balanced)
            );
        }
        let cat = g.concat(&[original, balanced])?;
        let stem = self.stem.forward(g, p, cat)?;
        let mut x = stem;
        let mut outs = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            x = b.forward(g, p, x)?;
            outs.push(x);
        }
        let cat = g.concat(&outs)?;
        let fused = self.global_fuse.forward(g, p, cat)?;
        let y = g.add(fused, stem)?;
        let mut out = self.head.forward(g, p, y)?;
        if self.upsample_output {
            // upsample logits so the sigmoid keeps the output inside [0, 1]
            out = g.resample(out, Scale::integer(2))?;
        }
        g.sigmoid(out)
    }

    pub fn count(&self, input: Shape, r: &mut MacReport) -> Result<Shape> {
        let stem = self.stem.count(input.with_c(2 * input.c), r)?;
        for b in &self.blocks {
            b.count(stem, r)?;
        }
        let fused = self.global_fuse.count(stem.with_c(stem.c * self.blocks.len()), r)?;
        let out = self.head.count(fused, r)?;
        Ok(if self.upsample_output {
            out.with_hw(2 * out.h, 2 * out.w)
        } else {
            out
        })
    }
}

/// Both stages plus the configuration they were built from.
#[derive(Clone, Debug)]
pub struct Generator {
    pub cfg: GeneratorConfig,
    pub stage1: Stage1,
    pub stage2: Option<Stage2>,
}

/// Outputs of one generator pass.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorOutput {
    pub balanced: Var,
    pub enhanced: Var,
}

impl Generator {
    pub fn new<T: Scalar>(cfg: &GeneratorConfig, store: &mut ParamStore<T>, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let stage1 = Stage1::new(store, cfg, rng)?;
        let stage2 = if cfg.single_stage {
            None
        } else {
            Some(Stage2::new(store, cfg, rng)?)
        };
        Ok(Self {
            cfg: cfg.clone(),
            stage1,
            stage2,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: Bind<T>, input: Var) -> Result<GeneratorOutput> {
        let c = g.shape(input).c;
        if c != self.cfg.input_mode.channels() {
            bail!(
                Dimension,
                "{} mode expects {} channels, got {c}",
                self.cfg.input_mode.as_str(),
                self.cfg.input_mode.channels()
            );
        }
        let balanced = self.stage1.forward(g, p, input)?;
        let enhanced = match &self.stage2 {
            Some(s2) => s2.forward(g, p, input, balanced)?,
            None => balanced,
        };
        Ok(GeneratorOutput { balanced, enhanced })
    }

    /// Per-layer multiply-accumulates for one input of `input` shape.
    pub fn count_macs(&self, input: Shape) -> Result<MacReport> {
        let mut r = MacReport::new(input);
        self.stage1.count(input, &mut r)?;
        if let Some(s2) = &self.stage2 {
            s2.count(input, &mut r)?;
        }
        Ok(r)
    }
}

/// MAC report of the generator `cfg` describes, without keeping its weights.
pub fn count_macs(cfg: &GeneratorConfig, input: Shape) -> Result<MacReport> {
    let mut store = ParamStore::<f32>::new();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    Generator::new(cfg, &mut store, &mut rng)?.count_macs(input)
}
