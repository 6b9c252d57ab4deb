//! Optimisation of the generator against the two critics.

pub mod ablation;
pub mod augment;
pub mod checkpoint;
pub mod dataset;
pub mod optim;
pub mod trainer;

use crate::discriminators::{FourierDiscConfig, PatchDiscConfig};
use crate::error::{bail, Result};
use crate::generator::GeneratorConfig;
use crate::losses::LossWeights;

pub use augment::{AugmentDraw, AugmentSpec};
pub use checkpoint::Checkpoint;
pub use dataset::{PairedData, PairedDataset};
pub use optim::Adam;
pub use trainer::{enhance, train, LogRow, TrainOutcome};

/// Which critic supplies features for the contrastive term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalSource {
    Patch,
    Fourier,
}

impl ScalSource {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Patch => "patch",
            Self::Fourier => "fourier",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "patch" => Ok(Self::Patch),
            "fourier" => Ok(Self::Fourier),
            _ => bail!(Config, "unknown scal_source {s:?} (expected patch or fourier)"),
        }
    }
}

/// Every knob of a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub generator: GeneratorConfig,
    pub patch: PatchDiscConfig,
    pub fourier: FourierDiscConfig,
    pub use_patch_gan: bool,
    pub use_fourier_gan: bool,
    pub weights: LossWeights,
    pub ms_ssim_levels: usize,
    /// Weight of an extra L1 term on the Stage 1 output (srgb3 only).
    pub stage1_aux_l1: f64,
    pub scal_source: ScalSource,
    pub lr0: f64,
    pub epochs: usize,
    pub decay_every: usize,
    pub decay_factor: f64,
    pub crop: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Validate every this many epochs (the last epoch is always validated).
    pub val_every: usize,
    pub augment: AugmentSpec,
    /// Exposure gain applied when packing RAW inputs.
    pub raw_gain: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorConfig::default(),
            patch: PatchDiscConfig::default(),
            fourier: FourierDiscConfig::default(),
            use_patch_gan: true,
            use_fourier_gan: true,
            weights: LossWeights::default(),
            ms_ssim_levels: 3,
            stage1_aux_l1: 0.0,
            scal_source: ScalSource::Patch,
            lr0: 1e-4,
            epochs: 1000,
            decay_every: 200,
            decay_factor: 0.5,
            crop: 256,
            batch_size: 4,
            seed: 0,
            val_every: 1,
            augment: AugmentSpec::default(),
            raw_gain: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.weights.validate()?;
        let m = crate::generator::InputMode::Raw4;
        let unit = if self.generator.input_mode == m { 64 } else { 32 };
        if self.crop == 0 || !self.crop.is_multiple_of(unit) {
            bail!(Parameter, "crop {} must be a positive multiple of {unit}", self.crop);
        }
        if self.batch_size == 0 || self.val_every == 0 || self.decay_every == 0 {
            bail!(Parameter, "batch_size, val_every and decay_every must be positive");
        }
        if !(self.lr0.is_finite() && self.lr0 > 0.0) || !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            bail!(Parameter, "lr0 must be positive and decay_factor in (0, 1]");
        }
        if !(self.stage1_aux_l1.is_finite() && self.stage1_aux_l1 >= 0.0) {
            bail!(Parameter, "stage1_aux_l1 must be non-negative");
        }
        if self.stage1_aux_l1 > 0.0 && self.generator.input_mode == m {
            bail!(Parameter, "stage1_aux_l1 is only defined for srgb3 input");
        }
        if !(self.raw_gain.is_finite() && self.raw_gain > 0.0) {
            bail!(Parameter, "raw_gain must be positive");
        }
        let need = crate::losses::ms_ssim_min_size(self.ms_ssim_levels);
        if self.weights.ms_ssim > 0.0 && self.crop < need {
            bail!(
                Parameter,
                "crop {} too small for {}-level MS-SSIM (needs {need})",
                self.crop,
                self.ms_ssim_levels
            );
        }
        self.augment.validate()
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        lr_at(epoch, self.lr0, self.decay_every, self.decay_factor)
    }
}

/// Step schedule `lr0 * factor^floor(epoch / every)`.
pub fn lr_at(epoch: usize, lr0: f64, every: usize, factor: f64) -> f64 {
    lr0 * factor.powi((epoch / every) as i32)
}
