//! The architecture and objective ladder, from a single stage up to the full
//! model with both critics.

use crate::discriminators::SpectrumSource;
use crate::error::Result;
use crate::generator;
use crate::numerics::tensor::Shape;
use crate::training::dataset::PairedData;
use crate::training::trainer::train;
use crate::training::{ScalSource, TrainConfig};

pub const LABELS: [&str; 9] = [
    "Single Stage",
    "Two Stage w 1x RDB",
    "w 3x RDB",
    "w 5x RDB",
    "w 7x RDB",
    "Two Stage w 7x RDB + cMSFE-A",
    "+ Patch GAN",
    "+ Fourier GAN (RGB)",
    "AFNet (+ Fourier GAN (Gray))",
];

#[derive(Clone, Debug)]
pub struct AblationRow {
    pub label: &'static str,
    pub config: TrainConfig,
}

/// Nine configurations derived from `base`. Rows without critics train on the
/// pixel and structural terms only; the GAN rows add the critics in turn.
pub fn ladder(base: &TrainConfig) -> Vec<AblationRow> {
    let plain = |rdb: usize, single: bool, cmsfe: bool| {
        let mut c = base.clone();
        c.generator.single_stage = single;
        c.generator.stage2.num_blocks = rdb;
        c.generator.stage1.use_cmsfe_a = cmsfe;
        c.use_patch_gan = false;
        c.use_fourier_gan = false;
        c
    };
    let full = plain(7, false, true);
    let mut patch = full.clone();
    patch.use_patch_gan = true;
    patch.scal_source = ScalSource::Patch;
    let mut rgb = patch.clone();
    rgb.use_fourier_gan = true;
    rgb.fourier.source = SpectrumSource::PerRgbChannel;
    let mut gray = rgb.clone();
    gray.fourier.source = SpectrumSource::Gray;
    let configs = [
        plain(base.generator.stage2.num_blocks, true, false),
        plain(1, false, false),
        plain(3, false, false),
        plain(5, false, false),
        plain(7, false, false),
        full,
        patch,
        rgb,
        gray,
    ];
    LABELS
        .iter()
        .zip(configs)
        .map(|(&label, config)| AblationRow { label, config })
        .collect()
}

/// Generator cost of a row at `h x w`.
pub fn gmacs(cfg: &TrainConfig, h: usize, w: usize) -> Result<f64> {
    let c = cfg.generator.input_mode.channels();
    Ok(generator::count_macs(&cfg.generator, Shape::new(1, c, h, w))?.gmacs())
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationResult {
    pub label: &'static str,
    pub psnr: f64,
    pub ssim: f64,
    pub gmacs: f64,
}

/// Trains every row and reports best validation metrics plus GMACs at `res`.
pub fn run(
    base: &TrainConfig,
    train_data: &PairedData,
    val_data: &PairedData,
    res: usize,
    mut progress: impl FnMut(&AblationResult),
) -> Result<Vec<AblationResult>> {
    let mut out = Vec::new();
    for row in ladder(base) {
        let outcome = train(&row.config, train_data, val_data)?;
        let best = outcome.log.iter().filter_map(|r| r.val_psnr.zip(r.val_ssim));
        let (psnr, ssim) = best
            .fold(None, |acc: Option<(f64, f64)>, (p, s)| match acc {
                Some((bp, _)) if bp >= p => acc,
                _ => Some((p, s)),
            })
            .unwrap_or((f64::NAN, f64::NAN));
        let result = AblationResult {
            label: row.label,
            psnr,
            ssim,
            gmacs: gmacs(&row.config, res, res)?,
        };
        progress(&result);
        out.push(result);
    }
    Ok(out)
}

pub fn to_csv(rows: &[AblationResult]) -> String {
    let mut s = String::from("config,psnr,ssim,gmacs\n");
    for r in rows {
        s.push_str(&format!("\"{}\",{:.4},{:.4},{:.6}\n", r.label, r.psnr, r.ssim, r.gmacs));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_rows_in_table_order() {
        let rows = ladder(&TrainConfig::default());
        assert_eq!(rows.len(), 9);
        assert!(rows[0].config.generator.single_stage);
        assert!(!rows[5].config.use_patch_gan && rows[5].config.generator.stage1.use_cmsfe_a);
        assert!(rows[6].config.use_patch_gan && !rows[6].config.use_fourier_gan);
        assert_eq!(rows[7].config.fourier.source, SpectrumSource::PerRgbChannel);
        assert_eq!(rows[8].config.fourier.source, SpectrumSource::Gray);
    }
}
