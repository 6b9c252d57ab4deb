//! Plain-text run configuration: one `key = value` per line, `#` comments.
//!
//! Every key maps onto a field of [`TrainConfig`]; unknown keys are rejected.
//! [`render`] emits every key, so its output fully determines a run.

use std::fmt::Display;
use std::str::FromStr;

use crate::discriminators::SpectrumSource;
use crate::error::{bail, Error, Result};
use crate::generator::InputMode;
use crate::training::{ScalSource, TrainConfig};

/// Every accepted key, in rendering order.
pub const KEYS: &[&str] = &[
    "seed",
    "epochs",
    "lr0",
    "decay_every",
    "decay_factor",
    "crop",
    "batch_size",
    "val_every",
    "input_mode",
    "raw_gain",
    "base_channels",
    "blocks_per_scale",
    "use_cmsfe_a",
    "cmsfe_split",
    "cmsfe_kernels",
    "attention_reduction",
    "single_stage",
    "rdb_count",
    "rdb_layers",
    "rdb_growth",
    "rdb_channels",
    "use_patch_gan",
    "use_fourier_gan",
    "spectrum_source",
    "disc_widths",
    "scal_source",
    "w_l1",
    "w_ms_ssim",
    "w_scal",
    "w_p_adv",
    "w_f_adv",
    "ms_ssim_levels",
    "stage1_aux_l1",
    "augment",
    "aug_gamma_min",
    "aug_gamma_max",
    "aug_gain_min",
    "aug_gain_max",
    "aug_noise_max",
];

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => bail!(Config, "{key}: expected true or false, got {v:?}"),
    }
}

fn list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|p| num(key, p.trim())).collect()
}

fn join(v: &[usize]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Sets one key from its textual value.
pub fn apply(cfg: &mut TrainConfig, key: &str, value: &str) -> Result<()> {
    let v = value.trim();
    let g = &mut cfg.generator;
    match key {
        "seed" => cfg.seed = num(key, v)?,
        "epochs" => cfg.epochs = num(key, v)?,
        "lr0" => cfg.lr0 = num(key, v)?,
        "decay_every" => cfg.decay_every = num(key, v)?,
        "decay_factor" => cfg.decay_factor = num(key, v)?,
        "crop" => cfg.crop = num(key, v)?,
        "batch_size" => cfg.batch_size = num(key, v)?,
        "val_every" => cfg.val_every = num(key, v)?,
        "input_mode" => g.input_mode = InputMode::parse(v)?,
        "raw_gain" => cfg.raw_gain = num(key, v)?,
        "base_channels" => g.stage1.base_channels = num(key, v)?,
        "blocks_per_scale" => g.stage1.blocks_per_scale = num(key, v)?,
        "use_cmsfe_a" => g.stage1.use_cmsfe_a = flag(key, v)?,
        "cmsfe_split" => g.cmsfe.split = num(key, v)?,
        "cmsfe_kernels" => g.cmsfe.kernel_sizes = list(key, v)?,
        "attention_reduction" => g.cmsfe.reduction = num(key, v)?,
        "single_stage" => g.single_stage = flag(key, v)?,
        "rdb_count" => g.stage2.num_blocks = num(key, v)?,
        "rdb_layers" => g.stage2.layers = num(key, v)?,
        "rdb_growth" => g.stage2.growth = num(key, v)?,
        "rdb_channels" => g.stage2.block_channels = num(key, v)?,
        "use_patch_gan" => cfg.use_patch_gan = flag(key, v)?,
        "use_fourier_gan" => cfg.use_fourier_gan = flag(key, v)?,
        "spectrum_source" => cfg.fourier.source = SpectrumSource::parse(v)?,
        "disc_widths" => {
            let w = list(key, v)?;
            cfg.patch.widths = w.clone();
            cfg.fourier.widths = w;
        }
        "scal_source" => cfg.scal_source = ScalSource::parse(v)?,
        "w_l1" => cfg.weights.l1 = num(key, v)?,
        "w_ms_ssim" => cfg.weights.ms_ssim = num(key, v)?,
        "w_scal" => cfg.weights.scal = num(key, v)?,
        "w_p_adv" => cfg.weights.p_adv = num(key, v)?,
        "w_f_adv" => cfg.weights.f_adv = num(key, v)?,
        "ms_ssim_levels" => cfg.ms_ssim_levels = num(key, v)?,
        "stage1_aux_l1" => cfg.stage1_aux_l1 = num(key, v)?,
        "augment" => cfg.augment.enabled = flag(key, v)?,
        "aug_gamma_min" => cfg.augment.gamma.0 = num(key, v)?,
        "aug_gamma_max" => cfg.augment.gamma.1 = num(key, v)?,
        "aug_gain_min" => cfg.augment.gain.0 = num(key, v)?,
        "aug_gain_max" => cfg.augment.gain.1 = num(key, v)?,
        "aug_noise_max" => cfg.augment.noise_max = num(key, v)?,
        _ => bail!(Config, "unknown key {key:?}"),
    }
    Ok(())
}

/// Current value of one key.
pub fn get(cfg: &TrainConfig, key: &str) -> Result<String> {
    fn s(v: impl Display) -> String {
        v.to_string()
    }
    let g = &cfg.generator;
    Ok(match key {
        "seed" => s(cfg.seed),
        "epochs" => s(cfg.epochs),
        "lr0" => s(cfg.lr0),
        "decay_every" => s(cfg.decay_every),
        "decay_factor" => s(cfg.decay_factor),
        "crop" => s(cfg.crop),
        "batch_size" => s(cfg.batch_size),
        "val_every" => s(cfg.val_every),
        "input_mode" => s(g.input_mode.as_str()),
        "raw_gain" => s(cfg.raw_gain),
        "base_channels" => s(g.stage1.base_channels),
        "blocks_per_scale" => s(g.stage1.blocks_per_scale),
        "use_cmsfe_a" => s(g.stage1.use_cmsfe_a),
        "cmsfe_split" => s(g.cmsfe.split),
        "cmsfe_kernels" => join(&g.cmsfe.kernel_sizes),
        "attention_reduction" => s(g.cmsfe.reduction),
        "single_stage" => s(g.single_stage),
        "rdb_count" => s(g.stage2.num_blocks),
        "rdb_layers" => s(g.stage2.layers),
        "rdb_growth" => s(g.stage2.growth),
        "rdb_channels" => s(g.stage2.block_channels),
        "use_patch_gan" => s(cfg.use_patch_gan),
        "use_fourier_gan" => s(cfg.use_fourier_gan),
        "spectrum_source" => s(cfg.fourier.source.as_str()),
        "disc_widths" => join(&cfg.patch.widths),
        "scal_source" => s(cfg.scal_source.as_str()),
        "w_l1" => s(cfg.weights.l1),
        "w_ms_ssim" => s(cfg.weights.ms_ssim),
        "w_scal" => s(cfg.weights.scal),
        "w_p_adv" => s(cfg.weights.p_adv),
        "w_f_adv" => s(cfg.weights.f_adv),
        "ms_ssim_levels" => s(cfg.ms_ssim_levels),
        "stage1_aux_l1" => s(cfg.stage1_aux_l1),
        "augment" => s(cfg.augment.enabled),
        "aug_gamma_min" => s(cfg.augment.gamma.0),
        "aug_gamma_max" => s(cfg.augment.gamma.1),
        "aug_gain_min" => s(cfg.augment.gain.0),
        "aug_gain_max" => s(cfg.augment.gain.1),
        "aug_noise_max" => s(cfg.augment.noise_max),
        _ => bail!(Config, "unknown key {key:?}"),
    })
}

/// Splits config text into `(line number, key, value)` entries.
pub fn entries(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!(Config, "line {}: expected key = value", i + 1);
        };
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Applies config text on top of `base`.
pub fn apply_text(base: &mut TrainConfig, text: &str) -> Result<()> {
    for (line, k, v) in entries(text)? {
        apply(base, &k, &v).map_err(|e| Error::Config(format!("line {line}: {e}")))?;
    }
    Ok(())
}

/// Parses config text over the defaults.
pub fn parse(text: &str) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    apply_text(&mut cfg, text)?;
    Ok(cfg)
}

/// Every key with its resolved value.
pub fn render(cfg: &TrainConfig) -> String {
    let mut s = String::new();
    for key in KEYS {
        let v = get(cfg, key).expect("every listed key is known");
        s.push_str(&format!("{key} = {v}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_round_trips() {
        let mut cfg = TrainConfig::default();
        apply_text(
            &mut cfg,
            "lr0 = 0.00037\nrdb_count = 3\ncmsfe_kernels = 3,5\ncmsfe_split = 2 # two parts\n",
        )
        .unwrap();
        let back = parse(&render(&cfg)).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.generator.cmsfe.kernel_sizes, vec![3, 5]);
    }

    #[test]
    fn unknown_and_malformed() {
        assert!(matches!(parse("learning_rate = 1"), Err(Error::Config(_))));
        assert!(matches!(parse("epochs 3"), Err(Error::Config(_))));
        assert!(matches!(parse("use_patch_gan = maybe"), Err(Error::Config(_))));
    }

    #[test]
    fn every_key_is_gettable() {
        let cfg = TrainConfig::default();
        for k in KEYS {
            get(&cfg, k).unwrap();
        }
    }
}
