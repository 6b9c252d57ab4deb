//! The `train`, `enhance` and `ablate` commands.

use std::fs;
use std::path::Path;

use afnet::config;
use afnet::generator::InputMode;
use afnet::isp::save_image;
use afnet::training::ablation;
use afnet::training::checkpoint::Checkpoint;
use afnet::training::dataset::{load_input, PairedData, PairedDataset};
use afnet::training::trainer::{enhance_with, train_with};
use afnet::training::TrainConfig;
use afnet::{Error, Result};

use crate::io::{png_inputs, resolve, stem, Staging};
use crate::ConfigArgs;

fn load_splits(cfg: &TrainConfig, root: &Path) -> Result<(PairedData, PairedData)> {
    let (train, val) = PairedDataset::splits(root)?;
    let mode = cfg.generator.input_mode;
    Ok((train.load(mode, cfg.raw_gain)?, val.load(mode, cfg.raw_gain)?))
}

pub fn train(args: &ConfigArgs, data: &Path, out: &Path) -> Result<()> {
    let cfg = resolve(args)?;
    let (train_data, val_data) = load_splits(&cfg, data)?;
    let stage = Staging::new(out)?;
    fs::write(stage.path("resolved.cfg"), config::render(&cfg))?;
    let outcome = train_with(&cfg, &train_data, &val_data, |row| {
        if let (Some(p), Some(s)) = (row.val_psnr, row.val_ssim) {
            eprintln!(
                "epoch {:>5}  step {:>7}  val psnr {p:.3} dB  ssim {s:.4}",
                row.epoch + 1,
                row.step
            );
        }
    })?;
    outcome.best.save(&stage.path("best.ckpt"))?;
    outcome.last.save(&stage.path("last.ckpt"))?;
    fs::write(stage.path("log.csv"), outcome.log_csv())?;
    stage.commit()
}

pub fn enhance(checkpoint: &Path, input: &Path, out: &Path, mode: Option<&str>) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let ckpt_mode = ckpt.config.generator.input_mode;
    if let Some(m) = mode.map(InputMode::parse).transpose()? {
        if m != ckpt_mode {
            return Err(Error::Parameter(format!(
                "--mode {} but the checkpoint was trained on {} input",
                m.as_str(),
                ckpt_mode.as_str()
            )));
        }
    }
    let nets = ckpt.networks()?;
    let stage = Staging::new(out)?;
    for path in png_inputs(input)? {
        let low = load_input(&path, ckpt_mode, ckpt.config.raw_gain)?;
        let c = low.shape().c;
        if c != ckpt_mode.channels() {
            return Err(Error::Dimension(format!(
                "{}: {c} channels in {} mode",
                path.display(),
                ckpt_mode.as_str()
            )));
        }
        let enhanced = enhance_with(&nets.generator, &ckpt.params[0], &low)?;
        save_image(&enhanced, &stage.path(&format!("{}.png", stem(&path))))?;
    }
    stage.commit()
}

pub fn ablate(args: &ConfigArgs, data: &Path, out: &Path, res: usize) -> Result<()> {
    let cfg = resolve(args)?;
    let (train_data, val_data) = load_splits(&cfg, data)?;
    let stage = Staging::new(out)?;
    fs::write(stage.path("resolved.cfg"), config::render(&cfg))?;
    let rows = ablation::run(&cfg, &train_data, &val_data, res, |r| {
        eprintln!(
            "{:<32} psnr {:.3}  ssim {:.4}  gmacs {:.3}",
            r.label, r.psnr, r.ssim, r.gmacs
        );
    })?;
    fs::write(stage.path("ablation.csv"), ablation::to_csv(&rows))?;
    stage.commit()
}
