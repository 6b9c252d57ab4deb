//! `afnet analyze`: metrics tables, PSD curves, spectrum images, GMACs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use afnet::analysis::metrics::{ms_ssim, psnr, ssim};
use afnet::analysis::spectral::{colormap_image, fft_diff_heatmap, psd_curve, spectrum_planes};
use afnet::generator::count_macs;
use afnet::isp::{load_rgb, save_image};
use afnet::{Error, Result, Shape, Tensor};
use clap::Subcommand;

use crate::io::{png_inputs, resolve, stem, Staging};
use crate::ConfigArgs;

#[derive(Subcommand)]
pub enum Analyze {
    /// PSNR, SSIM and MS-SSIM per pair (matched by file name) plus means.
    Metrics {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// MS-SSIM scales.
        #[arg(long, default_value_t = 3)]
        levels: usize,
        /// CSV destination; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Radially averaged log power spectrum of each image's luma.
    Psd {
        #[arg(required = true)]
        images: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Magnitude and phase images, and difference heatmaps against a reference.
    Fft {
        image: PathBuf,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generator multiply-accumulates per layer for a square input.
    Gmacs {
        #[arg(long, default_value_t = 256)]
        res: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

pub fn run(cmd: Analyze, overrides: Vec<String>) -> Result<()> {
    if let Analyze::Gmacs { res, mut cfg } = cmd {
        cfg.overrides = overrides;
        let cfg = resolve(&cfg)?;
        let c = cfg.generator.input_mode.channels();
        print!("{}", count_macs(&cfg.generator, Shape::new(1, c, res, res))?.to_text());
        return Ok(());
    }
    if let Some(first) = overrides.first() {
        return Err(Error::Config(format!("{first} takes no configuration keys")));
    }
    match cmd {
        Analyze::Metrics { pred, gt, levels, out } => emit(out.as_deref(), &metrics(&pred, &gt, levels)?),
        Analyze::Psd { images, out } => emit(out.as_deref(), &psd(&images)?),
        Analyze::Fft { image, reference, out } => fft(&image, reference.as_deref(), &out),
        Analyze::Gmacs { .. } => unreachable!("handled above"),
    }
}

/// Writes `text` to `out` atomically, or to stdout.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    let Some(path) = out else {
        print!("{text}");
        return Ok(());
    };
    let tmp = path.with_extension(format!("partial-{}", std::process::id()));
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

fn by_stem(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    Ok(png_inputs(dir)?.into_iter().map(|p| (stem(&p), p)).collect())
}

fn metrics(pred: &Path, gt: &Path, levels: usize) -> Result<String> {
    let pred = by_stem(pred)?;
    let gt = by_stem(gt)?;
    if let Some(name) = pred.keys().find(|k| !gt.contains_key(*k)) {
        return Err(Error::Data(format!("prediction {name} has no ground truth")));
    }
    if let Some(name) = gt.keys().find(|k| !pred.contains_key(*k)) {
        return Err(Error::Data(format!("ground truth {name} has no prediction")));
    }
    let mut s = String::from("image,psnr,ssim,ms_ssim\n");
    let mut sum = [0.0; 3];
    for (name, p) in &pred {
        let (x, y) = (load_rgb(p)?, load_rgb(&gt[name])?);
        let row = [psnr(&x, &y, 1.0)?, ssim(&x, &y)?, ms_ssim(&x, &y, levels)?];
        s.push_str(&format!("{name},{:.6},{:.6},{:.6}\n", row[0], row[1], row[2]));
        for (a, v) in sum.iter_mut().zip(row) {
            *a += v;
        }
    }
    let n = pred.len() as f64;
    s.push_str(&format!("mean,{:.6},{:.6},{:.6}\n", sum[0] / n, sum[1] / n, sum[2] / n));
    Ok(s)
}

fn psd(images: &[PathBuf]) -> Result<String> {
    let mut s = String::from("image,bin,frequency,log10_power\n");
    for path in images {
        let curve = psd_curve(&load_rgb(path)?, 0)?;
        let name = stem(path);
        for (k, (f, p)) in curve.frequency.iter().zip(&curve.log_power).enumerate() {
            s.push_str(&format!("{name},{k},{f:.6},{p:.9}\n"));
        }
    }
    Ok(s)
}

fn grey(plane: &[f64], h: usize, w: usize) -> Tensor {
    Tensor::from_fn(Shape::new(1, 1, h, w), |_, _, y, x| plane[y * w + x] as f32)
}

fn fft(image: &Path, reference: Option<&Path>, out: &Path) -> Result<()> {
    let img = load_rgb(image)?;
    let (h, w) = (img.shape().h, img.shape().w);
    let feats = spectrum_planes(&img, 0)?;
    let phase: Vec<f64> = feats.phase.iter().map(|p| 0.5 * (p + 1.0)).collect();
    let name = stem(image);
    let stage = Staging::new(out)?;
    save_image(
        &grey(&feats.magnitude, h, w),
        &stage.path(&format!("{name}_magnitude.png")),
    )?;
    save_image(&grey(&phase, h, w), &stage.path(&format!("{name}_phase.png")))?;
    if let Some(r) = reference {
        let d = fft_diff_heatmap(&img, &load_rgb(r)?, 0)?;
        save_image(
            &colormap_image(&d.magnitude, h, w)?,
            &stage.path(&format!("{name}_magnitude_diff.png")),
        )?;
        save_image(
            &colormap_image(&d.phase, h, w)?,
            &stage.path(&format!("{name}_phase_diff.png")),
        )?;
    }
    stage.commit()
}
