//! The small overfitting run: four synthetic textures, darkened, learned back.

use afnet::analysis::metrics::{ms_ssim, psnr};
use afnet::analysis::spectral::psd_curve;
use afnet::training::dataset::PairedData;
use afnet::training::trainer::{enhance, train, TrainOutcome};
use afnet::training::TrainConfig;
use afnet::{config, Result, Tensor};

use super::{darken, texture};

pub const PAIRS: usize = 4;
pub const SIZE: usize = 64;

pub fn data() -> Result<PairedData> {
    let mut d = PairedData::default();
    for i in 0..PAIRS {
        let gt = texture(SIZE, SIZE, 100 + i as u64);
        let low = darken(&gt, 2.2, 0.4, 0.01, 200 + i as u64);
        d.push(&format!("tex{i}"), low, gt, afnet::generator::InputMode::Srgb3)?;
    }
    Ok(d)
}

pub fn config(steps: usize) -> TrainConfig {
    let text = format!(
        "base_channels = 8\nrdb_count = 2\ncrop = 64\nbatch_size = 4\nepochs = {steps}\n\
         disc_widths = 16,32,64,64\nlr0 = 0.0005\ndecay_every = 1000\nval_every = 50\nseed = 7\n"
    );
    config::parse(&text).expect("overfit config parses")
}

/// Mean metrics of `outputs` against the ground truth of `data`.
#[derive(Clone, Copy, Debug)]
pub struct Scores {
    pub psnr: f64,
    pub ms_ssim: f64,
    pub psd_high: f64,
}

pub fn score(outputs: &[Tensor], data: &PairedData) -> Result<Scores> {
    let mut s = Scores {
        psnr: 0.0,
        ms_ssim: 0.0,
        psd_high: 0.0,
    };
    for (o, gt) in outputs.iter().zip(&data.high) {
        s.psnr += psnr(o, gt, 1.0)?;
        s.ms_ssim += ms_ssim(o, gt, 3)?;
        s.psd_high += psd_curve(o, 0)?.high_band_distance(&psd_curve(gt, 0)?)?;
    }
    let n = outputs.len() as f64;
    s.psnr /= n;
    s.ms_ssim /= n;
    s.psd_high /= n;
    Ok(s)
}

pub struct Experiment {
    pub before: Scores,
    pub after: Scores,
    pub outcome: TrainOutcome,
    pub seconds: f64,
}

pub fn run(steps: usize) -> Result<Experiment> {
    let d = data()?;
    let cfg = config(steps);
    let t0 = std::time::Instant::now();
    let outcome = train(&cfg, &d, &d)?;
    let seconds = t0.elapsed().as_secs_f64();
    let outputs: Vec<Tensor> = d.low.iter().map(|l| enhance(&outcome.best, l)).collect::<Result<_>>()?;
    Ok(Experiment {
        before: score(&d.low, &d)?,
        after: score(&outputs, &d)?,
        outcome,
        seconds,
    })
}
