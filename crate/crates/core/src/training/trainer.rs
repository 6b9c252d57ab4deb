//! Alternating critic/generator optimisation with per-epoch validation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::metrics::{psnr, ssim};
use crate::discriminators::DiscOutput;
use crate::error::{bail, Result};
use crate::generator::{Generator, InputMode};
use crate::losses::{self, GeneratorLossInputs, LossBreakdown, TERM_NAMES};
use crate::nn::{Bind, ParamStore};
use crate::numerics::graph::{Graph, Var};
use crate::numerics::ops::Scale;
use crate::numerics::tensor::{Shape, Tensor};
use crate::training::checkpoint::{Checkpoint, Networks};
use crate::training::dataset::PairedData;
use crate::training::optim::Adam;
use crate::training::{ScalSource, TrainConfig};

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    /// `step` for optimisation rows, `val` for validation rows.
    pub kind: &'static str,
    pub epoch: usize,
    pub step: u64,
    pub losses: LossBreakdown,
    pub aux_l1: Option<f64>,
    pub d1_loss: Option<f64>,
    pub d2_loss: Option<f64>,
    pub lr: f64,
    pub val_psnr: Option<f64>,
    pub val_ssim: Option<f64>,
}

impl LogRow {
    pub fn header() -> String {
        let mut h = vec!["kind", "epoch", "step"];
        h.extend(TERM_NAMES);
        h.extend(["aux_l1", "g_total", "d1", "d2", "lr", "val_psnr", "val_ssim"]);
        h.join(",")
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut f = vec![self.kind.to_string(), self.epoch.to_string(), self.step.to_string()];
        f.extend(self.losses.terms.iter().map(|t| opt(*t)));
        let total = (self.kind == "step").then_some(self.losses.total);
        f.extend([opt(self.aux_l1), opt(total), opt(self.d1_loss), opt(self.d2_loss)]);
        f.extend([self.lr.to_string(), opt(self.val_psnr), opt(self.val_ssim)]);
        f.join(",")
    }
}

/// Result of a run: the checkpoint with the best validation PSNR, the final
/// state and the full log.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub log: Vec<LogRow>,
}

impl TrainOutcome {
    pub fn log_csv(&self) -> String {
        let mut s = LogRow::header();
        s.push('\n');
        for r in &self.log {
            s.push_str(&r.to_csv());
            s.push('\n');
        }
        s
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for sample `index` in `epoch`.
pub fn sample_rng(seed: u64, epoch: usize, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(seed ^ splitmix(epoch as u64)) ^ index))
}

/// Copies the `h x w` window at `(y, x)`.
pub fn crop(t: &Tensor, y: usize, x: usize, h: usize, w: usize) -> Tensor {
    let s = t.shape();
    Tensor::from_fn(Shape::new(s.n, s.c, h, w), |n, c, yy, xx| t.at(n, c, y + yy, x + xx))
}

/// Edge-replicating pad on the bottom and right.
pub fn pad_to(t: &Tensor, h: usize, w: usize) -> Tensor {
    let s = t.shape();
    Tensor::from_fn(Shape::new(s.n, s.c, h, w), |n, c, y, x| {
        t.at(n, c, y.min(s.h - 1), x.min(s.w - 1))
    })
}

fn draw_sample(cfg: &TrainConfig, data: &PairedData, epoch: usize, idx: usize) -> Result<(Tensor, Tensor)> {
    let mut rng = sample_rng(cfg.seed, epoch, idx as u64);
    let (low, high) = (&data.low[idx], &data.high[idx]);
    let scale = if cfg.generator.input_mode == InputMode::Raw4 {
        2
    } else {
        1
    };
    let c = cfg.crop / scale;
    let s = low.shape();
    if s.h < c || s.w < c {
        bail!(
            Data,
            "pair {} ({}x{}) is smaller than the crop",
            data.names[idx],
            s.h,
            s.w
        );
    }
    let y = rng.random_range(0..=s.h - c);
    let x = rng.random_range(0..=s.w - c);
    let low = crop(low, y, x, c, c);
    let high = crop(high, y * scale, x * scale, cfg.crop, cfg.crop);
    let draw = cfg.augment.draw(&mut rng);
    Ok(draw.apply(&low, &high))
}

/// Generator output for one input, padded to the Stage 1 grid and cropped back.
pub fn enhance_with(generator: &Generator, store: &ParamStore, low: &Tensor) -> Result<Tensor> {
    let s = low.shape();
    let (h, w) = (s.h.div_ceil(32) * 32, s.w.div_ceil(32) * 32);
    let mut g = Graph::new();
    let x = g.constant(pad_to(low, h, w));
    let out = generator.forward(&mut g, Bind::frozen(store), x)?;
    let scale = if generator.cfg.input_mode == InputMode::Raw4 {
        2
    } else {
        1
    };
    Ok(crop(g.value(out.enhanced), 0, 0, s.h * scale, s.w * scale))
}

pub fn enhance(ckpt: &Checkpoint, low: &Tensor) -> Result<Tensor> {
    let nets = ckpt.networks()?;
    enhance_with(&nets.generator, &ckpt.params[0], low)
}

/// Mean PSNR and SSIM of the generator over a split.
pub fn validate(generator: &Generator, store: &ParamStore, data: &PairedData) -> Result<(f64, f64)> {
    if data.is_empty() {
        bail!(Data, "validation split is empty");
    }
    let (mut p, mut s) = (0.0, 0.0);
    for (low, high) in data.low.iter().zip(&data.high) {
        let out = enhance_with(generator, store, low)?;
        p += psnr(&out, high, 1.0)?;
        s += ssim(&out, high)?;
    }
    let n = data.len() as f64;
    Ok((p / n, s / n))
}

fn critic_step(
    forward: impl Fn(&mut Graph, Bind<f32>, Var) -> Result<DiscOutput>,
    store: &mut ParamStore,
    opt: &mut Adam,
    real: &Tensor,
    fake: &Tensor,
    lr: f64,
) -> Result<f64> {
    let mut g = Graph::new();
    let r = g.constant(real.clone());
    let f = g.constant(fake.clone());
    let p = Bind::trainable(store);
    let rs = forward(&mut g, p, r)?.scores;
    let fs = forward(&mut g, p, f)?.scores;
    let loss = losses::lsgan_d_loss(&mut g, rs, fs)?;
    let value = g.value(loss).item() as f64;
    if !value.is_finite() {
        bail!(Numeric, "critic loss is {value}");
    }
    let grads = g.backward(loss)?.for_store(&g, store);
    opt.step(store, &grads, lr)?;
    Ok(value)
}

/// Degraded input shown to the critics as the contrastive negative.
fn negative_image(g: &mut Graph, x: Var, mode: InputMode) -> Result<Var> {
    match mode {
        InputMode::Srgb3 => Ok(x),
        InputMode::Raw4 => {
            let r = g.slice(x, 0, 1)?;
            let g1 = g.slice(x, 1, 1)?;
            let b = g.slice(x, 2, 1)?;
            let g2 = g.slice(x, 3, 1)?;
            let gs = g.add(g1, g2)?;
            let gm = g.affine(gs, 0.5, 0.0)?;
            let rgb = g.concat(&[r, gm, b])?;
            g.resample(rgb, Scale::integer(2))
        }
    }
}

/// Per-step values reported to the log.
#[derive(Clone, Debug)]
pub struct StepReport {
    pub losses: LossBreakdown,
    pub aux_l1: Option<f64>,
    pub d1_loss: Option<f64>,
    pub d2_loss: Option<f64>,
}

/// One optimisation step on a batch: critics first on the detached output,
/// then the generator against the updated, frozen critics.
pub fn train_step(ckpt: &mut Checkpoint, nets: &Networks, low: &Tensor, high: &Tensor, lr: f64) -> Result<StepReport> {
    let cfg = ckpt.config.clone();
    let w = cfg.weights;
    let mut g = Graph::new();
    let x = g.constant(low.clone());
    let y = g.constant(high.clone());
    let out = nets.generator.forward(&mut g, Bind::trainable(&ckpt.params[0]), x)?;
    let fake = g.value(out.enhanced).clone();

    let [_, p1, p2] = &mut ckpt.params;
    let [_, o1, o2] = &mut ckpt.optim;
    let d1_loss = match &nets.patch {
        Some(d) => Some(critic_step(|g, p, v| d.forward(g, p, v), p1, o1, high, &fake, lr)?),
        None => None,
    };
    let d2_loss = match &nets.fourier {
        Some(d) => Some(critic_step(|g, p, v| d.forward(g, p, v), p2, o2, high, &fake, lr)?),
        None => None,
    };

    let pred = out.enhanced;
    let scal_wanted = w.scal > 0.0;
    let patch_out = match &nets.patch {
        Some(d) if w.p_adv > 0.0 || (scal_wanted && cfg.scal_source == ScalSource::Patch) => {
            Some(d.forward(&mut g, Bind::frozen(&ckpt.params[1]), pred)?)
        }
        _ => None,
    };
    let fourier_out = match &nets.fourier {
        Some(d) if w.f_adv > 0.0 || (scal_wanted && cfg.scal_source == ScalSource::Fourier) => {
            Some(d.forward(&mut g, Bind::frozen(&ckpt.params[2]), pred)?)
        }
        _ => None,
    };
    let features = if scal_wanted {
        let neg = negative_image(&mut g, x, cfg.generator.input_mode)?;
        match (cfg.scal_source, &nets.patch, &nets.fourier, patch_out, fourier_out) {
            (ScalSource::Patch, Some(d), _, Some(a), _) => {
                let b = Bind::frozen(&ckpt.params[1]);
                let p = d.forward(&mut g, b, y)?.features;
                let n = d.forward(&mut g, b, neg)?.features;
                Some((a.features, p, n))
            }
            (ScalSource::Fourier, _, Some(d), _, Some(a)) => {
                let b = Bind::frozen(&ckpt.params[2]);
                let p = d.forward(&mut g, b, y)?.features;
                let n = d.forward(&mut g, b, neg)?.features;
                Some((a.features, p, n))
            }
            _ => None,
        }
    } else {
        None
    };
    let inputs = GeneratorLossInputs {
        pred,
        target: y,
        patch_fake: patch_out.map(|o| o.scores),
        fourier_fake: fourier_out.map(|o| o.scores),
        features,
    };
    let (mut total, mut breakdown) = losses::total_generator_loss(&mut g, &inputs, &w, cfg.ms_ssim_levels)?;
    let mut aux_l1 = None;
    if cfg.stage1_aux_l1 > 0.0 && !cfg.generator.single_stage {
        let aux = losses::l1_loss(&mut g, out.balanced, y)?;
        aux_l1 = Some(g.value(aux).item() as f64);
        total = g.weighted_sum(&[(total, 1.0), (aux, cfg.stage1_aux_l1)])?;
        breakdown.total = g.value(total).item() as f64;
    }
    if !breakdown.total.is_finite() {
        bail!(
            Numeric,
            "generator loss is {} at step {} ({breakdown:?})",
            breakdown.total,
            ckpt.step
        );
    }
    let grads = g.backward(total)?.for_store(&g, &ckpt.params[0]);
    ckpt.optim[0].step(&mut ckpt.params[0], &grads, lr)?;
    ckpt.step += 1;
    Ok(StepReport {
        losses: breakdown,
        aux_l1,
        d1_loss,
        d2_loss,
    })
}

/// Trains from scratch.
pub fn train(cfg: &TrainConfig, train_data: &PairedData, val_data: &PairedData) -> Result<TrainOutcome> {
    train_with(cfg, train_data, val_data, |_| {})
}

/// [`train`] reporting every log row to `observe` as it is produced.
pub fn train_with(
    cfg: &TrainConfig,
    train_data: &PairedData,
    val_data: &PairedData,
    mut observe: impl FnMut(&LogRow),
) -> Result<TrainOutcome> {
    if train_data.is_empty() || val_data.is_empty() {
        bail!(Data, "training needs non-empty train and validation splits");
    }
    let (mut ckpt, nets) = Checkpoint::init(cfg)?;
    let mut best: Option<Checkpoint> = None;
    let mut log = Vec::new();
    let mut emit = |row: LogRow, log: &mut Vec<LogRow>| {
        observe(&row);
        log.push(row);
    };
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let mut order: Vec<usize> = (0..train_data.len()).collect();
        order.shuffle(&mut sample_rng(cfg.seed, epoch, u64::MAX));
        for batch in order.chunks(cfg.batch_size) {
            let mut lows = Vec::with_capacity(batch.len());
            let mut highs = Vec::with_capacity(batch.len());
            for &i in batch {
                let (l, h) = draw_sample(cfg, train_data, epoch, i)?;
                lows.push(l);
                highs.push(h);
            }
            let (low, high) = (Tensor::stack(&lows)?, Tensor::stack(&highs)?);
            let rep = train_step(&mut ckpt, &nets, &low, &high, lr)?;
            let row = LogRow {
                kind: "step",
                epoch,
                step: ckpt.step,
                losses: rep.losses,
                aux_l1: rep.aux_l1,
                d1_loss: rep.d1_loss,
                d2_loss: rep.d2_loss,
                lr,
                val_psnr: None,
                val_ssim: None,
            };
            emit(row, &mut log);
        }
        ckpt.epoch = epoch + 1;
        if (epoch + 1) % cfg.val_every == 0 || epoch + 1 == cfg.epochs {
            let (vp, vs) = validate(&nets.generator, &ckpt.params[0], val_data)?;
            let improved = best.as_ref().is_none_or(|b| vp > b.best_val_psnr);
            if improved {
                ckpt.best_val_psnr = vp;
                best = Some(ckpt.clone());
            }
            let row = LogRow {
                kind: "val",
                epoch,
                step: ckpt.step,
                losses: LossBreakdown::default(),
                aux_l1: None,
                d1_loss: None,
                d2_loss: None,
                lr,
                val_psnr: Some(vp),
                val_ssim: Some(vs),
            };
            emit(row, &mut log);
        }
    }
    let best = best.unwrap_or_else(|| ckpt.clone());
    Ok(TrainOutcome { best, last: ckpt, log })
}
