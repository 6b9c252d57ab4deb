//! Self-describing checkpoint container.
//!
//! A UTF-8 manifest (magic line, format version, counters, the full config and
//! one `tensor <name> <shape> <offset> <len>` line per tensor, closed by `end`)
//! followed by the little-endian f32 payload. Offsets and lengths count floats.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config;
use crate::discriminators::{FourierDiscriminator, PatchDiscriminator};
use crate::error::{bail, Error, Result};
use crate::generator::Generator;
use crate::nn::ParamStore;
use crate::numerics::tensor::{Shape, Tensor};
use crate::training::optim::Adam;
use crate::training::TrainConfig;

pub const MAGIC: &str = "afnet-checkpoint";
pub const VERSION: u32 = 1;

const NETS: [&str; 3] = ["g", "d1", "d2"];

/// Architectures built from a config; parameter values live in the stores.
#[derive(Clone, Debug)]
pub struct Networks {
    pub generator: Generator,
    pub patch: Option<PatchDiscriminator>,
    pub fourier: Option<FourierDiscriminator>,
}

/// Everything needed to resume or evaluate a run.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
    pub step: u64,
    pub best_val_psnr: f64,
    /// Generator, patch critic and Fourier critic parameters.
    pub params: [ParamStore; 3],
    pub optim: [Adam; 3],
}

fn build(config: &TrainConfig) -> Result<(Networks, [ParamStore; 3])> {
    config.validate()?;
    let stream = |i: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(config.seed);
        r.set_stream(i);
        r
    };
    let mut stores = [ParamStore::new(), ParamStore::new(), ParamStore::new()];
    let generator = Generator::new(&config.generator, &mut stores[0], &mut stream(0))?;
    let patch = if config.use_patch_gan {
        Some(PatchDiscriminator::new(&config.patch, &mut stores[1], &mut stream(1))?)
    } else {
        None
    };
    let fourier = if config.use_fourier_gan {
        Some(FourierDiscriminator::new(
            &config.fourier,
            &mut stores[2],
            &mut stream(2),
        )?)
    } else {
        None
    };
    Ok((
        Networks {
            generator,
            patch,
            fourier,
        },
        stores,
    ))
}

impl Checkpoint {
    /// Freshly initialised parameters for `config`.
    pub fn init(config: &TrainConfig) -> Result<(Self, Networks)> {
        let (nets, params) = build(config)?;
        let optim = [Adam::new(&params[0]), Adam::new(&params[1]), Adam::new(&params[2])];
        Ok((
            Self {
                config: config.clone(),
                epoch: 0,
                step: 0,
                best_val_psnr: f64::NAN,
                params,
                optim,
            },
            nets,
        ))
    }

    pub fn networks(&self) -> Result<Networks> {
        Ok(build(&self.config)?.0)
    }

    fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (k, net) in NETS.iter().enumerate() {
            for (name, t) in self.params[k].iter() {
                out.push((format!("{net}/{name}"), t));
            }
        }
        for (k, net) in NETS.iter().enumerate() {
            let names: Vec<&str> = self.params[k].iter().map(|(n, _)| n).collect();
            for (i, name) in names.iter().enumerate() {
                out.push((format!("adam.m.{net}/{name}"), &self.optim[k].m[i]));
                out.push((format!("adam.v.{net}/{name}"), &self.optim[k].v[i]));
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut manifest = format!(
            "{MAGIC}\nversion {VERSION}\nepoch {}\nstep {}\nbest_val_psnr {}\n",
            self.epoch, self.step, self.best_val_psnr
        );
        for (net, opt) in NETS.iter().zip(&self.optim) {
            manifest.push_str(&format!("adam_t {net} {}\n", opt.t));
        }
        for line in config::render(&self.config).lines() {
            manifest.push_str(&format!("config {line}\n"));
        }
        let tensors = self.tensors();
        let mut offset = 0;
        for (name, t) in &tensors {
            manifest.push_str(&format!("tensor {name} {} {offset} {}\n", t.shape(), t.numel()));
            offset += t.numel();
        }
        manifest.push_str("end\n");
        let mut bytes = manifest.into_bytes();
        bytes.reserve(offset * 4);
        for (_, t) in &tensors {
            for v in t.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let end = find_manifest_end(bytes)?;
        let manifest =
            std::str::from_utf8(&bytes[..end]).map_err(|_| Error::Checkpoint("manifest is not UTF-8".into()))?;
        let payload = &bytes[end..];
        let mut lines = manifest.lines();
        if lines.next() != Some(MAGIC) {
            bail!(Checkpoint, "not a checkpoint (bad magic line)");
        }
        let mut cfg_text = String::new();
        let (mut epoch, mut step, mut best, mut adam_t) = (None, None, None, [None; 3]);
        let mut entries = Vec::new();
        for line in lines {
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            let bad = || Error::Checkpoint(format!("malformed manifest line {line:?}"));
            match key {
                "version" => {
                    let v: u32 = rest.parse().map_err(|_| bad())?;
                    if v != VERSION {
                        bail!(Checkpoint, "format version {v}, expected {VERSION}");
                    }
                }
                "epoch" => epoch = Some(rest.parse::<usize>().map_err(|_| bad())?),
                "step" => step = Some(rest.parse::<u64>().map_err(|_| bad())?),
                "best_val_psnr" => best = Some(rest.parse::<f64>().map_err(|_| bad())?),
                "adam_t" => {
                    let (net, t) = rest.split_once(' ').ok_or_else(bad)?;
                    let k = NETS.iter().position(|n| *n == net).ok_or_else(bad)?;
                    adam_t[k] = Some(t.parse::<u64>().map_err(|_| bad())?);
                }
                "config" => {
                    cfg_text.push_str(rest);
                    cfg_text.push('\n');
                }
                "tensor" => {
                    let f: Vec<&str> = rest.split(' ').collect();
                    if f.len() != 4 {
                        return Err(bad());
                    }
                    let shape = parse_shape(f[1]).ok_or_else(bad)?;
                    let offset: usize = f[2].parse().map_err(|_| bad())?;
                    let len: usize = f[3].parse().map_err(|_| bad())?;
                    if len != shape.numel() {
                        bail!(Checkpoint, "tensor {} length {len} disagrees with shape {shape}", f[0]);
                    }
                    entries.push((f[0].to_string(), shape, offset, len));
                }
                "end" => {}
                _ => return Err(bad()),
            }
        }
        let (Some(epoch), Some(step), Some(best)) = (epoch, step, best) else {
            bail!(Checkpoint, "manifest lacks epoch, step or best_val_psnr");
        };
        let total: usize = entries.iter().map(|e| e.3).sum();
        if payload.len() != total * 4 {
            bail!(
                Checkpoint,
                "payload holds {} bytes, manifest describes {}",
                payload.len(),
                total * 4
            );
        }
        let config = config::parse(&cfg_text).map_err(|e| Error::Checkpoint(format!("config snapshot: {e}")))?;
        let (mut ckpt, _) = Self::init(&config)?;
        ckpt.epoch = epoch;
        ckpt.step = step;
        ckpt.best_val_psnr = best;
        for (k, t) in adam_t.iter().enumerate() {
            ckpt.optim[k].t = t.ok_or_else(|| Error::Checkpoint(format!("missing adam_t for {}", NETS[k])))?;
        }

        let mut seen = HashSet::new();
        for (name, shape, offset, len) in &entries {
            if !seen.insert(name.clone()) {
                bail!(Checkpoint, "tensor {name} listed twice");
            }
            if offset + len > total {
                bail!(Checkpoint, "tensor {name} runs past the payload");
            }
            let data: Vec<f32> = payload[offset * 4..(offset + len) * 4]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let value = Tensor::from_vec(*shape, data).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
            ckpt.assign(name, value)?;
        }
        let expected = ckpt.tensors().len();
        if seen.len() != expected {
            bail!(
                Checkpoint,
                "checkpoint lists {} tensors, model needs {expected}",
                seen.len()
            );
        }
        Ok(ckpt)
    }

    fn assign(&mut self, name: &str, value: Tensor) -> Result<()> {
        let unknown = || Error::Checkpoint(format!("unknown tensor name {name}"));
        let (prefix, pname) = name.split_once('/').ok_or_else(unknown)?;
        let (slot, net) = match prefix.strip_prefix("adam.") {
            Some(rest) => {
                let (kind, net) = rest.split_once('.').ok_or_else(unknown)?;
                (Some(kind), net)
            }
            None => (None, prefix),
        };
        let k = NETS.iter().position(|n| *n == net).ok_or_else(unknown)?;
        let store = &mut self.params[k];
        match slot {
            None => store.assign(pname, value),
            Some(kind) => {
                let id = store.find(pname).ok_or_else(unknown)?;
                let buf = match kind {
                    "m" => &mut self.optim[k].m[id.index()],
                    "v" => &mut self.optim[k].v[id.index()],
                    _ => return Err(unknown()),
                };
                if buf.shape() != value.shape() {
                    bail!(
                        Checkpoint,
                        "tensor {name} has shape {}, expected {}",
                        value.shape(),
                        buf.shape()
                    );
                }
                *buf = value;
                Ok(())
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Names listed in the manifest, in order.
    pub fn manifest_names(&self) -> Vec<String> {
        self.tensors().into_iter().map(|(n, _)| n).collect()
    }
}

fn find_manifest_end(bytes: &[u8]) -> Result<usize> {
    const END: &[u8] = b"\nend\n";
    bytes
        .windows(END.len())
        .position(|w| w == END)
        .map(|p| p + END.len())
        .ok_or_else(|| Error::Checkpoint("manifest has no end line".into()))
}

fn parse_shape(s: &str) -> Option<Shape> {
    let d: Vec<usize> = s.split('x').map(|p| p.parse().ok()).collect::<Option<_>>()?;
    (d.len() == 4).then(|| Shape::new(d[0], d[1], d[2], d[3]))
}
