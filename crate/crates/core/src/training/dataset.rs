//! Paired low/high image folders.
//!
//! A root holds `low/` and `high/` with pairs matched by file stem. If the root
//! has `train/` and `val/` subdirectories each is such a root; otherwise the
//! single pair of folders serves as both splits. In RAW mode `low/` holds
//! 16-bit mosaics, each with a `.txt` sidecar.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{bail, Result};
use crate::generator::InputMode;
use crate::isp;
use crate::numerics::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pair {
    pub name: String,
    pub low: PathBuf,
    pub high: PathBuf,
}

/// File listing of one split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairedDataset {
    pub root: PathBuf,
    pub pairs: Vec<Pair>,
}

fn pngs_by_stem(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    if !dir.is_dir() {
        bail!(Data, "missing directory {}", dir.display());
    }
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let is_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if !is_png {
            continue;
        }
        let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        if out.insert(stem.clone(), path).is_some() {
            bail!(Data, "{}: more than one image named {stem}", dir.display());
        }
    }
    Ok(out)
}

impl PairedDataset {
    pub fn open(root: &Path) -> Result<Self> {
        let low = pngs_by_stem(&root.join("low"))?;
        let mut high = pngs_by_stem(&root.join("high"))?;
        let mut pairs = Vec::with_capacity(low.len());
        for (name, low) in low {
            let Some(high) = high.remove(&name) else {
                bail!(Data, "{}: low image {name} has no high counterpart", root.display());
            };
            pairs.push(Pair { name, low, high });
        }
        if let Some(name) = high.keys().next() {
            bail!(Data, "{}: high image {name} has no low counterpart", root.display());
        }
        if pairs.is_empty() {
            bail!(Data, "{}: no image pairs", root.display());
        }
        Ok(Self {
            root: root.to_path_buf(),
            pairs,
        })
    }

    /// Train and validation splits under `root`.
    pub fn splits(root: &Path) -> Result<(Self, Self)> {
        let train = root.join("train");
        if train.is_dir() {
            Ok((Self::open(&train)?, Self::open(&root.join("val"))?))
        } else {
            let all = Self::open(root)?;
            Ok((all.clone(), all))
        }
    }

    pub fn load(&self, mode: InputMode, raw_gain: f64) -> Result<PairedData> {
        let mut data = PairedData::default();
        for p in &self.pairs {
            let low = load_input(&p.low, mode, raw_gain)?;
            let high = isp::load_rgb(&p.high)?;
            data.push(&p.name, low, high, mode)?;
        }
        Ok(data)
    }
}

/// Reads one network input: an sRGB PNG or a packed RAW mosaic.
pub fn load_input(path: &Path, mode: InputMode, raw_gain: f64) -> Result<Tensor> {
    match mode {
        InputMode::Srgb3 => isp::load_rgb(path),
        InputMode::Raw4 => isp::pack_raw_with_gain(&isp::load_mosaic(path)?, raw_gain),
    }
}

/// Decoded pairs held in memory, each a batch-of-one tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairedData {
    pub names: Vec<String>,
    pub low: Vec<Tensor>,
    pub high: Vec<Tensor>,
}

impl PairedData {
    pub fn push(&mut self, name: &str, low: Tensor, high: Tensor, mode: InputMode) -> Result<()> {
        let (ls, hs) = (low.shape(), high.shape());
        let scale = if mode == InputMode::Raw4 { 2 } else { 1 };
        if ls.n != 1
            || hs.n != 1
            || ls.c != mode.channels()
            || hs.c != 3
            || ls.h * scale != hs.h
            || ls.w * scale != hs.w
        {
            bail!(
                Data,
                "pair {name}: input {ls} does not match target {hs} in {} mode",
                mode.as_str()
            );
        }
        self.names.push(name.to_string());
        self.low.push(low);
        self.high.push(high);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}
