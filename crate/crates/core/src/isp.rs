//! Image ingestion: PNG files for sRGB mode, Bayer mosaics with a text sidecar
//! for RAW mode, and packing of mosaics into 4-channel tensors.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use png::{BitDepth, ColorType, Transformations};

use crate::error::{bail, Error, Result};
use crate::numerics::tensor::{Shape, Tensor};

pub const DEFAULT_BLACK_LEVEL: u32 = 512;
pub const DEFAULT_WHITE_LEVEL: u32 = 16383;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CfaPattern {
    Rggb,
    Bggr,
    Grbg,
    Gbrg,
}

impl CfaPattern {
    pub const ALL: [CfaPattern; 4] = [Self::Rggb, Self::Bggr, Self::Grbg, Self::Gbrg];

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "RGGB" => Ok(Self::Rggb),
            "BGGR" => Ok(Self::Bggr),
            "GRBG" => Ok(Self::Grbg),
            "GBRG" => Ok(Self::Gbrg),
            other => bail!(Format, "unknown CFA pattern {other:?}"),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Rggb => "RGGB",
            Self::Bggr => "BGGR",
            Self::Grbg => "GRBG",
            Self::Gbrg => "GBRG",
        }
    }

    /// `(dy, dx)` of the R, G1, B and G2 sites inside a 2x2 cell. G1 is the
    /// first green site in raster order.
    pub fn offsets(self) -> [(usize, usize); 4] {
        match self {
            Self::Rggb => [(0, 0), (0, 1), (1, 1), (1, 0)],
            Self::Bggr => [(1, 1), (0, 1), (0, 0), (1, 0)],
            Self::Grbg => [(0, 1), (0, 0), (1, 0), (1, 1)],
            Self::Gbrg => [(1, 0), (0, 0), (0, 1), (1, 1)],
        }
    }
}

/// 16-bit colour filter array frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BayerMosaic {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u16>,
    pub pattern: CfaPattern,
    pub black_level: u32,
    pub white_level: u32,
}

impl BayerMosaic {
    pub fn new(
        height: usize,
        width: usize,
        data: Vec<u16>,
        pattern: CfaPattern,
        black_level: u32,
        white_level: u32,
    ) -> Result<Self> {
        let m = Self {
            height,
            width,
            data,
            pattern,
            black_level,
            white_level,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.len() != self.height * self.width {
            bail!(
                Dimension,
                "mosaic data has {} values for {}x{}",
                self.data.len(),
                self.height,
                self.width
            );
        }
        if !self.height.is_multiple_of(2) || !self.width.is_multiple_of(2) || self.height == 0 || self.width == 0 {
            bail!(
                Dimension,
                "mosaic dimensions {}x{} must be even and non-zero",
                self.height,
                self.width
            );
        }
        if self.black_level >= self.white_level || self.white_level > 65535 {
            bail!(
                Parameter,
                "black level {} must be below white level {} (max 65535)",
                self.black_level,
                self.white_level
            );
        }
        Ok(())
    }

    pub fn at(&self, y: usize, x: usize) -> u16 {
        self.data[y * self.width + x]
    }
}

/// Packs a mosaic into `1 x 4 x H/2 x W/2` with channels (R, G1, B, G2).
pub fn pack_raw(mosaic: &BayerMosaic) -> Result<Tensor> {
    pack_raw_with_gain(mosaic, 1.0)
}

/// [`pack_raw`] with an exposure gain applied after black-level normalisation.
pub fn pack_raw_with_gain(mosaic: &BayerMosaic, gain: f64) -> Result<Tensor> {
    mosaic.validate()?;
    if !(gain.is_finite() && gain > 0.0) {
        bail!(Parameter, "raw gain must be positive, got {gain}");
    }
    let (b, w) = (mosaic.black_level as f64, mosaic.white_level as f64);
    let range = w - b;
    let offs = mosaic.pattern.offsets();
    let shape = Shape::new(1, 4, mosaic.height / 2, mosaic.width / 2);
    Ok(Tensor::from_fn(shape, |_, c, y, x| {
        let (dy, dx) = offs[c];
        let v = mosaic.at(2 * y + dy, 2 * x + dx) as f64;
        ((v - b) / range * gain).clamp(0.0, 1.0) as f32
    }))
}

/// Inverse of [`pack_raw`] for one sample: rescales to sensor codes and
/// scatters the four channels back onto the CFA sites.
pub fn unpack_raw(
    packed: &Tensor,
    n: usize,
    pattern: CfaPattern,
    black_level: u32,
    white_level: u32,
) -> Result<BayerMosaic> {
    let s = packed.shape();
    if s.c != 4 || n >= s.n {
        bail!(Dimension, "cannot unpack sample {n} of {s}");
    }
    let (b, w) = (black_level as f64, white_level as f64);
    let (height, width) = (2 * s.h, 2 * s.w);
    let mut data = vec![0u16; height * width];
    for (c, (dy, dx)) in pattern.offsets().into_iter().enumerate() {
        for y in 0..s.h {
            for x in 0..s.w {
                let v = packed.at(n, c, y, x) as f64;
                let code = (b + v.clamp(0.0, 1.0) * (w - b)).round();
                data[(2 * y + dy) * width + 2 * x + dx] = code as u16;
            }
        }
    }
    BayerMosaic::new(height, width, data, pattern, black_level, white_level)
}

fn format_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

struct RawPng {
    width: usize,
    height: usize,
    channels: usize,
    depth: BitDepth,
    bytes: Vec<u8>,
}

fn decode_png(path: &Path) -> Result<RawPng> {
    let file = File::open(path)?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| format_err(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| format_err(path, "image too large"))?;
    let mut bytes = vec![0; size];
    let info = reader.next_frame(&mut bytes).map_err(|e| format_err(path, e))?;
    bytes.truncate(info.buffer_size());
    let channels = match info.color_type {
        ColorType::Grayscale => 1,
        ColorType::GrayscaleAlpha => 2,
        ColorType::Rgb => 3,
        ColorType::Rgba => 4,
        ColorType::Indexed => bail!(Format, "{}: palette images are not supported", path.display()),
    };
    if !matches!(info.bit_depth, BitDepth::Eight | BitDepth::Sixteen) {
        bail!(Format, "{}: unsupported bit depth {:?}", path.display(), info.bit_depth);
    }
    Ok(RawPng {
        width: info.width as usize,
        height: info.height as usize,
        channels,
        depth: info.bit_depth,
        bytes,
    })
}

impl RawPng {
    fn sample(&self, i: usize) -> u16 {
        match self.depth {
            BitDepth::Sixteen => u16::from_be_bytes([self.bytes[2 * i], self.bytes[2 * i + 1]]),
            _ => self.bytes[i] as u16,
        }
    }

    fn max(&self) -> f32 {
        if self.depth == BitDepth::Sixteen {
            65535.0
        } else {
            255.0
        }
    }
}

/// Reads an 8- or 16-bit PNG into `1 x C x H x W` with values in [0, 1].
/// Alpha is dropped; grey images give one channel.
pub fn load_image(path: &Path) -> Result<Tensor> {
    let png = decode_png(path)?;
    let colour = if png.channels >= 3 { 3 } else { 1 };
    let max = png.max();
    let (w, ch) = (png.width, png.channels);
    Ok(Tensor::from_fn(Shape::new(1, colour, png.height, w), |_, c, y, x| {
        png.sample((y * w + x) * ch + c) as f32 / max
    }))
}

/// [`load_image`] forced to three channels (grey is replicated).
pub fn load_rgb(path: &Path) -> Result<Tensor> {
    let t = load_image(path)?;
    if t.shape().c == 3 {
        return Ok(t);
    }
    let s = t.shape();
    Ok(Tensor::from_fn(s.with_c(3), |n, _, y, x| t.at(n, 0, y, x)))
}

/// `round_half_up(clamp(v, 0, 1) * max)`.
pub fn quantize(v: f32, max: f32) -> u16 {
    let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    (v as f64 * max as f64 + 0.5).floor() as u16
}

/// Writes sample 0 of a 1- or 3-channel tensor as an 8-bit PNG.
pub fn save_image(t: &Tensor, path: &Path) -> Result<()> {
    let s = t.shape();
    let color = match s.c {
        1 => ColorType::Grayscale,
        3 => ColorType::Rgb,
        c => bail!(Dimension, "cannot save a {c}-channel image"),
    };
    let mut bytes = Vec::with_capacity(s.c * s.plane());
    for y in 0..s.h {
        for x in 0..s.w {
            for c in 0..s.c {
                bytes.push(quantize(t.at(0, c, y, x), 255.0) as u8);
            }
        }
    }
    write_png(path, s.w, s.h, color, BitDepth::Eight, &bytes)
}

fn write_png(path: &Path, w: usize, h: usize, color: ColorType, depth: BitDepth, bytes: &[u8]) -> Result<()> {
    let file = File::create(path)?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    enc.set_color(color);
    enc.set_depth(depth);
    let mut writer = enc.write_header().map_err(|e| format_err(path, e))?;
    writer.write_image_data(bytes).map_err(|e| format_err(path, e))?;
    writer.finish().map_err(|e| format_err(path, e))?;
    Ok(())
}

/// Sidecar path for a mosaic: same stem, `.txt` extension.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("txt")
}

/// Parses `key = value` sidecar text (`cfa_pattern`, `black_level`, `white_level`).
pub fn parse_sidecar(text: &str) -> Result<(CfaPattern, u32, u32)> {
    let (mut pattern, mut black, mut white) = (None, DEFAULT_BLACK_LEVEL, DEFAULT_WHITE_LEVEL);
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!(Format, "sidecar line {}: expected key = value", i + 1);
        };
        let (k, v) = (k.trim(), v.trim());
        let int = |v: &str| {
            v.parse::<u32>()
                .map_err(|_| Error::Format(format!("sidecar line {}: {k} is not an integer", i + 1)))
        };
        match k {
            "cfa_pattern" => pattern = Some(CfaPattern::parse(v)?),
            "black_level" => black = int(v)?,
            "white_level" => white = int(v)?,
            _ => bail!(Format, "sidecar line {}: unknown key {k:?}", i + 1),
        }
    }
    let pattern = pattern.ok_or_else(|| Error::Format("sidecar lacks cfa_pattern".into()))?;
    Ok((pattern, black, white))
}

/// Reads a 16-bit grey PNG mosaic plus its sidecar.
pub fn load_mosaic(path: &Path) -> Result<BayerMosaic> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| format_err(&side, format!("missing sidecar ({e})")))?;
    let (pattern, black, white) = parse_sidecar(&text)?;
    let png = decode_png(path)?;
    if png.channels != 1 || png.depth != BitDepth::Sixteen {
        bail!(Format, "{}: RAW mosaics must be 16-bit greyscale PNG", path.display());
    }
    let data = (0..png.width * png.height).map(|i| png.sample(i)).collect();
    BayerMosaic::new(png.height, png.width, data, pattern, black, white)
}

/// Writes a mosaic as 16-bit grey PNG plus sidecar.
pub fn save_mosaic(m: &BayerMosaic, path: &Path) -> Result<()> {
    m.validate()?;
    let bytes: Vec<u8> = m.data.iter().flat_map(|v| v.to_be_bytes()).collect();
    write_png(path, m.width, m.height, ColorType::Grayscale, BitDepth::Sixteen, &bytes)?;
    let text = format!(
        "cfa_pattern = {}\nblack_level = {}\nwhite_level = {}\n",
        m.pattern.as_str(),
        m.black_level,
        m.white_level
    );
    fs::write(sidecar_path(path), text)?;
    Ok(())
}
