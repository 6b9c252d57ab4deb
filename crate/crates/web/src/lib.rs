//! Browser bindings: spectrum views, PSD curves and generator cost for
//! images dropped into `www/index.html`.
//!
//! Every export has a plain Rust twin returning [`afnet::Result`], which is
//! what the native tests exercise; the `#[wasm_bindgen]` wrappers only map
//! errors to `JsError`.

use afnet::analysis::spectral::{blue_red, fft_diff_heatmap, psd_curve, spectrum_planes};
use afnet::generator::count_macs;
use afnet::{config, Error, Result, Shape, Tensor};
use wasm_bindgen::prelude::*;

/// Canvas `ImageData` bytes (RGBA, row-major) as a `1 x 3 x h x w` tensor.
pub fn rgba_to_tensor(rgba: &[u8], width: usize, height: usize) -> Result<Tensor> {
    if width == 0 || height == 0 || rgba.len() != width * height * 4 {
        return Err(Error::Dimension(format!(
            "{} bytes is not a {width}x{height} RGBA image",
            rgba.len()
        )));
    }
    Ok(Tensor::from_fn(Shape::new(1, 3, height, width), |_, c, y, x| {
        rgba[(y * width + x) * 4 + c] as f32 / 255.0
    }))
}

fn grey_rgba(plane: &[f64]) -> Vec<u8> {
    plane
        .iter()
        .flat_map(|&v| {
            let g = (v.clamp(0.0, 1.0) * 255.0 + 0.5) as u8;
            [g, g, g, 255]
        })
        .collect()
}

fn heat_rgba(plane: &[f64]) -> Vec<u8> {
    plane
        .iter()
        .flat_map(|&v| {
            let [r, g, b] = blue_red(v);
            [r, g, b, 255]
        })
        .collect()
}

/// Centred log-magnitude (`"magnitude"`) or phase (`"phase"`) of the luma
/// spectrum as RGBA bytes of the same size.
pub fn spectrum_view(rgba: &[u8], width: usize, height: usize, which: &str) -> Result<Vec<u8>> {
    let f = spectrum_planes(&rgba_to_tensor(rgba, width, height)?, 0)?;
    match which {
        "magnitude" => Ok(grey_rgba(&f.magnitude)),
        "phase" => Ok(grey_rgba(&f.phase.iter().map(|p| 0.5 * (p + 1.0)).collect::<Vec<_>>())),
        _ => Err(Error::Parameter(format!("unknown spectrum view {which:?}"))),
    }
}

/// Blue-to-red map of the magnitude or phase difference between two images.
pub fn spectrum_diff(a: &[u8], b: &[u8], width: usize, height: usize, which: &str) -> Result<Vec<u8>> {
    let d = fft_diff_heatmap(
        &rgba_to_tensor(a, width, height)?,
        &rgba_to_tensor(b, width, height)?,
        0,
    )?;
    match which {
        "magnitude" => Ok(heat_rgba(&d.magnitude)),
        "phase" => Ok(heat_rgba(&d.phase)),
        _ => Err(Error::Parameter(format!("unknown spectrum view {which:?}"))),
    }
}

/// Mean log10 power per radial bin, `floor(min(h, w) / 2)` values.
pub fn psd(rgba: &[u8], width: usize, height: usize) -> Result<Vec<f64>> {
    Ok(psd_curve(&rgba_to_tensor(rgba, width, height)?, 0)?.log_power)
}

/// Generator GMACs for a square input under a `key = value` config.
pub fn gmacs(config_text: &str, res: usize) -> Result<f64> {
    let cfg = config::parse(config_text)?;
    cfg.generator.validate()?;
    let c = cfg.generator.input_mode.channels();
    Ok(count_macs(&cfg.generator, Shape::new(1, c, res, res))?.gmacs())
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = spectrumView)]
pub fn spectrum_view_js(rgba: &[u8], width: usize, height: usize, which: &str) -> Result<Vec<u8>, JsError> {
    spectrum_view(rgba, width, height, which).map_err(js)
}

#[wasm_bindgen(js_name = spectrumDiff)]
pub fn spectrum_diff_js(a: &[u8], b: &[u8], width: usize, height: usize, which: &str) -> Result<Vec<u8>, JsError> {
    spectrum_diff(a, b, width, height, which).map_err(js)
}

#[wasm_bindgen(js_name = psdCurve)]
pub fn psd_js(rgba: &[u8], width: usize, height: usize) -> Result<Vec<f64>, JsError> {
    psd(rgba, width, height).map_err(js)
}

#[wasm_bindgen(js_name = generatorGmacs)]
pub fn gmacs_js(config_text: &str, res: usize) -> Result<f64, JsError> {
    gmacs(config_text, res).map_err(js)
}
