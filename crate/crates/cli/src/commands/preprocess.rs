use std::path::Path;

use toml::Value;

use glcmfuse_core::imagio::{
    load_image_auto, load_raw_volume, median_filter, median_filter_volume, quantize,
    quantize_image, save_image, save_volume, window_rescale, MedianFilterSpec, QuantizationSpec,
    DEFAULT_WINDOW,
};

use super::{ensure_distinct, i, is_pgm, output_stem, s};
use crate::config::Settings;
use crate::error::{CliError, CliResult};

pub fn defaults() -> Vec<(&'static str, Value)> {
    vec![
        ("input", s("")),
        ("window_low", i(DEFAULT_WINDOW.0.into())),
        ("window_high", i(DEFAULT_WINDOW.1.into())),
        ("median_radius", i(1)),
        ("levels", i(256)),
        ("output_name", s("")),
    ]
}

/// Window (volumes only), median filter, quantize.
pub fn run(st: &Settings, out: &Path) -> CliResult<()> {
    let input = st.required_path("input")?;
    let spec = MedianFilterSpec {
        window_radius: st.usize("median_radius")?,
    };
    let levels = u32::try_from(st.usize("levels")?)
        .map_err(|_| CliError::Config("levels out of range".into()))?;
    let window = |k: &str| {
        i32::try_from(st.int(k)).map_err(|_| CliError::Config(format!("{k} out of range")))
    };
    let stem = output_stem(st, &input);
    if is_pgm(&input) {
        let img = load_image_auto(&input)?;
        let img = median_filter(&img, spec)?;
        let img = quantize_image(&img, QuantizationSpec::new(img.levels(), levels)?)?;
        let path = out.join(format!("{stem}.pgm"));
        ensure_distinct(&input, &path)?;
        save_image(&path, &img)?;
    } else {
        let raw = load_raw_volume(&input)?;
        let vol = window_rescale(&raw, window("window_low")?, window("window_high")?)?;
        let vol = median_filter_volume(&vol, spec)?;
        let vol = quantize(&vol, QuantizationSpec::new(vol.levels(), levels)?)?;
        let path = out.join(format!("{stem}.vol"));
        ensure_distinct(&input, &path)?;
        save_volume(&path, &vol)?;
    }
    Ok(())
}
