use std::fmt::Write as _;
use std::path::Path;

use toml::Value;

use glcmfuse_core::fusion::CLASS_NAMES;
use glcmfuse_core::imagio::save_volume;

use super::{f, i};
use crate::config::Settings;
use crate::dataset::LABELS_FILE;
use crate::error::{CliError, CliResult};
use crate::report::write;
use crate::synth::{contrast_check, generate, SyntheticSpec};

pub fn defaults() -> Vec<(&'static str, Value)> {
    let d = SyntheticSpec::default();
    vec![
        ("per_class", i(d.per_class as i64)),
        ("depth", i(d.dims[0] as i64)),
        ("height", i(d.dims[1] as i64)),
        ("width", i(d.dims[2] as i64)),
        ("blur_radius", i(d.blur_radius as i64)),
        ("smooth_std", f(d.smooth_std)),
        ("checker_period", i(d.checker_period as i64)),
        ("checker_contrast", f(d.checker_contrast)),
        ("salt_fraction", f(d.salt_fraction)),
        ("salt_jitter", f(d.salt_jitter)),
        ("noise", f(d.noise)),
        ("check_levels", i(8)),
        ("check_factor", f(3.0)),
    ]
}

/// Writes the volumes, `labels.csv` and `contrast_check.csv`. Fails with a
/// config error if the class contrasts are not separated by `check_factor`.
pub fn run(st: &Settings, out: &Path) -> CliResult<()> {
    let spec = SyntheticSpec {
        per_class: st.usize("per_class")?,
        dims: [st.usize("depth")?, st.usize("height")?, st.usize("width")?],
        seed: st.seed(),
        blur_radius: st.usize("blur_radius")?,
        smooth_std: st.f64("smooth_std"),
        checker_period: st.usize("checker_period")?,
        checker_contrast: st.f64("checker_contrast"),
        salt_fraction: st.f64("salt_fraction"),
        salt_jitter: st.f64("salt_jitter"),
        noise: st.f64("noise"),
    };
    if spec.per_class < 2 || spec.dims.contains(&0) {
        return Err(CliError::Config(
            "need at least 2 volumes per class and non-zero dims".into(),
        ));
    }
    if !(0.0..=1.0).contains(&spec.salt_fraction) {
        return Err(CliError::Config("salt_fraction must be in [0, 1]".into()));
    }
    let items = generate(&spec)?;
    let mut labels = String::from("volume,label,class\n");
    for it in &items {
        let name = format!("{}.vol", it.name);
        save_volume(out.join(&name), &it.volume)?;
        let _ = writeln!(labels, "{name},{},{}", it.label, CLASS_NAMES[it.label]);
    }
    write(out, LABELS_FILE, &labels)?;

    let factor = st.f64("check_factor");
    let check = contrast_check(&items, st.usize("check_levels")?)?;
    let mut csv = String::from("statistic,value\n");
    for (k, (mean, std)) in check.stats.iter().enumerate() {
        let _ = writeln!(csv, "mean_contrast_{},{mean}", CLASS_NAMES[k]);
        let _ = writeln!(csv, "std_contrast_{},{std}", CLASS_NAMES[k]);
    }
    let _ = writeln!(csv, "min_separation,{}", check.min_separation);
    let _ = writeln!(csv, "required_separation,{factor}");
    write(out, "contrast_check.csv", &csv)?;
    println!(
        "{} volumes, contrast separation {:.2} (required {factor})",
        items.len(),
        check.min_separation
    );
    if !check.passes(factor) {
        return Err(CliError::Config(format!(
            "class contrasts separated by only {:.2} within-class std",
            check.min_separation
        )));
    }
    Ok(())
}
