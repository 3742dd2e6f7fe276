use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use toml::Value;

use glcmfuse_core::glcm::descriptors_csv;

use super::{b, i, load_any, output_stem, s};
use crate::config::Settings;
use crate::dataset::FeatureSpec;
use crate::error::{CliError, CliResult};
use crate::report::write;

pub fn defaults() -> Vec<(&'static str, Value)> {
    vec![
        ("input", s("")),
        ("mode", s("vs_3d")),
        // 0 picks 256 for 2d_directions and 32 otherwise
        ("levels", i(0)),
        ("symmetric", b(false)),
        ("distance", i(1)),
        ("descriptors", b(false)),
        ("mask", s("")),
        ("mask_min_label", i(1)),
        ("slice", i(-1)),
        ("output_name", s("")),
    ]
}

pub fn run(st: &Settings, out: &Path) -> CliResult<()> {
    let input = st.required_path("input")?;
    let vol = load_any(&input)?;
    let spec = FeatureSpec::from_settings(st)?;
    let mask: Option<Vec<bool>> = match st.path("mask") {
        None => None,
        Some(p) => {
            let m = load_any(&p)?;
            if m.dims() != vol.dims() {
                return Err(CliError::Data(format!(
                    "mask dims {:?} differ from volume dims {:?}",
                    m.dims(),
                    vol.dims()
                )));
            }
            let min = st.u64("mask_min_label")?;
            Some(m.voxels().iter().map(|&v| u64::from(v) >= min).collect())
        }
    };
    let slice = usize::try_from(st.int("slice")).ok();
    let blocks = spec.blocks(&vol, mask.as_deref(), slice)?;
    let seq = spec.sequence(&blocks);

    let stem = output_stem(st, &input);
    let path = out.join(format!("{stem}.tensor"));
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    seq.write_tensor(BufWriter::new(file))
        .map_err(|e| CliError::io(&path, e))?;
    if spec.descriptors {
        write(
            out,
            &format!("{stem}_descriptors.csv"),
            &descriptors_csv(&blocks),
        )?;
    }
    println!(
        "{} timesteps x {} features ({})",
        seq.len(),
        seq.feature_len,
        seq.mode
    );
    Ok(())
}
