use std::fmt::Write as _;
use std::path::Path;

use toml::Value;

use glcmfuse_core::imagio::{save_image, save_volume, GrayImage, Volume};
use glcmfuse_core::otsu::{binomial, DEFAULT_BUDGET};
use glcmfuse_core::wsa::{segment, BestSource, SegmentMethod, WsaConfig};

use super::{b, f, i, is_pgm, load_any, output_stem, s};
use crate::config::Settings;
use crate::error::{CliError, CliResult};
use crate::report::write;

pub fn defaults() -> Vec<(&'static str, Value)> {
    vec![
        ("input", s("")),
        ("thresholds", i(1)),
        ("method", s("wsa")),
        ("population", i(20)),
        ("territories", i(5)),
        ("iterations", i(100)),
        ("mating_probability", f(0.5)),
        ("best_source", s("global")),
        ("per_coordinate_rand", b(false)),
        ("budget", i(DEFAULT_BUDGET as i64)),
        ("output_name", s("")),
    ]
}

/// WSA settings shared with `bench`.
pub(crate) fn wsa_config(st: &Settings, thresholds: usize, seed: u64) -> CliResult<WsaConfig> {
    let best_source = match st.str("best_source") {
        "global" => BestSource::Global,
        "territory" => BestSource::Territory,
        other => return Err(CliError::Config(format!("unknown best_source {other:?}"))),
    };
    Ok(WsaConfig {
        population_size: st.usize("population")?,
        territories: st.usize("territories")?,
        max_iterations: st.usize("iterations")?,
        mating_probability: st.f64("mating_probability"),
        seed,
        thresholds,
        best_source,
        per_coordinate_rand: st.bool("per_coordinate_rand"),
    })
}

pub fn run(st: &Settings, out: &Path) -> CliResult<()> {
    let input = st.required_path("input")?;
    let vol = load_any(&input)?;
    let m = st.usize("thresholds")?;
    let levels = vol.levels() as usize;
    let budget = st.u64("budget")? as u128;
    let method = match st.str("method") {
        "wsa" => SegmentMethod::Wsa(wsa_config(st, m, st.seed())?),
        "exhaustive" => SegmentMethod::Exhaustive {
            thresholds: m,
            budget,
        },
        other => return Err(CliError::Config(format!("unknown method {other:?}"))),
    };
    let seg = segment(vol.voxels(), levels, &method)?;

    let stem = output_stem(st, &input);
    let classes = (m + 1) as u32;
    let labels: Vec<u16> = seg.labels.iter().map(|&l| u16::from(l)).collect();
    if is_pgm(&input) {
        let img = GrayImage::new(vol.width(), vol.height(), classes, labels)?;
        save_image(out.join(format!("{stem}_mask.pgm")), &img)?;
    } else {
        let mask = Volume::new(vol.dims(), classes, labels, vol.spacing_mm())?;
        save_volume(out.join(format!("{stem}_mask.vol")), &mask)?;
    }

    let mut t = String::from("index,threshold\n");
    for (k, c) in seg.thresholds.cuts().iter().enumerate() {
        let _ = writeln!(t, "{k},{c}");
    }
    write(out, "thresholds.csv", &t)?;

    let evaluations = match &seg.trace {
        Some(trace) => trace.evaluations() as u128,
        None => binomial(levels as u64 - 1, m as u64),
    };
    let cuts: Vec<String> = seg.thresholds.cuts().iter().map(usize::to_string).collect();
    let summary = format!(
        "method,thresholds,fitness,evaluations\n{},{},{},{}\n",
        st.str("method"),
        cuts.join(";"),
        seg.fitness,
        evaluations
    );
    write(out, "segmentation.csv", &summary)?;
    if let Some(trace) = &seg.trace {
        write(out, "trace.csv", &trace.to_csv())?;
    }
    println!("thresholds {} fitness {}", cuts.join(";"), seg.fitness);
    Ok(())
}
