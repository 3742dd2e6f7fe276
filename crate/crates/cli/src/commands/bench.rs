//! Thresholding benchmark: fitness, evaluation counts and time per method and `m`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use toml::Value;

use glcmfuse_core::imagio::load_image_auto;
use glcmfuse_core::otsu::{binomial, exhaustive_optimize, Histogram, DEFAULT_BUDGET};
use glcmfuse_core::wsa::optimize;
use glcmfuse_core::Error as CoreError;

use super::segment::wsa_config;
use super::{b, f, i, is_pgm, s};
use crate::config::Settings;
use crate::error::{CliError, CliResult};
use crate::report::write;

pub fn defaults() -> Vec<(&'static str, Value)> {
    vec![
        ("corpus", s("")),
        ("histograms", i(3)),
        ("bins", i(256)),
        ("m_list", s("1,2,3,5")),
        ("methods", s("wsa,exhaustive")),
        ("repeats", i(3)),
        ("population", i(20)),
        ("territories", i(5)),
        ("iterations", i(100)),
        ("mating_probability", f(0.5)),
        ("best_source", s("global")),
        ("per_coordinate_rand", b(false)),
        ("budget", i(DEFAULT_BUDGET as i64)),
    ]
}

/// A seeded mixture of two to four Gaussian modes over `bins` levels.
pub fn synthetic_histogram(bins: usize, seed: u64, index: u64) -> Histogram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let modes = rng.gen_range(2..=4);
    let mut counts = vec![0u64; bins];
    let top = bins as f64 - 1.0;
    for _ in 0..modes {
        let mean = rng.gen_range(0.1 * top..0.9 * top);
        let std = rng.gen_range(0.02 * top..0.08 * top).max(0.5);
        let weight = rng.gen_range(2000..8000);
        let normal = Normal::new(mean, std).expect("positive std");
        for _ in 0..weight {
            let v = normal.sample(&mut rng).round().clamp(0.0, top);
            counts[v as usize] += 1;
        }
    }
    Histogram::new(counts)
}

fn corpus(st: &Settings) -> CliResult<Vec<(String, Histogram)>> {
    let Some(path) = st.path("corpus") else {
        let bins = st.usize("bins")?;
        if bins < 2 {
            return Err(CliError::Config("bins must be at least 2".into()));
        }
        return Ok((0..st.u64("histograms")?)
            .map(|k| {
                (
                    format!("synthetic_{k}"),
                    synthetic_histogram(bins, st.seed(), k),
                )
            })
            .collect());
    };
    let files = if path.is_dir() {
        let mut v: Vec<_> = fs::read_dir(&path)
            .map_err(|e| CliError::io(&path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| is_pgm(p) || p.extension().is_some_and(|e| e == "vol"))
            .collect();
        v.sort();
        v
    } else {
        vec![path]
    };
    files
        .into_iter()
        .map(|p| {
            let h = if is_pgm(&p) {
                load_image_auto(&p)?.histogram()
            } else {
                glcmfuse_core::imagio::load_volume(&p)?.histogram()
            };
            let name = p
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or("?")
                .to_string();
            Ok((name, h))
        })
        .collect()
}

pub fn run(st: &Settings, out: &Path) -> CliResult<()> {
    let hists = corpus(st)?;
    if hists.is_empty() {
        return Err(CliError::Data("benchmark corpus is empty".into()));
    }
    let ms_list = st.usize_list("m_list")?;
    let methods = st.str_list("methods");
    if let Some(m) = methods
        .iter()
        .find(|m| !matches!(m.as_str(), "wsa" | "exhaustive"))
    {
        return Err(CliError::Config(format!("unknown method {m:?}")));
    }
    let repeats = st.usize("repeats")?;
    let budget = st.u64("budget")? as u128;

    let mut rows = String::from("histogram,method,m,repeat,fitness,evaluations,elapsed_ms\n");
    let mut conv =
        String::from("histogram,m,repeat,iteration,best_fitness,evaluations,elapsed_ms\n");
    let mut log = String::new();
    // max WSA evaluations seen per m
    let mut wsa_max: Vec<(usize, usize, u64)> = Vec::new();
    for (name, h) in &hists {
        for &m in &ms_list {
            for method in &methods {
                for r in 0..repeats {
                    let t = Instant::now();
                    let (fitness, evaluations) = if method == "wsa" {
                        let cfg = wsa_config(st, m, st.seed().wrapping_add(r as u64))?;
                        let res = optimize(h, &cfg)?;
                        for row in &res.trace.rows {
                            let _ = writeln!(
                                conv,
                                "{name},{m},{r},{},{},{},{:.3}",
                                row.iteration, row.best_fitness, row.evaluations, row.elapsed_ms
                            );
                        }
                        let n = res.trace.evaluations();
                        match wsa_max.iter_mut().find(|e| e.0 == m && e.1 == h.levels()) {
                            Some(e) => e.2 = e.2.max(n),
                            None => wsa_max.push((m, h.levels(), n)),
                        }
                        (res.fitness, n as u128)
                    } else {
                        match exhaustive_optimize(h, m, budget) {
                            Ok((_, fit)) => (fit, binomial(h.levels() as u64 - 1, m as u64)),
                            Err(CoreError::Budget {
                                combinations,
                                budget,
                            }) => {
                                let _ = writeln!(
                                    log,
                                    "{name}: exhaustive m={m} skipped, {combinations} combinations exceed budget {budget}"
                                );
                                eprintln!("skipping exhaustive m={m} on {name}: over budget");
                                break;
                            }
                            Err(e) => return Err(e.into()),
                        }
                    };
                    let elapsed = t.elapsed().as_secs_f64() * 1e3;
                    let _ = writeln!(
                        rows,
                        "{name},{method},{m},{r},{fitness},{evaluations},{elapsed:.3}"
                    );
                }
            }
        }
    }
    write(out, "bench.csv", &rows)?;
    write(out, "convergence.csv", &conv)?;
    write(out, "bench.log", &log)?;

    let mut cx = String::from(
        "m,bins,wsa_max_evaluations,wsa_evaluation_bound,exhaustive_combinations,combinations_per_evaluation\n",
    );
    for &(m, bins, evals) in &wsa_max {
        let bound = wsa_config(st, m, 0)?.max_evaluations();
        let combos = binomial(bins as u64 - 1, m as u64);
        let ratio = combos as f64 / evals as f64;
        let _ = writeln!(cx, "{m},{bins},{evals},{bound},{combos},{ratio}");
        println!(
            "m={m}, {bins} bins: WSA used at most {evals} objective evaluations (bound {bound}); \
             exhaustive search needs C({}, {m}) = {combos}, ratio {ratio:.3e}",
            bins - 1
        );
    }
    write(out, "complexity.csv", &cx)?;
    Ok(())
}
