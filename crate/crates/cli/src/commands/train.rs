use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use toml::Value;

use glcmfuse_core::fusion::{
    load_checkpoint, save_checkpoint, train, Architecture, CellActivation, FusionModel,
    TrainConfig, TrainTrace,
};
use glcmfuse_core::glcm::GlcmSequence;
use glcmfuse_core::metrics::{kfold_split, ScoredSample};

use super::{b, f, i, s};
use crate::config::Settings;
use crate::dataset::{
    featurize, read_labels, read_split, split_csv, stratified_split, FeatureSpec, Sample,
    SPLIT_FILE,
};
use crate::error::{CliError, CliResult};
use crate::report::{score_all, timing_csv, write, write_report};

pub const CHECKPOINT: &str = "model.tfuse";
pub const FEATURES: &str = "model.features";

pub fn train_defaults() -> Vec<(&'static str, Value)> {
    let t = TrainConfig::default();
    let a = Architecture::default();
    vec![
        ("dataset", s("")),
        ("mode", s("vs_3d")),
        ("levels", i(8)),
        ("symmetric", b(false)),
        ("distance", i(1)),
        ("descriptors", b(false)),
        ("hidden", i(a.hidden as i64)),
        ("dense_hidden", i(a.dense_hidden as i64)),
        ("activation", s(a.activation.as_str())),
        ("unshared", b(false)),
        // 0 scales each layer by its fan-in and fan-out
        ("init_scale", f(0.0)),
        ("learning_rate", f(t.learning_rate)),
        ("epochs", i(t.epochs as i64)),
        ("batch_size", i(t.batch_size as i64)),
        ("test_fraction", f(0.2)),
        ("folds", i(0)),
    ]
}

pub fn eval_defaults() -> Vec<(&'static str, Value)> {
    vec![
        ("dataset", s("")),
        ("checkpoint", s("")),
        ("split_file", s("")),
        ("subset", s("all")),
    ]
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn architecture(st: &Settings, timesteps: usize) -> CliResult<Architecture> {
    let scale = st.f64("init_scale");
    Ok(Architecture {
        hidden: st.usize("hidden")?,
        dense_hidden: st.usize("dense_hidden")?,
        activation: CellActivation::parse(st.str("activation"))?,
        unshared_timesteps: st.bool("unshared").then_some(timesteps),
        init_scale: (scale > 0.0).then_some(scale),
        seed: st.seed(),
    })
}

fn train_config(st: &Settings) -> CliResult<TrainConfig> {
    Ok(TrainConfig {
        learning_rate: st.f64("learning_rate"),
        epochs: st.usize("epochs")?,
        batch_size: st.usize("batch_size")?,
        seed: st.seed(),
    })
}

fn fit(
    st: &Settings,
    spec: &FeatureSpec,
    data: &[(GlcmSequence, usize)],
    timesteps: usize,
) -> CliResult<(FusionModel, TrainTrace)> {
    let f = data.first().map_or(0, |d| d.0.feature_len);
    let mut model = FusionModel::new(spec.model_mode(), f, &architecture(st, timesteps)?)?;
    let trace = train(&mut model, data, &train_config(st)?)?;
    Ok((model, trace))
}

fn names(samples: &[Sample], pick: &[usize]) -> Vec<String> {
    pick.iter().map(|&k| samples[k].name.clone()).collect()
}

pub fn run_train(st: &Settings, out: &Path) -> CliResult<()> {
    let dataset = st.required_path("dataset")?;
    let spec = FeatureSpec::from_settings(st)?;
    let samples = read_labels(&dataset)?;
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();

    let t = Instant::now();
    let seqs = featurize(&samples, &spec, None)?;
    let feature_ms = ms(t);
    let timesteps = seqs.first().map_or(0, GlcmSequence::len);

    match st.usize("folds")? {
        0 | 1 => {}
        k => return cross_validate(st, out, &spec, &samples, &seqs, k, feature_ms),
    }

    let is_test = stratified_split(&labels, st.f64("test_fraction"), st.seed())?;
    let train_idx: Vec<usize> = (0..samples.len()).filter(|&k| !is_test[k]).collect();
    let test_idx: Vec<usize> = (0..samples.len()).filter(|&k| is_test[k]).collect();
    write(out, SPLIT_FILE, &split_csv(&samples, &is_test))?;

    let data: Vec<(GlcmSequence, usize)> = train_idx
        .iter()
        .map(|&k| (seqs[k].clone(), labels[k]))
        .collect();
    let t = Instant::now();
    let (model, trace) = fit(st, &spec, &data, timesteps)?;
    let train_ms = ms(t);
    save_checkpoint(&model, out.join(CHECKPOINT))?;
    spec.save(&out.join(FEATURES), timesteps)?;
    write(out, "train_trace.csv", &trace.to_csv())?;

    let t = Instant::now();
    let test_seqs: Vec<&GlcmSequence> = test_idx.iter().map(|&k| &seqs[k]).collect();
    let test_labels: Vec<usize> = test_idx.iter().map(|&k| labels[k]).collect();
    let scored = score_all(&model, &test_seqs, &test_labels)?;
    let test_ms = ms(t);

    let test_names = names(&samples, &test_idx);
    let name_refs: Vec<&str> = test_names.iter().map(String::as_str).collect();
    let header = [
        ("evaluated", "test".to_string()),
        ("n_total", samples.len().to_string()),
        ("n_train", train_idx.len().to_string()),
        ("n_test", test_idx.len().to_string()),
        ("parameters", model.param_count().to_string()),
    ];
    let summary = write_report(out, &name_refs, &scored, &header)?;
    write(
        out,
        "timing.csv",
        &timing_csv(&[
            ("features", feature_ms),
            ("training", train_ms),
            ("testing", test_ms),
            ("testing_per_volume", test_ms / test_idx.len() as f64),
        ]),
    )?;
    println!(
        "train {} / test {}: accuracy {:.4} (macro {:.4}), macro AUC {}",
        train_idx.len(),
        test_idx.len(),
        summary.plain_accuracy,
        summary.macro_accuracy.unwrap_or(f64::NAN),
        summary
            .macro_auc
            .map_or("undefined".into(), |a| format!("{a:.4}"))
    );
    Ok(())
}

fn cross_validate(
    st: &Settings,
    out: &Path,
    spec: &FeatureSpec,
    samples: &[Sample],
    seqs: &[GlcmSequence],
    k: usize,
    feature_ms: f64,
) -> CliResult<()> {
    let folds = kfold_split(samples.len(), k, st.seed())?;
    let timesteps = seqs.first().map_or(0, GlcmSequence::len);
    let mut pooled: Vec<Option<ScoredSample>> = vec![None; samples.len()];
    let mut cv = String::from("fold,train_size,test_size,accuracy\n");
    let mut traces = String::from("fold,epoch,mean_loss,train_accuracy,elapsed_ms\n");
    let mut accuracies = Vec::new();
    let t = Instant::now();
    for fold in 0..k {
        let (test_idx, train_idx): (Vec<usize>, Vec<usize>) =
            (0..samples.len()).partition(|&j| folds[j] == fold);
        let data: Vec<(GlcmSequence, usize)> = train_idx
            .iter()
            .map(|&j| (seqs[j].clone(), samples[j].label))
            .collect();
        let (model, trace) = fit(st, spec, &data, timesteps)?;
        for line in trace.to_csv().lines().skip(1) {
            let _ = writeln!(traces, "{fold},{line}");
        }
        let test_seqs: Vec<&GlcmSequence> = test_idx.iter().map(|&j| &seqs[j]).collect();
        let test_labels: Vec<usize> = test_idx.iter().map(|&j| samples[j].label).collect();
        let scored = score_all(&model, &test_seqs, &test_labels)?;
        let correct = scored
            .iter()
            .filter(|s| glcmfuse_core::fusion::argmax(&s.scores) == s.label)
            .count();
        let acc = correct as f64 / test_idx.len() as f64;
        accuracies.push(acc);
        let _ = writeln!(cv, "{fold},{},{},{acc}", train_idx.len(), test_idx.len());
        for (j, s) in test_idx.into_iter().zip(scored) {
            pooled[j] = Some(s);
        }
    }
    let cv_ms = ms(t);
    let mean = accuracies.iter().sum::<f64>() / k as f64;
    let _ = writeln!(cv, "mean,,,{mean}");
    write(out, "cv.csv", &cv)?;
    write(out, "train_trace.csv", &traces)?;

    let scored: Vec<ScoredSample> = pooled
        .into_iter()
        .map(|s| s.expect("every item is held out once"))
        .collect();
    let all_names: Vec<&str> = samples.iter().map(|s| s.name.as_str()).collect();
    let header = [
        ("evaluated", "out_of_fold".to_string()),
        ("n_total", samples.len().to_string()),
        ("folds", k.to_string()),
    ];
    write_report(out, &all_names, &scored, &header)?;
    write(
        out,
        "timing.csv",
        &timing_csv(&[("features", feature_ms), ("cross_validation", cv_ms)]),
    )?;
    println!("{k}-fold mean accuracy {mean:.4}");
    Ok(())
}

pub fn run_eval(st: &Settings, out: &Path) -> CliResult<()> {
    let dataset = st.required_path("dataset")?;
    let checkpoint = st.required_path("checkpoint")?;
    let model = load_checkpoint(&checkpoint)?;
    let (spec, timesteps) = FeatureSpec::load(&checkpoint.with_extension("features"))?;
    let samples = read_labels(&dataset)?;

    let subset = st.str("subset");
    let selected: Vec<Sample> = match subset {
        "all" => samples,
        "train" | "test" => {
            let split = st
                .path("split_file")
                .unwrap_or_else(|| checkpoint.with_file_name(SPLIT_FILE));
            let keep = read_split(&split, subset)?;
            samples
                .into_iter()
                .filter(|s| keep.contains(&s.name))
                .collect()
        }
        other => return Err(CliError::Config(format!("unknown subset {other:?}"))),
    };
    if selected.is_empty() {
        return Err(CliError::Data(format!("no volumes in subset {subset:?}")));
    }

    let t = Instant::now();
    let seqs = featurize(&selected, &spec, Some(timesteps))?;
    let feature_ms = ms(t);
    let t = Instant::now();
    let labels: Vec<usize> = selected.iter().map(|s| s.label).collect();
    let refs: Vec<&GlcmSequence> = seqs.iter().collect();
    let scored = score_all(&model, &refs, &labels)?;
    let test_ms = ms(t);

    let name_refs: Vec<&str> = selected.iter().map(|s| s.name.as_str()).collect();
    let header = [
        ("evaluated", subset.to_string()),
        ("n_evaluated", selected.len().to_string()),
    ];
    let summary = write_report(out, &name_refs, &scored, &header)?;
    write(
        out,
        "timing.csv",
        &timing_csv(&[
            ("features", feature_ms),
            ("testing", test_ms),
            ("testing_per_volume", test_ms / selected.len() as f64),
        ]),
    )?;
    println!(
        "{} volumes ({subset}): accuracy {:.4} (macro {:.4})",
        selected.len(),
        summary.plain_accuracy,
        summary.macro_accuracy.unwrap_or(f64::NAN)
    );
    Ok(())
}
