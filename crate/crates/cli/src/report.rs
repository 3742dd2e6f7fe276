//! Classification reports: metric table, confusion matrix, ROC curves, predictions.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use glcmfuse_core::fusion::{predict, FusionModel, CLASS_NAMES, NUM_CLASSES};
use glcmfuse_core::glcm::GlcmSequence;
use glcmfuse_core::metrics::{f1, ovr_auc, ovr_rates, MultiClassConfusion, ScoredSample};

use crate::error::{CliError, CliResult};

pub fn write(dir: &Path, name: &str, text: &str) -> CliResult<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

/// Class probabilities for each sequence.
pub fn score_all(
    model: &FusionModel,
    seqs: &[&GlcmSequence],
    labels: &[usize],
) -> CliResult<Vec<ScoredSample>> {
    seqs.par_iter()
        .zip(labels)
        .map(|(s, &label)| {
            let (_, scores) = predict(model, s)?;
            Ok(ScoredSample { scores, label })
        })
        .collect()
}

fn predicted(s: &ScoredSample) -> usize {
    glcmfuse_core::fusion::argmax(&s.scores)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub plain_accuracy: f64,
    pub macro_accuracy: Option<f64>,
    pub macro_auc: Option<f64>,
    pub micro_auc: Option<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| x.to_string())
}

/// Writes `report.csv`, `confusion.csv`, `predictions.csv` and, when every
/// class is present, `roc.csv` and `auc.csv`. `header` rows lead the report.
pub fn write_report(
    dir: &Path,
    names: &[&str],
    scored: &[ScoredSample],
    header: &[(&str, String)],
) -> CliResult<Summary> {
    let truth: Vec<usize> = scored.iter().map(|s| s.label).collect();
    let preds: Vec<usize> = scored.iter().map(predicted).collect();
    let confusion = MultiClassConfusion::from_predictions(&truth, &preds, NUM_CLASSES)?;
    let rates = ovr_rates(&confusion)?;
    let plain_accuracy = confusion.plain_accuracy()?;

    let f1s: Vec<Option<f64>> = (0..NUM_CLASSES)
        .map(|k| f1(&confusion.one_vs_rest(k)).ok())
        .collect();
    let defined: Vec<f64> = f1s.iter().flatten().copied().collect();
    let macro_f1 =
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    let auc = ovr_auc(scored, NUM_CLASSES).ok();

    let mut out = String::from("metric,value\n");
    for (k, v) in header {
        let _ = writeln!(out, "{k},{v}");
    }
    let _ = writeln!(out, "plain_accuracy,{plain_accuracy}");
    let _ = writeln!(out, "macro_accuracy,{}", fmt_opt(rates.macro_accuracy));
    let _ = writeln!(
        out,
        "macro_sensitivity,{}",
        fmt_opt(rates.macro_sensitivity)
    );
    let _ = writeln!(
        out,
        "macro_specificity,{}",
        fmt_opt(rates.macro_specificity)
    );
    let _ = writeln!(out, "macro_f1,{}", fmt_opt(macro_f1));
    let _ = writeln!(
        out,
        "macro_auc,{}",
        fmt_opt(auc.as_ref().map(|a| a.macro_auc))
    );
    let _ = writeln!(
        out,
        "micro_auc,{}",
        fmt_opt(auc.as_ref().map(|a| a.micro_auc))
    );
    for (k, name) in CLASS_NAMES.iter().enumerate() {
        let r = &rates.per_class[k];
        let _ = writeln!(out, "accuracy_{name},{}", fmt_opt(r.accuracy));
        let _ = writeln!(out, "sensitivity_{name},{}", fmt_opt(r.sensitivity));
        let _ = writeln!(out, "specificity_{name},{}", fmt_opt(r.specificity));
        let _ = writeln!(out, "f1_{name},{}", fmt_opt(f1s[k]));
        let _ = writeln!(
            out,
            "auc_{name},{}",
            fmt_opt(auc.as_ref().map(|a| a.per_class[k].auc))
        );
    }
    write(dir, "report.csv", &out)?;
    write(dir, "confusion.csv", &confusion.to_csv(&CLASS_NAMES))?;

    let mut pred_csv = String::from("volume,label,predicted");
    for name in CLASS_NAMES {
        let _ = write!(pred_csv, ",p_{name}");
    }
    pred_csv.push('\n');
    for ((name, s), p) in names.iter().zip(scored).zip(&preds) {
        let _ = write!(pred_csv, "{name},{},{p}", s.label);
        for v in &s.scores {
            let _ = write!(pred_csv, ",{v}");
        }
        pred_csv.push('\n');
    }
    write(dir, "predictions.csv", &pred_csv)?;

    if let Some(a) = &auc {
        write(dir, "roc.csv", &a.roc_csv(&CLASS_NAMES))?;
        write(dir, "auc.csv", &a.summary_csv(&CLASS_NAMES))?;
    }
    Ok(Summary {
        plain_accuracy,
        macro_accuracy: rates.macro_accuracy,
        macro_auc: auc.as_ref().map(|a| a.macro_auc),
        micro_auc: auc.as_ref().map(|a| a.micro_auc),
    })
}

/// `phase,elapsed_ms` rows.
pub fn timing_csv(rows: &[(&str, f64)]) -> String {
    let mut out = String::from("phase,elapsed_ms\n");
    for (phase, ms) in rows {
        let _ = writeln!(out, "{phase},{ms:.3}");
    }
    out
}
