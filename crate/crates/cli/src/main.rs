use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use toml::Value;

use glcmfuse_cli::{execute, Command};

/// Volumetric GLCM texture pipeline: thresholding, co-occurrence features
/// and LSTM fusion classification.
///
/// Every setting can also come from `--config` (TOML `key = value` lines,
/// optionally under a `[command]` table). Flags win over the file, the file
/// wins over built-in defaults.
#[derive(Parser)]
#[command(name = "glcmfuse", version)]
struct Cli {
    /// RNG seed.
    #[arg(long, global = true)]
    seed: Option<i64>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<String>,
    /// Settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Window, median-filter and quantize a volume or PGM image.
    Preprocess(PreprocessArgs),
    /// Multilevel Otsu thresholding by WSA or exhaustive search.
    Segment(SegmentArgs),
    /// Write a GLCM feature sequence tensor.
    Glcm(GlcmArgs),
    /// Generate the synthetic tri-class dataset.
    Synth(SynthArgs),
    /// Train the fusion classifier (80/20 split or k-fold).
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Benchmark thresholding methods.
    Bench(BenchArgs),
}

trait IntoValue {
    fn into_value(self) -> Value;
}

impl IntoValue for i64 {
    fn into_value(self) -> Value {
        Value::Integer(self)
    }
}

impl IntoValue for f64 {
    fn into_value(self) -> Value {
        Value::Float(self)
    }
}

impl IntoValue for bool {
    fn into_value(self) -> Value {
        Value::Boolean(self)
    }
}

impl IntoValue for String {
    fn into_value(self) -> Value {
        Value::String(self)
    }
}

/// Collects the flags that were given, keyed by field name.
macro_rules! flag_args {
    ($name:ident { $($field:ident : $ty:ty),* $(,)? }) => {
        #[derive(Args)]
        struct $name {
            $(
                #[arg(long)]
                $field: Option<$ty>,
            )*
        }

        impl $name {
            fn flags(self) -> Vec<(&'static str, Value)> {
                let mut v = Vec::new();
                $(
                    if let Some(x) = self.$field {
                        v.push((stringify!($field), x.into_value()));
                    }
                )*
                v
            }
        }
    };
}

flag_args!(PreprocessArgs {
    input: String,
    window_low: i64,
    window_high: i64,
    median_radius: i64,
    levels: i64,
    output_name: String,
});

flag_args!(SegmentArgs {
    input: String,
    thresholds: i64,
    method: String,
    population: i64,
    territories: i64,
    iterations: i64,
    mating_probability: f64,
    best_source: String,
    per_coordinate_rand: bool,
    budget: i64,
    output_name: String,
});

flag_args!(GlcmArgs {
    input: String,
    mode: String,
    levels: i64,
    symmetric: bool,
    distance: i64,
    descriptors: bool,
    mask: String,
    mask_min_label: i64,
    slice: i64,
    output_name: String,
});

flag_args!(SynthArgs {
    per_class: i64,
    depth: i64,
    height: i64,
    width: i64,
    blur_radius: i64,
    smooth_std: f64,
    checker_period: i64,
    checker_contrast: f64,
    salt_fraction: f64,
    salt_jitter: f64,
    noise: f64,
    check_levels: i64,
    check_factor: f64,
});

flag_args!(TrainArgs {
    dataset: String,
    mode: String,
    levels: i64,
    symmetric: bool,
    distance: i64,
    descriptors: bool,
    hidden: i64,
    dense_hidden: i64,
    activation: String,
    unshared: bool,
    init_scale: f64,
    learning_rate: f64,
    epochs: i64,
    batch_size: i64,
    test_fraction: f64,
    folds: i64,
});

flag_args!(EvalArgs {
    dataset: String,
    checkpoint: String,
    split_file: String,
    subset: String,
});

flag_args!(BenchArgs {
    corpus: String,
    histograms: i64,
    bins: i64,
    m_list: String,
    methods: String,
    repeats: i64,
    population: i64,
    territories: i64,
    iterations: i64,
    mating_probability: f64,
    best_source: String,
    per_coordinate_rand: bool,
    budget: i64,
});

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (cmd, mut flags) = match cli.command {
        Cmd::Preprocess(a) => (Command::Preprocess, a.flags()),
        Cmd::Segment(a) => (Command::Segment, a.flags()),
        Cmd::Glcm(a) => (Command::Glcm, a.flags()),
        Cmd::Synth(a) => (Command::Synth, a.flags()),
        Cmd::Train(a) => (Command::Train, a.flags()),
        Cmd::Eval(a) => (Command::Eval, a.flags()),
        Cmd::Bench(a) => (Command::Bench, a.flags()),
    };
    if let Some(seed) = cli.seed {
        flags.push(("seed", Value::Integer(seed)));
    }
    if let Some(out) = cli.out {
        flags.push(("out", Value::String(out)));
    }
    match execute(cmd, cli.config.as_deref(), flags) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("glcmfuse {}: {e}", cmd.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
