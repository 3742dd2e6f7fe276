//! Subcommand implementations. Each declares its settings with defaults and
//! runs against a resolved [`Settings`].

mod bench;
mod glcm;
mod preprocess;
mod segment;
mod synth;
mod train;

use std::path::{Path, PathBuf};

use toml::Value;

use glcmfuse_core::imagio::{load_image_auto, load_volume, Volume};

use crate::config::Settings;
use crate::error::CliResult;
use crate::lock::OutputLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Preprocess,
    Segment,
    Glcm,
    Synth,
    Train,
    Eval,
    Bench,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Preprocess,
        Command::Segment,
        Command::Glcm,
        Command::Synth,
        Command::Train,
        Command::Eval,
        Command::Bench,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Preprocess => "preprocess",
            Command::Segment => "segment",
            Command::Glcm => "glcm",
            Command::Synth => "synth",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Bench => "bench",
        }
    }

    pub fn defaults(self) -> Vec<(&'static str, Value)> {
        match self {
            Command::Preprocess => preprocess::defaults(),
            Command::Segment => segment::defaults(),
            Command::Glcm => glcm::defaults(),
            Command::Synth => synth::defaults(),
            Command::Train => train::train_defaults(),
            Command::Eval => train::eval_defaults(),
            Command::Bench => bench::defaults(),
        }
    }

    fn run(self, s: &Settings, out: &Path) -> CliResult<()> {
        match self {
            Command::Preprocess => preprocess::run(s, out),
            Command::Segment => segment::run(s, out),
            Command::Glcm => glcm::run(s, out),
            Command::Synth => synth::run(s, out),
            Command::Train => train::run_train(s, out),
            Command::Eval => train::run_eval(s, out),
            Command::Bench => bench::run(s, out),
        }
    }
}

/// Resolves settings, locks the output directory, records the resolved
/// config there and runs the command.
pub fn execute(
    cmd: Command,
    config_file: Option<&Path>,
    flags: Vec<(&'static str, Value)>,
) -> CliResult<Settings> {
    let s = Settings::resolve(cmd.name(), cmd.defaults(), config_file, flags)?;
    let out = s.out();
    let _lock = OutputLock::acquire(&out)?;
    s.write_resolved(&out)?;
    cmd.run(&s, &out)?;
    Ok(s)
}

fn is_pgm(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

/// A PGM image (as a one-slice volume) or a volume manifest.
fn load_any(path: &Path) -> CliResult<Volume> {
    Ok(if is_pgm(path) {
        Volume::from_image(&load_image_auto(path)?)
    } else {
        load_volume(path)?
    })
}

/// `output_name`, or the input's file stem.
fn output_stem(s: &Settings, input: &Path) -> String {
    s.opt_str("output_name").map_or_else(
        || {
            input
                .file_stem()
                .and_then(|x| x.to_str())
                .unwrap_or("output")
                .to_string()
        },
        String::from,
    )
}

fn ensure_distinct(input: &Path, output: &Path) -> CliResult<()> {
    let canon = |p: &Path| p.canonicalize().unwrap_or_else(|_| PathBuf::from(p));
    if output.exists() && canon(input) == canon(output) {
        return Err(crate::error::CliError::Config(format!(
            "output {} would overwrite the input",
            output.display()
        )));
    }
    Ok(())
}

fn s(v: &str) -> Value {
    Value::String(v.into())
}

fn i(v: i64) -> Value {
    Value::Integer(v)
}

fn f(v: f64) -> Value {
    Value::Float(v)
}

fn b(v: bool) -> Value {
    Value::Boolean(v)
}
