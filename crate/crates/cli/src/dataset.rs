//! Labelled volume collections and their GLCM feature sequences.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use toml::{Table, Value};

use glcmfuse_core::fusion::{ModelMode, CLASS_NAMES, NUM_CLASSES};
use glcmfuse_core::glcm::{
    blocks_2_5d, blocks_2d, blocks_3d, blocks_by_direction, Descriptor, GlcmBlocks, GlcmOptions,
    GlcmSequence, SequenceMode,
};
use glcmfuse_core::imagio::{load_volume, quantize, QuantizationSpec, Volume};

use crate::config::Settings;
use crate::error::{CliError, CliResult};

pub const LABELS_FILE: &str = "labels.csv";
pub const SPLIT_FILE: &str = "split.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub name: String,
    pub label: usize,
    pub path: PathBuf,
}

fn parse_label(s: &str) -> CliResult<usize> {
    let s = s.trim();
    if let Ok(k) = s.parse::<usize>() {
        if k < NUM_CLASSES {
            return Ok(k);
        }
    }
    CLASS_NAMES
        .iter()
        .position(|n| *n == s)
        .ok_or_else(|| CliError::Data(format!("unknown label {s:?}")))
}

fn csv_reader(path: &Path) -> CliResult<csv::Reader<fs::File>> {
    csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> CliResult<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::Data(format!("{}: no {name:?} column", path.display())))
}

/// Reads `labels.csv` (`volume,label[,class]`) from a dataset directory.
pub fn read_labels(dir: &Path) -> CliResult<Vec<Sample>> {
    let path = dir.join(LABELS_FILE);
    let mut reader = csv_reader(&path)?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .clone();
    let (vc, lc) = (
        column(&headers, "volume", &path)?,
        column(&headers, "label", &path)?,
    );
    let mut samples = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let name = rec.get(vc).unwrap_or_default().to_string();
        samples.push(Sample {
            path: dir.join(&name),
            label: parse_label(rec.get(lc).unwrap_or_default())?,
            name,
        });
    }
    if samples.is_empty() {
        return Err(CliError::Data(format!(
            "{} lists no volumes",
            path.display()
        )));
    }
    Ok(samples)
}

/// Reads `volume,label,split` rows and returns the names marked `subset`.
pub fn read_split(path: &Path, subset: &str) -> CliResult<Vec<String>> {
    let mut reader = csv_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .clone();
    let (vc, sc) = (
        column(&headers, "volume", path)?,
        column(&headers, "split", path)?,
    );
    let mut names = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if rec.get(sc) == Some(subset) {
            names.push(rec.get(vc).unwrap_or_default().to_string());
        }
    }
    Ok(names)
}

/// How a volume becomes a feature sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureSpec {
    pub mode: SequenceMode,
    pub opts: GlcmOptions,
    pub descriptors: bool,
}

pub const FEATURE_KEYS: [&str; 5] = ["mode", "levels", "symmetric", "distance", "descriptors"];

impl FeatureSpec {
    pub fn from_settings(s: &Settings) -> CliResult<Self> {
        let mode = SequenceMode::parse(s.str("mode"))?;
        let levels = match s.usize("levels")? {
            0 if mode == SequenceMode::Directions2d => 256,
            0 => 32,
            l => l,
        };
        let spec = FeatureSpec {
            mode,
            opts: GlcmOptions {
                levels,
                symmetric: s.bool("symmetric"),
                distance: s.usize("distance")?,
            },
            descriptors: s.bool("descriptors"),
        };
        if !(2..=256).contains(&spec.opts.levels) {
            return Err(CliError::Config(format!(
                "levels {} not in [2, 256]",
                spec.opts.levels
            )));
        }
        Ok(spec)
    }

    pub fn model_mode(&self) -> ModelMode {
        match self.mode {
            SequenceMode::Directions2d => ModelMode::Glcm2d,
            SequenceMode::Slices2_5d => ModelMode::Glcm2_5d,
            SequenceMode::Vs3d | SequenceMode::Vs3dByDirection => ModelMode::Glcm3d,
        }
    }

    /// Quantizes if needed, then builds the GLCM blocks. 2D mode uses
    /// `slice`, defaulting to the middle slice.
    pub fn blocks(
        &self,
        vol: &Volume,
        mask: Option<&[bool]>,
        slice: Option<usize>,
    ) -> CliResult<GlcmBlocks> {
        let levels = self.opts.levels as u32;
        let q;
        let vol = if vol.levels() == levels {
            vol
        } else {
            q = quantize(vol, QuantizationSpec::new(vol.levels(), levels)?)?;
            &q
        };
        Ok(match self.mode {
            SequenceMode::Directions2d => {
                let z = slice.unwrap_or(vol.depth() / 2);
                if z >= vol.depth() {
                    return Err(CliError::Config(format!(
                        "slice {z} outside depth {}",
                        vol.depth()
                    )));
                }
                let plane = vol.height() * vol.width();
                let m = mask.map(|m| &m[z * plane..(z + 1) * plane]);
                blocks_2d(&vol.slice(z), self.opts, m)?
            }
            SequenceMode::Slices2_5d => blocks_2_5d(vol, self.opts, mask)?,
            SequenceMode::Vs3d => blocks_3d(vol, self.opts, mask)?,
            SequenceMode::Vs3dByDirection => blocks_by_direction(vol, self.opts, mask)?,
        })
    }

    pub fn sequence(&self, blocks: &GlcmBlocks) -> GlcmSequence {
        if self.descriptors {
            blocks.descriptors(&Descriptor::ALL)
        } else {
            blocks.vectorize()
        }
    }

    pub fn to_table(&self, timesteps: usize) -> Table {
        let mut t = Table::new();
        t.insert("mode".into(), Value::String(self.mode.as_str().into()));
        t.insert("levels".into(), Value::Integer(self.opts.levels as i64));
        t.insert("symmetric".into(), Value::Boolean(self.opts.symmetric));
        t.insert("distance".into(), Value::Integer(self.opts.distance as i64));
        t.insert("descriptors".into(), Value::Boolean(self.descriptors));
        t.insert("timesteps".into(), Value::Integer(timesteps as i64));
        t
    }

    /// Reads the sidecar written by [`FeatureSpec::save`]; returns the spec and padded length.
    pub fn load(path: &Path) -> CliResult<(Self, usize)> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let t: Table = text
            .parse()
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let bad = |k: &str| CliError::Data(format!("{}: missing or invalid {k}", path.display()));
        let int = |k: &str| {
            t.get(k)
                .and_then(Value::as_integer)
                .and_then(|v| usize::try_from(v).ok())
                .ok_or_else(|| bad(k))
        };
        let boolean = |k: &str| t.get(k).and_then(Value::as_bool).ok_or_else(|| bad(k));
        let mode = t
            .get("mode")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("mode"))?;
        Ok((
            FeatureSpec {
                mode: SequenceMode::parse(mode)?,
                opts: GlcmOptions {
                    levels: int("levels")?,
                    symmetric: boolean("symmetric")?,
                    distance: int("distance")?,
                },
                descriptors: boolean("descriptors")?,
            },
            int("timesteps")?,
        ))
    }

    pub fn save(&self, path: &Path, timesteps: usize) -> CliResult<()> {
        let text = toml::to_string(&self.to_table(timesteps))
            .map_err(|e| CliError::Data(e.to_string()))?;
        fs::write(path, text).map_err(|e| CliError::io(path, e))
    }
}

/// Feature sequences for every sample, front-padded to `pad_to` or to the longest one.
pub fn featurize(
    samples: &[Sample],
    spec: &FeatureSpec,
    pad_to: Option<usize>,
) -> CliResult<Vec<GlcmSequence>> {
    let mut seqs: Vec<GlcmSequence> = samples
        .par_iter()
        .map(|s| {
            let vol = load_volume(&s.path)?;
            Ok(spec.sequence(&spec.blocks(&vol, None, None)?))
        })
        .collect::<CliResult<_>>()?;
    let longest = seqs.iter().map(GlcmSequence::len).max().unwrap_or(0);
    let target = pad_to.unwrap_or(longest);
    if longest > target {
        return Err(CliError::Data(format!(
            "a volume yields {longest} timesteps, the model takes {target}"
        )));
    }
    for s in &mut seqs {
        s.pad_front(target);
    }
    Ok(seqs)
}

/// Seeded class-balanced split: each class is shuffled, the classes are dealt
/// round-robin into one order, and the first `round(n * test_fraction)` items
/// of that order are the test set.
pub fn stratified_split(labels: &[usize], test_fraction: f64, seed: u64) -> CliResult<Vec<bool>> {
    let n = labels.len();
    let n_test = (n as f64 * test_fraction).round() as usize;
    if !(0.0..1.0).contains(&test_fraction) || n_test == 0 || n_test >= n {
        return Err(CliError::Config(format!(
            "test fraction {test_fraction} leaves no train or no test items out of {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = (0..NUM_CLASSES)
        .map(|k| (0..n).filter(|&i| labels[i] == k).collect())
        .collect();
    for members in &mut by_class {
        members.shuffle(&mut rng);
    }
    let rounds = by_class.iter().map(Vec::len).max().unwrap_or(0);
    let order = (0..rounds).flat_map(|r| by_class.iter().filter_map(move |m| m.get(r).copied()));
    let mut is_test = vec![false; n];
    for i in order.take(n_test) {
        is_test[i] = true;
    }
    Ok(is_test)
}

pub fn split_csv(samples: &[Sample], is_test: &[bool]) -> String {
    let mut out = String::from("volume,label,split\n");
    for (s, &t) in samples.iter().zip(is_test) {
        out.push_str(&format!(
            "{},{},{}\n",
            s.name,
            s.label,
            if t { "test" } else { "train" }
        ));
    }
    out
}
