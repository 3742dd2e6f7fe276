//! Resolved run settings.
//!
//! Every command declares its keys with typed defaults. A config file (TOML
//! `key = value` lines, optionally grouped under a `[command]` table) may
//! override them, and command-line flags override both. The merged result is
//! written next to the outputs as `resolved_config.toml`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::error::{CliError, CliResult};

pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

/// Keys every command accepts.
pub fn global_defaults() -> Vec<(&'static str, Value)> {
    vec![
        ("seed", Value::Integer(0)),
        ("out", Value::String("out".into())),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub command: String,
    values: BTreeMap<String, Value>,
}

fn type_name(v: &Value) -> &'static str {
    v.type_str()
}

/// Coerces `v` to the type of `default`, allowing integers where floats are expected.
fn coerce(key: &str, default: &Value, v: Value) -> CliResult<Value> {
    match (default, v) {
        (Value::Float(_), Value::Integer(i)) => Ok(Value::Float(i as f64)),
        (d, v) if std::mem::discriminant(d) == std::mem::discriminant(&v) => Ok(v),
        (d, v) => Err(CliError::Config(format!(
            "{key}: expected {}, got {}",
            type_name(d),
            type_name(&v)
        ))),
    }
}

impl Settings {
    /// Merges `defaults < config file < flags`. Unknown keys are rejected.
    pub fn resolve(
        command: &str,
        defaults: Vec<(&'static str, Value)>,
        config_file: Option<&Path>,
        flags: Vec<(&'static str, Value)>,
    ) -> CliResult<Self> {
        let mut values: BTreeMap<String, Value> = global_defaults()
            .into_iter()
            .chain(defaults)
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let set = |key: &str, v: Value, values: &mut BTreeMap<String, Value>| {
            let default = values
                .get(key)
                .ok_or_else(|| CliError::Config(format!("unknown key {key:?} for {command}")))?;
            let v = coerce(key, default, v)?;
            values.insert(key.to_string(), v);
            Ok::<_, CliError>(())
        };
        if let Some(path) = config_file {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let table: Table = text
                .parse()
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let mut section = None;
            for (k, v) in table {
                match v {
                    Value::Table(t) if k == command => section = Some(t),
                    // tables for other commands let one file serve a whole pipeline
                    Value::Table(_) => {}
                    v => set(&k, v, &mut values)?,
                }
            }
            for (k, v) in section.into_iter().flatten() {
                set(&k, v, &mut values)?;
            }
        }
        for (k, v) in flags {
            set(k, v, &mut values)?;
        }
        Ok(Settings {
            command: command.to_string(),
            values,
        })
    }

    fn get(&self, key: &str) -> &Value {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("setting {key:?} is not declared for {}", self.command))
    }

    pub fn str(&self, key: &str) -> &str {
        self.get(key).as_str().expect("declared as string")
    }

    /// `None` for an empty string.
    pub fn opt_str(&self, key: &str) -> Option<&str> {
        Some(self.str(key)).filter(|s| !s.is_empty())
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.opt_str(key).map(PathBuf::from)
    }

    pub fn required_path(&self, key: &str) -> CliResult<PathBuf> {
        self.path(key).ok_or_else(|| {
            CliError::Usage(format!(
                "{} needs --{}",
                self.command,
                key.replace('_', "-")
            ))
        })
    }

    pub fn int(&self, key: &str) -> i64 {
        self.get(key).as_integer().expect("declared as integer")
    }

    pub fn usize(&self, key: &str) -> CliResult<usize> {
        usize::try_from(self.int(key))
            .map_err(|_| CliError::Config(format!("{key} must be non-negative")))
    }

    pub fn u64(&self, key: &str) -> CliResult<u64> {
        u64::try_from(self.int(key))
            .map_err(|_| CliError::Config(format!("{key} must be non-negative")))
    }

    pub fn f64(&self, key: &str) -> f64 {
        self.get(key).as_float().expect("declared as float")
    }

    pub fn bool(&self, key: &str) -> bool {
        self.get(key).as_bool().expect("declared as bool")
    }

    /// A comma-separated string of non-negative integers.
    pub fn usize_list(&self, key: &str) -> CliResult<Vec<usize>> {
        self.str(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| CliError::Config(format!("{key}: cannot parse {s:?}")))
            })
            .collect()
    }

    pub fn str_list(&self, key: &str) -> Vec<String> {
        self.str(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect()
    }

    pub fn seed(&self) -> u64 {
        // negative seeds are reinterpreted rather than rejected
        self.int("seed") as u64
    }

    pub fn out(&self) -> PathBuf {
        PathBuf::from(self.str("out"))
    }

    /// Sorted `key = value` TOML.
    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn write_resolved(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join(RESOLVED_CONFIG);
        let text = format!("# glcmfuse {}\n{}", self.command, self.to_toml());
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults() -> Vec<(&'static str, Value)> {
        vec![
            ("levels", Value::Integer(8)),
            ("rate", Value::Float(0.5)),
            ("mode", Value::String("3d".into())),
        ]
    }

    #[test]
    fn precedence_is_flag_then_file_then_default() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        fs::write(
            &cfg,
            "levels = 16\nrate = 1\nseed = 4\n[train]\nmode = \"2d\"\n[other]\nbogus = 1\n",
        )
        .unwrap();
        let s = Settings::resolve(
            "train",
            defaults(),
            Some(&cfg),
            vec![("levels", Value::Integer(32))],
        )
        .unwrap();
        assert_eq!(s.int("levels"), 32);
        assert_eq!(s.f64("rate"), 1.0);
        assert_eq!(s.str("mode"), "2d");
        assert_eq!(s.seed(), 4);
        assert_eq!(s.str("out"), "out");
    }

    #[test]
    fn rejects_unknown_keys_and_wrong_types() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        fs::write(&cfg, "levelz = 16\n").unwrap();
        assert!(matches!(
            Settings::resolve("train", defaults(), Some(&cfg), vec![]),
            Err(CliError::Config(_))
        ));
        fs::write(&cfg, "levels = \"many\"\n").unwrap();
        assert!(matches!(
            Settings::resolve("train", defaults(), Some(&cfg), vec![]),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn resolved_toml_parses_back() {
        let s = Settings::resolve(
            "train",
            defaults(),
            None,
            vec![("rate", Value::Float(0.25))],
        )
        .unwrap();
        let back: Table = s.to_toml().parse().unwrap();
        assert_eq!(back["rate"], Value::Float(0.25));
        assert_eq!(back["mode"], Value::String("3d".into()));
        assert_eq!(back.len(), 5);
    }
}
