//! Resolved `key=value` settings of one run.
//!
//! Precedence is flag, then config file, then built-in default. Every value
//! a command reads is recorded, and the record is written next to the
//! outputs as `run_config.txt`; passing that file back with `--config`
//! repeats the run.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use stcnn_core::model::parse_pairs;

use crate::error::{CliError, CliResult};

pub const SIDECAR: &str = "run_config.txt";

#[derive(Debug, Default)]
pub struct RunConfig {
    command: String,
    file: BTreeMap<String, String>,
    used: BTreeSet<String>,
    resolved: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn load(command: &str, path: Option<&Path>) -> CliResult<Self> {
        let mut file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?;
                parse_pairs(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?
            }
            None => BTreeMap::new(),
        };
        if let Some(c) = file.remove("command") {
            if c != command {
                return Err(CliError::Usage(format!(
                    "config was recorded for `{c}`, not `{command}`"
                )));
            }
        }
        Ok(Self {
            command: command.to_string(),
            file,
            ..Self::default()
        })
    }

    fn raw(&mut self, key: &str) -> Option<String> {
        self.used.insert(key.to_string());
        self.file.get(key).cloned()
    }

    fn parse<T: FromStr>(key: &str, text: &str) -> CliResult<T>
    where
        T::Err: Display,
    {
        text.parse()
            .map_err(|e| CliError::Usage(format!("invalid {key}={text}: {e}")))
    }

    fn record(&mut self, key: &str, value: impl Display) {
        self.resolved.insert(key.to_string(), value.to_string());
    }

    /// Flag, else config entry, else `default`.
    pub fn value<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> CliResult<T>
    where
        T::Err: Display,
    {
        let v = match (flag, self.raw(key)) {
            (Some(v), _) => v,
            (None, Some(text)) => Self::parse(key, &text)?,
            (None, None) => default,
        };
        self.record(key, &v);
        Ok(v)
    }

    pub fn optional<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        let v = match (flag, self.raw(key)) {
            (Some(v), _) => Some(v),
            (None, Some(text)) if text.is_empty() => None,
            (None, Some(text)) => Some(Self::parse(key, &text)?),
            (None, None) => None,
        };
        self.record(key, v.as_ref().map(ToString::to_string).unwrap_or_default());
        Ok(v)
    }

    pub fn required<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> CliResult<T>
    where
        T::Err: Display,
    {
        self.optional(key, flag)?.ok_or_else(|| {
            CliError::Usage(format!("missing --{} (or {key}= in the config file)", key.replace('_', "-")))
        })
    }

    /// Comma-separated list; flags replace the config entry as a whole.
    pub fn list(&mut self, key: &str, flags: Vec<String>) -> Vec<String> {
        let v = if flags.is_empty() {
            self.raw(key)
                .map(|t| t.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect())
                .unwrap_or_default()
        } else {
            self.raw(key);
            flags
        };
        self.record(key, v.join(","));
        v
    }

    /// Entries `prefix.<key>` from the file overlaid with `key=value` flags,
    /// without the prefix.
    pub fn prefixed(&mut self, prefix: &str, flags: &[String]) -> CliResult<BTreeMap<String, String>> {
        let dotted = format!("{prefix}.");
        let keys: Vec<String> = self.file.keys().filter(|k| k.starts_with(&dotted)).cloned().collect();
        let mut out = BTreeMap::new();
        for k in keys {
            let v = self.raw(&k).expect("key listed from file");
            out.insert(k[dotted.len()..].to_string(), v);
        }
        for f in flags {
            let (k, v) = f
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("expected key=value after --{prefix}, got {f:?}")))?;
            out.insert(k.trim().to_string(), v.trim().to_string());
        }
        for (k, v) in &out {
            self.record(&format!("{dotted}{k}"), v);
        }
        Ok(out)
    }

    /// Records a derived value that is not itself a setting.
    pub fn note(&mut self, key: &str, value: impl Display) {
        self.record(key, value);
    }

    /// Fails on config entries no setting of this command reads.
    pub fn finish(&self) -> CliResult<()> {
        let unknown: Vec<&str> = self
            .file
            .keys()
            .filter(|k| !self.used.contains(*k))
            .map(String::as_str)
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Usage(format!(
                "config keys not used by `{}`: {}",
                self.command,
                unknown.join(", ")
            )))
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("command={}\n", self.command);
        for (k, v) in &self.resolved {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }

    pub fn write_sidecar(&self, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join(SIDECAR);
        std::fs::write(&path, self.to_text()).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}
