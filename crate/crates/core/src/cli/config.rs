use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Every key accepted in a config file.
pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "out_dir",
    "trials_a",
    "trials_b",
    "split",
    "data_dir",
    "variant",
    "hidden",
    "score",
    "epochs",
    "batch_size",
    "learning_rate",
    "gamma",
    "patience",
    "clip_norm",
    "teacher_forcing",
    "smoothing",
    "process_std",
    "measurement_std",
    "stride",
    "checkpoint",
    "eval_split",
    "k",
    "subset",
    "p0",
    "lambda",
    "r",
    "epsilon",
    "horizon",
    "graph",
    "trace",
    "trace_file",
];

/// Flat `key = value` settings. `#` starts a comment; keys may use `-` or
/// `_`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, (String, usize)>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected `key = value`", i + 1)))?;
            let key = key.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("config line {}: unknown key `{key}`", i + 1)));
            }
            let value = value.trim().trim_matches('"').to_string();
            if values.insert(key.clone(), (value, i + 1)).is_some() {
                return Err(Error::Config(format!("config line {}: `{key}` set twice", i + 1)));
            }
        }
        Ok(ConfigFile { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    /// The flag value if given, else the config value, else `None`.
    pub fn get<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|e| Error::Config(format!("config line {line}: bad value `{v}` for `{key}`: {e}"))),
        }
    }

    pub fn or<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.get(flag, key)?.unwrap_or(default))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_precedence() {
        let cfg = ConfigFile::parse("# run\nepochs = 7\nlearning-rate=0.5 # fast\n\nvariant = \"traj\"\n").unwrap();
        assert_eq!(cfg.or(None, "epochs", 1usize).unwrap(), 7);
        assert_eq!(cfg.or(Some(3), "epochs", 1usize).unwrap(), 3);
        assert_eq!(cfg.or(None, "learning_rate", 0.01).unwrap(), 0.5);
        assert_eq!(cfg.or(None, "hidden", 64usize).unwrap(), 64);
        assert_eq!(cfg.raw("variant"), Some("traj"));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ConfigFile::parse("epochs 7").is_err());
        assert!(ConfigFile::parse("epoch = 7").is_err());
        assert!(ConfigFile::parse("epochs = 1\nepochs = 2").is_err());
        let cfg = ConfigFile::parse("epochs = many").unwrap();
        assert!(cfg.or(None, "epochs", 1usize).is_err());
    }
}
