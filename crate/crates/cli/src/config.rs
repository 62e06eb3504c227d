//! Run configuration: a line-oriented `key = value` file, overridden by flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use pabu::env::wordguess::parse_word_list;
use pabu::env::{CraftConfig, EnvConfig, EnvKind, MazeConfig, RecipeBook, WordGuessConfig};
use pabu::remote::{RemoteConfig, ENV_ENDPOINT};
use pabu::{Error, Result};

/// Every key the file and flags may set.
pub const KEYS: &[&str] = &[
    "env",
    "width",
    "height",
    "walls",
    "budget",
    "words",
    "secret",
    "recipes",
    "target",
    "max_depth",
    "seed",
    "n",
    "policy",
    "style",
    "model",
    "explore_seed",
    "window",
    "mode",
    "annotator",
    "template",
    "endpoint",
    "token",
    "timeout_ms",
    "retries",
    "backoff_ms",
    "max_in_flight",
    "workers",
    "label",
];

/// Raw key/value pairs, validated against [`KEYS`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings(BTreeMap<String, String>);

impl Settings {
    pub fn parse(text: &str) -> Result<Settings> {
        let mut map = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!("config line {}: expected key = value", n + 1))
            })?;
            let (k, v) = (k.trim(), v.trim());
            check_key(k)?;
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "config line {}: duplicate key {k}",
                    n + 1
                )));
            }
        }
        Ok(Settings(map))
    }

    pub fn load(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read config {}: {e}", path.display())))?;
        Settings::parse(&text)
    }

    /// Flag values win over file values.
    pub fn set(&mut self, key: &str, value: impl ToString) -> Result<()> {
        check_key(key)?;
        self.0.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.0
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::InvalidArgument(format!("{key} = {v:?}: {e}")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// A path setting that must exist.
    pub fn existing_path(&self, key: &str) -> Result<Option<PathBuf>> {
        match self.get_str(key) {
            None => Ok(None),
            Some(p) if Path::new(p).exists() => Ok(Some(PathBuf::from(p))),
            Some(p) => Err(Error::Data(format!("{key}: {p} does not exist"))),
        }
    }

    pub fn env_kinds(&self) -> Result<Vec<EnvKind>> {
        let raw = self.get_str("env").unwrap_or("maze");
        raw.split(',')
            .map(|k| {
                k.trim()
                    .parse::<EnvKind>()
                    .map_err(|e| Error::InvalidArgument(e.to_string()))
            })
            .collect()
    }

    /// Environment configurations, one per kind in `env`.
    pub fn env_configs(&self) -> Result<Vec<EnvConfig>> {
        let budget: Option<usize> = self.get("budget")?;
        let words = match self.existing_path("words")? {
            Some(p) => {
                let text = std::fs::read_to_string(&p)
                    .map_err(|e| Error::Data(format!("cannot read words {}: {e}", p.display())))?;
                Some(Arc::new(parse_word_list(&text)?))
            }
            None => None,
        };
        let book = match self.existing_path("recipes")? {
            Some(p) => Some(Arc::new(RecipeBook::load(&p)?)),
            None => None,
        };
        self.env_kinds()?
            .into_iter()
            .map(|kind| {
                let config = match kind {
                    EnvKind::Maze => {
                        let d = MazeConfig::default();
                        EnvConfig::Maze(MazeConfig {
                            width: self.get_or("width", d.width)?,
                            height: self.get_or("height", d.height)?,
                            wall_density: self.get_or("walls", d.wall_density)?,
                            ..d
                        })
                    }
                    EnvKind::Wordguess => {
                        let d = WordGuessConfig::default();
                        EnvConfig::Wordguess(WordGuessConfig {
                            words: words.clone().unwrap_or(d.words),
                            secret: self.get_str("secret").map(String::from),
                            ..d
                        })
                    }
                    EnvKind::Craft => {
                        let d = CraftConfig::default();
                        EnvConfig::Craft(CraftConfig {
                            book: book.clone().unwrap_or(d.book),
                            max_depth: self.get_or("max_depth", d.max_depth)?,
                            target: self.get_str("target").map(String::from),
                            ..d
                        })
                    }
                };
                Ok(match budget {
                    Some(b) => config.with_budget(b),
                    None => config,
                })
            })
            .collect()
    }

    /// Client settings. `PABU_ENDPOINT` / `PABU_TOKEN` take precedence over file and flags.
    pub fn remote(&self) -> Result<RemoteConfig> {
        let d = RemoteConfig::new("");
        let config = RemoteConfig {
            endpoint: self.get_str("endpoint").unwrap_or_default().to_string(),
            token: self.get_str("token").map(String::from),
            timeout: Duration::from_millis(self.get_or("timeout_ms", d.timeout.as_millis() as u64)?),
            retries: self.get_or("retries", d.retries)?,
            backoff: Duration::from_millis(self.get_or("backoff_ms", d.backoff.as_millis() as u64)?),
            max_in_flight: self.get_or("max_in_flight", d.max_in_flight)?,
        }
        .with_env_overrides();
        if config.endpoint.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "remote use needs an endpoint (endpoint key, --endpoint or {ENV_ENDPOINT})"
            )));
        }
        Ok(config)
    }

    pub fn workers(&self) -> Result<usize> {
        match self.get::<usize>("workers")? {
            Some(0) => Err(Error::InvalidArgument("workers must be at least 1".into())),
            Some(n) => Ok(n),
            None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
        }
    }
}

fn check_key(key: &str) -> Result<()> {
    if KEYS.contains(&key) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("unknown config key {key:?}")))
    }
}
