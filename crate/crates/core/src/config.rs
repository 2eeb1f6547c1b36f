//! TOML configuration shared by the command-line tools.
//!
//! ```toml
//! unit_lexicon = "lists/units.txt"
//! operation_lexicon = "lists/operations.txt"
//! abbreviations = "lists/abbreviations.txt"
//! mapping = "mapping.json"
//! scoring_mode = "overlap"
//! top_k = 500
//! parallelism = 4
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::corpus::{CorpusError, MappingTable, Segmenter};
use crate::lexicon::{read_list, Lexicon, WordSet, DEFAULT_ARTICLES, DEFAULT_COPULAS, DEFAULT_PREPOSITIONS};
use crate::lint::Linter;
use crate::score::ScoringMode;

pub const CONFIG_ENV: &str = "MEASEX_CONFIG";
pub const DEFAULT_TOP_K: usize = 500;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("config key {key}: file {path} does not exist")]
    MissingFile { key: &'static str, path: PathBuf },
    #[error("config key top_k must be at least 1")]
    ZeroTopK,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    unit_lexicon: Option<PathBuf>,
    operation_lexicon: Option<PathBuf>,
    abbreviations: Option<PathBuf>,
    mapping: Option<PathBuf>,
    articles: Option<PathBuf>,
    copulas: Option<PathBuf>,
    prepositions: Option<PathBuf>,
    scoring_mode: Option<ScoringMode>,
    top_k: Option<usize>,
    parallelism: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    pub unit_lexicon: Option<PathBuf>,
    pub operation_lexicon: Option<PathBuf>,
    pub abbreviations: Option<PathBuf>,
    pub mapping: Option<PathBuf>,
    pub articles: Option<PathBuf>,
    pub copulas: Option<PathBuf>,
    pub prepositions: Option<PathBuf>,
    pub scoring_mode: ScoringMode,
    pub top_k: usize,
    /// Worker threads; `None` uses every available core.
    pub parallelism: Option<usize>,
    /// File the settings came from, if any.
    pub source: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            unit_lexicon: None,
            operation_lexicon: None,
            abbreviations: None,
            mapping: None,
            articles: None,
            copulas: None,
            prepositions: None,
            scoring_mode: ScoringMode::Strict,
            top_k: DEFAULT_TOP_K,
            parallelism: None,
            source: None,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: base.to_path_buf(),
            message: e.to_string(),
        })?;
        let resolve = |key: &'static str, p: Option<PathBuf>| -> Result<Option<PathBuf>, ConfigError> {
            let Some(p) = p else { return Ok(None) };
            let full = if p.is_absolute() { p } else { base.join(p) };
            if !full.is_file() {
                return Err(ConfigError::MissingFile { key, path: full });
            }
            Ok(Some(full))
        };
        let top_k = raw.top_k.unwrap_or(DEFAULT_TOP_K);
        if top_k == 0 {
            return Err(ConfigError::ZeroTopK);
        }
        Ok(Self {
            unit_lexicon: resolve("unit_lexicon", raw.unit_lexicon)?,
            operation_lexicon: resolve("operation_lexicon", raw.operation_lexicon)?,
            abbreviations: resolve("abbreviations", raw.abbreviations)?,
            mapping: resolve("mapping", raw.mapping)?,
            articles: resolve("articles", raw.articles)?,
            copulas: resolve("copulas", raw.copulas)?,
            prepositions: resolve("prepositions", raw.prepositions)?,
            scoring_mode: raw.scoring_mode.unwrap_or_default(),
            top_k,
            parallelism: raw.parallelism.filter(|n| *n > 0),
            source: None,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut config = Self::from_toml(&text, base).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })?;
        config.source = Some(path.to_path_buf());
        Ok(config)
    }

    /// Loads the file named by `flag`, else by `env`, else the defaults.
    pub fn resolve(flag: Option<&Path>, env: Option<OsString>) -> Result<Self, ConfigError> {
        match flag
            .map(Path::to_path_buf)
            .or_else(|| env.filter(|v| !v.is_empty()).map(PathBuf::from))
        {
            Some(path) => Self::load(&path),
            None => Ok(Self::default()),
        }
    }

    /// [`Config::resolve`] reading the environment variable.
    pub fn from_flag_or_env(flag: Option<&Path>) -> Result<Self, ConfigError> {
        Self::resolve(flag, std::env::var_os(CONFIG_ENV))
    }

    fn io(path: &Path, source: std::io::Error) -> ConfigError {
        ConfigError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn units(&self) -> Result<Lexicon, ConfigError> {
        match &self.unit_lexicon {
            Some(p) => Lexicon::load(p).map_err(|e| Self::io(p, e)),
            None => Ok(Lexicon::units()),
        }
    }

    pub fn operations(&self) -> Result<Lexicon, ConfigError> {
        match &self.operation_lexicon {
            Some(p) => Ok(Lexicon::load(p).map_err(|e| Self::io(p, e))?.case_insensitive()),
            None => Ok(Lexicon::operations()),
        }
    }

    pub fn segmenter(&self) -> Result<Segmenter, ConfigError> {
        match &self.abbreviations {
            Some(p) => Ok(Segmenter::new(read_list(p).map_err(|e| Self::io(p, e))?)),
            None => Ok(Segmenter::default()),
        }
    }

    pub fn mapping_table(&self) -> Result<MappingTable, ConfigError> {
        match &self.mapping {
            Some(p) => Ok(MappingTable::load(p)?),
            None => Ok(MappingTable::default()),
        }
    }

    fn words(&self, path: &Option<PathBuf>, default: &[&str]) -> Result<WordSet, ConfigError> {
        match path {
            Some(p) => WordSet::load(p).map_err(|e| Self::io(p, e)),
            None => Ok(WordSet::new(default)),
        }
    }

    pub fn linter(&self) -> Result<Linter, ConfigError> {
        Ok(Linter::new(
            self.words(&self.articles, DEFAULT_ARTICLES)?,
            self.words(&self.copulas, DEFAULT_COPULAS)?,
            self.words(&self.prepositions, DEFAULT_PREPOSITIONS)?,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_without_file() {
        let c = Config::resolve(None, None).unwrap();
        assert_eq!(c.top_k, 500);
        assert_eq!(c.scoring_mode, ScoringMode::Strict);
        assert!(c.parallelism.is_none());
    }

    #[test]
    fn relative_paths_and_flag_precedence() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("units.txt"), "mg\nfurlong\n").unwrap();
        let cfg = dir.path().join("measex.toml");
        std::fs::write(
            &cfg,
            "unit_lexicon = \"units.txt\"\ntop_k = 7\nscoring_mode = \"overlap\"\n",
        )
        .unwrap();
        let other = dir.path().join("other.toml");
        std::fs::write(&other, "top_k = 3\n").unwrap();

        let c = Config::resolve(Some(&cfg), Some(other.clone().into_os_string())).unwrap();
        assert_eq!(c.top_k, 7);
        assert_eq!(c.scoring_mode, ScoringMode::Overlap);
        assert_eq!(c.units().unwrap().len(), 2);
        let c = Config::resolve(None, Some(other.into_os_string())).unwrap();
        assert_eq!(c.top_k, 3);
    }

    #[test]
    fn rejects_bad_values() {
        let base = Path::new(".");
        assert!(matches!(
            Config::from_toml("top_k = 0", base),
            Err(ConfigError::ZeroTopK)
        ));
        assert!(matches!(
            Config::from_toml("mapping = \"/no/such/file.json\"", base),
            Err(ConfigError::MissingFile { key: "mapping", .. })
        ));
        assert!(matches!(
            Config::from_toml("colour = 1", base),
            Err(ConfigError::Parse { .. })
        ));
    }
}
