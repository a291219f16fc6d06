//! Run configuration: a TOML file plus `section.key=value` overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minhash::{DEFAULT_NGRAM, DEFAULT_NUM_PERM, DEFAULT_THRESHOLD};
use crate::refine::JsKeywordSet;
use crate::threshold::{PolicyOptions, DEFAULT_LARGE_LANGUAGE_DOCS, DEFAULT_Q_HIGH, DEFAULT_Q_LOW};

pub const DEFAULT_DEDUP_MIN_DOCS: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    /// Input shards, one record file each. Shard index is the list position.
    pub inputs: Vec<PathBuf>,
    pub output_dir: PathBuf,
    /// Languages to keep at ingest; empty keeps all.
    pub languages: Vec<String>,
    /// Write every stage's documents under `<output_dir>/stages`.
    pub materialize_stages: bool,
    pub langid: LangIdConfig,
    pub urlfilter: UrlFilterConfig,
    pub metrics: MetricsConfig,
    pub thresholds: ThresholdConfig,
    pub refine: RefineConfig,
    pub minhash: MinHashSection,
    pub dedup: DedupConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            workers: 0,
            inputs: Vec::new(),
            output_dir: PathBuf::from("out"),
            languages: Vec::new(),
            materialize_stages: true,
            langid: LangIdConfig::default(),
            urlfilter: UrlFilterConfig::default(),
            metrics: MetricsConfig::default(),
            thresholds: ThresholdConfig::default(),
            refine: RefineConfig::default(),
            minhash: MinHashSection::default(),
            dedup: DedupConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LangIdConfig {
    pub enabled: bool,
    /// fastText model; without one the script classifier is used.
    pub model: Option<PathBuf>,
    /// Script name to language for the script classifier; empty uses the
    /// built-in table.
    pub scripts: BTreeMap<String, String>,
    pub exempt_sources: Vec<String>,
}

impl Default for LangIdConfig {
    fn default() -> Self {
        LangIdConfig {
            enabled: true,
            model: None,
            scripts: BTreeMap::new(),
            exempt_sources: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UrlFilterConfig {
    /// Blacklist root with one directory per category. Unset disables the stage.
    pub blacklist_root: Option<PathBuf>,
    /// Categories to load; empty loads every category under the root.
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Holds `stopwords/<lang>.txt` and `flagged/<lang>.txt`.
    pub wordlists_dir: Option<PathBuf>,
    /// Holds `<lang>.knlm` models; languages without one get no perplexity.
    pub lm_dir: Option<PathBuf>,
    /// Subword vocabulary, one piece per line; unset uses word segmentation.
    pub subword_vocab: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdConfig {
    pub q_low: f64,
    pub q_high: f64,
    /// Fixed sampling fraction; unset applies the large-language rule.
    pub sample_fraction: Option<f64>,
    pub large_language_docs: u64,
    /// Read `<lang>.json` policies from here instead of building them.
    pub policy_dir: Option<PathBuf>,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            q_low: DEFAULT_Q_LOW,
            q_high: DEFAULT_Q_HIGH,
            sample_fraction: None,
            large_language_docs: DEFAULT_LARGE_LANGUAGE_DOCS,
            policy_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub enabled: bool,
    pub js_keywords: JsKeywordSet,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            enabled: true,
            js_keywords: JsKeywordSet::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinHashSection {
    pub num_perm: usize,
    pub ngram: usize,
    pub threshold: f64,
    /// Hash-family seed; unset uses the run seed.
    pub seed: Option<u64>,
    pub verify: bool,
    /// Band tables go to sorted runs here instead of memory.
    pub spill_dir: Option<PathBuf>,
    pub spill_run_records: usize,
}

impl Default for MinHashSection {
    fn default() -> Self {
        MinHashSection {
            num_perm: DEFAULT_NUM_PERM,
            ngram: DEFAULT_NGRAM,
            threshold: DEFAULT_THRESHOLD,
            seed: None,
            verify: false,
            spill_dir: None,
            spill_run_records: 1 << 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DedupConfig {
    /// Languages with at most this many documents skip both dedup stages.
    pub min_docs: u64,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig {
            min_docs: DEFAULT_DEDUP_MIN_DOCS,
        }
    }
}

/// Parses an override value as a TOML literal, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()))
}

/// Applies `a.b.c=value` to a TOML table, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {p} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_owned(), parse_value(raw.trim()));
    Ok(())
}

impl PipelineConfig {
    /// Reads `path` (if any), applies overrides in order, and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: PipelineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.policy_options()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let m = &self.minhash;
        if !(m.threshold > 0.0 && m.threshold < 1.0) {
            return Err(Error::Config(format!(
                "minhash.threshold must be in (0, 1), got {}",
                m.threshold
            )));
        }
        if m.num_perm == 0 || m.ngram == 0 {
            return Err(Error::Config("minhash.num_perm and minhash.ngram must be positive".into()));
        }
        Ok(())
    }

    pub fn policy_options(&self) -> PolicyOptions {
        PolicyOptions {
            q_low: self.thresholds.q_low,
            q_high: self.thresholds.q_high,
            sample_fraction: self.thresholds.sample_fraction,
            large_language_docs: self.thresholds.large_language_docs,
            seed: self.seed,
        }
    }

    pub fn minhash_config(&self) -> crate::minhash::MinHashConfig {
        crate::minhash::MinHashConfig {
            num_perm: self.minhash.num_perm,
            ngram: self.minhash.ngram,
            threshold: self.minhash.threshold,
            seed: self.minhash.seed.unwrap_or(self.seed),
            verify: self.minhash.verify,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
