use std::collections::{BTreeMap, BTreeSet};

use super::{LangClassifier, LangPrediction};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Script {
    Latin,
    Greek,
    Cyrillic,
    Hebrew,
    Arabic,
    Devanagari,
    Thai,
    Hangul,
    Kana,
    Han,
}

impl Script {
    fn of(c: char) -> Option<Script> {
        let s = match c as u32 {
            0x41..=0x5A | 0x61..=0x7A | 0xC0..=0x24F | 0x1E00..=0x1EFF => Script::Latin,
            0x370..=0x3FF | 0x1F00..=0x1FFF => Script::Greek,
            0x400..=0x52F => Script::Cyrillic,
            0x590..=0x5FF => Script::Hebrew,
            0x600..=0x6FF | 0x750..=0x77F => Script::Arabic,
            0x900..=0x97F => Script::Devanagari,
            0xE00..=0xE7F => Script::Thai,
            0x1100..=0x11FF | 0xAC00..=0xD7AF => Script::Hangul,
            0x3040..=0x30FF => Script::Kana,
            0x4E00..=0x9FFF | 0x3400..=0x4DBF => Script::Han,
            _ => return None,
        };
        // Latin range above includes a few symbols (×, ÷).
        if c == '×' || c == '÷' {
            return None;
        }
        Some(s)
    }

    pub fn from_name(name: &str) -> Option<Script> {
        Some(match name.to_ascii_lowercase().as_str() {
            "latin" => Script::Latin,
            "greek" => Script::Greek,
            "cyrillic" => Script::Cyrillic,
            "hebrew" => Script::Hebrew,
            "arabic" => Script::Arabic,
            "devanagari" => Script::Devanagari,
            "thai" => Script::Thai,
            "hangul" => Script::Hangul,
            "kana" => Script::Kana,
            "han" => Script::Han,
            _ => return None,
        })
    }
}

/// Deterministic stand-in classifier: predicts the language mapped to the
/// text's dominant script. Confidence is the dominant script's share of the
/// script-bearing characters. Text with no recognised letters is an error.
#[derive(Debug, Clone)]
pub struct ScriptClassifier {
    by_script: BTreeMap<Script, String>,
    supported: BTreeSet<String>,
}

impl ScriptClassifier {
    pub fn new(mapping: impl IntoIterator<Item = (Script, String)>) -> Self {
        let by_script: BTreeMap<_, _> = mapping.into_iter().collect();
        let supported = by_script.values().cloned().collect();
        ScriptClassifier {
            by_script,
            supported,
        }
    }

    /// Builds from `script name → language` pairs, e.g. from config.
    pub fn from_names<'a>(
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self> {
        let mut m = Vec::new();
        for (script, lang) in pairs {
            let s = Script::from_name(script)
                .ok_or_else(|| Error::Config(format!("unknown script {script:?}")))?;
            m.push((s, lang.to_owned()));
        }
        Ok(Self::new(m))
    }
}

impl Default for ScriptClassifier {
    fn default() -> Self {
        Self::new(
            [
                (Script::Latin, "en"),
                (Script::Greek, "el"),
                (Script::Cyrillic, "ru"),
                (Script::Hebrew, "he"),
                (Script::Arabic, "ar"),
                (Script::Devanagari, "hi"),
                (Script::Thai, "th"),
                (Script::Hangul, "ko"),
                (Script::Kana, "ja"),
                (Script::Han, "zh"),
            ]
            .map(|(s, l)| (s, l.to_owned())),
        )
    }
}

impl LangClassifier for ScriptClassifier {
    fn supported_languages(&self) -> &BTreeSet<String> {
        &self.supported
    }

    fn predict(&self, text: &str) -> Result<LangPrediction> {
        let mut counts: BTreeMap<Script, usize> = BTreeMap::new();
        let mut total = 0usize;
        for s in text.chars().filter_map(Script::of) {
            if self.by_script.contains_key(&s) {
                *counts.entry(s).or_default() += 1;
            }
            total += 1;
        }
        // Ties break toward the earlier script in enum order.
        let (script, n) = counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .ok_or_else(|| Error::InvalidArgument("no script-bearing characters".into()))?;
        Ok(LangPrediction {
            language: self.by_script[script].clone(),
            confidence: *n as f64 / total as f64,
        })
    }

    fn confidence_for(&self, text: &str, language: &str) -> Result<f64> {
        let mut hit = 0usize;
        let mut total = 0usize;
        for s in text.chars().filter_map(Script::of) {
            total += 1;
            if self.by_script.get(&s).is_some_and(|l| l == language) {
                hit += 1;
            }
        }
        if total == 0 {
            return Err(Error::InvalidArgument("no script-bearing characters".into()));
        }
        Ok(hit as f64 / total as f64)
    }
}
