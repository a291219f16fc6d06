//! Language re-identification filter.

mod fasttext;
mod script;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use fasttext::FastTextModel;
pub use script::{Script, ScriptClassifier};

use crate::corpus::Document;
use crate::error::Result;

/// Predictions only look at this many leading characters.
pub const PREDICTION_WINDOW_CHARS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LangPrediction {
    pub language: String,
    pub confidence: f64,
}

/// A language identifier. Implementations must be deterministic and
/// shareable across threads once loaded.
pub trait LangClassifier: Send + Sync {
    fn supported_languages(&self) -> &BTreeSet<String>;

    fn predict(&self, text: &str) -> Result<LangPrediction>;

    /// Probability the model assigns to `language` for `text`.
    fn confidence_for(&self, text: &str, language: &str) -> Result<f64> {
        let p = self.predict(text)?;
        Ok(if p.language == language { p.confidence } else { 0.0 })
    }
}

/// The prefix of `text` the classifiers see.
pub fn prediction_window(text: &str) -> &str {
    match text.char_indices().nth(PREDICTION_WINDOW_CHARS) {
        Some((end, _)) => &text[..end],
        None => text,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LangDecision {
    Keep(LangPrediction),
    DropUnsupported,
    DropMismatch(LangPrediction),
    DropClassifierError(String),
}

impl LangDecision {
    pub fn is_keep(&self) -> bool {
        matches!(self, LangDecision::Keep(_))
    }
}

/// Decides whether `doc` survives re-identification.
pub fn relabel_filter(doc: &Document, clf: &dyn LangClassifier) -> LangDecision {
    if !clf.supported_languages().contains(&doc.language) {
        return LangDecision::DropUnsupported;
    }
    match clf.predict(prediction_window(&doc.text)) {
        Ok(p) if p.language == doc.language => LangDecision::Keep(p),
        Ok(p) => LangDecision::DropMismatch(p),
        Err(e) => LangDecision::DropClassifierError(e.to_string()),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LangIdStats {
    pub kept: u64,
    pub unsupported: u64,
    pub mismatched: u64,
    pub classifier_errors: u64,
}

impl LangIdStats {
    pub fn merge(&mut self, o: &LangIdStats) {
        self.kept += o.kept;
        self.unsupported += o.unsupported;
        self.mismatched += o.mismatched;
        self.classifier_errors += o.classifier_errors;
    }
}

/// Stage wrapper: applies [`relabel_filter`] and attaches the confidence.
///
/// Sources listed in `exempt_sources` skip the mismatch rule but still get a
/// confidence for the labeled language (unsupported labels are dropped for
/// every source).
pub struct LangIdFilter<'a> {
    pub classifier: &'a dyn LangClassifier,
    pub exempt_sources: BTreeSet<String>,
}

impl<'a> LangIdFilter<'a> {
    pub fn new(classifier: &'a dyn LangClassifier) -> Self {
        LangIdFilter {
            classifier,
            exempt_sources: BTreeSet::new(),
        }
    }

    /// Returns the document with `lid_confidence` set, or `None` if dropped.
    pub fn apply(&self, mut doc: Document, stats: &mut LangIdStats) -> Option<Document> {
        let exempt = doc
            .source
            .as_ref()
            .is_some_and(|s| self.exempt_sources.contains(s));
        let decision = relabel_filter(&doc, self.classifier);
        let confidence = match decision {
            LangDecision::Keep(p) => p.confidence,
            LangDecision::DropMismatch(_) if exempt => {
                match self
                    .classifier
                    .confidence_for(prediction_window(&doc.text), &doc.language)
                {
                    Ok(c) => c,
                    Err(_) => {
                        stats.classifier_errors += 1;
                        return None;
                    }
                }
            }
            LangDecision::DropMismatch(_) => {
                stats.mismatched += 1;
                return None;
            }
            LangDecision::DropUnsupported => {
                stats.unsupported += 1;
                return None;
            }
            LangDecision::DropClassifierError(e) => {
                log::debug!("doc {}: classifier error: {e}", doc.id);
                stats.classifier_errors += 1;
                return None;
            }
        };
        stats.kept += 1;
        doc.lid_confidence = Some(confidence.clamp(0.0, 1.0));
        Some(doc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DocId;
    use crate::error::Error;

    /// Returns a fixed prediction regardless of input.
    struct Fixed {
        langs: BTreeSet<String>,
        out: Option<LangPrediction>,
    }

    impl Fixed {
        fn new(lang: &str, conf: f64) -> Self {
            Fixed {
                langs: ["en", "de"].iter().map(|s| s.to_string()).collect(),
                out: Some(LangPrediction {
                    language: lang.into(),
                    confidence: conf,
                }),
            }
        }
    }

    impl LangClassifier for Fixed {
        fn supported_languages(&self) -> &BTreeSet<String> {
            &self.langs
        }
        fn predict(&self, _: &str) -> Result<LangPrediction> {
            self.out
                .clone()
                .ok_or_else(|| Error::InvalidArgument("no prediction".into()))
        }
    }

    fn doc(lang: &str) -> Document {
        Document::new(DocId(1), "some text", lang)
    }

    #[test]
    fn agreement_keeps_with_confidence() {
        let clf = Fixed::new("en", 0.99);
        let mut stats = LangIdStats::default();
        let out = LangIdFilter::new(&clf).apply(doc("en"), &mut stats).unwrap();
        assert_eq!(out.lid_confidence, Some(0.99));
        assert_eq!(stats.kept, 1);
    }

    #[test]
    fn disagreement_drops() {
        let clf = Fixed::new("en", 0.97);
        assert!(matches!(
            relabel_filter(&doc("de"), &clf),
            LangDecision::DropMismatch(_)
        ));
    }

    #[test]
    fn unsupported_label_drops() {
        let clf = Fixed::new("en", 0.97);
        assert_eq!(relabel_filter(&doc("zz"), &clf), LangDecision::DropUnsupported);
    }

    #[test]
    fn classifier_failure_is_counted_not_kept() {
        let mut clf = Fixed::new("en", 0.5);
        clf.out = None;
        let mut stats = LangIdStats::default();
        assert!(LangIdFilter::new(&clf).apply(doc("en"), &mut stats).is_none());
        assert_eq!(stats.classifier_errors, 1);
        assert_eq!(stats.kept, 0);
    }

    #[test]
    fn exempt_source_keeps_mismatch() {
        let clf = Fixed::new("en", 0.9);
        let mut f = LangIdFilter::new(&clf);
        f.exempt_sources.insert("oscar".into());
        let mut stats = LangIdStats::default();
        let d = doc("de").with_source("oscar");
        let out = f.apply(d, &mut stats).unwrap();
        assert_eq!(out.lid_confidence, Some(0.0));
        assert!(f.apply(doc("de").with_source("mc4"), &mut stats).is_none());
    }

    #[test]
    fn idempotent() {
        let clf = ScriptClassifier::default();
        let mut stats = LangIdStats::default();
        let f = LangIdFilter::new(&clf);
        let d = Document::new(DocId(0), "Hello there, world", "en");
        let once = f.apply(d, &mut stats).unwrap();
        let twice = f.apply(once.clone(), &mut stats).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn window_truncates_on_char_boundary() {
        let s = "é".repeat(PREDICTION_WINDOW_CHARS + 10);
        assert_eq!(prediction_window(&s).chars().count(), PREDICTION_WINDOW_CHARS);
        assert_eq!(prediction_window("abc"), "abc");
    }
}
