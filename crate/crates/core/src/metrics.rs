//! Per-document quality metrics.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::hash::Hash;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_segmentation::UnicodeSegmentation;

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::lm::LanguageModel;

/// A line is short when it has fewer characters than this.
pub const SHORT_LINE_CHARS: usize = 100;
pub const CHAR_REP_NGRAM: usize = 10;
pub const WORD_REP_NGRAM: usize = 5;

pub trait Tokenizer: Send + Sync {
    /// Deterministic; the empty string yields no tokens.
    fn tokenize<'a>(&self, text: &'a str) -> Vec<&'a str>;
}

/// Unicode word segmentation (UAX #29), punctuation dropped.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnicodeWordTokenizer;

impl Tokenizer for UnicodeWordTokenizer {
    fn tokenize<'a>(&self, text: &'a str) -> Vec<&'a str> {
        text.unicode_words().collect()
    }
}

/// Greedy longest-match subword segmentation over a piece vocabulary, applied
/// inside each Unicode word. Characters no piece covers become one-character
/// tokens.
#[derive(Debug, Clone, Default)]
pub struct SubwordTokenizer {
    pieces: HashSet<String>,
    max_piece_chars: usize,
}

impl SubwordTokenizer {
    pub fn new(pieces: impl IntoIterator<Item = String>) -> Self {
        let pieces: HashSet<String> = pieces.into_iter().filter(|p| !p.is_empty()).collect();
        let max_piece_chars = pieces.iter().map(|p| p.chars().count()).max().unwrap_or(1);
        SubwordTokenizer {
            pieces,
            max_piece_chars,
        }
    }

    /// One piece per line; anything after a tab (e.g. a score) is ignored.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(
            text.lines()
                .map(|l| l.split('\t').next().unwrap_or("").trim().to_owned()),
        ))
    }
}

impl Tokenizer for SubwordTokenizer {
    fn tokenize<'a>(&self, text: &'a str) -> Vec<&'a str> {
        let mut out = Vec::new();
        for word in text.unicode_words() {
            let bounds: Vec<usize> = word
                .char_indices()
                .map(|(i, _)| i)
                .chain(std::iter::once(word.len()))
                .collect();
            let mut start = 0;
            while start + 1 < bounds.len() {
                let longest = (start + 1..bounds.len().min(start + self.max_piece_chars + 1))
                    .rev()
                    .find(|&end| self.pieces.contains(&word[bounds[start]..bounds[end]]))
                    .unwrap_or(start + 1);
                out.push(&word[bounds[start]..bounds[longest]]);
                start = longest;
            }
        }
        out
    }
}

pub fn fold_case(s: &str) -> String {
    caseless::default_case_fold_str(s)
}

/// Stop-word and flagged-word lists per language, stored case-folded.
#[derive(Debug, Clone, Default)]
pub struct WordLists {
    stopwords: HashMap<String, HashSet<String>>,
    flagged: HashMap<String, HashSet<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ListKind {
    Stopwords,
    Flagged,
}

impl ListKind {
    fn dir_name(self) -> &'static str {
        match self {
            ListKind::Stopwords => "stopwords",
            ListKind::Flagged => "flagged",
        }
    }
}

impl WordLists {
    pub fn insert<I, S>(&mut self, kind: ListKind, language: &str, words: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let map = match kind {
            ListKind::Stopwords => &mut self.stopwords,
            ListKind::Flagged => &mut self.flagged,
        };
        let set = map.entry(language.to_owned()).or_default();
        for w in words {
            let w = w.as_ref().trim();
            if !w.is_empty() {
                set.insert(fold_case(w));
            }
        }
    }

    /// Loads `<dir>/stopwords/<lang>.txt` and `<dir>/flagged/<lang>.txt`
    /// (one word per line) for every file present.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut lists = WordLists::default();
        for kind in [ListKind::Stopwords, ListKind::Flagged] {
            let sub = dir.join(kind.dir_name());
            if !sub.is_dir() {
                continue;
            }
            let entries = fs::read_dir(&sub).map_err(|e| Error::io(&sub, e))?;
            for entry in entries {
                let path = entry.map_err(|e| Error::io(&sub, e))?.path();
                if path.extension().is_none_or(|e| e != "txt") {
                    continue;
                }
                let Some(lang) = path.file_stem().and_then(|s| s.to_str()) else {
                    continue;
                };
                let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                lists.insert(kind, lang, text.lines());
            }
        }
        Ok(lists)
    }

    fn get(&self, kind: ListKind, language: &str) -> Option<&HashSet<String>> {
        let map = match kind {
            ListKind::Stopwords => &self.stopwords,
            ListKind::Flagged => &self.flagged,
        };
        map.get(language).filter(|s| !s.is_empty())
    }
}

/// The twelve quality metrics, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    NumberWords,
    CharRepRatio,
    WordRepRatio,
    SpecialCharRatio,
    StopwordRatio,
    FlaggedWordRatio,
    LidConfidence,
    Perplexity,
    DocLengthChars,
    NumLines,
    ShortLineLengthRatio,
    ShortLineRatio,
}

impl Metric {
    pub const ALL: [Metric; 12] = [
        Metric::NumberWords,
        Metric::CharRepRatio,
        Metric::WordRepRatio,
        Metric::SpecialCharRatio,
        Metric::StopwordRatio,
        Metric::FlaggedWordRatio,
        Metric::LidConfidence,
        Metric::Perplexity,
        Metric::DocLengthChars,
        Metric::NumLines,
        Metric::ShortLineLengthRatio,
        Metric::ShortLineRatio,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::NumberWords => "number_words",
            Metric::CharRepRatio => "char_rep_ratio",
            Metric::WordRepRatio => "word_rep_ratio",
            Metric::SpecialCharRatio => "special_char_ratio",
            Metric::StopwordRatio => "stopword_ratio",
            Metric::FlaggedWordRatio => "flagged_word_ratio",
            Metric::LidConfidence => "lid_confidence",
            Metric::Perplexity => "perplexity",
            Metric::DocLengthChars => "doc_length_chars",
            Metric::NumLines => "num_lines",
            Metric::ShortLineLengthRatio => "short_line_length_ratio",
            Metric::ShortLineRatio => "short_line_ratio",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown metric {s:?}")))
    }
}

/// Metric values for one document. `None` marks a metric that is disabled
/// for the document's language (no word list, no language model) or
/// undefined for this text.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricVector {
    pub number_words: u64,
    pub char_rep_ratio: f64,
    pub word_rep_ratio: f64,
    pub special_char_ratio: f64,
    pub stopword_ratio: Option<f64>,
    pub flagged_word_ratio: Option<f64>,
    pub lid_confidence: Option<f64>,
    pub perplexity: Option<f64>,
    pub doc_length_chars: u64,
    pub num_lines: u64,
    pub short_line_length_ratio: f64,
    pub short_line_ratio: f64,
}

impl MetricVector {
    pub fn get(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::NumberWords => Some(self.number_words as f64),
            Metric::CharRepRatio => Some(self.char_rep_ratio),
            Metric::WordRepRatio => Some(self.word_rep_ratio),
            Metric::SpecialCharRatio => Some(self.special_char_ratio),
            Metric::StopwordRatio => self.stopword_ratio,
            Metric::FlaggedWordRatio => self.flagged_word_ratio,
            Metric::LidConfidence => self.lid_confidence,
            Metric::Perplexity => self.perplexity,
            Metric::DocLengthChars => Some(self.doc_length_chars as f64),
            Metric::NumLines => Some(self.num_lines as f64),
            Metric::ShortLineLengthRatio => Some(self.short_line_length_ratio),
            Metric::ShortLineRatio => Some(self.short_line_ratio),
        }
    }
}

/// `1 - distinct / total` over the n-grams of `units`; 0 with no n-grams.
pub fn repetition_ratio<T: Hash + Eq>(units: &[T], n: usize) -> f64 {
    assert!(n >= 1, "n-gram order must be positive");
    if units.len() < n {
        return 0.0;
    }
    let total = units.len() - n + 1;
    let distinct: HashSet<&[T]> = units.windows(n).collect();
    1.0 - distinct.len() as f64 / total as f64
}

fn is_special(c: char) -> bool {
    use GeneralCategory::*;
    if c == ' ' {
        return false;
    }
    matches!(
        get_general_category(c),
        ConnectorPunctuation
            | DashPunctuation
            | OpenPunctuation
            | ClosePunctuation
            | InitialPunctuation
            | FinalPunctuation
            | OtherPunctuation
            | MathSymbol
            | CurrencySymbol
            | ModifierSymbol
            | OtherSymbol
            | SpaceSeparator
            | LineSeparator
            | ParagraphSeparator
            | Control
    )
}

/// Share of characters that are punctuation, symbols, separators other than
/// the ASCII space, or control characters.
pub fn special_char_ratio(text: &str) -> f64 {
    let mut total = 0usize;
    let mut special = 0usize;
    for c in text.chars() {
        total += 1;
        special += is_special(c) as usize;
    }
    if total == 0 {
        0.0
    } else {
        special as f64 / total as f64
    }
}

/// Lines split on LF with a trailing CR removed. A final empty segment after a
/// terminating newline is not a line.
pub fn split_lines(text: &str) -> Vec<&str> {
    let mut lines: Vec<&str> = text
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .collect();
    if text.ends_with('\n') {
        lines.pop();
    }
    lines
}

/// Fraction of tokens (case-folded) found in `list`; 0 without tokens.
fn list_ratio(tokens: &[String], list: &HashSet<String>) -> f64 {
    if tokens.is_empty() {
        return 0.0;
    }
    tokens.iter().filter(|t| list.contains(*t)).count() as f64 / tokens.len() as f64
}

/// Case-folded tokens, as used for word-list lookups and the language model.
pub fn normalized_tokens(text: &str, tok: &dyn Tokenizer) -> Vec<String> {
    tok.tokenize(text).into_iter().map(fold_case).collect()
}

/// Perplexity of `text` under `lm`, or `None` when the text has no tokens.
pub fn text_perplexity(text: &str, tok: &dyn Tokenizer, lm: &LanguageModel) -> Option<f64> {
    lm.perplexity(&normalized_tokens(text, tok)).ok()
}

pub fn compute_metrics(
    doc: &Document,
    lists: &WordLists,
    tok: &dyn Tokenizer,
    lm: Option<&LanguageModel>,
) -> MetricVector {
    let text = &doc.text;
    let raw_tokens = tok.tokenize(text);
    let folded: Vec<String> = raw_tokens.iter().map(|t| fold_case(t)).collect();
    let chars: Vec<char> = text.chars().collect();

    let lines = split_lines(text);
    let mut short = 0u64;
    let mut short_chars = 0u64;
    let mut line_chars = 0u64;
    for l in &lines {
        let n = l.chars().count() as u64;
        line_chars += n;
        if (n as usize) < SHORT_LINE_CHARS {
            short += 1;
            short_chars += n;
        }
    }
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };

    MetricVector {
        number_words: raw_tokens.len() as u64,
        char_rep_ratio: repetition_ratio(&chars, CHAR_REP_NGRAM),
        word_rep_ratio: repetition_ratio(&folded, WORD_REP_NGRAM),
        special_char_ratio: special_char_ratio(text),
        stopword_ratio: lists
            .get(ListKind::Stopwords, &doc.language)
            .map(|l| list_ratio(&folded, l)),
        flagged_word_ratio: lists
            .get(ListKind::Flagged, &doc.language)
            .map(|l| list_ratio(&folded, l)),
        lid_confidence: doc.lid_confidence,
        perplexity: lm.and_then(|lm| lm.perplexity(&folded).ok()),
        doc_length_chars: chars.len() as u64,
        num_lines: lines.len() as u64,
        short_line_length_ratio: ratio(short_chars, line_chars),
        short_line_ratio: ratio(short, lines.len() as u64),
    }
}
