//! In-place document cleanup: trailing short lines and stray JavaScript lines.

use std::borrow::Cow;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::metrics::SHORT_LINE_CHARS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JsKeywordType {
    Tag,
    Statement,
    Symbol,
}

/// Keywords grouped by type. Deserializes from `{tag = [...], statement =
/// [...], symbol = [...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "KeywordTable", into = "KeywordTable")]
pub struct JsKeywordSet {
    keywords: Vec<(String, JsKeywordType)>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeywordTable {
    #[serde(default)]
    tag: Vec<String>,
    #[serde(default)]
    statement: Vec<String>,
    #[serde(default)]
    symbol: Vec<String>,
}

impl TryFrom<KeywordTable> for JsKeywordSet {
    type Error = Error;

    fn try_from(t: KeywordTable) -> Result<Self> {
        let mut kws = Vec::new();
        for (ty, list) in [
            (JsKeywordType::Tag, t.tag),
            (JsKeywordType::Statement, t.statement),
            (JsKeywordType::Symbol, t.symbol),
        ] {
            kws.extend(list.into_iter().map(|k| (k, ty)));
        }
        JsKeywordSet::new(kws)
    }
}

impl From<JsKeywordSet> for KeywordTable {
    fn from(s: JsKeywordSet) -> Self {
        let mut t = KeywordTable::default();
        for (k, ty) in s.keywords {
            match ty {
                JsKeywordType::Tag => t.tag.push(k),
                JsKeywordType::Statement => t.statement.push(k),
                JsKeywordType::Symbol => t.symbol.push(k),
            }
        }
        t
    }
}

impl Default for JsKeywordSet {
    fn default() -> Self {
        use JsKeywordType::*;
        let kws = [
            ("<script", Tag),
            ("</script>", Tag),
            ("document.", Tag),
            ("function", Statement),
            ("var ", Statement),
            ("let ", Statement),
            ("const ", Statement),
            ("=>", Symbol),
            ("();", Symbol),
        ];
        JsKeywordSet {
            keywords: kws.iter().map(|&(k, t)| (k.to_owned(), t)).collect(),
        }
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '$'
}

impl JsKeywordSet {
    pub fn new(keywords: impl IntoIterator<Item = (String, JsKeywordType)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for (k, ty) in keywords {
            if k.is_empty() {
                return Err(Error::Config("empty JS keyword".into()));
            }
            if !seen.insert(k.clone()) {
                return Err(Error::Config(format!(
                    "JS keyword {k:?} listed more than once"
                )));
            }
            out.push((k, ty));
        }
        if out.is_empty() {
            return Err(Error::Config("JS keyword set is empty".into()));
        }
        Ok(JsKeywordSet { keywords: out })
    }

    pub fn keywords(&self) -> impl Iterator<Item = (&str, JsKeywordType)> {
        self.keywords.iter().map(|(k, t)| (k.as_str(), *t))
    }

    /// Keyword types present in `line`. A keyword that starts (ends) with a
    /// word character only matches where the preceding (following) character
    /// is not one, so "var " does not fire inside "lavar ".
    pub fn types_in(&self, line: &str) -> BTreeSet<JsKeywordType> {
        let mut found = BTreeSet::new();
        for (kw, ty) in &self.keywords {
            if !found.contains(ty) && contains_bounded(line, kw) {
                found.insert(*ty);
            }
        }
        found
    }
}

fn contains_bounded(line: &str, kw: &str) -> bool {
    let lead = kw.starts_with(is_word_char);
    let trail = kw.ends_with(is_word_char);
    line.match_indices(kw).any(|(i, _)| {
        let before_ok = !lead || !line[..i].ends_with(is_word_char);
        let after_ok = !trail || !line[i + kw.len()..].starts_with(is_word_char);
        before_ok && after_ok
    })
}

/// One line: content without terminator, and the byte range including it.
#[derive(Debug, Clone, Copy)]
struct Span {
    start: usize,
    content_end: usize,
    end: usize,
}

/// Lines as in the metrics module: split on LF, CR stripped from the
/// content, no final empty segment after a terminating newline.
fn spans(text: &str) -> Vec<Span> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, _) in text.match_indices('\n') {
        out.push(span(text, start, i, i + 1));
        start = i + 1;
    }
    if start < text.len() || !text.ends_with('\n') {
        out.push(span(text, start, text.len(), text.len()));
    }
    out
}

fn span(text: &str, start: usize, line_end: usize, end: usize) -> Span {
    let content_end = if text[start..line_end].ends_with('\r') {
        line_end - 1
    } else {
        line_end
    };
    Span {
        start,
        content_end,
        end,
    }
}

fn is_short(text: &str, s: &Span) -> bool {
    text[s.start..s.content_end].chars().count() < SHORT_LINE_CHARS
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trimmed<'a> {
    pub text: Cow<'a, str>,
    pub removed_lines: usize,
    /// Every line was short; the text was left alone.
    pub all_short: bool,
}

pub fn trim_trailing_short_lines(text: &str) -> Trimmed<'_> {
    let lines = spans(text);
    let keep = lines
        .iter()
        .rposition(|s| !is_short(text, s))
        .map(|i| i + 1);
    match keep {
        None => Trimmed {
            text: Cow::Borrowed(text),
            removed_lines: 0,
            all_short: true,
        },
        Some(n) if n == lines.len() => Trimmed {
            text: Cow::Borrowed(text),
            removed_lines: 0,
            all_short: false,
        },
        Some(n) => Trimmed {
            text: Cow::Borrowed(&text[..lines[n - 1].end]),
            removed_lines: lines.len() - n,
            all_short: false,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stripped<'a> {
    pub text: Cow<'a, str>,
    pub removed: bool,
    /// Number of lines with at least one keyword.
    pub js_lines: usize,
}

/// Removes the single keyword-bearing line when it is the only one and mixes
/// at least two keyword types. A line that is the whole document stays.
pub fn strip_js_line<'a>(text: &'a str, kws: &JsKeywordSet) -> Stripped<'a> {
    let lines = spans(text);
    let mut hits = lines
        .iter()
        .map(|s| kws.types_in(&text[s.start..s.content_end]))
        .enumerate()
        .filter(|(_, t)| !t.is_empty());
    let first = hits.next();
    let js_lines = first.is_some() as usize + hits.count();
    let unchanged = |js_lines| Stripped {
        text: Cow::Borrowed(text),
        removed: false,
        js_lines,
    };
    match first {
        Some((i, types)) if js_lines == 1 && types.len() >= 2 && lines.len() > 1 => {
            let s = lines[i];
            let mut out = String::with_capacity(text.len() - (s.end - s.start));
            out.push_str(&text[..s.start]);
            out.push_str(&text[s.end..]);
            Stripped {
                text: Cow::Owned(out),
                removed: true,
                js_lines,
            }
        }
        _ => unchanged(js_lines),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Refined {
    pub text: String,
    pub trimmed_lines: usize,
    pub js_lines_removed: usize,
    pub all_short: bool,
}

impl Refined {
    pub fn changed(&self) -> bool {
        self.trimmed_lines > 0 || self.js_lines_removed > 0
    }
}

/// Trailing-line trim followed by the JS rule, repeated until neither
/// changes the text.
pub fn refine(text: &str, kws: &JsKeywordSet) -> Refined {
    let mut cur = text.to_owned();
    let mut r = Refined {
        text: String::new(),
        trimmed_lines: 0,
        js_lines_removed: 0,
        all_short: false,
    };
    loop {
        let t = trim_trailing_short_lines(&cur);
        r.trimmed_lines += t.removed_lines;
        r.all_short = t.all_short;
        let after_trim = t.text.into_owned();
        let s = strip_js_line(&after_trim, kws);
        let removed = s.removed;
        let next = s.text.into_owned();
        r.js_lines_removed += removed as usize;
        if next.len() == cur.len() {
            r.text = next;
            return r;
        }
        cur = next;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefineStats {
    pub documents: u64,
    pub changed: u64,
    pub trimmed_lines: u64,
    pub js_lines_removed: u64,
    pub all_short_flagged: u64,
}

impl RefineStats {
    pub fn merge(&mut self, o: &RefineStats) {
        self.documents += o.documents;
        self.changed += o.changed;
        self.trimmed_lines += o.trimmed_lines;
        self.js_lines_removed += o.js_lines_removed;
        self.all_short_flagged += o.all_short_flagged;
    }
}

pub fn refine_document(doc: &mut Document, kws: &JsKeywordSet, stats: &mut RefineStats) {
    let r = refine(&doc.text, kws);
    stats.documents += 1;
    stats.changed += r.changed() as u64;
    stats.trimmed_lines += r.trimmed_lines as u64;
    stats.js_lines_removed += r.js_lines_removed as u64;
    stats.all_short_flagged += r.all_short as u64;
    if r.changed() {
        doc.text = r.text;
    }
}
