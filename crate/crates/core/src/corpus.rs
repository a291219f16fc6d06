//! Document model, newline-delimited record I/O and per-stage accounting.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

const RECORD_BITS: u32 = 40;
const RECORD_MASK: u64 = (1 << RECORD_BITS) - 1;

/// Record keys the pipeline owns. Everything else rides along in `extra`.
const KEY_TEXT: &str = "text";
const KEY_URL: &str = "url";
const KEY_LANGUAGE: &str = "language";
const KEY_SOURCE: &str = "source";
const KEY_TIMESTAMP: &str = "timestamp";
const KEY_ID: &str = "doc_id";
const KEY_LID: &str = "lid_confidence";

/// Stable document identifier: `(shard index << 40) | record index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DocId(pub u64);

impl DocId {
    pub fn new(shard: u32, record: u64) -> Self {
        debug_assert!(record <= RECORD_MASK, "record index overflows 40 bits");
        debug_assert!(shard < (1 << 24), "shard index overflows 24 bits");
        DocId(((shard as u64) << RECORD_BITS) | (record & RECORD_MASK))
    }

    pub fn shard(self) -> u32 {
        (self.0 >> RECORD_BITS) as u32
    }

    pub fn record(self) -> u64 {
        self.0 & RECORD_MASK
    }
}

impl fmt::Display for DocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One web page.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: DocId,
    pub text: String,
    pub url: Option<String>,
    pub language: String,
    pub source: Option<String>,
    pub timestamp: Option<String>,
    /// Attached by the language-identification stage.
    pub lid_confidence: Option<f64>,
    /// Unknown record fields, preserved verbatim and in their original order.
    pub extra: Map<String, Value>,
}

impl Document {
    pub fn new(id: DocId, text: impl Into<String>, language: impl Into<String>) -> Self {
        Document {
            id,
            text: text.into(),
            url: None,
            language: language.into(),
            source: None,
            timestamp: None,
            lid_confidence: None,
            extra: Map::new(),
        }
    }

    pub fn with_url(mut self, url: impl Into<String>) -> Self {
        self.url = Some(url.into());
        self
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    /// Serializes to a flat record. Internal fields (`doc_id`,
    /// `lid_confidence`) are emitted only when `internal` is set.
    pub fn to_record(&self, internal: bool) -> Map<String, Value> {
        let mut m = Map::new();
        if internal {
            m.insert(KEY_ID.into(), Value::from(self.id.0));
        }
        m.insert(KEY_TEXT.into(), Value::from(self.text.as_str()));
        if let Some(u) = &self.url {
            m.insert(KEY_URL.into(), Value::from(u.as_str()));
        }
        m.insert(KEY_LANGUAGE.into(), Value::from(self.language.as_str()));
        if let Some(s) = &self.source {
            m.insert(KEY_SOURCE.into(), Value::from(s.as_str()));
        }
        if let Some(t) = &self.timestamp {
            m.insert(KEY_TIMESTAMP.into(), Value::from(t.as_str()));
        }
        if internal {
            if let Some(c) = self.lid_confidence {
                m.insert(KEY_LID.into(), Value::from(c));
            }
        }
        for (k, v) in &self.extra {
            m.insert(k.clone(), v.clone());
        }
        m
    }

    /// Builds a document from a parsed record. `id` of `None` means the record
    /// must carry its own `doc_id` (a stage file rather than raw input).
    fn from_record(
        mut rec: Map<String, Value>,
        id: Option<DocId>,
        default_language: Option<&str>,
    ) -> std::result::Result<Self, Skip> {
        let text = match rec.shift_remove(KEY_TEXT) {
            Some(Value::String(s)) if s.is_empty() => return Err(Skip::Empty),
            Some(Value::String(s)) => s,
            _ => return Err(Skip::Malformed),
        };
        let opt_str = |v: Option<Value>| -> std::result::Result<Option<String>, Skip> {
            match v {
                None | Some(Value::Null) => Ok(None),
                Some(Value::String(s)) => Ok(Some(s)),
                Some(_) => Err(Skip::Malformed),
            }
        };
        let url = opt_str(rec.shift_remove(KEY_URL))?;
        let language = opt_str(rec.shift_remove(KEY_LANGUAGE))?
            .filter(|l| !l.is_empty())
            .or_else(|| default_language.map(str::to_owned))
            .ok_or(Skip::Malformed)?;
        let source = opt_str(rec.shift_remove(KEY_SOURCE))?;
        let timestamp = opt_str(rec.shift_remove(KEY_TIMESTAMP))?;
        let stored_id = rec.shift_remove(KEY_ID);
        let lid_confidence = match rec.shift_remove(KEY_LID) {
            Some(v) if id.is_none() => Some(v.as_f64().ok_or(Skip::Malformed)?),
            _ => None,
        };
        let id = match id {
            Some(id) => id,
            None => DocId(stored_id.and_then(|v| v.as_u64()).ok_or(Skip::Malformed)?),
        };
        Ok(Document {
            id,
            text,
            url,
            language,
            source,
            timestamp,
            lid_confidence,
            extra: rec,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Skip {
    Empty,
    Malformed,
}

/// Counters kept while reading a record file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub lines: u64,
    pub accepted: u64,
    pub skipped_empty: u64,
    pub skipped_malformed: u64,
}

impl IngestStats {
    pub fn skipped(&self) -> u64 {
        self.skipped_empty + self.skipped_malformed
    }
}

#[derive(Debug, Clone)]
enum ReadMode {
    /// Raw input: ids are assigned from the shard index and record position.
    Raw {
        shard: u32,
        default_language: Option<String>,
    },
    /// A stage output: ids and attached fields are read back.
    Stage,
}

/// Streaming reader over a newline-delimited record file. Files ending in
/// `.gz` are decompressed transparently.
pub struct DocumentReader {
    path: PathBuf,
    lines: io::Lines<Box<dyn BufRead + Send>>,
    mode: ReadMode,
    next_record: u64,
    stats: IngestStats,
}

fn open_read(path: &Path) -> Result<Box<dyn BufRead + Send>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(if is_gzip(path) {
        Box::new(BufReader::new(MultiGzDecoder::new(f)))
    } else {
        Box::new(BufReader::new(f))
    })
}

fn is_gzip(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

/// Opens a raw record file. Documents get sequential ids within `shard` in
/// file order; records with missing or empty text are counted and skipped.
pub fn ingest(path: impl AsRef<Path>, shard: u32) -> Result<DocumentReader> {
    ingest_with_language(path, shard, None)
}

/// Like [`ingest`], but records without a `language` field take
/// `default_language` (the shard's language) instead of being skipped.
pub fn ingest_with_language(
    path: impl AsRef<Path>,
    shard: u32,
    default_language: Option<&str>,
) -> Result<DocumentReader> {
    DocumentReader::open(
        path.as_ref(),
        ReadMode::Raw {
            shard,
            default_language: default_language.map(str::to_owned),
        },
    )
}

/// Opens a file written by a previous stage, keeping stored ids.
pub fn read_stage(path: impl AsRef<Path>) -> Result<DocumentReader> {
    DocumentReader::open(path.as_ref(), ReadMode::Stage)
}

impl DocumentReader {
    fn open(path: &Path, mode: ReadMode) -> Result<Self> {
        Ok(DocumentReader {
            path: path.to_owned(),
            lines: open_read(path)?.lines(),
            mode,
            next_record: 0,
            stats: IngestStats::default(),
        })
    }

    pub fn stats(&self) -> IngestStats {
        self.stats
    }

    /// Drains the reader, returning all documents and the final counters.
    pub fn collect_all(mut self) -> Result<(Vec<Document>, IngestStats)> {
        let mut docs = Vec::new();
        for d in self.by_ref() {
            docs.push(d?);
        }
        Ok((docs, self.stats))
    }
}

impl Iterator for DocumentReader {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            if line.trim().is_empty() {
                continue;
            }
            self.stats.lines += 1;
            let parsed = match serde_json::from_str::<Value>(&line) {
                Ok(Value::Object(m)) => Ok(m),
                _ => Err(Skip::Malformed),
            };
            let doc = parsed.and_then(|rec| match &self.mode {
                ReadMode::Raw {
                    shard,
                    default_language,
                } => Document::from_record(
                    rec,
                    Some(DocId::new(*shard, self.next_record)),
                    default_language.as_deref(),
                ),
                ReadMode::Stage => Document::from_record(rec, None, None),
            });
            match doc {
                Ok(d) => {
                    self.next_record += 1;
                    self.stats.accepted += 1;
                    return Some(Ok(d));
                }
                Err(Skip::Empty) => self.stats.skipped_empty += 1,
                Err(Skip::Malformed) => {
                    log::debug!("{}: skipping malformed record", self.path.display());
                    self.stats.skipped_malformed += 1
                }
            }
        }
    }
}

/// Newline-delimited record writer; `.gz` paths are gzip-compressed.
pub struct DocumentWriter {
    path: PathBuf,
    out: Box<dyn Write + Send>,
    internal: bool,
}

impl DocumentWriter {
    /// `internal` controls whether pipeline-owned fields are written, which
    /// stage files need and exported corpora may omit.
    pub fn create(path: impl AsRef<Path>, internal: bool) -> Result<Self> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let out: Box<dyn Write + Send> = if is_gzip(path) {
            Box::new(GzEncoder::new(BufWriter::new(f), Compression::default()))
        } else {
            Box::new(BufWriter::new(f))
        };
        Ok(DocumentWriter {
            path: path.to_owned(),
            out,
            internal,
        })
    }

    pub fn write(&mut self, doc: &Document) -> Result<()> {
        serde_json::to_writer(&mut self.out, &doc.to_record(self.internal))?;
        self.out
            .write_all(b"\n")
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

impl Drop for DocumentWriter {
    fn drop(&mut self) {
        let _ = self.out.flush();
    }
}

pub fn write_documents<'a>(
    path: impl AsRef<Path>,
    docs: impl IntoIterator<Item = &'a Document>,
    internal: bool,
) -> Result<()> {
    let mut w = DocumentWriter::create(path, internal)?;
    for d in docs {
        w.write(d)?;
    }
    w.finish()
}

/// `100 * (initial - final) / initial`.
pub fn filtering_rate(initial: f64, final_count: f64) -> Result<f64> {
    if initial <= 0.0 {
        return Err(Error::EmptyInput("filtering rate needs a non-empty initial stage"));
    }
    if final_count < 0.0 || final_count > initial {
        return Err(Error::InvalidArgument(format!(
            "final count {final_count} outside [0, {initial}]"
        )));
    }
    Ok(100.0 * (initial - final_count) / initial)
}

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Initial,
    Langid,
    UrlFilter,
    MetricFilter,
    Refine,
    MinhashDedup,
    UrlDedup,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Initial,
        Stage::Langid,
        Stage::UrlFilter,
        Stage::MetricFilter,
        Stage::Refine,
        Stage::MinhashDedup,
        Stage::UrlDedup,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Initial => "initial",
            Stage::Langid => "langid",
            Stage::UrlFilter => "url_filter",
            Stage::MetricFilter => "metric_filter",
            Stage::Refine => "refine",
            Stage::MinhashDedup => "minhash_dedup",
            Stage::UrlDedup => "url_dedup",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub documents: u64,
    pub tokens: u64,
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, rhs: Counts) {
        self.documents += rhs.documents;
        self.tokens += rhs.tokens;
    }
}

/// Per-language document and token counts after one stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub per_language: BTreeMap<String, Counts>,
}

impl StageReport {
    pub fn new(stage: Stage) -> Self {
        StageReport {
            stage,
            per_language: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, language: &str, counts: Counts) {
        *self.per_language.entry(language.to_owned()).or_default() += counts;
    }

    /// Commutative merge of another shard's counts for the same stage.
    pub fn merge(&mut self, other: &StageReport) {
        debug_assert_eq!(self.stage, other.stage);
        for (lang, c) in &other.per_language {
            self.add(lang, *c);
        }
    }

    pub fn total(&self) -> Counts {
        let mut t = Counts::default();
        for c in self.per_language.values() {
            t += *c;
        }
        t
    }
}
