//! Stage orchestration, per-stage accounting and the threshold sweep.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::corpus::{self, Counts, DocId, Document, IngestStats, Stage, StageReport};
use crate::error::{Error, Result};
use crate::langid::{FastTextModel, LangClassifier, LangIdFilter, LangIdStats, ScriptClassifier};
use crate::lm::LanguageModel;
use crate::metrics::{
    compute_metrics, Metric, MetricVector, SubwordTokenizer, Tokenizer, UnicodeWordTokenizer,
    WordLists,
};
use crate::minhash::{self, HashFamily, LshIndex, SpillOptions};
use crate::par;
use crate::refine::{refine_document, RefineStats};
use crate::threshold::{self, apply_policy, build_policy, ApplyStats, ThresholdPolicy};
use crate::urldedup::{url_dedup, UrlDedupStats};
use crate::urlfilter::{keep_document, Blacklist, UrlFilterStats};

/// Models and lists loaded once per run.
pub struct Resources {
    pub classifier: Box<dyn LangClassifier>,
    pub blacklist: Option<Blacklist>,
    pub wordlists: WordLists,
    pub tokenizer: Box<dyn Tokenizer>,
    pub lms: HashMap<String, LanguageModel>,
}

fn blacklist_categories(root: &Path) -> Result<Vec<String>> {
    let mut cats = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::Config(format!("{}: {e}", root.display())))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        if entry.path().is_dir() {
            cats.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    cats.sort();
    Ok(cats)
}

impl Resources {
    pub fn load(cfg: &PipelineConfig) -> Result<Self> {
        let classifier: Box<dyn LangClassifier> = match &cfg.langid.model {
            Some(p) => Box::new(FastTextModel::load(p)?),
            None if cfg.langid.scripts.is_empty() => Box::new(ScriptClassifier::default()),
            None => Box::new(ScriptClassifier::from_names(
                cfg.langid.scripts.iter().map(|(s, l)| (s.as_str(), l.as_str())),
            )?),
        };
        let blacklist = match &cfg.urlfilter.blacklist_root {
            Some(root) => {
                let cats = if cfg.urlfilter.categories.is_empty() {
                    blacklist_categories(root)?
                } else {
                    cfg.urlfilter.categories.clone()
                };
                Some(Blacklist::load(root, &cats)?)
            }
            None => None,
        };
        let wordlists = match &cfg.metrics.wordlists_dir {
            Some(d) => WordLists::load_dir(d)?,
            None => WordLists::default(),
        };
        let tokenizer: Box<dyn Tokenizer> = match &cfg.metrics.subword_vocab {
            Some(p) => Box::new(SubwordTokenizer::load(p)?),
            None => Box::new(UnicodeWordTokenizer),
        };
        let mut lms = HashMap::new();
        if let Some(dir) = &cfg.metrics.lm_dir {
            for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
                let path = entry.map_err(|e| Error::io(dir, e))?.path();
                if path.extension().is_some_and(|e| e == "knlm") {
                    if let Some(lang) = path.file_stem().and_then(|s| s.to_str()) {
                        lms.insert(lang.to_owned(), LanguageModel::load(&path)?);
                    }
                }
            }
        }
        Ok(Resources {
            classifier,
            blacklist,
            wordlists,
            tokenizer,
            lms,
        })
    }

    pub fn token_count(&self, text: &str) -> u64 {
        self.tokenizer.tokenize(text).len() as u64
    }

    pub fn counts(&self, docs: &[Document]) -> Counts {
        let tokens: u64 = par::map(docs, |d| self.token_count(&d.text)).into_iter().sum();
        Counts {
            documents: docs.len() as u64,
            tokens,
        }
    }
}

/// Reads every input shard. Documents outside the language allowlist are
/// dropped and counted.
pub fn ingest_all(cfg: &PipelineConfig) -> Result<(Vec<Document>, IngestStats, u64)> {
    let allow: BTreeSet<&str> = cfg.languages.iter().map(String::as_str).collect();
    let mut docs = Vec::new();
    let mut stats = IngestStats::default();
    let mut excluded = 0u64;
    for (shard, path) in cfg.inputs.iter().enumerate() {
        let (shard_docs, s) = corpus::ingest(path, shard as u32)?.collect_all()?;
        stats.lines += s.lines;
        stats.accepted += s.accepted;
        stats.skipped_empty += s.skipped_empty;
        stats.skipped_malformed += s.skipped_malformed;
        for d in shard_docs {
            if allow.is_empty() || allow.contains(d.language.as_str()) {
                docs.push(d);
            } else {
                excluded += 1;
            }
        }
    }
    Ok((docs, stats, excluded))
}

/// Reads files written by earlier stages, keeping their ids.
pub fn read_stage_files(paths: &[PathBuf]) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for p in paths {
        docs.extend(corpus::read_stage(p)?.collect_all()?.0);
    }
    Ok(docs)
}

/// Writes `<dir>/<language>.jsonl` stage files.
pub fn write_by_language(dir: &Path, by_lang: &BTreeMap<String, Vec<Document>>) -> Result<()> {
    for (lang, docs) in by_lang {
        corpus::write_documents(dir.join(format!("{lang}.jsonl")), docs, true)?;
    }
    Ok(())
}

pub fn group_by_language(docs: Vec<Document>) -> BTreeMap<String, Vec<Document>> {
    let mut by: BTreeMap<String, Vec<Document>> = BTreeMap::new();
    for d in docs {
        by.entry(d.language.clone()).or_default().push(d);
    }
    for v in by.values_mut() {
        v.sort_by_key(|d| d.id);
    }
    by
}

pub fn stage_langid(
    docs: Vec<Document>,
    res: &Resources,
    cfg: &PipelineConfig,
) -> (Vec<Document>, LangIdStats) {
    if !cfg.langid.enabled {
        return (docs, LangIdStats::default());
    }
    let mut filter = LangIdFilter::new(res.classifier.as_ref());
    filter.exempt_sources = cfg.langid.exempt_sources.iter().cloned().collect();
    let results = par::map_owned(docs, |d| {
        let mut s = LangIdStats::default();
        (filter.apply(d, &mut s), s)
    });
    let mut stats = LangIdStats::default();
    let mut out = Vec::new();
    for (d, s) in results {
        stats.merge(&s);
        out.extend(d);
    }
    (out, stats)
}

pub fn stage_urlfilter(docs: Vec<Document>, res: &Resources) -> (Vec<Document>, UrlFilterStats) {
    let Some(bl) = &res.blacklist else {
        let stats = UrlFilterStats {
            kept: docs.len() as u64,
            ..Default::default()
        };
        return (docs, stats);
    };
    let results = par::map_owned(docs, |d| {
        let mut s = UrlFilterStats::default();
        let keep = keep_document(&d, bl, &mut s);
        (keep.then_some(d), s)
    });
    let mut stats = UrlFilterStats::default();
    let mut out = Vec::new();
    for (d, s) in results {
        stats.merge(&s);
        out.extend(d);
    }
    (out, stats)
}

pub fn stage_metrics(docs: &[Document], res: &Resources) -> Vec<MetricVector> {
    par::map(docs, |d| {
        compute_metrics(
            d,
            &res.wordlists,
            res.tokenizer.as_ref(),
            res.lms.get(&d.language),
        )
    })
}

/// Keeps documents whose metrics the language's policy accepts.
pub fn stage_apply(
    docs: Vec<Document>,
    metrics: &[MetricVector],
    policy: &ThresholdPolicy,
) -> (Vec<Document>, ApplyStats) {
    let mut stats = ApplyStats::default();
    let mut out = Vec::new();
    for (d, mv) in docs.into_iter().zip(metrics) {
        let v = apply_policy(mv, policy);
        stats.record(&v);
        if v.keep() {
            out.push(d);
        }
    }
    (out, stats)
}

pub fn stage_refine(docs: Vec<Document>, cfg: &PipelineConfig) -> (Vec<Document>, RefineStats) {
    if !cfg.refine.enabled {
        return (docs, RefineStats::default());
    }
    let kws = &cfg.refine.js_keywords;
    let results = par::map_owned(docs, |mut d| {
        let mut s = RefineStats::default();
        refine_document(&mut d, kws, &mut s);
        (d, s)
    });
    let mut stats = RefineStats::default();
    let docs = results
        .into_iter()
        .map(|(d, s)| {
            stats.merge(&s);
            d
        })
        .collect();
    (docs, stats)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinHashStats {
    pub kept: u64,
    pub removed: u64,
    /// Documents without tokens, never signed.
    pub unsigned: u64,
}

impl MinHashStats {
    fn merge(&mut self, o: &MinHashStats) {
        self.kept += o.kept;
        self.removed += o.removed;
        self.unsigned += o.unsigned;
    }
}

/// Survivors, `(survivor, removed)` pairs and counts.
pub type MinHashStage = (Vec<Document>, Vec<(DocId, DocId)>, MinHashStats);

/// Near-duplicate removal for one language. Returns survivors in input order
/// and the `(survivor, removed)` pairs.
pub fn stage_minhash(
    docs: Vec<Document>,
    res: &Resources,
    cfg: &PipelineConfig,
) -> Result<MinHashStage> {
    let mcfg = cfg.minhash_config();
    let (keep, pairs, unsigned) = match &cfg.minhash.spill_dir {
        None => {
            let out = minhash::dedup_documents(&docs, res.tokenizer.as_ref(), &mcfg)?;
            (out.keep, out.pairs, out.unsigned)
        }
        Some(dir) => {
            if mcfg.verify {
                return Err(Error::Config(
                    "minhash.verify is not available with minhash.spill_dir".into(),
                ));
            }
            let params = minhash::lsh_params(mcfg.num_perm, mcfg.threshold)?;
            let family = HashFamily::new(mcfg.num_perm, mcfg.seed);
            let sigs = minhash::signatures(&docs, res.tokenizer.as_ref(), &family, mcfg.ngram);
            let unsigned = sigs.iter().filter(|s| s.is_none()).count() as u64;
            let opts = SpillOptions {
                dir: dir.clone(),
                run_records: cfg.minhash.spill_run_records,
            };
            let mut uf = minhash::dedup_spilled(sigs.into_iter().flatten().map(Ok), params, &opts)?;
            let pairs = uf.removed_pairs();
            let removed: BTreeSet<DocId> = pairs.iter().map(|p| p.1).collect();
            let keep = docs.iter().map(|d| !removed.contains(&d.id)).collect();
            (keep, pairs, unsigned)
        }
    };
    let stats = MinHashStats {
        kept: keep.iter().filter(|&&k| k).count() as u64,
        removed: keep.iter().filter(|&&k| !k).count() as u64,
        unsigned,
    };
    let out = docs
        .into_iter()
        .zip(keep)
        .filter_map(|(d, k)| k.then_some(d))
        .collect();
    Ok((out, pairs, stats))
}

pub fn stage_urldedup(docs: Vec<Document>) -> (Vec<Document>, Vec<(DocId, DocId)>, UrlDedupStats) {
    let out = url_dedup(&docs);
    let kept = docs
        .into_iter()
        .zip(&out.keep)
        .filter_map(|(d, &k)| k.then_some(d))
        .collect();
    (kept, out.pairs, out.stats)
}

/// Whether a language with `documents` documents is large enough to dedup.
pub fn passes_dedup_gate(documents: u64, cfg: &PipelineConfig) -> bool {
    documents > cfg.dedup.min_docs
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub ingest: IngestStats,
    /// Documents whose language is outside the allowlist.
    pub excluded_language: u64,
    pub langid: LangIdStats,
    pub url_filter: UrlFilterStats,
    pub metric_filter: ApplyStats,
    pub refine: RefineStats,
    pub minhash_dedup: MinHashStats,
    pub url_dedup: UrlDedupStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// False when a stage failed; `error` then says why.
    pub complete: bool,
    pub error: Option<String>,
    pub seed: u64,
    pub stages: Vec<StageReport>,
    /// Stages skipped per language by the dedup gate.
    pub gated: BTreeMap<String, Vec<Stage>>,
    pub stats: StageStats,
}

impl RunReport {
    fn new(seed: u64) -> Self {
        RunReport {
            complete: false,
            error: None,
            seed,
            stages: Vec::new(),
            gated: BTreeMap::new(),
            stats: StageStats::default(),
        }
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    /// Percentage of initial documents removed, if the run has both ends.
    pub fn filtering_rate(&self) -> Option<f64> {
        let first = self.stage(Stage::Initial)?.total().documents;
        let last = self.stages.last()?.total().documents;
        corpus::filtering_rate(first as f64, last as f64).ok()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Stage-by-language document count table, plus totals and the rate.
    pub fn render_table(&self) -> String {
        let langs: BTreeSet<&String> = self
            .stages
            .iter()
            .flat_map(|s| s.per_language.keys())
            .collect();
        let mut out = format!("{:<10}", "language");
        for s in &self.stages {
            out.push_str(&format!(" {:>14}", s.stage.name()));
        }
        out.push('\n');
        let row = |out: &mut String, name: &str, get: &dyn Fn(&StageReport) -> u64| {
            out.push_str(&format!("{name:<10}"));
            for s in &self.stages {
                out.push_str(&format!(" {:>14}", get(s)));
            }
            out.push('\n');
        };
        for l in &langs {
            row(&mut out, l, &|s| s.per_language.get(*l).map_or(0, |c| c.documents));
        }
        row(&mut out, "total", &|s| s.total().documents);
        row(&mut out, "tokens", &|s| s.total().tokens);
        if let Some(r) = self.filtering_rate() {
            out.push_str(&format!("filtering rate: {r:.2}%\n"));
        }
        if !self.complete {
            out.push_str(&format!(
                "INCOMPLETE: {}\n",
                self.error.as_deref().unwrap_or("unknown error")
            ));
        }
        out
    }
}

/// Writes `(doc_id, language, metrics)` lines.
pub fn write_metrics(path: &Path, docs: &[Document], metrics: &[MetricVector]) -> Result<()> {
    if let Some(d) = path.parent() {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for (d, m) in docs.iter().zip(metrics) {
        let rec = MetricRecord {
            doc_id: d.id.0,
            language: d.language.clone(),
            metrics: m.clone(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub doc_id: u64,
    pub language: String,
    pub metrics: MetricVector,
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRecord>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

fn stage_dir(out: &Path, stage: Stage) -> PathBuf {
    let idx = Stage::ALL.iter().position(|s| *s == stage).unwrap_or(0);
    out.join("stages").join(format!("{idx}_{}", stage.name()))
}

struct Run<'a> {
    cfg: &'a PipelineConfig,
    res: &'a Resources,
    report: &'a mut RunReport,
}

impl Run<'_> {
    fn record(&mut self, stage: Stage, by_lang: &BTreeMap<String, Vec<Document>>) -> Result<()> {
        let mut r = StageReport::new(stage);
        for (lang, docs) in by_lang {
            r.add(lang, self.res.counts(docs));
        }
        log::info!("{}: {} documents", stage.name(), r.total().documents);
        self.report.stages.push(r);
        if self.cfg.materialize_stages {
            let dir = stage_dir(&self.cfg.output_dir, stage);
            for (lang, docs) in by_lang {
                corpus::write_documents(dir.join(format!("{lang}.jsonl")), docs, true)?;
            }
        }
        Ok(())
    }

    fn policy_for(&self, lang: &str, metrics: &[MetricVector]) -> Result<Option<ThresholdPolicy>> {
        if let Some(dir) = &self.cfg.thresholds.policy_dir {
            let path = dir.join(format!("{lang}.json"));
            return if path.is_file() {
                ThresholdPolicy::load(&path).map(Some)
            } else {
                Err(Error::Config(format!("no policy for {lang:?} in {}", dir.display())))
            };
        }
        if metrics.is_empty() {
            return Ok(None);
        }
        build_policy(lang, metrics, &self.cfg.policy_options()).map(Some)
    }

    fn execute(&mut self) -> Result<()> {
        let out = self.cfg.output_dir.clone();
        let (docs, ingest, excluded) = ingest_all(self.cfg)?;
        self.report.stats.ingest = ingest;
        self.report.stats.excluded_language = excluded;
        let mut by_lang = group_by_language(docs);
        self.record(Stage::Initial, &by_lang)?;

        for docs in by_lang.values_mut() {
            let (kept, s) = stage_langid(std::mem::take(docs), self.res, self.cfg);
            self.report.stats.langid.merge(&s);
            *docs = kept;
        }
        self.record(Stage::Langid, &by_lang)?;

        for docs in by_lang.values_mut() {
            let (kept, s) = stage_urlfilter(std::mem::take(docs), self.res);
            self.report.stats.url_filter.merge(&s);
            *docs = kept;
        }
        self.record(Stage::UrlFilter, &by_lang)?;

        let mut policies = Vec::new();
        for (lang, docs) in by_lang.iter_mut() {
            let metrics = stage_metrics(docs, self.res);
            if self.cfg.materialize_stages {
                write_metrics(&out.join("metrics").join(format!("{lang}.jsonl")), docs, &metrics)?;
            }
            let Some(policy) = self.policy_for(lang, &metrics)? else {
                continue;
            };
            let (kept, s) = stage_apply(std::mem::take(docs), &metrics, &policy);
            self.report.stats.metric_filter.merge(&s);
            *docs = kept;
            policies.push(policy);
        }
        threshold::save_policies(out.join("policies"), &policies)?;
        self.record(Stage::MetricFilter, &by_lang)?;

        for docs in by_lang.values_mut() {
            let (refined, s) = stage_refine(std::mem::take(docs), self.cfg);
            self.report.stats.refine.merge(&s);
            *docs = refined;
        }
        self.record(Stage::Refine, &by_lang)?;

        let dedup_dir = out.join("dedup");
        fs::create_dir_all(&dedup_dir).map_err(|e| Error::io(&dedup_dir, e))?;
        let mut gated = BTreeSet::new();
        for (lang, docs) in by_lang.iter_mut() {
            if !passes_dedup_gate(docs.len() as u64, self.cfg) {
                gated.insert(lang.clone());
                continue;
            }
            let (kept, pairs, s) = stage_minhash(std::mem::take(docs), self.res, self.cfg)?;
            self.report.stats.minhash_dedup.merge(&s);
            minhash::write_pairs(dedup_dir.join(format!("{lang}.minhash.tsv")), &pairs)?;
            *docs = kept;
        }
        self.record(Stage::MinhashDedup, &by_lang)?;

        for (lang, docs) in by_lang.iter_mut() {
            if gated.contains(lang) {
                continue;
            }
            let (kept, pairs, s) = stage_urldedup(std::mem::take(docs));
            self.report.stats.url_dedup.merge(&s);
            minhash::write_pairs(dedup_dir.join(format!("{lang}.url.tsv")), &pairs)?;
            *docs = kept;
        }
        self.record(Stage::UrlDedup, &by_lang)?;
        for lang in gated {
            self.report
                .gated
                .insert(lang, vec![Stage::MinhashDedup, Stage::UrlDedup]);
        }

        let clean = out.join("clean");
        for (lang, docs) in &by_lang {
            corpus::write_documents(clean.join(format!("{lang}.jsonl")), docs, true)?;
        }
        Ok(())
    }
}

/// Full pipeline. The report is written to `<output_dir>/report.json` even
/// when a stage fails, marked incomplete.
pub fn run(cfg: &PipelineConfig) -> Result<RunReport> {
    par::init_pool(cfg.workers);
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let mut report = RunReport::new(cfg.seed);
    let result = Resources::load(cfg).and_then(|res| {
        Run {
            cfg,
            res: &res,
            report: &mut report,
        }
        .execute()
    });
    match &result {
        Ok(()) => report.complete = true,
        Err(e) => report.error = Some(e.to_string()),
    }
    report.save(cfg.output_dir.join("report.json"))?;
    result.map(|()| report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub q_low: f64,
    pub q_high: f64,
    pub documents: u64,
    pub dropped: u64,
    pub drop_fraction: f64,
    /// Share of documents violating each metric.
    pub per_metric: BTreeMap<Metric, f64>,
    pub per_language: BTreeMap<String, f64>,
}

/// Build-and-apply dry runs over `grid`, on the documents that reach the
/// metric stage. Nothing is written.
pub fn sweep(cfg: &PipelineConfig, grid: &[(f64, f64)]) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty percentile grid".into()));
    }
    par::init_pool(cfg.workers);
    let res = Resources::load(cfg)?;
    let (docs, _, _) = ingest_all(cfg)?;
    let mut metrics_by_lang = BTreeMap::new();
    for (lang, docs) in group_by_language(docs) {
        let (docs, _) = stage_langid(docs, &res, cfg);
        let (docs, _) = stage_urlfilter(docs, &res);
        if !docs.is_empty() {
            metrics_by_lang.insert(lang, stage_metrics(&docs, &res));
        }
    }
    sweep_metrics(&metrics_by_lang, grid, cfg)
}

pub fn sweep_metrics(
    metrics_by_lang: &BTreeMap<String, Vec<MetricVector>>,
    grid: &[(f64, f64)],
    cfg: &PipelineConfig,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &(q_low, q_high) in grid {
        let mut opts = cfg.policy_options();
        opts.q_low = q_low;
        opts.q_high = q_high;
        let mut total = ApplyStats::default();
        let mut per_language = BTreeMap::new();
        for (lang, metrics) in metrics_by_lang {
            let policy = build_policy(lang, metrics, &opts)?;
            let mut s = ApplyStats::default();
            for mv in metrics {
                s.record(&apply_policy(mv, &policy));
            }
            per_language.insert(lang.clone(), s.drop_fraction());
            total.merge(&s);
        }
        let documents = total.kept + total.dropped;
        let per_metric = Metric::ALL
            .into_iter()
            .map(|m| {
                let n = total.violations.get(&m).copied().unwrap_or(0);
                (m, if documents == 0 { 0.0 } else { n as f64 / documents as f64 })
            })
            .collect();
        rows.push(SweepRow {
            q_low,
            q_high,
            documents,
            dropped: total.dropped,
            drop_fraction: total.drop_fraction(),
            per_metric,
            per_language,
        });
    }
    Ok(rows)
}

/// Band tables for one language's signatures, for callers that want the
/// index itself.
pub fn build_index(
    docs: &[Document],
    res: &Resources,
    cfg: &PipelineConfig,
) -> Result<(Vec<minhash::MinHashSignature>, LshIndex)> {
    let m = cfg.minhash_config();
    let family = HashFamily::new(m.num_perm, m.seed);
    let sigs: Vec<_> = minhash::signatures(docs, res.tokenizer.as_ref(), &family, m.ngram)
        .into_iter()
        .flatten()
        .collect();
    let index = LshIndex::build(&sigs, minhash::lsh_params(m.num_perm, m.threshold)?)?;
    Ok((sigs, index))
}
