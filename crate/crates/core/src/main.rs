use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use corpusclean::config::PipelineConfig;
use corpusclean::corpus::Document;
use corpusclean::lm::{LanguageModel, TrainOptions};
use corpusclean::metrics::{normalized_tokens, MetricVector, Tokenizer, UnicodeWordTokenizer};
use corpusclean::pipeline::{self, Resources, RunReport};
use corpusclean::threshold::{self, apply_policy, build_policy, ApplyStats, SWEEP_GRID};
use corpusclean::{minhash, par, Error, Result};

#[derive(Parser)]
#[command(name = "corpusclean", version, about = "Web corpus cleaning and deduplication")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set thresholds.q_low=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[arg(long, env = "CORPUSCLEAN_SEED", global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read raw record files and write per-language stage files.
    Ingest(StageArgs),
    /// Drop documents whose predicted language disagrees with the label.
    Langid(StageArgs),
    /// Drop documents whose URL is on the blacklist.
    Urlfilter(StageArgs),
    /// Compute per-document quality metrics.
    Metrics(StageArgs),
    /// Build per-language threshold policies from metric files.
    Thresholds(StageArgs),
    /// Keep documents that pass their language's policy.
    Apply(ApplyArgs),
    /// Trim trailing short lines and strip JavaScript lines.
    Refine(StageArgs),
    /// Remove near-duplicates within each language.
    DedupMinhash(StageArgs),
    /// Remove documents with an already-seen URL within each language.
    DedupUrl(StageArgs),
    /// Run every stage.
    Run {
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Raw input shards; replaces `inputs` from the config.
        inputs: Vec<PathBuf>,
    },
    /// Report drop rates over a grid of percentile pairs.
    Sweep {
        /// Pairs as `low:high`, comma separated.
        #[arg(long, value_delimiter = ',', value_parser = parse_pair)]
        grid: Vec<(f64, f64)>,
        #[arg(long)]
        json: bool,
        inputs: Vec<PathBuf>,
    },
    /// Print the stage by language table of a run report.
    Report {
        /// Report file; defaults to `<output_dir>/report.json`.
        path: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Train a language model from text, one sentence per line.
    LmTrain {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 5)]
        order: usize,
        #[arg(long, default_value_t = 1)]
        min_count: u64,
        inputs: Vec<PathBuf>,
    },
    /// Export a language model in ARPA format.
    LmArpa {
        model: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct StageArgs {
    /// Output directory.
    #[arg(short, long)]
    output: PathBuf,
    inputs: Vec<PathBuf>,
}

#[derive(Args)]
struct ApplyArgs {
    #[command(flatten)]
    stage: StageArgs,
    /// Directory of `<lang>.json` policies.
    #[arg(long)]
    policies: PathBuf,
    /// Directory of `<lang>.jsonl` metric files; recomputed when absent.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected low:high")?;
    let a = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let b = b.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((a, b))
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut overrides = cli.overrides.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(w) = cli.workers {
        overrides.push(format!("workers={w}"));
    }
    let cfg = PipelineConfig::load(cli.config.as_deref(), &overrides)?;
    par::init_pool(cfg.workers);
    Ok(cfg)
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn require_inputs(inputs: &[PathBuf]) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::Config("no input files given".into()));
    }
    Ok(())
}

fn read_grouped(inputs: &[PathBuf]) -> Result<BTreeMap<String, Vec<Document>>> {
    require_inputs(inputs)?;
    Ok(pipeline::group_by_language(pipeline::read_stage_files(inputs)?))
}

/// Runs `f` per language over stage files and writes the survivors.
fn per_language<S: Serialize + Default>(
    args: &StageArgs,
    mut f: impl FnMut(&str, Vec<Document>, &mut S) -> Result<Vec<Document>>,
) -> Result<()> {
    fs::create_dir_all(&args.output).map_err(|e| Error::Io {
        path: args.output.clone(),
        source: e,
    })?;
    let mut stats = S::default();
    let mut out = BTreeMap::new();
    for (lang, docs) in read_grouped(&args.inputs)? {
        let kept = f(&lang, docs, &mut stats)?;
        out.insert(lang, kept);
    }
    pipeline::write_by_language(&args.output, &out)?;
    print_json(&stats)
}

#[derive(Serialize, Default)]
struct DedupSummary<S> {
    stats: S,
    gated: Vec<String>,
}

fn metric_vectors(path: &Path) -> Result<BTreeMap<String, Vec<(u64, MetricVector)>>> {
    let mut by: BTreeMap<String, Vec<(u64, MetricVector)>> = BTreeMap::new();
    for r in pipeline::read_metrics(path)? {
        by.entry(r.language).or_default().push((r.doc_id, r.metrics));
    }
    Ok(by)
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Ingest(args) => {
            if !args.inputs.is_empty() {
                cfg.inputs = args.inputs.clone();
            }
            require_inputs(&cfg.inputs)?;
            let (docs, stats, excluded) = pipeline::ingest_all(&cfg)?;
            pipeline::write_by_language(&args.output, &pipeline::group_by_language(docs))?;
            print_json(&serde_json::json!({ "ingest": stats, "excluded_language": excluded }))
        }
        Command::Langid(args) => {
            let res = Resources::load(&cfg)?;
            per_language(&args, |_, docs, stats: &mut corpusclean::langid::LangIdStats| {
                let (kept, s) = pipeline::stage_langid(docs, &res, &cfg);
                stats.merge(&s);
                Ok(kept)
            })
        }
        Command::Urlfilter(args) => {
            let res = Resources::load(&cfg)?;
            if res.blacklist.is_none() {
                return Err(Error::Config("urlfilter.blacklist_root is not set".into()));
            }
            per_language(&args, |_, docs, stats: &mut corpusclean::urlfilter::UrlFilterStats| {
                let (kept, s) = pipeline::stage_urlfilter(docs, &res);
                stats.merge(&s);
                Ok(kept)
            })
        }
        Command::Metrics(args) => {
            let res = Resources::load(&cfg)?;
            let mut counts = BTreeMap::new();
            for (lang, docs) in read_grouped(&args.inputs)? {
                let m = pipeline::stage_metrics(&docs, &res);
                pipeline::write_metrics(&args.output.join(format!("{lang}.jsonl")), &docs, &m)?;
                counts.insert(lang, docs.len());
            }
            print_json(&counts)
        }
        Command::Thresholds(args) => {
            require_inputs(&args.inputs)?;
            let mut by: BTreeMap<String, Vec<MetricVector>> = BTreeMap::new();
            for p in &args.inputs {
                for (lang, v) in metric_vectors(p)? {
                    by.entry(lang).or_default().extend(v.into_iter().map(|(_, m)| m));
                }
            }
            let opts = cfg.policy_options();
            let policies = by
                .iter()
                .map(|(lang, v)| build_policy(lang, v, &opts))
                .collect::<Result<Vec<_>>>()?;
            threshold::save_policies(&args.output, &policies)?;
            print_json(&policies.iter().map(|p| &p.language).collect::<Vec<_>>())
        }
        Command::Apply(args) => {
            let policies = threshold::load_policies(&args.policies)?;
            let res = Resources::load(&cfg)?;
            per_language(&args.stage, |lang, docs, stats: &mut ApplyStats| {
                let Some(policy) = policies.get(lang) else {
                    return Err(Error::Config(format!("no policy for language {lang:?}")));
                };
                let metrics = match &args.metrics {
                    None => pipeline::stage_metrics(&docs, &res),
                    Some(dir) => {
                        let stored: BTreeMap<u64, MetricVector> = metric_vectors(
                            &dir.join(format!("{lang}.jsonl")),
                        )?
                        .into_values()
                        .flatten()
                        .collect();
                        docs.iter()
                            .map(|d| {
                                stored.get(&d.id.0).cloned().ok_or_else(|| {
                                    Error::InvalidArgument(format!("no metrics for document {}", d.id))
                                })
                            })
                            .collect::<Result<Vec<_>>>()?
                    }
                };
                let mut kept = Vec::new();
                for (d, mv) in docs.into_iter().zip(&metrics) {
                    let v = apply_policy(mv, policy);
                    stats.record(&v);
                    if v.keep() {
                        kept.push(d);
                    }
                }
                Ok(kept)
            })
        }
        Command::Refine(args) => {
            per_language(&args, |_, docs, stats: &mut corpusclean::refine::RefineStats| {
                let (out, s) = pipeline::stage_refine(docs, &cfg);
                stats.merge(&s);
                Ok(out)
            })
        }
        Command::DedupMinhash(args) => {
            let res = Resources::load(&cfg)?;
            let out = args.output.clone();
            per_language(&args, |lang, docs, sum: &mut DedupSummary<pipeline::MinHashStats>| {
                if !pipeline::passes_dedup_gate(docs.len() as u64, &cfg) {
                    sum.gated.push(lang.to_owned());
                    return Ok(docs);
                }
                let (kept, pairs, s) = pipeline::stage_minhash(docs, &res, &cfg)?;
                sum.stats.kept += s.kept;
                sum.stats.removed += s.removed;
                sum.stats.unsigned += s.unsigned;
                minhash::write_pairs(out.join(format!("{lang}.minhash.tsv")), &pairs)?;
                Ok(kept)
            })
        }
        Command::DedupUrl(args) => {
            let out = args.output.clone();
            per_language(&args, |lang, docs, sum: &mut DedupSummary<corpusclean::urldedup::UrlDedupStats>| {
                if !pipeline::passes_dedup_gate(docs.len() as u64, &cfg) {
                    sum.gated.push(lang.to_owned());
                    return Ok(docs);
                }
                let (kept, pairs, s) = pipeline::stage_urldedup(docs);
                sum.stats.merge(&s);
                minhash::write_pairs(out.join(format!("{lang}.url.tsv")), &pairs)?;
                Ok(kept)
            })
        }
        Command::Run { output, inputs } => {
            if let Some(o) = output {
                cfg.output_dir = o;
            }
            if !inputs.is_empty() {
                cfg.inputs = inputs;
            }
            require_inputs(&cfg.inputs)?;
            let report = pipeline::run(&cfg)?;
            print!("{}", report.render_table());
            Ok(())
        }
        Command::Sweep { grid, json, inputs } => {
            if !inputs.is_empty() {
                cfg.inputs = inputs;
            }
            require_inputs(&cfg.inputs)?;
            let grid = if grid.is_empty() { SWEEP_GRID.to_vec() } else { grid };
            let rows = pipeline::sweep(&cfg, &grid)?;
            if json {
                return print_json(&rows);
            }
            println!("{:>6} {:>6} {:>10} {:>10} {:>8}", "q_low", "q_high", "documents", "dropped", "drop%");
            for r in rows {
                println!(
                    "{:>6} {:>6} {:>10} {:>10} {:>8.2}",
                    r.q_low,
                    r.q_high,
                    r.documents,
                    r.dropped,
                    100.0 * r.drop_fraction
                );
            }
            Ok(())
        }
        Command::Report { path, json } => {
            let path = path.unwrap_or_else(|| cfg.output_dir.join("report.json"));
            let report = RunReport::load(&path)?;
            if json {
                print_json(&report)
            } else {
                print!("{}", report.render_table());
                Ok(())
            }
        }
        Command::LmTrain {
            output,
            order,
            min_count,
            inputs,
        } => {
            require_inputs(&inputs)?;
            let tok = UnicodeWordTokenizer;
            let mut sentences = Vec::new();
            for p in &inputs {
                let f = fs::File::open(p).map_err(|e| Error::Io {
                    path: p.clone(),
                    source: e,
                })?;
                for line in BufReader::new(f).lines() {
                    let line = line.map_err(|e| Error::Io {
                        path: p.clone(),
                        source: e,
                    })?;
                    let toks = normalized_tokens(&line, &tok as &dyn Tokenizer);
                    if !toks.is_empty() {
                        sentences.push(toks);
                    }
                }
            }
            let lm = LanguageModel::train(sentences, TrainOptions { order, min_count })?;
            lm.save(&output)
        }
        Command::LmArpa { model, output } => {
            let lm = LanguageModel::load(&model)?;
            let io_err = |p: &Path, e| Error::Io {
                path: p.to_owned(),
                source: e,
            };
            match output {
                Some(p) => {
                    let mut f = std::io::BufWriter::new(fs::File::create(&p).map_err(|e| io_err(&p, e))?);
                    lm.write_arpa(&mut f).map_err(|e| io_err(&p, e))?;
                    f.flush().map_err(|e| io_err(&p, e))
                }
                None => {
                    let mut out = std::io::stdout().lock();
                    lm.write_arpa(&mut out).map_err(|e| io_err(Path::new("-"), e))
                }
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
