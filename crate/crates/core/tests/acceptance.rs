//! Acceptance criteria. Each check prints one PASS/FAIL line; the process
//! fails if any check fails.

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use corpusclean::corpus::{filtering_rate, DocId, Stage};
use corpusclean::lm::{LanguageModel, TrainOptions};
use corpusclean::metrics::{split_lines, MetricVector, UnicodeWordTokenizer};
use corpusclean::minhash::{self, HashFamily, LshIndex, DEFAULT_NUM_PERM, DEFAULT_THRESHOLD};
use corpusclean::pipeline::{self, RunReport};
use corpusclean::refine::{refine, strip_js_line, trim_trailing_short_lines, JsKeywordSet};
use corpusclean::threshold::{self, build_policy, percentile, PolicyOptions};

use common::{oracle_jaccard, Class};

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    Check { name, pass, detail }
}

// --- filtering rate -------------------------------------------------------

fn table_arithmetic() -> Check {
    let total = filtering_rate(13506.76, 7228.91).unwrap();
    let en = filtering_rate(5783.24, 3241.07).unwrap();
    let r2 = |x: f64| (x * 100.0).round() / 100.0;
    check(
        "filtering rate reproduces 46.48% overall and 43.96% English",
        r2(total) == 46.48 && r2(en) == 43.96,
        format!("overall {total:.4}%, en {en:.4}%"),
    )
}

// --- MinHash ---------------------------------------------------------------

fn vocab(n: usize, rng: &mut impl Rng) -> Vec<String> {
    let mut seen = BTreeSet::new();
    while seen.len() < n {
        let len = rng.gen_range(4..9);
        seen.insert((0..len).map(|_| rng.gen_range(b'a'..=b'z') as char).collect::<String>());
    }
    seen.into_iter().collect()
}

fn random_words(vocab: &[String], n: usize, rng: &mut impl Rng) -> Vec<String> {
    (0..n).map(|_| vocab.choose(rng).unwrap().clone()).collect()
}

/// Word 5-gram set by brute force over space-separated words.
fn gram_set(words: &[String]) -> BTreeSet<Vec<String>> {
    words.windows(5).map(<[String]>::to_vec).collect()
}

/// Replaces random positions until the exact Jaccard drops to `target` or below.
fn mutate_to(base: &[String], target: f64, vocab: &[String], rng: &mut impl Rng) -> (Vec<String>, f64) {
    let orig = gram_set(base);
    let mut w = base.to_vec();
    let mut j = 1.0;
    while j > target {
        let i = rng.gen_range(0..w.len());
        w[i] = vocab.choose(rng).unwrap().clone();
        j = oracle_jaccard(&orig, &gram_set(&w));
    }
    (w, j)
}

fn minhash_unbiased() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let vocab = vocab(20_000, &mut rng);
    let tok = UnicodeWordTokenizer;
    let family = HashFamily::new(DEFAULT_NUM_PERM, 7);
    let mut abs_err = 0.0;
    let mut within = 0usize;
    let pairs = 1000;
    for i in 0..pairs {
        let base = random_words(&vocab, rng.gen_range(40..200), &mut rng);
        let target: f64 = rng.gen_range(0.0..1.0);
        let (other, _) = mutate_to(&base, target, &vocab, &mut rng);
        let exact = oracle_jaccard(&gram_set(&base), &gram_set(&other));
        let sig = |w: &[String], id: u64| {
            let sh = minhash::shingle(&w.join(" "), &tok, 5);
            family.signature(&sh, DocId(id)).unwrap()
        };
        let est = sig(&base, 2 * i).jaccard_estimate(&sig(&other, 2 * i + 1));
        let err = (est - exact).abs();
        abs_err += err;
        let bound = 3.0 * (exact * (1.0 - exact) / DEFAULT_NUM_PERM as f64).sqrt();
        if err <= bound + 1e-12 {
            within += 1;
        }
    }
    let mean = abs_err / pairs as f64;
    let share = within as f64 / pairs as f64;
    check(
        "MinHash estimate is unbiased at P=128",
        mean <= 0.05 && share >= 0.99,
        format!("mean |err| {mean:.4} (<= 0.05), within 3 sigma {:.1}% (>= 99%)", 100.0 * share),
    )
}

fn lsh_recall_precision() -> Check {
    let seeds = 10;
    let tok = UnicodeWordTokenizer;
    let params = minhash::lsh_params(DEFAULT_NUM_PERM, DEFAULT_THRESHOLD).unwrap();
    let (mut high_hit, mut low_hit, mut high_n, mut low_n) = (0usize, 0usize, 0usize, 0usize);
    let (mut high_j, mut low_j) = (f64::MAX, f64::MIN);
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let vocab = vocab(20_000, &mut rng);
        let mut docs: Vec<Vec<String>> = Vec::with_capacity(5000);
        let mut high = Vec::new();
        let mut low = Vec::new();
        for k in 0..400 {
            let pair = (docs.len(), docs.len() + 1);
            let (base, other, j) = loop {
                let base = random_words(&vocab, rng.gen_range(60..160), &mut rng);
                let target = if k < 200 { rng.gen_range(0.9..0.98) } else { rng.gen_range(0.2..0.5) };
                let (other, j) = mutate_to(&base, target, &vocab, &mut rng);
                if k >= 200 || j >= 0.9 {
                    break (base, other, j);
                }
            };
            docs.push(base);
            docs.push(other);
            if k < 200 {
                high_j = high_j.min(j);
                high.push(pair);
            } else {
                low_j = low_j.max(j);
                low.push(pair);
            }
        }
        while docs.len() < 5000 {
            docs.push(random_words(&vocab, rng.gen_range(60..160), &mut rng));
        }
        let family = HashFamily::new(DEFAULT_NUM_PERM, seed);
        let sigs: Vec<_> = docs
            .iter()
            .enumerate()
            .map(|(i, w)| {
                family
                    .signature(&minhash::shingle(&w.join(" "), &tok, 5), DocId(i as u64))
                    .unwrap()
            })
            .collect();
        let index = LshIndex::build(&sigs, params).unwrap();
        let mut uf = minhash::dedup(&sigs, &index, None);
        for &(a, b) in &high {
            high_hit += (uf.find(a) == uf.find(b)) as usize;
        }
        for &(a, b) in &low {
            low_hit += (uf.find(a) == uf.find(b)) as usize;
        }
        high_n += high.len();
        low_n += low.len();
    }
    let recall = high_hit as f64 / high_n as f64;
    let fp = low_hit as f64 / low_n as f64;
    check(
        "LSH clusters near-duplicates and separates dissimilar pairs",
        recall >= 0.95 && fp <= 0.05,
        format!(
            "bands {}x{}, high pairs clustered {:.2}% (>= 95%, min J {high_j:.3}), low pairs clustered {:.2}% (<= 5%, max J {low_j:.3})",
            params.bands,
            params.rows,
            100.0 * recall,
            100.0 * fp
        ),
    )
}

// --- thresholds --------------------------------------------------------------

fn percentile_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let qs = [5u32, 10, 15, 20, 25, 75, 80, 85, 90, 95];
    let mut mismatches = 0;
    for i in 0..10_000 {
        let n = rng.gen_range(1..=1000);
        let values: Vec<f64> = if i % 2 == 0 {
            (0..n).map(|_| rng.gen_range(0..20) as f64).collect()
        } else {
            (0..n).map(|_| rng.gen_range(-1e3..1e3)).collect()
        };
        let q = *qs.choose(&mut rng).unwrap();
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let rank = (q as usize * n).div_ceil(100);
        let expected = sorted[rank - 1];
        if percentile(&values, q as f64).unwrap().to_bits() != expected.to_bits() {
            mismatches += 1;
        }
    }
    check(
        "nearest-rank percentile matches a full-sort oracle",
        mismatches == 0,
        format!("{mismatches} mismatches over 10000 multisets"),
    )
}

fn continuous_vector(rng: &mut impl Rng) -> MetricVector {
    let u = |rng: &mut dyn rand::RngCore| rand::Rng::gen_range(rng, 0.0..1.0);
    MetricVector {
        number_words: rng.gen_range(10..5000),
        char_rep_ratio: u(rng),
        word_rep_ratio: u(rng),
        special_char_ratio: u(rng),
        stopword_ratio: Some(u(rng)),
        flagged_word_ratio: Some(u(rng)),
        lid_confidence: Some(u(rng)),
        perplexity: Some(10.0 + 1e4 * u(rng)),
        doc_length_chars: rng.gen_range(50..100_000),
        num_lines: rng.gen_range(1..1000),
        short_line_length_ratio: u(rng),
        short_line_ratio: u(rng),
    }
}

fn representativeness() -> Check {
    let mut worst: f64 = 0.0;
    let mut detail = String::new();
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vectors: Vec<MetricVector> = (0..100_000).map(|_| continuous_vector(&mut rng)).collect();
        let full = PolicyOptions {
            sample_fraction: Some(1.0),
            seed,
            ..Default::default()
        };
        let sampled = PolicyOptions {
            sample_fraction: Some(0.25),
            ..full
        };
        let pf = build_policy("xx", &vectors, &full).unwrap();
        let ps = build_policy("xx", &vectors, &sampled).unwrap();
        let df = threshold::drop_fraction(&vectors, &pf);
        let ds = threshold::drop_fraction(&vectors, &ps);
        if (df - ds).abs() >= worst {
            worst = (df - ds).abs();
            detail = format!("full {:.2}% vs sampled {:.2}%", 100.0 * df, 100.0 * ds);
        }
    }
    check(
        "25% sample policy drops within 2 points of the full-sample policy",
        worst <= 0.02,
        format!("worst gap over 10 seeds {:.3} points ({detail})", 100.0 * worst),
    )
}

// --- language model ------------------------------------------------------------

/// Sentences from a random sparse Markov chain over a small vocabulary.
fn markov_corpus(rng: &mut impl Rng, vocab: usize, sentences: usize) -> Vec<Vec<String>> {
    let words: Vec<String> = (0..vocab).map(|i| format!("w{i}")).collect();
    let next: Vec<Vec<usize>> = (0..vocab)
        .map(|_| (0..2).map(|_| rng.gen_range(0..vocab)).collect())
        .collect();
    (0..sentences)
        .map(|_| {
            let mut cur = rng.gen_range(0..vocab);
            (0..rng.gen_range(3..15))
                .map(|_| {
                    let w = words[cur].clone();
                    cur = *next[cur].choose(rng).unwrap();
                    w
                })
                .collect()
        })
        .collect()
}

fn corpus_perplexity(lm: &LanguageModel, corpus: &[Vec<String>]) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for s in corpus {
        let (l, k) = lm.log10_score(s);
        sum += l;
        n += k;
    }
    10f64.powf(-sum / n as f64)
}

fn kneser_ney() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst: f64 = 0.0;
    let mut contexts = 0usize;
    let mut order_wins = 0;
    let fixtures = 20;
    for f in 0..fixtures {
        let order = 1 + f % 5;
        let vocab = rng.gen_range(3..=10);
        let sentences = rng.gen_range(10..60);
        let corpus = markov_corpus(&mut rng, vocab, sentences);
        let lm = LanguageModel::train(&corpus, TrainOptions { order, min_count: 1 }).unwrap();
        for k in 1..=order {
            for ctx in lm.contexts(k) {
                let ids: Vec<u32> = ctx.iter().map(|t| lm.token_id(t)).collect();
                let s: f64 = lm.predictable().map(|w| lm.prob_ids(&ids, w)).sum();
                worst = worst.max((s - 1.0).abs());
                contexts += 1;
            }
        }
        // Shuffling tokens across the corpus keeps unigram counts and
        // destroys the order the model learned.
        let mut flat: Vec<String> = corpus.iter().flatten().cloned().collect();
        flat.shuffle(&mut rng);
        let mut it = flat.into_iter();
        let shuffled: Vec<Vec<String>> = corpus
            .iter()
            .map(|s| it.by_ref().take(s.len()).collect())
            .collect();
        let lm2 = if order == 1 {
            LanguageModel::train(&corpus, TrainOptions { order: 2, min_count: 1 }).unwrap()
        } else {
            lm
        };
        if corpus_perplexity(&lm2, &corpus) < corpus_perplexity(&lm2, &shuffled) {
            order_wins += 1;
        }
    }
    check(
        "Kneser-Ney distributions normalize and training text beats shuffled text",
        worst <= 1e-6 && order_wins == fixtures,
        format!(
            "max |sum - 1| {worst:.2e} over {contexts} contexts, training < shuffled on {order_wins}/{fixtures}"
        ),
    )
}

// --- refinement --------------------------------------------------------------------

fn line(n: usize) -> String {
    "x".repeat(n)
}

fn refinement() -> Check {
    let kws = JsKeywordSet::default();
    let prose = "The river runs along the old town and past the mill where we used to sit all summer long.".repeat(2);
    let mut failures = Vec::new();

    // Retained lines keep their terminators, so compare as line lists and
    // require the result to be a prefix of the input.
    let t = [line(150), line(120), line(20), line(30)].join("\n");
    let r = trim_trailing_short_lines(&t);
    if split_lines(&r.text) != [line(150), line(120)] || !t.starts_with(r.text.as_ref()) {
        failures.push("trailing short lines");
    }
    let t = [line(20), line(150)].join("\n");
    if trim_trailing_short_lines(&t).text != t {
        failures.push("leading short line");
    }
    let t = [line(10), line(10)].join("\n");
    let r = trim_trailing_short_lines(&t);
    if r.text != t || !r.all_short {
        failures.push("all-short guard");
    }
    let js = "<script>var x = 1;</script>";
    let t = [prose.as_str(), js, prose.as_str()].join("\n");
    if strip_js_line(&t, &kws).text != [prose.as_str(), prose.as_str()].join("\n") {
        failures.push("single two-type JS line");
    }
    let t = [
        "function a() {}",
        prose.as_str(),
        "function b() {}",
        prose.as_str(),
        "function c() {}",
    ]
    .join("\n");
    if strip_js_line(&t, &kws).text != t {
        failures.push("three JS lines");
    }
    let t = [prose.as_str(), "var people say this is fine", prose.as_str()].join("\n");
    let t2 = [prose.as_str(), "so var x is one type", prose.as_str()].join("\n");
    if strip_js_line(&t, &kws).text != t || strip_js_line(&t2, &kws).text != t2 {
        failures.push("single-type JS line");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pieces = [
        "<script>",
        "var ",
        "function",
        "=>",
        "();",
        "document.",
        "const ",
        "plain words",
    ];
    let mut not_idempotent = 0;
    for _ in 0..1000 {
        let lines: Vec<String> = (0..rng.gen_range(1..8))
            .map(|_| {
                let mut l = String::new();
                for _ in 0..rng.gen_range(0..6) {
                    l.push_str(pieces.choose(&mut rng).unwrap());
                    l.push(' ');
                }
                l.push_str(&"y".repeat(rng.gen_range(0..160)));
                l
            })
            .collect();
        let mut text = lines.join("\n");
        if rng.gen_bool(0.3) {
            text.push('\n');
        }
        let once = refine(&text, &kws).text;
        let twice = refine(&once, &kws).text;
        if once != twice || once.len() > text.len() {
            not_idempotent += 1;
        }
    }
    check(
        "refinement fixtures hold and refinement is idempotent",
        failures.is_empty() && not_idempotent == 0,
        format!("fixture failures {failures:?}, non-idempotent {not_idempotent}/1000"),
    )
}

// --- end to end ----------------------------------------------------------------------

fn monotone(report: &RunReport) -> bool {
    let langs: BTreeSet<&String> = report
        .stages
        .iter()
        .flat_map(|s| s.per_language.keys())
        .collect();
    langs.iter().all(|l| {
        let col: Vec<u64> = report
            .stages
            .iter()
            .map(|s| s.per_language.get(*l).map_or(0, |c| c.documents))
            .collect();
        col.windows(2).all(|w| w[1] <= w[0])
    })
}

fn end_to_end(dir: &std::path::Path) -> (Check, Check) {
    let corpus = common::synth_corpus(dir, 10_000, 0.05, 42);
    let out_a = dir.join("run_a");
    let out_b = dir.join("run_b");
    let report = pipeline::run(&corpus.config(&out_a, 7)).unwrap();
    let survivors = common::surviving_ids(&out_a);

    let mut parts = Vec::new();
    let mut pass = true;
    for class in Class::NOISE {
        let ids = corpus.ids(class);
        let removed = ids.iter().filter(|id| !survivors.contains(id)).count();
        let r = removed as f64 / ids.len() as f64;
        pass &= r >= 0.90;
        parts.push(format!("{class:?} removed {:.1}%", 100.0 * r));
    }
    let dups: BTreeSet<DocId> = corpus
        .ids(Class::ExactDup)
        .union(&corpus.ids(Class::NearDup))
        .copied()
        .collect();
    let removed = dups.iter().filter(|id| !survivors.contains(id)).count();
    let r = removed as f64 / dups.len() as f64;
    pass &= r >= 0.95;
    parts.push(format!("duplicates removed {:.1}%", 100.0 * r));
    let clean = corpus.ids(Class::Clean);
    let kept = clean.iter().filter(|id| survivors.contains(id)).count();
    let r = kept as f64 / clean.len() as f64;
    pass &= r >= 0.90;
    parts.push(format!("clean retained {:.1}%", 100.0 * r));
    let mono = monotone(&report);
    pass &= mono;
    parts.push(format!("monotone {mono}"));

    // Which metrics removed clean documents.
    let metric_stage = report.stage(Stage::MetricFilter).unwrap().total().documents;
    let url_stage = report.stage(Stage::UrlFilter).unwrap().total().documents;
    parts.push(format!(
        "metric stage {url_stage} -> {metric_stage}, violations {:?}",
        report.stats.metric_filter.violations
    ));

    let e2e = check(
        "end-to-end synthetic run removes planted noise and keeps clean text",
        pass,
        parts.join(", "),
    );

    pipeline::run(&corpus.config(&out_b, 7)).unwrap();
    let a = common::snapshot(&out_a);
    let b = common::snapshot(&out_b);
    let differing: Vec<_> = a
        .keys()
        .chain(b.keys())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|k| a.get(*k) != b.get(*k))
        .collect();
    let det = check(
        "identical config and seed give byte-identical outputs",
        differing.is_empty() && !a.is_empty(),
        format!("{} files compared, {} differ {:?}", a.len(), differing.len(), differing),
    );
    (e2e, det)
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().unwrap();
    let mut checks = Vec::new();
    let mut timed = |f: &mut dyn FnMut() -> Vec<Check>| {
        let t = Instant::now();
        for mut c in f() {
            c.detail = format!("{} [{:.1}s]", c.detail, t.elapsed().as_secs_f64());
            println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            checks.push(c.pass);
        }
    };
    timed(&mut || vec![table_arithmetic()]);
    timed(&mut || vec![minhash_unbiased()]);
    timed(&mut || vec![lsh_recall_precision()]);
    timed(&mut || vec![percentile_oracle()]);
    timed(&mut || vec![representativeness()]);
    timed(&mut || vec![kneser_ney()]);
    timed(&mut || vec![refinement()]);
    timed(&mut || {
        let (a, b) = end_to_end(dir.path());
        vec![a, b]
    });
    let failed = checks.iter().filter(|p| !**p).count();
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
