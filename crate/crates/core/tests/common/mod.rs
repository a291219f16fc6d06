//! Synthetic corpora with labelled noise, shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use corpusclean::config::PipelineConfig;
use corpusclean::corpus::DocId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Class {
    Clean,
    WrongLanguage,
    Blacklisted,
    JsDump,
    RepeatedLines,
    ExactDup,
    NearDup,
}

impl Class {
    pub const NOISE: [Class; 4] = [
        Class::WrongLanguage,
        Class::Blacklisted,
        Class::JsDump,
        Class::RepeatedLines,
    ];
}

pub struct Lang {
    pub code: &'static str,
    pub stopwords: &'static [&'static str],
    alphabet: &'static [char],
}

pub const EN: Lang = Lang {
    code: "en",
    stopwords: &[
        "the", "of", "and", "to", "in", "a", "is", "that", "for", "it", "as", "was", "with", "on",
        "by", "at", "from", "this", "be", "are",
    ],
    alphabet: &[
        'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'k', 'l', 'm', 'n', 'o', 'p', 'r', 's', 't',
        'u', 'v', 'w', 'y',
    ],
};

pub const RU: Lang = Lang {
    code: "ru",
    stopwords: &[
        "и", "в", "не", "на", "что", "с", "по", "как", "а", "это", "из", "у", "к", "для", "о", "от",
        "же", "до", "за", "так",
    ],
    alphabet: &[
        'а', 'б', 'в', 'г', 'д', 'е', 'ж', 'з', 'и', 'к', 'л', 'м', 'н', 'о', 'п', 'р', 'с', 'т',
        'у', 'ф', 'х', 'ш', 'ы', 'я',
    ],
};

/// Zipf-weighted content vocabulary plus stopwords for one language.
pub struct TextGen {
    pub lang: &'static Lang,
    words: Vec<String>,
    zipf: WeightedIndex<f64>,
}

impl TextGen {
    pub fn new(lang: &'static Lang, vocab: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = BTreeSet::new();
        let mut words = Vec::with_capacity(vocab);
        while words.len() < vocab {
            let len = rng.gen_range(3..10);
            let w: String = (0..len)
                .map(|_| *lang.alphabet.choose(&mut rng).unwrap())
                .collect();
            if seen.insert(w.clone()) && !lang.stopwords.contains(&w.as_str()) {
                words.push(w);
            }
        }
        let zipf = WeightedIndex::new((1..=vocab).map(|r| 1.0 / r as f64)).unwrap();
        TextGen { lang, words, zipf }
    }

    pub fn word(&self, rng: &mut impl Rng) -> &str {
        if rng.gen_bool(0.4) {
            self.lang.stopwords.choose(rng).unwrap()
        } else {
            &self.words[self.zipf.sample(rng)]
        }
    }

    pub fn sentence(&self, rng: &mut impl Rng) -> String {
        let n = rng.gen_range(6..22);
        let mut s = String::new();
        for i in 0..n {
            let w = self.word(rng);
            if i == 0 {
                let mut cs = w.chars();
                let first = cs.next().unwrap();
                s.extend(first.to_uppercase());
                s.push_str(cs.as_str());
            } else {
                s.push(' ');
                s.push_str(w);
            }
            if i + 1 < n && i > 2 && rng.gen_bool(0.06) {
                s.push(',');
            }
        }
        s.push('.');
        s
    }

    pub fn paragraph(&self, rng: &mut impl Rng) -> String {
        let n = rng.gen_range(2..7);
        (0..n).map(|_| self.sentence(rng)).collect::<Vec<_>>().join(" ")
    }

    /// A few paragraphs, sometimes with a heading line.
    pub fn document(&self, rng: &mut impl Rng) -> String {
        let mut lines = Vec::new();
        if rng.gen_bool(0.3) {
            let n = rng.gen_range(2..6);
            lines.push((0..n).map(|_| self.word(rng)).collect::<Vec<_>>().join(" "));
        }
        for _ in 0..rng.gen_range(2..8) {
            lines.push(self.paragraph(rng));
        }
        lines.join("\n")
    }
}

pub fn js_dump(rng: &mut impl Rng) -> String {
    let idents = ["a", "b", "el", "cb", "x", "opts", "node", "res", "i", "n"];
    let mut lines = Vec::new();
    for _ in 0..rng.gen_range(6..20) {
        let a = idents.choose(rng).unwrap();
        let b = idents.choose(rng).unwrap();
        let line = match rng.gen_range(0..5) {
            0 => format!("var {a}=document.getElementById(\"{b}{}\");", rng.gen_range(0..99)),
            1 => format!("function {a}{}({b}){{return {b}&&{b}.length>0?{b}[0]:null;}}", rng.gen_range(0..99)),
            2 => format!("const {a}=({b})=>{{{b}.push({});return {b};}};", rng.gen_range(0..999)),
            3 => format!("<script type=\"text/javascript\">window.{a}={{\"{b}\":[{},{}]}};</script>", rng.gen_range(0..9), rng.gen_range(0..9)),
            _ => format!("if({a}!=={b}){{{a}.addEventListener(\"click\",function(){{init();}});}}"),
        };
        lines.push(line);
    }
    lines.join("\n")
}

pub fn repeated_lines(gen: &TextGen, rng: &mut impl Rng) -> String {
    let line = gen.sentence(rng);
    let n = rng.gen_range(15..60);
    vec![line; n].join("\n")
}

/// Replaces words at spread-out positions until the shingle Jaccard with
/// the original falls to about 0.85.
pub fn near_duplicate(text: &str, gen: &TextGen, rng: &mut impl Rng) -> (String, f64) {
    let mut lines: Vec<Vec<String>> = text
        .lines()
        .map(|l| l.split(' ').map(str::to_owned).collect())
        .collect();
    let orig = shingle_set(text);
    let mut current = text.to_owned();
    let mut j = 1.0;
    for _ in 0..1000 {
        if j <= 0.87 {
            break;
        }
        let li = rng.gen_range(0..lines.len());
        let wi = rng.gen_range(0..lines[li].len());
        let w = gen.word(rng).to_owned();
        let old = &lines[li][wi];
        let punct: String = old.chars().filter(|c| !c.is_alphanumeric()).collect();
        lines[li][wi] = w + &punct;
        let cand = lines.iter().map(|l| l.join(" ")).collect::<Vec<_>>().join("\n");
        let cj = oracle_jaccard(&orig, &shingle_set(&cand));
        if cj < 0.83 {
            break;
        }
        current = cand;
        j = cj;
    }
    (current, j)
}

/// Word 5-gram set over lowercase alphanumeric runs. Independent of the
/// library's tokenizer, so it is only an approximate oracle.
pub fn shingle_set(text: &str) -> BTreeSet<Vec<String>> {
    let words: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect();
    if words.len() < 5 {
        return [words].into_iter().collect();
    }
    words.windows(5).map(<[String]>::to_vec).collect()
}

pub fn oracle_jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

pub struct Planted {
    pub class: Class,
    pub id: DocId,
    /// For duplicates, the original document.
    pub of: Option<DocId>,
}

pub struct SynthCorpus {
    pub dir: PathBuf,
    pub input: PathBuf,
    pub blacklist: PathBuf,
    pub wordlists: PathBuf,
    pub planted: Vec<Planted>,
}

impl SynthCorpus {
    pub fn ids(&self, class: Class) -> BTreeSet<DocId> {
        self.planted
            .iter()
            .filter(|p| p.class == class)
            .map(|p| p.id)
            .collect()
    }

    /// Config for this corpus, with the dedup gate lowered to fit it.
    pub fn config(&self, out: &Path, seed: u64) -> PipelineConfig {
        let mut cfg = PipelineConfig::default();
        cfg.seed = seed;
        cfg.inputs = vec![self.input.clone()];
        cfg.output_dir = out.to_owned();
        cfg.urlfilter.blacklist_root = Some(self.blacklist.clone());
        cfg.metrics.wordlists_dir = Some(self.wordlists.clone());
        cfg.dedup.min_docs = 100;
        cfg
    }
}

/// Writes a single-shard corpus of `n` documents, half English and half
/// Russian. Each noise class and each duplicate class takes `rate` of the
/// documents; the rest are clean.
pub fn synth_corpus(dir: &Path, n: usize, rate: f64, seed: u64) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gens = [TextGen::new(&EN, 3000, seed ^ 1), TextGen::new(&RU, 3000, seed ^ 2)];
    let per_class = (n as f64 * rate).round() as usize;
    let mut classes = Vec::with_capacity(n);
    for c in [
        Class::WrongLanguage,
        Class::Blacklisted,
        Class::JsDump,
        Class::RepeatedLines,
        Class::ExactDup,
        Class::NearDup,
    ] {
        classes.extend(std::iter::repeat_n(c, per_class));
    }
    classes.resize(n, Class::Clean);
    // Duplicates must come after a clean original; place them after shuffling.
    classes.shuffle(&mut rng);
    let first_clean = classes.iter().position(|c| *c == Class::Clean).unwrap();
    for i in 0..first_clean {
        if matches!(classes[i], Class::ExactDup | Class::NearDup) {
            classes.swap(i, first_clean);
            break;
        }
    }
    let first_clean = classes.iter().position(|c| *c == Class::Clean).unwrap();
    for c in &classes[..first_clean] {
        assert!(!matches!(c, Class::ExactDup | Class::NearDup));
    }

    let mut records = Vec::with_capacity(n);
    let mut planted = Vec::with_capacity(n);
    let mut clean_by_lang: [Vec<(usize, String)>; 2] = [Vec::new(), Vec::new()];
    for (i, class) in classes.iter().copied().enumerate() {
        let li = rng.gen_range(0..2);
        let gen = &gens[li];
        let lang = gen.lang.code;
        let site = rng.gen_range(0..200);
        let mut url = format!("https://www.site{site}.example.org/{lang}/article/{i}");
        let mut of = None;
        let text = match class {
            Class::Clean => {
                let t = gen.document(&mut rng);
                clean_by_lang[li].push((i, t.clone()));
                t
            }
            Class::WrongLanguage => gens[1 - li].document(&mut rng),
            Class::Blacklisted => {
                url = format!("https://m.bad{}.example.net/page/{i}", rng.gen_range(0..20));
                gen.document(&mut rng)
            }
            Class::JsDump => js_dump(&mut rng),
            Class::RepeatedLines => repeated_lines(gen, &mut rng),
            Class::ExactDup | Class::NearDup => {
                let pool = if clean_by_lang[li].is_empty() { 1 - li } else { li };
                let (orig, t) = clean_by_lang[pool].choose(&mut rng).unwrap().clone();
                of = Some(DocId::new(0, orig as u64));
                let lang = gens[pool].lang.code;
                let text = if class == Class::ExactDup {
                    t
                } else {
                    near_duplicate(&t, &gens[pool], &mut rng).0
                };
                records.push(json!({"text": text, "url": url, "language": lang}));
                planted.push(Planted { class, id: DocId::new(0, i as u64), of });
                continue;
            }
        };
        records.push(json!({"text": text, "url": url, "language": lang, "source": "synthetic"}));
        planted.push(Planted {
            class,
            id: DocId::new(0, i as u64),
            of,
        });
    }

    let input = dir.join("input.jsonl");
    let body: String = records.iter().map(|r| r.to_string() + "\n").collect();
    fs::write(&input, body).unwrap();

    let blacklist = dir.join("blacklist");
    fs::create_dir_all(blacklist.join("adult")).unwrap();
    let domains: String = (0..20).map(|k| format!("bad{k}.example.net\n")).collect();
    fs::write(blacklist.join("adult/domains"), domains).unwrap();

    let wordlists = dir.join("wordlists");
    fs::create_dir_all(wordlists.join("stopwords")).unwrap();
    for l in [&EN, &RU] {
        fs::write(
            wordlists.join("stopwords").join(format!("{}.txt", l.code)),
            l.stopwords.join("\n"),
        )
        .unwrap();
    }

    SynthCorpus {
        dir: dir.to_owned(),
        input,
        blacklist,
        wordlists,
        planted,
    }
}

/// Ids of every document in `<out>/clean/*.jsonl`.
pub fn surviving_ids(out: &Path) -> BTreeSet<DocId> {
    let mut ids = BTreeSet::new();
    let dir = out.join("clean");
    let Ok(entries) = fs::read_dir(&dir) else {
        return ids;
    };
    for e in entries {
        let p = e.unwrap().path();
        for d in corpusclean::corpus::read_stage(&p).unwrap() {
            ids.insert(d.unwrap().id);
        }
    }
    ids
}

/// Every file under `dir`, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_owned(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}
