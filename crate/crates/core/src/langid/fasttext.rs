//! Reader and inference for supervised word-hash linear classifiers stored in
//! the widely distributed fastText binary layout (version 12, unquantized).
//!
//! Layout, all little-endian:
//!
//! ```text
//! i32 magic (793712314) | i32 version (12)
//! args: i32 dim, ws, epoch, min_count, neg, word_ngrams, loss, model,
//!       bucket, minn, maxn, lr_update_rate | f64 t
//! dict: i32 size, nwords, nlabels | i64 ntokens, prune_idx_size
//!       size × (NUL-terminated word, i64 count, i8 type)
//!       prune_idx_size × (i32, i32)
//! u8 quant_input | i64 rows, i64 cols, rows*cols f32   (input matrix)
//! u8 quant_output | i64 rows, i64 cols, rows*cols f32  (output matrix)
//! ```

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt};

use super::{LangClassifier, LangPrediction};
use crate::error::{Error, Result};

const MAGIC: i32 = 793712314;
const VERSION: i32 = 12;
const LABEL_PREFIX: &str = "__label__";
const EOS: &str = "</s>";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Loss {
    HierarchicalSoftmax,
    NegativeSampling,
    Softmax,
    OneVsAll,
}

#[derive(Debug, Clone, Copy)]
struct HuffNode {
    left: i32,
    right: i32,
}

#[derive(Debug, Clone)]
pub struct FastTextModel {
    dim: usize,
    word_ngrams: usize,
    bucket: u64,
    minn: usize,
    maxn: usize,
    loss: Loss,
    nwords: usize,
    words: HashMap<String, usize>,
    /// Input-row ids of each in-vocabulary word (itself plus its char n-grams).
    subwords: Vec<Vec<usize>>,
    labels: Vec<String>,
    supported: BTreeSet<String>,
    prune_idx: Option<HashMap<i32, i32>>,
    input: Vec<f32>,
    output: Vec<f32>,
    tree: Vec<HuffNode>,
}

/// 32-bit FNV-1a over bytes, each sign-extended before mixing.
fn fnv1a(s: &[u8]) -> u32 {
    let mut h: u32 = 2166136261;
    for &b in s {
        h ^= (b as i8) as i32 as u32;
        h = h.wrapping_mul(16777619);
    }
    h
}

fn malformed(path: &Path, what: &str) -> Error {
    Error::model(path, what)
}

fn read_cstring(r: &mut impl Read) -> std::io::Result<String> {
    let mut bytes = Vec::new();
    loop {
        let b = r.read_u8()?;
        if b == 0 {
            break;
        }
        bytes.push(b);
    }
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

fn read_matrix(r: &mut impl Read, path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let quant = r.read_u8().map_err(|e| Error::io(path, e))?;
    if quant != 0 {
        return Err(malformed(path, "quantized matrices are not supported"));
    }
    let rows = r.read_i64::<LittleEndian>().map_err(|e| Error::io(path, e))?;
    let cols = r.read_i64::<LittleEndian>().map_err(|e| Error::io(path, e))?;
    if rows < 0 || cols < 0 {
        return Err(malformed(path, "negative matrix shape"));
    }
    let (rows, cols) = (rows as usize, cols as usize);
    let mut data = vec![0f32; rows * cols];
    r.read_f32_into::<LittleEndian>(&mut data)
        .map_err(|e| Error::io(path, e))?;
    Ok((rows, cols, data))
}

impl FastTextModel {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(&mut BufReader::new(f), path)
    }

    pub fn read(r: &mut impl Read, path: &Path) -> Result<Self> {
        let io = |e| Error::io(path, e);
        let i32_ = |r: &mut dyn Read| r.read_i32::<LittleEndian>();
        if i32_(r).map_err(io)? != MAGIC {
            return Err(malformed(path, "bad magic number"));
        }
        let version = i32_(r).map_err(io)?;
        if version != VERSION {
            return Err(malformed(path, &format!("unsupported version {version}")));
        }
        let mut args = [0i32; 12];
        for a in args.iter_mut() {
            *a = i32_(r).map_err(io)?;
        }
        let _t = r.read_f64::<LittleEndian>().map_err(io)?;
        let [dim, _ws, _epoch, _min_count, _neg, word_ngrams, loss, model, bucket, minn, maxn, _lr] =
            args;
        if model != 3 {
            return Err(malformed(path, "not a supervised model"));
        }
        let loss = match loss {
            1 => Loss::HierarchicalSoftmax,
            2 => Loss::NegativeSampling,
            3 => Loss::Softmax,
            4 => Loss::OneVsAll,
            _ => return Err(malformed(path, "unknown loss")),
        };
        if dim <= 0 || bucket < 0 || minn < 0 || maxn < 0 || word_ngrams < 1 {
            return Err(malformed(path, "invalid arguments"));
        }

        let size = i32_(r).map_err(io)?;
        let nwords = i32_(r).map_err(io)?;
        let nlabels = i32_(r).map_err(io)?;
        let _ntokens = r.read_i64::<LittleEndian>().map_err(io)?;
        let prune_size = r.read_i64::<LittleEndian>().map_err(io)?;
        if size < 0 || nwords < 0 || nlabels <= 0 || nwords + nlabels != size {
            return Err(malformed(path, "inconsistent dictionary sizes"));
        }
        let mut words = HashMap::new();
        let mut word_list = Vec::new();
        let mut labels = Vec::new();
        let mut label_counts = Vec::new();
        for _ in 0..size {
            let w = read_cstring(r).map_err(io)?;
            let count = r.read_i64::<LittleEndian>().map_err(io)?;
            match r.read_i8().map_err(io)? {
                0 => {
                    words.insert(w.clone(), word_list.len());
                    word_list.push(w);
                }
                1 => {
                    labels.push(w.strip_prefix(LABEL_PREFIX).unwrap_or(&w).to_owned());
                    label_counts.push(count);
                }
                _ => return Err(malformed(path, "unknown dictionary entry type")),
            }
        }
        if word_list.len() != nwords as usize {
            return Err(malformed(path, "word count mismatch"));
        }
        let prune_idx = if prune_size > 0 {
            let mut m = HashMap::new();
            for _ in 0..prune_size {
                let k = i32_(r).map_err(io)?;
                let v = i32_(r).map_err(io)?;
                m.insert(k, v);
            }
            Some(m)
        } else {
            None
        };

        let (in_rows, in_cols, input) = read_matrix(r, path)?;
        let (out_rows, out_cols, output) = read_matrix(r, path)?;
        let dim = dim as usize;
        if in_cols != dim || out_cols != dim {
            return Err(malformed(path, "matrix width differs from dim"));
        }
        let expected_out = match loss {
            Loss::HierarchicalSoftmax => labels.len() - 1,
            _ => labels.len(),
        };
        if out_rows < expected_out {
            return Err(malformed(path, "output matrix too small"));
        }

        let mut m = FastTextModel {
            dim,
            word_ngrams: word_ngrams as usize,
            bucket: bucket as u64,
            minn: minn as usize,
            maxn: maxn as usize,
            loss,
            nwords: nwords as usize,
            words,
            subwords: Vec::new(),
            supported: labels.iter().cloned().collect(),
            labels,
            prune_idx,
            input,
            output,
            tree: Vec::new(),
        };
        m.subwords = word_list
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let mut ids = vec![i];
                if w != EOS {
                    m.char_ngrams(&format!("<{w}>"), &mut ids);
                }
                ids
            })
            .collect();
        if m.loss == Loss::HierarchicalSoftmax {
            m.tree = build_huffman(&label_counts);
        }
        if let Some(bad) = m.subwords.iter().flatten().find(|&&id| id >= in_rows) {
            return Err(malformed(path, &format!("input row {bad} out of range")));
        }
        Ok(m)
    }

    fn push_hash(&self, ids: &mut Vec<usize>, hash: i64) {
        let hash = match &self.prune_idx {
            None => hash,
            Some(p) => match p.get(&(hash as i32)) {
                Some(&v) => v as i64,
                None => return,
            },
        };
        ids.push(self.nwords + hash as usize);
    }

    fn char_ngrams(&self, word: &str, ids: &mut Vec<usize>) {
        if self.maxn == 0 || self.bucket == 0 {
            return;
        }
        let b = word.as_bytes();
        for i in 0..b.len() {
            if b[i] & 0xC0 == 0x80 {
                continue;
            }
            let mut j = i;
            let mut n = 1;
            while j < b.len() && n <= self.maxn {
                j += 1;
                while j < b.len() && b[j] & 0xC0 == 0x80 {
                    j += 1;
                }
                if n >= self.minn && !(n == 1 && (i == 0 || j == b.len())) {
                    let h = fnv1a(&b[i..j]) as u64 % self.bucket;
                    self.push_hash(ids, h as i64);
                }
                n += 1;
            }
        }
    }

    /// Input-row ids for a line, mirroring the reference tokenizer: split on
    /// whitespace, append the end-of-sentence token, add word n-gram buckets.
    fn line_ids(&self, text: &str) -> Vec<usize> {
        let mut ids = Vec::new();
        let mut hashes: Vec<i32> = Vec::new();
        for tok in text.split_ascii_whitespace().chain(std::iter::once(EOS)) {
            if tok.starts_with(LABEL_PREFIX) {
                continue;
            }
            match self.words.get(tok) {
                Some(&wid) if self.maxn == 0 => ids.push(wid),
                Some(&wid) => ids.extend_from_slice(&self.subwords[wid]),
                None if tok != EOS => self.char_ngrams(&format!("<{tok}>"), &mut ids),
                None => {}
            }
            hashes.push(fnv1a(tok.as_bytes()) as i32);
        }
        if self.bucket > 0 {
            for i in 0..hashes.len() {
                let mut h = hashes[i] as i64 as u64;
                for &next in hashes.iter().skip(i + 1).take(self.word_ngrams - 1) {
                    h = h.wrapping_mul(116049371).wrapping_add(next as i64 as u64);
                    self.push_hash(&mut ids, (h % self.bucket) as i64);
                }
            }
        }
        ids
    }

    fn hidden(&self, ids: &[usize]) -> Vec<f32> {
        let mut h = vec![0f32; self.dim];
        for &id in ids {
            let row = &self.input[id * self.dim..(id + 1) * self.dim];
            for (a, b) in h.iter_mut().zip(row) {
                *a += b;
            }
        }
        if !ids.is_empty() {
            let n = ids.len() as f32;
            h.iter_mut().for_each(|x| *x /= n);
        }
        h
    }

    fn dot_output(&self, row: usize, hidden: &[f32]) -> f32 {
        self.output[row * self.dim..(row + 1) * self.dim]
            .iter()
            .zip(hidden)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Probability of every label, in dictionary order.
    pub fn label_probabilities(&self, text: &str) -> Vec<f64> {
        let line: String = text
            .chars()
            .map(|c| if c == '\n' || c == '\r' { ' ' } else { c })
            .collect();
        let hidden = self.hidden(&self.line_ids(&line));
        let k = self.labels.len();
        match self.loss {
            Loss::Softmax | Loss::NegativeSampling => {
                let scores: Vec<f64> = (0..k).map(|i| self.dot_output(i, &hidden) as f64).collect();
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                let z: f64 = exps.iter().sum();
                exps.into_iter().map(|e| e / z).collect()
            }
            Loss::OneVsAll => (0..k)
                .map(|i| sigmoid(self.dot_output(i, &hidden) as f64))
                .collect(),
            Loss::HierarchicalSoftmax => {
                let mut probs = vec![0.0; k];
                if k == 1 {
                    probs[0] = 1.0;
                    return probs;
                }
                let mut stack = vec![(2 * k - 2, 0.0f64)];
                while let Some((node, logp)) = stack.pop() {
                    if node < k {
                        probs[node] = logp.exp();
                        continue;
                    }
                    let f = sigmoid(self.dot_output(node - k, &hidden) as f64);
                    let n = self.tree[node];
                    stack.push((n.left as usize, logp + (1.0 - f).max(1e-300).ln()));
                    stack.push((n.right as usize, logp + f.max(1e-300).ln()));
                }
                probs
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Huffman tree over label counts (sorted by decreasing count), with leaves
/// first and internal nodes appended, as the reference trainer builds it.
fn build_huffman(counts: &[i64]) -> Vec<HuffNode> {
    let osz = counts.len();
    let n = 2 * osz - 1;
    let mut tree = vec![HuffNode { left: -1, right: -1 }; n];
    let mut weight: Vec<i64> = vec![1_000_000_000_000_000; n];
    weight[..osz].copy_from_slice(counts);
    let mut leaf = osz as i64 - 1;
    let mut node = osz;
    for i in osz..n {
        let mut mini = [0usize; 2];
        for m in mini.iter_mut() {
            if leaf >= 0 && weight[leaf as usize] < weight[node] {
                *m = leaf as usize;
                leaf -= 1;
            } else {
                *m = node;
                node += 1;
            }
        }
        tree[i] = HuffNode {
            left: mini[0] as i32,
            right: mini[1] as i32,
        };
        weight[i] = weight[mini[0]] + weight[mini[1]];
    }
    tree
}

impl LangClassifier for FastTextModel {
    fn supported_languages(&self) -> &BTreeSet<String> {
        &self.supported
    }

    fn predict(&self, text: &str) -> Result<LangPrediction> {
        let probs = self.label_probabilities(text);
        let (best, p) = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .ok_or(Error::EmptyInput("model has no labels"))?;
        if !p.is_finite() {
            return Err(Error::InvalidArgument("non-finite prediction".into()));
        }
        Ok(LangPrediction {
            language: self.labels[best].clone(),
            confidence: p.clamp(0.0, 1.0),
        })
    }

    fn confidence_for(&self, text: &str, language: &str) -> Result<f64> {
        let i = self
            .labels
            .iter()
            .position(|l| l == language)
            .ok_or_else(|| Error::InvalidArgument(format!("unsupported language {language}")))?;
        Ok(self.label_probabilities(text)[i].clamp(0.0, 1.0))
    }
}
