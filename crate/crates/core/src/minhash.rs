//! MinHash signatures, LSH banding and union-find duplicate clusters.

use std::collections::{BinaryHeap, HashMap};
use std::cmp::Reverse;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{ReadBytesExt, WriteBytesExt, LE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::{xxh3_64_with_seed, Xxh3};

use crate::corpus::{DocId, Document};
use crate::error::{Error, Result};
use crate::metrics::{fold_case, Tokenizer};
use crate::par;

pub const DEFAULT_NUM_PERM: usize = 128;
pub const DEFAULT_NGRAM: usize = 5;
pub const DEFAULT_THRESHOLD: f64 = 0.8;

const MERSENNE_61: u64 = (1 << 61) - 1;

/// Hashed, case-folded word n-grams as a sorted set. Texts with at least one
/// but fewer than `n` tokens give a single shingle over all of them.
pub fn shingle(text: &str, tok: &dyn Tokenizer, n: usize) -> Vec<u64> {
    assert!(n >= 1, "shingle size must be positive");
    let tokens: Vec<String> = tok.tokenize(text).into_iter().map(fold_case).collect();
    if tokens.is_empty() {
        return Vec::new();
    }
    let hash = |gram: &[String]| {
        let mut h = Xxh3::new();
        for t in gram {
            h.update(t.as_bytes());
            // 0xFF never occurs in UTF-8, so token boundaries stay unambiguous.
            h.update(&[0xFF]);
        }
        h.digest()
    };
    let mut out: Vec<u64> = if tokens.len() < n {
        vec![hash(&tokens)]
    } else {
        tokens.windows(n).map(hash).collect()
    };
    out.sort_unstable();
    out.dedup();
    out
}

/// Exact Jaccard similarity of two sorted sets.
pub fn jaccard(a: &[u64], b: &[u64]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

fn mod_mersenne(x: u128) -> u64 {
    let p = MERSENNE_61 as u128;
    let folded = (x & p) + (x >> 61);
    let folded = (folded & p) + (folded >> 61);
    let v = folded as u64;
    if v >= MERSENNE_61 {
        v - MERSENNE_61
    } else {
        v
    }
}

/// `P` universal hashes `h(x) = (a x + b) mod (2^61 - 1)`, drawn from a
/// ChaCha stream seeded by one value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashFamily {
    coeffs: Vec<(u64, u64)>,
    seed: u64,
}

impl HashFamily {
    pub fn new(num_perm: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = (0..num_perm)
            .map(|_| {
                (
                    rng.gen_range(1..MERSENNE_61),
                    rng.gen_range(0..MERSENNE_61),
                )
            })
            .collect();
        HashFamily { coeffs, seed }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn signature(&self, shingles: &[u64], doc_id: DocId) -> Result<MinHashSignature> {
        if shingles.is_empty() {
            return Err(Error::EmptyInput("cannot sign an empty shingle set"));
        }
        let mut values = vec![u64::MAX; self.coeffs.len()];
        for &s in shingles {
            let x = mod_mersenne(s as u128) as u128;
            for (v, &(a, b)) in values.iter_mut().zip(&self.coeffs) {
                let h = mod_mersenne(a as u128 * x + b as u128);
                if h < *v {
                    *v = h;
                }
            }
        }
        Ok(MinHashSignature { doc_id, values })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinHashSignature {
    pub doc_id: DocId,
    pub values: Vec<u64>,
}

impl MinHashSignature {
    /// Fraction of matching positions.
    pub fn jaccard_estimate(&self, other: &MinHashSignature) -> f64 {
        assert_eq!(self.values.len(), other.values.len(), "signature lengths differ");
        let same = self
            .values
            .iter()
            .zip(&other.values)
            .filter(|(a, b)| a == b)
            .count();
        same as f64 / self.values.len() as f64
    }
}

/// Probability that a pair at similarity `s` shares at least one band.
pub fn collision_probability(s: f64, bands: usize, rows: usize) -> f64 {
    1.0 - (1.0 - s.powi(rows as i32)).powi(bands as i32)
}

fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    // Composite Simpson; the S-curve is smooth.
    const STEPS: usize = 2000;
    let h = (b - a) / STEPS as f64;
    let mut sum = f(a) + f(b);
    for i in 1..STEPS {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

/// Mean false-positive rate over `[0, t)` plus mean false-negative rate over
/// `[t, 1]`.
pub fn lsh_error(bands: usize, rows: usize, t: f64) -> f64 {
    let fp = integrate(|s| collision_probability(s, bands, rows), 0.0, t) / t;
    let fneg = integrate(|s| 1.0 - collision_probability(s, bands, rows), t, 1.0) / (1.0 - t);
    fp + fneg
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LshParams {
    pub bands: usize,
    pub rows: usize,
}

/// The `(bands, rows)` split of `num_perm` with least [`lsh_error`].
pub fn lsh_params(num_perm: usize, t: f64) -> Result<LshParams> {
    if num_perm == 0 {
        return Err(Error::InvalidArgument("signature length must be positive".into()));
    }
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::InvalidArgument(format!("threshold must be in (0, 1), got {t}")));
    }
    (1..=num_perm)
        .filter(|b| num_perm.is_multiple_of(*b))
        .map(|b| (lsh_error(b, num_perm / b, t), b))
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .map(|(_, b)| LshParams {
            bands: b,
            rows: num_perm / b,
        })
        .ok_or_else(|| Error::InvalidArgument(format!("no band split for {num_perm}")))
}

fn band_key(values: &[u64], band: usize) -> u64 {
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    xxh3_64_with_seed(&buf, band as u64)
}

/// One hash table per band, mapping band keys to positions of inserted
/// signatures.
#[derive(Debug, Clone)]
pub struct LshIndex {
    params: LshParams,
    ids: Vec<DocId>,
    tables: Vec<HashMap<u64, Vec<u32>>>,
}

impl LshIndex {
    pub fn new(params: LshParams) -> Self {
        LshIndex {
            params,
            ids: Vec::new(),
            tables: vec![HashMap::new(); params.bands],
        }
    }

    fn check_len(&self, sig: &MinHashSignature) -> Result<()> {
        let want = self.params.bands * self.params.rows;
        if sig.values.len() != want {
            return Err(Error::InvalidArgument(format!(
                "signature of length {} does not fit {} bands x {} rows",
                sig.values.len(),
                self.params.bands,
                self.params.rows
            )));
        }
        Ok(())
    }

    pub fn insert(&mut self, sig: &MinHashSignature) -> Result<()> {
        self.check_len(sig)?;
        let pos = self.ids.len() as u32;
        self.ids.push(sig.doc_id);
        let r = self.params.rows;
        for (band, table) in self.tables.iter_mut().enumerate() {
            let key = band_key(&sig.values[band * r..(band + 1) * r], band);
            table.entry(key).or_default().push(pos);
        }
        Ok(())
    }

    /// Builds all band tables at once, one writer per band.
    pub fn build(sigs: &[MinHashSignature], params: LshParams) -> Result<Self> {
        let mut index = LshIndex::new(params);
        for s in sigs {
            index.check_len(s)?;
        }
        index.ids = sigs.iter().map(|s| s.doc_id).collect();
        let r = params.rows;
        index.tables = par::map_range(params.bands, |band| {
            let mut table: HashMap<u64, Vec<u32>> = HashMap::new();
            for (pos, s) in sigs.iter().enumerate() {
                let key = band_key(&s.values[band * r..(band + 1) * r], band);
                table.entry(key).or_default().push(pos as u32);
            }
            table
        });
        Ok(index)
    }

    pub fn params(&self) -> LshParams {
        self.params
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of buckets, across all bands, holding position `pos`.
    pub fn memberships(&self, pos: usize) -> usize {
        self.tables
            .iter()
            .flat_map(|t| t.values())
            .filter(|b| b.contains(&(pos as u32)))
            .count()
    }

    /// Buckets with more than one member.
    pub fn collisions(&self) -> impl Iterator<Item = &[u32]> {
        self.tables
            .iter()
            .flat_map(|t| t.values())
            .filter(|b| b.len() > 1)
            .map(Vec::as_slice)
    }
}

/// Union-find over document ids; each cluster's root is its minimum id.
#[derive(Debug, Clone)]
pub struct DupClusters {
    ids: Vec<DocId>,
    parent: Vec<u32>,
}

impl DupClusters {
    pub fn new(ids: Vec<DocId>) -> Self {
        let parent = (0..ids.len() as u32).collect();
        DupClusters { ids, parent }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn find(&mut self, mut i: usize) -> usize {
        let mut root = i;
        while self.parent[root] as usize != root {
            root = self.parent[root] as usize;
        }
        while self.parent[i] as usize != root {
            let next = self.parent[i] as usize;
            self.parent[i] = root as u32;
            i = next;
        }
        root
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.ids[ra] < self.ids[rb] {
            self.parent[rb] = ra as u32;
        } else {
            self.parent[ra] = rb as u32;
        }
    }

    pub fn survivor_at(&mut self, pos: usize) -> DocId {
        let r = self.find(pos);
        self.ids[r]
    }

    /// `(survivor, removed)` for every non-surviving id, by removed id.
    pub fn removed_pairs(&mut self) -> Vec<(DocId, DocId)> {
        let mut out: Vec<(DocId, DocId)> = (0..self.ids.len())
            .filter_map(|i| {
                let s = self.survivor_at(i);
                (s != self.ids[i]).then_some((s, self.ids[i]))
            })
            .collect();
        out.sort_by_key(|p| p.1);
        out
    }

    /// Surviving ids in ascending order.
    pub fn survivors(&mut self) -> Vec<DocId> {
        let roots: Vec<usize> = (0..self.ids.len()).filter(|&i| self.find(i) == i).collect();
        let mut out: Vec<DocId> = roots.into_iter().map(|i| self.ids[i]).collect();
        out.sort();
        out
    }

    /// Clusters with more than one member, each sorted, ordered by survivor.
    pub fn clusters(&mut self) -> Vec<Vec<DocId>> {
        let mut groups: HashMap<usize, Vec<DocId>> = HashMap::new();
        for i in 0..self.ids.len() {
            let r = self.find(i);
            groups.entry(r).or_default().push(self.ids[i]);
        }
        let mut out: Vec<Vec<DocId>> = groups
            .into_values()
            .filter(|g| g.len() > 1)
            .map(|mut g| {
                g.sort();
                g
            })
            .collect();
        out.sort();
        out
    }
}

/// Unions every pair of signatures sharing a bucket. With `verify`, a pair is
/// only joined if its estimated similarity reaches the given threshold.
pub fn dedup(sigs: &[MinHashSignature], index: &LshIndex, verify: Option<f64>) -> DupClusters {
    let mut uf = DupClusters::new(sigs.iter().map(|s| s.doc_id).collect());
    for bucket in index.collisions() {
        match verify {
            None => {
                for &p in &bucket[1..] {
                    uf.union(bucket[0] as usize, p as usize);
                }
            }
            Some(t) => {
                for (k, &a) in bucket.iter().enumerate() {
                    for &b in &bucket[k + 1..] {
                        if uf.find(a as usize) != uf.find(b as usize)
                            && sigs[a as usize].jaccard_estimate(&sigs[b as usize]) >= t
                        {
                            uf.union(a as usize, b as usize);
                        }
                    }
                }
            }
        }
    }
    uf
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinHashConfig {
    pub num_perm: usize,
    pub ngram: usize,
    pub threshold: f64,
    pub seed: u64,
    pub verify: bool,
}

impl Default for MinHashConfig {
    fn default() -> Self {
        MinHashConfig {
            num_perm: DEFAULT_NUM_PERM,
            ngram: DEFAULT_NGRAM,
            threshold: DEFAULT_THRESHOLD,
            seed: 0,
            verify: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MinHashOutcome {
    /// Parallel to the input: whether each document survives.
    pub keep: Vec<bool>,
    pub pairs: Vec<(DocId, DocId)>,
    /// Documents without tokens, which cannot be signed and always survive.
    pub unsigned: u64,
}

/// Signatures for `docs`, `None` where a document has no tokens.
pub fn signatures(
    docs: &[Document],
    tok: &dyn Tokenizer,
    family: &HashFamily,
    ngram: usize,
) -> Vec<Option<MinHashSignature>> {
    par::map(docs, |d| family.signature(&shingle(&d.text, tok, ngram), d.id).ok())
}

pub fn dedup_documents(
    docs: &[Document],
    tok: &dyn Tokenizer,
    cfg: &MinHashConfig,
) -> Result<MinHashOutcome> {
    let params = lsh_params(cfg.num_perm, cfg.threshold)?;
    let family = HashFamily::new(cfg.num_perm, cfg.seed);
    let sigs = signatures(docs, tok, &family, cfg.ngram);
    let unsigned = sigs.iter().filter(|s| s.is_none()).count() as u64;
    let signed: Vec<MinHashSignature> = sigs.into_iter().flatten().collect();
    let index = LshIndex::build(&signed, params)?;
    let mut uf = dedup(&signed, &index, cfg.verify.then_some(cfg.threshold));
    let pairs = uf.removed_pairs();
    let removed: std::collections::HashSet<DocId> = pairs.iter().map(|p| p.1).collect();
    Ok(MinHashOutcome {
        keep: docs.iter().map(|d| !removed.contains(&d.id)).collect(),
        pairs,
        unsigned,
    })
}

/// Fixed-width signature records: doc id then `P` values, all little-endian
/// u64, no header.
pub struct SignatureWriter<W: Write> {
    inner: W,
    num_perm: usize,
}

impl<W: Write> SignatureWriter<W> {
    pub fn new(inner: W, num_perm: usize) -> Self {
        SignatureWriter { inner, num_perm }
    }

    pub fn write(&mut self, sig: &MinHashSignature) -> std::io::Result<()> {
        assert_eq!(sig.values.len(), self.num_perm, "signature length mismatch");
        self.inner.write_u64::<LE>(sig.doc_id.0)?;
        for &v in &sig.values {
            self.inner.write_u64::<LE>(v)?;
        }
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

pub struct SignatureReader<R: Read> {
    inner: R,
    num_perm: usize,
}

impl<R: Read> SignatureReader<R> {
    pub fn new(inner: R, num_perm: usize) -> Self {
        SignatureReader { inner, num_perm }
    }
}

impl<R: Read> Iterator for SignatureReader<R> {
    type Item = std::io::Result<MinHashSignature>;

    fn next(&mut self) -> Option<Self::Item> {
        let id = match self.inner.read_u64::<LE>() {
            Ok(v) => v,
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return None,
            Err(e) => return Some(Err(e)),
        };
        let mut values = vec![0u64; self.num_perm];
        if let Err(e) = self.inner.read_u64_into::<LE>(&mut values) {
            return Some(Err(e));
        }
        Some(Ok(MinHashSignature {
            doc_id: DocId(id),
            values,
        }))
    }
}

/// Out-of-core banding: `(band key, doc id)` records are cut into sorted runs
/// of at most `run_records` per band under `dir`, then merged per band.
#[derive(Debug, Clone)]
pub struct SpillOptions {
    pub dir: PathBuf,
    pub run_records: usize,
}

fn write_run(dir: &Path, band: usize, run: usize, recs: &mut Vec<(u64, u64)>) -> Result<PathBuf> {
    recs.sort_unstable();
    let path = dir.join(format!("band{band:04}-run{run:06}.bin"));
    let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(f);
    for &(k, id) in recs.iter() {
        w.write_u64::<LE>(k).map_err(|e| Error::io(&path, e))?;
        w.write_u64::<LE>(id).map_err(|e| Error::io(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    recs.clear();
    Ok(path)
}

struct RunReader {
    r: BufReader<File>,
    path: PathBuf,
}

impl RunReader {
    fn next(&mut self) -> Result<Option<(u64, u64)>> {
        let k = match self.r.read_u64::<LE>() {
            Ok(k) => k,
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
            Err(e) => return Err(Error::io(&self.path, e)),
        };
        let id = self.r.read_u64::<LE>().map_err(|e| Error::io(&self.path, e))?;
        Ok(Some((k, id)))
    }
}

/// Same clusters as [`dedup`] without verification, holding only one run
/// per band in memory at a time.
pub fn dedup_spilled<I>(sigs: I, params: LshParams, opts: &SpillOptions) -> Result<DupClusters>
where
    I: IntoIterator<Item = Result<MinHashSignature>>,
{
    fs::create_dir_all(&opts.dir).map_err(|e| Error::io(&opts.dir, e))?;
    let run_records = opts.run_records.max(1);
    let r = params.rows;
    let mut ids = Vec::new();
    let mut pos_of: HashMap<DocId, u32> = HashMap::new();
    let mut buffers: Vec<Vec<(u64, u64)>> = vec![Vec::new(); params.bands];
    let mut runs: Vec<Vec<PathBuf>> = vec![Vec::new(); params.bands];
    for sig in sigs {
        let sig = sig?;
        if sig.values.len() != params.bands * r {
            return Err(Error::InvalidArgument("signature length mismatch".into()));
        }
        pos_of.insert(sig.doc_id, ids.len() as u32);
        ids.push(sig.doc_id);
        for band in 0..params.bands {
            buffers[band].push((band_key(&sig.values[band * r..(band + 1) * r], band), sig.doc_id.0));
            if buffers[band].len() >= run_records {
                let n = runs[band].len();
                runs[band].push(write_run(&opts.dir, band, n, &mut buffers[band])?);
            }
        }
    }
    for band in 0..params.bands {
        if !buffers[band].is_empty() {
            let n = runs[band].len();
            runs[band].push(write_run(&opts.dir, band, n, &mut buffers[band])?);
        }
    }

    let mut uf = DupClusters::new(ids);
    for band_runs in runs {
        let mut readers = Vec::new();
        for path in &band_runs {
            let f = File::open(path).map_err(|e| Error::io(path, e))?;
            readers.push(RunReader {
                r: BufReader::new(f),
                path: path.clone(),
            });
        }
        let mut heap = BinaryHeap::new();
        for (i, rd) in readers.iter_mut().enumerate() {
            if let Some(rec) = rd.next()? {
                heap.push(Reverse((rec, i)));
            }
        }
        let mut current: Option<(u64, u32)> = None;
        while let Some(Reverse(((key, id), i))) = heap.pop() {
            let pos = pos_of[&DocId(id)];
            match current {
                Some((k, first)) if k == key => uf.union(first as usize, pos as usize),
                _ => current = Some((key, pos)),
            }
            if let Some(rec) = readers[i].next()? {
                heap.push(Reverse((rec, i)));
            }
        }
        for path in &band_runs {
            fs::remove_file(path).map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(uf)
}

/// Newline-delimited `survivor<TAB>removed` id pairs.
pub fn write_pairs(path: impl AsRef<Path>, pairs: &[(DocId, DocId)]) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for (s, r) in pairs {
        writeln!(w, "{}\t{}", s.0, r.0).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_pairs(path: impl AsRef<Path>) -> Result<Vec<(DocId, DocId)>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = line
            .split_once('\t')
            .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
        match parsed {
            Some((a, b)) => out.push((DocId(a), DocId(b))),
            None => {
                return Err(Error::InvalidArgument(format!(
                    "{}:{}: expected two ids separated by a tab",
                    path.display(),
                    n + 1
                )))
            }
        }
    }
    Ok(out)
}
