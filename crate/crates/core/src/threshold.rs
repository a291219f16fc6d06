//! Percentile thresholds per (language, metric) and outlier removal.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{Metric, MetricVector};

pub const DEFAULT_Q_LOW: f64 = 10.0;
pub const DEFAULT_Q_HIGH: f64 = 90.0;

/// Percentile pairs tried by the sweep.
pub const SWEEP_GRID: [(f64, f64); 5] = [
    (25.0, 75.0),
    (20.0, 80.0),
    (15.0, 85.0),
    (10.0, 90.0),
    (5.0, 95.0),
];

pub const DEFAULT_LARGE_LANGUAGE_DOCS: u64 = 100_000_000;
pub const LARGE_LANGUAGE_SAMPLE_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    FavorHigh,
    FavorLow,
}

impl Metric {
    pub fn direction(self) -> Direction {
        match self {
            Metric::NumberWords | Metric::StopwordRatio | Metric::LidConfidence => {
                Direction::FavorHigh
            }
            _ => Direction::FavorLow,
        }
    }
}

/// 1-based nearest rank `ceil(q * n / 100)`, clamped to `[1, n]`.
pub fn nearest_rank(n: usize, q: f64) -> usize {
    let x = q * n as f64 / 100.0;
    // Absorb rounding noise so that e.g. 10% of 100 is rank 10, not 11.
    let r = x.round();
    let rank = if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r
    } else {
        x.ceil()
    };
    (rank as usize).clamp(1, n)
}

fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q < 100.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "percentile must be in (0, 100), got {q}"
        )))
    }
}

/// Nearest-rank percentile; reorders `values`.
pub fn percentile_in_place(values: &mut [f64], q: f64) -> Result<f64> {
    check_q(q)?;
    if values.is_empty() {
        return Err(Error::EmptyInput("percentile of an empty multiset"));
    }
    let k = nearest_rank(values.len(), q) - 1;
    let (_, v, _) = values.select_nth_unstable_by(k, f64::total_cmp);
    Ok(*v)
}

pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    percentile_in_place(&mut values.to_vec(), q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyOptions {
    pub q_low: f64,
    pub q_high: f64,
    /// Fixed sample fraction; `None` picks 1.0, or the large-language
    /// fraction above `large_language_docs`.
    pub sample_fraction: Option<f64>,
    pub large_language_docs: u64,
    pub seed: u64,
}

impl Default for PolicyOptions {
    fn default() -> Self {
        PolicyOptions {
            q_low: DEFAULT_Q_LOW,
            q_high: DEFAULT_Q_HIGH,
            sample_fraction: None,
            large_language_docs: DEFAULT_LARGE_LANGUAGE_DOCS,
            seed: 0,
        }
    }
}

impl PolicyOptions {
    pub fn validate(&self) -> Result<()> {
        check_q(self.q_low)?;
        check_q(self.q_high)?;
        if self.q_low >= self.q_high {
            return Err(Error::InvalidArgument(format!(
                "q_low ({}) must be below q_high ({})",
                self.q_low, self.q_high
            )));
        }
        if let Some(f) = self.sample_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "sample fraction must be in (0, 1], got {f}"
                )));
            }
        }
        Ok(())
    }

    pub fn fraction_for(&self, documents: u64) -> f64 {
        self.sample_fraction.unwrap_or(if documents > self.large_language_docs {
            LARGE_LANGUAGE_SAMPLE_FRACTION
        } else {
            1.0
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricThreshold {
    pub direction: Direction,
    pub percentile: f64,
    pub threshold: f64,
    pub sample_fraction: f64,
    pub sample_size: u64,
}

impl MetricThreshold {
    pub fn violated(&self, value: f64) -> bool {
        match self.direction {
            Direction::FavorHigh => value < self.threshold,
            Direction::FavorLow => value > self.threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub language: String,
    pub q_low: f64,
    pub q_high: f64,
    pub seed: u64,
    pub population: u64,
    pub metrics: BTreeMap<Metric, MetricThreshold>,
}

/// Per-language stream derived from the run seed, so languages sample
/// independently but reproducibly.
fn language_rng(seed: u64, language: &str) -> ChaCha8Rng {
    let h = xxhash_rust::xxh3::xxh3_64(language.as_bytes());
    ChaCha8Rng::seed_from_u64(seed ^ h)
}

/// Indices of a seeded Bernoulli(`fraction`) sample of `0..n`. Falls back to
/// everything if the draw comes out empty.
pub fn bernoulli_sample(n: usize, fraction: f64, seed: u64, language: &str) -> Vec<usize> {
    if fraction >= 1.0 {
        return (0..n).collect();
    }
    let mut rng = language_rng(seed, language);
    let picked: Vec<usize> = (0..n).filter(|_| rng.gen_bool(fraction)).collect();
    if picked.is_empty() {
        (0..n).collect()
    } else {
        picked
    }
}

pub fn build_policy(
    language: &str,
    vectors: &[MetricVector],
    opts: &PolicyOptions,
) -> Result<ThresholdPolicy> {
    opts.validate()?;
    if vectors.is_empty() {
        return Err(Error::EmptyInput("no metric vectors to build a policy from"));
    }
    let fraction = opts.fraction_for(vectors.len() as u64);
    let sample = bernoulli_sample(vectors.len(), fraction, opts.seed, language);

    let mut metrics = BTreeMap::new();
    for m in Metric::ALL {
        let mut values: Vec<f64> = sample
            .iter()
            .filter_map(|&i| vectors[i].get(m))
            .filter(|v| !v.is_nan())
            .collect();
        if values.is_empty() {
            // Disabled for this language.
            continue;
        }
        let direction = m.direction();
        let q = match direction {
            Direction::FavorHigh => opts.q_low,
            Direction::FavorLow => opts.q_high,
        };
        let threshold = percentile_in_place(&mut values, q)?;
        metrics.insert(
            m,
            MetricThreshold {
                direction,
                percentile: q,
                threshold,
                sample_fraction: fraction,
                sample_size: values.len() as u64,
            },
        );
    }
    Ok(ThresholdPolicy {
        language: language.to_owned(),
        q_low: opts.q_low,
        q_high: opts.q_high,
        seed: opts.seed,
        population: vectors.len() as u64,
        metrics,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Verdict {
    pub violations: Vec<Metric>,
    /// Metrics the document has a value for but the policy does not cover.
    pub uncovered: Vec<Metric>,
}

impl Verdict {
    pub fn keep(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn apply_policy(mv: &MetricVector, policy: &ThresholdPolicy) -> Verdict {
    let mut v = Verdict::default();
    for m in Metric::ALL {
        let Some(value) = mv.get(m) else { continue };
        match policy.metrics.get(&m) {
            Some(t) if t.violated(value) => v.violations.push(m),
            Some(_) => {}
            None => v.uncovered.push(m),
        }
    }
    v
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplyStats {
    pub kept: u64,
    pub dropped: u64,
    pub violations: BTreeMap<Metric, u64>,
    pub uncovered_warnings: u64,
}

impl ApplyStats {
    pub fn record(&mut self, v: &Verdict) {
        if v.keep() {
            self.kept += 1;
        } else {
            self.dropped += 1;
        }
        for m in &v.violations {
            *self.violations.entry(*m).or_default() += 1;
        }
        self.uncovered_warnings += v.uncovered.len() as u64;
    }

    pub fn merge(&mut self, o: &ApplyStats) {
        self.kept += o.kept;
        self.dropped += o.dropped;
        for (m, n) in &o.violations {
            *self.violations.entry(*m).or_default() += n;
        }
        self.uncovered_warnings += o.uncovered_warnings;
    }

    pub fn drop_fraction(&self) -> f64 {
        let n = self.kept + self.dropped;
        if n == 0 {
            0.0
        } else {
            self.dropped as f64 / n as f64
        }
    }
}

/// Fraction of `vectors` the policy drops.
pub fn drop_fraction(vectors: &[MetricVector], policy: &ThresholdPolicy) -> f64 {
    let mut stats = ApplyStats::default();
    for mv in vectors {
        stats.record(&apply_policy(mv, policy));
    }
    stats.drop_fraction()
}

impl ThresholdPolicy {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: ThresholdPolicy = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        for (m, t) in &p.metrics {
            if t.threshold.is_nan() {
                return Err(Error::Config(format!(
                    "{}: threshold for {m} is not a number",
                    path.display()
                )));
            }
        }
        Ok(p)
    }
}

/// Writes one `<language>.json` per policy into `dir`.
pub fn save_policies<'a>(
    dir: impl AsRef<Path>,
    policies: impl IntoIterator<Item = &'a ThresholdPolicy>,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for p in policies {
        p.save(dir.join(format!("{}.json", p.language)))?;
    }
    Ok(())
}

/// Reads every `*.json` policy in `dir`, keyed by language.
pub fn load_policies(dir: impl AsRef<Path>) -> Result<BTreeMap<String, ThresholdPolicy>> {
    let dir = dir.as_ref();
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            let p = ThresholdPolicy::load(&path)?;
            out.insert(p.language.clone(), p);
        }
    }
    Ok(out)
}
