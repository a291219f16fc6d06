//! Exact-URL deduplication with bare-domain URLs exempt.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{DocId, Document};
use crate::par;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UrlKey {
    pub normalized: String,
    pub is_general_domain: bool,
}

/// Lowercases scheme and host, drops the fragment, keeps path and query
/// byte for byte.
pub fn normalize_url(url: &str) -> UrlKey {
    let url = url.trim();
    let url = url.split_once('#').map_or(url, |(u, _)| u);
    let (scheme, rest) = match url.split_once("://") {
        Some((s, r)) => (Some(s.to_ascii_lowercase()), r),
        None => (None, url),
    };
    let auth_end = rest.find(['/', '?']).unwrap_or(rest.len());
    let (authority, tail) = rest.split_at(auth_end);
    // Userinfo keeps its case; only the host part (with port) is folded.
    let authority = match authority.rsplit_once('@') {
        Some((user, host)) => format!("{user}@{}", host.to_ascii_lowercase()),
        None => authority.to_ascii_lowercase(),
    };
    let (path, query) = match tail.split_once('?') {
        Some((p, q)) => (p, Some(q)),
        None => (tail, None),
    };
    let is_general_domain = (path.is_empty() || path == "/") && query.is_none_or(str::is_empty);
    let normalized = match scheme {
        Some(s) => format!("{s}://{authority}{tail}"),
        None => format!("{authority}{tail}"),
    };
    UrlKey {
        normalized,
        is_general_domain,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrlDedupStats {
    pub kept: u64,
    pub removed: u64,
    pub general_domain_exempt: u64,
    pub no_url: u64,
}

impl UrlDedupStats {
    pub fn merge(&mut self, o: &UrlDedupStats) {
        self.kept += o.kept;
        self.removed += o.removed;
        self.general_domain_exempt += o.general_domain_exempt;
        self.no_url += o.no_url;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UrlDedupOutcome {
    /// Parallel to the input.
    pub keep: Vec<bool>,
    /// `(survivor, removed)`, by removed id.
    pub pairs: Vec<(DocId, DocId)>,
    pub stats: UrlDedupStats,
}

/// Keeps the minimum-id document per non-general URL key. Documents without
/// a URL, or with a bare-domain URL, always stay.
pub fn url_dedup(docs: &[Document]) -> UrlDedupOutcome {
    let keys: Vec<Option<UrlKey>> = par::map(docs, |d| d.url.as_deref().map(normalize_url));
    let mut first: HashMap<&str, DocId> = HashMap::new();
    for (d, k) in docs.iter().zip(&keys) {
        if let Some(k) = k.as_ref().filter(|k| !k.is_general_domain) {
            first
                .entry(k.normalized.as_str())
                .and_modify(|id| *id = (*id).min(d.id))
                .or_insert(d.id);
        }
    }
    let mut out = UrlDedupOutcome::default();
    for (d, k) in docs.iter().zip(&keys) {
        let survivor = match k {
            None => {
                out.stats.no_url += 1;
                None
            }
            Some(k) if k.is_general_domain => {
                out.stats.general_domain_exempt += 1;
                None
            }
            Some(k) => Some(first[k.normalized.as_str()]),
        };
        match survivor {
            Some(s) if s != d.id => {
                out.keep.push(false);
                out.pairs.push((s, d.id));
                out.stats.removed += 1;
            }
            _ => {
                out.keep.push(true);
                out.stats.kept += 1;
            }
        }
    }
    out.pairs.sort_by_key(|p| p.1);
    out
}
