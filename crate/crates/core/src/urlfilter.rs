//! Category blacklist of domains and URLs, in the per-category
//! `<root>/<category>/{domains,urls}` plaintext layout.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use url::Url;

use crate::corpus::Document;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct Blacklist {
    domains: HashSet<String>,
    urls: HashSet<String>,
    categories: BTreeSet<String>,
}

/// Hostname of `url`, lowercased and IDNA-normalized. Scheme-less inputs are
/// parsed as if prefixed with `http://`.
pub fn hostname(url: &str) -> Option<String> {
    let url = url.trim();
    let parsed = if url.contains("://") {
        Url::parse(url).ok()?
    } else {
        Url::parse(&format!("http://{url}")).ok()?
    };
    let host = parsed.host_str()?.trim_end_matches('.');
    (!host.is_empty()).then(|| host.to_ascii_lowercase())
}

/// Drops the scheme and any trailing slashes; lowercases the host part.
fn strip_url(url: &str) -> String {
    let url = url.trim();
    let rest = match url.find("://") {
        Some(i) => &url[i + 3..],
        None => url,
    };
    let rest = rest.trim_end_matches('/');
    match rest.find(['/', '?', '#']) {
        Some(i) => format!("{}{}", rest[..i].to_ascii_lowercase(), &rest[i..]),
        None => rest.to_ascii_lowercase(),
    }
}

fn read_entries(path: &Path) -> Result<Vec<String>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(String::from_utf8_lossy(&raw)
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect())
}

impl Blacklist {
    /// Loads the union of the named categories. A missing category directory
    /// is a configuration error; a missing `urls` file counts as empty.
    pub fn load(root: impl AsRef<Path>, categories: &[impl AsRef<str>]) -> Result<Self> {
        let root = root.as_ref();
        let mut bl = Blacklist::default();
        for cat in categories {
            let cat = cat.as_ref();
            let dir = root.join(cat);
            if !dir.is_dir() {
                return Err(Error::Config(format!(
                    "blacklist category {cat:?} not found under {}",
                    root.display()
                )));
            }
            let domains = dir.join("domains");
            if domains.is_file() {
                for d in read_entries(&domains)? {
                    bl.insert_domain(&d);
                }
            }
            let urls = dir.join("urls");
            if urls.is_file() {
                for u in read_entries(&urls)? {
                    bl.insert_url(&u);
                }
            }
            bl.categories.insert(cat.to_owned());
        }
        Ok(bl)
    }

    pub fn insert_domain(&mut self, entry: &str) {
        let entry = entry.trim().to_lowercase();
        let host = hostname(&entry).unwrap_or(entry);
        self.domains.insert(host);
    }

    pub fn insert_url(&mut self, entry: &str) {
        self.urls.insert(strip_url(entry));
    }

    pub fn categories(&self) -> &BTreeSet<String> {
        &self.categories
    }

    pub fn domain_count(&self) -> usize {
        self.domains.len()
    }

    pub fn url_count(&self) -> usize {
        self.urls.len()
    }

    /// Total distinct entries (domains plus URLs).
    pub fn len(&self) -> usize {
        self.domains.len() + self.urls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True if `host` or any parent domain on a label boundary is listed.
    /// One set lookup per label.
    pub fn host_blocked(&self, host: &str) -> bool {
        let mut rest = host;
        loop {
            if self.domains.contains(rest) {
                return true;
            }
            match rest.find('.') {
                Some(i) => rest = &rest[i + 1..],
                None => return false,
            }
        }
    }

    /// Returns `None` for URLs without a parsable hostname.
    pub fn check(&self, url: &str) -> Option<bool> {
        let host = hostname(url)?;
        Some(self.host_blocked(&host) || self.urls.contains(&strip_url(url)))
    }
}

/// Whether `url` matches the blacklist. Unparsable URLs are never blocked.
pub fn url_blocked(url: &str, bl: &Blacklist) -> bool {
    bl.check(url).unwrap_or(false)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrlFilterStats {
    pub kept: u64,
    pub blocked: u64,
    pub unparsable: u64,
    pub no_url: u64,
}

impl UrlFilterStats {
    pub fn merge(&mut self, o: &UrlFilterStats) {
        self.kept += o.kept;
        self.blocked += o.blocked;
        self.unparsable += o.unparsable;
        self.no_url += o.no_url;
    }
}

/// Stage decision for one document: true to keep.
pub fn keep_document(doc: &Document, bl: &Blacklist, stats: &mut UrlFilterStats) -> bool {
    let Some(url) = doc.url.as_deref() else {
        stats.no_url += 1;
        stats.kept += 1;
        return true;
    };
    match bl.check(url) {
        Some(true) => {
            stats.blocked += 1;
            false
        }
        Some(false) => {
            stats.kept += 1;
            true
        }
        None => {
            stats.unparsable += 1;
            stats.kept += 1;
            true
        }
    }
}
