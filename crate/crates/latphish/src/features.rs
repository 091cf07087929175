//! The five-element detector feature vector: recipient count, recipient
//! likelihood, the phishy-keyword flag, and global/local URL reputation.
//!
//! Feature extraction is a pure function of the email plus immutable shared
//! context, and never reads history at or after the email's own timestamp.
//! Emails with no candidate URLs short-circuit to `SkipBenign`: every
//! exploit feature is URL-based, so a URL-less email is never classified.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusIndex, Email, OrgConfig};
use crate::error::{Error, Result};
use crate::html;
use crate::urlrep::{self, DomainRanking, ShortlinkMap, SpecialDomainLists};

pub const FEATURE_NAMES: [&str; 5] = [
    "num_recipients",
    "recipient_likelihood",
    "phishy_keyword",
    "global_url_rep",
    "local_url_rep",
];

/// Detector features for one email. Only produced for emails with at least
/// one candidate URL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub num_recipients: u32,
    pub recipient_likelihood: f64,
    pub phishy_keyword: bool,
    pub global_url_rep: u64,
    pub local_url_rep: u32,
}

impl FeatureVector {
    /// Fixed feature order used by the classifier.
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.num_recipients as f64,
            self.recipient_likelihood,
            if self.phishy_keyword { 1.0 } else { 0.0 },
            self.global_url_rep as f64,
            self.local_url_rep as f64,
        ]
    }
}

/// Outcome of feature extraction.
#[derive(Debug, Clone, PartialEq)]
pub enum Extraction {
    Vector(FeatureVector),
    /// No candidate URLs: the detector treats the email as benign without
    /// classifying it.
    SkipBenign,
}

/// Ordered list of lowercase lure phrases.
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordList {
    phrases: Vec<String>,
}

impl KeywordList {
    pub fn from_phrases<I: IntoIterator<Item = String>>(phrases: I) -> Result<Self> {
        let phrases: Vec<String> = phrases
            .into_iter()
            .map(|p| html::collapse_ws(&p.to_lowercase()))
            .filter(|p| !p.is_empty())
            .collect();
        if phrases.is_empty() {
            return Err(Error::Config("keyword list is empty".into()));
        }
        Ok(KeywordList { phrases })
    }

    /// The keyword list bundled with the crate.
    pub fn builtin() -> Self {
        Self::parse(include_str!("../data/phishy_keywords.txt"))
            .expect("bundled keyword list is non-empty")
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_phrases(
            text.lines()
                .map(|l| l.trim())
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| l.to_string()),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut lines = Vec::new();
        for line in reader.lines() {
            lines.push(line?);
        }
        Self::from_phrases(
            lines
                .iter()
                .map(|l| l.trim())
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| l.to_string()),
        )
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    pub fn phrases(&self) -> &[String] {
        &self.phrases
    }
}

/// Number of unique recipients across To, CC, and BCC (case-insensitive).
pub fn num_recipients(email: &Email) -> u32 {
    email.recipient_set().len() as u32
}

/// True iff any keyword phrase occurs as a substring of the normalized body
/// text (HTML stripped, lowercased, whitespace collapsed).
pub fn has_phishy_keyword(email: &Email, keywords: &KeywordList) -> bool {
    let text = html::collapse_ws(&html::strip_tags(&email.body_html).to_lowercase());
    keywords.phrases.iter().any(|p| text.contains(p.as_str()))
}

fn sorted_intersection(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Max Jaccard similarity of the email's recipient set to any employee-sent
/// recipient set of its org from the preceding 30 days; 0 with no history.
pub fn recipient_likelihood(email: &Email, index: &CorpusIndex) -> f64 {
    // Prefer the index's interned set; fall back to interning by lookup for
    // emails that are not part of the corpus.
    let owned: Vec<u32>;
    let mut unknown = 0usize;
    let ids: &[u32] = match index.position(&email.id) {
        Some(idx) => index.recipient_ids(idx),
        None => {
            let mut v: Vec<u32> = Vec::new();
            for addr in email.recipient_set() {
                match index.intern_lookup(&addr) {
                    Some(id) => v.push(id),
                    None => unknown += 1,
                }
            }
            v.sort_unstable();
            v.dedup();
            owned = v;
            &owned
        }
    };
    let size_a = ids.len() + unknown;
    if size_a == 0 {
        return 0.0;
    }
    let mut best = 0.0f64;
    for set in index.history_recipient_ids(&email.org_id, email.sent_at) {
        if set.is_empty() {
            continue;
        }
        // Jaccard is bounded by the size ratio; skip sets that cannot beat
        // the current best.
        let bound = size_a.min(set.len()) as f64 / size_a.max(set.len()) as f64;
        if bound <= best {
            continue;
        }
        let inter = sorted_intersection(ids, set);
        let union = size_a + set.len() - inter;
        let j = inter as f64 / union as f64;
        if j > best {
            best = j;
        }
    }
    best
}

/// Immutable shared context for feature extraction.
pub struct FeatureContext<'a> {
    pub index: &'a CorpusIndex,
    pub org: &'a OrgConfig,
    pub ranking: &'a DomainRanking,
    pub lists: &'a SpecialDomainLists,
    pub keywords: &'a KeywordList,
    pub resolver_map: &'a ShortlinkMap,
}

/// Extract the full feature vector, or `SkipBenign` when the email has no
/// candidate URLs.
pub fn extract_features(email: &Email, ctx: &FeatureContext<'_>) -> Extraction {
    extract_features_audited(email, ctx).0
}

/// As [`extract_features`], also reporting the latest history timestamp the
/// extraction read (for leakage audits).
pub fn extract_features_audited(
    email: &Email,
    ctx: &FeatureContext<'_>,
) -> (Extraction, Option<i64>) {
    let Some(global) = urlrep::global_url_reputation(
        email,
        &ctx.org.verified_domains,
        ctx.ranking,
        ctx.lists,
        ctx.resolver_map,
    ) else {
        return (Extraction::SkipBenign, None);
    };
    let mut max_read = ctx.index.history_last_ts(&email.org_id, email.sent_at);
    let candidates = urlrep::candidate_urls(&email.body_html, &ctx.org.verified_domains);
    let mut local: Option<u32> = None;
    for url in &candidates {
        let (days, last) =
            ctx.index
                .fqdn_presence_days_with_last(&email.org_id, &url.fqdn, email.sent_at);
        local = Some(local.map_or(days, |d| d.min(days)));
        if let Some(t) = last {
            max_read = Some(max_read.map_or(t, |m| m.max(t)));
        }
    }
    let fv = FeatureVector {
        num_recipients: num_recipients(email),
        recipient_likelihood: recipient_likelihood(email, ctx.index),
        phishy_keyword: has_phishy_keyword(email, ctx.keywords),
        global_url_rep: global,
        local_url_rep: local.unwrap_or(0),
    };
    (Extraction::Vector(fv), max_read)
}

/// Convenience context bundle owning its pieces, for call sites that load
/// everything from files.
#[derive(Debug)]
pub struct DetectorContext {
    pub ranking: DomainRanking,
    pub lists: SpecialDomainLists,
    pub keywords: KeywordList,
    pub resolver_map: ShortlinkMap,
}

impl DetectorContext {
    pub fn feature_context<'a>(
        &'a self,
        index: &'a CorpusIndex,
        org: &'a OrgConfig,
    ) -> FeatureContext<'a> {
        FeatureContext {
            index,
            org,
            ranking: &self.ranking,
            lists: &self.lists,
            keywords: &self.keywords,
            resolver_map: &self.resolver_map,
        }
    }
}

/// Verified-domain set of an email's org within an index (empty when the
/// org is unknown).
pub fn org_verified<'a>(index: &'a CorpusIndex, org_id: &str) -> BTreeSet<String> {
    index
        .org(org_id)
        .map(|o| o.verified_domains.clone())
        .unwrap_or_default()
}
