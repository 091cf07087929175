//! Text normalization, 3-gram Jaccard similarity, and the two auxiliary
//! subdetectors: fuzzy matching against known phishing text, and template
//! matching against popular service-mail texts mined from a month of
//! corpus traffic.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusIndex, Email};
use crate::error::{Error, Result};
use crate::html;
use crate::urlrep::{
    self, DomainRanking, ShortlinkMap, SpecialDomainLists, POPULAR_RANK_CUTOFF,
};

/// Line prefixes that mark the start of a signature block. Everything from
/// the last line starting with one of these cues to the end of the body is
/// dropped during normalization.
pub const DEFAULT_SIGNOFF_CUES: &[&str] = &["regards", "thanks", "best", "sent from"];

/// Set of 3-token shingles from normalized body text. Bodies with fewer than
/// three tokens contribute a single shingle of all their tokens, so short
/// lures still compare.
pub type TrigramSet = HashSet<String>;

/// Strip HTML, drop the trailing signature block, lowercase, remove
/// punctuation, and split into tokens.
pub fn normalize_text(body_html: &str) -> Vec<String> {
    normalize_text_with_cues(body_html, DEFAULT_SIGNOFF_CUES)
}

pub fn normalize_text_with_cues(body_html: &str, signoff_cues: &[&str]) -> Vec<String> {
    let text = html::strip_tags(body_html);
    let lines: Vec<&str> = text.lines().collect();
    let cut = lines
        .iter()
        .rposition(|line| {
            let lower = line.trim().to_lowercase();
            !lower.is_empty() && signoff_cues.iter().any(|cue| lower.starts_with(cue))
        })
        .unwrap_or(lines.len());
    let kept = lines[..cut].join("\n");
    kept.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_string())
        .collect()
}

/// All consecutive 3-token shingles of a token list.
pub fn trigrams(tokens: &[String]) -> TrigramSet {
    let mut set = TrigramSet::new();
    if tokens.is_empty() {
        return set;
    }
    if tokens.len() < 3 {
        set.insert(tokens.join(" "));
        return set;
    }
    for w in tokens.windows(3) {
        set.insert(w.join(" "));
    }
    set
}

/// Trigram set of a body, via full normalization.
pub fn body_trigrams(body_html: &str) -> TrigramSet {
    trigrams(&normalize_text(body_html))
}

/// Jaccard similarity |a ∩ b| / |a ∪ b|; defined as 0 when both sets are
/// empty.
pub fn jaccard(a: &TrigramSet, b: &TrigramSet) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let inter = small.iter().filter(|x| large.contains(*x)).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Highest Jaccard similarity between an email's trigrams and any known
/// phishing email's trigrams; 0 when the known set is empty. Callers are
/// responsible for restricting `known_phish` to emails sent at least 24
/// hours before the email under test.
pub fn fuzzy_phish_score(email_trigrams: &TrigramSet, known_phish: &[TrigramSet]) -> f64 {
    known_phish
        .iter()
        .map(|k| jaccard(email_trigrams, k))
        .fold(0.0, f64::max)
}

/// Similarity threshold shared by the fuzzy and template subdetectors.
pub const SIMILARITY_THRESHOLD: f64 = 0.5;

/// Fuzzy phish subdetector: fires iff the email has at least one candidate
/// URL, its text is at least 50% similar to a known phish, and its global
/// URL reputation is outside the top 100,000 domains. Emails with no URLs
/// are classified benign.
pub fn fuzzy_detect(
    email: &Email,
    known_phish: &[TrigramSet],
    verified_domains: &BTreeSet<String>,
    ranking: &DomainRanking,
    lists: &SpecialDomainLists,
    resolver_map: &ShortlinkMap,
) -> bool {
    let Some(global) = urlrep::global_url_reputation(email, verified_domains, ranking, lists, resolver_map)
    else {
        return false;
    };
    if global <= POPULAR_RANK_CUTOFF {
        return false;
    }
    fuzzy_phish_score(&body_trigrams(&email.body_html), known_phish) >= SIMILARITY_THRESHOLD
}

// ---------------------------------------------------------------------------
// Template mining
// ---------------------------------------------------------------------------

/// A popular text mined from a month of traffic, keyed by sender registered
/// domain and the alphabetically ordered set of registered URL domains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub sender_domain: String,
    pub domain_group: Vec<String>,
    pub representative_email_id: String,
    pub tokens: Vec<String>,
}

impl Template {
    pub fn trigrams(&self) -> TrigramSet {
        trigrams(&self.tokens)
    }
}

/// Highest Jaccard similarity between an email's trigrams and any template's
/// trigrams; 0 when there are no templates.
pub fn template_similarity_score(email_trigrams: &TrigramSet, templates: &[TrigramSet]) -> f64 {
    templates
        .iter()
        .map(|t| jaccard(email_trigrams, t))
        .fold(0.0, f64::max)
}

/// Knobs for template mining; defaults follow the popularity requirements
/// of the detector (50 emails per org for at least 10% of orgs, domains in
/// the top 100,000, no freemail senders).
#[derive(Debug, Clone)]
pub struct TemplateMiningConfig {
    pub min_emails_per_org: usize,
    pub min_org_fraction: f64,
    pub rank_cutoff: u64,
}

impl Default for TemplateMiningConfig {
    fn default() -> Self {
        TemplateMiningConfig {
            min_emails_per_org: 50,
            min_org_fraction: 0.10,
            rank_cutoff: POPULAR_RANK_CUTOFF,
        }
    }
}

/// Mine templates from all corpus emails in `[start, end)` (one calendar
/// month in the standard pipeline). Groups are keyed by (sender registered
/// domain, domain group); a group survives if the sender domain and every
/// group domain rank within the cutoff, the sender is not a freemail
/// provider, and enough orgs each contribute enough emails. The group's
/// representative is the email maximizing summed pairwise trigram Jaccard,
/// ties broken by smallest email id.
pub fn mine_templates(
    index: &CorpusIndex,
    start: DateTime<Utc>,
    end: DateTime<Utc>,
    ranking: &DomainRanking,
    lists: &SpecialDomainLists,
    config: &TemplateMiningConfig,
) -> Vec<Template> {
    type Key = (String, Vec<String>);
    let mut groups: BTreeMap<Key, Vec<usize>> = BTreeMap::new();
    let mut orgs_in_slice: BTreeSet<&str> = BTreeSet::new();

    for idx in index.emails_in(start, end) {
        let email = &index.emails()[idx];
        orgs_in_slice.insert(&email.org_id);
        let Some(sender_domain) = email
            .sender_domain()
            .and_then(crate::psl::registered_domain_of_host)
        else {
            continue;
        };
        let mut domain_group: Vec<String> = urlrep::extract_urls(&email.body_html)
            .into_iter()
            .map(|u| u.registered_domain)
            .collect();
        domain_group.sort();
        domain_group.dedup();
        groups.entry((sender_domain, domain_group)).or_default().push(idx);
    }

    let min_orgs = (config.min_org_fraction * orgs_in_slice.len() as f64).max(1.0);
    let mut templates = Vec::new();
    for ((sender_domain, domain_group), members) in groups {
        if lists.freemail_domains.contains(&sender_domain) {
            continue;
        }
        if ranking.rank(&sender_domain) > config.rank_cutoff {
            continue;
        }
        if domain_group.iter().any(|d| ranking.rank(d) > config.rank_cutoff) {
            continue;
        }
        let mut per_org: BTreeMap<&str, usize> = BTreeMap::new();
        for &idx in &members {
            *per_org.entry(index.emails()[idx].org_id.as_str()).or_default() += 1;
        }
        let popular_orgs = per_org
            .values()
            .filter(|&&n| n >= config.min_emails_per_org)
            .count();
        if (popular_orgs as f64) < min_orgs {
            continue;
        }
        let member_trigrams: Vec<TrigramSet> = members
            .iter()
            .map(|&idx| body_trigrams(&index.emails()[idx].body_html))
            .collect();
        let mut best: Option<(usize, f64)> = None;
        for (i, &idx) in members.iter().enumerate() {
            let score: f64 = member_trigrams
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, t)| jaccard(&member_trigrams[i], t))
                .sum();
            let better = match best {
                None => true,
                Some((best_idx, best_score)) => {
                    score > best_score
                        || (score == best_score
                            && index.emails()[idx].id < index.emails()[best_idx].id)
                }
            };
            if better {
                best = Some((idx, score));
            }
        }
        let (rep_idx, _) = best.expect("group is non-empty");
        let rep = &index.emails()[rep_idx];
        templates.push(Template {
            sender_domain,
            domain_group,
            representative_email_id: rep.id.clone(),
            tokens: normalize_text(&rep.body_html),
        });
    }
    templates
}

/// Template subdetector: fires iff the email's text is at least 50% similar
/// to any template and its global URL reputation is outside the top 100,000.
pub fn template_detect(
    email: &Email,
    templates: &[Template],
    verified_domains: &BTreeSet<String>,
    ranking: &DomainRanking,
    lists: &SpecialDomainLists,
    resolver_map: &ShortlinkMap,
) -> bool {
    let Some(global) = urlrep::global_url_reputation(email, verified_domains, ranking, lists, resolver_map)
    else {
        return false;
    };
    if global <= POPULAR_RANK_CUTOFF {
        return false;
    }
    let t = body_trigrams(&email.body_html);
    templates
        .iter()
        .any(|tpl| jaccard(&t, &tpl.trigrams()) >= SIMILARITY_THRESHOLD)
}

/// Write templates as line-delimited records for audit and reuse.
pub fn write_templates<W: Write>(mut w: W, templates: &[Template]) -> Result<()> {
    for t in templates {
        writeln!(w, "{}", serde_json::to_string(t).expect("template serializes"))
            .map_err(Error::Io)?;
    }
    Ok(())
}

/// Load templates from a line-delimited store.
pub fn load_templates(path: &Path) -> Result<Vec<Template>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Template = serde_json::from_str(&line).map_err(|e| Error::Record {
            path: path.display().to_string(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        out.push(t);
    }
    Ok(out)
}
