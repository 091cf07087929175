//! URL extraction from email bodies and global/local URL reputation.
//!
//! The global reputation of an email is the worst (numerically highest)
//! domain ranking among its candidate URLs against a top-million list, with
//! unlisted domains assigned a default rank of 10 million. The local
//! reputation counts, per candidate URL, the days in the preceding month on
//! which the URL's FQDN appeared in the org's employee-sent mail, and takes
//! the minimum.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::corpus::{CorpusIndex, Email};
use crate::error::{Error, Result, UrlError};
use crate::html;
use crate::psl;

/// Rank assigned to domains absent from the ranking list, to unresolvable
/// shortlinks, and to content-hosting URLs.
pub const DEFAULT_RANK: u64 = 10_000_000;

/// Ranking cutoff used by the text-similarity subdetectors: a domain is
/// "popular" iff its rank is at most this value.
pub const POPULAR_RANK_CUTOFF: u64 = 100_000;

/// One hyperlink or bare URL extracted from an email body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedUrl {
    pub href: String,
    pub display_text: String,
    pub registered_domain: String,
    pub fqdn: String,
}

impl ExtractedUrl {
    /// Build from an href, tolerating scheme-less host-like values
    /// (`www.alice.com`). Returns None when no host can be determined.
    pub fn from_href(href: &str, display_text: &str) -> Option<ExtractedUrl> {
        let (fqdn, registered_domain) = host_of(href)?;
        Some(ExtractedUrl {
            href: href.to_string(),
            display_text: display_text.to_string(),
            registered_domain,
            fqdn,
        })
    }
}

fn parse_lenient(url: &str) -> Option<url::Url> {
    match url::Url::parse(url) {
        Ok(u) => Some(u),
        Err(url::ParseError::RelativeUrlWithoutBase) => {
            let looks_like_host = url
                .chars()
                .next()
                .map(|c| c.is_ascii_alphanumeric())
                .unwrap_or(false)
                && url.split('/').next().is_some_and(|h| h.contains('.'));
            if looks_like_host {
                url::Url::parse(&format!("http://{url}")).ok()
            } else {
                None
            }
        }
        Err(_) => None,
    }
}

fn host_of(url: &str) -> Option<(String, String)> {
    let parsed = parse_lenient(url)?;
    let host = parsed.host_str()?.to_ascii_lowercase();
    let registered = psl::registered_domain_of_host(&host)?;
    Some((host, registered))
}

/// Registered domain (eTLD+1) of a URL, against the bundled public-suffix
/// snapshot. Hostless or relative URLs signal the caller to skip the URL.
pub fn registered_domain(url: &str) -> std::result::Result<String, UrlError> {
    let parsed = parse_lenient(url).ok_or(UrlError::Unparseable)?;
    let host = parsed.host_str().ok_or(UrlError::NoHost)?;
    psl::registered_domain_of_host(host).ok_or(UrlError::NoHost)
}

/// Extract all URLs from a body: one entry per anchor element plus each bare
/// absolute URL in text, in order of appearance. URLs without a resolvable
/// host are skipped.
pub fn extract_urls(body_html: &str) -> Vec<ExtractedUrl> {
    html::scan_links(body_html)
        .into_iter()
        .filter_map(|l| ExtractedUrl::from_href(&l.href, &l.display_text))
        .collect()
}

fn normalize_for_display_match(s: &str) -> String {
    let mut t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    t.make_ascii_lowercase();
    for scheme in ["https://", "http://"] {
        if let Some(stripped) = t.strip_prefix(scheme) {
            t = stripped.to_string();
            break;
        }
    }
    if t.ends_with('/') {
        t.pop();
    }
    t
}

/// Drop URLs on the org's verified domains and URLs whose displayed text
/// matches the destination (scheme-insensitively, modulo one trailing '/').
pub fn filter_candidate_urls(
    urls: Vec<ExtractedUrl>,
    verified_domains: &BTreeSet<String>,
) -> Vec<ExtractedUrl> {
    urls.into_iter()
        .filter(|u| !verified_domains.contains(&u.registered_domain))
        .filter(|u| {
            normalize_for_display_match(&u.display_text) != normalize_for_display_match(&u.href)
        })
        .collect()
}

/// Candidate URLs of a body: extracted, then filtered against an org's
/// verified domains and the display-text rule.
pub fn candidate_urls(body_html: &str, verified_domains: &BTreeSet<String>) -> Vec<ExtractedUrl> {
    filter_candidate_urls(extract_urls(body_html), verified_domains)
}

// ---------------------------------------------------------------------------
// Rankings and domain lists
// ---------------------------------------------------------------------------

/// Top-million domain ranking snapshot (`rank,domain` lines).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DomainRanking {
    ranks: HashMap<String, u64>,
}

impl DomainRanking {
    pub fn from_pairs<I: IntoIterator<Item = (u64, String)>>(pairs: I) -> Self {
        let mut ranks = HashMap::new();
        for (rank, domain) in pairs {
            ranks.entry(domain.to_ascii_lowercase()).or_insert(rank);
        }
        DomainRanking { ranks }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut pairs = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (rank_s, domain) = trimmed.split_once(',').ok_or_else(|| Error::Record {
                path: path.display().to_string(),
                line: lineno + 1,
                message: "expected rank,domain".into(),
            })?;
            let rank: u64 = rank_s.trim().parse().map_err(|_| Error::Record {
                path: path.display().to_string(),
                line: lineno + 1,
                message: format!("invalid rank {rank_s:?}"),
            })?;
            if rank == 0 || rank > 1_000_000 {
                return Err(Error::Record {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    message: format!("rank {rank} outside [1, 1000000]"),
                });
            }
            pairs.push((rank, domain.trim().to_string()));
        }
        Ok(Self::from_pairs(pairs))
    }

    /// Rank of a registered domain, or the default for unlisted domains.
    pub fn rank(&self, registered_domain: &str) -> u64 {
        self.ranks
            .get(registered_domain)
            .copied()
            .unwrap_or(DEFAULT_RANK)
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }
}

/// Shortener, content-hosting, and freemail domain lists. Shorteners and
/// freemail providers match on registered domain; content hosts match at
/// FQDN level (entry equals the FQDN or is a parent of it).
#[derive(Debug, Clone, PartialEq)]
pub struct SpecialDomainLists {
    pub shortener_domains: BTreeSet<String>,
    pub content_hosting_domains: BTreeSet<String>,
    pub freemail_domains: BTreeSet<String>,
}

impl Default for SpecialDomainLists {
    fn default() -> Self {
        let set = |items: &[&str]| items.iter().map(|s| s.to_string()).collect();
        SpecialDomainLists {
            shortener_domains: set(&["bit.ly", "goo.gl", "tinyurl.com", "t.co", "ow.ly"]),
            content_hosting_domains: set(&[
                "drive.google.com",
                "docs.google.com",
                "sharepoint.com",
                "onedrive.live.com",
                "dropbox.com",
            ]),
            freemail_domains: set(&[
                "gmail.com",
                "aol.com",
                "comcast.net",
                "hotmail.com",
                "yahoo.com",
            ]),
        }
    }
}

/// Load a one-domain-per-line list file ('#' comments allowed).
pub fn load_domain_list(path: &Path) -> Result<BTreeSet<String>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = BTreeSet::new();
    for line in reader.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.insert(t.to_ascii_lowercase());
    }
    Ok(out)
}

impl SpecialDomainLists {
    pub fn is_shortener(&self, url: &ExtractedUrl) -> bool {
        self.shortener_domains.contains(&url.registered_domain)
    }

    pub fn is_content_host(&self, url: &ExtractedUrl) -> bool {
        self.content_hosting_domains.iter().any(|entry| {
            url.fqdn == *entry || url.fqdn.ends_with(&format!(".{entry}"))
        })
    }
}

/// Offline shortlink resolution map (`short_url<TAB>final_url` lines).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ShortlinkMap {
    map: HashMap<String, String>,
}

impl ShortlinkMap {
    pub fn from_pairs<I: IntoIterator<Item = (String, String)>>(pairs: I) -> Self {
        ShortlinkMap {
            map: pairs.into_iter().collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut map = HashMap::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let t = line.trim_end();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let (short, fin) = t.split_once('\t').ok_or_else(|| Error::Record {
                path: path.display().to_string(),
                line: lineno + 1,
                message: "expected short_url<TAB>final_url".into(),
            })?;
            map.insert(short.to_string(), fin.to_string());
        }
        Ok(ShortlinkMap { map })
    }

    pub fn get(&self, short_url: &str) -> Option<&str> {
        self.map.get(short_url).map(|s| s.as_str())
    }
}

/// Outcome of offline shortlink resolution.
#[derive(Debug, Clone, PartialEq)]
pub enum Resolution {
    Resolved(ExtractedUrl),
    Unresolved,
}

const MAX_RESOLVE_HOPS: usize = 5;

/// Recursively resolve a shortlink through the offline map, following up to
/// five hops. Missing entries, cycles, and hop-limit overruns all yield
/// `Unresolved`.
pub fn resolve_shortlink(
    url: &ExtractedUrl,
    resolver_map: &ShortlinkMap,
    lists: &SpecialDomainLists,
) -> Resolution {
    let mut current = url.clone();
    let mut visited = BTreeSet::new();
    for _ in 0..MAX_RESOLVE_HOPS {
        if !lists.is_shortener(&current) {
            return Resolution::Resolved(current);
        }
        if !visited.insert(current.href.clone()) {
            return Resolution::Unresolved;
        }
        let Some(next) = resolver_map.get(&current.href) else {
            return Resolution::Unresolved;
        };
        let Some(next_url) = ExtractedUrl::from_href(next, next) else {
            return Resolution::Unresolved;
        };
        current = next_url;
    }
    if lists.is_shortener(&current) {
        Resolution::Unresolved
    } else {
        Resolution::Resolved(current)
    }
}

/// Rank one candidate URL, applying the shortener and contentt-hosting rules.
fn rank_candidate(
    url: &ExtractedUrl,
    ranking: &DomainRanking,
    lists: &SpecialDomainLists,
    resolver_map: &ShortlinkMap,
) -> u64 {
    let effective = if lists.is_shortener(url) {
        match resolve_shortlink(url, resolver_map, lists) {
            Resolution::Resolved(u) => u,
            Resolution::Unresolved => return DEFAULT_RANK,
        }
    } else {
        url.clone()
    };
    if lists.is_content_host(&effective) {
        return DEFAULT_RANK;
    }
    ranking.rank(&effective.registered_domain)
}

/// Worst (highest) domain ranking among a body's candidate URLs, or None
/// when the body has no candidates.
pub fn global_url_reputation_of_body(
    body_html: &str,
    verified_domains: &BTreeSet<String>,
    ranking: &DomainRanking,
    lists: &SpecialDomainLists,
    resolver_map: &ShortlinkMap,
) -> Option<u64> {
    let candidates = candidate_urls(body_html, verified_domains);
    candidates
        .iter()
        .map(|u| rank_candidate(u, ranking, lists, resolver_map))
        .max()
}

/// Global URL reputation of an email against its organization's verified
/// domain list.
pub fn global_url_reputation(
    email: &Email,
    verified_domains: &BTreeSet<String>,
    ranking: &DomainRanking,
    lists: &SpecialDomainLists,
    resolver_map: &ShortlinkMap,
) -> Option<u64> {
    global_url_reputation_of_body(&email.body_html, verified_domains, ranking, lists, resolver_map)
}

/// Minimum, over an email's candidate URLs, of the count of days in the
/// preceding month on which the URL's FQDN appeared in employee-sent mail of
/// the email's org. None when there are no candidate URLs.
pub fn local_url_reputation(email: &Email, index: &CorpusIndex) -> Option<u32> {
    let verified = index
        .org(&email.org_id)
        .map(|o| &o.verified_domains)
        .cloned()
        .unwrap_or_default();
    let candidates = candidate_urls(&email.body_html, &verified);
    candidates
        .iter()
        .map(|u| index.fqdn_presence_days(&email.org_id, &u.fqdn, email.sent_at))
        .min()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CorpusIndex, OrgConfig};
    use crate::fixtures::email;

    fn verified(domains: &[&str]) -> BTreeSet<String> {
        domains.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn extract_anchor_and_bare() {
        let urls = extract_urls(
            r#"<a href="http://x.com/p">Click Here</a> see http://a.com/q"#,
        );
        assert_eq!(urls.len(), 2);
        assert_eq!(urls[0].href, "http://x.com/p");
        assert_eq!(urls[0].display_text, "Click Here");
        assert_eq!(urls[0].registered_domain, "x.com");
        assert_eq!(urls[1].display_text, "http://a.com/q");
        assert!(extract_urls("<p>no urls here</p>").is_empty());
    }

    #[test]
    fn registered_domain_examples() {
        assert_eq!(
            registered_domain("http://a.b.example.co.uk/x").unwrap(),
            "example.co.uk"
        );
        assert_eq!(registered_domain("http://example.com").unwrap(), "example.com");
        assert!(registered_domain("not a url").is_err());
    }

    #[test]
    fn filter_drops_display_match_and_verified() {
        let urls = vec![
            ExtractedUrl::from_href("www.alice.com", "www.alice.com").unwrap(),
            ExtractedUrl::from_href("http://evil.com/z", "Click Here").unwrap(),
            ExtractedUrl::from_href("http://company.com/x", "internal page").unwrap(),
        ];
        let kept = filter_candidate_urls(urls, &verified(&["company.com"]));
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].registered_domain, "evil.com");
    }

    #[test]
    fn display_match_is_scheme_insensitive() {
        let urls = vec![ExtractedUrl::from_href("http://x.com", "x.com/").unwrap()];
        assert!(filter_candidate_urls(urls, &verified(&[])).is_empty());
    }

    #[test]
    fn adding_verified_domain_only_removes_candidates() {
        let body = r#"<a href="http://a.com/1">one</a> <a href="http://b.com/2">two</a>"#;
        let before = candidate_urls(body, &verified(&[]));
        let after = candidate_urls(body, &verified(&["a.com"]));
        assert!(after.len() < before.len());
        for u in &after {
            assert!(before.contains(u));
        }
    }

    #[test]
    fn shortlink_resolution() {
        let lists = SpecialDomainLists::default();
        let map = ShortlinkMap::from_pairs(vec![
            ("http://bit.ly/a".to_string(), "http://dest.com/p".to_string()),
            ("http://bit.ly/self".to_string(), "http://bit.ly/self".to_string()),
        ]);
        let short = ExtractedUrl::from_href("http://bit.ly/a", "here").unwrap();
        match resolve_shortlink(&short, &map, &lists) {
            Resolution::Resolved(u) => assert_eq!(u.registered_domain, "dest.com"),
            r => panic!("expected resolved, got {r:?}"),
        }
        let missing = ExtractedUrl::from_href("http://bit.ly/b", "here").unwrap();
        assert_eq!(resolve_shortlink(&missing, &map, &lists), Resolution::Unresolved);
        let cyc = ExtractedUrl::from_href("http://bit.ly/self", "here").unwrap();
        assert_eq!(resolve_shortlink(&cyc, &map, &lists), Resolution::Unresolved);
    }

    #[test]
    fn global_reputation_takes_worst_rank() {
        let ranking = DomainRanking::from_pairs(vec![
            (50, "popular.com".to_string()),
            (900_000, "fringe.com".to_string()),
        ]);
        let lists = SpecialDomainLists::default();
        let map = ShortlinkMap::default();
        let body = r#"<a href="http://popular.com/a">a</a> <a href="http://fringe.com/b">b</a>"#;
        assert_eq!(
            global_url_reputation_of_body(body, &verified(&[]), &ranking, &lists, &map),
            Some(900_000)
        );
        let body = r#"<a href="http://unlisted-domain.net/x">login</a>"#;
        assert_eq!(
            global_url_reputation_of_body(body, &verified(&[]), &ranking, &lists, &map),
            Some(DEFAULT_RANK)
        );
        assert_eq!(
            global_url_reputation_of_body("no links", &verified(&[]), &ranking, &lists, &map),
            None
        );
    }

    #[test]
    fn content_hosts_rank_as_unlisted() {
        let ranking = DomainRanking::from_pairs(vec![(3, "google.com".to_string())]);
        let lists = SpecialDomainLists::default();
        let map = ShortlinkMap::default();
        let body = r#"<a href="https://drive.google.com/file/d/abc">open</a>"#;
        assert_eq!(
            global_url_reputation_of_body(body, &verified(&[]), &ranking, &lists, &map),
            Some(DEFAULT_RANK)
        );
        // Non-content-host subdomain of the same registered domain keeps its rank.
        let body = r#"<a href="https://www.google.com/search?q=x">open</a>"#;
        assert_eq!(
            global_url_reputation_of_body(body, &verified(&[]), &ranking, &lists, &map),
            Some(3)
        );
    }

    #[test]
    fn unresolved_shortener_ranks_as_unlisted() {
        let ranking = DomainRanking::from_pairs(vec![(20, "bit.ly".to_string())]);
        let lists = SpecialDomainLists::default();
        let map = ShortlinkMap::default();
        let body = r#"<a href="http://bit.ly/zzz">open</a>"#;
        assert_eq!(
            global_url_reputation_of_body(body, &verified(&[]), &ranking, &lists, &map),
            Some(DEFAULT_RANK)
        );
    }

    #[test]
    fn local_reputation_min_over_candidates() {
        let org = OrgConfig::new("org1", &["company.com"]);
        let mut history = Vec::new();
        // seen.com appears on 3 distinct days, twice on one of them;
        // other.com on 1 day.
        let stamps = [
            ("2018-04-02T09:00:00Z", "https://files.seen.com/a"),
            ("2018-04-02T15:00:00Z", "https://files.seen.com/b"),
            ("2018-04-05T09:00:00Z", "https://files.seen.com/c"),
            ("2018-04-09T09:00:00Z", "https://files.seen.com/d"),
            ("2018-04-11T09:00:00Z", "https://www.other.com/1"),
        ];
        for (i, (at, link)) in stamps.iter().enumerate() {
            let mut e = email(&format!("h{i}"), "org1", "a@company.com", &["b@company.com"], at);
            e.body_html = format!(r#"<a href="{link}">file</a>"#);
            history.push(e);
        }
        let mut probe = email("p", "org1", "a@company.com", &["b@company.com"], "2018-04-20T09:00:00Z");
        probe.body_html = r#"<a href="https://files.seen.com/z">x</a> <a href="https://www.other.com/z">y</a>"#.into();
        let mut unseen = email("q", "org1", "a@company.com", &["b@company.com"], "2018-04-20T10:00:00Z");
        unseen.body_html = r#"<a href="https://brand-new.net/z">x</a>"#.into();
        let mut all = history.clone();
        all.push(probe.clone());
        all.push(unseen.clone());
        let index = CorpusIndex::build(all, vec![org]);
        assert_eq!(local_url_reputation(&probe, &index), Some(1));
        assert_eq!(local_url_reputation(&unseen, &index), Some(0));
        let plain = email("r", "org1", "a@company.com", &["b@company.com"], "2018-04-20T11:00:00Z");
        assert_eq!(local_url_reputation(&plain, &index), None);
    }
}
