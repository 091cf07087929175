//! Registered-domain (eTLD+1) resolution against a public-suffix snapshot.
//!
//! The snapshot ships with the crate and follows the publicsuffix.org rule
//! format (exact rules, `*.` wildcards, `!` exceptions). Hosts whose TLD has
//! no rule fall back to the implicit `*` rule, which reduces to the
//! last-two-labels heuristic.

use std::collections::HashSet;
use std::sync::OnceLock;

#[derive(Debug, Default, Clone)]
pub struct PublicSuffixList {
    exact: HashSet<String>,
    wildcard: HashSet<String>,
    exception: HashSet<String>,
}

impl PublicSuffixList {
    pub fn parse(text: &str) -> Self {
        let mut list = Self::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("//") || line.starts_with('#') {
                continue;
            }
            let rule = line.to_ascii_lowercase();
            if let Some(rest) = rule.strip_prefix('!') {
                list.exception.insert(rest.to_string());
            } else if let Some(rest) = rule.strip_prefix("*.") {
                list.wildcard.insert(rest.to_string());
            } else {
                list.exact.insert(rule);
            }
        }
        list
    }

    /// The snapshot bundled with the crate.
    pub fn builtin() -> &'static Self {
        static BUILTIN: OnceLock<PublicSuffixList> = OnceLock::new();
        BUILTIN.get_or_init(|| Self::parse(include_str!("../data/public_suffix_list.dat")))
    }

    /// Number of labels in the public suffix of `host`, per the standard
    /// matching algorithm: the longest matching rule wins, exceptions beat
    /// wildcards, and the implicit `*` rule applies when nothing matches.
    fn suffix_labels(&self, labels: &[&str]) -> usize {
        let mut best = 1; // implicit "*"
        for start in 0..labels.len() {
            let cand = labels[start..].join(".");
            let len = labels.len() - start;
            if self.exception.contains(&cand) {
                // Exception rules prevail: suffix is the rule minus its
                // leftmost label.
                return len - 1;
            }
            if self.exact.contains(&cand) && len > best {
                best = len;
            }
            // "*.rule" covers one extra label to the left of the rule base.
            if self.wildcard.contains(&cand) && len + 1 > best {
                best = len + 1;
            }
        }
        best
    }

    /// The registered domain (public suffix plus one label) of a host name,
    /// lowercased. Returns None when the host itself is a public suffix or
    /// has no dot-separated structure to work with.
    pub fn registered_domain(&self, host: &str) -> Option<String> {
        let host = host.trim().trim_end_matches('.').to_ascii_lowercase();
        if host.is_empty() {
            return None;
        }
        // IP literals have no registrable structure; use them whole.
        if host.parse::<std::net::Ipv4Addr>().is_ok() || host.starts_with('[') {
            return Some(host);
        }
        let labels: Vec<&str> = host.split('.').collect();
        if labels.iter().any(|l| l.is_empty()) {
            return None;
        }
        let suffix = self.suffix_labels(&labels);
        if labels.len() <= suffix {
            return None;
        }
        Some(labels[labels.len() - suffix - 1..].join("."))
    }
}

/// Registered domain of a bare host using the bundled snapshot.
pub fn registered_domain_of_host(host: &str) -> Option<String> {
    PublicSuffixList::builtin().registered_domain(host)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_com() {
        assert_eq!(
            registered_domain_of_host("example.com").as_deref(),
            Some("example.com")
        );
        assert_eq!(
            registered_domain_of_host("www.example.com").as_deref(),
            Some("example.com")
        );
    }

    #[test]
    fn multi_label_suffix() {
        assert_eq!(
            registered_domain_of_host("a.b.example.co.uk").as_deref(),
            Some("example.co.uk")
        );
    }

    #[test]
    fn unknown_tld_falls_back_to_last_two_labels() {
        assert_eq!(
            registered_domain_of_host("mail.org7.example").as_deref(),
            Some("org7.example")
        );
    }

    #[test]
    fn suffix_itself_has_no_registered_domain() {
        assert_eq!(registered_domain_of_host("co.uk"), None);
        assert_eq!(registered_domain_of_host("com"), None);
    }

    #[test]
    fn wildcard_and_exception_rules() {
        // *.ck makes biz.ck a suffix; !www.ck carves out www.ck itself.
        assert_eq!(
            registered_domain_of_host("foo.biz.ck").as_deref(),
            Some("foo.biz.ck")
        );
        assert_eq!(registered_domain_of_host("www.ck").as_deref(), Some("www.ck"));
    }

    #[test]
    fn case_and_trailing_dot_normalized() {
        assert_eq!(
            registered_domain_of_host("WWW.Example.COM.").as_deref(),
            Some("example.com")
        );
    }

    #[test]
    fn ip_hosts_pass_through() {
        assert_eq!(
            registered_domain_of_host("192.168.0.1").as_deref(),
            Some("192.168.0.1")
        );
    }
}
