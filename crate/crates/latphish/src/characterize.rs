//! Attacker characterization over a labeled attack corpus: success
//! attribution between hijacked accounts, recipient-targeting strategy
//! classification, content analysis, temporal analysis, and detection of
//! interactive and stealthy attacker behavior.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::{DateTime, Datelike, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusIndex, Email, Folder, TailoringNaming, TailoringTopic};
use crate::error::{Error, Result};
use crate::psl;
use crate::textsim;
use crate::urlrep::{self, ExtractedUrl};

/// Recipient-targeting strategy of a hijacked account.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    AccountAgnostic,
    OrganizationWide,
    LateralOrganization,
    TargetedRecipient,
    Inconclusive,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Strategy::AccountAgnostic => "account-agnostic",
            Strategy::OrganizationWide => "organization-wide",
            Strategy::LateralOrganization => "lateral-organization",
            Strategy::TargetedRecipient => "targeted-recipient",
            Strategy::Inconclusive => "inconclusive",
        };
        f.write_str(s)
    }
}

/// Per-hijacked-account characterization results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtoProfile {
    pub account: String,
    pub org_id: String,
    pub phish_emails: Vec<String>,
    pub phish_recipients: BTreeSet<String>,
    pub recent_contacts: BTreeSet<String>,
    pub first_phish_at: DateTime<Utc>,
    pub strategy: Strategy,
    pub interactive: bool,
    pub stealthy: bool,
    pub successes: Vec<String>,
}

/// Evidence that one hijacked account's phish compromised another account.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessLink {
    pub attacker: String,
    pub victim: String,
    pub phish_a: String,
    pub phish_b: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply_b: Option<String>,
    pub via_3a: bool,
    pub via_3b: bool,
    pub via_4a: bool,
    pub via_4b: bool,
}

/// Thresholds and lexicons for the characterization heuristics.
#[derive(Debug, Clone)]
pub struct CharacterizeConfig {
    /// "Less than 1% of recipients in-org" bound.
    pub in_org_low: f64,
    /// Recent-contact overlap ceiling for account-agnostic attackers.
    pub overlap_agnostic: f64,
    /// Recent-contact overlap ceiling for organization-wide attackers.
    pub overlap_org_wide: f64,
    pub min_recipient_domains: usize,
    /// Recipient domains must exceed this multiple of recent-contact domains.
    pub domain_ratio: f64,
    pub in_org_half: f64,
    pub roster_coverage: f64,
    pub in_org_high: f64,
    /// Fraction of recent contacts that must receive phish for the
    /// targeted-recipient strategy.
    pub contacts_fraction: f64,
    /// Fraction of recipients in same-industry orgs for the
    /// lateral-organization strategy.
    pub industry_concentration: f64,
    pub freemail_domains: BTreeSet<String>,
    /// A victim reply containing none of these phrases is taken as evidence
    /// the victim fell for the attack.
    pub suspicion_lexicon: Vec<String>,
    pub stealth_delete_secs: i64,
    pub success_interarrival_secs: i64,
}

impl Default for CharacterizeConfig {
    fn default() -> Self {
        CharacterizeConfig {
            in_org_low: 0.01,
            overlap_agnostic: 0.17,
            overlap_org_wide: 0.11,
            min_recipient_domains: 10,
            domain_ratio: 2.0,
            in_org_half: 0.50,
            roster_coverage: 0.50,
            in_org_high: 0.95,
            contacts_fraction: 1.0 / 3.0,
            industry_concentration: 0.50,
            freemail_domains: crate::urlrep::SpecialDomainLists::default().freemail_domains,
            suspicion_lexicon: ["suspicious", "spam", "did you send", "phish"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            stealth_delete_secs: 30,
            success_interarrival_secs: 2 * 86_400,
        }
    }
}

fn registered_domain_of_address(addr: &str) -> Option<String> {
    addr.split_once('@')
        .and_then(|(_, d)| psl::registered_domain_of_host(d))
}

fn candidate_urls_of(email: &Email, index: &CorpusIndex) -> Vec<ExtractedUrl> {
    let verified = index
        .org(&email.org_id)
        .map(|o| o.verified_domains.clone())
        .unwrap_or_default();
    urlrep::candidate_urls(&email.body_html, &verified)
}

// ---------------------------------------------------------------------------
// Success attribution
// ---------------------------------------------------------------------------

/// True iff two URL paths follow the same structure: equal segment lists,
/// comparing segments exactly except pure-hex tokens of equal length (at
/// least four characters), which are treated as interchangeable randomness.
pub fn url_path_structure_match(url_a: &str, url_b: &str) -> bool {
    let segs = |u: &str| -> Option<Vec<String>> {
        let parsed = url::Url::parse(u).ok()?;
        Some(
            parsed
                .path_segments()?
                .filter(|s| !s.is_empty())
                .map(|s| s.to_string())
                .collect(),
        )
    };
    let (Some(a), Some(b)) = (segs(url_a), segs(url_b)) else {
        return false;
    };
    if a.is_empty() || b.is_empty() || a.len() != b.len() {
        return false;
    }
    a.iter().zip(&b).all(|(x, y)| {
        if x == y {
            return true;
        }
        let is_token = |s: &str| s.len() >= 4 && s.chars().all(|c| c.is_ascii_hexdigit());
        x.len() == y.len() && is_token(x) && is_token(y)
    })
}

fn reply_suggests_compromise(reply: &Email, cfg: &CharacterizeConfig) -> bool {
    let text = crate::html::collapse_ws(&crate::html::strip_tags(&reply.body_html).to_lowercase());
    !cfg.suspicion_lexicon.iter().any(|p| text.contains(p.as_str()))
}

/// Decide whether attacker A compromised victim B. All four criteria must
/// hold for some pair of their phishing emails:
/// 1. B received one of A's phish;
/// 2. B later sent phish of their own;
/// 3. (a) identical subjects or a shared phishing-URL FQDN, or (b) B replied
///    to A's phish, before B's own phish, in a way suggesting they fell for
///    it;
/// 4. (a) B's phish within two days of receiving A's, or (b) identical
///    messages or phishing-URL paths with near-identical structure.
pub fn attribute_success(
    ato_a: &AtoProfile,
    ato_b: &AtoProfile,
    index: &CorpusIndex,
    cfg: &CharacterizeConfig,
) -> Option<SuccessLink> {
    if ato_a.account == ato_b.account || ato_a.org_id != ato_b.org_id {
        return None;
    }
    for pa_id in &ato_a.phish_emails {
        let pa = index.get(pa_id)?;
        if !pa.recipient_set().contains(&ato_b.account) {
            continue;
        }
        let pa_urls = candidate_urls_of(pa, index);
        let pa_tokens = textsim::normalize_text(&pa.body_html);
        for pb_id in &ato_b.phish_emails {
            let pb = index.get(pb_id)?;
            if pb.sent_at <= pa.sent_at {
                continue;
            }
            let pb_urls = candidate_urls_of(pb, index);

            let same_subject = pa.subject == pb.subject;
            let shared_fqdn = pa_urls
                .iter()
                .any(|ua| pb_urls.iter().any(|ub| ua.fqdn == ub.fqdn));
            let via_3a = same_subject || shared_fqdn;

            let reply_b = index
                .thread(&pa.conversation_id)
                .into_iter()
                .find(|r| {
                    r.sender == ato_b.account
                        && r.sent_at > pa.sent_at
                        && r.sent_at < pb.sent_at
                        && r.recipient_set().contains(&ato_a.account)
                        && reply_suggests_compromise(r, cfg)
                })
                .map(|r| r.id.clone());
            let via_3b = reply_b.is_some();
            if !(via_3a || via_3b) {
                continue;
            }

            let via_4a =
                (pb.sent_at - pa.sent_at).num_seconds() <= cfg.success_interarrival_secs;
            let identical_message = !pa_tokens.is_empty()
                && pa_tokens == textsim::normalize_text(&pb.body_html);
            let path_match = pa_urls.iter().any(|ua| {
                pb_urls
                    .iter()
                    .any(|ub| url_path_structure_match(&ua.href, &ub.href))
            });
            let via_4b = identical_message || path_match;
            if !(via_4a || via_4b) {
                continue;
            }

            return Some(SuccessLink {
                attacker: ato_a.account.clone(),
                victim: ato_b.account.clone(),
                phish_a: pa_id.clone(),
                phish_b: pb_id.clone(),
                reply_b,
                via_3a,
                via_3b,
                via_4a,
                via_4b,
            });
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Targeting strategies
// ---------------------------------------------------------------------------

/// Assign a recipient-targeting strategy by applying the heuristics in fixed
/// order: account-agnostic (external spray), lateral-organization (same
/// industry), account-agnostic (many domains), organization-wide (roster
/// coverage, then near-total in-org share), targeted-recipient (recent
/// contacts), else inconclusive.
pub fn classify_targeting(
    ato: &AtoProfile,
    index: &CorpusIndex,
    cfg: &CharacterizeConfig,
) -> Result<Strategy> {
    let n_recip = ato.phish_recipients.len();
    if n_recip == 0 {
        return Err(Error::Other(format!(
            "ATO {} has no phish recipients",
            ato.account
        )));
    }
    let org = index
        .org(&ato.org_id)
        .ok_or_else(|| Error::Other(format!("unknown org {}", ato.org_id)))?;

    let recip_domains: BTreeSet<String> = ato
        .phish_recipients
        .iter()
        .filter_map(|a| registered_domain_of_address(a))
        .collect();
    let contact_domains: BTreeSet<String> = ato
        .recent_contacts
        .iter()
        .filter_map(|a| registered_domain_of_address(a))
        .collect();
    let in_org = ato
        .phish_recipients
        .iter()
        .filter(|a| {
            registered_domain_of_address(a)
                .map(|d| org.verified_domains.contains(&d))
                .unwrap_or(false)
        })
        .count();
    let in_org_frac = in_org as f64 / n_recip as f64;
    let overlap = ato
        .phish_recipients
        .intersection(&ato.recent_contacts)
        .count() as f64
        / n_recip as f64;
    let freemail_only = !recip_domains.is_empty()
        && recip_domains.iter().all(|d| cfg.freemail_domains.contains(d));

    // Account-agnostic, first heuristic: external spray across many
    // organizations (or exclusively freemail) with little contact overlap.
    if in_org_frac < cfg.in_org_low
        && overlap < cfg.overlap_agnostic
        && (recip_domains.len() >= cfg.min_recipient_domains || freemail_only)
    {
        return Ok(Strategy::AccountAgnostic);
    }

    // Lateral-organization: almost no in-org recipients, but concentrated in
    // orgs of the same industry. Skipped without industry metadata.
    if in_org_frac < cfg.in_org_low {
        if let Some(industry) = &org.industry {
            let mut domain_industry: BTreeMap<&str, &str> = BTreeMap::new();
            for other in index.orgs().values() {
                if let Some(ind) = &other.industry {
                    for d in &other.verified_domains {
                        domain_industry.insert(d.as_str(), ind.as_str());
                    }
                }
            }
            let same_industry = ato
                .phish_recipients
                .iter()
                .filter(|a| match registered_domain_of_address(a) {
                    Some(d) => {
                        !org.verified_domains.contains(&d)
                            && domain_industry.get(d.as_str()) == Some(&industry.as_str())
                    }
                    None => false,
                })
                .count();
            if same_industry as f64 / n_recip as f64 >= cfg.industry_concentration {
                return Ok(Strategy::LateralOrganization);
            }
        }
    }

    // Account-agnostic, second heuristic: minority in-org and recipients
    // spread over twice as many domains as the recent contacts.
    if in_org_frac < cfg.in_org_half
        && recip_domains.len() as f64 > cfg.domain_ratio * contact_domains.len() as f64
        && overlap < cfg.overlap_agnostic
    {
        return Ok(Strategy::AccountAgnostic);
    }

    // Organization-wide, first heuristic: majority in-org and a majority of
    // the month's roster contacted.
    let roster = index.employee_roster(
        &ato.org_id,
        ato.first_phish_at.year(),
        ato.first_phish_at.month(),
    );
    if !roster.is_empty() {
        let covered = ato.phish_recipients.intersection(&roster).count() as f64
            / roster.len() as f64;
        if in_org_frac >= cfg.in_org_half
            && covered >= cfg.roster_coverage
            && overlap < cfg.overlap_org_wide
        {
            return Ok(Strategy::OrganizationWide);
        }
    }

    // Organization-wide, second heuristic: nearly all recipients in-org.
    if in_org_frac > cfg.in_org_high && overlap < cfg.overlap_org_wide {
        return Ok(Strategy::OrganizationWide);
    }

    // Targeted-recipient: a third or more of the recent contacts phished.
    if !ato.recent_contacts.is_empty() {
        let contacted = ato
            .recent_contacts
            .intersection(&ato.phish_recipients)
            .count() as f64
            / ato.recent_contacts.len() as f64;
        if contacted >= cfg.contacts_fraction {
            return Ok(Strategy::TargetedRecipient);
        }
    }

    Ok(Strategy::Inconclusive)
}

// ---------------------------------------------------------------------------
// Conversion, timing, sophistication
// ---------------------------------------------------------------------------

/// Per-ATO employees-contacted-per-compromise for successful attackers,
/// plus the median across them.
pub fn conversion_stats(
    profiles: &[AtoProfile],
    index: &CorpusIndex,
) -> (Vec<(String, f64)>, Option<f64>) {
    let mut rates = Vec::new();
    for p in profiles {
        if p.successes.is_empty() {
            continue;
        }
        let Some(org) = index.org(&p.org_id) else {
            continue;
        };
        let in_org = p
            .phish_recipients
            .iter()
            .filter(|a| {
                registered_domain_of_address(a)
                    .map(|d| org.verified_domains.contains(&d))
                    .unwrap_or(false)
            })
            .count();
        rates.push((p.account.clone(), in_org as f64 / p.successes.len() as f64));
    }
    let median = median_of(rates.iter().map(|(_, r)| *r));
    (rates, median)
}

fn median_of<I: Iterator<Item = f64>>(values: I) -> Option<f64> {
    let mut v: Vec<f64> = values.collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Hour-of-day percentile of an incident relative to the sending history of
/// its ATO in the 30 days before the ATO's first phish.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HourPercentile {
    Percentile(f64),
    /// The account sent nothing in the 30 days before its first phish.
    QuiescentAto,
}

/// Midrank percentile of the incident's hour-of-day within the ATO's
/// historical hour-of-day distribution: `100 * (c_less + c_equal/2) / n`.
pub fn hour_of_day_percentile(
    incident_first: DateTime<Utc>,
    ato_account: &str,
    ato_first_phish: DateTime<Utc>,
    index: &CorpusIndex,
) -> HourPercentile {
    let end = ato_first_phish.timestamp();
    let history = index.sender_emails_in(ato_account, end - crate::corpus::WINDOW_30D, end);
    if history.is_empty() {
        return HourPercentile::QuiescentAto;
    }
    let hour = incident_first.hour() as i64;
    let mut less = 0usize;
    let mut equal = 0usize;
    for &i in history {
        let h = index.emails()[i].sent_at.hour() as i64;
        if h < hour {
            less += 1;
        } else if h == hour {
            equal += 1;
        }
    }
    let n = history.len() as f64;
    HourPercentile::Percentile(100.0 * (less as f64 + equal as f64 / 2.0) / n)
}

/// Incident counts per weekday (index 0 = Monday), binned by first email.
pub fn day_of_week_histogram<I: IntoIterator<Item = DateTime<Utc>>>(firsts: I) -> [u64; 7] {
    let mut bins = [0u64; 7];
    for t in firsts {
        bins[t.weekday().num_days_from_monday() as usize] += 1;
    }
    bins
}

/// True iff, in any of the ATO's phish threads, a recipient reply is later
/// followed by another message from the ATO (a deceptive follow-up).
pub fn detect_interaction(ato: &AtoProfile, index: &CorpusIndex) -> bool {
    for phish_id in &ato.phish_emails {
        let Some(phish) = index.get(phish_id) else {
            continue;
        };
        let thread = index.thread(&phish.conversation_id);
        let mut reply_at: Option<DateTime<Utc>> = None;
        for msg in thread {
            if msg.sent_at <= phish.sent_at {
                continue;
            }
            if msg.sender != ato.account {
                if reply_at.is_none() {
                    reply_at = Some(msg.sent_at);
                }
            } else if let Some(r) = reply_at {
                if msg.sent_at > r {
                    return true;
                }
            }
        }
    }
    false
}

/// True iff any phish, reply-to-phish, or attacker follow-up in the ATO's
/// threads sits in the Trash folder and was deleted within the stealth
/// window of being sent.
pub fn detect_stealth(ato: &AtoProfile, index: &CorpusIndex, cfg: &CharacterizeConfig) -> bool {
    let fast_deleted = |e: &Email| -> bool {
        e.folder == Folder::Trash
            && e.deleted_at
                .map(|d| (d - e.sent_at).num_seconds() <= cfg.stealth_delete_secs)
                .unwrap_or(false)
    };
    for phish_id in &ato.phish_emails {
        let Some(phish) = index.get(phish_id) else {
            continue;
        };
        if fast_deleted(phish) {
            return true;
        }
        for msg in index.thread(&phish.conversation_id) {
            if msg.sent_at > phish.sent_at && fast_deleted(msg) {
                return true;
            }
        }
    }
    false
}

// ---------------------------------------------------------------------------
// Content analysis
// ---------------------------------------------------------------------------

/// Common-English dictionary used to filter incident words.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    words: HashSet<String>,
}

impl Dictionary {
    pub fn builtin() -> Self {
        Self::parse(include_str!("../data/english_words.txt"))
    }

    pub fn parse(text: &str) -> Self {
        Dictionary {
            words: text
                .lines()
                .map(|l| l.trim())
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| l.to_lowercase())
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut words = HashSet::new();
        for line in reader.lines() {
            let line = line?;
            let t = line.trim();
            if !t.is_empty() && !t.starts_with('#') {
                words.insert(t.to_lowercase());
            }
        }
        Ok(Dictionary { words })
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Count, for each dictionary word, how many incidents' representative
/// emails contain it. A word repeated within one incident counts once.
pub fn word_frequency<'a, I: IntoIterator<Item = &'a Email>>(
    representatives: I,
    dictionary: &Dictionary,
) -> BTreeMap<String, u64> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for email in representatives {
        let words: BTreeSet<String> = textsim::normalize_text(&email.body_html)
            .into_iter()
            .filter(|w| dictionary.contains(w))
            .collect();
        for w in words {
            *counts.entry(w).or_default() += 1;
        }
    }
    counts
}

/// 3x3 cross-tabulation of incident tailoring labels: rows are naming
/// levels (none, org, recipient), columns are topic levels (generic,
/// enterprise, targeted). Unlabeled incidents are counted separately.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TailoringTable {
    pub cells: [[u64; 3]; 3],
    pub unlabeled: u64,
}

fn topic_col(t: TailoringTopic) -> usize {
    match t {
        TailoringTopic::Generic => 0,
        TailoringTopic::Enterprise => 1,
        TailoringTopic::Targeted => 2,
    }
}

fn naming_row(n: TailoringNaming) -> usize {
    match n {
        TailoringNaming::None => 0,
        TailoringNaming::Org => 1,
        TailoringNaming::Recipient => 2,
    }
}

/// Tabulate tailoring labels of incident representatives.
pub fn tailoring_table<'a, I: IntoIterator<Item = &'a Email>>(representatives: I) -> TailoringTable {
    let mut table = TailoringTable::default();
    for email in representatives {
        match email.tailoring {
            Some(t) => table.cells[naming_row(t.naming)][topic_col(t.topic)] += 1,
            None => table.unlabeled += 1,
        }
    }
    table
}

// ---------------------------------------------------------------------------
// Report assembly
// ---------------------------------------------------------------------------

/// Full characterization output for a labeled attack corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CharacterizationReport {
    pub profiles: Vec<AtoProfile>,
    pub success_links: Vec<SuccessLink>,
    pub strategy_counts: BTreeMap<String, u64>,
    pub tailoring: TailoringTable,
    pub top_words: Vec<(String, u64)>,
    pub day_of_week: [u64; 7],
    pub hour_percentiles: Vec<f64>,
    pub quiescent_incidents: u64,
    pub interactive_atos: u64,
    pub stealthy_atos: u64,
    pub conversion_rates: Vec<(String, f64)>,
    pub median_conversion: Option<f64>,
}

/// Build profiles and the full report. The attack set is every email that
/// was user-reported or manually labeled phish, plus any extra email ids
/// (e.g. from an alert file).
pub fn build_report(
    index: &CorpusIndex,
    extra_phish_ids: &[String],
    dictionary: &Dictionary,
    cfg: &CharacterizeConfig,
) -> Result<CharacterizationReport> {
    let mut phish_ids: BTreeSet<&str> = BTreeSet::new();
    for e in index.emails() {
        if e.user_reported_phish || e.manual_label == Some(crate::corpus::ManualLabel::Phish) {
            phish_ids.insert(&e.id);
        }
    }
    for id in extra_phish_ids {
        if index.get(id).is_some() {
            phish_ids.insert(id);
        }
    }

    // Group by hijacked account.
    let mut by_account: BTreeMap<(String, String), Vec<&Email>> = BTreeMap::new();
    for id in &phish_ids {
        let e = index.get(id).expect("id checked above");
        by_account
            .entry((e.org_id.clone(), e.sender.clone()))
            .or_default()
            .push(e);
    }

    let mut profiles: Vec<AtoProfile> = Vec::new();
    for ((org_id, account), mut emails) in by_account {
        emails.sort_by(|a, b| (a.sent_at, &a.id).cmp(&(b.sent_at, &b.id)));
        let first = emails[0].sent_at;
        let mut recipients = BTreeSet::new();
        for e in &emails {
            recipients.extend(e.recipient_set());
        }
        let recent = index.recent_contacts(&account, first);
        let mut profile = AtoProfile {
            account,
            org_id,
            phish_emails: emails.iter().map(|e| e.id.clone()).collect(),
            phish_recipients: recipients,
            recent_contacts: recent,
            first_phish_at: first,
            strategy: Strategy::Inconclusive,
            interactive: false,
            stealthy: false,
            successes: Vec::new(),
        };
        profile.strategy = classify_targeting(&profile, index, cfg)?;
        profile.interactive = detect_interaction(&profile, index);
        profile.stealthy = detect_stealth(&profile, index, cfg);
        profiles.push(profile);
    }

    // Pairwise success attribution within each org.
    let mut links = Vec::new();
    for a in 0..profiles.len() {
        for b in 0..profiles.len() {
            if a == b {
                continue;
            }
            if let Some(link) = attribute_success(&profiles[a], &profiles[b], index, cfg) {
                links.push(link);
            }
        }
    }
    for link in &links {
        if let Some(p) = profiles.iter_mut().find(|p| p.account == link.attacker) {
            if !p.successes.contains(&link.victim) {
                p.successes.push(link.victim.clone());
            }
        }
    }

    // Incident-level views.
    let phish_emails: Vec<&Email> = phish_ids.iter().map(|id| index.get(id).unwrap()).collect();
    let incidents = crate::pipeline::dedup_incidents(phish_emails.iter().copied());
    let representatives: Vec<&Email> = incidents
        .iter()
        .map(|i| index.get(&i.email_ids[0]).unwrap())
        .collect();

    let word_counts = word_frequency(representatives.iter().copied(), dictionary);
    let mut top_words: Vec<(String, u64)> = word_counts.into_iter().collect();
    top_words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    top_words.truncate(10);

    let first_phish_of: BTreeMap<&str, DateTime<Utc>> = profiles
        .iter()
        .map(|p| (p.account.as_str(), p.first_phish_at))
        .collect();
    let mut hour_percentiles = Vec::new();
    let mut quiescent = 0u64;
    for inc in &incidents {
        let ato_first = first_phish_of
            .get(inc.key.sender.as_str())
            .copied()
            .unwrap_or(inc.first_sent_at);
        match hour_of_day_percentile(inc.first_sent_at, &inc.key.sender, ato_first, index) {
            HourPercentile::Percentile(p) => hour_percentiles.push(p),
            HourPercentile::QuiescentAto => quiescent += 1,
        }
    }

    let (conversion_rates, median_conversion) = conversion_stats(&profiles, index);
    let mut strategy_counts: BTreeMap<String, u64> = BTreeMap::new();
    for p in &profiles {
        *strategy_counts.entry(p.strategy.to_string()).or_default() += 1;
    }

    Ok(CharacterizationReport {
        day_of_week: day_of_week_histogram(incidents.iter().map(|i| i.first_sent_at)),
        tailoring: tailoring_table(representatives.iter().copied()),
        interactive_atos: profiles.iter().filter(|p| p.interactive).count() as u64,
        stealthy_atos: profiles.iter().filter(|p| p.stealthy).count() as u64,
        hour_percentiles,
        quiescent_incidents: quiescent,
        success_links: links,
        strategy_counts,
        top_words,
        conversion_rates,
        median_conversion,
        profiles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CorpusIndex, OrgConfig};
    use crate::fixtures::{email, ts};

    fn cfg() -> CharacterizeConfig {
        CharacterizeConfig::default()
    }

    fn profile(account: &str, org: &str, recipients: &[String], contacts: &[String]) -> AtoProfile {
        AtoProfile {
            account: account.to_string(),
            org_id: org.to_string(),
            phish_emails: Vec::new(),
            phish_recipients: recipients.iter().cloned().collect(),
            recent_contacts: contacts.iter().cloned().collect(),
            first_phish_at: ts("2018-07-10T10:00:00Z"),
            strategy: Strategy::Inconclusive,
            interactive: false,
            stealthy: false,
            successes: Vec::new(),
        }
    }

    #[test]
    fn path_structure_matching() {
        assert!(url_path_structure_match(
            "http://x.com/z/office365/index.html",
            "http://y.com/z/office365/index.html"
        ));
        assert!(!url_path_structure_match("http://x.com/a/b", "http://y.com/a/b/c"));
        assert!(url_path_structure_match("http://x.com/doc/AB12", "http://y.com/doc/CD34"));
        assert!(!url_path_structure_match("http://x.com/doc/AB12", "http://y.com/doc/CD3456"));
        assert!(!url_path_structure_match("http://x.com/", "http://y.com/"));
    }

    fn org_with_employees(org_id: &str, domain: &str) -> OrgConfig {
        OrgConfig::new(org_id, &[domain])
    }

    /// Build a small corpus: ATO alice phishes bob (same subject), bob
    /// phishes a day later.
    fn chain_corpus() -> (CorpusIndex, AtoProfile, AtoProfile) {
        let org = org_with_employees("org1", "company.com");
        let mut pa = email(
            "pa", "org1", "alice@company.com",
            &["bob@company.com", "x@company.com"],
            "2018-07-02T10:00:00Z",
        );
        pa.subject = "Document shared".into();
        pa.body_html = r#"<a href="http://evil-host.net/doc/a1b2">View document</a>"#.into();
        let mut pb = email(
            "pb", "org1", "bob@company.com",
            &["y@company.com"],
            "2018-07-03T09:00:00Z",
        );
        pb.subject = "Document shared".into();
        pb.body_html = r#"<a href="http://evil-host.net/doc/c3d4">View document</a>"#.into();
        let index = CorpusIndex::build(vec![pa, pb], vec![org]);
        let mut ato_a = profile("alice@company.com", "org1", &[], &[]);
        ato_a.phish_emails = vec!["pa".into()];
        let mut ato_b = profile("bob@company.com", "org1", &[], &[]);
        ato_b.phish_emails = vec!["pb".into()];
        ato_b.first_phish_at = ts("2018-07-03T09:00:00Z");
        (index, ato_a, ato_b)
    }

    #[test]
    fn success_link_same_subject_next_day() {
        let (index, a, b) = chain_corpus();
        let link = attribute_success(&a, &b, &index, &cfg()).expect("link");
        assert!(link.via_3a);
        assert!(link.via_4a);
        assert_eq!(link.victim, "bob@company.com");
        // Reverse direction: alice never received bob's phish.
        assert!(attribute_success(&b, &a, &index, &cfg()).is_none());
    }

    #[test]
    fn success_requires_receipt() {
        let (index, a, _) = chain_corpus();
        let mut c = profile("carol@company.com", "org1", &[], &[]);
        c.phish_emails = vec!["pb".into()];
        // carol did not receive pa, and pb's sender is bob, so no link from
        // a to carol's profile even though the emails line up.
        assert!(attribute_success(&a, &c, &index, &cfg()).is_none());
    }

    #[test]
    fn success_link_via_path_structure_long_gap() {
        let org = org_with_employees("org1", "company.com");
        let mut pa = email("pa", "org1", "alice@company.com", &["bob@company.com"], "2018-07-02T10:00:00Z");
        pa.subject = "Invoice ready".into();
        pa.body_html = r#"<a href="http://first-host.net/z/office365/index.html">Sign in</a>"#.into();
        let mut pb = email("pb", "org1", "bob@company.com", &["y@company.com"], "2018-07-12T10:00:00Z");
        pb.subject = "Invoice ready".into();
        pb.body_html = r#"<a href="http://second-host.net/z/office365/index.html">Sign in</a>"#.into();
        let index = CorpusIndex::build(vec![pa, pb], vec![org]);
        let mut a = profile("alice@company.com", "org1", &[], &[]);
        a.phish_emails = vec!["pa".into()];
        let mut b = profile("bob@company.com", "org1", &[], &[]);
        b.phish_emails = vec!["pb".into()];
        let link = attribute_success(&a, &b, &index, &cfg()).expect("link");
        assert!(link.via_3a, "same subject");
        assert!(!link.via_4a, "ten days is outside the interarrival window");
        assert!(link.via_4b, "path structures match");
    }

    #[test]
    fn classify_account_agnostic() {
        // 200 external recipients across 15 domains, 2% contact overlap.
        let recipients: Vec<String> = (0..200)
            .map(|i| format!("user{i}@ext{}.com", i % 15))
            .collect();
        let mut contacts: Vec<String> = (0..46).map(|i| format!("c{i}@company.com")).collect();
        contacts.extend(recipients[..4].iter().cloned());
        let index = CorpusIndex::build(Vec::new(), vec![org_with_employees("org1", "company.com")]);
        let ato = profile("ato@company.com", "org1", &recipients, &contacts);
        assert_eq!(classify_targeting(&ato, &index, &cfg()).unwrap(), Strategy::AccountAgnostic);
    }

    #[test]
    fn classify_org_wide() {
        // 98% in-org recipients, 5% contact overlap.
        let mut recipients: Vec<String> = (0..98).map(|i| format!("emp{i}@company.com")).collect();
        recipients.push("out1@gmail.com".into());
        recipients.push("out2@gmail.com".into());
        let contacts: Vec<String> = (0..5).map(|i| format!("emp{i}@company.com")).collect();
        let index = CorpusIndex::build(Vec::new(), vec![org_with_employees("org1", "company.com")]);
        let ato = profile("ato@company.com", "org1", &recipients, &contacts);
        assert_eq!(classify_targeting(&ato, &index, &cfg()).unwrap(), Strategy::OrganizationWide);
    }

    #[test]
    fn classify_targeted_recipient() {
        // 40% of recent contacts phished; all in-org but only 10 recipients
        // so neither org-wide rule fires (overlap is 100%).
        let contacts: Vec<String> = (0..25).map(|i| format!("c{i}@company.com")).collect();
        let recipients: Vec<String> = (0..10).map(|i| format!("c{i}@company.com")).collect();
        let index = CorpusIndex::build(Vec::new(), vec![org_with_employees("org1", "company.com")]);
        let ato = profile("ato@company.com", "org1", &recipients, &contacts);
        assert_eq!(classify_targeting(&ato, &index, &cfg()).unwrap(), Strategy::TargetedRecipient);
    }

    #[test]
    fn classify_lateral_organization() {
        let mut org_a = org_with_employees("org1", "realty-one.com");
        org_a.industry = Some("real estate".into());
        let mut org_b = org_with_employees("org2", "realty-two.com");
        org_b.industry = Some("real estate".into());
        let index = CorpusIndex::build(Vec::new(), vec![org_a, org_b]);
        let recipients: Vec<String> = (0..40).map(|i| format!("agent{i}@realty-two.com")).collect();
        let ato = profile("ato@realty-one.com", "org1", &recipients, &[]);
        assert_eq!(
            classify_targeting(&ato, &index, &cfg()).unwrap(),
            Strategy::LateralOrganization
        );
    }

    #[test]
    fn classify_errors_on_empty_recipients() {
        let index = CorpusIndex::build(Vec::new(), vec![org_with_employees("org1", "company.com")]);
        let ato = profile("ato@company.com", "org1", &[], &[]);
        assert!(classify_targeting(&ato, &index, &cfg()).is_err());
    }

    #[test]
    fn conversion_examples() {
        let index = CorpusIndex::build(Vec::new(), vec![org_with_employees("org1", "company.com")]);
        let mut p1 = profile(
            "a@company.com", "org1",
            &(0..542).map(|i| format!("e{i}@company.com")).collect::<Vec<_>>(),
            &[],
        );
        p1.successes = vec!["v@company.com".into()];
        let mut p2 = profile(
            "b@company.com", "org1",
            &(0..52).map(|i| format!("f{i}@company.com")).collect::<Vec<_>>(),
            &[],
        );
        p2.successes = vec!["v1@company.com".into(), "v2@company.com".into()];
        let p3 = profile("c@company.com", "org1", &["x@company.com".into()], &[]);
        let (rates, median) = conversion_stats(&[p1, p2, p3], &index);
        assert_eq!(rates.len(), 2, "no-success ATOs are excluded");
        assert_eq!(rates[0].1, 542.0);
        assert_eq!(rates[1].1, 26.0);
        assert_eq!(median, Some((542.0 + 26.0) / 2.0));
    }

    #[test]
    fn hour_percentile_cases() {
        let org = org_with_employees("org1", "company.com");
        let mut emails = Vec::new();
        for (i, hour) in [9, 10, 11, 14, 16].iter().enumerate() {
            emails.push(email(
                &format!("h{i}"), "org1", "ato@company.com", &["x@company.com"],
                &format!("2018-06-20T{hour:02}:00:00Z"),
            ));
        }
        let index = CorpusIndex::build(emails, vec![org]);
        let first_phish = ts("2018-07-05T00:00:00Z");
        // Earlier than all history hours, no ties: percentile 0.
        match hour_of_day_percentile(ts("2018-07-05T03:00:00Z"), "ato@company.com", first_phish, &index) {
            HourPercentile::Percentile(p) => assert_eq!(p, 0.0),
            q => panic!("{q:?}"),
        }
        // Later than all history hours: percentile 100.
        match hour_of_day_percentile(ts("2018-07-05T22:00:00Z"), "ato@company.com", first_phish, &index) {
            HourPercentile::Percentile(p) => assert_eq!(p, 100.0),
            q => panic!("{q:?}"),
        }
        // Quiescent account.
        assert_eq!(
            hour_of_day_percentile(ts("2018-07-05T10:00:00Z"), "ghost@company.com", first_phish, &index),
            HourPercentile::QuiescentAto
        );
    }

    #[test]
    fn hour_percentile_all_ties_is_fifty() {
        let org = org_with_employees("org1", "company.com");
        let emails: Vec<Email> = (0..6)
            .map(|i| {
                email(
                    &format!("h{i}"), "org1", "ato@company.com", &["x@company.com"],
                    &format!("2018-06-{:02}T09:00:00Z", 10 + i),
                )
            })
            .collect();
        let index = CorpusIndex::build(emails, vec![org]);
        match hour_of_day_percentile(
            ts("2018-07-05T09:30:00Z"),
            "ato@company.com",
            ts("2018-07-05T00:00:00Z"),
            &index,
        ) {
            HourPercentile::Percentile(p) => assert_eq!(p, 50.0),
            q => panic!("{q:?}"),
        }
    }

    #[test]
    fn weekday_histogram() {
        // 2018-07-02 is a Monday.
        let all_monday: Vec<DateTime<Utc>> =
            (0..4).map(|_| ts("2018-07-02T09:00:00Z")).collect();
        assert_eq!(day_of_week_histogram(all_monday), [4, 0, 0, 0, 0, 0, 0]);
        assert_eq!(day_of_week_histogram(Vec::new()), [0; 7]);
    }

    #[test]
    fn interaction_detection() {
        let org = org_with_employees("org1", "company.com");
        let mut phish = email("p", "org1", "ato@company.com", &["v@company.com"], "2018-07-02T10:00:00Z");
        phish.conversation_id = "c1".into();
        let mut reply = email("r", "org1", "v@company.com", &["ato@company.com"], "2018-07-02T11:00:00Z");
        reply.conversation_id = "c1".into();
        reply.body_html = "Is this really from you?".into();
        let mut follow = email("f", "org1", "ato@company.com", &["v@company.com"], "2018-07-02T12:00:00Z");
        follow.conversation_id = "c1".into();
        follow.body_html = "Yes I sent it to you".into();

        let mut ato = profile("ato@company.com", "org1", &[], &[]);
        ato.phish_emails = vec!["p".into()];

        let full = CorpusIndex::build(vec![phish.clone(), reply.clone(), follow], vec![org.clone()]);
        assert!(detect_interaction(&ato, &full));

        let no_follow = CorpusIndex::build(vec![phish.clone(), reply], vec![org.clone()]);
        assert!(!detect_interaction(&ato, &no_follow));

        let no_reply = CorpusIndex::build(vec![phish], vec![org]);
        assert!(!detect_interaction(&ato, &no_reply));
    }

    #[test]
    fn stealth_detection() {
        let org = org_with_employees("org1", "company.com");
        let make = |deleted_after: Option<i64>| -> CorpusIndex {
            let mut phish = email("p", "org1", "ato@company.com", &["v@company.com"], "2018-07-02T10:00:00Z");
            phish.conversation_id = "c1".into();
            if let Some(secs) = deleted_after {
                phish.folder = Folder::Trash;
                phish.deleted_at = Some(phish.sent_at + chrono::Duration::seconds(secs));
            }
            CorpusIndex::build(vec![phish], vec![org.clone()])
        };
        let mut ato = profile("ato@company.com", "org1", &[], &[]);
        ato.phish_emails = vec!["p".into()];
        assert!(detect_stealth(&ato, &make(Some(10)), &cfg()));
        // Slow deletion is remediation, not stealth.
        assert!(!detect_stealth(&ato, &make(Some(300)), &cfg()));
        assert!(!detect_stealth(&ato, &make(None), &cfg()));
    }

    #[test]
    fn word_frequency_counts_incidents_not_occurrences() {
        let dict = Dictionary::parse("document\nview\naccount\n");
        let mut e1 = email("e1", "org1", "a@x.com", &["b@x.com"], "2018-07-02T10:00:00Z");
        e1.body_html = "document document document document document view".into();
        let mut e2 = email("e2", "org1", "c@x.com", &["b@x.com"], "2018-07-02T11:00:00Z");
        e2.body_html = "please see the document".into();
        let counts = word_frequency([&e1, &e2], &dict);
        assert_eq!(counts.get("document"), Some(&2));
        assert_eq!(counts.get("view"), Some(&1));
        assert_eq!(counts.get("account"), None);
        // Non-dictionary words are discarded.
        assert_eq!(counts.get("please"), None);
    }

    #[test]
    fn tailoring_cross_tabulation() {
        use crate::corpus::Tailoring;
        let mut reps = Vec::new();
        for i in 0..90 {
            let mut e = email(&format!("g{i}"), "org1", "a@x.com", &["b@x.com"], "2018-07-02T10:00:00Z");
            e.tailoring = Some(Tailoring {
                topic: TailoringTopic::Generic,
                naming: TailoringNaming::None,
            });
            reps.push(e);
        }
        let mut t = email("t", "org1", "a@x.com", &["b@x.com"], "2018-07-02T10:00:00Z");
        t.tailoring = Some(Tailoring {
            topic: TailoringTopic::Targeted,
            naming: TailoringNaming::Org,
        });
        reps.push(t);
        reps.push(email("u", "org1", "a@x.com", &["b@x.com"], "2018-07-02T10:00:00Z"));
        let table = tailoring_table(reps.iter());
        assert_eq!(table.cells[0][0], 90);
        assert_eq!(table.cells[1][2], 1);
        assert_eq!(table.unlabeled, 1);
        let empty = tailoring_table(Vec::<&Email>::new());
        assert_eq!(empty.cells, [[0; 3]; 3]);
    }
}
