//! Corpus data model, line-delimited record parsing, and the immutable
//! index that serves every historical lookup in the toolkit.
//!
//! A corpus file holds one JSON email record per line; an org file holds one
//! JSON org record per line. All address comparisons are case-insensitive
//! (addresses are normalized to lowercase at load), timestamps are UTC with
//! second precision, and the 30-day windows used throughout are exact
//! half-open `[as_of - 30d, as_of)` intervals.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Datelike, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, RecordError, Result};
use crate::psl;

/// Exact length, in seconds, of the "preceding month" window.
pub const WINDOW_30D: i64 = 30 * 86_400;

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Folder {
    Inbox,
    SentItems,
    Trash,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManualLabel {
    Phish,
    Benign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailoringTopic {
    Generic,
    Enterprise,
    Targeted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailoringNaming {
    None,
    Org,
    Recipient,
}

/// Manual content-tailoring label: how specific the topic is, and whether
/// the message names the organization or recipient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tailoring {
    pub topic: TailoringTopic,
    pub naming: TailoringNaming,
}

/// One sent or received message with metadata, body, folder, thread id, and
/// ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Email {
    pub id: String,
    pub org_id: String,
    pub sender: String,
    pub to: Vec<String>,
    pub cc: Vec<String>,
    pub bcc: Vec<String>,
    pub subject: String,
    pub sent_at: DateTime<Utc>,
    pub body_html: String,
    pub folder: Folder,
    pub conversation_id: String,
    pub deleted_at: Option<DateTime<Utc>>,
    pub spf_pass: bool,
    pub dkim_pass: bool,
    pub user_reported_phish: bool,
    pub manual_label: Option<ManualLabel>,
    pub tailoring: Option<Tailoring>,
}

impl Email {
    /// Deduplicated, lowercased union of To, CC, and BCC.
    pub fn recipient_set(&self) -> BTreeSet<String> {
        self.to
            .iter()
            .chain(self.cc.iter())
            .chain(self.bcc.iter())
            .map(|a| a.to_ascii_lowercase())
            .collect()
    }

    /// Domain part of the sender address, if well-formed.
    pub fn sender_domain(&self) -> Option<&str> {
        self.sender.split_once('@').map(|(_, d)| d)
    }

    pub fn to_record(&self) -> EmailRecord {
        EmailRecord {
            id: self.id.clone(),
            org_id: self.org_id.clone(),
            sender: self.sender.clone(),
            to: self.to.clone(),
            cc: self.cc.clone(),
            bcc: self.bcc.clone(),
            subject: self.subject.clone(),
            sent_at: format_ts(self.sent_at),
            body_html: self.body_html.clone(),
            folder: self.folder,
            conversation_id: self.conversation_id.clone(),
            deleted_at: self.deleted_at.map(format_ts),
            spf_pass: self.spf_pass,
            dkim_pass: self.dkim_pass,
            user_reported_phish: self.user_reported_phish,
            manual_label: self.manual_label,
            tailoring_topic: self.tailoring.map(|t| t.topic),
            tailoring_naming: self.tailoring.map(|t| t.naming),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("email record serializes")
    }
}

/// Wire form of an email record, with the exact field names of the corpus
/// file format. Tailoring is carried as two optional fields that must be
/// present together.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmailRecord {
    pub id: String,
    pub org_id: String,
    pub sender: String,
    pub to: Vec<String>,
    pub cc: Vec<String>,
    pub bcc: Vec<String>,
    pub subject: String,
    pub sent_at: String,
    pub body_html: String,
    pub folder: Folder,
    pub conversation_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deleted_at: Option<String>,
    pub spf_pass: bool,
    pub dkim_pass: bool,
    pub user_reported_phish: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manual_label: Option<ManualLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tailoring_topic: Option<TailoringTopic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tailoring_naming: Option<TailoringNaming>,
}

impl EmailRecord {
    /// Validate and normalize into an [`Email`].
    pub fn into_email(self) -> std::result::Result<Email, String> {
        let sent_at = parse_ts(&self.sent_at)
            .ok_or_else(|| format!("field sent_at: invalid timestamp {:?}", self.sent_at))?;
        let deleted_at = match &self.deleted_at {
            None => None,
            Some(raw) => Some(
                parse_ts(raw)
                    .ok_or_else(|| format!("field deleted_at: invalid timestamp {raw:?}"))?,
            ),
        };
        if let Some(d) = deleted_at {
            if d < sent_at {
                return Err("field deleted_at: precedes sent_at".into());
            }
        }
        let sender = normalize_address(&self.sender)
            .ok_or_else(|| format!("field sender: malformed address {:?}", self.sender))?;
        let norm_list = |field: &str, list: &[String]| -> std::result::Result<Vec<String>, String> {
            list.iter()
                .map(|a| {
                    normalize_address(a)
                        .ok_or_else(|| format!("field {field}: malformed address {a:?}"))
                })
                .collect()
        };
        let to = norm_list("to", &self.to)?;
        let cc = norm_list("cc", &self.cc)?;
        let bcc = norm_list("bcc", &self.bcc)?;
        let tailoring = match (self.tailoring_topic, self.tailoring_naming) {
            (Some(topic), Some(naming)) => Some(Tailoring { topic, naming }),
            (None, None) => None,
            _ => {
                return Err(
                    "fields tailoring_topic/tailoring_naming: must be present together".into(),
                )
            }
        };
        let email = Email {
            id: self.id,
            org_id: self.org_id,
            sender,
            to,
            cc,
            bcc,
            subject: self.subject,
            sent_at,
            body_html: self.body_html,
            folder: self.folder,
            conversation_id: self.conversation_id,
            deleted_at,
            spf_pass: self.spf_pass,
            dkim_pass: self.dkim_pass,
            user_reported_phish: self.user_reported_phish,
            manual_label: self.manual_label,
            tailoring,
        };
        if email.id.is_empty() {
            return Err("field id: must be non-empty".into());
        }
        if email.folder == Folder::SentItems && email.recipient_set().is_empty() {
            return Err("fields to/cc/bcc: sent mail must have at least one recipient".into());
        }
        Ok(email)
    }
}

/// Lowercase, trim, and require exactly one '@' with non-empty sides.
pub fn normalize_address(raw: &str) -> Option<String> {
    let a = raw.trim().to_ascii_lowercase();
    let (local, domain) = a.split_once('@')?;
    if local.is_empty() || domain.is_empty() || domain.contains('@') {
        return None;
    }
    Some(a)
}

fn parse_ts(raw: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(raw)
        .ok()
        .map(|d| d.with_timezone(&Utc))
}

/// Second-precision RFC 3339 in UTC, the corpus wire format.
pub fn format_ts(dt: DateTime<Utc>) -> String {
    dt.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Per-organization configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrgConfig {
    pub org_id: String,
    pub verified_domains: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub industry: Option<String>,
}

impl OrgConfig {
    pub fn new(org_id: &str, domains: &[&str]) -> Self {
        OrgConfig {
            org_id: org_id.to_string(),
            verified_domains: domains.iter().map(|d| d.to_ascii_lowercase()).collect(),
            industry: None,
        }
    }
}

/// True iff the sender's registered domain is one of the organization's
/// verified domains.
pub fn is_employee_sent(email: &Email, org: &OrgConfig) -> bool {
    sender_registered_domain(email)
        .map(|d| org.verified_domains.contains(&d))
        .unwrap_or(false)
}

fn sender_registered_domain(email: &Email) -> Option<String> {
    email
        .sender_domain()
        .and_then(psl::registered_domain_of_host)
}

// ---------------------------------------------------------------------------
// Index
// ---------------------------------------------------------------------------

/// Immutable index over a corpus: emails sorted by time, per-sender and
/// per-org timelines, interned recipient sets, per-org URL-FQDN daily
/// presence, and thread maps. Safe for concurrent readers once built.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusIndex {
    emails: Vec<Email>,
    by_id: HashMap<String, usize>,
    orgs: BTreeMap<String, OrgConfig>,
    by_sender: HashMap<String, Vec<usize>>,
    org_emails: HashMap<String, Vec<usize>>,
    employee_sent: HashMap<String, Vec<usize>>,
    employee_sent_flags: Vec<bool>,
    recip_sets: Vec<Vec<u32>>,
    addr_names: Vec<String>,
    addr_ids: HashMap<String, u32>,
    fqdn_times: HashMap<String, HashMap<String, Vec<i64>>>,
    threads: HashMap<String, Vec<usize>>,
}

/// Result of loading a corpus file: the index over all accepted records,
/// plus line-numbered diagnostics for every rejected record.
#[derive(Debug)]
pub struct LoadOutcome {
    pub index: CorpusIndex,
    pub errors: Vec<RecordError>,
}

/// Load a line-delimited corpus file. Malformed records are rejected with
/// line-numbered diagnostics; a duplicate email id is fatal.
pub fn load_corpus(path: &Path, orgs: Vec<OrgConfig>) -> Result<LoadOutcome> {
    let file = std::fs::File::open(path).map_err(Error::Io)?;
    let reader = BufReader::new(file);
    let mut emails = Vec::new();
    let mut errors = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let org_ids: HashSet<&str> = orgs.iter().map(|o| o.org_id.as_str()).collect();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(Error::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EmailRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                errors.push(RecordError {
                    line: lineno,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let email = match record.into_email() {
            Ok(e) => e,
            Err(message) => {
                errors.push(RecordError {
                    line: lineno,
                    message,
                });
                continue;
            }
        };
        if seen.contains(&email.id) {
            return Err(Error::DuplicateId {
                id: email.id.clone(),
                line: lineno,
            });
        }
        if !org_ids.contains(email.org_id.as_str()) {
            errors.push(RecordError {
                line: lineno,
                message: format!("field org_id: unknown organization {:?}", email.org_id),
            });
            continue;
        }
        seen.insert(email.id.clone());
        emails.push(email);
    }
    Ok(LoadOutcome {
        index: CorpusIndex::build(emails, orgs),
        errors,
    })
}

/// Load a line-delimited org config file.
pub fn load_orgs(path: &Path) -> Result<Vec<OrgConfig>> {
    let file = std::fs::File::open(path).map_err(Error::Io)?;
    let reader = BufReader::new(file);
    let mut orgs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(Error::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        let mut org: OrgConfig = serde_json::from_str(&line).map_err(|e| Error::Record {
            path: path.display().to_string(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        if org.verified_domains.is_empty() {
            return Err(Error::Record {
                path: path.display().to_string(),
                line: lineno + 1,
                message: "verified_domains must be non-empty".into(),
            });
        }
        org.verified_domains = org
            .verified_domains
            .iter()
            .map(|d| d.to_ascii_lowercase())
            .collect();
        orgs.push(org);
    }
    Ok(orgs)
}

/// Write emails back out in the corpus file format.
pub fn write_corpus<W: Write>(mut w: W, emails: &[Email]) -> Result<()> {
    for e in emails {
        writeln!(w, "{}", e.to_json_line()).map_err(Error::Io)?;
    }
    Ok(())
}

impl CorpusIndex {
    pub fn build(mut emails: Vec<Email>, orgs: Vec<OrgConfig>) -> Self {
        emails.sort_by(|a, b| (a.sent_at, &a.id).cmp(&(b.sent_at, &b.id)));
        let orgs: BTreeMap<String, OrgConfig> =
            orgs.into_iter().map(|o| (o.org_id.clone(), o)).collect();

        let mut by_id = HashMap::with_capacity(emails.len());
        let mut by_sender: HashMap<String, Vec<usize>> = HashMap::new();
        let mut org_emails: HashMap<String, Vec<usize>> = HashMap::new();
        let mut employee_sent: HashMap<String, Vec<usize>> = HashMap::new();
        let mut employee_sent_flags = Vec::with_capacity(emails.len());
        let mut recip_sets = Vec::with_capacity(emails.len());
        let mut addr_names: Vec<String> = Vec::new();
        let mut addr_ids: HashMap<String, u32> = HashMap::new();
        let mut fqdn_times: HashMap<String, HashMap<String, Vec<i64>>> = HashMap::new();
        let mut threads: HashMap<String, Vec<usize>> = HashMap::new();

        let intern = |addr: &str, names: &mut Vec<String>, ids: &mut HashMap<String, u32>| {
            if let Some(&id) = ids.get(addr) {
                return id;
            }
            let id = names.len() as u32;
            names.push(addr.to_string());
            ids.insert(addr.to_string(), id);
            id
        };

        for (idx, email) in emails.iter().enumerate() {
            by_id.insert(email.id.clone(), idx);
            by_sender
                .entry(email.sender.clone())
                .or_default()
                .push(idx);
            org_emails
                .entry(email.org_id.clone())
                .or_default()
                .push(idx);
            threads
                .entry(email.conversation_id.clone())
                .or_default()
                .push(idx);

            let mut set: Vec<u32> = email
                .recipient_set()
                .iter()
                .map(|a| intern(a, &mut addr_names, &mut addr_ids))
                .collect();
            set.sort_unstable();
            set.dedup();
            recip_sets.push(set);

            let is_emp = orgs
                .get(&email.org_id)
                .map(|o| is_employee_sent(email, o))
                .unwrap_or(false);
            employee_sent_flags.push(is_emp);
            if is_emp {
                employee_sent
                    .entry(email.org_id.clone())
                    .or_default()
                    .push(idx);
                let ts = email.sent_at.timestamp();
                let org_map = fqdn_times.entry(email.org_id.clone()).or_default();
                for url in crate::urlrep::extract_urls(&email.body_html) {
                    org_map.entry(url.fqdn).or_default().push(ts);
                }
            }
        }
        for org_map in fqdn_times.values_mut() {
            for times in org_map.values_mut() {
                times.sort_unstable();
            }
        }

        CorpusIndex {
            emails,
            by_id,
            orgs,
            by_sender,
            org_emails,
            employee_sent,
            employee_sent_flags,
            recip_sets,
            addr_names,
            addr_ids,
            fqdn_times,
            threads,
        }
    }

    pub fn emails(&self) -> &[Email] {
        &self.emails
    }

    pub fn get(&self, id: &str) -> Option<&Email> {
        self.by_id.get(id).map(|&i| &self.emails[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn orgs(&self) -> &BTreeMap<String, OrgConfig> {
        &self.orgs
    }

    pub fn org(&self, org_id: &str) -> Option<&OrgConfig> {
        self.orgs.get(org_id)
    }

    pub fn is_employee_sent_at(&self, idx: usize) -> bool {
        self.employee_sent_flags[idx]
    }

    /// Interned recipient set of the email at `idx` (sorted ids).
    pub fn recipient_ids(&self, idx: usize) -> &[u32] {
        &self.recip_sets[idx]
    }

    pub fn address(&self, id: u32) -> &str {
        &self.addr_names[id as usize]
    }

    pub fn intern_lookup(&self, addr: &str) -> Option<u32> {
        self.addr_ids.get(addr).copied()
    }

    /// Index range of emails with `sent_at` in `[start, end)`. The email
    /// list is globally time-sorted, so the range is contiguous.
    pub fn emails_in(&self, start: DateTime<Utc>, end: DateTime<Utc>) -> std::ops::Range<usize> {
        let lo = self.emails.partition_point(|e| e.sent_at < start);
        let hi = self.emails.partition_point(|e| e.sent_at < end);
        lo..hi
    }

    fn window_slice<'a>(&self, list: &'a [usize], start: i64, end: i64) -> &'a [usize] {
        let lo = list.partition_point(|&i| self.emails[i].sent_at.timestamp() < start);
        let hi = list.partition_point(|&i| self.emails[i].sent_at.timestamp() < end);
        &list[lo..hi]
    }

    /// Employee-sent emails of an org with `sent_at` in `[start, end)`.
    pub fn employee_sent_in(&self, org_id: &str, start: DateTime<Utc>, end: DateTime<Utc>) -> &[usize] {
        match self.employee_sent.get(org_id) {
            Some(list) => self.window_slice(list, start.timestamp(), end.timestamp()),
            None => &[],
        }
    }

    /// All emails of an org with `sent_at` in `[start, end)`.
    pub fn org_emails_in(&self, org_id: &str, start: DateTime<Utc>, end: DateTime<Utc>) -> &[usize] {
        match self.org_emails.get(org_id) {
            Some(list) => self.window_slice(list, start.timestamp(), end.timestamp()),
            None => &[],
        }
    }

    /// Emails sent by `sender` with `sent_at` in `[start, end)`.
    pub fn sender_emails_in(&self, sender: &str, start: i64, end: i64) -> &[usize] {
        match self.by_sender.get(sender) {
            Some(list) => self.window_slice(list, start, end),
            None => &[],
        }
    }

    /// Addresses `sender` sent at least one email to in the 30 days before
    /// `as_of` (half-open window), excluding the sender itself.
    pub fn recent_contacts(&self, sender: &str, as_of: DateTime<Utc>) -> BTreeSet<String> {
        let end = as_of.timestamp();
        let mut out = BTreeSet::new();
        for &idx in self.sender_emails_in(sender, end - WINDOW_30D, end) {
            for &rid in &self.recip_sets[idx] {
                let addr = self.address(rid);
                if addr != sender {
                    out.insert(addr.to_string());
                }
            }
        }
        out
    }

    /// Recipient sets of all employee-sent emails of `org_id` in the 30 days
    /// before `as_of`, as interned id slices in time order.
    pub fn history_recipient_ids(&self, org_id: &str, as_of: DateTime<Utc>) -> Vec<&[u32]> {
        let end = as_of;
        let start = as_of - chrono::Duration::seconds(WINDOW_30D);
        self.employee_sent_in(org_id, start, end)
            .iter()
            .map(|&i| self.recip_sets[i].as_slice())
            .collect()
    }

    /// Recipient sets of all employee-sent emails of `org_id` in the 30 days
    /// before `as_of`, as address sets.
    pub fn historical_recipient_sets(
        &self,
        org_id: &str,
        as_of: DateTime<Utc>,
    ) -> Vec<BTreeSet<String>> {
        self.history_recipient_ids(org_id, as_of)
            .into_iter()
            .map(|ids| ids.iter().map(|&r| self.address(r).to_string()).collect())
            .collect()
    }

    /// All addresses with a verified-domain registered domain appearing as
    /// sender or recipient in the org's mail during the given calendar month.
    pub fn employee_roster(&self, org_id: &str, year: i32, month: u32) -> BTreeSet<String> {
        let Some(org) = self.orgs.get(org_id) else {
            return BTreeSet::new();
        };
        let start = Utc.with_ymd_and_hms(year, month, 1, 0, 0, 0).unwrap();
        let (ny, nm) = if month == 12 { (year + 1, 1) } else { (year, month + 1) };
        let end = Utc.with_ymd_and_hms(ny, nm, 1, 0, 0, 0).unwrap();
        let mut out = BTreeSet::new();
        let mut consider = |addr: &str| {
            let domain = addr.split_once('@').map(|(_, d)| d);
            if let Some(reg) = domain.and_then(psl::registered_domain_of_host) {
                if org.verified_domains.contains(&reg) {
                    out.insert(addr.to_string());
                }
            }
        };
        for &idx in self.org_emails_in(org_id, start, end) {
            let e = &self.emails[idx];
            consider(&e.sender);
            for &rid in &self.recip_sets[idx] {
                consider(self.address(rid));
            }
        }
        out
    }

    /// All emails sharing a conversation id, ordered by (sent_at, id).
    pub fn thread(&self, conversation_id: &str) -> Vec<&Email> {
        match self.threads.get(conversation_id) {
            Some(list) => list.iter().map(|&i| &self.emails[i]).collect(),
            None => Vec::new(),
        }
    }

    /// Count of distinct UTC calendar days in `[as_of - 30d, as_of)` on
    /// which `fqdn` appeared in any employee-sent email of the org. A 30-day
    /// window can clip 31 partial UTC dates; the count is clamped to the
    /// feature range [0, 30].
    pub fn fqdn_presence_days(&self, org_id: &str, fqdn: &str, as_of: DateTime<Utc>) -> u32 {
        self.fqdn_presence_days_with_last(org_id, fqdn, as_of).0
    }

    /// As [`Self::fqdn_presence_days`], also reporting the latest timestamp
    /// the query read (for leakage audits).
    pub fn fqdn_presence_days_with_last(
        &self,
        org_id: &str,
        fqdn: &str,
        as_of: DateTime<Utc>,
    ) -> (u32, Option<i64>) {
        let Some(times) = self
            .fqdn_times
            .get(org_id)
            .and_then(|m| m.get(fqdn))
        else {
            return (0, None);
        };
        let end = as_of.timestamp();
        let start = end - WINDOW_30D;
        let lo = times.partition_point(|&t| t < start);
        let hi = times.partition_point(|&t| t < end);
        let mut days = 0u32;
        let mut last_day = i64::MIN;
        for &t in &times[lo..hi] {
            let day = t.div_euclid(86_400);
            if day != last_day {
                days += 1;
                last_day = day;
            }
        }
        (days.min(30), times[lo..hi].last().copied())
    }

    /// Latest employee-sent timestamp of the org within `[as_of - 30d,
    /// as_of)`, i.e. the newest history item a feature query can touch.
    pub fn history_last_ts(&self, org_id: &str, as_of: DateTime<Utc>) -> Option<i64> {
        let start = as_of - chrono::Duration::seconds(WINDOW_30D);
        self.employee_sent_in(org_id, start, as_of)
            .last()
            .map(|&i| self.emails[i].sent_at.timestamp())
    }

    /// Earliest and latest email timestamps, if the corpus is non-empty.
    pub fn time_range(&self) -> Option<(DateTime<Utc>, DateTime<Utc>)> {
        Some((self.emails.first()?.sent_at, self.emails.last()?.sent_at))
    }
}

/// Start of the UTC calendar month containing `dt`.
pub fn month_floor(dt: DateTime<Utc>) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(dt.year(), dt.month(), 1, 0, 0, 0)
        .unwrap()
}

/// Start of the UTC calendar month after the one containing `dt`.
pub fn month_next(dt: DateTime<Utc>) -> DateTime<Utc> {
    let (y, m) = if dt.month() == 12 {
        (dt.year() + 1, 1)
    } else {
        (dt.year(), dt.month() + 1)
    };
    Utc.with_ymd_and_hms(y, m, 1, 0, 0, 0).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{email, ts};
    use std::io::Write as _;

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    fn org() -> OrgConfig {
        OrgConfig::new("org1", &["company.com"])
    }

    #[test]
    fn load_three_valid_records() {
        let e1 = email("e1", "org1", "alice@company.com", &["bob@company.com"], "2018-04-01T09:00:00Z");
        let e2 = email("e2", "org1", "bob@company.com", &["alice@company.com"], "2018-04-01T10:00:00Z");
        let e3 = email("e3", "org1", "carol@company.com", &["alice@company.com"], "2018-04-01T11:00:00Z");
        let f = write_lines(&[&e1.to_json_line(), &e2.to_json_line(), &e3.to_json_line()]);
        let out = load_corpus(f.path(), vec![org()]).unwrap();
        assert_eq!(out.index.emails().len(), 3);
        assert!(out.errors.is_empty());
    }

    #[test]
    fn missing_sent_at_names_line_and_field() {
        let good = email("e1", "org1", "a@company.com", &["b@company.com"], "2018-04-01T09:00:00Z");
        let mut bad: serde_json::Value = serde_json::from_str(&good.to_json_line()).unwrap();
        bad.as_object_mut().unwrap().remove("sent_at");
        bad["id"] = "e2".into();
        let f = write_lines(&[&good.to_json_line(), &bad.to_string()]);
        let out = load_corpus(f.path(), vec![org()]).unwrap();
        assert_eq!(out.index.emails().len(), 1);
        assert_eq!(out.errors.len(), 1);
        assert_eq!(out.errors[0].line, 2);
        assert!(out.errors[0].message.contains("sent_at"), "{}", out.errors[0]);
    }

    #[test]
    fn duplicate_id_is_fatal() {
        let e1 = email("e1", "org1", "a@company.com", &["b@company.com"], "2018-04-01T09:00:00Z");
        let mut e2 = e1.clone();
        e2.subject = "other".into();
        let f = write_lines(&[&e1.to_json_line(), &e2.to_json_line()]);
        match load_corpus(f.path(), vec![org()]) {
            Err(Error::DuplicateId { id, .. }) => assert_eq!(id, "e1"),
            other => panic!("expected duplicate-id error, got {other:?}"),
        }
    }

    #[test]
    fn employee_sent_matches_registered_domain() {
        let o = org();
        let e = email("e1", "org1", "alice@company.com", &["x@y.com"], "2018-04-01T09:00:00Z");
        assert!(is_employee_sent(&e, &o));
        let e = email("e2", "org1", "bob@gmail.com", &["x@y.com"], "2018-04-01T09:00:00Z");
        assert!(!is_employee_sent(&e, &o));
        // Subdomain collapses to the verified registered domain.
        let e = email("e3", "org1", "a@mail.company.com", &["x@y.com"], "2018-04-01T09:00:00Z");
        assert!(is_employee_sent(&e, &o));
    }

    #[test]
    fn recent_contacts_window() {
        let as_of = ts("2018-05-01T00:00:00Z");
        let emails = vec![
            email("e1", "org1", "s@company.com", &["b@company.com", "c@company.com"], "2018-04-26T00:00:00Z"),
            // Exactly 31 days before: outside the window.
            email("e2", "org1", "s@company.com", &["x@company.com"], "2018-03-31T00:00:00Z"),
            email("e3", "org1", "s@company.com", &["y@company.com"], "2018-04-30T00:00:00Z"),
        ];
        let idx = CorpusIndex::build(emails, vec![org()]);
        let got = idx.recent_contacts("s@company.com", as_of);
        let want: BTreeSet<String> = ["b@company.com", "c@company.com", "y@company.com"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(got, want);
        assert!(idx.recent_contacts("quiet@company.com", as_of).is_empty());
    }

    #[test]
    fn recent_contacts_excludes_self() {
        let emails = vec![email(
            "e1", "org1", "s@company.com",
            &["s@company.com", "b@company.com"],
            "2018-04-26T00:00:00Z",
        )];
        let idx = CorpusIndex::build(emails, vec![org()]);
        let got = idx.recent_contacts("s@company.com", ts("2018-05-01T00:00:00Z"));
        assert_eq!(got.len(), 1);
        assert!(got.contains("b@company.com"));
    }

    #[test]
    fn historical_recipient_sets_excludes_non_employee_and_future() {
        let as_of = ts("2018-05-01T00:00:00Z");
        let emails = vec![
            email("e1", "org1", "a@company.com", &["x@company.com"], "2018-04-10T00:00:00Z"),
            email("e2", "org1", "b@company.com", &["x@company.com", "y@company.com"], "2018-04-12T00:00:00Z"),
            email("e3", "org1", "ext@gmail.com", &["x@company.com"], "2018-04-13T00:00:00Z"),
            email("e4", "org1", "c@company.com", &["z@company.com"], "2018-05-02T00:00:00Z"),
        ];
        let idx = CorpusIndex::build(emails, vec![org()]);
        let sets = idx.historical_recipient_sets("org1", as_of);
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0].len(), 1);
        assert_eq!(sets[1].len(), 2);
        assert!(idx.historical_recipient_sets("org1", ts("2018-03-01T00:00:00Z")).is_empty());
    }

    #[test]
    fn roster_covers_senders_and_recipients_with_verified_domains() {
        let emails = vec![email(
            "e1", "org1", "alice@company.com",
            &["bob@company.com", "carol@gmail.com"],
            "2018-04-10T00:00:00Z",
        )];
        let idx = CorpusIndex::build(emails, vec![org()]);
        let roster = idx.employee_roster("org1", 2018, 4);
        assert_eq!(roster.len(), 2);
        assert!(roster.contains("alice@company.com"));
        assert!(roster.contains("bob@company.com"));
        assert!(idx.employee_roster("org1", 2018, 6).is_empty());
    }

    #[test]
    fn thread_orders_by_time_then_id() {
        let mut e1 = email("b", "org1", "a@company.com", &["x@company.com"], "2018-04-10T00:00:00Z");
        let mut e2 = email("a", "org1", "a@company.com", &["x@company.com"], "2018-04-10T00:00:00Z");
        let mut e3 = email("c", "org1", "a@company.com", &["x@company.com"], "2018-04-09T00:00:00Z");
        for e in [&mut e1, &mut e2, &mut e3] {
            e.conversation_id = "conv".into();
        }
        let idx = CorpusIndex::build(vec![e1, e2, e3], vec![org()]);
        let ids: Vec<&str> = idx.thread("conv").iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["c", "a", "b"]);
        assert!(idx.thread("nope").is_empty());
    }

    #[test]
    fn history_membership_is_exactly_thirty_days() {
        let sent = ts("2018-04-10T00:00:00Z");
        let emails = vec![email("e1", "org1", "a@company.com", &["x@company.com"], "2018-04-10T00:00:00Z")];
        let idx = CorpusIndex::build(emails, vec![org()]);
        let mut present = 0;
        for day_off in -2..35 {
            let q = sent + chrono::Duration::days(day_off);
            let sets = idx.historical_recipient_sets("org1", q);
            if !sets.is_empty() {
                present += 1;
                assert!(day_off >= 1 && day_off <= 30, "leaked at offset {day_off}");
            }
        }
        assert_eq!(present, 30);
    }

    #[test]
    fn load_is_idempotent() {
        let e1 = email("e1", "org1", "a@company.com", &["b@company.com"], "2018-04-01T09:00:00Z");
        let e2 = email("e2", "org1", "b@company.com", &["a@company.com"], "2018-04-02T09:00:00Z");
        let f = write_lines(&[&e1.to_json_line(), &e2.to_json_line()]);
        let one = load_corpus(f.path(), vec![org()]).unwrap();
        let two = load_corpus(f.path(), vec![org()]).unwrap();
        assert_eq!(one.index, two.index);
    }

    #[test]
    fn fqdn_presence_counts_distinct_days() {
        let mut emails = Vec::new();
        // Same FQDN twice on one day, once on another.
        for (i, at) in [
            "2018-04-10T09:00:00Z",
            "2018-04-10T15:00:00Z",
            "2018-04-12T09:00:00Z",
        ]
        .iter()
        .enumerate()
        {
            let mut e = email(&format!("e{i}"), "org1", "a@company.com", &["b@company.com"], at);
            e.body_html = r#"<a href="https://files.vendor.com/x">see file</a>"#.into();
            emails.push(e);
        }
        let idx = CorpusIndex::build(emails, vec![org()]);
        assert_eq!(
            idx.fqdn_presence_days("org1", "files.vendor.com", ts("2018-05-01T00:00:00Z")),
            2
        );
        assert_eq!(
            idx.fqdn_presence_days("org1", "other.com", ts("2018-05-01T00:00:00Z")),
            0
        );
    }

    #[test]
    fn tailoring_fields_must_pair() {
        let good = email("e1", "org1", "a@company.com", &["b@company.com"], "2018-04-01T09:00:00Z");
        let mut bad: serde_json::Value = serde_json::from_str(&good.to_json_line()).unwrap();
        bad["tailoring_topic"] = "generic".into();
        let f = write_lines(&[&bad.to_string()]);
        let out = load_corpus(f.path(), vec![org()]).unwrap();
        assert_eq!(out.errors.len(), 1);
        assert!(out.errors[0].message.contains("together"));
    }

    #[test]
    fn deleted_before_sent_rejected() {
        let mut e = email("e1", "org1", "a@company.com", &["b@company.com"], "2018-04-02T09:00:00Z");
        e.deleted_at = Some(ts("2018-04-01T09:00:00Z"));
        let f = write_lines(&[&e.to_json_line()]);
        let out = load_corpus(f.path(), vec![org()]).unwrap();
        assert_eq!(out.errors.len(), 1);
        assert!(out.errors[0].message.contains("deleted_at"));
    }
}
