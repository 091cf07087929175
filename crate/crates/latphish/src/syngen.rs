//! Deterministic synthetic corpus generator: multi-org benign traffic plus
//! injected lateral-phishing campaigns with controllable strategy, lure,
//! timing, stealth, interaction, and success-chain parameters.
//!
//! The same seed reproduces the same corpus byte for byte. Benign traffic is
//! shaped so the detector features have realistic benign mass: recurring
//! recipient sets, popular-domain links, service notifications that template
//! mining can pick up, and a little rare-domain noise (personal signature
//! links). Campaign ATOs get controlled pre-phish activity so their
//! recipient-targeting strategy is recoverable by the characterization
//! heuristics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use chrono::{DateTime, Datelike, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::characterize::Strategy;
use crate::corpus::{
    format_ts, Email, Folder, ManualLabel, OrgConfig, Tailoring, TailoringNaming, TailoringTopic,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lure {
    SharedDocument,
    AccountProblem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankClass {
    /// Domain absent from the ranking list (default rank).
    Unranked,
    /// Ranked, but outside the top 100,000.
    MidRank,
    /// Shortened link resolving (offline) to an unranked domain.
    Shortened,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingMode {
    WorkHours,
    OffHours,
    /// Work-hours send from an account with no sent mail in the prior 30 days.
    Quiescent,
}

/// One planned phishing campaign.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub org: usize,
    /// Month offset within the corpus (0-based) and day of month.
    pub month: u32,
    pub day: u32,
    pub strategy: Strategy,
    pub lure: Lure,
    pub recipients: usize,
    pub rank_class: RankClass,
    pub timing: TimingMode,
    pub stealth: bool,
    pub interaction: bool,
    /// Number of follow-on compromised accounts (success-chain hops).
    pub chain: usize,
    pub reported: bool,
    /// Send one email per recipient instead of a single mass-BCC blast.
    pub individual_sends: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenConfig {
    pub seed: u64,
    pub n_orgs: usize,
    pub employees_min: usize,
    pub employees_max: usize,
    pub months: u32,
    pub start_year: i32,
    pub start_month: u32,
    pub benign_rate_per_employee_day: f64,
    pub campaigns: Vec<CampaignConfig>,
}

impl GenConfig {
    /// The default desk-scale corpus: 10 orgs, roughly 1,000 mailboxes,
    /// 3 months, and 30 injected URL-based incidents (campaigns plus
    /// success-chain hops).
    pub fn default_config(seed: u64) -> Self {
        GenConfig {
            seed,
            n_orgs: 10,
            employees_min: 80,
            employees_max: 120,
            months: 3,
            start_year: 2018,
            start_month: 4,
            benign_rate_per_employee_day: 0.5,
            campaigns: default_campaigns(),
        }
    }
}

fn default_campaigns() -> Vec<CampaignConfig> {
    use RankClass::*;
    use Strategy::*;
    use TimingMode::*;
    #[allow(clippy::too_many_arguments)]
    fn c(
        org: usize,
        month: u32,
        day: u32,
        strategy: Strategy,
        lure: Lure,
        recipients: usize,
        rank_class: RankClass,
        timing: TimingMode,
        stealth: bool,
        interaction: bool,
        chain: usize,
        reported: bool,
        individual_sends: bool,
    ) -> CampaignConfig {
        CampaignConfig {
            org,
            month,
            day,
            strategy,
            lure,
            recipients,
            rank_class,
            timing,
            stealth,
            interaction,
            chain,
            reported,
            individual_sends,
        }
    }
    vec![
        // Month 0 (training window): all campaigns user-reported.
        c(0, 0, 26, AccountAgnostic, Lure::SharedDocument, 160, Unranked, WorkHours, false, false, 0, true, false),
        c(1, 0, 26, AccountAgnostic, Lure::AccountProblem, 140, Unranked, Quiescent, false, false, 0, true, false),
        c(2, 0, 27, AccountAgnostic, Lure::SharedDocument, 120, Shortened, WorkHours, false, true, 0, true, false),
        c(3, 0, 27, AccountAgnostic, Lure::AccountProblem, 150, Unranked, OffHours, false, false, 0, true, false),
        c(4, 0, 26, OrganizationWide, Lure::SharedDocument, 0, Unranked, WorkHours, true, false, 1, true, false),
        c(5, 0, 27, OrganizationWide, Lure::AccountProblem, 0, Unranked, WorkHours, false, false, 0, true, false),
        c(6, 0, 26, OrganizationWide, Lure::SharedDocument, 0, MidRank, WorkHours, false, true, 0, true, false),
        c(7, 0, 27, TargetedRecipient, Lure::SharedDocument, 12, Unranked, WorkHours, false, false, 0, true, false),
        c(8, 0, 26, TargetedRecipient, Lure::AccountProblem, 14, Unranked, WorkHours, true, false, 0, true, false),
        c(0, 0, 27, LateralOrganization, Lure::SharedDocument, 40, Unranked, WorkHours, false, false, 0, true, true),
        // Months 1-2 (test window): half reported, chains unreported.
        c(1, 1, 4, AccountAgnostic, Lure::SharedDocument, 170, Unranked, WorkHours, false, false, 0, true, false),
        c(2, 1, 9, AccountAgnostic, Lure::AccountProblem, 130, Unranked, Quiescent, true, false, 0, false, false),
        c(3, 1, 11, AccountAgnostic, Lure::SharedDocument, 150, Shortened, WorkHours, false, true, 0, true, false),
        c(4, 1, 16, AccountAgnostic, Lure::AccountProblem, 90, Unranked, WorkHours, false, false, 0, false, false),
        c(5, 1, 18, AccountAgnostic, Lure::SharedDocument, 110, MidRank, OffHours, false, false, 0, true, false),
        c(6, 1, 23, AccountAgnostic, Lure::AccountProblem, 120, Unranked, WorkHours, true, false, 0, false, false),
        c(7, 1, 25, OrganizationWide, Lure::SharedDocument, 0, Unranked, WorkHours, false, true, 1, true, false),
        c(8, 1, 10, OrganizationWide, Lure::AccountProblem, 0, Unranked, WorkHours, false, false, 0, false, false),
        c(9, 1, 17, OrganizationWide, Lure::SharedDocument, 0, Unranked, WorkHours, false, false, 1, true, false),
        c(9, 2, 6, OrganizationWide, Lure::AccountProblem, 0, MidRank, WorkHours, true, false, 0, false, false),
        c(2, 2, 12, OrganizationWide, Lure::SharedDocument, 0, Unranked, WorkHours, false, false, 1, true, false),
        c(3, 2, 15, TargetedRecipient, Lure::SharedDocument, 12, Unranked, WorkHours, false, true, 0, true, false),
        c(4, 2, 19, TargetedRecipient, Lure::AccountProblem, 16, Unranked, WorkHours, false, false, 0, false, false),
        c(5, 2, 21, TargetedRecipient, Lure::SharedDocument, 14, MidRank, WorkHours, false, false, 0, true, false),
        c(0, 2, 8, LateralOrganization, Lure::SharedDocument, 40, Unranked, WorkHours, false, false, 0, false, true),
        c(6, 2, 24, AccountAgnostic, Lure::SharedDocument, 60, Unranked, WorkHours, false, false, 0, false, false),
    ]
}

// ---------------------------------------------------------------------------
// Manifest records
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifestRecord {
    Meta {
        seed: u64,
        orgs: usize,
        mailboxes: usize,
        emails: usize,
        incidents: usize,
    },
    Email {
        id: String,
        label: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        campaign: Option<usize>,
    },
    Campaign {
        campaign: usize,
        org_id: String,
        ato: String,
        subject: String,
        strategy: Strategy,
        lure: Lure,
        timing: TimingMode,
        rank_class: RankClass,
        stealth: bool,
        interaction: bool,
        reported: bool,
        first_sent_at: String,
        email_ids: Vec<String>,
    },
    Success {
        campaign: usize,
        attacker: String,
        victim: String,
        phish_a: String,
        phish_b: String,
    },
}

/// In-memory result of a generation run (everything is also on disk).
#[derive(Debug)]
pub struct GenSummary {
    pub emails: usize,
    pub phish_emails: usize,
    pub incidents: usize,
    pub mailboxes: usize,
    pub records: Vec<ManifestRecord>,
}

// ---------------------------------------------------------------------------
// Static pools
// ---------------------------------------------------------------------------

const FIRST_NAMES: &[&str] = &[
    "ada", "alan", "alice", "amir", "ana", "ben", "bianca", "bob", "carla", "carol", "chen",
    "dan", "dana", "david", "elena", "emma", "erik", "fatima", "felix", "gail", "grace", "hana",
    "henry", "igor", "ines", "ivan", "jack", "jane", "jorge", "julia", "karl", "kate", "lena",
    "liam", "lucia", "marc", "maria", "mark", "mei", "nadia", "noah", "omar", "priya", "raj",
    "rosa", "sam", "sara", "tomas", "vera", "yuki",
];

const LAST_NAMES: &[&str] = &[
    "adams", "baker", "bauer", "becker", "brown", "castro", "chan", "clark", "cohen", "costa",
    "cruz", "davis", "diaz", "evans", "fischer", "garcia", "gupta", "haas", "hall", "hansen",
    "hayes", "huang", "ito", "jones", "kim", "klein", "kumar", "lee", "lewis", "lopez", "martin",
    "meyer", "moore", "nagy", "novak", "ortiz", "park", "patel", "perez", "reed", "rossi",
    "sato", "schmid", "silva", "smith", "tanaka", "torres", "walker", "weber", "wong",
];

const INDUSTRIES: &[&str] = &[
    "real estate", "real estate", "technology", "education", "technology", "finance",
    "education", "manufacturing", "healthcare", "finance",
];

const DOC_WORDS: &[&str] = &["report", "summary", "deck", "budget", "roster", "schedule", "notes"];
const ADJ_WORDS: &[&str] = &["updated", "final", "draft", "revised", "quarterly", "new"];
const TOPIC_WORDS: &[&str] = &[
    "hiring", "onboarding", "planning", "training", "roadmap", "review", "launch", "migration",
];
const MEETING_WORDS: &[&str] = &["standup", "sync", "planning meeting", "retro", "all hands"];
const EXT_CLIENT_DOMAINS: &[&str] = &[
    "client-one.example", "northwind.example", "acmecorp.example", "globex.example",
    "initech.example", "umbrella-co.example", "stark-industries.example", "wayne-ent.example",
    "hooli.example", "piedpiper.example", "soylent.example", "massive-dynamic.example",
    "wonka.example", "tyrell.example", "cyberdyne.example", "oscorp.example",
];
const FREEMAIL: &[&str] = &["gmail.com", "hotmail.com", "yahoo.com"];
const PHISH_DOMAINS: &[&str] = &[
    "secure-docs-portal.example", "mail-storage-center.example", "account-services-hub.example",
    "docshare-online.example", "mailbox-quota-fix.example", "file-transfer-safe.example",
    "login-verify-center.example", "shared-drive-view.example", "office-sign-portal.example",
    "webmail-upgrade-now.example", "document-preview-hub.example", "storage-alert-desk.example",
    "cloud-doc-access.example", "inbox-repair-tool.example",
];
const MIDRANK_DOMAINS: &[&str] = &[
    "blue-river-news.example", "daily-coupon-hub.example", "free-game-zone.example",
];

// Popular domains for the ranking file: (rank, domain).
const POPULAR: &[(u64, &str)] = &[
    (11, "videohub.example"),
    (22, "wikipedia-like.example"),
    (35, "mapster.example"),
    (60, "weathernow.example"),
    (120, "docuflow.example"),
    (310, "socialgrid.example"),
    (940, "devforge.example"),
    (1850, "mailera.example"),
    (4200, "newsly.example"),
    (8800, "taskhubapp.example"),
    (15000, "cloudnotes.example"),
    (26000, "ticketwise.example"),
    (54000, "travelport.example"),
    (98000, "recipebox.example"),
];

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

struct OrgPlan {
    org_id: String,
    domain: String,
    industry: String,
    employees: Vec<String>,
    comms: String,
    newsletter_recipients: Vec<String>,
    teams: Vec<Vec<String>>,
}

#[derive(Clone)]
struct PhishEmailPlan {
    campaign: usize,
    ato_org: usize,
    sender: String,
    recipients: Vec<String>,
    bcc: bool,
    subject: String,
    body: String,
    sent_at: DateTime<Utc>,
    conversation_id: String,
    stealth: bool,
    reported: bool,
    tailoring: Tailoring,
}

struct CampaignPlan {
    cfg: CampaignConfig,
    idx: usize,
    ato: String,
    subject: String,
    phish: Vec<PhishEmailPlan>,
    pre_activity: Vec<(DateTime<Utc>, String, Vec<String>)>,
    /// (sender, time, recipient, body, conversation).
    interactions: Vec<(String, DateTime<Utc>, String, String, String)>,
    successes: Vec<ManifestRecord>,
}

fn zipf_pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    let r: f64 = rng.gen::<f64>();
    pool[((r * r) * pool.len() as f64) as usize % pool.len()]
}

fn hex_token(rng: &mut ChaCha8Rng, len: usize) -> String {
    const HEX: &[u8] = b"0123456789abcdef";
    (0..len).map(|_| HEX[rng.gen_range(0..16)] as char).collect()
}

fn month_start(year: i32, month1: u32, offset: u32) -> DateTime<Utc> {
    let total = month1 - 1 + offset;
    let y = year + (total / 12) as i32;
    let m = total % 12 + 1;
    Utc.with_ymd_and_hms(y, m, 1, 0, 0, 0).unwrap()
}

/// Generate the corpus and side files into `outdir`, returning a summary.
pub fn generate(config: &GenConfig, outdir: &Path) -> Result<GenSummary> {
    validate(config)?;
    std::fs::create_dir_all(outdir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // --- Organizations and employees ---
    let mut orgs: Vec<OrgPlan> = Vec::new();
    for o in 0..config.n_orgs {
        let org_id = format!("org{o:02}");
        let domain = format!("{org_id}.example");
        let n = rng.gen_range(config.employees_min..=config.employees_max);
        let mut names: BTreeSet<(usize, usize)> = BTreeSet::new();
        while names.len() < n {
            names.insert((
                rng.gen_range(0..FIRST_NAMES.len()),
                rng.gen_range(0..LAST_NAMES.len()),
            ));
        }
        let employees: Vec<String> = names
            .iter()
            .map(|&(f, l)| format!("{}.{}@{domain}", FIRST_NAMES[f], LAST_NAMES[l]))
            .collect();
        let comms = format!("comms@{domain}");
        let nl_size = (n * 3 / 5).max(10);
        let newsletter_recipients: Vec<String> = employees[..nl_size.min(n)].to_vec();
        let mut teams = Vec::new();
        let mut i = 0;
        while i < employees.len() {
            let size = rng.gen_range(3..=6).min(employees.len() - i);
            teams.push(employees[i..i + size].to_vec());
            i += size;
        }
        orgs.push(OrgPlan {
            org_id,
            domain,
            industry: INDUSTRIES[o % INDUSTRIES.len()].to_string(),
            employees,
            comms,
            newsletter_recipients,
            teams,
        });
    }

    let corpus_start = month_start(config.start_year, config.start_month, 0);
    let corpus_end = month_start(config.start_year, config.start_month, config.months);
    let n_days = (corpus_end - corpus_start).num_days();

    // --- Campaign planning ---
    let mut used_atos: BTreeSet<String> = BTreeSet::new();
    let mut blackouts: BTreeMap<String, (DateTime<Utc>, DateTime<Utc>)> = BTreeMap::new();
    let mut campaigns: Vec<CampaignPlan> = Vec::new();
    let mut incident_count = 0usize;
    let mut conv_counter = 0usize;

    for (idx, cc) in config.campaigns.iter().enumerate() {
        let plan = plan_campaign(
            config,
            cc,
            idx,
            &orgs,
            &mut rng,
            &mut used_atos,
            &mut blackouts,
            &mut conv_counter,
        )?;
        incident_count += 1 + cc.chain;
        campaigns.push(plan);
    }

    // --- Benign traffic ---
    let mut emails: Vec<Email> = Vec::new();
    let mut id_counter = 0usize;
    // Recent emails eligible for organic replies.
    let mut reply_pool: Vec<(String, String, Vec<String>, DateTime<Utc>)> = Vec::new();

    for day in 0..n_days {
        let date = corpus_start + Duration::days(day);
        let weekday = date.weekday().num_days_from_monday();
        let weekend = weekday >= 5;
        for org in &orgs {
            for emp in &org.employees {
                if let Some((bs, be)) = blackouts.get(emp) {
                    if date >= *bs - Duration::days(1) && date < *be {
                        continue;
                    }
                }
                let rate = if weekend {
                    config.benign_rate_per_employee_day * 0.15
                } else {
                    config.benign_rate_per_employee_day
                };
                let n_mail = usize::from(rng.gen::<f64>() < rate)
                    + usize::from(rng.gen::<f64>() < rate * 0.3);
                for _ in 0..n_mail {
                    let (email, thread) =
                        benign_email(&mut rng, org, emp, date, &mut id_counter);
                    reply_pool.push(thread);
                    emails.push(email);
                }
            }
            // Biweekly newsletter blasts (days 5 and 19).
            let dom = date.day();
            if (dom == 5 || dom == 19) && !weekend {
                let ts = date + Duration::hours(10) + Duration::minutes(rng.gen_range(0..50));
                let issue = day as usize;
                emails.push(Email {
                    id: next_id(&mut id_counter),
                    org_id: org.org_id.clone(),
                    sender: org.comms.clone(),
                    to: Vec::new(),
                    cc: Vec::new(),
                    bcc: org.newsletter_recipients.clone(),
                    subject: format!("{} monthly update", org.org_id),
                    sent_at: ts,
                    body_html: format!(
                        "Team,<br>Highlights from across {}: {} and {} progress. \
                         <a href=\"https://news.mailera.example/issue/{issue}\">Read the full update</a><br>\
                         Regards,<br>Communications",
                        org.org_id,
                        zipf_pick(&mut rng, TOPIC_WORDS),
                        zipf_pick(&mut rng, TOPIC_WORDS),
                    ),
                    folder: Folder::SentItems,
                    conversation_id: format!("conv-nl-{}-{day}", org.org_id),
                    deleted_at: None,
                    spf_pass: true,
                    dkim_pass: true,
                    user_reported_phish: false,
                    manual_label: Some(ManualLabel::Benign),
                    tailoring: None,
                });
            }
            // Service notifications (received mail, not employee-sent).
            for s in 0..3 {
                let recipient = &org.employees[rng.gen_range(0..org.employees.len())];
                let sharer_first = FIRST_NAMES[rng.gen_range(0..FIRST_NAMES.len())];
                let token = hex_token(&mut rng, 10);
                let doc = zipf_pick(&mut rng, DOC_WORDS);
                let name = recipient.split('.').next().unwrap_or("there");
                let ts = date
                    + Duration::hours(8 + s as i64 * 3)
                    + Duration::minutes(rng.gen_range(0..55));
                emails.push(Email {
                    id: next_id(&mut id_counter),
                    org_id: org.org_id.clone(),
                    sender: "noreply@docuflow.example".into(),
                    to: vec![recipient.clone()],
                    cc: Vec::new(),
                    bcc: Vec::new(),
                    subject: format!("{sharer_first} shared a file with you"),
                    sent_at: ts,
                    body_html: docuflow_body(
                        name,
                        sharer_first,
                        doc,
                        &format!("https://app.docuflow.example/d/{token}"),
                    ),
                    folder: Folder::Inbox,
                    conversation_id: format!("conv-svc-{id_counter}"),
                    deleted_at: None,
                    spf_pass: true,
                    dkim_pass: true,
                    user_reported_phish: false,
                    manual_label: Some(ManualLabel::Benign),
                    tailoring: None,
                });
            }
            if !weekend {
                let recipient = &org.employees[rng.gen_range(0..org.employees.len())];
                let ts = date + Duration::hours(7) + Duration::minutes(rng.gen_range(0..55));
                let n1 = zipf_pick(&mut rng, TOPIC_WORDS);
                emails.push(Email {
                    id: next_id(&mut id_counter),
                    org_id: org.org_id.clone(),
                    sender: "digest@newsly.example".into(),
                    to: vec![recipient.clone()],
                    cc: Vec::new(),
                    bcc: Vec::new(),
                    subject: "Your morning digest".into(),
                    sent_at: ts,
                    body_html: format!(
                        "Good morning. Today in your feed: {n1} stories and market notes. \
                         <a href=\"https://www.newsly.example/digest/{day}\">Open your digest</a> \
                         Manage preferences any time."
                    ),
                    folder: Folder::Inbox,
                    conversation_id: format!("conv-digest-{id_counter}"),
                    deleted_at: None,
                    spf_pass: true,
                    dkim_pass: true,
                    user_reported_phish: false,
                    manual_label: Some(ManualLabel::Benign),
                    tailoring: None,
                });
            }
        }
        // Organic replies to recent mail.
        let cutoff = date - Duration::days(2);
        reply_pool.retain(|(_, _, _, t)| *t >= cutoff);
        let n_replies = (reply_pool.len() / 12).min(30);
        for _ in 0..n_replies {
            let pick = rng.gen_range(0..reply_pool.len());
            let (conv, orig_sender, recipients, t) = reply_pool[pick].clone();
            if recipients.is_empty() {
                continue;
            }
            let replier = recipients[rng.gen_range(0..recipients.len())].clone();
            if blackouts
                .get(&replier)
                .is_some_and(|(bs, be)| date >= *bs - Duration::days(1) && date < *be)
            {
                continue;
            }
            let Some(org) = orgs.iter().find(|o| replier.ends_with(&o.domain)) else {
                continue;
            };
            let ts = (t + Duration::hours(rng.gen_range(1..8))).max(date + Duration::hours(8));
            if ts >= corpus_end {
                continue;
            }
            let texts = [
                "Sounds good, will do.",
                "Thanks, received.",
                "Got it, looking now.",
                "Works for me.",
                "Can we push this to tomorrow?",
            ];
            emails.push(Email {
                id: next_id(&mut id_counter),
                org_id: org.org_id.clone(),
                sender: replier,
                to: vec![orig_sender],
                cc: Vec::new(),
                bcc: Vec::new(),
                subject: "RE: follow up".into(),
                sent_at: ts,
                body_html: texts[rng.gen_range(0..texts.len())].to_string(),
                folder: Folder::SentItems,
                conversation_id: conv,
                deleted_at: None,
                spf_pass: true,
                dkim_pass: true,
                user_reported_phish: false,
                manual_label: Some(ManualLabel::Benign),
                tailoring: None,
            });
        }
    }

    // --- Inject campaign traffic ---
    let mut phish_email_ids: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    let mut records: Vec<ManifestRecord> = Vec::new();
    let mut phish_count = 0usize;
    for plan in &mut campaigns {
        let org = &orgs[plan.cfg.org];
        for (t, sender, recipients) in &plan.pre_activity {
            emails.push(Email {
                id: next_id(&mut id_counter),
                org_id: org.org_id.clone(),
                sender: sender.clone(),
                to: recipients.clone(),
                cc: Vec::new(),
                bcc: Vec::new(),
                subject: format!("quick note on {}", zipf_pick(&mut rng, TOPIC_WORDS)),
                sent_at: *t,
                body_html: format!(
                    "Hi,<br>Quick note on the {} — let me know your thoughts.<br>Thanks,<br>{}",
                    zipf_pick(&mut rng, DOC_WORDS),
                    sender.split('.').next().unwrap_or("me"),
                ),
                folder: Folder::SentItems,
                conversation_id: format!("conv-pre-{id_counter}"),
                deleted_at: None,
                spf_pass: true,
                dkim_pass: true,
                user_reported_phish: false,
                manual_label: Some(ManualLabel::Benign),
                tailoring: None,
            });
        }
        let mut slot_ids: Vec<String> = Vec::new();
        for p in &plan.phish {
            let id = next_id(&mut id_counter);
            let org = &orgs[p.ato_org];
            let (to, bcc) = if p.bcc {
                (Vec::new(), p.recipients.clone())
            } else {
                (p.recipients.clone(), Vec::new())
            };
            let (folder, deleted_at) = if p.stealth {
                (Folder::Trash, Some(p.sent_at + Duration::seconds(10)))
            } else {
                (Folder::SentItems, None)
            };
            emails.push(Email {
                id: id.clone(),
                org_id: org.org_id.clone(),
                sender: p.sender.clone(),
                to,
                cc: Vec::new(),
                bcc,
                subject: p.subject.clone(),
                sent_at: p.sent_at,
                body_html: p.body.clone(),
                folder,
                conversation_id: p.conversation_id.clone(),
                deleted_at,
                spf_pass: true,
                dkim_pass: true,
                user_reported_phish: p.reported,
                manual_label: Some(ManualLabel::Phish),
                tailoring: Some(p.tailoring),
            });
            phish_email_ids.entry(p.campaign).or_default().push(id.clone());
            records.push(ManifestRecord::Email {
                id: id.clone(),
                label: "phish".into(),
                campaign: Some(p.campaign),
            });
            slot_ids.push(id);
            phish_count += 1;
        }
        // Resolve chain-hop slot references into concrete email ids.
        for s in &mut plan.successes {
            if let ManifestRecord::Success { phish_a, phish_b, .. } = s {
                for slot in [phish_a, phish_b] {
                    if let Some(n) = slot.strip_prefix("slot:") {
                        let i: usize = n.parse().expect("slot index");
                        *slot = slot_ids[i].clone();
                    }
                }
            }
        }
        for (sender, t, recipient, body, conv) in &plan.interactions {
            // Replies from external recipients live in the ATO org's mailbox
            // as received mail; employee messages are sent mail.
            let folder = if sender.ends_with(&org.domain) {
                Folder::SentItems
            } else {
                Folder::Inbox
            };
            emails.push(Email {
                id: next_id(&mut id_counter),
                org_id: org.org_id.clone(),
                sender: sender.clone(),
                to: vec![recipient.clone()],
                cc: Vec::new(),
                bcc: Vec::new(),
                subject: format!("RE: {}", plan.subject),
                sent_at: *t,
                body_html: body.clone(),
                folder,
                conversation_id: conv.clone(),
                deleted_at: None,
                spf_pass: true,
                dkim_pass: true,
                user_reported_phish: false,
                manual_label: Some(ManualLabel::Benign),
                tailoring: None,
            });
        }
    }

    // --- Manifest records for campaigns and successes ---
    for plan in &campaigns {
        let ids = phish_email_ids.get(&plan.idx).cloned().unwrap_or_default();
        records.push(ManifestRecord::Campaign {
            campaign: plan.idx,
            org_id: orgs[plan.cfg.org].org_id.clone(),
            ato: plan.ato.clone(),
            subject: plan.subject.clone(),
            strategy: plan.cfg.strategy,
            lure: plan.cfg.lure,
            timing: plan.cfg.timing,
            rank_class: plan.cfg.rank_class,
            stealth: plan.cfg.stealth,
            interaction: plan.cfg.interaction,
            reported: plan.cfg.reported,
            first_sent_at: format_ts(plan.phish[0].sent_at),
            email_ids: ids,
        });
        records.extend(plan.successes.iter().cloned());
    }
    for e in &emails {
        if e.manual_label == Some(ManualLabel::Benign) {
            records.push(ManifestRecord::Email {
                id: e.id.clone(),
                label: "benign".into(),
                campaign: None,
            });
        }
    }
    let mailboxes: usize = orgs.iter().map(|o| o.employees.len()).sum();
    records.insert(
        0,
        ManifestRecord::Meta {
            seed: config.seed,
            orgs: config.n_orgs,
            mailboxes,
            emails: emails.len(),
            incidents: incident_count,
        },
    );

    // --- Write files ---
    emails.sort_by(|a, b| (a.sent_at, &a.id).cmp(&(b.sent_at, &b.id)));
    let mut corpus_out = String::new();
    for e in &emails {
        let _ = writeln!(corpus_out, "{}", e.to_json_line());
    }
    std::fs::write(outdir.join("corpus.jsonl"), corpus_out)?;

    let mut orgs_out = String::new();
    for org in &orgs {
        let cfg = OrgConfig {
            org_id: org.org_id.clone(),
            verified_domains: [org.domain.clone()].into_iter().collect(),
            industry: Some(org.industry.clone()),
        };
        let _ = writeln!(orgs_out, "{}", serde_json::to_string(&cfg).unwrap());
    }
    std::fs::write(outdir.join("orgs.jsonl"), orgs_out)?;

    let mut ranking = String::from("# rank,domain\n");
    for (rank, domain) in POPULAR {
        let _ = writeln!(ranking, "{rank},{domain}");
    }
    for (i, domain) in MIDRANK_DOMAINS.iter().enumerate() {
        let _ = writeln!(ranking, "{},{domain}", 150_000 + 50_000 * i);
    }
    let _ = writeln!(ranking, "20,bit.ly");
    std::fs::write(outdir.join("ranking.csv"), ranking)?;

    std::fs::write(
        outdir.join("keywords.txt"),
        include_str!("../data/phishy_keywords.txt"),
    )?;

    let mut shortlinks = String::new();
    for plan in &campaigns {
        if plan.cfg.rank_class == RankClass::Shortened {
            let _ = writeln!(
                shortlinks,
                "http://bit.ly/c{}\thttp://{}/doc/e4f2a9",
                plan.idx,
                PHISH_DOMAINS[plan.idx % PHISH_DOMAINS.len()],
            );
        }
    }
    for i in 0..4 {
        let _ = writeln!(
            shortlinks,
            "http://bit.ly/b{i}\thttps://www.newsly.example/story/{i}"
        );
    }
    std::fs::write(outdir.join("shortlinks.tsv"), shortlinks)?;

    let lists = crate::urlrep::SpecialDomainLists::default();
    let write_list = |name: &str, set: &BTreeSet<String>| -> Result<()> {
        let mut s = String::new();
        for d in set {
            let _ = writeln!(s, "{d}");
        }
        std::fs::write(outdir.join(name), s)?;
        Ok(())
    };
    write_list("shorteners.txt", &lists.shortener_domains)?;
    write_list("content_hosts.txt", &lists.content_hosting_domains)?;
    write_list("freemail.txt", &lists.freemail_domains)?;

    let mut manifest = String::new();
    for r in &records {
        let _ = writeln!(manifest, "{}", serde_json::to_string(r).unwrap());
    }
    std::fs::write(outdir.join("manifest.jsonl"), manifest)?;

    Ok(GenSummary {
        emails: emails.len(),
        phish_emails: phish_count,
        incidents: incident_count,
        mailboxes,
        records,
    })
}

fn next_id(counter: &mut usize) -> String {
    *counter += 1;
    format!("m{:06}", *counter)
}

fn validate(config: &GenConfig) -> Result<()> {
    if config.n_orgs == 0 || config.months == 0 {
        return Err(Error::Infeasible("need at least one org and one month".into()));
    }
    if config.employees_min < 2 || config.employees_min > config.employees_max {
        return Err(Error::Infeasible("bad employees range".into()));
    }
    for (i, c) in config.campaigns.iter().enumerate() {
        if c.org >= config.n_orgs {
            return Err(Error::Infeasible(format!("campaign {i}: org {} out of range", c.org)));
        }
        if c.month >= config.months {
            return Err(Error::Infeasible(format!("campaign {i}: month {} out of range", c.month)));
        }
        if !(1..=28).contains(&c.day) {
            return Err(Error::Infeasible(format!("campaign {i}: day {} out of range", c.day)));
        }
        let needs = match c.strategy {
            Strategy::OrganizationWide => 40,
            Strategy::TargetedRecipient => c.recipients * 2 + 2,
            _ => 8,
        } + c.chain * 4;
        if config.employees_min < needs {
            return Err(Error::Infeasible(format!(
                "campaign {i}: strategy {:?} needs at least {needs} employees per org, have {}",
                c.strategy, config.employees_min
            )));
        }
        if c.strategy == Strategy::TargetedRecipient && c.recipients == 0 {
            return Err(Error::Infeasible(format!(
                "campaign {i}: targeted-recipient campaigns need an explicit recipient count"
            )));
        }
    }
    Ok(())
}

fn benign_email(
    rng: &mut ChaCha8Rng,
    org: &OrgPlan,
    sender: &str,
    date: DateTime<Utc>,
    id_counter: &mut usize,
) -> (Email, (String, String, Vec<String>, DateTime<Utc>)) {
    // Work-hours-weighted send time.
    let hour = if rng.gen::<f64>() < 0.85 {
        rng.gen_range(9..17)
    } else {
        rng.gen_range(7..21)
    };
    let ts = date + Duration::hours(hour) + Duration::minutes(rng.gen_range(0..59));
    let sender_first = sender.split('.').next().unwrap_or("me").to_string();

    // Recipients: usually the sender's team, sometimes random colleagues.
    let team = org
        .teams
        .iter()
        .find(|t| t.iter().any(|m| m == sender))
        .cloned()
        .unwrap_or_default();
    let mut recipients: Vec<String> = if !team.is_empty() && rng.gen::<f64>() < 0.6 {
        team.into_iter().filter(|m| m != sender).collect()
    } else {
        let n = rng.gen_range(1..=3);
        (0..n)
            .map(|_| org.employees[rng.gen_range(0..org.employees.len())].clone())
            .filter(|r| r != sender)
            .collect()
    };
    recipients.sort();
    recipients.dedup();
    if recipients.is_empty() {
        recipients.push(org.comms.clone());
    }

    let kind = rng.gen_range(0..100);
    let doc = zipf_pick(rng, DOC_WORDS);
    let adj = zipf_pick(rng, ADJ_WORDS);
    let topic = zipf_pick(rng, TOPIC_WORDS);
    let meeting = zipf_pick(rng, MEETING_WORDS);
    let body = if kind < 30 {
        format!(
            "Hi,<br>Attached is the {adj} {doc} for this week. Let me know if anything looks off.<br>Thanks,<br>{sender_first}"
        )
    } else if kind < 50 {
        format!(
            "Team,<br>Reminder that the {meeting} is tomorrow at {}:00. Agenda: {topic} and the {doc}.<br>Regards,<br>{sender_first}",
            rng.gen_range(9..16)
        )
    } else if kind < 65 {
        let page = rng.gen_range(1..400);
        format!(
            "Notes from today are on the <a href=\"https://wiki.{}/page/{page}\">team wiki</a>. Please add anything I missed.",
            org.domain
        )
    } else if kind < 80 {
        let token = hex_token(rng, 10);
        format!(
            "Hi,<br>{sender_first} sent you the {adj} {doc}. <a href=\"https://app.docuflow.example/d/{token}\">Open in Docuflow</a><br>Thanks,<br>{sender_first}"
        )
    } else if kind < 88 {
        format!("Are we still on for the {meeting} this week? I may be five minutes late.")
    } else if kind < 94 {
        let story = rng.gen_range(0..4);
        format!(
            "Worth a read before the {meeting}: <a href=\"http://bit.ly/b{story}\">this piece</a> covers {topic}."
        )
    } else if kind < 97 {
        let issue = rng.gen_range(1..900);
        format!(
            "Tracking this in <a href=\"https://board.taskhubapp.example/t/{issue}\">the board</a>; status is {adj}."
        )
    } else {
        // The classic benign rare-domain case: a personal-site link in the
        // signature with displayed text that does not match the URL.
        format!(
            "Quick update on {topic} below. All on track for the {doc}.<br>Best,<br>{sender_first}<br><a href=\"http://www.{sender_first}-codes.example/\">my projects page</a>"
        )
    };

    let conv = format!("conv-b{:06}", *id_counter + 1);
    let email = Email {
        id: next_id(id_counter),
        org_id: org.org_id.clone(),
        sender: sender.to_string(),
        to: recipients.clone(),
        cc: Vec::new(),
        bcc: Vec::new(),
        subject: format!("{adj} {doc}"),
        sent_at: ts,
        body_html: body,
        folder: Folder::SentItems,
        conversation_id: conv.clone(),
        deleted_at: None,
        spf_pass: true,
        dkim_pass: true,
        user_reported_phish: false,
        manual_label: Some(ManualLabel::Benign),
        tailoring: None,
    };
    let thread = (conv, sender.to_string(), recipients, ts);
    (email, thread)
}

fn docuflow_body(name: &str, sharer: &str, doc: &str, url: &str) -> String {
    format!(
        "Hello {name}, {sharer} shared the file {doc} with you using Docuflow. \
         <a href=\"{url}\">View document</a> \
         If you were not expecting this file you can safely ignore this message."
    )
}

fn account_problem_body(org_name: Option<&str>, url: &str) -> String {
    let owner = match org_name {
        Some(o) => format!("Your {o} mailbox"),
        None => "Your mailbox".to_string(),
    };
    format!(
        "{owner} has exceeded its storage limit and incoming messages will be rejected. \
         <a href=\"{url}\">Sign in</a> to verify your account and avoid interruption of service."
    )
}

#[allow(clippy::too_many_arguments)]
fn plan_campaign(
    config: &GenConfig,
    cc: &CampaignConfig,
    idx: usize,
    orgs: &[OrgPlan],
    rng: &mut ChaCha8Rng,
    used_atos: &mut BTreeSet<String>,
    blackouts: &mut BTreeMap<String, (DateTime<Utc>, DateTime<Utc>)>,
    conv_counter: &mut usize,
) -> Result<CampaignPlan> {
    let org = &orgs[cc.org];
    let m_start = month_start(config.start_year, config.start_month, cc.month);
    let hour = match cc.timing {
        TimingMode::WorkHours | TimingMode::Quiescent => rng.gen_range(9..17),
        TimingMode::OffHours => rng.gen_range(0..5),
    };
    // Shift to a weekday so incident day-of-week stays work-week shaped.
    let mut date = m_start + Duration::days(cc.day as i64 - 1);
    while date.weekday().num_days_from_monday() >= 5 {
        date += Duration::days(1);
    }
    let sent_at = date + Duration::hours(hour) + Duration::minutes(rng.gen_range(0..55));

    let next_conv = |n: &mut usize| {
        *n += 1;
        format!("conv-p{:04}", *n)
    };

    // Pick a dedicated ATO not reused by another campaign.
    let ato = org
        .employees
        .iter()
        .rev()
        .find(|e| !used_atos.contains(*e))
        .ok_or_else(|| Error::Infeasible(format!("campaign {idx}: no free ATO in {}", org.org_id)))?
        .clone();
    used_atos.insert(ato.clone());

    // Controlled pre-phish activity (plus a quiet buffer enforced by the
    // organic-traffic blackout).
    blackouts.insert(
        ato.clone(),
        (sent_at - Duration::days(32), sent_at + Duration::days(3)),
    );
    let mut pre_activity: Vec<(DateTime<Utc>, String, Vec<String>)> = Vec::new();
    let colleagues: Vec<&String> = org.employees.iter().filter(|e| **e != ato).collect();
    let mut contacts: Vec<String> = Vec::new();
    match (cc.timing, cc.strategy) {
        (TimingMode::Quiescent, _) => {}
        (_, Strategy::TargetedRecipient) => {
            let pool = cc.recipients * 2;
            contacts = colleagues.iter().take(pool).map(|s| s.to_string()).collect();
            for (i, c) in contacts.iter().enumerate() {
                let t = sent_at - Duration::days(2 + (i as i64 * 23) % 26)
                    + Duration::hours(((i * 5) % 8) as i64 - 4);
                pre_activity.push((t, ato.clone(), vec![c.clone()]));
            }
        }
        _ => {
            contacts = colleagues.iter().take(3).map(|s| s.to_string()).collect();
            for (i, c) in contacts.iter().enumerate() {
                let t = sent_at - Duration::days(3 + i as i64 * 9);
                pre_activity.push((t, ato.clone(), vec![c.clone()]));
            }
        }
    }

    // Recipient set per strategy.
    let recipients: Vec<String> = match cc.strategy {
        Strategy::AccountAgnostic => {
            let freemail_variant = idx % 5 == 1;
            let n = cc.recipients.max(25);
            (0..n)
                .map(|i| {
                    if freemail_variant {
                        format!("user{idx}x{i}@{}", FREEMAIL[i % FREEMAIL.len()])
                    } else {
                        format!("contact{i}@{}", EXT_CLIENT_DOMAINS[i % EXT_CLIENT_DOMAINS.len()])
                    }
                })
                .collect()
        }
        Strategy::OrganizationWide => {
            let n = (org.employees.len() as f64 * 0.92) as usize;
            org.employees
                .iter()
                .filter(|e| **e != ato)
                .take(n)
                .cloned()
                .collect()
        }
        Strategy::LateralOrganization => {
            let peer = orgs
                .iter()
                .enumerate()
                .find(|(i, o)| *i != cc.org && o.industry == org.industry)
                .ok_or_else(|| {
                    Error::Infeasible(format!(
                        "campaign {idx}: no peer org shares industry {:?}",
                        org.industry
                    ))
                })?
                .1;
            peer.employees.iter().take(cc.recipients.max(20)).cloned().collect()
        }
        Strategy::TargetedRecipient => contacts.iter().take(cc.recipients).cloned().collect(),
        Strategy::Inconclusive => {
            return Err(Error::Infeasible(format!(
                "campaign {idx}: inconclusive is not a plannable strategy"
            )))
        }
    };
    if recipients.is_empty() {
        return Err(Error::Infeasible(format!("campaign {idx}: empty recipient set")));
    }

    // Lure body and incident subject.
    let phish_domain = PHISH_DOMAINS[idx % PHISH_DOMAINS.len()];
    let url = match cc.rank_class {
        RankClass::Unranked => format!("http://{phish_domain}/doc/{}", hex_token(rng, 6)),
        RankClass::MidRank => format!(
            "http://{}/doc/{}",
            MIDRANK_DOMAINS[idx % MIDRANK_DOMAINS.len()],
            hex_token(rng, 6)
        ),
        RankClass::Shortened => format!("http://bit.ly/c{idx}"),
    };
    let ato_first = ato.split('.').next().unwrap_or("a colleague").to_string();
    let (subject, body, tailoring) = match cc.lure {
        Lure::SharedDocument => (
            format!("{ato_first} shared a file with you"),
            docuflow_body("there", &ato_first, zipf_pick(rng, DOC_WORDS), &url),
            Tailoring {
                topic: TailoringTopic::Generic,
                naming: TailoringNaming::None,
            },
        ),
        Lure::AccountProblem => {
            let org_named = idx % 3 == 0;
            (
                "Action required: mailbox storage limit".to_string(),
                account_problem_body(org_named.then_some(org.org_id.as_str()), &url),
                Tailoring {
                    topic: if org_named {
                        TailoringTopic::Enterprise
                    } else {
                        TailoringTopic::Generic
                    },
                    naming: if org_named {
                        TailoringNaming::Org
                    } else {
                        TailoringNaming::None
                    },
                },
            )
        }
    };

    let conv = next_conv(conv_counter);
    let mut phish: Vec<PhishEmailPlan> = Vec::new();
    if cc.individual_sends {
        for (i, r) in recipients.iter().enumerate() {
            phish.push(PhishEmailPlan {
                campaign: idx,
                ato_org: cc.org,
                sender: ato.clone(),
                recipients: vec![r.clone()],
                bcc: false,
                subject: subject.clone(),
                body: body.clone(),
                sent_at: sent_at + Duration::seconds(40 * i as i64),
                conversation_id: format!("{conv}-{i}"),
                stealth: cc.stealth,
                reported: cc.reported,
                tailoring,
            });
        }
    } else {
        phish.push(PhishEmailPlan {
            campaign: idx,
            ato_org: cc.org,
            sender: ato.clone(),
            recipients: recipients.clone(),
            bcc: true,
            subject: subject.clone(),
            body: body.clone(),
            sent_at,
            conversation_id: conv.clone(),
            stealth: cc.stealth,
            reported: cc.reported,
            tailoring,
        });
    }

    // Victim interaction: an inquiry reply and a deceptive follow-up in the
    // first phish thread.
    let mut interactions = Vec::new();
    if cc.interaction {
        let victim = recipients
            .iter()
            .find(|r| r.ends_with(&org.domain))
            .cloned()
            .unwrap_or_else(|| recipients[0].clone());
        let p0 = &phish[0];
        interactions.push((
            victim.clone(),
            p0.sent_at + Duration::hours(2),
            ato.clone(),
            "Is this the file from the meeting? The address looks unfamiliar.".to_string(),
            p0.conversation_id.clone(),
        ));
        interactions.push((
            ato.clone(),
            p0.sent_at + Duration::hours(3),
            victim,
            "Yes I sent it to you, it is safe to open. You can view it by signing in with your email."
                .to_string(),
            p0.conversation_id.clone(),
        ));
    }

    // Success chain: each hop compromises one in-org recipient, who sends a
    // near-identical phish the next day.
    let mut successes = Vec::new();
    let mut prev_sender = ato.clone();
    let mut prev_sent = sent_at;
    let mut prev_slot = 0usize;
    let in_org_recipients: Vec<String> = recipients
        .iter()
        .filter(|r| r.ends_with(&org.domain))
        .cloned()
        .collect();
    for hop in 0..cc.chain {
        let victim = in_org_recipients
            .iter()
            .rev()
            .nth(hop)
            .cloned()
            .ok_or_else(|| {
                Error::Infeasible(format!(
                    "campaign {idx}: chain hop {hop} has no in-org victim to compromise"
                ))
            })?;
        used_atos.insert(victim.clone());
        let hop_sent = prev_sent + Duration::days(1) + Duration::hours(1);
        blackouts.insert(
            victim.clone(),
            (hop_sent - Duration::days(32), hop_sent + Duration::days(3)),
        );
        // Two controlled contacts keep the hop's overlap below the
        // organization-wide ceiling.
        let hop_contacts: Vec<String> = org
            .employees
            .iter()
            .filter(|e| **e != victim && **e != ato)
            .take(2)
            .cloned()
            .collect();
        let mut hop_pre: Vec<(DateTime<Utc>, String, Vec<String>)> = hop_contacts
            .iter()
            .enumerate()
            .map(|(i, c)| {
                (hop_sent - Duration::days(4 + i as i64 * 7), victim.clone(), vec![c.clone()])
            })
            .collect();
        let hop_recipients: Vec<String> = org
            .employees
            .iter()
            .filter(|e| **e != victim && **e != prev_sender)
            .take((org.employees.len() as f64 * 0.4) as usize)
            .cloned()
            .collect();
        let hop_conv = next_conv(conv_counter);
        phish.push(PhishEmailPlan {
            campaign: idx,
            ato_org: cc.org,
            sender: victim.clone(),
            recipients: hop_recipients,
            bcc: true,
            subject: subject.clone(),
            body: body.clone(),
            sent_at: hop_sent,
            conversation_id: hop_conv,
            stealth: false,
            reported: false,
            tailoring,
        });
        pre_activity.append(&mut hop_pre);
        successes.push(ManifestRecord::Success {
            campaign: idx,
            attacker: prev_sender.clone(),
            victim: victim.clone(),
            phish_a: format!("slot:{prev_slot}"),
            phish_b: format!("slot:{}", phish.len() - 1),
        });
        prev_sender = victim;
        prev_sent = hop_sent;
        prev_slot = phish.len() - 1;
    }

    Ok(CampaignPlan {
        cfg: cc.clone(),
        idx,
        ato,
        subject,
        phish,
        pre_activity,
        interactions,
        successes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(seed: u64) -> GenConfig {
        GenConfig {
            seed,
            n_orgs: 3,
            employees_min: 45,
            employees_max: 55,
            months: 2,
            start_year: 2018,
            start_month: 4,
            benign_rate_per_employee_day: 0.3,
            campaigns: vec![
                CampaignConfig {
                    org: 0,
                    month: 0,
                    day: 26,
                    strategy: Strategy::AccountAgnostic,
                    lure: Lure::SharedDocument,
                    recipients: 60,
                    rank_class: RankClass::Unranked,
                    timing: TimingMode::WorkHours,
                    stealth: false,
                    interaction: false,
                    chain: 0,
                    reported: true,
                    individual_sends: false,
                },
                CampaignConfig {
                    org: 1,
                    month: 1,
                    day: 10,
                    strategy: Strategy::OrganizationWide,
                    lure: Lure::AccountProblem,
                    recipients: 0,
                    rank_class: RankClass::Unranked,
                    timing: TimingMode::WorkHours,
                    stealth: true,
                    interaction: true,
                    chain: 1,
                    reported: true,
                    individual_sends: false,
                },
            ],
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let sa = generate(&tiny_config(7), dir_a.path()).unwrap();
        let sb = generate(&tiny_config(7), dir_b.path()).unwrap();
        assert_eq!(sa.emails, sb.emails);
        for f in [
            "corpus.jsonl", "orgs.jsonl", "ranking.csv", "manifest.jsonl", "shortlinks.tsv",
        ] {
            let a = std::fs::read(dir_a.path().join(f)).unwrap();
            let b = std::fs::read(dir_b.path().join(f)).unwrap();
            assert_eq!(a, b, "file {f} differs between runs");
        }
    }

    #[test]
    fn different_seeds_differ() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        generate(&tiny_config(7), dir_a.path()).unwrap();
        generate(&tiny_config(8), dir_b.path()).unwrap();
        let a = std::fs::read(dir_a.path().join("corpus.jsonl")).unwrap();
        let b = std::fs::read(dir_b.path().join("corpus.jsonl")).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn corpus_loads_cleanly_and_counts_match() {
        let dir = tempfile::tempdir().unwrap();
        let summary = generate(&tiny_config(5), dir.path()).unwrap();
        let orgs = crate::corpus::load_orgs(&dir.path().join("orgs.jsonl")).unwrap();
        let out = crate::corpus::load_corpus(&dir.path().join("corpus.jsonl"), orgs).unwrap();
        assert!(out.errors.is_empty(), "diagnostics: {:?}", out.errors);
        assert_eq!(out.index.emails().len(), summary.emails);
        let labeled = summary
            .records
            .iter()
            .filter(|r| matches!(r, ManifestRecord::Email { .. }))
            .count();
        assert_eq!(labeled, summary.emails);
        assert_eq!(summary.incidents, 3); // two campaigns plus one chain hop
    }

    #[test]
    fn infeasible_configs_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(1);
        cfg.employees_min = 3;
        cfg.employees_max = 3;
        assert!(matches!(generate(&cfg, dir.path()), Err(Error::Infeasible(_))));

        let mut cfg = tiny_config(1);
        cfg.campaigns[0].org = 99;
        assert!(matches!(generate(&cfg, dir.path()), Err(Error::Infeasible(_))));
    }

    #[test]
    fn default_config_has_thirty_incidents() {
        let cfg = GenConfig::default_config(7);
        let planned: usize = cfg.campaigns.iter().map(|c| 1 + c.chain).sum();
        assert_eq!(planned, 30);
    }
}
