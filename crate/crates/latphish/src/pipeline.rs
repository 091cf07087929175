//! End-to-end detection and evaluation: temporal split, monthly continuous
//! learning, incident deduplication, the combined three-subdetector verdict,
//! and the evaluation metrics.
//!
//! The continuous-learning loop classifies each test month with a model
//! trained only on data from before that month. At month end, confirmed
//! detections join the phish pool, confirmed false positives join the benign
//! pool, and the model is retrained with unchanged hyperparameters.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{month_floor, month_next, CorpusIndex, Email, ManualLabel};
use crate::error::{Error, Result};
use crate::features::{extract_features_audited, Extraction, FeatureContext, FeatureVector};
use crate::forest::{self, Forest, Label, LabeledExample, TrainConfig};
use crate::textsim::{self, TrigramSet, SIMILARITY_THRESHOLD};
use crate::urlrep::POPULAR_RANK_CUTOFF;

/// Half-open time window `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl Window {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self> {
        if start >= end {
            return Err(Error::Window(format!(
                "window start {start} must precede end {end}"
            )));
        }
        Ok(Window { start, end })
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        t >= self.start && t < self.end
    }
}

/// Partition a corpus into train and test slices by `sent_at`. Windows must
/// be non-empty, disjoint, and in order; boundary instants belong to the
/// later window (half-open semantics).
pub fn temporal_split(
    index: &CorpusIndex,
    train: Window,
    test: Window,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if train.end > test.start {
        return Err(Error::Window(
            "train window must end before the test window starts".into(),
        ));
    }
    let train_idx: Vec<usize> = index.emails_in(train.start, train.end).collect();
    let test_idx: Vec<usize> = index.emails_in(test.start, test.end).collect();
    Ok((train_idx, test_idx))
}

// ---------------------------------------------------------------------------
// Incidents
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IncidentKey {
    pub sender: String,
    pub subject: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubdetectorFlags {
    pub main: bool,
    pub fuzzy: bool,
    pub template: bool,
}

impl SubdetectorFlags {
    pub fn overall(&self) -> bool {
        self.main || self.fuzzy || self.template
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruth {
    Reported,
    DetectorConfirmed,
    Benign,
    Unknown,
}

/// The alert unit: all emails sharing a (sender, subject) key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incident {
    pub key: IncidentKey,
    pub email_ids: Vec<String>,
    pub first_sent_at: DateTime<Utc>,
    pub flags: SubdetectorFlags,
    pub ground_truth: GroundTruth,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_vector: Option<FeatureVector>,
}

/// Group alert emails into one incident per (sender, subject) pair. Member
/// ids are deduplicated and time-ordered; incidents are ordered by first
/// occurrence.
pub fn dedup_incidents<'a, I: IntoIterator<Item = &'a Email>>(alert_emails: I) -> Vec<Incident> {
    let mut groups: BTreeMap<IncidentKey, Vec<&Email>> = BTreeMap::new();
    for email in alert_emails {
        let key = IncidentKey {
            sender: email.sender.clone(),
            subject: email.subject.clone(),
        };
        groups.entry(key).or_default().push(email);
    }
    let mut incidents: Vec<Incident> = groups
        .into_iter()
        .map(|(key, mut members)| {
            members.sort_by(|a, b| (a.sent_at, &a.id).cmp(&(b.sent_at, &b.id)));
            members.dedup_by(|a, b| a.id == b.id);
            Incident {
                key,
                first_sent_at: members[0].sent_at,
                email_ids: members.iter().map(|e| e.id.clone()).collect(),
                flags: SubdetectorFlags::default(),
                ground_truth: GroundTruth::Unknown,
                score: 0.0,
                feature_vector: None,
            }
        })
        .collect();
    incidents.sort_by(|a, b| (a.first_sent_at, &a.key).cmp(&(b.first_sent_at, &b.key)));
    incidents
}

/// Per-email subdetector verdict. The caller supplies known-phish trigram
/// sets already restricted to emails sent at least 24 hours earlier, and
/// template trigram sets mined from the preceding month.
pub fn combined_verdict(
    email: &Email,
    ctx: &FeatureContext<'_>,
    model: &Forest,
    known_phish: &[TrigramSet],
    templates: &[TrigramSet],
) -> SubdetectorFlags {
    let (extraction, _) = extract_features_audited(email, ctx);
    let fv = match extraction {
        Extraction::Vector(fv) => fv,
        Extraction::SkipBenign => return SubdetectorFlags::default(),
    };
    flags_for(email, &fv, model, known_phish, templates).0
}

fn flags_for(
    email: &Email,
    fv: &FeatureVector,
    model: &Forest,
    known_phish: &[TrigramSet],
    templates: &[TrigramSet],
) -> (SubdetectorFlags, f64) {
    let (label, score) = model.predict(fv);
    let main = label == Label::Phish;
    let mut fuzzy = false;
    let mut template = false;
    if fv.global_url_rep > POPULAR_RANK_CUTOFF && !(known_phish.is_empty() && templates.is_empty())
    {
        let trigrams = textsim::body_trigrams(&email.body_html);
        fuzzy = textsim::fuzzy_phish_score(&trigrams, known_phish) >= SIMILARITY_THRESHOLD;
        template =
            textsim::template_similarity_score(&trigrams, templates) >= SIMILARITY_THRESHOLD;
    }
    (
        SubdetectorFlags {
            main,
            fuzzy,
            template,
        },
        score,
    )
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Raw evaluation counts for one window. Incidents are the alert unit;
/// `fp_emails` backs the email-level false-positive rate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub detected_known: u64,
    pub detected_new: u64,
    pub missed: u64,
    pub fp_incidents: u64,
    pub fp_emails: u64,
    pub total_emails: u64,
}

impl EvalCounts {
    fn add(&mut self, other: &EvalCounts) {
        self.detected_known += other.detected_known;
        self.detected_new += other.detected_new;
        self.missed += other.missed;
        self.fp_incidents += other.fp_incidents;
        self.fp_emails += other.fp_emails;
        self.total_emails += other.total_emails;
    }
}

/// Metrics for one window, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowMetrics {
    pub name: String,
    #[serde(flatten)]
    pub counts: EvalCounts,
    pub detection_rate_pct: f64,
    pub fp_rate_pct: f64,
    pub precision_pct: f64,
}

impl WindowMetrics {
    pub fn from_counts(name: &str, counts: EvalCounts) -> Self {
        let detected = counts.detected_known + counts.detected_new;
        let known_total = detected + counts.missed;
        let detection_rate_pct = if known_total == 0 {
            0.0
        } else {
            detected as f64 / known_total as f64 * 100.0
        };
        let alerts = detected + counts.fp_incidents;
        let precision_pct = if alerts == 0 {
            0.0
        } else {
            detected as f64 / alerts as f64 * 100.0
        };
        let fp_rate_pct = if counts.total_emails == 0 {
            0.0
        } else {
            counts.fp_emails as f64 / counts.total_emails as f64 * 100.0
        };
        WindowMetrics {
            name: name.to_string(),
            counts,
            detection_rate_pct,
            fp_rate_pct,
            precision_pct,
        }
    }
}

/// Full evaluation report: per-window metrics plus their aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub windows: Vec<WindowMetrics>,
    pub aggregate: WindowMetrics,
}

/// Compute rates from per-window counts; the aggregate is the field-wise sum.
pub fn compute_metrics(windows: &[(String, EvalCounts)]) -> EvalReport {
    let mut total = EvalCounts::default();
    let mut out = Vec::with_capacity(windows.len());
    for (name, counts) in windows {
        total.add(counts);
        out.push(WindowMetrics::from_counts(name, *counts));
    }
    EvalReport {
        windows: out,
        aggregate: WindowMetrics::from_counts("aggregate", total),
    }
}

impl EvalReport {
    /// Console summary table: one metric per row, one column per window.
    pub fn render_table(&self) -> String {
        let mut cols: Vec<&WindowMetrics> = self.windows.iter().collect();
        cols.push(&self.aggregate);
        let rows: Vec<(&str, Vec<String>)> = vec![
            (
                "Detected Known Attacks",
                cols.iter().map(|w| w.counts.detected_known.to_string()).collect(),
            ),
            (
                "Detected New Attacks",
                cols.iter().map(|w| w.counts.detected_new.to_string()).collect(),
            ),
            (
                "Missed Attacks (FN)",
                cols.iter().map(|w| w.counts.missed.to_string()).collect(),
            ),
            (
                "Detection Rate",
                cols.iter().map(|w| format!("{:.1}%", w.detection_rate_pct)).collect(),
            ),
            (
                "Total Emails",
                cols.iter().map(|w| w.counts.total_emails.to_string()).collect(),
            ),
            (
                "False Positives (FP)",
                cols.iter().map(|w| w.counts.fp_incidents.to_string()).collect(),
            ),
            (
                "False Positive Rate",
                cols.iter().map(|w| format!("{:.5}%", w.fp_rate_pct)).collect(),
            ),
            (
                "Precision",
                cols.iter().map(|w| format!("{:.1}%", w.precision_pct)).collect(),
            ),
        ];
        let name_w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
        let col_ws: Vec<usize> = cols
            .iter()
            .enumerate()
            .map(|(i, w)| {
                rows.iter()
                    .map(|(_, vals)| vals[i].len())
                    .chain(std::iter::once(w.name.len()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut s = String::new();
        s.push_str(&format!("{:name_w$}", "Metric"));
        for (i, w) in cols.iter().enumerate() {
            s.push_str(&format!(" | {:>width$}", w.name, width = col_ws[i]));
        }
        s.push('\n');
        s.push_str(&"-".repeat(name_w + col_ws.iter().map(|w| w + 3).sum::<usize>()));
        s.push('\n');
        for (name, vals) in &rows {
            s.push_str(&format!("{name:name_w$}"));
            for (i, v) in vals.iter().enumerate() {
                s.push_str(&format!(" | {:>width$}", v, width = col_ws[i]));
            }
            s.push('\n');
        }
        s
    }
}

// ---------------------------------------------------------------------------
// Continuous learning
// ---------------------------------------------------------------------------

/// Evaluation configuration.
#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub train_window: Window,
    pub test_window: Window,
    pub train_config: TrainConfig,
    /// Monthly continuous learning (retrain at each month boundary). When
    /// false, one model scores the whole test window.
    pub monthly: bool,
    pub enable_fuzzy: bool,
    pub enable_template: bool,
}

impl EvalConfig {
    pub fn new(train_window: Window, test_window: Window, train_config: TrainConfig) -> Self {
        EvalConfig {
            train_window,
            test_window,
            train_config,
            monthly: true,
            enable_fuzzy: true,
            enable_template: true,
        }
    }
}

/// Leakage audit for one evaluation month.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonthAudit {
    pub month_start: i64,
    /// Latest sent_at across the training pool used for this month's model.
    pub train_pool_max_ts: Option<i64>,
    /// Upper end (exclusive) of the template-mining window, when templates
    /// were mined.
    pub template_window_end: Option<i64>,
    pub scored_emails: usize,
    /// Max over scored emails of (latest history timestamp read) - sent_at.
    /// Strictly negative means every read was strictly in the past.
    pub max_read_minus_sent: Option<i64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AuditLog {
    pub months: Vec<MonthAudit>,
}

/// Alerts produced for one evaluation month.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonthAlerts {
    pub month: String,
    pub incidents: Vec<Incident>,
}

#[derive(Debug)]
pub struct EvalRun {
    pub monthly_alerts: Vec<MonthAlerts>,
    pub report: EvalReport,
    pub audit: AuditLog,
    pub final_model: Forest,
}

struct FeatureCache {
    cache: Vec<Option<(Option<FeatureVector>, Option<i64>)>>,
}

impl FeatureCache {
    fn new(n: usize) -> Self {
        FeatureCache {
            cache: vec![None; n],
        }
    }

    fn get(
        &mut self,
        idx: usize,
        index: &CorpusIndex,
        det: &crate::features::DetectorContext,
    ) -> (Option<FeatureVector>, Option<i64>) {
        if let Some(v) = &self.cache[idx] {
            return v.clone();
        }
        let email = &index.emails()[idx];
        let computed = match index.org(&email.org_id) {
            Some(org) => {
                let ctx = det.feature_context(index, org);
                match extract_features_audited(email, &ctx) {
                    (Extraction::Vector(fv), max_read) => (Some(fv), max_read),
                    (Extraction::SkipBenign, _) => (None, None),
                }
            }
            None => (None, None),
        };
        self.cache[idx] = Some(computed.clone());
        computed
    }
}

fn truth_is_phish(email: &Email) -> bool {
    email.user_reported_phish || email.manual_label == Some(ManualLabel::Phish)
}

/// Run the evaluation protocol over a corpus: train on the train window,
/// then classify each test month with monthly continuous learning.
pub fn run_continuous_learning(
    index: &CorpusIndex,
    det: &crate::features::DetectorContext,
    initial_model: Option<Forest>,
    cfg: &EvalConfig,
) -> Result<EvalRun> {
    temporal_split(index, cfg.train_window, cfg.test_window)?;

    let mut cache = FeatureCache::new(index.emails().len());

    // Known-phish trigram sets (user-reported, employee-sent), time-ordered,
    // for the fuzzy subdetector's >= 24h-lookback comparisons.
    let mut known_phish: Vec<(i64, TrigramSet)> = Vec::new();
    if cfg.enable_fuzzy {
        for (i, e) in index.emails().iter().enumerate() {
            if e.user_reported_phish && index.is_employee_sent_at(i) {
                known_phish.push((e.sent_at.timestamp(), textsim::body_trigrams(&e.body_html)));
            }
        }
        known_phish.sort_by_key(|(t, _)| *t);
    }

    // Initial pools from the train window.
    let train_idx: Vec<usize> = index
        .emails_in(cfg.train_window.start, cfg.train_window.end)
        .filter(|&i| index.is_employee_sent_at(i))
        .collect();
    let mut phish_pool: Vec<usize> = Vec::new();
    let mut benign_candidates: Vec<usize> = Vec::new();
    for &i in &train_idx {
        let e = &index.emails()[i];
        if e.user_reported_phish {
            phish_pool.push(i);
        } else if e.manual_label != Some(ManualLabel::Phish) {
            benign_candidates.push(i);
        }
    }

    let to_examples = |idxs: &[usize], label: Label, cache: &mut FeatureCache| -> Vec<LabeledExample> {
        idxs.iter()
            .filter_map(|&i| {
                let (fv, _) = cache.get(i, index, det);
                fv.map(|features| LabeledExample {
                    features,
                    label,
                    email_id: index.emails()[i].id.clone(),
                })
            })
            .collect()
    };

    let phish_examples = to_examples(&phish_pool, Label::Phish, &mut cache);
    if phish_examples.is_empty() && initial_model.is_none() {
        return Err(Error::Train(
            "train window contains no user-reported phish with candidate URLs".into(),
        ));
    }
    let benign_pool_examples = to_examples(&benign_candidates, Label::Benign, &mut cache);
    // The benign sample is drawn once and only grows by confirmed FPs later.
    let mut benign_sample: Vec<LabeledExample> = if initial_model.is_none() {
        forest::downsample(
            &phish_examples,
            &benign_pool_examples,
            cfg.train_config.downsample_ratio,
            cfg.train_config.rng_seed,
        )?
        .into_iter()
        .filter(|e| e.label == Label::Benign)
        .collect()
    } else {
        Vec::new()
    };
    let mut phish_examples = phish_examples;

    let mut model = match initial_model {
        Some(m) => m,
        None => {
            let mut data = phish_examples.clone();
            data.extend(benign_sample.iter().cloned());
            forest::train(&data, &cfg.train_config)?
        }
    };

    // Month boundaries covering the test window.
    let mut month_bounds: Vec<(DateTime<Utc>, DateTime<Utc>)> = Vec::new();
    if cfg.monthly {
        let mut cur = cfg.test_window.start;
        while cur < cfg.test_window.end {
            let m_end = month_next(month_floor(cur)).min(cfg.test_window.end);
            month_bounds.push((cur, m_end));
            cur = m_end;
        }
    } else {
        month_bounds.push((cfg.test_window.start, cfg.test_window.end));
    }

    let mut monthly_alerts = Vec::new();
    let mut window_counts: Vec<(String, EvalCounts)> = Vec::new();
    let mut audit = AuditLog::default();

    for (m_start, m_end) in month_bounds {
        let month_label = m_start.format("%Y-%m").to_string();

        // Templates mined from the calendar month preceding this one.
        let (templates, template_window_end) = if cfg.enable_template {
            let prev_start = month_floor(m_start - chrono::Duration::seconds(1));
            let prev_end = month_floor(m_start);
            let mined = textsim::mine_templates(
                index,
                prev_start,
                prev_end,
                &det.ranking,
                &det.lists,
                &textsim::TemplateMiningConfig::default(),
            );
            let sets: Vec<TrigramSet> = mined.iter().map(|t| t.trigrams()).collect();
            (sets, Some(prev_end.timestamp()))
        } else {
            (Vec::new(), None)
        };

        let month_emails: Vec<usize> = index
            .emails_in(m_start, m_end)
            .filter(|&i| index.is_employee_sent_at(i))
            .collect();

        // Precompute features (sequentially fills the cache; extraction
        // itself is the hot path and is parallelized below).
        let fvs: Vec<(Option<FeatureVector>, Option<i64>)> = {
            let precomputed: Vec<Option<(Option<FeatureVector>, Option<i64>)>> = month_emails
                .par_iter()
                .map(|&i| {
                    let email = &index.emails()[i];
                    index.org(&email.org_id).map(|org| {
                        let ctx = det.feature_context(index, org);
                        match extract_features_audited(email, &ctx) {
                            (Extraction::Vector(fv), max_read) => (Some(fv), max_read),
                            (Extraction::SkipBenign, _) => (None, None),
                        }
                    })
                })
                .collect();
            month_emails
                .iter()
                .zip(precomputed)
                .map(|(&i, v)| {
                    let v = v.unwrap_or((None, None));
                    cache.cache[i] = Some(v.clone());
                    v
                })
                .collect()
        };

        let cutoff = |ts: i64| -> &[(i64, TrigramSet)] {
            let end = known_phish.partition_point(|(t, _)| *t <= ts - 86_400);
            &known_phish[..end]
        };

        let mut flagged: Vec<(usize, SubdetectorFlags, f64, FeatureVector)> = Vec::new();
        let mut max_read_minus_sent: Option<i64> = None;
        for (&i, (fv, max_read)) in month_emails.iter().zip(&fvs) {
            let email = &index.emails()[i];
            let sent_ts = email.sent_at.timestamp();
            let mut read_ts = *max_read;
            let Some(fv) = fv else {
                continue;
            };
            let known = if cfg.enable_fuzzy { cutoff(sent_ts) } else { &[] };
            if let Some((t, _)) = known.last() {
                read_ts = Some(read_ts.map_or(*t, |m| m.max(*t)));
            }
            let (label, score) = model.predict(fv);
            let main = label == Label::Phish;
            let mut fuzzy = false;
            let mut template = false;
            if fv.global_url_rep > POPULAR_RANK_CUTOFF && (!known.is_empty() || !templates.is_empty())
            {
                let trigrams = textsim::body_trigrams(&email.body_html);
                if !known.is_empty() {
                    let sets: Vec<&TrigramSet> = known.iter().map(|(_, s)| s).collect();
                    fuzzy = sets
                        .iter()
                        .map(|s| textsim::jaccard(&trigrams, s))
                        .fold(0.0, f64::max)
                        >= SIMILARITY_THRESHOLD;
                }
                if !templates.is_empty() {
                    template = textsim::template_similarity_score(&trigrams, &templates)
                        >= SIMILARITY_THRESHOLD;
                }
            }
            if let Some(r) = read_ts {
                let margin = r - sent_ts;
                max_read_minus_sent =
                    Some(max_read_minus_sent.map_or(margin, |m| m.max(margin)));
            }
            let flags = SubdetectorFlags {
                main,
                fuzzy,
                template,
            };
            if flags.overall() {
                flagged.push((i, flags, score, fv.clone()));
            }
        }

        // Incident-level aggregation of this month's alerts.
        let mut incident_map: BTreeMap<IncidentKey, Incident> = BTreeMap::new();
        for (i, flags, score, fv) in &flagged {
            let email = &index.emails()[*i];
            let key = IncidentKey {
                sender: email.sender.clone(),
                subject: email.subject.clone(),
            };
            let entry = incident_map.entry(key.clone()).or_insert_with(|| Incident {
                key,
                email_ids: Vec::new(),
                first_sent_at: email.sent_at,
                flags: SubdetectorFlags::default(),
                ground_truth: GroundTruth::Unknown,
                score: 0.0,
                feature_vector: None,
            });
            entry.email_ids.push(email.id.clone());
            entry.first_sent_at = entry.first_sent_at.min(email.sent_at);
            entry.flags.main |= flags.main;
            entry.flags.fuzzy |= flags.fuzzy;
            entry.flags.template |= flags.template;
            if *score >= entry.score || entry.feature_vector.is_none() {
                entry.score = *score;
                entry.feature_vector = Some(fv.clone());
            }
        }

        // Ground-truth incidents for this month (reported or labeled phish).
        let truth_emails: Vec<&Email> = month_emails
            .iter()
            .map(|&i| &index.emails()[i])
            .filter(|e| truth_is_phish(e))
            .collect();
        let truth_incidents = dedup_incidents(truth_emails.iter().copied());
        let truth_keys: HashSet<&IncidentKey> = truth_incidents.iter().map(|i| &i.key).collect();
        let reported_keys: HashSet<IncidentKey> = truth_emails
            .iter()
            .filter(|e| e.user_reported_phish)
            .map(|e| IncidentKey {
                sender: e.sender.clone(),
                subject: e.subject.clone(),
            })
            .collect();

        let mut counts = EvalCounts {
            total_emails: month_emails.len() as u64,
            ..Default::default()
        };
        for (key, incident) in incident_map.iter_mut() {
            if truth_keys.contains(key) {
                if reported_keys.contains(key) {
                    counts.detected_known += 1;
                    incident.ground_truth = GroundTruth::Reported;
                } else {
                    counts.detected_new += 1;
                    incident.ground_truth = GroundTruth::DetectorConfirmed;
                }
            } else {
                counts.fp_incidents += 1;
                let all_benign_labeled = incident.email_ids.iter().all(|id| {
                    index.get(id).map(|e| e.manual_label == Some(ManualLabel::Benign))
                        == Some(true)
                });
                incident.ground_truth = if all_benign_labeled {
                    GroundTruth::Benign
                } else {
                    GroundTruth::Unknown
                };
            }
        }
        for t in &truth_incidents {
            if !incident_map.contains_key(&t.key) {
                counts.missed += 1;
            }
        }
        counts.fp_emails = flagged
            .iter()
            .filter(|(i, ..)| !truth_is_phish(&index.emails()[*i]))
            .count() as u64;

        audit.months.push(MonthAudit {
            month_start: m_start.timestamp(),
            train_pool_max_ts: phish_pool_max_ts(index, &phish_examples, &benign_sample),
            template_window_end,
            scored_emails: month_emails.len(),
            max_read_minus_sent,
        });

        // Month-end pool folding: confirmed detections and user reports join
        // the phish pool; confirmed false positives join the benign pool.
        let mut fold_phish: Vec<usize> = Vec::new();
        let mut fold_benign: Vec<usize> = Vec::new();
        let flagged_ids: HashSet<usize> = flagged.iter().map(|(i, ..)| *i).collect();
        for &i in &month_emails {
            let e = &index.emails()[i];
            if e.user_reported_phish {
                fold_phish.push(i);
            } else if flagged_ids.contains(&i) {
                match e.manual_label {
                    Some(ManualLabel::Phish) => fold_phish.push(i),
                    Some(ManualLabel::Benign) => fold_benign.push(i),
                    None => {} // unlabeled alerts enter neither pool
                }
            }
        }
        phish_examples.extend(to_examples(&fold_phish, Label::Phish, &mut cache));
        benign_sample.extend(to_examples(&fold_benign, Label::Benign, &mut cache));

        monthly_alerts.push(MonthAlerts {
            month: month_label.clone(),
            incidents: incident_map.into_values().collect(),
        });
        window_counts.push((month_label, counts));

        // Retrain with unchanged hyperparameters for the next month.
        if cfg.monthly && !phish_examples.is_empty() && !benign_sample.is_empty() {
            let mut data = phish_examples.clone();
            data.extend(benign_sample.iter().cloned());
            model = forest::train(&data, &cfg.train_config)?;
        }
    }

    Ok(EvalRun {
        monthly_alerts,
        report: compute_metrics(&window_counts),
        audit,
        final_model: model,
    })
}

/// Score one window with a fixed model (no retraining): classify every
/// employee-sent email, apply the enabled subdetectors, and return the
/// deduplicated alert incidents.
pub fn detect_window(
    index: &CorpusIndex,
    det: &crate::features::DetectorContext,
    model: &Forest,
    window: Window,
    templates: &[crate::textsim::Template],
    enable_fuzzy: bool,
) -> Result<Vec<Incident>> {
    let mut known_phish: Vec<(i64, TrigramSet)> = Vec::new();
    if enable_fuzzy {
        for (i, e) in index.emails().iter().enumerate() {
            if e.user_reported_phish && index.is_employee_sent_at(i) {
                known_phish.push((e.sent_at.timestamp(), textsim::body_trigrams(&e.body_html)));
            }
        }
        known_phish.sort_by_key(|(t, _)| *t);
    }
    let known_times: Vec<i64> = known_phish.iter().map(|(t, _)| *t).collect();
    let known_sets: Vec<TrigramSet> = known_phish.into_iter().map(|(_, s)| s).collect();
    let template_sets: Vec<TrigramSet> = templates.iter().map(|t| t.trigrams()).collect();

    let mut incident_map: BTreeMap<IncidentKey, Incident> = BTreeMap::new();
    for i in index.emails_in(window.start, window.end) {
        if !index.is_employee_sent_at(i) {
            continue;
        }
        let email = &index.emails()[i];
        let Some(org) = index.org(&email.org_id) else {
            continue;
        };
        let ctx = det.feature_context(index, org);
        let (extraction, _) = extract_features_audited(email, &ctx);
        let Extraction::Vector(fv) = extraction else {
            continue;
        };
        let end = known_times.partition_point(|t| *t <= email.sent_at.timestamp() - 86_400);
        let (flags, score) = flags_for(email, &fv, model, &known_sets[..end], &template_sets);
        if !flags.overall() {
            continue;
        }
        let key = IncidentKey {
            sender: email.sender.clone(),
            subject: email.subject.clone(),
        };
        let entry = incident_map.entry(key.clone()).or_insert_with(|| Incident {
            key,
            email_ids: Vec::new(),
            first_sent_at: email.sent_at,
            flags: SubdetectorFlags::default(),
            ground_truth: GroundTruth::Unknown,
            score: 0.0,
            feature_vector: None,
        });
        entry.email_ids.push(email.id.clone());
        entry.first_sent_at = entry.first_sent_at.min(email.sent_at);
        entry.flags.main |= flags.main;
        entry.flags.fuzzy |= flags.fuzzy;
        entry.flags.template |= flags.template;
        if score >= entry.score || entry.feature_vector.is_none() {
            entry.score = score;
            entry.feature_vector = Some(fv);
        }
    }
    Ok(incident_map.into_values().collect())
}

fn phish_pool_max_ts(
    index: &CorpusIndex,
    phish: &[LabeledExample],
    benign: &[LabeledExample],
) -> Option<i64> {
    phish
        .iter()
        .chain(benign)
        .filter_map(|e| index.get(&e.email_id))
        .map(|e| e.sent_at.timestamp())
        .max()
}

// ---------------------------------------------------------------------------
// Alert output
// ---------------------------------------------------------------------------

pub fn write_alerts<W: Write>(mut w: W, months: &[MonthAlerts]) -> Result<()> {
    for m in months {
        for incident in &m.incidents {
            #[derive(Serialize)]
            struct AlertRecord<'a> {
                month: &'a str,
                sender: &'a str,
                subject: &'a str,
                email_ids: &'a [String],
                first_sent_at: String,
                score: f64,
                flags: &'a SubdetectorFlags,
                #[serde(skip_serializing_if = "Option::is_none")]
                feature_vector: &'a Option<FeatureVector>,
            }
            let rec = AlertRecord {
                month: &m.month,
                sender: &incident.key.sender,
                subject: &incident.key.subject,
                email_ids: &incident.email_ids,
                first_sent_at: crate::corpus::format_ts(incident.first_sent_at),
                score: incident.score,
                flags: &incident.flags,
                feature_vector: &incident.feature_vector,
            };
            writeln!(w, "{}", serde_json::to_string(&rec).expect("alert serializes"))?;
        }
    }
    Ok(())
}

/// Load alert incident keys and email ids from an alert file (used by the
/// characterization CLI to add detector-confirmed incidents).
pub fn load_alert_email_ids(path: &Path) -> Result<Vec<String>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut ids = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(&line).map_err(|e| Error::Record {
            path: path.display().to_string(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        if let Some(arr) = v.get("email_ids").and_then(|a| a.as_array()) {
            for id in arr {
                if let Some(s) = id.as_str() {
                    ids.push(s.to_string());
                }
            }
        }
    }
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{email, ts};

    #[test]
    fn dedup_groups_by_sender_subject() {
        let mut emails = Vec::new();
        for i in 0..100 {
            let mut e = email(
                &format!("e{i}"), "org1", "ato@company.com",
                &[&format!("r{i}@company.com")],
                "2018-07-03T10:00:00Z",
            );
            e.subject = "Invoice".into();
            emails.push(e);
        }
        let refs: Vec<&Email> = emails.iter().collect();
        let incidents = dedup_incidents(refs);
        assert_eq!(incidents.len(), 1);
        assert_eq!(incidents[0].email_ids.len(), 100);

        let mut other = email("x1", "org1", "other@company.com", &["r@company.com"], "2018-07-03T11:00:00Z");
        other.subject = "Invoice".into();
        let mut all = emails.clone();
        all.push(other);
        let refs: Vec<&Email> = all.iter().collect();
        assert_eq!(dedup_incidents(refs).len(), 2);

        assert!(dedup_incidents(Vec::<&Email>::new()).is_empty());
    }

    #[test]
    fn dedup_ignores_duplicated_emails() {
        let e = email("e1", "org1", "a@company.com", &["r@company.com"], "2018-07-03T10:00:00Z");
        let incidents = dedup_incidents(vec![&e, &e, &e]);
        assert_eq!(incidents.len(), 1);
        assert_eq!(incidents[0].email_ids, vec!["e1".to_string()]);
    }

    #[test]
    fn temporal_split_boundaries() {
        let emails = vec![
            email("e1", "org1", "a@company.com", &["b@company.com"], "2018-04-15T00:00:00Z"),
            email("e2", "org1", "a@company.com", &["b@company.com"], "2018-07-01T00:00:00Z"),
        ];
        let index = CorpusIndex::build(emails, vec![crate::corpus::OrgConfig::new("org1", &["company.com"])]);
        let train = Window::new(ts("2018-04-01T00:00:00Z"), ts("2018-07-01T00:00:00Z")).unwrap();
        let test = Window::new(ts("2018-07-01T00:00:00Z"), ts("2018-11-01T00:00:00Z")).unwrap();
        let (tr, te) = temporal_split(&index, train, test).unwrap();
        assert_eq!(tr.len(), 1);
        assert_eq!(te.len(), 1);
        // The boundary-instant email landed in the test slice.
        assert_eq!(index.emails()[te[0]].id, "e2");

        let overlapping = Window::new(ts("2018-06-01T00:00:00Z"), ts("2018-08-01T00:00:00Z")).unwrap();
        assert!(temporal_split(&index, train, overlapping).is_err());
        assert!(Window::new(ts("2018-07-01T00:00:00Z"), ts("2018-07-01T00:00:00Z")).is_err());
    }

    #[test]
    fn metrics_reproduce_published_arithmetic() {
        let report = compute_metrics(&[
            (
                "train".into(),
                EvalCounts {
                    detected_known: 34,
                    detected_new: 28,
                    missed: 8,
                    fp_incidents: 136,
                    fp_emails: 136,
                    total_emails: 25_670_264,
                },
            ),
            (
                "test".into(),
                EvalCounts {
                    detected_known: 47,
                    detected_new: 49,
                    missed: 14,
                    fp_incidents: 316,
                    fp_emails: 316,
                    total_emails: 87_413_431,
                },
            ),
        ]);
        let train = &report.windows[0];
        let test = &report.windows[1];
        assert!((train.detection_rate_pct - 88.6).abs() < 0.05);
        assert!((test.detection_rate_pct - 87.3).abs() < 0.05);
        assert!((train.precision_pct - 31.3).abs() < 0.05);
        assert!((test.precision_pct - 23.3).abs() < 0.05);
        assert!((train.fp_rate_pct - 0.00053).abs() < 0.00001);
        assert!((test.fp_rate_pct - 0.00036).abs() < 0.00001);
    }

    #[test]
    fn rates_guard_zero_denominators() {
        let m = WindowMetrics::from_counts("empty", EvalCounts::default());
        assert_eq!(m.detection_rate_pct, 0.0);
        assert_eq!(m.precision_pct, 0.0);
        assert_eq!(m.fp_rate_pct, 0.0);
    }

    #[test]
    fn table_has_one_line_per_metric() {
        let report = compute_metrics(&[(
            "2018-07".into(),
            EvalCounts {
                detected_known: 1,
                detected_new: 2,
                missed: 1,
                fp_incidents: 3,
                fp_emails: 3,
                total_emails: 1000,
            },
        )]);
        let table = report.render_table();
        for needle in [
            "Detected Known Attacks",
            "Detected New Attacks",
            "Missed Attacks (FN)",
            "Detection Rate",
            "Total Emails",
            "False Positives (FP)",
            "False Positive Rate",
            "Precision",
        ] {
            assert!(table.contains(needle), "missing row {needle}\n{table}");
        }
    }
}
