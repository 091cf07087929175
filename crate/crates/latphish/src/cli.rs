//! Command-line entry point: corpus generation, validation, training,
//! detection, evaluation, template mining, characterization, and metrics.
//!
//! Every run that writes files also writes a run manifest (command, config
//! hash, input digests, output paths, tool version) next to its primary
//! output. All randomness flows from explicit `--seed` flags; subcommands
//! read and write only through explicit path flags.

use std::path::{Path, PathBuf};

use chrono::{DateTime, TimeZone, Utc};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::characterize::{self, CharacterizeConfig, Dictionary};
use crate::corpus::{self, CorpusIndex};
use crate::error::{Error, Result};
use crate::features::{DetectorContext, KeywordList};
use crate::forest::{self, Forest, TrainConfig, DEFAULT_SEED};
use crate::pipeline::{self, EvalConfig, EvalCounts, Window};
use crate::syngen::{self, GenConfig};
use crate::textsim;
use crate::urlrep::{DomainRanking, ShortlinkMap, SpecialDomainLists};

#[derive(Parser)]
#[command(
    name = "latphish",
    version,
    about = "Lateral phishing detection and characterization toolkit"
)]
struct Cli {
    /// Worker threads (default: available cores). Results are identical
    /// across thread counts.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic corpus with injected campaigns.
    Gen(GenArgs),
    /// Lint a corpus file and report per-line diagnostics.
    Validate(ValidateArgs),
    /// Fit the classifier on one window and save the model.
    Train(TrainArgs),
    /// Score a window with a saved model and write alert records.
    Detect(DetectArgs),
    /// Temporal split plus monthly continuous learning over a test window.
    Eval(EvalArgs),
    /// Mine popular-text templates from one calendar month.
    MineTemplates(MineTemplatesArgs),
    /// Characterize attacker behavior over the labeled attack corpus.
    Characterize(CharacterizeArgs),
    /// Compute the evaluation summary table from a raw counts file.
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Output directory for corpus, org, ranking, keyword, shortlink, list,
    /// and manifest files.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Number of organizations (overrides the config file).
    #[arg(long)]
    orgs: Option<usize>,
    /// Number of calendar months (overrides the config file).
    #[arg(long)]
    months: Option<u32>,
    /// Full generator config as JSON (defaults to the built-in config).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    orgs: PathBuf,
    /// Optional report file; diagnostics always go to stdout.
    #[arg(long)]
    out_report: Option<PathBuf>,
}

#[derive(Args)]
struct DetectorInputs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    orgs: PathBuf,
    #[arg(long)]
    ranking: PathBuf,
    /// Keyword list file (default: the bundled list).
    #[arg(long)]
    keywords: Option<PathBuf>,
    /// Offline shortlink resolution map (default: empty).
    #[arg(long)]
    shortlinks: Option<PathBuf>,
    /// Shortener domain list (default: bundled).
    #[arg(long)]
    shorteners: Option<PathBuf>,
    /// Content-hosting domain list (default: bundled).
    #[arg(long)]
    content_hosts: Option<PathBuf>,
    /// Freemail domain list (default: bundled).
    #[arg(long)]
    freemail: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    inputs: DetectorInputs,
    /// Training window, e.g. 2018-04..2018-06 (inclusive months) or two
    /// RFC 3339 instants start..end.
    #[arg(long)]
    window: String,
    /// Training hyperparameters as JSON (default: 64 trees, depth 8,
    /// min leaf 4, ratio 200).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out_model: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    inputs: DetectorInputs,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    window: String,
    /// Template store mined earlier with mine-templates (enables the
    /// template subdetector).
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Disable the fuzzy known-phish subdetector.
    #[arg(long, default_value_t = false)]
    no_fuzzy: bool,
    #[arg(long)]
    out_alerts: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    inputs: DetectorInputs,
    #[arg(long)]
    train_window: String,
    #[arg(long)]
    test_window: String,
    /// Retrain at each month boundary (continuous learning).
    #[arg(long, default_value_t = false)]
    monthly: bool,
    /// Start from a saved model instead of training on the train window.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Training hyperparameters as JSON (default: production config).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out_alerts: PathBuf,
    #[arg(long)]
    out_report: PathBuf,
}

#[derive(Args)]
struct MineTemplatesArgs {
    #[command(flatten)]
    inputs: DetectorInputs,
    /// Calendar month to mine, e.g. 2018-04.
    #[arg(long)]
    month: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CharacterizeArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    orgs: PathBuf,
    /// Alert file whose email ids are added to the attack set.
    #[arg(long)]
    alerts: Option<PathBuf>,
    /// Common-English dictionary file (default: bundled).
    #[arg(long)]
    wordlist: Option<PathBuf>,
    #[arg(long)]
    out_report: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    /// JSON counts file: {"windows": [{"name", "detected_known",
    /// "detected_new", "missed", "false_positives", "total_emails"}]}.
    #[arg(long)]
    counts: PathBuf,
    /// Optional JSON report output (also enables the run manifest).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parse arguments and run. Returns the process exit code: 0 success,
/// 1 data/processing error, 2 usage error.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        // Ignore the error if a pool already exists (e.g. repeated in-process
        // dispatch); results do not depend on the thread count.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = match cli.command {
        Command::Gen(args) => run_gen(args),
        Command::Validate(args) => run_validate(args),
        Command::Train(args) => run_train(args),
        Command::Detect(args) => run_detect(args),
        Command::Eval(args) => run_eval(args),
        Command::MineTemplates(args) => run_mine_templates(args),
        Command::Characterize(args) => run_characterize(args),
        Command::Metrics(args) => run_metrics(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    command: String,
    tool_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    config_sha256: String,
    inputs: Vec<FileDigest>,
    outputs: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn file_digest(path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path)?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

fn write_run_manifest(
    command: &str,
    seed: Option<u64>,
    config: &serde_json::Value,
    inputs: &[&Path],
    outputs: &[&Path],
    primary_output: &Path,
) -> Result<()> {
    let manifest = RunManifest {
        command: command.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        config_sha256: sha256_hex(config.to_string().as_bytes()),
        inputs: inputs.iter().map(|p| file_digest(p)).collect::<Result<_>>()?,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    let path = manifest_path(primary_output);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).expect("manifest"))?;
    Ok(())
}

fn manifest_path(primary_output: &Path) -> PathBuf {
    if primary_output.is_dir() {
        primary_output.join("run_manifest.json")
    } else {
        let mut name = primary_output.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        primary_output.with_file_name(name)
    }
}

// ---------------------------------------------------------------------------
// Shared loading
// ---------------------------------------------------------------------------

fn parse_month(s: &str) -> Result<DateTime<Utc>> {
    let (y, m) = s
        .split_once('-')
        .ok_or_else(|| Error::Window(format!("expected YYYY-MM, got {s:?}")))?;
    let year: i32 = y.parse().map_err(|_| Error::Window(format!("bad year in {s:?}")))?;
    let month: u32 = m.parse().map_err(|_| Error::Window(format!("bad month in {s:?}")))?;
    Utc.with_ymd_and_hms(year, month, 1, 0, 0, 0)
        .single()
        .ok_or_else(|| Error::Window(format!("invalid month {s:?}")))
}

/// Parse `A..B` where A and B are either calendar months (inclusive range)
/// or RFC 3339 instants (half-open range).
pub fn parse_window(s: &str) -> Result<Window> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| Error::Window(format!("expected START..END, got {s:?}")))?;
    if let (Ok(start), Ok(end)) = (
        DateTime::parse_from_rfc3339(a),
        DateTime::parse_from_rfc3339(b),
    ) {
        return Window::new(start.with_timezone(&Utc), end.with_timezone(&Utc));
    }
    let start = parse_month(a)?;
    let last = parse_month(b)?;
    Window::new(start, corpus::month_next(last))
}

fn load_index(corpus_path: &Path, orgs_path: &Path) -> Result<(CorpusIndex, usize)> {
    let orgs = corpus::load_orgs(orgs_path)?;
    let outcome = corpus::load_corpus(corpus_path, orgs)?;
    for e in &outcome.errors {
        eprintln!("{}: {}", corpus_path.display(), e);
    }
    let n_errors = outcome.errors.len();
    Ok((outcome.index, n_errors))
}

impl DetectorInputs {
    fn load(&self) -> Result<DetectorContext> {
        let ranking = DomainRanking::load(&self.ranking)?;
        let keywords = match &self.keywords {
            Some(p) => KeywordList::load(p)?,
            None => KeywordList::builtin(),
        };
        let resolver_map = match &self.shortlinks {
            Some(p) => ShortlinkMap::load(p)?,
            None => ShortlinkMap::default(),
        };
        let mut lists = SpecialDomainLists::default();
        if let Some(p) = &self.shorteners {
            lists.shortener_domains = crate::urlrep::load_domain_list(p)?;
        }
        if let Some(p) = &self.content_hosts {
            lists.content_hosting_domains = crate::urlrep::load_domain_list(p)?;
        }
        if let Some(p) = &self.freemail {
            lists.freemail_domains = crate::urlrep::load_domain_list(p)?;
        }
        Ok(DetectorContext {
            ranking,
            lists,
            keywords,
            resolver_map,
        })
    }

    fn paths(&self) -> Vec<&Path> {
        let mut v: Vec<&Path> = vec![&self.corpus, &self.orgs, &self.ranking];
        for p in [
            &self.keywords,
            &self.shortlinks,
            &self.shorteners,
            &self.content_hosts,
            &self.freemail,
        ]
        .into_iter()
        .flatten()
        {
            v.push(p);
        }
        v
    }

    fn index(&self) -> Result<CorpusIndex> {
        let (index, _) = load_index(&self.corpus, &self.orgs)?;
        Ok(index)
    }
}

fn load_train_config(path: &Option<PathBuf>, seed: u64) -> Result<TrainConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            let mut cfg: TrainConfig = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            cfg.rng_seed = seed;
            Ok(cfg)
        }
        None => Ok(TrainConfig::production_default(seed)),
    }
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn run_gen(args: GenArgs) -> Result<i32> {
    let mut config = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str::<GenConfig>(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => GenConfig::default_config(args.seed),
    };
    config.seed = args.seed;
    if let Some(orgs) = args.orgs {
        config.n_orgs = orgs;
    }
    if let Some(months) = args.months {
        config.months = months;
    }
    let summary = syngen::generate(&config, &args.out)?;
    println!(
        "generated {} emails ({} phish across {} incidents) for {} mailboxes in {} orgs -> {}",
        summary.emails,
        summary.phish_emails,
        summary.incidents,
        summary.mailboxes,
        config.n_orgs,
        args.out.display()
    );
    let outputs: Vec<PathBuf> = [
        "corpus.jsonl",
        "orgs.jsonl",
        "ranking.csv",
        "keywords.txt",
        "shortlinks.tsv",
        "shorteners.txt",
        "content_hosts.txt",
        "freemail.txt",
        "manifest.jsonl",
    ]
    .iter()
    .map(|f| args.out.join(f))
    .collect();
    let output_refs: Vec<&Path> = outputs.iter().map(|p| p.as_path()).collect();
    write_run_manifest(
        "gen",
        Some(args.seed),
        &serde_json::to_value(&config).expect("config"),
        &[],
        &output_refs,
        &args.out,
    )?;
    Ok(0)
}

fn run_validate(args: ValidateArgs) -> Result<i32> {
    let orgs = corpus::load_orgs(&args.orgs)?;
    let n_orgs = orgs.len();
    let outcome = corpus::load_corpus(&args.corpus, orgs)?;
    for e in &outcome.errors {
        println!("{}: {}", args.corpus.display(), e);
    }
    let employee_sent = (0..outcome.index.emails().len())
        .filter(|&i| outcome.index.is_employee_sent_at(i))
        .count();
    let summary = serde_json::json!({
        "emails": outcome.index.emails().len(),
        "rejected_records": outcome.errors.len(),
        "orgs": n_orgs,
        "employee_sent": employee_sent,
    });
    println!("{summary}");
    if let Some(out) = &args.out_report {
        std::fs::write(out, serde_json::to_string_pretty(&summary).expect("summary"))?;
        write_run_manifest(
            "validate",
            None,
            &summary,
            &[&args.corpus, &args.orgs],
            &[out],
            out,
        )?;
    }
    Ok(if outcome.errors.is_empty() { 0 } else { 1 })
}

fn run_train(args: TrainArgs) -> Result<i32> {
    let det = args.inputs.load()?;
    let index = args.inputs.index()?;
    let window = parse_window(&args.window)?;
    let train_config = load_train_config(&args.config, args.seed)?;
    let model = train_on_window(&index, &det, window, &train_config)?;
    model.save(&args.out_model)?;
    println!(
        "trained {} trees on window {} (max depth observed {}) -> {}",
        model.n_trees(),
        args.window,
        model.max_tree_depth(),
        args.out_model.display()
    );
    for (name, w) in crate::features::FEATURE_NAMES.iter().zip(model.importances()) {
        println!("  importance {name}: {w:.3}");
    }
    write_run_manifest(
        "train",
        Some(args.seed),
        &serde_json::to_value(&train_config).expect("config"),
        &args.inputs.paths(),
        &[&args.out_model],
        &args.out_model,
    )?;
    Ok(0)
}

/// Fit the forest on one window: user-reported phish vs a downsampled
/// benign pool, both restricted to emails with candidate URLs.
pub fn train_on_window(
    index: &CorpusIndex,
    det: &DetectorContext,
    window: Window,
    config: &TrainConfig,
) -> Result<Forest> {
    use crate::features::{extract_features, Extraction};
    use crate::forest::{Label, LabeledExample};
    let mut phish = Vec::new();
    let mut benign = Vec::new();
    for i in index.emails_in(window.start, window.end) {
        if !index.is_employee_sent_at(i) {
            continue;
        }
        let email = &index.emails()[i];
        let Some(org) = index.org(&email.org_id) else {
            continue;
        };
        let ctx = det.feature_context(index, org);
        let Extraction::Vector(features) = extract_features(email, &ctx) else {
            continue;
        };
        let example = LabeledExample {
            features,
            label: if email.user_reported_phish {
                Label::Phish
            } else {
                Label::Benign
            },
            email_id: email.id.clone(),
        };
        if email.user_reported_phish {
            phish.push(example);
        } else if email.manual_label != Some(corpus::ManualLabel::Phish) {
            benign.push(example);
        }
    }
    let data = forest::downsample(&phish, &benign, config.downsample_ratio, config.rng_seed)?;
    forest::train(&data, config)
}

fn run_detect(args: DetectArgs) -> Result<i32> {
    let det = args.inputs.load()?;
    let index = args.inputs.index()?;
    let window = parse_window(&args.window)?;
    let model = Forest::load(&args.model)?;
    let templates = match &args.templates {
        Some(p) => textsim::load_templates(p)?,
        None => Vec::new(),
    };
    let incidents =
        pipeline::detect_window(&index, &det, &model, window, &templates, !args.no_fuzzy)?;
    let months = vec![pipeline::MonthAlerts {
        month: args.window.clone(),
        incidents,
    }];
    let file = std::fs::File::create(&args.out_alerts)?;
    pipeline::write_alerts(std::io::BufWriter::new(file), &months)?;
    println!(
        "{} alert incident(s) -> {}",
        months[0].incidents.len(),
        args.out_alerts.display()
    );
    let mut inputs = args.inputs.paths();
    inputs.push(&args.model);
    if let Some(t) = &args.templates {
        inputs.push(t);
    }
    write_run_manifest(
        "detect",
        None,
        &serde_json::json!({"window": args.window, "no_fuzzy": args.no_fuzzy}),
        &inputs,
        &[&args.out_alerts],
        &args.out_alerts,
    )?;
    Ok(0)
}

fn run_eval(args: EvalArgs) -> Result<i32> {
    let det = args.inputs.load()?;
    let index = args.inputs.index()?;
    let train_config = load_train_config(&args.config, args.seed)?;
    let mut eval_cfg = EvalConfig::new(
        parse_window(&args.train_window)?,
        parse_window(&args.test_window)?,
        train_config.clone(),
    );
    eval_cfg.monthly = args.monthly;
    let initial = match &args.model {
        Some(p) => Some(Forest::load(p)?),
        None => None,
    };
    let run = pipeline::run_continuous_learning(&index, &det, initial, &eval_cfg)?;
    let file = std::fs::File::create(&args.out_alerts)?;
    pipeline::write_alerts(std::io::BufWriter::new(file), &run.monthly_alerts)?;
    let report_json = serde_json::json!({
        "report": run.report,
        "audit": run.audit,
    });
    std::fs::write(
        &args.out_report,
        serde_json::to_string_pretty(&report_json).expect("report"),
    )?;
    println!("{}", run.report.render_table());
    let mut inputs = args.inputs.paths();
    if let Some(m) = &args.model {
        inputs.push(m);
    }
    write_run_manifest(
        "eval",
        Some(args.seed),
        &serde_json::json!({
            "train_window": args.train_window,
            "test_window": args.test_window,
            "monthly": args.monthly,
            "train_config": train_config,
        }),
        &inputs,
        &[&args.out_alerts, &args.out_report],
        &args.out_report,
    )?;
    Ok(0)
}

fn run_mine_templates(args: MineTemplatesArgs) -> Result<i32> {
    let det = args.inputs.load()?;
    let index = args.inputs.index()?;
    let start = parse_month(&args.month)?;
    let end = corpus::month_next(start);
    let templates = textsim::mine_templates(
        &index,
        start,
        end,
        &det.ranking,
        &det.lists,
        &textsim::TemplateMiningConfig::default(),
    );
    let file = std::fs::File::create(&args.out)?;
    textsim::write_templates(std::io::BufWriter::new(file), &templates)?;
    println!("mined {} template(s) from {} -> {}", templates.len(), args.month, args.out.display());
    write_run_manifest(
        "mine-templates",
        None,
        &serde_json::json!({"month": args.month}),
        &args.inputs.paths(),
        &[&args.out],
        &args.out,
    )?;
    Ok(0)
}

fn run_characterize(args: CharacterizeArgs) -> Result<i32> {
    let (index, _) = load_index(&args.corpus, &args.orgs)?;
    let dictionary = match &args.wordlist {
        Some(p) => Dictionary::load(p)?,
        None => Dictionary::builtin(),
    };
    let extra_ids = match &args.alerts {
        Some(p) => pipeline::load_alert_email_ids(p)?,
        None => Vec::new(),
    };
    let report = characterize::build_report(&index, &extra_ids, &dictionary, &CharacterizeConfig::default())?;

    println!("ATOs: {}", report.profiles.len());
    println!("strategy counts:");
    for (s, n) in &report.strategy_counts {
        println!("  {s:<22} {n}");
    }
    println!("success links: {}", report.success_links.len());
    if let Some(m) = report.median_conversion {
        println!("median employees contacted per compromise: {m:.0}");
    }
    println!(
        "interactive ATOs: {}  stealthy ATOs: {}",
        report.interactive_atos, report.stealthy_atos
    );
    println!("tailoring (rows none/org/recipient x cols generic/enterprise/targeted):");
    for row in &report.tailoring.cells {
        println!("  {row:?}");
    }
    println!("unlabeled incidents: {}", report.tailoring.unlabeled);
    println!("top words:");
    for (w, n) in &report.top_words {
        println!("  {w:<16} {n}");
    }
    println!("incidents per weekday (Mon..Sun): {:?}", report.day_of_week);
    println!("quiescent-ATO incidents: {}", report.quiescent_incidents);

    std::fs::write(
        &args.out_report,
        serde_json::to_string_pretty(&report).expect("report"),
    )?;
    let mut inputs: Vec<&Path> = vec![&args.corpus, &args.orgs];
    if let Some(p) = &args.alerts {
        inputs.push(p);
    }
    if let Some(p) = &args.wordlist {
        inputs.push(p);
    }
    write_run_manifest(
        "characterize",
        None,
        &serde_json::json!({}),
        &inputs,
        &[&args.out_report],
        &args.out_report,
    )?;
    Ok(0)
}

#[derive(Debug, Serialize, Deserialize)]
struct CountsFile {
    windows: Vec<CountsEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CountsEntry {
    name: String,
    detected_known: u64,
    detected_new: u64,
    missed: u64,
    false_positives: u64,
    total_emails: u64,
}

fn run_metrics(args: MetricsArgs) -> Result<i32> {
    let text = std::fs::read_to_string(&args.counts)?;
    let counts: CountsFile = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", args.counts.display())))?;
    let windows: Vec<(String, EvalCounts)> = counts
        .windows
        .into_iter()
        .map(|w| {
            (
                w.name,
                EvalCounts {
                    detected_known: w.detected_known,
                    detected_new: w.detected_new,
                    missed: w.missed,
                    fp_incidents: w.false_positives,
                    fp_emails: w.false_positives,
                    total_emails: w.total_emails,
                },
            )
        })
        .collect();
    let report = pipeline::compute_metrics(&windows);
    println!("{}", report.render_table());
    if let Some(out) = &args.out {
        std::fs::write(out, serde_json::to_string_pretty(&report).expect("report"))?;
        write_run_manifest("metrics", None, &serde_json::json!({}), &[&args.counts], &[out], out)?;
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_parsing() {
        let w = parse_window("2018-04..2018-06").unwrap();
        assert_eq!(w.start, Utc.with_ymd_and_hms(2018, 4, 1, 0, 0, 0).unwrap());
        assert_eq!(w.end, Utc.with_ymd_and_hms(2018, 7, 1, 0, 0, 0).unwrap());
        let w = parse_window("2018-04-02T00:00:00Z..2018-04-03T12:00:00Z").unwrap();
        assert_eq!(w.start, Utc.with_ymd_and_hms(2018, 4, 2, 0, 0, 0).unwrap());
        assert!(parse_window("2018-04").is_err());
        assert!(parse_window("2018-06..2018-04").is_err());
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(dispatch(["latphish", "no-such-command"]), 2);
        assert_eq!(dispatch(["latphish", "eval"]), 2); // missing required flags
        assert_eq!(dispatch(["latphish", "--help"]), 0);
    }

    #[test]
    fn data_errors_exit_one() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.jsonl");
        let code = dispatch([
            "latphish",
            "validate",
            "--corpus",
            missing.to_str().unwrap(),
            "--orgs",
            missing.to_str().unwrap(),
        ]);
        assert_eq!(code, 1);
    }
}
