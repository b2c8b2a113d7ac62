//! Command-line interface.
//!
//! Exit status is 0 on success, 1 on invalid input (bad flags, missing or
//! malformed files, contradictory configuration) and 2 on runtime failure.
//! Logs go to standard error; data artifacts go to files.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use crate::corpus::{load_dataset, prepare_dataset, write_dataset, IntegrityReport, PreparedCorpus, PreparedFile};
use crate::encoder::PrecomputedEmbeddings;
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_release, higher_is_better, observations, read_aggregate, scott_knott_esd, write_aggregate, AggregateRow,
    RankingOrder, DEFAULT_THRESHOLD,
};
use crate::model::{
    predict_release, read_predictions, train, write_predictions, ModelCheckpoint, ModelConfig, PredictionRecord,
    ReportHeader,
};
use crate::synth::{generate_release, SynthConfig};
use crate::verify;

const FORMATS: &str = "\
FILE FORMATS

Dataset CSV (one release):
  filename,file-label,code_line,line_number,line-label
  Columns in any order; labels True/False.

Prepared cache (`prepare` output, tab-separated):
  #bafline-prepared v1
  #max_line_tokens=N
  ## free-form provenance lines
  #file<TAB>file_id<TAB>0|1
  file_id<TAB>line_number<TAB>0|1<TAB>token<TAB>token...

Configuration file: `key=value` lines, `#` comments. Keys: encoder,
  embed_dim, min_frequency, hidden, k, stride, heads, dropout, layer_norm,
  pooling_activation, batch_size, learning_rate, epochs, seed,
  max_line_tokens, max_lines, no_bigru, no_bafn. Flags override the file.

Precomputed line vectors: first line `#dim=D`, then
  file_id<TAB>line_number<TAB>v1 v2 ... vD

Checkpoint (binary, little-endian): magic `BAFLNDP\\0`, u32 version,
  length-prefixed config text, vocabulary, and training log, u32 block
  count, then per block: length-prefixed name, u64 rows, u64 cols, f64
  values in row-major order.

Predictions (JSON lines): a header object
  {\"format\":\"bafline-predictions v1\",\"seed\":S,\"config\":[[key,value],...]}
  then one object per file {\"file_id\":...,\"prob\":p,\"lines\":[[line,score],...]}
  with lines ranked most risky first.

Metric report (JSON): task, method, auc, ba, mcc, mcc_degenerate,
  recall_top20_loc, effort_top20_recall, threshold, counts, config.

Aggregate CSV: task,method,metric,value (metrics: auc, ba, mcc,
  recall_top20_loc, effort_top20_recall).
";

#[derive(Debug, Parser)]
#[command(name = "bafline", version, about = "Line-level defect prediction with bilinear attention fusion", after_long_help = FORMATS)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Log verbosity: error, warn, info, debug, trace.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tokenize a dataset CSV into a prepared cache.
    Prepare(PrepareArgs),
    /// Train a model; writes a checkpoint and a training log.
    Train(TrainArgs),
    /// Predict file probabilities and ranked lines for a release.
    Predict(PredictArgs),
    /// Compute the five metrics for a prediction report.
    Evaluate(EvaluateArgs),
    /// Print the top-N riskiest lines of a release as a table.
    Rank(RankArgs),
    /// Rank methods from an aggregate CSV with Scott-Knott ESD.
    Skesd(SkesdArgs),
    /// Run the finite-difference gradient verification suite.
    Gradcheck(GradcheckArgs),
    /// Check that precomputed vectors cover every line of a release.
    ValidateEmbeddings(ValidateEmbeddingsArgs),
    /// Write seeded synthetic releases with a planted defect marker.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Dataset CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Prepared cache to write.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = crate::corpus::DEFAULT_MAX_LINE_TOKENS)]
    pub max_line_tokens: usize,
}

/// Model configuration: an optional file plus per-key overrides.
#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// Flat `key=value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub encoder: Option<String>,
    #[arg(long)]
    pub embed_dim: Option<String>,
    #[arg(long)]
    pub min_frequency: Option<String>,
    #[arg(long)]
    pub hidden: Option<String>,
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub stride: Option<String>,
    #[arg(long)]
    pub heads: Option<String>,
    #[arg(long)]
    pub dropout: Option<String>,
    #[arg(long)]
    pub layer_norm: Option<String>,
    #[arg(long)]
    pub pooling_activation: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub max_line_tokens: Option<String>,
    #[arg(long)]
    pub max_lines: Option<String>,
    /// Replace the Bi-GRU with a linear map.
    #[arg(long)]
    pub no_bigru: bool,
    /// Replace bilinear fusion with mean pooling.
    #[arg(long)]
    pub no_bafn: bool,
}

impl ConfigArgs {
    /// Defaults, then the file, then flags.
    pub fn resolve(&self) -> Result<ModelConfig> {
        let mut cfg = ModelConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_text(&std::fs::read_to_string(path)?)?;
        }
        let overrides = [
            ("encoder", &self.encoder),
            ("embed_dim", &self.embed_dim),
            ("min_frequency", &self.min_frequency),
            ("hidden", &self.hidden),
            ("k", &self.k),
            ("stride", &self.stride),
            ("heads", &self.heads),
            ("dropout", &self.dropout),
            ("layer_norm", &self.layer_norm),
            ("pooling_activation", &self.pooling_activation),
            ("batch_size", &self.batch_size),
            ("learning_rate", &self.learning_rate),
            ("epochs", &self.epochs),
            ("seed", &self.seed),
            ("max_line_tokens", &self.max_line_tokens),
            ("max_lines", &self.max_lines),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if self.no_bigru {
            cfg.no_bigru = true;
        }
        if self.no_bafn {
            cfg.no_bafn = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training release (dataset CSV or prepared cache).
    #[arg(long)]
    pub train: PathBuf,
    /// Validation release used for epoch selection.
    #[arg(long)]
    pub validation: PathBuf,
    /// Precomputed line vectors (with `--encoder precomputed`).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(long)]
    pub output: PathBuf,
    /// Training log to write (default: `<output>.log`).
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Release to score (dataset CSV or prepared cache).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Prediction report to write (JSON lines).
    #[arg(long)]
    pub output: PathBuf,
    /// Require a checkpoint trained without the Bi-GRU.
    #[arg(long)]
    pub no_bigru: bool,
    /// Require a checkpoint trained without bilinear fusion.
    #[arg(long)]
    pub no_bafn: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    /// Ground-truth release (dataset CSV or prepared cache).
    #[arg(long)]
    pub truth: PathBuf,
    /// Metric report to write (JSON).
    #[arg(long)]
    pub output: PathBuf,
    /// Aggregate CSV to append the five metrics to.
    #[arg(long)]
    pub aggregate: Option<PathBuf>,
    #[arg(long, default_value = "task")]
    pub task: String,
    #[arg(long, default_value = "bafline")]
    pub method: String,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Release inspection order: `file-first` or `product`.
    #[arg(long, default_value = "file-first")]
    pub order: String,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub top: usize,
    /// Release inspection order: `file-first` or `product`.
    #[arg(long, default_value = "file-first")]
    pub order: String,
    /// Table to write (default: standard output).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SkesdArgs {
    /// Aggregate CSV (`task,method,metric,value`).
    #[arg(long)]
    pub input: PathBuf,
    /// Metric to compare.
    #[arg(long)]
    pub metric: String,
    /// Cluster ranks to write (JSON).
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ValidateEmbeddingsArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Release whose lines must be covered (dataset CSV or prepared cache).
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory for `<prefix>-<i>.csv` releases.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value = "synthetic")]
    pub prefix: String,
    #[arg(long, default_value_t = 3)]
    pub releases: usize,
    #[arg(long, default_value_t = 300)]
    pub files: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Loads a dataset CSV or a prepared cache, detected by its first line.
pub fn load_release(path: &Path, max_line_tokens: usize) -> Result<Vec<PreparedFile>> {
    let text = std::fs::read_to_string(path)?;
    if text.starts_with("#bafline-prepared") {
        let corpus = PreparedCorpus::from_text(&text)?;
        if corpus.max_line_tokens != max_line_tokens {
            warn!(
                "{} was prepared with max_line_tokens={} (configuration says {max_line_tokens})",
                path.display(),
                corpus.max_line_tokens
            );
        }
        return Ok(corpus.files);
    }
    let dataset = crate::corpus::read_dataset(text.as_bytes())?;
    for w in &dataset.warnings {
        warn!("{}: {w}", path.display());
    }
    let (corpus, report) = prepare_dataset(&dataset, max_line_tokens);
    log_integrity(path, &report);
    Ok(corpus.files)
}

fn log_integrity(path: &Path, r: &IntegrityReport) {
    info!(
        "{}: {} blank lines dropped, {} lines truncated, {} empty files",
        path.display(),
        r.blank_lines_dropped,
        r.truncated_lines,
        r.empty_files.len()
    );
    for (file, line) in &r.defective_blank_lines {
        warn!("{}: defective blank line {file}:{line} dropped", path.display());
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn parse_order(s: &str) -> Result<RankingOrder> {
    RankingOrder::parse(s).ok_or_else(|| Error::Config(format!("unknown ranking order {s:?} (file-first or product)")))
}

fn config_lines(cfg: &[(String, String)]) -> String {
    cfg.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
}

fn cmd_prepare(a: &PrepareArgs) -> Result<()> {
    let dataset = load_dataset(&a.input)?;
    for w in &dataset.warnings {
        warn!("{w}");
    }
    let (corpus, report) = prepare_dataset(&dataset, a.max_line_tokens);
    log_integrity(&a.input, &report);
    let header = vec![format!("source={}", a.input.display())];
    std::fs::write(&a.output, corpus.to_text(&header))?;
    info!("wrote {} files to {}", corpus.files.len(), a.output.display());
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let embeddings = a.embeddings.as_ref().map(PrecomputedEmbeddings::load).transpose()?;
    let train_files = load_release(&a.train, cfg.max_line_tokens)?;
    let val_files = load_release(&a.validation, cfg.max_line_tokens)?;
    let checkpoint = train(&cfg, &train_files, &val_files, embeddings.as_ref())?;
    checkpoint.save(&a.output)?;

    let log_path = a.log.clone().unwrap_or_else(|| {
        let mut p = a.output.clone().into_os_string();
        p.push(".log");
        PathBuf::from(p)
    });
    let mut log = String::new();
    for line in cfg.to_text().lines() {
        let _ = writeln!(log, "# {line}");
    }
    log.push_str("epoch\ttrain_loss\tval_auc\tval_loss\n");
    for e in &checkpoint.log.epochs {
        let _ = writeln!(log, "{}\t{}\t{}\t{}", e.epoch, e.train_loss, e.val_auc, e.val_loss);
    }
    let _ = writeln!(log, "# best_epoch={}", checkpoint.log.best_epoch);
    std::fs::write(&log_path, log)?;
    info!(
        "best epoch {}; wrote {} and {}",
        checkpoint.log.best_epoch,
        a.output.display(),
        log_path.display()
    );
    Ok(())
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let checkpoint = ModelCheckpoint::load(&a.checkpoint)?;
    checkpoint.ensure_ablation(a.no_bigru, a.no_bafn)?;
    let embeddings = a.embeddings.as_ref().map(PrecomputedEmbeddings::load).transpose()?;
    let files = load_release(&a.input, checkpoint.config.max_line_tokens)?;
    let records = predict_release(&checkpoint, &files, embeddings.as_ref())?;
    write_predictions(create(&a.output)?, &ReportHeader::for_checkpoint(&checkpoint), &records)?;
    info!("wrote {} predictions to {}", records.len(), a.output.display());
    Ok(())
}

fn read_report(path: &Path) -> Result<(Option<ReportHeader>, Vec<PredictionRecord>)> {
    read_predictions(BufReader::new(File::open(path)?))
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let order = parse_order(&a.order)?;
    let (header, records) = read_report(&a.predictions)?;
    let max_tokens = header
        .as_ref()
        .and_then(|h| h.config.iter().find(|(k, _)| k == "max_line_tokens"))
        .and_then(|(_, v)| v.parse().ok())
        .unwrap_or(crate::corpus::DEFAULT_MAX_LINE_TOKENS);
    let truth = load_release(&a.truth, max_tokens)?;
    let mut report = evaluate_release(&a.task, &a.method, &records, &truth, a.threshold, order)?;
    if let Some(h) = &header {
        report.config = h.config.iter().cloned().collect();
    }
    report.config.insert("ranking_order".into(), a.order.clone());
    std::fs::write(&a.output, serde_json::to_string_pretty(&report)? + "\n")?;
    if let Some(agg) = &a.aggregate {
        let mut rows = if agg.exists() { read_aggregate(File::open(agg)?)? } else { Vec::new() };
        rows.retain(|r| !(r.task == a.task && r.method == a.method));
        rows.extend(report.metric_values().iter().map(|(m, v)| AggregateRow {
            task: a.task.clone(),
            method: a.method.clone(),
            metric: m.to_string(),
            value: *v,
        }));
        write_aggregate(&rows, create(agg)?)?;
    }
    info!(
        "AUC {:.4}  BA {:.4}  MCC {:.4}  Recall@Top20%LOC {:.4}  Effort@Top20%Recall {:.4}",
        report.auc, report.ba, report.mcc, report.recall_top20_loc, report.effort_top20_recall
    );
    Ok(())
}

/// `(file_id, line, probability, score)` in inspection order, without
/// ground truth.
pub fn inspection_order(records: &[PredictionRecord], order: RankingOrder) -> Vec<(String, u32, f64, f64)> {
    let desc = |a: f64, b: f64| b.total_cmp(&a);
    let mut rows: Vec<(String, u32, f64, f64)> = records
        .iter()
        .flat_map(|r| r.lines.iter().map(move |&(ln, s)| (r.file_id.clone(), ln, r.prob, s)))
        .collect();
    match order {
        RankingOrder::FileFirst => rows.sort_by(|a, b| {
            desc(a.2, b.2)
                .then(a.0.cmp(&b.0))
                .then(desc(a.3, b.3))
                .then(a.1.cmp(&b.1))
        }),
        RankingOrder::Product => rows.sort_by(|a, b| {
            desc(a.2 * a.3, b.2 * b.3)
                .then(a.0.cmp(&b.0))
                .then(a.1.cmp(&b.1))
        }),
    }
    rows
}

fn cmd_rank(a: &RankArgs) -> Result<()> {
    let order = parse_order(&a.order)?;
    let (header, records) = read_report(&a.predictions)?;
    let rows = inspection_order(&records, order);
    let mut out: Box<dyn Write> = match &a.output {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    if let Some(h) = &header {
        writeln!(out, "# seed={} {}", h.seed, config_lines(&h.config))?;
    }
    writeln!(out, "{:>5}  {:<40} {:>6} {:>8} {:>12}", "rank", "file", "line", "prob", "score")?;
    for (i, (file, line, prob, score)) in rows.iter().take(a.top).enumerate() {
        writeln!(out, "{:>5}  {:<40} {:>6} {:>8.4} {:>12.6e}", i + 1, file, line, prob, score)?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_skesd(a: &SkesdArgs) -> Result<()> {
    let rows = read_aggregate(File::open(&a.input)?)?;
    let obs = observations(&rows, &a.metric)?;
    let hib = higher_is_better(&a.metric);
    let result = scott_knott_esd(&obs, hib)?;
    let doc = serde_json::json!({
        "metric": a.metric,
        "higher_is_better": hib,
        "tasks": obs.values().next().map_or(0, Vec::len),
        "result": result,
    });
    std::fs::write(&a.output, serde_json::to_string_pretty(&doc)? + "\n")?;
    for (i, cluster) in result.clusters.iter().enumerate() {
        info!("rank {}: {}", i + 1, cluster.join(", "));
    }
    Ok(())
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<bool> {
    let start = std::time::Instant::now();
    let results = verify::run_suite(a.seed)?;
    let mut all_ok = true;
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{:<10} {:<48} {:>12} {:>8}  status", "group", "check", "max rel err", "entries")?;
    for r in &results {
        all_ok &= r.passed();
        writeln!(
            stdout,
            "{:<10} {:<48} {:>12.3e} {:>8}  {}",
            r.group,
            r.name,
            r.report.max_rel_error,
            r.report.checked,
            if r.passed() { "ok" } else { "FAIL" }
        )?;
    }
    writeln!(
        stdout,
        "{} checks, tolerance {:e}, {:.2}s",
        results.len(),
        verify::TOLERANCE,
        start.elapsed().as_secs_f64()
    )?;
    Ok(all_ok)
}

fn cmd_validate_embeddings(a: &ValidateEmbeddingsArgs) -> Result<()> {
    let emb = PrecomputedEmbeddings::load(&a.embeddings)?;
    let files = load_release(&a.input, crate::corpus::DEFAULT_MAX_LINE_TOKENS)?;
    let covered = emb.validate_coverage(&files)?;
    info!("all {covered} lines covered ({}-dimensional vectors)", emb.dim());
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    std::fs::create_dir_all(&a.out_dir)?;
    for i in 1..=a.releases {
        let cfg = SynthConfig {
            files: a.files,
            seed: a.seed.wrapping_mul(1000).wrapping_add(i as u64),
            ..Default::default()
        };
        let tag = format!("{}-{i}", a.prefix);
        let path = a.out_dir.join(format!("{tag}.csv"));
        write_dataset(&generate_release(&cfg, &tag), create(&path)?)?;
        info!("wrote {}", path.display());
    }
    Ok(())
}

/// Runs one parsed command; `Ok(false)` signals a failed verification.
pub fn execute(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Prepare(a) => cmd_prepare(a).map(|_| true),
        Command::Train(a) => cmd_train(a).map(|_| true),
        Command::Predict(a) => cmd_predict(a).map(|_| true),
        Command::Evaluate(a) => cmd_evaluate(a).map(|_| true),
        Command::Rank(a) => cmd_rank(a).map(|_| true),
        Command::Skesd(a) => cmd_skesd(a).map(|_| true),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::ValidateEmbeddings(a) => cmd_validate_embeddings(a).map(|_| true),
        Command::Synth(a) => cmd_synth(a).map(|_| true),
    }
}

/// Parses `args`, runs the command, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log_level))
        .target(env_logger::Target::Stderr)
        .try_init();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return 1;
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match execute(&cli) {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("error: gradient verification failed");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}
