//! Command-line entry point: training, evaluation, retrieval, embedding
//! export, and 2-D projection over the sentpw library.
//!
//! Exit codes: 0 success, 2 configuration error (including bad flags and
//! unknown config-file keys), 3 data error, 1 internal failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sentpw::data::{
    load_dataset, load_poi_records, load_word_vectors, poi_class_dataset, tokenize, Dataset,
    DatasetKind, Sentence, TokenizeMode,
};
use sentpw::error::Error;
use sentpw::eval::{
    hit_at_n, inter_intra, pair_classification, pca2d, threshold_search, triplet_accuracy_model,
    EvalReport, EvalTask,
};
use sentpw::trainer::{
    fit_with_pretrained, load_checkpoint, save_checkpoint, write_metrics_log, Checkpoint,
    LossKind, TrainConfig,
};

#[derive(Parser)]
#[command(
    name = "sentpw",
    version,
    about = "Task-specific sentence embeddings via pair-weighted metric learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an encoder and write a checkpoint (metrics go to <out>.log).
    Train(TrainArgs),
    /// Search a threshold on dev pairs, then report accuracy/F1 on test pairs.
    EvalPairs(EvalPairsArgs),
    /// Report triplet accuracy of a checkpoint on a triplet file.
    EvalTriplets(EvalTripletsArgs),
    /// Hit@n retrieval over a class-labeled gallery.
    Search(SearchArgs),
    /// Write sentence embeddings as CSV (input: one sentence per line).
    Embed(EmbedArgs),
    /// Project class-labeled sentences to 2-D PCA coordinates (CSV x,y,label).
    Project(ProjectArgs),
    /// Run the threshold search alone on a dev pair file.
    Threshold(ThresholdArgs),
}

/// Flags shared by every subcommand. Precedence: flag > config file > default.
#[derive(Args, Clone, Default)]
struct CommonOpts {
    /// key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Loss: contrastive | triplet | multisim.
    #[arg(long)]
    loss: Option<String>,
    /// Informative-pair filter: on | off.
    #[arg(long)]
    filter: Option<String>,
    /// Positive-pair exponent scale of the multi-similarity loss.
    #[arg(long)]
    alpha: Option<f64>,
    /// Negative-pair exponent scale of the multi-similarity loss.
    #[arg(long)]
    beta: Option<f64>,
    /// Similarity offset of the multi-similarity loss.
    #[arg(long)]
    lambda: Option<f64>,
    /// Informative-pair margin.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Threads for internal data-parallel sections (default 1).
    #[arg(long)]
    threads: Option<usize>,
    /// Threshold-search grid spacing in (0, 1).
    #[arg(long = "grid-step")]
    grid_step: Option<f64>,
    /// Tokenization: whitespace | per_char.
    #[arg(long)]
    tokenize: Option<String>,
    /// Comma-separated retrieval cutoffs, e.g. 1,3,10.
    #[arg(long = "hit-n")]
    hit_n: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonOpts,
    /// Training data: classes TSV for any loss, pairs TSV for contrastive.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// Treat --data as a POI file (category/name/address/lat/lon).
    #[arg(long)]
    poi: bool,
}

#[derive(Args)]
struct EvalPairsArgs {
    #[command(flatten)]
    common: CommonOpts,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Pair file used as the threshold set.
    #[arg(long)]
    dev: PathBuf,
    /// Pair file scored with the searched threshold.
    #[arg(long)]
    test: PathBuf,
    /// Optional tab-separated report file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalTripletsArgs {
    #[command(flatten)]
    common: CommonOpts,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Triplet file: anchor \t positive \t negative.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    common: CommonOpts,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Gallery: classes TSV (or POI file with --poi).
    #[arg(long)]
    data: PathBuf,
    /// Optional query set; without it every gallery item queries the rest.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    poi: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EmbedArgs {
    #[command(flatten)]
    common: CommonOpts,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Input text, one sentence per line.
    #[arg(long)]
    data: PathBuf,
    /// CSV output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProjectArgs {
    #[command(flatten)]
    common: CommonOpts,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Classes TSV (or POI file with --poi).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    poi: bool,
    /// CSV output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ThresholdArgs {
    #[command(flatten)]
    common: CommonOpts,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Pair file used as the threshold set.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Fully resolved run configuration.
#[derive(Clone, Debug)]
struct RunConfig {
    train: TrainConfig,
    tokenize: TokenizeMode,
    grid_step: f64,
    hit_n: Vec<usize>,
    threads: usize,
    pretrained: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            tokenize: TokenizeMode::Whitespace,
            grid_step: 0.001,
            hit_n: vec![1, 3, 10],
            threads: 1,
            pretrained: None,
        }
    }
}

impl RunConfig {
    fn resolve(common: &CommonOpts) -> Result<Self, Error> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &common.config {
            for (key, value, line) in parse_config_file(path)? {
                cfg.apply(&key, &value).map_err(|e| {
                    Error::Config(format!("{path}:{line}: {e}", path = path.display()))
                })?;
            }
        }
        if let Some(v) = &common.loss {
            cfg.train.loss = v.parse()?;
        }
        if let Some(v) = &common.filter {
            cfg.train.filter = parse_on_off(v)?;
        }
        if let Some(v) = common.alpha {
            cfg.train.loss_cfg.alpha = v;
        }
        if let Some(v) = common.beta {
            cfg.train.loss_cfg.beta = v;
        }
        if let Some(v) = common.lambda {
            cfg.train.loss_cfg.lambda_ms = v;
        }
        if let Some(v) = common.epsilon {
            cfg.train.mining.epsilon = v;
        }
        if let Some(v) = common.seed {
            cfg.train.seed = v;
        }
        if let Some(v) = common.threads {
            if v == 0 {
                return Err(Error::Config("threads must be >= 1".into()));
            }
            cfg.threads = v;
        }
        if let Some(v) = common.grid_step {
            cfg.grid_step = v;
        }
        if let Some(v) = &common.tokenize {
            cfg.tokenize = v.parse()?;
        }
        if let Some(v) = &common.hit_n {
            cfg.hit_n = parse_hit_n(v)?;
        }
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), Error> {
        let bad = |what: &str| Error::Config(format!("bad {what} value `{value}`"));
        match key {
            "loss" => self.train.loss = value.parse()?,
            "optimizer" => self.train.optimizer = value.parse()?,
            "lr" | "learning_rate" => {
                self.train.learning_rate = value.parse().map_err(|_| bad("lr"))?
            }
            "momentum" => self.train.momentum = value.parse().map_err(|_| bad("momentum"))?,
            "beta1" => self.train.beta1 = value.parse().map_err(|_| bad("beta1"))?,
            "beta2" => self.train.beta2 = value.parse().map_err(|_| bad("beta2"))?,
            "adam_eps" => self.train.adam_eps = value.parse().map_err(|_| bad("adam_eps"))?,
            "epochs" => self.train.epochs = value.parse().map_err(|_| bad("epochs"))?,
            "steps" | "steps_per_epoch" => {
                self.train.steps_per_epoch = value.parse().map_err(|_| bad("steps"))?
            }
            "seed" => self.train.seed = value.parse().map_err(|_| bad("seed"))?,
            "d_in" => self.train.d_in = value.parse().map_err(|_| bad("d_in"))?,
            "d_out" => self.train.d_out = value.parse().map_err(|_| bad("d_out"))?,
            "min_count" => self.train.min_count = value.parse().map_err(|_| bad("min_count"))?,
            "alpha" => self.train.loss_cfg.alpha = value.parse().map_err(|_| bad("alpha"))?,
            "beta" => self.train.loss_cfg.beta = value.parse().map_err(|_| bad("beta"))?,
            "lambda" => self.train.loss_cfg.lambda_ms = value.parse().map_err(|_| bad("lambda"))?,
            "lambda_c" => {
                self.train.loss_cfg.lambda_c = value.parse().map_err(|_| bad("lambda_c"))?
            }
            "epsilon" => self.train.mining.epsilon = value.parse().map_err(|_| bad("epsilon"))?,
            "p" | "classes_per_batch" => {
                self.train.mining.classes_per_batch = value.parse().map_err(|_| bad("p"))?
            }
            "k" | "samples_per_class" => {
                self.train.mining.samples_per_class = value.parse().map_err(|_| bad("k"))?
            }
            "hard_mode" => self.train.mining.hard_mode = value.parse()?,
            "filter" => self.train.filter = parse_on_off(value)?,
            "tokenize" => self.tokenize = value.parse()?,
            "grid_step" => self.grid_step = value.parse().map_err(|_| bad("grid_step"))?,
            "hit_n" => self.hit_n = parse_hit_n(value)?,
            "threads" => self.threads = value.parse().map_err(|_| bad("threads"))?,
            "pretrained" => self.pretrained = Some(PathBuf::from(value)),
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Echo the fully resolved configuration, one key per line.
    fn log(&self) {
        let t = &self.train;
        let lines = [
            format!("loss={}", t.loss),
            format!("optimizer={}", t.optimizer),
            format!("lr={}", t.learning_rate),
            format!("momentum={}", t.momentum),
            format!("beta1={}", t.beta1),
            format!("beta2={}", t.beta2),
            format!("adam_eps={}", t.adam_eps),
            format!("epochs={}", t.epochs),
            format!("steps={}", t.steps_per_epoch),
            format!("seed={}", t.seed),
            format!("d_in={}", t.d_in),
            format!("d_out={}", t.d_out),
            format!("min_count={}", t.min_count),
            format!("alpha={}", t.loss_cfg.alpha),
            format!("beta={}", t.loss_cfg.beta),
            format!("lambda={}", t.loss_cfg.lambda_ms),
            format!("lambda_c={}", t.loss_cfg.lambda_c),
            format!("epsilon={}", t.mining.epsilon),
            format!("p={}", t.mining.classes_per_batch),
            format!("k={}", t.mining.samples_per_class),
            format!("filter={}", if t.filter { "on" } else { "off" }),
            format!("tokenize={}", self.tokenize),
            format!("grid_step={}", self.grid_step),
            format!(
                "hit_n={}",
                self.hit_n
                    .iter()
                    .map(usize::to_string)
                    .collect::<Vec<_>>()
                    .join(",")
            ),
            format!("threads={}", self.threads),
        ];
        for line in lines {
            eprintln!("config: {line}");
        }
        if let Some(p) = &self.pretrained {
            eprintln!("config: pretrained={}", p.display());
        }
    }
}

fn parse_on_off(value: &str) -> Result<bool, Error> {
    match value {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(Error::Config(format!(
            "expected `on` or `off`, got `{other}`"
        ))),
    }
}

fn parse_hit_n(value: &str) -> Result<Vec<usize>, Error> {
    let mut out = Vec::new();
    for part in value.split(',') {
        let n: usize = part
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad hit-n entry `{part}`")))?;
        if n == 0 {
            return Err(Error::Config("hit-n entries must be >= 1".into()));
        }
        out.push(n);
    }
    if out.is_empty() {
        return Err(Error::Config("hit-n needs at least one value".into()));
    }
    Ok(out)
}

fn parse_config_file(path: &Path) -> Result<Vec<(String, String, usize)>, Error> {
    let content = fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for (idx, raw) in content.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "{}:{}: expected key=value, got `{line}`",
                path.display(),
                idx + 1
            )));
        };
        pairs.push((key.trim().to_owned(), value.trim().to_owned(), idx + 1));
    }
    Ok(pairs)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                Error::Config(_) => 2,
                Error::Parse { .. }
                | Error::Range(_)
                | Error::Checkpoint(_)
                | Error::Eval(_)
                | Error::Io(_) => 3,
                Error::Contract(_) | Error::Numeric(_) => 1,
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let common = match &cli.command {
        Command::Train(a) => a.common.clone(),
        Command::EvalPairs(a) => a.common.clone(),
        Command::EvalTriplets(a) => a.common.clone(),
        Command::Search(a) => a.common.clone(),
        Command::Embed(a) => a.common.clone(),
        Command::Project(a) => a.common.clone(),
        Command::Threshold(a) => a.common.clone(),
    };
    let cfg = RunConfig::resolve(&common)?;
    cfg.log();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli, &cfg))
}

fn dispatch(cli: Cli, cfg: &RunConfig) -> Result<(), Error> {
    match cli.command {
        Command::Train(args) => cmd_train(&args, cfg),
        Command::EvalPairs(args) => cmd_eval_pairs(&args, cfg),
        Command::EvalTriplets(args) => cmd_eval_triplets(&args, cfg),
        Command::Search(args) => cmd_search(&args, cfg),
        Command::Embed(args) => cmd_embed(&args, cfg),
        Command::Project(args) => cmd_project(&args, cfg),
        Command::Threshold(args) => cmd_threshold(&args, cfg),
    }
}

/// Classes files have 2 tab-separated fields, pair files 3.
fn detect_columns(path: &Path) -> Result<usize, Error> {
    let content = fs::read_to_string(path)?;
    match content.lines().next() {
        Some(line) => Ok(line.split('\t').count()),
        None => Err(Error::Parse {
            row: 1,
            msg: "empty data file".into(),
        }),
    }
}

fn load_class_data(path: &Path, poi: bool, mode: TokenizeMode) -> Result<Dataset, Error> {
    if poi {
        let records = load_poi_records(path)?;
        poi_class_dataset(&records)
    } else {
        load_dataset(path, DatasetKind::Classes, mode)
    }
}

fn cmd_train(args: &TrainArgs, cfg: &RunConfig) -> Result<(), Error> {
    let dataset = if args.poi {
        load_class_data(&args.data, true, cfg.tokenize)?
    } else {
        let kind = match (detect_columns(&args.data)?, cfg.train.loss) {
            (2, _) => DatasetKind::Classes,
            (3, LossKind::Contrastive) => DatasetKind::Pairs,
            (3, loss) => {
                return Err(Error::Config(format!(
                    "{} has 3 columns (pairs), but the {loss} loss trains on classes data",
                    args.data.display()
                )))
            }
            (n, _) => {
                return Err(Error::Parse {
                    row: 1,
                    msg: format!("expected 2 (classes) or 3 (pairs) columns, got {n}"),
                })
            }
        };
        load_dataset(&args.data, kind, cfg.tokenize)?
    };

    let pretrained = match &cfg.pretrained {
        Some(path) => Some(load_word_vectors(path, cfg.train.d_in)?),
        None => None,
    };
    let outcome = fit_with_pretrained(&cfg.train, &dataset, pretrained.as_ref())?;
    let checkpoint = outcome.checkpoint(cfg.train.loss);
    save_checkpoint(&checkpoint, &args.out)?;
    let log_path = with_suffix(&args.out, ".log");
    write_metrics_log(&log_path, &outcome.metrics)?;

    println!("steps={}", outcome.metrics.len());
    if let Some(last) = outcome.metrics.last() {
        println!("final_loss={}", last.loss);
        println!("final_kept_fraction={}", last.kept_fraction);
    }
    println!("checkpoint={}", args.out.display());
    println!("metrics_log={}", log_path.display());
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

/// Cosine scores for a pair file under a checkpoint.
fn score_pairs(
    checkpoint: &Checkpoint,
    path: &Path,
    mode: TokenizeMode,
) -> Result<(Vec<f64>, Vec<u8>), Error> {
    let dataset = load_dataset(path, DatasetKind::Pairs, mode)?;
    let Dataset::Pairs(records) = dataset else {
        unreachable!("loaded as pairs");
    };
    let mut sentences = Vec::with_capacity(records.len() * 2);
    for r in &records {
        sentences.push(r.first.clone());
        sentences.push(r.second.clone());
    }
    let emb = checkpoint.embed_sentences(&sentences)?;
    let scores = (0..records.len())
        .map(|i| emb.vectors.row(2 * i).dot(&emb.vectors.row(2 * i + 1)))
        .collect();
    let labels = records.iter().map(|r| r.label).collect();
    Ok((scores, labels))
}

/// Print a report's entries as `key=value` lines on stdout and optionally
/// write its tab-separated rendering to a file.
fn emit_report(report: &EvalReport, out: Option<&Path>) -> Result<(), Error> {
    for (key, value) in report.entries() {
        println!("{key}={value}");
    }
    if let Some(path) = out {
        fs::write(path, report.to_tsv())?;
    }
    Ok(())
}

fn cmd_eval_pairs(args: &EvalPairsArgs, cfg: &RunConfig) -> Result<(), Error> {
    let checkpoint = load_checkpoint(&args.checkpoint)?;
    let (dev_scores, dev_labels) = score_pairs(&checkpoint, &args.dev, cfg.tokenize)?;
    let (threshold, dev_accuracy) = threshold_search(&dev_scores, &dev_labels, cfg.grid_step)?;
    let (test_scores, test_labels) = score_pairs(&checkpoint, &args.test, cfg.tokenize)?;
    let (accuracy, f1) = pair_classification(&test_scores, &test_labels, threshold);
    let mut report = EvalReport::new(EvalTask::Pairs);
    report.push_threshold("threshold", threshold)?;
    report.push_metric("dev_accuracy", dev_accuracy)?;
    report.push_metric("accuracy", accuracy)?;
    report.push_metric("f1", f1)?;
    emit_report(&report, args.out.as_deref())
}

fn cmd_eval_triplets(args: &EvalTripletsArgs, cfg: &RunConfig) -> Result<(), Error> {
    let checkpoint = load_checkpoint(&args.checkpoint)?;
    let dataset = load_dataset(&args.data, DatasetKind::Triplets, cfg.tokenize)?;
    let Dataset::Triplets(records) = dataset else {
        unreachable!("loaded as triplets");
    };
    let accuracy = triplet_accuracy_model(&checkpoint, &records)?;
    let mut report = EvalReport::new(EvalTask::Triplets);
    report.push_metric("accuracy", accuracy)?;
    report.push_count("triplets", records.len());
    emit_report(&report, args.out.as_deref())
}

fn class_rows(dataset: &Dataset) -> (Vec<Sentence>, Vec<u32>) {
    match dataset {
        Dataset::Classes(rows) => (
            rows.iter().map(|r| r.sentence.clone()).collect(),
            rows.iter().map(|r| r.class_id).collect(),
        ),
        _ => unreachable!("loaded as classes"),
    }
}

fn cmd_search(args: &SearchArgs, cfg: &RunConfig) -> Result<(), Error> {
    let checkpoint = load_checkpoint(&args.checkpoint)?;
    let gallery = load_class_data(&args.data, args.poi, cfg.tokenize)?;
    let (g_sentences, g_labels) = class_rows(&gallery);
    let g_emb = checkpoint.embed_sentences(&g_sentences)?.vectors;

    let mut report = EvalReport::new(EvalTask::Retrieval);
    match &args.test {
        Some(test) => {
            let queries = load_class_data(test, args.poi, cfg.tokenize)?;
            let (q_sentences, q_labels) = class_rows(&queries);
            let q_emb = checkpoint.embed_sentences(&q_sentences)?.vectors;
            for &n in &cfg.hit_n {
                let r = hit_at_n(&q_emb, &q_labels, &g_emb, &g_labels, n, None)?;
                report.push_metric(&format!("hit@{n}"), r.hit_rate)?;
                report.push_count(&format!("hit@{n}_evaluated"), r.evaluated);
                report.push_count(&format!("hit@{n}_flagged"), r.flagged);
            }
        }
        None => {
            // Leave-one-out: each gallery row queries the rest of the
            // gallery, its own record excluded from the ranking.
            let self_map: Vec<Option<usize>> = (0..g_labels.len()).map(Some).collect();
            for &n in &cfg.hit_n {
                let r = hit_at_n(&g_emb, &g_labels, &g_emb, &g_labels, n, Some(&self_map))?;
                report.push_metric(&format!("hit@{n}"), r.hit_rate)?;
                report.push_count(&format!("hit@{n}_evaluated"), r.evaluated);
                report.push_count(&format!("hit@{n}_flagged"), r.flagged);
            }
        }
    }
    if let Ok(ratio) = inter_intra(&g_emb, &g_labels) {
        report.push_ratio("inter_intra", ratio)?;
    }
    emit_report(&report, args.out.as_deref())
}

fn cmd_embed(args: &EmbedArgs, cfg: &RunConfig) -> Result<(), Error> {
    let checkpoint = load_checkpoint(&args.checkpoint)?;
    let content = fs::read_to_string(&args.data)?;
    let sentences: Vec<Sentence> = content
        .lines()
        .map(|line| tokenize(line, cfg.tokenize))
        .collect();
    let emb = checkpoint.embed_sentences(&sentences)?;
    let mut csv = String::new();
    for row in emb.vectors.rows() {
        let fields: Vec<String> = row.iter().map(f64::to_string).collect();
        csv.push_str(&fields.join(","));
        csv.push('\n');
    }
    write_or_print(args.out.as_deref(), &csv)
}

fn cmd_project(args: &ProjectArgs, cfg: &RunConfig) -> Result<(), Error> {
    let checkpoint = load_checkpoint(&args.checkpoint)?;
    let dataset = load_class_data(&args.data, args.poi, cfg.tokenize)?;
    let (sentences, labels) = class_rows(&dataset);
    let emb = checkpoint.embed_sentences(&sentences)?;
    let coords = pca2d(&emb.vectors)?;
    let mut csv = String::from("x,y,label\n");
    for (i, label) in labels.iter().enumerate() {
        csv.push_str(&format!("{},{},{label}\n", coords[[i, 0]], coords[[i, 1]]));
    }
    write_or_print(args.out.as_deref(), &csv)
}

fn cmd_threshold(args: &ThresholdArgs, cfg: &RunConfig) -> Result<(), Error> {
    let checkpoint = load_checkpoint(&args.checkpoint)?;
    let (scores, labels) = score_pairs(&checkpoint, &args.data, cfg.tokenize)?;
    let (threshold, dev_accuracy) = threshold_search(&scores, &labels, cfg.grid_step)?;
    let mut report = EvalReport::new(EvalTask::Pairs);
    report.push_threshold("threshold", threshold)?;
    report.push_metric("dev_accuracy", dev_accuracy)?;
    emit_report(&report, args.out.as_deref())
}

fn write_or_print(out: Option<&Path>, content: &str) -> Result<(), Error> {
    match out {
        Some(path) => fs::write(path, content)?,
        None => print!("{content}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_values_are_overridden_by_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "lr = 0.01\nseed = 5\nloss = triplet\n").unwrap();
        let common = CommonOpts {
            config: Some(path),
            loss: Some("multisim".into()),
            ..CommonOpts::default()
        };
        let cfg = RunConfig::resolve(&common).unwrap();
        assert_eq!(cfg.train.learning_rate, 0.01);
        assert_eq!(cfg.train.seed, 5);
        assert_eq!(cfg.train.loss, LossKind::Multisim);
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "learning=fast\n").unwrap();
        let common = CommonOpts {
            config: Some(path),
            ..CommonOpts::default()
        };
        assert!(matches!(RunConfig::resolve(&common), Err(Error::Config(_))));
    }

    #[test]
    fn hit_n_lists_parse() {
        assert_eq!(parse_hit_n("1,3,10").unwrap(), vec![1, 3, 10]);
        assert_eq!(parse_hit_n("5").unwrap(), vec![5]);
        assert!(parse_hit_n("0").is_err());
        assert!(parse_hit_n("a,b").is_err());
    }

    #[test]
    fn comments_and_blanks_are_skipped_in_config_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "# a comment\n\nepochs = 3\n").unwrap();
        let pairs = parse_config_file(&path).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].0, "epochs");
    }
}
