//! Optimization loop binding sampler, encoder, similarity, filter, loss,
//! backward pass, and parameter updates, plus checkpoint serialization.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Dimension, Zip};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{build_vocab, Dataset, DatasetKind, Sentence, Vocabulary};
use crate::encoder::{
    backward_batch, embed_batch, init_params, EmbeddingMatrix, EncoderParams, Gradients,
    TokenBatch,
};
use crate::error::{Error, Result};
use crate::losses::{
    contrastive_loss, multisim_loss, triplet_softmargin_loss, LossConfig, LossReport,
};
use crate::mining::{hard_mine, informative_pair_filter, sample_pk_batch, MiningConfig};
use crate::similarity::SimMatrix;

/// Which pair loss drives training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Contrastive,
    Triplet,
    Multisim,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "contrastive" => Ok(LossKind::Contrastive),
            "triplet" => Ok(LossKind::Triplet),
            "multisim" => Ok(LossKind::Multisim),
            other => Err(Error::Config(format!(
                "unknown loss `{other}` (expected contrastive, triplet, or multisim)"
            ))),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LossKind::Contrastive => f.write_str("contrastive"),
            LossKind::Triplet => f.write_str("triplet"),
            LossKind::Multisim => f.write_str("multisim"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    SgdMomentum,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd_momentum" => Ok(OptimizerKind::SgdMomentum),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!(
                "unknown optimizer `{other}` (expected sgd_momentum or adam)"
            ))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OptimizerKind::SgdMomentum => f.write_str("sgd_momentum"),
            OptimizerKind::Adam => f.write_str("adam"),
        }
    }
}

/// Full training protocol configuration.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub seed: u64,
    pub d_in: usize,
    pub d_out: usize,
    pub min_count: usize,
    pub loss_cfg: LossConfig,
    pub mining: MiningConfig,
    /// Apply the informative-pair filter before every loss evaluation.
    pub filter: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::Multisim,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 10,
            steps_per_epoch: 30,
            seed: 42,
            d_in: 32,
            d_out: 32,
            min_count: 1,
            loss_cfg: LossConfig::default(),
            mining: MiningConfig::default(),
            filter: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.steps_per_epoch == 0 {
            return Err(Error::Config("steps_per_epoch must be >= 1".into()));
        }
        self.loss_cfg.validate()?;
        self.mining.validate()
    }
}

/// Optimizer moments, same shapes as the parameters. SGD uses only the
/// first-moment slots as velocities.
#[derive(Debug, Clone)]
struct OptState {
    m_embedding: Array2<f64>,
    v_embedding: Array2<f64>,
    m_projection: Array2<f64>,
    v_projection: Array2<f64>,
    m_bias: Array1<f64>,
    v_bias: Array1<f64>,
}

impl OptState {
    fn zeros_like(params: &EncoderParams) -> Self {
        OptState {
            m_embedding: Array2::zeros(params.embedding.dim()),
            v_embedding: Array2::zeros(params.embedding.dim()),
            m_projection: Array2::zeros(params.projection.dim()),
            v_projection: Array2::zeros(params.projection.dim()),
            m_bias: Array1::zeros(params.bias.len()),
            v_bias: Array1::zeros(params.bias.len()),
        }
    }
}

/// Mutable training state: parameters, optimizer moments, step counter,
/// the run's single random stream, and the latest step's metrics.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: EncoderParams,
    opt: OptState,
    pub step: u64,
    pub rng: ChaCha8Rng,
    pub last_metrics: Option<StepMetrics>,
}

/// Salt separating the sampler stream from the init stream of the same seed.
const SAMPLER_STREAM_SALT: u64 = 0x73616d706c6572;

impl TrainState {
    pub fn new(params: EncoderParams, seed: u64) -> Self {
        let opt = OptState::zeros_like(&params);
        TrainState {
            params,
            opt,
            step: 0,
            rng: ChaCha8Rng::seed_from_u64(seed ^ SAMPLER_STREAM_SALT),
            last_metrics: None,
        }
    }
}

/// Per-step diagnostics, one metrics-log line each.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub step: u64,
    pub loss: f64,
    pub kept_fraction: f64,
    pub mean_pos_sim: f64,
    pub mean_neg_sim: f64,
}

impl StepMetrics {
    /// Tab-separated log line: `step loss kept_frac mean_pos_sim mean_neg_sim`.
    pub fn log_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.step, self.loss, self.kept_fraction, self.mean_pos_sim, self.mean_neg_sim
        )
    }
}

fn evaluate_loss(sim: &SimMatrix, cfg: &TrainConfig) -> Result<LossReport> {
    match cfg.loss {
        LossKind::Contrastive => contrastive_loss(sim, &cfg.loss_cfg),
        LossKind::Triplet => {
            let mined = hard_mine(sim, &cfg.mining);
            triplet_softmargin_loss(sim, &mined.triplets)
        }
        LossKind::Multisim => multisim_loss(sim, &cfg.loss_cfg),
    }
}

/// One optimization step: forward, similarity, optional filter, loss,
/// backward through `S = V V^T`, and a parameter update.
pub fn train_step(
    state: &mut TrainState,
    batch: &TokenBatch,
    cfg: &TrainConfig,
) -> Result<StepMetrics> {
    if batch.rows() == 0 {
        return Err(Error::Config("cannot train on an empty batch".into()));
    }
    let (emb, cache) = embed_batch(&state.params, batch)?;
    let sim = SimMatrix::from_embeddings(&emb, &batch.labels)?;
    let (mean_pos_sim, mean_neg_sim) = sim.mask_means();

    let (report, kept_fraction) = if cfg.filter {
        let outcome = informative_pair_filter(&sim, &cfg.mining);
        let active = sim.filtered(&outcome.keep_pos, &outcome.keep_neg);
        (evaluate_loss(&active, cfg)?, outcome.kept_fraction)
    } else {
        (evaluate_loss(&sim, cfg)?, 1.0)
    };

    if !report.loss.is_finite() {
        return Err(non_finite_error("loss", &sim));
    }
    // S_ij = v_i . v_j appears once per ordered pair, so
    // dL/dv_i = sum_j (dS_ij + dS_ji) v_j.
    let sym = &report.d_sim + &report.d_sim.t();
    let d_vectors = sym.dot(&emb.vectors);
    let grads = backward_batch(&state.params, &cache, &d_vectors)?;
    if !grads.is_finite() {
        return Err(non_finite_error("gradient", &sim));
    }

    state.step += 1;
    apply_update(state, &grads, cfg);

    let metrics = StepMetrics {
        step: state.step,
        loss: report.loss,
        kept_fraction,
        mean_pos_sim,
        mean_neg_sim,
    };
    state.last_metrics = Some(metrics);
    Ok(metrics)
}

fn non_finite_error(what: &str, sim: &SimMatrix) -> Error {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in sim.values.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Error::Numeric(format!(
        "{what} is not finite (similarity extremes: min {lo}, max {hi})"
    ))
}

fn apply_update(state: &mut TrainState, grads: &Gradients, cfg: &TrainConfig) {
    let t = state.step as f64;
    match cfg.optimizer {
        OptimizerKind::Adam => {
            adam_tensor(
                &mut state.params.embedding,
                &grads.d_embedding,
                &mut state.opt.m_embedding,
                &mut state.opt.v_embedding,
                t,
                cfg,
            );
            adam_tensor(
                &mut state.params.projection,
                &grads.d_projection,
                &mut state.opt.m_projection,
                &mut state.opt.v_projection,
                t,
                cfg,
            );
            adam_tensor(
                &mut state.params.bias,
                &grads.d_bias,
                &mut state.opt.m_bias,
                &mut state.opt.v_bias,
                t,
                cfg,
            );
        }
        OptimizerKind::SgdMomentum => {
            sgd_tensor(
                &mut state.params.embedding,
                &grads.d_embedding,
                &mut state.opt.m_embedding,
                cfg,
            );
            sgd_tensor(
                &mut state.params.projection,
                &grads.d_projection,
                &mut state.opt.m_projection,
                cfg,
            );
            sgd_tensor(
                &mut state.params.bias,
                &grads.d_bias,
                &mut state.opt.m_bias,
                cfg,
            );
        }
    }
}

fn adam_tensor<D: Dimension>(
    theta: &mut ndarray::Array<f64, D>,
    grad: &ndarray::Array<f64, D>,
    m: &mut ndarray::Array<f64, D>,
    v: &mut ndarray::Array<f64, D>,
    t: f64,
    cfg: &TrainConfig,
) {
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let bias1 = 1.0 - b1.powf(t);
    let bias2 = 1.0 - b2.powf(t);
    Zip::from(theta)
        .and(grad)
        .and(m)
        .and(v)
        .for_each(|theta, &g, m, v| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *theta -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        });
}

fn sgd_tensor<D: Dimension>(
    theta: &mut ndarray::Array<f64, D>,
    grad: &ndarray::Array<f64, D>,
    velocity: &mut ndarray::Array<f64, D>,
    cfg: &TrainConfig,
) {
    Zip::from(theta)
        .and(grad)
        .and(velocity)
        .for_each(|theta, &g, vel| {
            *vel = cfg.momentum * *vel + g;
            *theta -= cfg.learning_rate * *vel;
        });
}

/// A finished run: final state, the vocabulary it was trained with, and the
/// per-step metrics.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub state: TrainState,
    pub vocab: Vocabulary,
    pub metrics: Vec<StepMetrics>,
}

impl FitOutcome {
    pub fn checkpoint(&self, loss: LossKind) -> Checkpoint {
        Checkpoint {
            vocab: self.vocab.clone(),
            params: self.state.params.clone(),
            loss,
        }
    }
}

/// Train for `epochs x steps_per_epoch` steps over batches sampled from the
/// dataset. Classes datasets feed every loss via PK sampling; pairs datasets
/// are accepted for the contrastive loss, with each sampled pair mapped to a
/// fresh pseudo-class (shared by both sentences when the pair is positive).
pub fn fit(cfg: &TrainConfig, dataset: &Dataset) -> Result<FitOutcome> {
    fit_with_pretrained(cfg, dataset, None)
}

/// [`fit`] with an optional pretrained word-vector table for initialization.
pub fn fit_with_pretrained(
    cfg: &TrainConfig,
    dataset: &Dataset,
    pretrained: Option<&HashMap<String, Vec<f64>>>,
) -> Result<FitOutcome> {
    cfg.validate()?;
    match (dataset.kind(), cfg.loss) {
        (DatasetKind::Classes, _) | (DatasetKind::Pairs, LossKind::Contrastive) => {}
        (kind, loss) => {
            return Err(Error::Config(format!(
                "{kind} dataset is not trainable with the {loss} loss \
                 (classes work with every loss, pairs with contrastive)"
            )));
        }
    }
    if dataset.is_empty() {
        return Err(Error::Config("cannot train on an empty dataset".into()));
    }

    let vocab = build_vocab(dataset.sentences(), cfg.min_count)?;
    let params = init_params(&vocab, cfg.d_in, cfg.d_out, cfg.seed, pretrained)?;
    let mut state = TrainState::new(params, cfg.seed);
    let mut metrics = Vec::with_capacity(cfg.epochs * cfg.steps_per_epoch);
    for _ in 0..cfg.epochs {
        for _ in 0..cfg.steps_per_epoch {
            let batch = next_batch(dataset, &vocab, cfg, &mut state.rng)?;
            metrics.push(train_step(&mut state, &batch, cfg)?);
        }
    }
    Ok(FitOutcome {
        state,
        vocab,
        metrics,
    })
}

fn next_batch(
    dataset: &Dataset,
    vocab: &Vocabulary,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TokenBatch> {
    match dataset {
        Dataset::Classes(_) => sample_pk_batch(dataset, vocab, &cfg.mining, rng),
        Dataset::Pairs(records) => {
            let rows_target = cfg.mining.classes_per_batch * cfg.mining.samples_per_class;
            let pair_count = (rows_target / 2).max(1);
            let mut rows = Vec::with_capacity(pair_count * 2);
            let mut labels = Vec::with_capacity(pair_count * 2);
            for b in 0..pair_count {
                let rec = &records[rng.random_range(0..records.len())];
                rows.push(vocab.encode(&rec.first));
                rows.push(vocab.encode(&rec.second));
                let base = 2 * b as u32;
                if rec.label == 1 {
                    labels.extend([base, base]);
                } else {
                    labels.extend([base, base + 1]);
                }
            }
            TokenBatch::new(rows, labels)
        }
        Dataset::Triplets(_) => Err(Error::Config(
            "triplet files are for evaluation; train on classes or pairs".into(),
        )),
    }
}

/// Write per-step metrics as tab-separated lines.
pub fn write_metrics_log(path: &Path, metrics: &[StepMetrics]) -> Result<()> {
    let mut out = String::new();
    for m in metrics {
        out.push_str(&m.log_line());
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Serialized model: vocabulary, encoder parameters, and the loss it was
/// trained with.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub vocab: Vocabulary,
    pub params: EncoderParams,
    pub loss: LossKind,
}

impl Checkpoint {
    /// Encode sentences with the stored vocabulary and embed them.
    pub fn embed_sentences(&self, sentences: &[Sentence]) -> Result<EmbeddingMatrix> {
        let rows: Vec<Vec<u32>> = sentences.iter().map(|s| self.vocab.encode(s)).collect();
        let labels = vec![0; rows.len()];
        let batch = TokenBatch::new(rows, labels)?;
        Ok(embed_batch(&self.params, &batch)?.0)
    }
}

const CHECKPOINT_MAGIC: &str = "SENTPW";
const CHECKPOINT_VERSION: u32 = 1;

/// Write a checkpoint atomically (temp file in the same directory, then
/// rename). Floats are rendered in shortest round-trip form, so
/// save -> load -> save is byte-identical.
pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    if !checkpoint.params.is_finite() {
        return Err(Error::Numeric(
            "refusing to save non-finite parameters".into(),
        ));
    }
    let params = &checkpoint.params;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION} {} {} {} {}",
        checkpoint.vocab.size(),
        params.d_in(),
        params.d_out(),
        checkpoint.loss
    );
    for token in checkpoint.vocab.tokens() {
        out.push_str(token);
        out.push('\n');
    }
    for row in params.embedding.rows() {
        push_row(&mut out, row.iter());
    }
    for row in params.projection.rows() {
        push_row(&mut out, row.iter());
    }
    push_row(&mut out, params.bias.iter());

    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &out)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn push_row<'a>(out: &mut String, values: impl Iterator<Item = &'a f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        let _ = write!(out, "{v}");
        first = false;
    }
    out.push('\n');
}

/// Load a checkpoint, validating the header, dimensions, and finiteness.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let content = fs::read_to_string(path)?;
    let mut lines = content.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Checkpoint("empty file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 6 || fields[0] != CHECKPOINT_MAGIC || fields[1] != "1" {
        return Err(Error::Checkpoint(format!(
            "bad header `{header}`; expected `{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION} \
             <vocab_size> <d_in> <d_out> <loss>`"
        )));
    }
    let vocab_size: usize = parse_header_field(fields[2], "vocab_size")?;
    let d_in: usize = parse_header_field(fields[3], "d_in")?;
    let d_out: usize = parse_header_field(fields[4], "d_out")?;
    let loss: LossKind = fields[5].parse()?;

    let mut tokens = Vec::with_capacity(vocab_size);
    for i in 0..vocab_size {
        let line = lines
            .next()
            .ok_or_else(|| Error::Checkpoint(format!("truncated vocabulary at entry {i}")))?;
        tokens.push(line.to_owned());
    }
    let vocab = Vocabulary::from_id_ordered(tokens)?;

    let embedding = read_matrix(&mut lines, vocab_size, d_in, "embedding")?;
    let projection = read_matrix(&mut lines, d_in, d_out, "projection")?;
    let bias_matrix = read_matrix(&mut lines, 1, d_out, "bias")?;
    let bias = bias_matrix.row(0).to_owned();
    if lines.next().is_some() {
        return Err(Error::Checkpoint("trailing data after parameters".into()));
    }

    let params = EncoderParams {
        embedding,
        projection,
        bias,
    };
    if !params.is_finite() {
        return Err(Error::Checkpoint("non-finite parameter value".into()));
    }
    Ok(Checkpoint {
        vocab,
        params,
        loss,
    })
}

fn parse_header_field<T: std::str::FromStr>(field: &str, name: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::Checkpoint(format!("bad {name} `{field}` in header")))
}

fn read_matrix<'a>(
    lines: &mut impl Iterator<Item = &'a str>,
    rows: usize,
    cols: usize,
    what: &str,
) -> Result<Array2<f64>> {
    let mut matrix = Array2::zeros((rows, cols));
    for i in 0..rows {
        let line = lines
            .next()
            .ok_or_else(|| Error::Checkpoint(format!("truncated {what} at row {i}")))?;
        let mut count = 0;
        for (j, field) in line.split_whitespace().enumerate() {
            if j >= cols {
                return Err(Error::Checkpoint(format!(
                    "{what} row {i} has more than {cols} columns"
                )));
            }
            matrix[[i, j]] = field
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad float `{field}` in {what} row {i}")))?;
            count += 1;
        }
        if count != cols {
            return Err(Error::Checkpoint(format!(
                "{what} row {i} has {count} columns, expected {cols}"
            )));
        }
    }
    Ok(matrix)
}
