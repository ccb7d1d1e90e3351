//! Trainable sentence encoder: token-embedding lookup, masked mean pooling,
//! linear projection, and L2 normalization, with exact analytic gradients.

use std::collections::HashMap;

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{Vocabulary, PAD_ID};
use crate::error::{Error, Result};

/// Added to the vector norm before dividing, so zero vectors stay zero.
pub const NORM_EPSILON: f64 = 1e-12;

/// Half-width of the uniform embedding initialization interval.
pub const INIT_RANGE: f64 = 0.05;

/// All trainable state: embedding table, projection, and projection bias.
///
/// The `<PAD>` embedding row is all-zero and is never updated.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// vocab_size x d_in.
    pub embedding: Array2<f64>,
    /// d_in x d_out.
    pub projection: Array2<f64>,
    /// d_out.
    pub bias: Array1<f64>,
}

impl EncoderParams {
    pub fn vocab_size(&self) -> usize {
        self.embedding.nrows()
    }

    pub fn d_in(&self) -> usize {
        self.embedding.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.bias.len()
    }

    pub fn is_finite(&self) -> bool {
        self.embedding.iter().all(|v| v.is_finite())
            && self.projection.iter().all(|v| v.is_finite())
            && self.bias.iter().all(|v| v.is_finite())
    }
}

/// A padded batch of encoded sentences with class labels.
#[derive(Debug, Clone)]
pub struct TokenBatch {
    /// m x l_max token ids, `<PAD>`-filled on the right.
    pub ids: Array2<u32>,
    /// Original token count per row (including literal `<PAD>` tokens).
    pub lengths: Vec<usize>,
    /// Class label per row.
    pub labels: Vec<u32>,
}

impl TokenBatch {
    /// Pad variable-length id rows into a rectangular batch.
    pub fn new(rows: Vec<Vec<u32>>, labels: Vec<u32>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Contract(format!(
                "{} id rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let l_max = rows.iter().map(Vec::len).max().unwrap_or(0);
        let mut ids = Array2::from_elem((rows.len(), l_max), PAD_ID);
        let mut lengths = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            lengths.push(row.len());
            for (j, &id) in row.iter().enumerate() {
                ids[[i, j]] = id;
            }
        }
        Ok(TokenBatch {
            ids,
            lengths,
            labels,
        })
    }

    pub fn rows(&self) -> usize {
        self.ids.nrows()
    }

    /// A row is degenerate when it contains no non-`<PAD>` token.
    pub fn is_degenerate(&self, row: usize) -> bool {
        self.ids.row(row).iter().all(|&id| id == PAD_ID)
    }
}

/// Unit-norm (or zero, for degenerate rows) sentence embeddings.
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix {
    /// m x d_out.
    pub vectors: Array2<f64>,
    pub degenerate: Vec<bool>,
}

impl EmbeddingMatrix {
    pub fn rows(&self) -> usize {
        self.vectors.nrows()
    }
}

/// Intermediate values kept by [`embed_batch`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    ids: Array2<u32>,
    /// m x d_in pooled means.
    means: Array2<f64>,
    /// m x d_out pre-normalization vectors.
    pre_norm: Array2<f64>,
    norms: Vec<f64>,
    token_counts: Vec<f64>,
}

/// Parameter gradients, same shapes as [`EncoderParams`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub d_embedding: Array2<f64>,
    pub d_projection: Array2<f64>,
    pub d_bias: Array1<f64>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.d_embedding.iter().all(|v| v.is_finite())
            && self.d_projection.iter().all(|v| v.is_finite())
            && self.d_bias.iter().all(|v| v.is_finite())
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    use rand::Rng;
    lo + rng.random::<f64>() * (hi - lo)
}

/// Initialize parameters from a seeded generator.
///
/// Embedding rows covered by the optional pretrained table are copied from
/// it; all other rows are uniform in [-INIT_RANGE, INIT_RANGE]. The
/// projection uses a fan-in-scaled uniform init and the bias starts at zero.
pub fn init_params(
    vocab: &Vocabulary,
    d_in: usize,
    d_out: usize,
    seed: u64,
    pretrained: Option<&HashMap<String, Vec<f64>>>,
) -> Result<EncoderParams> {
    if d_in == 0 || d_out == 0 {
        return Err(Error::Config("d_in and d_out must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab_size = vocab.size();

    let mut embedding = Array2::zeros((vocab_size, d_in));
    for i in 0..vocab_size {
        for j in 0..d_in {
            embedding[[i, j]] = uniform(&mut rng, -INIT_RANGE, INIT_RANGE);
        }
    }
    let scale = (1.0 / d_in as f64).sqrt();
    let mut projection = Array2::zeros((d_in, d_out));
    for i in 0..d_in {
        for j in 0..d_out {
            projection[[i, j]] = uniform(&mut rng, -scale, scale);
        }
    }

    if let Some(table) = pretrained {
        for id in 0..vocab_size as u32 {
            if id == PAD_ID {
                continue;
            }
            let token = vocab.token(id).expect("id within vocab");
            if let Some(vector) = table.get(token) {
                if vector.len() != d_in {
                    return Err(Error::Config(format!(
                        "pretrained vector for `{token}` has dimension {}, expected {d_in}",
                        vector.len()
                    )));
                }
                for (j, &v) in vector.iter().enumerate() {
                    embedding[[id as usize, j]] = v;
                }
            }
        }
    }
    embedding.row_mut(PAD_ID as usize).fill(0.0);

    Ok(EncoderParams {
        embedding,
        projection,
        bias: Array1::zeros(d_out),
    })
}

struct RowForward {
    mean: Array1<f64>,
    pre_norm: Array1<f64>,
    norm: f64,
    count: f64,
    vector: Array1<f64>,
    degenerate: bool,
}

fn forward_row(params: &EncoderParams, batch: &TokenBatch, i: usize) -> RowForward {
    let d_in = params.d_in();
    let d_out = params.d_out();
    let mut mean = Array1::zeros(d_in);
    let mut count = 0.0;
    for &id in batch.ids.row(i) {
        if id != PAD_ID {
            mean += &params.embedding.row(id as usize);
            count += 1.0;
        }
    }
    if count == 0.0 {
        return RowForward {
            mean,
            pre_norm: Array1::zeros(d_out),
            norm: 0.0,
            count,
            vector: Array1::zeros(d_out),
            degenerate: true,
        };
    }
    mean /= count;
    let pre_norm = mean.dot(&params.projection) + &params.bias;
    let norm = pre_norm.dot(&pre_norm).sqrt();
    let vector = &pre_norm / (norm + NORM_EPSILON);
    RowForward {
        mean,
        pre_norm,
        norm,
        count,
        vector,
        degenerate: false,
    }
}

/// Encode a batch into unit-norm sentence vectors.
///
/// Rows with no non-`<PAD>` token map to the zero vector and are flagged.
pub fn embed_batch(
    params: &EncoderParams,
    batch: &TokenBatch,
) -> Result<(EmbeddingMatrix, ForwardCache)> {
    let vocab_size = params.vocab_size();
    if let Some(&bad) = batch.ids.iter().find(|&&id| id as usize >= vocab_size) {
        return Err(Error::Contract(format!(
            "token id {bad} out of range for vocabulary of {vocab_size}"
        )));
    }
    let m = batch.rows();
    let rows: Vec<RowForward> = (0..m)
        .into_par_iter()
        .map(|i| forward_row(params, batch, i))
        .collect();

    let mut vectors = Array2::zeros((m, params.d_out()));
    let mut means = Array2::zeros((m, params.d_in()));
    let mut pre_norm = Array2::zeros((m, params.d_out()));
    let mut norms = Vec::with_capacity(m);
    let mut token_counts = Vec::with_capacity(m);
    let mut degenerate = Vec::with_capacity(m);
    for (i, row) in rows.into_iter().enumerate() {
        vectors.row_mut(i).assign(&row.vector);
        means.row_mut(i).assign(&row.mean);
        pre_norm.row_mut(i).assign(&row.pre_norm);
        norms.push(row.norm);
        token_counts.push(row.count);
        degenerate.push(row.degenerate);
    }
    Ok((
        EmbeddingMatrix { vectors, degenerate },
        ForwardCache {
            ids: batch.ids.clone(),
            means,
            pre_norm,
            norms,
            token_counts,
        },
    ))
}

struct RowBackward {
    d_pre_norm: Array1<f64>,
    d_mean: Array1<f64>,
}

fn backward_row(
    params: &EncoderParams,
    cache: &ForwardCache,
    d_vectors: &Array2<f64>,
    i: usize,
) -> Option<RowBackward> {
    if cache.token_counts[i] == 0.0 {
        return None;
    }
    let g = d_vectors.row(i);
    let z = cache.pre_norm.row(i);
    let r = cache.norms[i];
    let denom = r + NORM_EPSILON;

    // v = z / (||z|| + eps):
    //   dz = g / denom - z * (g . z) / (r * denom^2)
    let mut d_pre_norm = g.mapv(|v| v / denom);
    if r > 0.0 {
        let g_dot_z = g.dot(&z);
        d_pre_norm.scaled_add(-g_dot_z / (r * denom * denom), &z);
    }
    let d_mean = params.projection.dot(&d_pre_norm);
    Some(RowBackward { d_pre_norm, d_mean })
}

/// Exact gradients of a scalar loss through the encoder, given `dL/dV`.
///
/// The `<PAD>` embedding row is forced to zero and degenerate rows
/// contribute nothing.
pub fn backward_batch(
    params: &EncoderParams,
    cache: &ForwardCache,
    d_vectors: &Array2<f64>,
) -> Result<Gradients> {
    let m = cache.ids.nrows();
    if d_vectors.dim() != (m, params.d_out()) {
        return Err(Error::Contract(format!(
            "dL/dV has shape {:?}, expected ({m}, {})",
            d_vectors.dim(),
            params.d_out()
        )));
    }

    let per_row: Vec<Option<RowBackward>> = (0..m)
        .into_par_iter()
        .map(|i| backward_row(params, cache, d_vectors, i))
        .collect();

    let mut d_embedding = Array2::zeros(params.embedding.dim());
    let mut d_projection = Array2::zeros(params.projection.dim());
    let mut d_bias = Array1::zeros(params.d_out());
    // Accumulate in fixed row order so results do not depend on threading.
    for (i, row) in per_row.into_iter().enumerate() {
        let Some(row) = row else { continue };
        d_bias += &row.d_pre_norm;
        let mean = cache.means.row(i);
        for (a, &u) in mean.iter().enumerate() {
            d_projection.row_mut(a).scaled_add(u, &row.d_pre_norm);
        }
        let scaled = &row.d_mean / cache.token_counts[i];
        for &id in cache.ids.row(i) {
            if id != PAD_ID {
                d_embedding.row_mut(id as usize).scaled_add(1.0, &scaled);
            }
        }
    }
    d_embedding.index_axis_mut(Axis(0), PAD_ID as usize).fill(0.0);

    Ok(Gradients {
        d_embedding,
        d_projection,
        d_bias,
    })
}
