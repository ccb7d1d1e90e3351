//! Shared oracles and generators for the integration suites. Everything in
//! this module is written independently of the library code paths it checks:
//! finite differences instead of analytic gradients, literal scans instead
//! of incremental filters, string interleaving instead of bit arithmetic.

#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sentpw::data::{tokenize, ClassRecord, Dataset, TokenizeMode, TripletRecord};
use sentpw::encoder::{embed_batch, EncoderParams, TokenBatch};
use sentpw::similarity::SimMatrix;

/// Relative error with a floor: entries below the floor are compared
/// absolutely (scaled by the floor), which is the usual gradient-check
/// convention for numerically negligible coordinates.
pub fn rel_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Central finite differences of `f` over every entry of `values`.
pub fn fd_matrix_gradient<F>(values: &Array2<f64>, h: f64, f: F) -> Array2<f64>
where
    F: Fn(&Array2<f64>) -> f64,
{
    let mut grad = Array2::zeros(values.dim());
    for i in 0..values.nrows() {
        for j in 0..values.ncols() {
            let mut plus = values.clone();
            plus[[i, j]] += h;
            let mut minus = values.clone();
            minus[[i, j]] -= h;
            grad[[i, j]] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
    }
    grad
}

/// Central finite differences of a scalar probe loss over every encoder
/// parameter coordinate.
pub fn fd_param_gradient<F>(
    params: &EncoderParams,
    h: f64,
    loss: F,
) -> (Array2<f64>, Array2<f64>, Array1<f64>)
where
    F: Fn(&EncoderParams) -> f64,
{
    let mut d_embedding = Array2::zeros(params.embedding.dim());
    for i in 0..params.embedding.nrows() {
        for j in 0..params.embedding.ncols() {
            let mut plus = params.clone();
            plus.embedding[[i, j]] += h;
            let mut minus = params.clone();
            minus.embedding[[i, j]] -= h;
            d_embedding[[i, j]] = (loss(&plus) - loss(&minus)) / (2.0 * h);
        }
    }
    let mut d_projection = Array2::zeros(params.projection.dim());
    for i in 0..params.projection.nrows() {
        for j in 0..params.projection.ncols() {
            let mut plus = params.clone();
            plus.projection[[i, j]] += h;
            let mut minus = params.clone();
            minus.projection[[i, j]] -= h;
            d_projection[[i, j]] = (loss(&plus) - loss(&minus)) / (2.0 * h);
        }
    }
    let mut d_bias = Array1::zeros(params.bias.len());
    for i in 0..params.bias.len() {
        let mut plus = params.clone();
        plus.bias[i] += h;
        let mut minus = params.clone();
        minus.bias[i] -= h;
        d_bias[i] = (loss(&plus) - loss(&minus)) / (2.0 * h);
    }
    (d_embedding, d_projection, d_bias)
}

/// A random symmetric similarity instance: entries in [-0.9, 0.9] (so the
/// clamp stays inactive under finite-difference perturbation), unit
/// diagonal, labels from a small alphabet.
pub fn random_sim_instance(rng: &mut ChaCha8Rng, m: usize) -> (Array2<f64>, Vec<u32>) {
    let mut values = Array2::zeros((m, m));
    for i in 0..m {
        values[[i, i]] = 1.0;
        for j in (i + 1)..m {
            let v = rng.random::<f64>() * 1.8 - 0.9;
            values[[i, j]] = v;
            values[[j, i]] = v;
        }
    }
    let labels = (0..m).map(|_| rng.random_range(0..3)).collect();
    (values, labels)
}

/// Literal triple scan of the informative-pair conditions: a negative pair
/// survives iff its similarity exceeds the anchor's minimum positive
/// similarity minus epsilon (kept unconditionally when the anchor has no
/// positive), and symmetrically for positives.
pub fn brute_force_filter(
    values: &Array2<f64>,
    labels: &[u32],
    epsilon: f64,
) -> (Array2<bool>, Array2<bool>) {
    let m = labels.len();
    let mut keep_neg = Array2::from_elem((m, m), false);
    let mut keep_pos = Array2::from_elem((m, m), false);
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            if labels[i] != labels[j] {
                let mut min_pos = f64::INFINITY;
                let mut found = false;
                for k in 0..m {
                    if k != i && labels[k] == labels[i] {
                        found = true;
                        if values[[i, k]] < min_pos {
                            min_pos = values[[i, k]];
                        }
                    }
                }
                keep_neg[[i, j]] = !found || values[[i, j]] > min_pos - epsilon;
            } else {
                let mut max_neg = f64::NEG_INFINITY;
                let mut found = false;
                for k in 0..m {
                    if labels[k] != labels[i] {
                        found = true;
                        if values[[i, k]] > max_neg {
                            max_neg = values[[i, k]];
                        }
                    }
                }
                keep_pos[[i, j]] = !found || values[[i, j]] < max_neg + epsilon;
            }
        }
    }
    (keep_neg, keep_pos)
}

fn scan_accuracy(scores: &[f64], labels: &[u8], threshold: f64) -> f64 {
    let correct = scores
        .iter()
        .zip(labels)
        .filter(|&(&s, &l)| (s > threshold) == (l == 1))
        .count();
    correct as f64 / scores.len() as f64
}

/// Exact optimum of the threshold classifier over (0, 1), found by scanning
/// the midpoints of consecutive sorted scores plus the below-all and
/// above-all regions. Returns (best accuracy, smallest optimal candidate).
pub fn midpoint_scan_optimum(scores: &[f64], labels: &[u8]) -> (f64, f64) {
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted.dedup();
    let mut candidates = Vec::with_capacity(sorted.len() + 1);
    let below = sorted[0] / 2.0;
    if below > 0.0 && below < 1.0 {
        candidates.push(below);
    }
    for w in sorted.windows(2) {
        let mid = (w[0] + w[1]) / 2.0;
        if mid > 0.0 && mid < 1.0 {
            candidates.push(mid);
        }
    }
    let above = (sorted[sorted.len() - 1] + 1.0) / 2.0;
    if above > 0.0 && above < 1.0 {
        candidates.push(above);
    }
    let mut best = (-1.0, 0.0);
    for &t in &candidates {
        let accuracy = scan_accuracy(scores, labels, t);
        if accuracy > best.0 {
            best = (accuracy, t);
        }
    }
    (best.0, best.1)
}

/// Accuracy of the `score > threshold` rule, exposed for cross-checking the
/// grid-search result against the exact optimum.
pub fn oracle_accuracy(scores: &[f64], labels: &[u8], threshold: f64) -> f64 {
    scan_accuracy(scores, labels, threshold)
}

/// Independent Morton interleave: renders both cell indices as fixed-width
/// binary strings, zips them longitude-first, and parses the result.
pub fn interleave_via_strings(lon_cell: u64, lat_cell: u64, bits: u32) -> u64 {
    let lon = format!("{lon_cell:0width$b}", width = bits as usize);
    let lat = format!("{lat_cell:0width$b}", width = bits as usize);
    let mut zipped = String::with_capacity(2 * bits as usize);
    for (a, b) in lon.chars().zip(lat.chars()) {
        zipped.push(a);
        zipped.push(b);
    }
    u64::from_str_radix(&zipped, 2).expect("binary string")
}

/// Quantize a coordinate the way the encoder specifies: uniform cells over
/// the full axis domain, clamped at the top edge.
pub fn quantize_oracle(x: f64, lo: f64, hi: f64, bits: u32) -> u64 {
    let cells = 1u64 << bits;
    let cell = ((x - lo) / (hi - lo) * cells as f64).floor() as u64;
    cell.min(cells - 1)
}

/// Synthetic benchmark corpus: 20 classes x 50 sentences built from 8-token
/// class templates over a 500-token vocabulary, 2 tokens perturbed per
/// sample. 45 sentences per class form the training gallery, 5 are held out
/// as queries, and evaluation triplets are sampled from the held-out pool.
pub struct SynthCorpus {
    pub train: Dataset,
    pub queries: Vec<ClassRecord>,
    pub triplets: Vec<TripletRecord>,
}

pub const SYNTH_CLASSES: usize = 20;
pub const SYNTH_PER_CLASS: usize = 50;
pub const SYNTH_HELD_OUT: usize = 5;
pub const SYNTH_VOCAB: usize = 500;
pub const SYNTH_TEMPLATE_LEN: usize = 8;
pub const SYNTH_PERTURBED: usize = 2;

pub fn synthetic_corpus(seed: u64) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words: Vec<String> = (0..SYNTH_VOCAB).map(|i| format!("w{i:03}")).collect();
    let mut train = Vec::new();
    let mut queries = Vec::new();
    for class in 0..SYNTH_CLASSES as u32 {
        let template: Vec<usize> = (0..SYNTH_TEMPLATE_LEN)
            .map(|_| rng.random_range(0..SYNTH_VOCAB))
            .collect();
        for sample in 0..SYNTH_PER_CLASS {
            let mut tokens = template.clone();
            let mut positions = Vec::with_capacity(SYNTH_PERTURBED);
            while positions.len() < SYNTH_PERTURBED {
                let p = rng.random_range(0..SYNTH_TEMPLATE_LEN);
                if !positions.contains(&p) {
                    positions.push(p);
                }
            }
            for &p in &positions {
                tokens[p] = rng.random_range(0..SYNTH_VOCAB);
            }
            let text = tokens
                .iter()
                .map(|&t| words[t].as_str())
                .collect::<Vec<_>>()
                .join(" ");
            let record = ClassRecord {
                sentence: tokenize(&text, TokenizeMode::Whitespace),
                class_id: class,
            };
            if sample < SYNTH_PER_CLASS - SYNTH_HELD_OUT {
                train.push(record);
            } else {
                queries.push(record);
            }
        }
    }

    let mut triplets = Vec::new();
    for _ in 0..600 {
        let a = rng.random_range(0..queries.len());
        let same: Vec<usize> = (0..queries.len())
            .filter(|&i| i != a && queries[i].class_id == queries[a].class_id)
            .collect();
        let diff: Vec<usize> = (0..queries.len())
            .filter(|&i| queries[i].class_id != queries[a].class_id)
            .collect();
        let p = same[rng.random_range(0..same.len())];
        let n = diff[rng.random_range(0..diff.len())];
        triplets.push(TripletRecord {
            anchor: queries[a].sentence.clone(),
            positive: queries[p].sentence.clone(),
            negative: queries[n].sentence.clone(),
        });
    }

    SynthCorpus {
        train: Dataset::Classes(train),
        queries,
        triplets,
    }
}

/// Build a token batch over a tiny random vocabulary for gradient probes.
pub fn random_probe_batch(
    rng: &mut ChaCha8Rng,
    vocab_size: usize,
    rows: usize,
    max_len: usize,
) -> TokenBatch {
    let mut id_rows = Vec::with_capacity(rows);
    for _ in 0..rows {
        let len = rng.random_range(1..=max_len);
        // Ids 2.. skip the reserved PAD/UNK slots.
        let ids = (0..len)
            .map(|_| rng.random_range(2..vocab_size as u32))
            .collect();
        id_rows.push(ids);
    }
    let labels = (0..rows).map(|_| rng.random_range(0..3)).collect();
    TokenBatch::new(id_rows, labels).unwrap()
}

/// The full differentiable pipeline value for parameter-space probes:
/// embed, build the similarity matrix, evaluate `loss_of_sim`.
pub fn pipeline_loss<F>(params: &EncoderParams, batch: &TokenBatch, loss_of_sim: F) -> f64
where
    F: Fn(&SimMatrix) -> f64,
{
    let (emb, _) = embed_batch(params, batch).unwrap();
    let sim = SimMatrix::from_embeddings(&emb, &batch.labels).unwrap();
    loss_of_sim(&sim)
}
