//! Python bindings exposing the main types and operations: tokenization,
//! geocoding, the POI pipeline, the pair losses and locality weights,
//! training, and the evaluation protocols.

use std::collections::HashMap;
use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use sentpw::data::{
    self, parse_dataset, poi_class_dataset, DatasetKind, PoiRecord, Sentence, TokenizeMode,
};
use sentpw::error::Error;
use sentpw::eval;
use sentpw::losses::{self, LossConfig};
use sentpw::mining::{informative_pair_filter, MiningConfig};
use sentpw::similarity::SimMatrix;
use sentpw::trainer::{self, Checkpoint, TrainConfig};

type Matrix = Vec<Vec<f64>>;
type BoolMatrix = Vec<Vec<bool>>;

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::Contract(m) | Error::Numeric(m) => PyRuntimeError::new_err(m),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_mode(mode: &str) -> PyResult<TokenizeMode> {
    mode.parse().map_err(to_py_err)
}

fn matrix_to_lists(matrix: &Array2<f64>) -> Vec<Vec<f64>> {
    matrix.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn lists_to_matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let m = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows have inconsistent lengths"));
    }
    let mut out = Array2::zeros((m, d));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    Ok(out)
}

fn sim_from_lists(sim: Vec<Vec<f64>>, labels: Vec<u32>) -> PyResult<SimMatrix> {
    SimMatrix::from_values(lists_to_matrix(sim)?, &labels).map_err(to_py_err)
}

/// Split text into tokens ("whitespace" or "per_char" mode).
#[pyfunction]
#[pyo3(signature = (text, mode = "whitespace"))]
fn tokenize(text: &str, mode: &str) -> PyResult<Vec<String>> {
    Ok(data::tokenize(text, parse_mode(mode)?).tokens)
}

/// Morton-encode a coordinate into a decimal string of at most 19 digits.
#[pyfunction]
#[pyo3(signature = (lat, lon, bits_per_axis = 31))]
fn encode_geo(lat: f64, lon: f64, bits_per_axis: u32) -> PyResult<String> {
    data::encode_geo(lat, lon, bits_per_axis).map_err(to_py_err)
}

/// Render a POI record as its `address <PAD> name <PAD> code` sentence.
/// Returns (text, tokens).
#[pyfunction]
fn poi_sentence(
    category: &str,
    name: &str,
    address: &str,
    lat: f64,
    lon: f64,
) -> PyResult<(String, Vec<String>)> {
    let record = PoiRecord::new(category, name, address, lat, lon).map_err(to_py_err)?;
    let sentence = data::poi_to_sentence(&record).map_err(to_py_err)?;
    Ok((sentence.text, sentence.tokens))
}

fn loss_config(alpha: f64, beta: f64, lam: f64, lambda_c: f64) -> LossConfig {
    LossConfig {
        alpha,
        beta,
        lambda_ms: lam,
        lambda_c,
    }
}

/// Multi-similarity loss over a similarity matrix with integer class labels.
/// Returns (loss, d_sim, weights).
#[pyfunction]
#[pyo3(signature = (sim, labels, alpha = 2.0, beta = 50.0, lam = 0.5))]
fn multisim_loss(
    sim: Vec<Vec<f64>>,
    labels: Vec<u32>,
    alpha: f64,
    beta: f64,
    lam: f64,
) -> PyResult<(f64, Matrix, Matrix)> {
    let sim = sim_from_lists(sim, labels)?;
    let report =
        losses::multisim_loss(&sim, &loss_config(alpha, beta, lam, 0.5)).map_err(to_py_err)?;
    Ok((
        report.loss,
        matrix_to_lists(&report.d_sim),
        matrix_to_lists(&report.weights),
    ))
}

/// Closed-form multi-similarity locality weights (zero off-mask).
#[pyfunction]
#[pyo3(signature = (sim, labels, alpha = 2.0, beta = 50.0, lam = 0.5))]
fn ms_pair_weights(
    sim: Vec<Vec<f64>>,
    labels: Vec<u32>,
    alpha: f64,
    beta: f64,
    lam: f64,
) -> PyResult<Vec<Vec<f64>>> {
    let sim = sim_from_lists(sim, labels)?;
    Ok(matrix_to_lists(&losses::ms_pair_weights(
        &sim,
        &loss_config(alpha, beta, lam, 0.5),
    )))
}

/// Contrastive loss over a similarity matrix. Returns (loss, d_sim).
#[pyfunction]
#[pyo3(signature = (sim, labels, margin = 0.5))]
fn contrastive_loss(
    sim: Vec<Vec<f64>>,
    labels: Vec<u32>,
    margin: f64,
) -> PyResult<(f64, Vec<Vec<f64>>)> {
    let sim = sim_from_lists(sim, labels)?;
    let report =
        losses::contrastive_loss(&sim, &loss_config(2.0, 50.0, 0.5, margin)).map_err(to_py_err)?;
    Ok((report.loss, matrix_to_lists(&report.d_sim)))
}

/// Informative-pair filter. Returns (keep_neg, keep_pos, kept_fraction).
#[pyfunction]
#[pyo3(signature = (sim, labels, epsilon = 0.1))]
fn informative_pairs(
    sim: Vec<Vec<f64>>,
    labels: Vec<u32>,
    epsilon: f64,
) -> PyResult<(BoolMatrix, BoolMatrix, f64)> {
    let sim = sim_from_lists(sim, labels)?;
    let cfg = MiningConfig {
        epsilon,
        ..MiningConfig::default()
    };
    let outcome = informative_pair_filter(&sim, &cfg);
    let bools = |m: &Array2<bool>| -> Vec<Vec<bool>> {
        m.rows().into_iter().map(|r| r.to_vec()).collect()
    };
    Ok((
        bools(&outcome.keep_neg),
        bools(&outcome.keep_pos),
        outcome.kept_fraction,
    ))
}

/// Grid threshold search over (0, 1). Returns (threshold, dev_accuracy).
#[pyfunction]
#[pyo3(signature = (scores, labels, grid_step = 0.001))]
fn threshold_search(scores: Vec<f64>, labels: Vec<u8>, grid_step: f64) -> PyResult<(f64, f64)> {
    eval::threshold_search(&scores, &labels, grid_step).map_err(to_py_err)
}

/// Accuracy and positive-class F1 at a fixed threshold.
#[pyfunction]
fn pair_classification(scores: Vec<f64>, labels: Vec<u8>, threshold: f64) -> (f64, f64) {
    eval::pair_classification(&scores, &labels, threshold)
}

/// Hit@n retrieval. Returns (hit_rate, evaluated, flagged).
#[pyfunction]
#[pyo3(signature = (queries, query_labels, gallery, gallery_labels, n = 1))]
fn hit_at_n(
    queries: Vec<Vec<f64>>,
    query_labels: Vec<u32>,
    gallery: Vec<Vec<f64>>,
    gallery_labels: Vec<u32>,
    n: usize,
) -> PyResult<(f64, usize, usize)> {
    let report = eval::hit_at_n(
        &lists_to_matrix(queries)?,
        &query_labels,
        &lists_to_matrix(gallery)?,
        &gallery_labels,
        n,
        None,
    )
    .map_err(to_py_err)?;
    Ok((report.hit_rate, report.evaluated, report.flagged))
}

/// Mean nearest-other-center distance over mean within-class spread.
#[pyfunction]
fn inter_intra(embeddings: Vec<Vec<f64>>, labels: Vec<u32>) -> PyResult<f64> {
    eval::inter_intra(&lists_to_matrix(embeddings)?, &labels).map_err(to_py_err)
}

/// Project embeddings onto their top-2 principal directions.
#[pyfunction]
fn pca2d(embeddings: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let coords = eval::pca2d(&lists_to_matrix(embeddings)?).map_err(to_py_err)?;
    Ok(matrix_to_lists(&coords))
}

/// A trained encoder: vocabulary plus parameters, loadable from and savable
/// to the versioned checkpoint format.
#[pyclass]
struct Model {
    inner: Checkpoint,
}

impl Model {
    fn sentences(texts: &[String], mode: TokenizeMode) -> Vec<Sentence> {
        texts.iter().map(|t| data::tokenize(t, mode)).collect()
    }
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Model {
            inner: trainer::load_checkpoint(&path).map_err(to_py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        trainer::save_checkpoint(&self.inner, &path).map_err(to_py_err)
    }

    #[getter]
    fn loss(&self) -> String {
        self.inner.loss.to_string()
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.inner.vocab.size()
    }

    #[getter]
    fn embedding_dim(&self) -> usize {
        self.inner.params.d_out()
    }

    /// Embed texts into unit-norm vectors (lists of floats).
    #[pyo3(signature = (texts, mode = "whitespace"))]
    fn embed(&self, texts: Vec<String>, mode: &str) -> PyResult<Vec<Vec<f64>>> {
        let sentences = Self::sentences(&texts, parse_mode(mode)?);
        let emb = self.inner.embed_sentences(&sentences).map_err(to_py_err)?;
        Ok(matrix_to_lists(&emb.vectors))
    }

    /// Cosine similarity of two texts.
    #[pyo3(signature = (first, second, mode = "whitespace"))]
    fn score_pair(&self, first: &str, second: &str, mode: &str) -> PyResult<f64> {
        let sentences = Self::sentences(&[first.to_owned(), second.to_owned()], parse_mode(mode)?);
        let emb = self.inner.embed_sentences(&sentences).map_err(to_py_err)?;
        Ok(emb.vectors.row(0).dot(&emb.vectors.row(1)))
    }

    /// Fraction of (anchor, positive, negative) text triplets ranked
    /// correctly; ties count as incorrect.
    #[pyo3(signature = (triplets, mode = "whitespace"))]
    fn triplet_accuracy(
        &self,
        triplets: Vec<(String, String, String)>,
        mode: &str,
    ) -> PyResult<f64> {
        let mode = parse_mode(mode)?;
        let records: Vec<data::TripletRecord> = triplets
            .iter()
            .map(|(a, p, n)| data::TripletRecord {
                anchor: data::tokenize(a, mode),
                positive: data::tokenize(p, mode),
                negative: data::tokenize(n, mode),
            })
            .collect();
        eval::triplet_accuracy_model(&self.inner, &records).map_err(to_py_err)
    }
}

/// Train an encoder on a TSV string or file and return the model.
///
/// `data` is the file content when `from_text` is true, otherwise a path.
/// Classes data (`sentence \t class_id`) works with every loss; pairs data
/// (`sent1 \t sent2 \t {0|1}`) with the contrastive loss; POI data
/// (`category \t name \t address \t lat \t lon`) with `poi = True`.
#[pyfunction]
#[pyo3(signature = (
    data, loss = "multisim", epochs = 10, steps = 30, d_in = 32, d_out = 32,
    p = 8, k = 4, seed = 42, lr = 1e-3, alpha = 2.0, beta = 50.0, lam = 0.5,
    epsilon = 0.1, filter = true, mode = "whitespace", poi = false,
    from_text = false
))]
#[allow(clippy::too_many_arguments)]
fn train(
    data: &str,
    loss: &str,
    epochs: usize,
    steps: usize,
    d_in: usize,
    d_out: usize,
    p: usize,
    k: usize,
    seed: u64,
    lr: f64,
    alpha: f64,
    beta: f64,
    lam: f64,
    epsilon: f64,
    filter: bool,
    mode: &str,
    poi: bool,
    from_text: bool,
) -> PyResult<Model> {
    let mode = parse_mode(mode)?;
    let content = if from_text {
        data.to_owned()
    } else {
        std::fs::read_to_string(data).map_err(|e| PyIOError::new_err(e.to_string()))?
    };
    let loss_kind: trainer::LossKind = loss.parse().map_err(to_py_err)?;
    let dataset = if poi {
        let records = data::parse_poi_records(&content).map_err(to_py_err)?;
        poi_class_dataset(&records).map_err(to_py_err)?
    } else {
        let columns = content.lines().next().map_or(0, |l| l.split('\t').count());
        let kind = match columns {
            2 => DatasetKind::Classes,
            3 => DatasetKind::Pairs,
            n => {
                return Err(PyValueError::new_err(format!(
                    "expected 2 (classes) or 3 (pairs) columns, got {n}"
                )))
            }
        };
        parse_dataset(&content, kind, mode).map_err(to_py_err)?
    };
    let cfg = TrainConfig {
        loss: loss_kind,
        epochs,
        steps_per_epoch: steps,
        d_in,
        d_out,
        seed,
        learning_rate: lr,
        loss_cfg: loss_config(alpha, beta, lam, lam),
        mining: MiningConfig {
            epsilon,
            classes_per_batch: p,
            samples_per_class: k,
            ..MiningConfig::default()
        },
        filter,
        ..TrainConfig::default()
    };
    let outcome = trainer::fit(&cfg, &dataset).map_err(to_py_err)?;
    Ok(Model {
        inner: outcome.checkpoint(loss_kind),
    })
}

/// Word-vector table loader for pretrained embedding initialization checks.
#[pyfunction]
fn load_word_vectors(path: PathBuf, dim: usize) -> PyResult<HashMap<String, Vec<f64>>> {
    data::load_word_vectors(&path, dim).map_err(to_py_err)
}

#[pymodule]
fn sentpw_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(encode_geo, m)?)?;
    m.add_function(wrap_pyfunction!(poi_sentence, m)?)?;
    m.add_function(wrap_pyfunction!(multisim_loss, m)?)?;
    m.add_function(wrap_pyfunction!(ms_pair_weights, m)?)?;
    m.add_function(wrap_pyfunction!(contrastive_loss, m)?)?;
    m.add_function(wrap_pyfunction!(informative_pairs, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_search, m)?)?;
    m.add_function(wrap_pyfunction!(pair_classification, m)?)?;
    m.add_function(wrap_pyfunction!(hit_at_n, m)?)?;
    m.add_function(wrap_pyfunction!(inter_intra, m)?)?;
    m.add_function(wrap_pyfunction!(pca2d, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(load_word_vectors, m)?)?;
    Ok(())
}
