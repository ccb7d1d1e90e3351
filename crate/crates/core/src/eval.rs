//! Evaluation protocols: threshold-search pair classification, triplet
//! accuracy, Hit@n retrieval, inter/intra cluster ratio, and 2-D PCA export.

use std::collections::HashMap;

use ndarray::{Array1, Array2};

use crate::data::TripletRecord;
use crate::error::{Error, Result};
use crate::trainer::Checkpoint;

/// Which evaluation protocol produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalTask {
    Pairs,
    Triplets,
    Retrieval,
    Clustering,
    Projection,
}

impl std::fmt::Display for EvalTask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EvalTask::Pairs => f.write_str("pairs"),
            EvalTask::Triplets => f.write_str("triplets"),
            EvalTask::Retrieval => f.write_str("retrieval"),
            EvalTask::Clustering => f.write_str("clustering"),
            EvalTask::Projection => f.write_str("projection"),
        }
    }
}

/// Ordered metric map with range checks per entry kind, rendered as
/// tab-separated key/value lines.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub task: EvalTask,
    entries: Vec<(String, String)>,
}

impl EvalReport {
    pub fn new(task: EvalTask) -> Self {
        EvalReport {
            task,
            entries: Vec::new(),
        }
    }

    /// A metric constrained to [0, 1] (accuracy, F1, hit rates).
    pub fn push_metric(&mut self, key: &str, value: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Contract(format!(
                "metric {key} = {value} outside [0, 1]"
            )));
        }
        self.entries.push((key.to_owned(), value.to_string()));
        Ok(())
    }

    /// A similarity threshold, open interval (0, 1).
    pub fn push_threshold(&mut self, key: &str, value: f64) -> Result<()> {
        if !(value > 0.0 && value < 1.0) {
            return Err(Error::Contract(format!(
                "threshold {key} = {value} outside (0, 1)"
            )));
        }
        self.entries.push((key.to_owned(), value.to_string()));
        Ok(())
    }

    /// A non-negative ratio; +inf marks collapsed within-class spread.
    pub fn push_ratio(&mut self, key: &str, value: f64) -> Result<()> {
        if value < 0.0 || value.is_nan() {
            return Err(Error::Contract(format!(
                "ratio {key} = {value} must be >= 0 or +inf"
            )));
        }
        self.entries.push((key.to_owned(), value.to_string()));
        Ok(())
    }

    pub fn push_count(&mut self, key: &str, value: usize) {
        self.entries.push((key.to_owned(), value.to_string()));
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// One `key\tvalue` line per entry.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (key, value) in &self.entries {
            out.push_str(key);
            out.push('\t');
            out.push_str(value);
            out.push('\n');
        }
        out
    }
}

/// Grid-scan the threshold space (0, 1) and return the smallest threshold
/// attaining maximal accuracy on the dev scores, together with that
/// accuracy. A pair counts as predicted positive iff its score is strictly
/// greater than the threshold.
pub fn threshold_search(
    dev_scores: &[f64],
    dev_labels: &[u8],
    grid_step: f64,
) -> Result<(f64, f64)> {
    if dev_scores.is_empty() {
        return Err(Error::Eval("empty dev set".into()));
    }
    if dev_scores.len() != dev_labels.len() {
        return Err(Error::Contract(format!(
            "{} scores but {} labels",
            dev_scores.len(),
            dev_labels.len()
        )));
    }
    if !(grid_step > 0.0 && grid_step < 1.0) {
        return Err(Error::Config(format!(
            "grid_step must lie in (0, 1), got {grid_step}"
        )));
    }
    let mut best_threshold = 0.0;
    let mut best_accuracy = -1.0;
    let mut k = 1u64;
    loop {
        let threshold = k as f64 * grid_step;
        if threshold >= 1.0 {
            break;
        }
        let accuracy = accuracy_at(dev_scores, dev_labels, threshold);
        // Strict improvement keeps the first (smallest) optimal threshold.
        if accuracy > best_accuracy {
            best_accuracy = accuracy;
            best_threshold = threshold;
        }
        k += 1;
    }
    Ok((best_threshold, best_accuracy))
}

fn accuracy_at(scores: &[f64], labels: &[u8], threshold: f64) -> f64 {
    let correct = scores
        .iter()
        .zip(labels)
        .filter(|&(&s, &l)| (s > threshold) == (l == 1))
        .count();
    correct as f64 / scores.len() as f64
}

/// Accuracy and positive-class F1 at a fixed threshold. F1 is 0 when the
/// classifier makes no positive prediction.
pub fn pair_classification(scores: &[f64], labels: &[u8], threshold: f64) -> (f64, f64) {
    let accuracy = accuracy_at(scores, labels, threshold);
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fn_ = 0.0;
    for (&s, &l) in scores.iter().zip(labels) {
        let predicted = s > threshold;
        match (predicted, l == 1) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fn_ += 1.0,
            (false, false) => {}
        }
    }
    let f1 = if tp == 0.0 {
        0.0
    } else {
        let precision = tp / (tp + fp);
        let recall = tp / (tp + fn_);
        2.0 * precision * recall / (precision + recall)
    };
    (accuracy, f1)
}

/// Fraction of triplets whose anchor-positive similarity is strictly
/// greater than the anchor-negative one; ties count as incorrect.
pub fn triplet_accuracy(sims: &[(f64, f64)]) -> f64 {
    if sims.is_empty() {
        return 0.0;
    }
    let correct = sims.iter().filter(|&&(s_ap, s_an)| s_ap > s_an).count();
    correct as f64 / sims.len() as f64
}

/// Embed triplet records with a checkpoint and score them.
pub fn triplet_accuracy_model(checkpoint: &Checkpoint, triplets: &[TripletRecord]) -> Result<f64> {
    Ok(triplet_accuracy(&triplet_sims(checkpoint, triplets)?))
}

/// Cosine pairs (S_ap, S_an) for each triplet under a checkpoint.
pub fn triplet_sims(
    checkpoint: &Checkpoint,
    triplets: &[TripletRecord],
) -> Result<Vec<(f64, f64)>> {
    let mut sentences = Vec::with_capacity(triplets.len() * 3);
    for t in triplets {
        sentences.push(t.anchor.clone());
        sentences.push(t.positive.clone());
        sentences.push(t.negative.clone());
    }
    let emb = checkpoint.embed_sentences(&sentences)?;
    let mut sims = Vec::with_capacity(triplets.len());
    for i in 0..triplets.len() {
        let anchor = emb.vectors.row(3 * i);
        let s_ap = anchor.dot(&emb.vectors.row(3 * i + 1));
        let s_an = anchor.dot(&emb.vectors.row(3 * i + 2));
        sims.push((s_ap, s_an));
    }
    Ok(sims)
}

/// Retrieval outcome for one value of n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HitReport {
    pub hit_rate: f64,
    pub hits: usize,
    /// Queries that entered the ranking.
    pub evaluated: usize,
    /// Queries skipped because no gallery item shares their label.
    pub flagged: usize,
}

/// Hit@n: for each query, rank the gallery by descending cosine (ties by
/// gallery index) and count a hit when any of the top n items shares the
/// query's label. `self_index` optionally maps each query to its own gallery
/// row, which is excluded from that query's ranking.
pub fn hit_at_n(
    query_embs: &Array2<f64>,
    query_labels: &[u32],
    gallery_embs: &Array2<f64>,
    gallery_labels: &[u32],
    n: usize,
    self_index: Option<&[Option<usize>]>,
) -> Result<HitReport> {
    if n == 0 {
        return Err(Error::Config("n must be >= 1".into()));
    }
    let q = query_embs.nrows();
    let g = gallery_embs.nrows();
    if query_labels.len() != q || gallery_labels.len() != g {
        return Err(Error::Contract("label/embedding row mismatch".into()));
    }
    if let Some(map) = self_index {
        if map.len() != q {
            return Err(Error::Contract("self_index length mismatch".into()));
        }
    }
    let mut hits = 0;
    let mut evaluated = 0;
    let mut flagged = 0;
    for qi in 0..q {
        let own = self_index.and_then(|m| m[qi]);
        let candidates: Vec<usize> = (0..g).filter(|&j| Some(j) != own).collect();
        if !candidates
            .iter()
            .any(|&j| gallery_labels[j] == query_labels[qi])
        {
            flagged += 1;
            continue;
        }
        evaluated += 1;
        let qrow = query_embs.row(qi);
        let mut scored: Vec<(usize, f64)> = candidates
            .into_iter()
            .map(|j| (j, qrow.dot(&gallery_embs.row(j))))
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        if scored
            .iter()
            .take(n)
            .any(|&(j, _)| gallery_labels[j] == query_labels[qi])
        {
            hits += 1;
        }
    }
    let hit_rate = if evaluated == 0 {
        0.0
    } else {
        hits as f64 / evaluated as f64
    };
    Ok(HitReport {
        hit_rate,
        hits,
        evaluated,
        flagged,
    })
}

/// Mean nearest-other-center distance over mean within-class distance to
/// center. Returns +inf when every class collapses to its center.
pub fn inter_intra(embs: &Array2<f64>, labels: &[u32]) -> Result<f64> {
    if labels.len() != embs.nrows() {
        return Err(Error::Contract("label/embedding row mismatch".into()));
    }
    let mut members: HashMap<u32, Vec<usize>> = HashMap::new();
    for (i, &label) in labels.iter().enumerate() {
        members.entry(label).or_default().push(i);
    }
    if members.len() < 2 {
        return Err(Error::Eval(format!(
            "inter/intra needs at least 2 classes, got {}",
            members.len()
        )));
    }
    let mut class_ids: Vec<u32> = members.keys().copied().collect();
    class_ids.sort_unstable();

    let d = embs.ncols();
    let mut centers = Array2::zeros((class_ids.len(), d));
    let mut intra = Vec::with_capacity(class_ids.len());
    for (c, id) in class_ids.iter().enumerate() {
        let rows = &members[id];
        let mut center = Array1::zeros(d);
        for &i in rows {
            center += &embs.row(i);
        }
        center /= rows.len() as f64;
        let mean_dist = rows
            .iter()
            .map(|&i| {
                let diff = &embs.row(i) - &center;
                diff.dot(&diff).sqrt()
            })
            .sum::<f64>()
            / rows.len() as f64;
        centers.row_mut(c).assign(&center);
        intra.push(mean_dist);
    }

    let mut inter = Vec::with_capacity(class_ids.len());
    for c in 0..class_ids.len() {
        let mut nearest = f64::INFINITY;
        for other in 0..class_ids.len() {
            if other == c {
                continue;
            }
            let diff = &centers.row(c) - &centers.row(other);
            nearest = nearest.min(diff.dot(&diff).sqrt());
        }
        inter.push(nearest);
    }

    let mean_intra = intra.iter().sum::<f64>() / intra.len() as f64;
    let mean_inter = inter.iter().sum::<f64>() / inter.len() as f64;
    if mean_intra < 1e-12 {
        return Ok(f64::INFINITY);
    }
    Ok(mean_inter / mean_intra)
}

/// Project embeddings onto their top-2 principal directions.
///
/// Columns are centered first; the output orientation is fixed by forcing
/// the largest-magnitude loading of each axis positive, so the projection is
/// fully deterministic. Rank-deficient inputs produce zero coordinates on
/// the missing axes.
pub fn pca2d(embs: &Array2<f64>) -> Result<Array2<f64>> {
    let m = embs.nrows();
    if m < 2 {
        return Err(Error::Eval("pca2d needs at least 2 rows".into()));
    }
    let d = embs.ncols();
    let mut centered = embs.clone();
    for j in 0..d {
        let mean = centered.column(j).sum() / m as f64;
        centered.column_mut(j).mapv_inplace(|v| v - mean);
    }
    let cov = centered.t().dot(&centered);
    let (eigenvalues, eigenvectors) = symmetric_eigen(&cov);

    // Indices of the two largest eigenvalues (descending).
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eigenvalues[b]
            .partial_cmp(&eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut axes = Array2::zeros((d, 2));
    for (axis, &idx) in order.iter().take(2).enumerate() {
        let mut direction = eigenvectors.column(idx).to_owned();
        orient(&mut direction);
        axes.column_mut(axis).assign(&direction);
    }
    Ok(centered.dot(&axes))
}

/// Flip `v` so its largest-magnitude component is positive.
fn orient(v: &mut Array1<f64>) {
    let mut arg = 0;
    for (i, &x) in v.iter().enumerate() {
        if x.abs() > v[arg].abs() {
            arg = i;
        }
    }
    if v[arg] < 0.0 {
        v.mapv_inplace(|x| -x);
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// (eigenvalues, eigenvectors-as-columns). Deterministic and accurate
/// enough at the dimensionalities this crate uses.
fn symmetric_eigen(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let d = a.nrows();
    let mut m = a.clone();
    let mut v = Array2::eye(d);
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().max(1e-300);
    for _ in 0..64 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum();
        if off <= 1e-28 * scale {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                if m[[p, q]].abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * m[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..d {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eigenvalues = Array1::from_iter((0..d).map(|i| m[[i, i]]));
    (eigenvalues, v)
}
