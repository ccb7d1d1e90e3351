//! Cosine similarity matrix over a batch and label-derived pair masks.

use ndarray::Array2;
use rayon::prelude::*;

use crate::encoder::EmbeddingMatrix;
use crate::error::{Error, Result};

/// Batch similarity matrix with positive/negative pair masks.
///
/// The masks are disjoint and exclude the diagonal; together with the
/// diagonal they partition all index pairs. Pairs touching a degenerate
/// (zero-vector) row are removed from both masks.
#[derive(Debug, Clone)]
pub struct SimMatrix {
    /// m x m cosine values, clamped to [-1, 1].
    pub values: Array2<f64>,
    pub pos_mask: Array2<bool>,
    pub neg_mask: Array2<bool>,
    pub labels: Vec<u32>,
}

impl SimMatrix {
    /// Build from unit-row embeddings and class labels.
    pub fn from_embeddings(emb: &EmbeddingMatrix, labels: &[u32]) -> Result<Self> {
        if labels.len() != emb.rows() {
            return Err(Error::Contract(format!(
                "{} labels for {} embedding rows",
                labels.len(),
                emb.rows()
            )));
        }
        let values = cosine_matrix(emb);
        let (mut pos_mask, mut neg_mask) = pair_masks(labels);
        for (i, &bad) in emb.degenerate.iter().enumerate() {
            if bad {
                for j in 0..labels.len() {
                    pos_mask[[i, j]] = false;
                    pos_mask[[j, i]] = false;
                    neg_mask[[i, j]] = false;
                    neg_mask[[j, i]] = false;
                }
            }
        }
        Ok(SimMatrix {
            values,
            pos_mask,
            neg_mask,
            labels: labels.to_vec(),
        })
    }

    /// Build from a raw similarity matrix (entries clamped to [-1, 1]).
    pub fn from_values(values: Array2<f64>, labels: &[u32]) -> Result<Self> {
        let (r, c) = values.dim();
        if r != c || r != labels.len() {
            return Err(Error::Contract(format!(
                "similarity matrix {r}x{c} does not match {} labels",
                labels.len()
            )));
        }
        let values = values.mapv(|v| v.clamp(-1.0, 1.0));
        let (pos_mask, neg_mask) = pair_masks(labels);
        Ok(SimMatrix {
            values,
            pos_mask,
            neg_mask,
            labels: labels.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Copy with both masks intersected with keep masks from the
    /// informative-pair filter.
    pub fn filtered(&self, keep_pos: &Array2<bool>, keep_neg: &Array2<bool>) -> SimMatrix {
        let m = self.len();
        let mut out = self.clone();
        for i in 0..m {
            for j in 0..m {
                out.pos_mask[[i, j]] &= keep_pos[[i, j]];
                out.neg_mask[[i, j]] &= keep_neg[[i, j]];
            }
        }
        out
    }

    /// Mean similarity over each mask; 0.0 when a mask is empty.
    pub fn mask_means(&self) -> (f64, f64) {
        let mut pos = (0.0, 0usize);
        let mut neg = (0.0, 0usize);
        let m = self.len();
        for i in 0..m {
            for j in 0..m {
                if self.pos_mask[[i, j]] {
                    pos.0 += self.values[[i, j]];
                    pos.1 += 1;
                }
                if self.neg_mask[[i, j]] {
                    neg.0 += self.values[[i, j]];
                    neg.1 += 1;
                }
            }
        }
        let mean = |(sum, n): (f64, usize)| if n == 0 { 0.0 } else { sum / n as f64 };
        (mean(pos), mean(neg))
    }
}

/// S = V . V^T over unit (or zero) rows, computed once per unordered pair so
/// the result is exactly symmetric. Entries are clamped to [-1, 1] to guard
/// rounding ahead of the loss exponentials; the diagonal is 1 for unit rows
/// and 0 for degenerate ones.
pub fn cosine_matrix(emb: &EmbeddingMatrix) -> Array2<f64> {
    let m = emb.rows();
    let upper: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let row_i = emb.vectors.row(i);
            (i + 1..m)
                .map(|j| row_i.dot(&emb.vectors.row(j)).clamp(-1.0, 1.0))
                .collect()
        })
        .collect();
    let mut s = Array2::zeros((m, m));
    for (i, row) in upper.into_iter().enumerate() {
        s[[i, i]] = if emb.degenerate[i] { 0.0 } else { 1.0 };
        for (offset, v) in row.into_iter().enumerate() {
            let j = i + 1 + offset;
            s[[i, j]] = v;
            s[[j, i]] = v;
        }
    }
    s
}

/// Positive mask: same label off the diagonal. Negative mask: different
/// label. The diagonal belongs to neither.
pub fn pair_masks(labels: &[u32]) -> (Array2<bool>, Array2<bool>) {
    let m = labels.len();
    let mut pos = Array2::from_elem((m, m), false);
    let mut neg = Array2::from_elem((m, m), false);
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            if labels[i] == labels[j] {
                pos[[i, j]] = true;
            } else {
                neg[[i, j]] = true;
            }
        }
    }
    (pos, neg)
}
