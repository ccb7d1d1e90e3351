//! Pair-based losses over a batch similarity matrix, each with its exact
//! analytic `dL/dS`, plus the gradient-magnitude pair-weight view that makes
//! the three losses comparable.
//!
//! Every loss obeys the same sign convention: `dL/dS` is non-negative on
//! negative pairs (they should move apart), non-positive on positive pairs,
//! and exactly zero everywhere else. The pair weight of any loss is
//! `|dL/dS_ij|`, which for the multi-similarity loss reproduces the
//! closed-form locality weights up to the 1/m anchor normalization.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::similarity::SimMatrix;

/// Loss hyper-parameters. `alpha`/`beta` scale the positive/negative
/// multi-similarity exponentials, `lambda_ms` is the similarity offset, and
/// `lambda_c` is the contrastive margin on negatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub lambda_ms: f64,
    pub lambda_c: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 2.0,
            beta: 50.0,
            lambda_ms: 0.5,
            lambda_c: 0.5,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha <= 0.0 || self.beta <= 0.0 {
            return Err(Error::Config(format!(
                "alpha and beta must be positive (alpha={}, beta={})",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

/// Loss value, dense `dL/dS`, and the derived non-negative pair weights.
#[derive(Debug, Clone)]
pub struct LossReport {
    pub loss: f64,
    /// m x m matrix of dL/dS_ij; zero off-mask and on the diagonal.
    pub d_sim: Array2<f64>,
    /// W_ij = |dL/dS_ij|.
    pub weights: Array2<f64>,
    pub pos_mask: Array2<bool>,
    pub neg_mask: Array2<bool>,
}

impl LossReport {
    fn new(loss: f64, d_sim: Array2<f64>, sim: &SimMatrix) -> Self {
        let weights = d_sim.mapv(f64::abs);
        LossReport {
            loss,
            d_sim,
            weights,
            pos_mask: sim.pos_mask.clone(),
            neg_mask: sim.neg_mask.clone(),
        }
    }
}

/// Contrastive loss: per masked ordered pair,
/// `(1 - I_ij) * max(S_ij - lambda_c, 0) - I_ij * S_ij`, averaged over the
/// masked pair count. Active pairs all carry the same weight 1/N.
pub fn contrastive_loss(sim: &SimMatrix, cfg: &LossConfig) -> Result<LossReport> {
    cfg.validate()?;
    let m = sim.len();
    let mut d_sim = Array2::zeros((m, m));
    let pair_count = sim.pos_mask.iter().filter(|&&v| v).count()
        + sim.neg_mask.iter().filter(|&&v| v).count();
    if pair_count == 0 {
        return Ok(LossReport::new(0.0, d_sim, sim));
    }
    let n = pair_count as f64;
    let mut loss = 0.0;
    for i in 0..m {
        for j in 0..m {
            let s = sim.values[[i, j]];
            if sim.pos_mask[[i, j]] {
                loss -= s;
                d_sim[[i, j]] = -1.0 / n;
            } else if sim.neg_mask[[i, j]] && s > cfg.lambda_c {
                loss += s - cfg.lambda_c;
                d_sim[[i, j]] = 1.0 / n;
            }
        }
    }
    Ok(LossReport::new(loss / n, d_sim, sim))
}

/// Numerically stable log(1 + e^x).
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Numerically stable logistic sigmoid.
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Soft-margin triplet loss: mean over triplets of
/// `log(1 + e^{S_an - S_ap})`. Each sampled pair's weight is the logistic
/// factor `sigmoid(S_an - S_ap) / T`; unsampled pairs stay at zero.
pub fn triplet_softmargin_loss(
    sim: &SimMatrix,
    triplets: &[(usize, usize, usize)],
) -> Result<LossReport> {
    let m = sim.len();
    let mut d_sim = Array2::zeros((m, m));
    if triplets.is_empty() {
        return Ok(LossReport::new(0.0, d_sim, sim));
    }
    for &(a, p, n) in triplets {
        if a >= m || p >= m || n >= m {
            return Err(Error::Contract(format!(
                "triplet ({a}, {p}, {n}) out of range for batch of {m}"
            )));
        }
        if !sim.pos_mask[[a, p]] {
            return Err(Error::Contract(format!(
                "triplet anchor {a} and positive {p} are not a positive pair"
            )));
        }
        if !sim.neg_mask[[a, n]] {
            return Err(Error::Contract(format!(
                "triplet anchor {a} and negative {n} are not a negative pair"
            )));
        }
    }
    let t = triplets.len() as f64;
    let mut loss = 0.0;
    for &(a, p, n) in triplets {
        let margin = sim.values[[a, n]] - sim.values[[a, p]];
        loss += softplus(margin);
        let sig = sigmoid(margin);
        d_sim[[a, n]] += sig / t;
        d_sim[[a, p]] -= sig / t;
    }
    Ok(LossReport::new(loss / t, d_sim, sim))
}

/// log(1 + sum e^{x_k}) with the largest exponent factored out, together
/// with the per-term derivative coefficients e^{x_k} / (1 + sum e^{x_j}).
fn log1p_exp_sum(xs: &[f64]) -> (f64, Vec<f64>) {
    let mx = xs.iter().fold(0.0_f64, |a, &b| a.max(b));
    let base = (-mx).exp();
    let exps: Vec<f64> = xs.iter().map(|&x| (x - mx).exp()).collect();
    let denom = base + exps.iter().sum::<f64>();
    let value = mx + denom.ln();
    let coeffs = exps.into_iter().map(|e| e / denom).collect();
    (value, coeffs)
}

/// Multi-similarity loss: per anchor i,
/// `(1/alpha) log(1 + sum_{k in P_i} e^{-alpha (S_ik - lambda)}) +
/// (1/beta) log(1 + sum_{k in N_i} e^{beta (S_ik - lambda)})`, averaged over
/// the m anchors. Anchors missing one polarity contribute only the other
/// term.
pub fn multisim_loss(sim: &SimMatrix, cfg: &LossConfig) -> Result<LossReport> {
    cfg.validate()?;
    let m = sim.len();
    let mut d_sim = Array2::zeros((m, m));
    if m == 0 {
        return Ok(LossReport::new(0.0, d_sim, sim));
    }
    let m_f = m as f64;
    let mut total = 0.0;
    for i in 0..m {
        let pos: Vec<usize> = (0..m).filter(|&j| sim.pos_mask[[i, j]]).collect();
        let neg: Vec<usize> = (0..m).filter(|&j| sim.neg_mask[[i, j]]).collect();
        if !pos.is_empty() {
            let xs: Vec<f64> = pos
                .iter()
                .map(|&j| -cfg.alpha * (sim.values[[i, j]] - cfg.lambda_ms))
                .collect();
            let (value, coeffs) = log1p_exp_sum(&xs);
            total += value / cfg.alpha;
            for (&j, c) in pos.iter().zip(coeffs) {
                d_sim[[i, j]] = -c / m_f;
            }
        }
        if !neg.is_empty() {
            let xs: Vec<f64> = neg
                .iter()
                .map(|&j| cfg.beta * (sim.values[[i, j]] - cfg.lambda_ms))
                .collect();
            let (value, coeffs) = log1p_exp_sum(&xs);
            total += value / cfg.beta;
            for (&j, c) in neg.iter().zip(coeffs) {
                d_sim[[i, j]] = c / m_f;
            }
        }
    }
    Ok(LossReport::new(total / m_f, d_sim, sim))
}

/// Closed-form multi-similarity locality weights.
///
/// Negative pair (i, j):
/// `w = 1 / (e^{beta (lambda - S_ij)} + sum_{k in N_i} e^{beta (S_ik - S_ij)})`;
/// positive pair (i, j):
/// `w = 1 / (e^{-alpha (lambda - S_ij)} + sum_{k in P_i} e^{-alpha (S_ik - S_ij)})`;
/// zero elsewhere. Entrywise this equals m * |dL_MS/dS|, which
/// [`multisim_loss`] computes along a different floating-point route.
pub fn ms_pair_weights(sim: &SimMatrix, cfg: &LossConfig) -> Array2<f64> {
    let m = sim.len();
    let mut w = Array2::zeros((m, m));
    for i in 0..m {
        let pos: Vec<usize> = (0..m).filter(|&j| sim.pos_mask[[i, j]]).collect();
        let neg: Vec<usize> = (0..m).filter(|&j| sim.neg_mask[[i, j]]).collect();
        for &j in &neg {
            let s_ij = sim.values[[i, j]];
            let mut denom = (cfg.beta * (cfg.lambda_ms - s_ij)).exp();
            for &k in &neg {
                denom += (cfg.beta * (sim.values[[i, k]] - s_ij)).exp();
            }
            w[[i, j]] = 1.0 / denom;
        }
        for &j in &pos {
            let s_ij = sim.values[[i, j]];
            let mut denom = (-cfg.alpha * (cfg.lambda_ms - s_ij)).exp();
            for &k in &pos {
                denom += (-cfg.alpha * (sim.values[[i, k]] - s_ij)).exp();
            }
            w[[i, j]] = 1.0 / denom;
        }
    }
    w
}

/// Pair weights W_ij = |dL/dS_ij| from any loss report, after verifying the
/// sign convention (non-negative on negatives, non-positive on positives,
/// zero off-mask).
pub fn extract_pair_weights(report: &LossReport) -> Result<Array2<f64>> {
    let (m, _) = report.d_sim.dim();
    for i in 0..m {
        for j in 0..m {
            let d = report.d_sim[[i, j]];
            if report.neg_mask[[i, j]] {
                if d < 0.0 {
                    return Err(Error::Contract(format!(
                        "negative pair ({i}, {j}) has dL/dS = {d} < 0"
                    )));
                }
            } else if report.pos_mask[[i, j]] {
                if d > 0.0 {
                    return Err(Error::Contract(format!(
                        "positive pair ({i}, {j}) has dL/dS = {d} > 0"
                    )));
                }
            } else if d != 0.0 {
                return Err(Error::Contract(format!(
                    "off-mask pair ({i}, {j}) has dL/dS = {d} != 0"
                )));
            }
        }
    }
    Ok(report.weights.clone())
}
