//! Informative-pair filtering, hard mining for the baselines, and
//! class-balanced PK batch sampling.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::{ClassRecord, Dataset, Vocabulary};
use crate::encoder::TokenBatch;
use crate::error::{Error, Result};
use crate::similarity::SimMatrix;

/// Hard-negative selection rule for the triplet baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HardMode {
    /// Hardest negative with S_an < S_ap when one exists, else hardest.
    SemiHard,
    /// Per anchor: lowest-similarity positive, highest-similarity negative.
    Hardest,
}

impl std::str::FromStr for HardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semi_hard" => Ok(HardMode::SemiHard),
            "hardest" => Ok(HardMode::Hardest),
            other => Err(Error::Config(format!(
                "unknown hard mode `{other}` (expected semi_hard or hardest)"
            ))),
        }
    }
}

/// Mining knobs: the informative-pair margin, the PK batch shape, and the
/// hard-mining rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiningConfig {
    pub epsilon: f64,
    /// Classes per batch (P).
    pub classes_per_batch: usize,
    /// Samples per class (K).
    pub samples_per_class: usize,
    pub hard_mode: HardMode,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            epsilon: 0.1,
            classes_per_batch: 8,
            samples_per_class: 4,
            hard_mode: HardMode::Hardest,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon < 0.0 {
            return Err(Error::Config(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if self.classes_per_batch < 2 {
            return Err(Error::Config("classes_per_batch must be >= 2".into()));
        }
        if self.samples_per_class < 1 {
            return Err(Error::Config("samples_per_class must be >= 1".into()));
        }
        Ok(())
    }
}

/// Result of the informative-pair filter.
#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub keep_neg: Array2<bool>,
    pub keep_pos: Array2<bool>,
    /// Kept pairs over masked pairs; 1.0 when the batch has no pairs.
    pub kept_fraction: f64,
}

/// Keep only pairs whose locality is not yet preserved:
/// a negative (i, j) survives iff `S_ij > min_{y_k = y_i, k != i} S_ik - eps`
/// and a positive (i, j) survives iff `S_ij < max_{y_k != y_i} S_ik + eps`.
///
/// An anchor with no in-batch positive keeps all of its negatives (the
/// reference minimum is undefined), and symmetrically for positives.
/// Dropped pairs get zero weight downstream.
pub fn informative_pair_filter(sim: &SimMatrix, cfg: &MiningConfig) -> FilterOutcome {
    let m = sim.len();
    let mut keep_neg = Array2::from_elem((m, m), false);
    let mut keep_pos = Array2::from_elem((m, m), false);
    let mut masked = 0usize;
    let mut kept = 0usize;
    for i in 0..m {
        let mut min_pos = f64::INFINITY;
        let mut max_neg = f64::NEG_INFINITY;
        let mut has_pos = false;
        let mut has_neg = false;
        for j in 0..m {
            if sim.pos_mask[[i, j]] {
                has_pos = true;
                min_pos = min_pos.min(sim.values[[i, j]]);
            }
            if sim.neg_mask[[i, j]] {
                has_neg = true;
                max_neg = max_neg.max(sim.values[[i, j]]);
            }
        }
        for j in 0..m {
            if sim.neg_mask[[i, j]] {
                masked += 1;
                let keep = !has_pos || sim.values[[i, j]] > min_pos - cfg.epsilon;
                keep_neg[[i, j]] = keep;
                kept += keep as usize;
            }
            if sim.pos_mask[[i, j]] {
                masked += 1;
                let keep = !has_neg || sim.values[[i, j]] < max_neg + cfg.epsilon;
                keep_pos[[i, j]] = keep;
                kept += keep as usize;
            }
        }
    }
    let kept_fraction = if masked == 0 {
        1.0
    } else {
        kept as f64 / masked as f64
    };
    FilterOutcome {
        keep_neg,
        keep_pos,
        kept_fraction,
    }
}

/// Hard-mined triplets, one per anchor that has both polarities in batch.
#[derive(Debug, Clone)]
pub struct MinedTriplets {
    pub triplets: Vec<(usize, usize, usize)>,
    /// Anchors skipped for lacking an in-batch positive or negative.
    pub skipped_anchors: usize,
}

/// Mine one (anchor, positive, negative) triplet per eligible anchor.
/// Ties break toward the lowest index.
pub fn hard_mine(sim: &SimMatrix, cfg: &MiningConfig) -> MinedTriplets {
    let m = sim.len();
    let mut triplets = Vec::new();
    let mut skipped = 0usize;
    for i in 0..m {
        let mut hardest_pos: Option<(usize, f64)> = None;
        let mut hardest_neg: Option<(usize, f64)> = None;
        for j in 0..m {
            if sim.pos_mask[[i, j]] {
                let s = sim.values[[i, j]];
                if hardest_pos.is_none_or(|(_, best)| s < best) {
                    hardest_pos = Some((j, s));
                }
            }
            if sim.neg_mask[[i, j]] {
                let s = sim.values[[i, j]];
                if hardest_neg.is_none_or(|(_, best)| s > best) {
                    hardest_neg = Some((j, s));
                }
            }
        }
        let (Some((p, s_ap)), Some((n, _))) = (hardest_pos, hardest_neg) else {
            skipped += 1;
            continue;
        };
        let n = match cfg.hard_mode {
            HardMode::Hardest => n,
            HardMode::SemiHard => {
                let mut semi: Option<(usize, f64)> = None;
                for j in 0..m {
                    if sim.neg_mask[[i, j]] && sim.values[[i, j]] < s_ap {
                        let s = sim.values[[i, j]];
                        if semi.is_none_or(|(_, best)| s > best) {
                            semi = Some((j, s));
                        }
                    }
                }
                semi.map_or(n, |(j, _)| j)
            }
        };
        triplets.push((i, p, n));
    }
    MinedTriplets {
        triplets,
        skipped_anchors: skipped,
    }
}

/// Sample a batch of exactly P classes x K rows from a class-labeled
/// dataset. Classes with fewer than K samples are drawn with replacement.
/// Deterministic given the generator state.
pub fn sample_pk_batch(
    dataset: &Dataset,
    vocab: &Vocabulary,
    cfg: &MiningConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TokenBatch> {
    cfg.validate()?;
    let Dataset::Classes(records) = dataset else {
        return Err(Error::Config(format!(
            "PK sampling needs a classes dataset, got {}",
            dataset.kind()
        )));
    };
    let by_class = group_by_class(records);
    if by_class.len() < cfg.classes_per_batch {
        return Err(Error::Config(format!(
            "need at least {} classes, dataset has {}",
            cfg.classes_per_batch,
            by_class.len()
        )));
    }
    let class_ids: Vec<u32> = by_class.keys().copied().collect();
    let chosen = rand::seq::index::sample(rng, class_ids.len(), cfg.classes_per_batch);

    let mut rows = Vec::with_capacity(cfg.classes_per_batch * cfg.samples_per_class);
    let mut labels = Vec::with_capacity(rows.capacity());
    for class_pos in chosen.iter() {
        let class_id = class_ids[class_pos];
        let members = &by_class[&class_id];
        let k = cfg.samples_per_class;
        let picks: Vec<usize> = if members.len() >= k {
            rand::seq::index::sample(rng, members.len(), k).into_iter().collect()
        } else {
            (0..k).map(|_| rng.random_range(0..members.len())).collect()
        };
        for pick in picks {
            let record = &records[members[pick]];
            rows.push(vocab.encode(&record.sentence));
            labels.push(class_id);
        }
    }
    TokenBatch::new(rows, labels)
}

fn group_by_class(records: &[ClassRecord]) -> BTreeMap<u32, Vec<usize>> {
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (idx, rec) in records.iter().enumerate() {
        by_class.entry(rec.class_id).or_default().push(idx);
    }
    by_class
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_vocab, tokenize, TokenizeMode};
    use ndarray::array;
    use rand::SeedableRng;

    fn filter_cfg(eps: f64) -> MiningConfig {
        MiningConfig {
            epsilon: eps,
            ..MiningConfig::default()
        }
    }

    #[test]
    fn filter_drops_preserved_pairs() {
        // Anchor 0: positives at 0.9 and 0.6, negatives at 0.85 and 0.3.
        let values = array![
            [1.0, 0.9, 0.6, 0.85, 0.3],
            [0.9, 1.0, 0.5, 0.2, 0.2],
            [0.6, 0.5, 1.0, 0.2, 0.2],
            [0.85, 0.2, 0.2, 1.0, 0.5],
            [0.3, 0.2, 0.2, 0.5, 1.0],
        ];
        let sim = SimMatrix::from_values(values, &[0, 0, 0, 1, 2]).unwrap();
        let out = informative_pair_filter(&sim, &filter_cfg(0.1));
        // min positive = 0.6, so negatives must exceed 0.5.
        assert!(out.keep_neg[[0, 3]]);
        assert!(!out.keep_neg[[0, 4]]);
        // max negative = 0.85, so positives below 0.95 survive.
        assert!(out.keep_pos[[0, 1]]);
        assert!(out.keep_pos[[0, 2]]);
    }

    #[test]
    fn filter_with_huge_epsilon_keeps_everything() {
        let values = array![
            [1.0, 0.9, -0.5],
            [0.9, 1.0, 0.4],
            [-0.5, 0.4, 1.0],
        ];
        let sim = SimMatrix::from_values(values, &[0, 0, 1]).unwrap();
        let out = informative_pair_filter(&sim, &filter_cfg(1e9));
        assert_eq!(out.kept_fraction, 1.0);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(out.keep_pos[[i, j]], sim.pos_mask[[i, j]]);
                assert_eq!(out.keep_neg[[i, j]], sim.neg_mask[[i, j]]);
            }
        }
    }

    #[test]
    fn filter_drops_fully_separated_anchor_pairs() {
        // One positive at 1.0 and one negative at -1.0: both locality
        // conditions fail, so both pairs drop.
        let values = array![
            [1.0, 1.0, -1.0],
            [1.0, 1.0, 0.0],
            [-1.0, 0.0, 1.0],
        ];
        let sim = SimMatrix::from_values(values, &[0, 0, 1]).unwrap();
        let out = informative_pair_filter(&sim, &filter_cfg(0.1));
        assert!(!out.keep_neg[[0, 2]]);
        assert!(!out.keep_pos[[0, 1]]);
    }

    #[test]
    fn filter_keeps_all_negatives_without_a_positive_reference() {
        let values = array![[1.0, 0.1], [0.1, 1.0]];
        let sim = SimMatrix::from_values(values, &[0, 1]).unwrap();
        let out = informative_pair_filter(&sim, &filter_cfg(0.1));
        assert!(out.keep_neg[[0, 1]]);
        assert!(out.keep_neg[[1, 0]]);
        assert_eq!(out.kept_fraction, 1.0);
    }

    #[test]
    fn filter_keep_sets_grow_with_epsilon() {
        let values = array![
            [1.0, 0.8, 0.2, 0.55],
            [0.8, 1.0, 0.3, 0.6],
            [0.2, 0.3, 1.0, 0.4],
            [0.55, 0.6, 0.4, 1.0],
        ];
        let sim = SimMatrix::from_values(values, &[0, 0, 1, 1]).unwrap();
        let narrow = informative_pair_filter(&sim, &filter_cfg(0.05));
        let wide = informative_pair_filter(&sim, &filter_cfg(0.5));
        for i in 0..4 {
            for j in 0..4 {
                assert!(!narrow.keep_neg[[i, j]] || wide.keep_neg[[i, j]]);
                assert!(!narrow.keep_pos[[i, j]] || wide.keep_pos[[i, j]]);
            }
        }
        assert!(wide.kept_fraction >= narrow.kept_fraction);
    }

    #[test]
    fn hard_mine_picks_extreme_pairs() {
        // Anchor 0: positives {1: 0.4, 2: 0.8}, negatives {3: 0.7, 4: 0.1}.
        let values = array![
            [1.0, 0.4, 0.8, 0.7, 0.1],
            [0.4, 1.0, 0.5, 0.3, 0.3],
            [0.8, 0.5, 1.0, 0.3, 0.3],
            [0.7, 0.3, 0.3, 1.0, 0.4],
            [0.1, 0.3, 0.3, 0.4, 1.0],
        ];
        let sim = SimMatrix::from_values(values, &[0, 0, 0, 1, 2]).unwrap();
        let mined = hard_mine(
            &sim,
            &MiningConfig {
                hard_mode: HardMode::Hardest,
                ..MiningConfig::default()
            },
        );
        assert_eq!(mined.triplets[0], (0, 1, 3));
    }

    #[test]
    fn single_choice_is_mined_in_both_modes() {
        let values = array![[1.0, 0.5, 0.9], [0.5, 1.0, 0.2], [0.9, 0.2, 1.0]];
        for mode in [HardMode::Hardest, HardMode::SemiHard] {
            let sim = SimMatrix::from_values(values.clone(), &[0, 0, 1]).unwrap();
            let mined = hard_mine(
                &sim,
                &MiningConfig {
                    hard_mode: mode,
                    ..MiningConfig::default()
                },
            );
            assert_eq!(mined.triplets[0], (0, 1, 2));
        }
    }

    #[test]
    fn semi_hard_falls_back_to_hardest() {
        // Every negative is at least as similar as the positive.
        let values = array![
            [1.0, 0.3, 0.9, 0.5],
            [0.3, 1.0, 0.2, 0.2],
            [0.9, 0.2, 1.0, 0.4],
            [0.5, 0.2, 0.4, 1.0],
        ];
        let sim = SimMatrix::from_values(values, &[0, 0, 1, 1]).unwrap();
        let mined = hard_mine(
            &sim,
            &MiningConfig {
                hard_mode: HardMode::SemiHard,
                ..MiningConfig::default()
            },
        );
        assert_eq!(mined.triplets[0], (0, 1, 2));
    }

    #[test]
    fn semi_hard_prefers_negatives_below_the_positive() {
        // Negatives at 0.9 (above S_ap = 0.5) and 0.45 (below): pick 0.45.
        let values = array![
            [1.0, 0.5, 0.9, 0.45],
            [0.5, 1.0, 0.2, 0.2],
            [0.9, 0.2, 1.0, 0.4],
            [0.45, 0.2, 0.4, 1.0],
        ];
        let sim = SimMatrix::from_values(values, &[0, 0, 1, 1]).unwrap();
        let mined = hard_mine(
            &sim,
            &MiningConfig {
                hard_mode: HardMode::SemiHard,
                ..MiningConfig::default()
            },
        );
        assert_eq!(mined.triplets[0], (0, 1, 3));
    }

    #[test]
    fn anchors_without_both_polarities_are_counted() {
        let values = array![[1.0, 0.5], [0.5, 1.0]];
        let sim = SimMatrix::from_values(values, &[0, 0]).unwrap();
        let mined = hard_mine(&sim, &MiningConfig::default());
        assert!(mined.triplets.is_empty());
        assert_eq!(mined.skipped_anchors, 2);
    }

    fn class_dataset(spec: &[(u32, &[&str])]) -> (Dataset, Vocabulary) {
        let mut rows = Vec::new();
        for &(class, sentences) in spec {
            for text in sentences {
                rows.push(ClassRecord {
                    sentence: tokenize(text, TokenizeMode::Whitespace),
                    class_id: class,
                });
            }
        }
        let ds = Dataset::Classes(rows);
        let vocab = build_vocab(ds.sentences(), 1).unwrap();
        (ds, vocab)
    }

    fn pk_cfg(p: usize, k: usize) -> MiningConfig {
        MiningConfig {
            classes_per_batch: p,
            samples_per_class: k,
            ..MiningConfig::default()
        }
    }

    #[test]
    fn pk_batch_has_requested_shape() {
        let (ds, vocab) = class_dataset(&[
            (0, &["a x", "a y", "a z"]),
            (1, &["b x", "b y"]),
            (2, &["c x", "c y", "c z"]),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let batch = sample_pk_batch(&ds, &vocab, &pk_cfg(2, 2), &mut rng).unwrap();
        assert_eq!(batch.rows(), 4);
        let mut distinct = batch.labels.clone();
        distinct.sort_unstable();
        distinct.dedup();
        assert_eq!(distinct.len(), 2);
        for label in &distinct {
            assert_eq!(batch.labels.iter().filter(|&l| l == label).count(), 2);
        }
    }

    #[test]
    fn pk_batch_covers_all_classes_when_p_equals_class_count() {
        let (ds, vocab) = class_dataset(&[(0, &["a"]), (1, &["b"]), (2, &["c"])]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let batch = sample_pk_batch(&ds, &vocab, &pk_cfg(3, 2), &mut rng).unwrap();
        let mut distinct = batch.labels.clone();
        distinct.sort_unstable();
        distinct.dedup();
        assert_eq!(distinct, vec![0, 1, 2]);
    }

    #[test]
    fn pk_batch_is_deterministic_in_rng_state() {
        let (ds, vocab) = class_dataset(&[
            (0, &["a x", "a y"]),
            (1, &["b x", "b y"]),
            (2, &["c x"]),
        ]);
        let a = sample_pk_batch(&ds, &vocab, &pk_cfg(2, 2), &mut ChaCha8Rng::seed_from_u64(3))
            .unwrap();
        let b = sample_pk_batch(&ds, &vocab, &pk_cfg(2, 2), &mut ChaCha8Rng::seed_from_u64(3))
            .unwrap();
        assert_eq!(a.ids, b.ids);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn too_few_classes_is_a_config_error() {
        let (ds, vocab) = class_dataset(&[(0, &["a"])]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = sample_pk_batch(&ds, &vocab, &pk_cfg(2, 1), &mut rng).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
