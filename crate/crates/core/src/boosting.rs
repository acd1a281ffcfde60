//! Discrete AdaBoost over decision stumps. Shared by the character, text
//! and word-spacing classifiers.

use crate::error::{Error, Result};

/// One axis-aligned threshold test. Predicts `polarity` when the feature
/// value is at or above the threshold, `-polarity` below.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub polarity: i8,
    pub alpha: f64,
}

impl Stump {
    pub fn classify(&self, x: &[f64]) -> i32 {
        assert!(
            self.feature < x.len(),
            "feature index {} out of bounds for {}-dim sample",
            self.feature,
            x.len()
        );
        let side = if x[self.feature] >= self.threshold { 1 } else { -1 };
        side * self.polarity as i32
    }
}

/// Weighted stump ensemble with its measured validation precision.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StumpEnsemble {
    pub stumps: Vec<Stump>,
    /// Rounds requested at training time (the stump list may be shorter
    /// when training stopped early).
    pub rounds: usize,
    /// Precision measured on held-out data, clamped into (0.5, 0.999);
    /// never assumed.
    pub validation_precision: Option<f64>,
}

/// Per-round weighted errors of the selected stumps.
#[derive(Debug, Clone, Default)]
pub struct BoostReport {
    pub round_errors: Vec<f64>,
}

pub const DEFAULT_ROUNDS: usize = 100;

impl StumpEnsemble {
    /// Weighted vote sum. Empty ensembles score 0.
    pub fn score(&self, x: &[f64]) -> f64 {
        self.stumps
            .iter()
            .map(|s| s.alpha * s.classify(x) as f64)
            .sum()
    }

    /// Sign of the vote; ties go to +1.
    pub fn predict(&self, x: &[f64]) -> i32 {
        if self.score(x) >= 0.0 {
            1
        } else {
            -1
        }
    }
}

/// Trains a discrete AdaBoost ensemble. Each round exhaustively picks the
/// weighted-error-minimizing stump over every feature with thresholds at
/// midpoints of consecutive distinct sorted values; `alpha` is
/// `ln((1-err)/err)/2` and weights are renormalized every round. Training
/// stops early once no stump beats chance (error >= 0.5) or one separates
/// perfectly. Fails on single-class input or when the very first round
/// cannot beat chance.
pub fn train(samples: &[Vec<f64>], labels: &[i32], rounds: usize) -> Result<StumpEnsemble> {
    train_with_report(samples, labels, rounds).map(|(e, _)| e)
}

pub fn train_with_report(
    samples: &[Vec<f64>],
    labels: &[i32],
    rounds: usize,
) -> Result<(StumpEnsemble, BoostReport)> {
    if samples.len() < 2 {
        return Err(Error::Training("need at least two samples".into()));
    }
    if samples.len() != labels.len() {
        return Err(Error::Training("samples/labels length mismatch".into()));
    }
    if labels.iter().any(|&l| l != 1 && l != -1) {
        return Err(Error::Training("labels must be +1 or -1".into()));
    }
    if labels.iter().all(|&l| l == 1) || labels.iter().all(|&l| l == -1) {
        return Err(Error::Training("single-class input".into()));
    }
    let dim = samples[0].len();
    if samples.iter().any(|s| s.len() != dim) {
        return Err(Error::Training("inconsistent feature dimensions".into()));
    }
    if samples.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
        return Err(Error::Training("non-finite feature value".into()));
    }

    // Per-feature sample order, computed once.
    let mut orders: Vec<Vec<usize>> = Vec::with_capacity(dim);
    for f in 0..dim {
        let mut idx: Vec<usize> = (0..samples.len()).collect();
        idx.sort_by(|&a, &b| samples[a][f].partial_cmp(&samples[b][f]).unwrap());
        orders.push(idx);
    }

    let n = samples.len();
    let mut weights = vec![1.0 / n as f64; n];
    let mut ensemble = StumpEnsemble {
        stumps: Vec::new(),
        rounds,
        validation_precision: None,
    };
    let mut report = BoostReport::default();

    for round in 0..rounds {
        let mut best: Option<(f64, Stump)> = None;
        for f in 0..dim {
            let order = &orders[f];
            // err(threshold, polarity=+1) for threshold below the smallest
            // value: everything predicted +1.
            let mut err_plus: f64 = weights
                .iter()
                .zip(labels)
                .filter(|&(_, &l)| l == -1)
                .map(|(w, _)| w)
                .sum();
            let mut prev_value: Option<f64> = None;
            let mut prev_err = err_plus;
            for k in 0..=n {
                // Candidate threshold between order[k-1] and order[k].
                if let Some(pv) = prev_value {
                    let cur = if k < n { Some(samples[order[k]][f]) } else { None };
                    if cur != Some(pv) {
                        if let Some(cv) = cur {
                            let threshold = 0.5 * (pv + cv);
                            for &(e, pol) in &[(prev_err, 1i8), (1.0 - prev_err, -1i8)] {
                                let candidate = Stump {
                                    feature: f,
                                    threshold,
                                    polarity: pol,
                                    alpha: 0.0,
                                };
                                let better = match &best {
                                    None => true,
                                    Some((be, bs)) => {
                                        e < *be
                                            || (e == *be
                                                && (candidate.feature, candidate.threshold, candidate.polarity)
                                                    < (bs.feature, bs.threshold, bs.polarity))
                                    }
                                };
                                if better {
                                    best = Some((e, candidate));
                                }
                            }
                        }
                    }
                }
                if k < n {
                    let i = order[k];
                    // Moving the threshold above sample i flips its
                    // prediction from +1 to -1.
                    if labels[i] == 1 {
                        err_plus += weights[i];
                    } else {
                        err_plus -= weights[i];
                    }
                    prev_value = Some(samples[i][f]);
                    prev_err = err_plus;
                }
            }
        }

        let Some((_, mut stump)) = best else {
            // All features constant: no thresholds exist.
            if round == 0 {
                return Err(Error::Training(
                    "no useful stump: all feature values identical".into(),
                ));
            }
            break;
        };
        // The sweep's incremental error carries float drift; recompute the
        // winner's error by direct summation so a perfect split is exactly 0.
        let err: f64 = (0..n)
            .filter(|&i| stump.classify(&samples[i]) != labels[i])
            .map(|i| weights[i])
            .sum();
        if err >= 0.5 {
            if round == 0 {
                return Err(Error::Training(format!(
                    "no stump beats chance (best weighted error {err:.3})"
                )));
            }
            break;
        }

        let clamped = err.max(1e-12);
        stump.alpha = 0.5 * ((1.0 - clamped) / clamped).ln();
        report.round_errors.push(err);
        ensemble.stumps.push(stump);

        if err == 0.0 {
            break;
        }
        // Reweight: misclassified up, correct down, then renormalize.
        let mut total = 0.0;
        for i in 0..n {
            let correct = stump.classify(&samples[i]) == labels[i];
            let factor = if correct {
                (-stump.alpha).exp()
            } else {
                stump.alpha.exp()
            };
            weights[i] *= factor;
            total += weights[i];
        }
        for w in weights.iter_mut() {
            *w /= total;
        }
    }

    Ok((ensemble, report))
}

/// Measures precision `TP / (TP + FP)` on a validation set and stores it on
/// the ensemble, clamped into (0.5, 0.999) so the Bayes formula downstream
/// never degenerates. Fails when nothing is predicted positive.
pub fn measure_precision(
    ensemble: &mut StumpEnsemble,
    samples: &[Vec<f64>],
    labels: &[i32],
) -> Result<f64> {
    if !labels.contains(&1) {
        return Err(Error::Training("validation set has no positives".into()));
    }
    let mut tp = 0u64;
    let mut fp = 0u64;
    for (x, &l) in samples.iter().zip(labels) {
        if ensemble.predict(x) == 1 {
            if l == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    if tp + fp == 0 {
        return Err(Error::Training(
            "classifier predicted no positives; precision undefined".into(),
        ));
    }
    let p = (tp as f64 / (tp + fp) as f64).clamp(0.501, 0.999);
    ensemble.validation_precision = Some(p);
    Ok(p)
}
