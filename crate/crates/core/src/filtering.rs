//! Character-level features, the Bayesian non-text elimination rule, text
//! candidate features, and word partitioning.

use std::collections::BTreeMap;

use crate::boosting::StumpEnsemble;
use crate::descriptors::CharacterCandidate;
use crate::error::{Error, Result};
use crate::geom::Rect;
use crate::linking::TextCandidate;

pub const CHARACTER_FEATURE_COUNT: usize = 6;
pub const CHARACTER_FEATURE_NAMES: [&str; CHARACTER_FEATURE_COUNT] = [
    "smoothness",
    "stroke_mean_over_height",
    "stroke_variation",
    "height",
    "width",
    "aspect",
];

pub const TEXT_FEATURE_COUNT: usize = 8;
pub const TEXT_FEATURE_NAMES: [&str; TEXT_FEATURE_COUNT] = [
    "height_cv",
    "width_cv",
    "stroke_mean_cv",
    "aspect_cv",
    "color_c1_cv",
    "color_c2_cv",
    "color_c3_cv",
    "member_count",
];

pub const SPACING_FEATURE_COUNT: usize = 3;
pub const SPACING_FEATURE_NAMES: [&str; SPACING_FEATURE_COUNT] = [
    "gap_over_line_height",
    "neighbor_width_diff",
    "member_count",
];

/// Input vector for the character classifier.
pub fn character_features(c: &CharacterCandidate) -> [f64; CHARACTER_FEATURE_COUNT] {
    [
        c.smoothness,
        c.stroke_mean / c.bbox.h as f64,
        c.stroke_var,
        c.bbox.h as f64,
        c.bbox.w as f64,
        c.aspect,
    ]
}

/// Posterior probability that a text candidate is non-text, given that a
/// character classifier of precision `p` called `n` of its `m` members
/// non-characters. Computed in log space; long candidates never underflow.
pub fn posterior_nontext(m: usize, n: usize, p: f64, prior_text: f64) -> f64 {
    assert!(m >= 2, "the vote rule requires at least two members, got {m}");
    assert!(n <= m, "non-character count {n} exceeds member count {m}");
    assert!(p > 0.0 && p < 1.0, "precision must be in (0, 1), got {p}");
    assert!(
        (0.0..=1.0).contains(&prior_text),
        "prior must be in [0, 1], got {prior_text}"
    );
    // log P(O|text) = (m-n) ln p + n ln(1-p); non-text swaps the roles.
    let (mf, nf) = (m as f64, n as f64);
    let log_obs_text = (mf - nf) * p.ln() + nf * (1.0 - p).ln();
    let log_obs_non = (mf - nf) * (1.0 - p).ln() + nf * p.ln();
    let log_text = log_obs_text + prior_text.ln();
    let log_non = log_obs_non + (1.0 - prior_text).ln();
    // posterior = e^ln / (e^lt + e^ln) = sigmoid(ln - lt); the -inf cases
    // from zero priors resolve correctly.
    if log_non == f64::NEG_INFINITY {
        return 0.0;
    }
    if log_text == f64::NEG_INFINITY {
        return 1.0;
    }
    let z = log_text - log_non;
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// Complementary posterior, computed through its own route so the pair can
/// be checked to sum to one.
pub fn posterior_text(m: usize, n: usize, p: f64, prior_text: f64) -> f64 {
    assert!(m >= 2);
    assert!(n <= m);
    assert!(p > 0.0 && p < 1.0);
    let (mf, nf) = (m as f64, n as f64);
    let log_obs_text = (mf - nf) * p.ln() + nf * (1.0 - p).ln();
    let log_obs_non = (mf - nf) * (1.0 - p).ln() + nf * p.ln();
    let log_text = log_obs_text + prior_text.ln();
    let log_non = log_obs_non + (1.0 - prior_text).ln();
    if log_text == f64::NEG_INFINITY {
        return 0.0;
    }
    if log_non == f64::NEG_INFINITY {
        return 1.0;
    }
    let z = log_non - log_text;
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// Size-conditioned prior of a text candidate being text, estimated from
/// labeled counts. Sizes never observed fall back to the prior of the
/// largest observed size.
#[derive(Debug, Clone, PartialEq)]
pub struct SizePriorTable {
    /// size -> (total, true-text) counts
    pub counts: BTreeMap<usize, (u64, u64)>,
    pub fallback: f64,
}

impl SizePriorTable {
    pub fn prior_text(&self, size: usize) -> f64 {
        match self.counts.get(&size) {
            Some(&(total, text)) if total > 0 => text as f64 / total as f64,
            _ => self.fallback,
        }
    }
}

/// Tallies per-size text ratios from `(size, is_text)` labels.
pub fn estimate_size_priors(labeled: &[(usize, bool)]) -> Result<SizePriorTable> {
    if labeled.is_empty() {
        return Err(Error::InvalidInput(
            "cannot estimate priors from an empty set".into(),
        ));
    }
    let mut counts: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
    for &(size, is_text) in labeled {
        let e = counts.entry(size).or_insert((0, 0));
        e.0 += 1;
        if is_text {
            e.1 += 1;
        }
    }
    let (&_max_size, &(total, text)) = counts.iter().next_back().unwrap();
    let fallback = text as f64 / total as f64;
    Ok(SizePriorTable { counts, fallback })
}

#[derive(Debug, Clone, Copy)]
pub struct EliminationConfig {
    /// Posterior threshold at or above which a candidate is rejected.
    pub epsilon: f64,
    /// Measured character-classifier precision.
    pub precision: f64,
}

impl Default for EliminationConfig {
    fn default() -> Self {
        EliminationConfig {
            epsilon: 0.995,
            precision: 0.9,
        }
    }
}

/// Drops text candidates whose non-text posterior reaches the threshold.
/// `n` counts members the character classifier calls non-characters; the
/// prior comes from the candidate's member count. Pure per-candidate
/// predicate, so output order follows input order.
pub fn eliminate(
    text_candidates: &[TextCandidate],
    candidates: &[CharacterCandidate],
    char_clf: &StumpEnsemble,
    priors: &SizePriorTable,
    cfg: &EliminationConfig,
) -> Vec<TextCandidate> {
    text_candidates
        .iter()
        .filter(|tc| {
            let m = tc.members.len();
            if m < 2 {
                // The vote rule is undefined for singletons; they are kept
                // here and handled by the pipeline's own singleton policy.
                return true;
            }
            let n = tc
                .members
                .iter()
                .filter(|&&i| char_clf.predict(&character_features(&candidates[i])) == -1)
                .count();
            let posterior = posterior_nontext(m, n, cfg.precision, priors.prior_text(m));
            posterior < cfg.epsilon
        })
        .cloned()
        .collect()
}

fn coefficient_of_variation(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return 0.0;
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    var.sqrt() / mean
}

/// Uniformity features of a text candidate: per base feature the
/// coefficient of variation across members, plus the member count.
pub fn text_features(members: &[&CharacterCandidate]) -> Result<[f64; TEXT_FEATURE_COUNT]> {
    if members.len() < 2 {
        return Err(Error::InvalidInput(
            "text features need at least two members".into(),
        ));
    }
    let collect = |f: &dyn Fn(&CharacterCandidate) -> f64| -> Vec<f64> {
        members.iter().map(|c| f(c)).collect()
    };
    Ok([
        coefficient_of_variation(&collect(&|c| c.bbox.h as f64)),
        coefficient_of_variation(&collect(&|c| c.bbox.w as f64)),
        coefficient_of_variation(&collect(&|c| c.stroke_mean)),
        coefficient_of_variation(&collect(&|c| c.aspect)),
        coefficient_of_variation(&collect(&|c| c.color[0])),
        coefficient_of_variation(&collect(&|c| c.color[1])),
        coefficient_of_variation(&collect(&|c| c.color[2])),
        members.len() as f64,
    ])
}

/// Features of the gap between two horizontally adjacent members: edge gap
/// over line height, relative width difference of the flanking members,
/// and the member count of the line.
pub fn spacing_features(
    left: &CharacterCandidate,
    right: &CharacterCandidate,
    line_height: f64,
    member_count: usize,
) -> [f64; SPACING_FEATURE_COUNT] {
    let gap = right.bbox.x as f64 - left.bbox.right() as f64;
    let gap = gap.max(0.0);
    let (wl, wr) = (left.bbox.w as f64, right.bbox.w as f64);
    [
        gap / line_height,
        (wl - wr).abs() / wl.max(wr),
        member_count as f64,
    ]
}

/// Splits a text candidate into words by classifying each inter-member gap
/// as word spacing (+1) or character spacing (-1). Members are processed in
/// center-x order; each word becomes the union of its members' boxes.
pub fn partition_words(
    members: &[&CharacterCandidate],
    spacing_clf: &StumpEnsemble,
) -> Vec<Rect> {
    if members.is_empty() {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| {
        members[a]
            .bbox
            .center_x()
            .partial_cmp(&members[b].bbox.center_x())
            .unwrap()
            .then(members[a].bbox.x.cmp(&members[b].bbox.x))
    });
    let line_top = members.iter().map(|c| c.bbox.y).min().unwrap();
    let line_bottom = members.iter().map(|c| c.bbox.bottom()).max().unwrap();
    let line_height = (line_bottom - line_top) as f64;

    let mut words = Vec::new();
    let mut current = members[order[0]].bbox;
    for w in order.windows(2) {
        let (left, right) = (members[w[0]], members[w[1]]);
        let feats = spacing_features(left, right, line_height, members.len());
        if spacing_clf.predict(&feats) == 1 {
            words.push(current);
            current = right.bbox;
        } else {
            current = current.union(&right.bbox);
        }
    }
    words.push(current);
    words
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boosting::Stump;

    fn candidate(x: u32, y: u32, w: u32, h: u32) -> CharacterCandidate {
        CharacterCandidate {
            bbox: Rect::new(x, y, w, h),
            area: w * h,
            stroke_mean: 4.0,
            stroke_var: 0.1,
            smoothness: 0.3,
            color: [50.0, 60.0, 70.0],
            aspect: w as f64 / h as f64,
        }
    }

    #[test]
    fn character_feature_layout() {
        let mut c = candidate(0, 0, 10, 10);
        c.stroke_mean = 5.0;
        let f = character_features(&c);
        assert_eq!(f[5], 1.0);
        assert_eq!(f[1], 0.5);
        assert_eq!(f[3], 10.0);
        assert_eq!(f[4], 10.0);
    }

    #[test]
    fn posterior_substitution_cases() {
        // m=2, n=2, p=0.9, prior 0.5: 0.81 / 0.82
        let p = posterior_nontext(2, 2, 0.9, 0.5);
        assert!((p - 0.81 / 0.82).abs() < 1e-12);

        // m=2, n=0, p=0.9, prior 0.0125: hand Bayes gives 0.49375
        let p = posterior_nontext(2, 0, 0.9, 0.0125);
        assert!((p - 0.49375).abs() < 1e-12, "got {p}");

        // n=0 with p -> 1 and positive prior: posterior -> 0.
        let p = posterior_nontext(5, 0, 0.999, 0.3);
        assert!(p < 1e-6);
    }

    #[test]
    fn posterior_complements_sum_to_one() {
        for m in 2..=12 {
            for n in 0..=m {
                for &p in &[0.501, 0.7, 0.9, 0.999] {
                    for &prior in &[0.0, 0.0125, 0.3, 0.5, 0.9, 1.0] {
                        let a = posterior_nontext(m, n, p, prior);
                        let b = posterior_text(m, n, p, prior);
                        assert!(
                            (a + b - 1.0).abs() < 1e-12,
                            "m={m} n={n} p={p} prior={prior}: {a} + {b}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn posterior_monotone_in_votes() {
        for m in 2..=10 {
            for &p in &[0.6, 0.9, 0.99] {
                for &prior in &[0.0125, 0.3, 0.7] {
                    let mut prev = -1.0;
                    for n in 0..=m {
                        let post = posterior_nontext(m, n, p, prior);
                        assert!(
                            post >= prev,
                            "posterior must be nondecreasing in n ({m},{n},{p},{prior})"
                        );
                        prev = post;
                    }
                }
            }
        }
    }

    #[test]
    fn posterior_no_underflow_on_long_lines() {
        let p = posterior_nontext(500, 0, 0.999, 0.5);
        assert!(p.is_finite());
        assert!(p < 1e-12);
        let p = posterior_nontext(500, 500, 0.999, 0.5);
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    #[should_panic(expected = "at least two members")]
    fn posterior_rejects_singletons() {
        posterior_nontext(1, 0, 0.9, 0.5);
    }

    #[test]
    fn size_priors_counting() {
        // 80 size-2 candidates with one true gives the 1.25% prior.
        let mut labeled = vec![(2usize, false); 79];
        labeled.push((2, true));
        labeled.push((7, true));
        labeled.push((7, true));
        labeled.push((7, false));
        let t = estimate_size_priors(&labeled).unwrap();
        assert!((t.prior_text(2) - 0.0125).abs() < 1e-12);
        assert!((t.prior_text(7) - 2.0 / 3.0).abs() < 1e-12);
        // Unseen sizes fall back to the largest observed size's prior.
        assert_eq!(t.prior_text(100), t.prior_text(7));
        assert!(estimate_size_priors(&[]).is_err());

        let all_true = vec![(3usize, true); 5];
        let t = estimate_size_priors(&all_true).unwrap();
        assert_eq!(t.prior_text(3), 1.0);
    }

    fn always_yes() -> StumpEnsemble {
        // Classifies every sample +1 (threshold below any smoothness).
        StumpEnsemble {
            stumps: vec![Stump { feature: 0, threshold: -1e9, polarity: 1, alpha: 1.0 }],
            rounds: 1,
            validation_precision: Some(0.9),
        }
    }

    fn always_no() -> StumpEnsemble {
        StumpEnsemble {
            stumps: vec![Stump { feature: 0, threshold: -1e9, polarity: -1, alpha: 1.0 }],
            rounds: 1,
            validation_precision: Some(0.9),
        }
    }

    #[test]
    fn eliminate_keeps_all_character_votes() {
        let cands: Vec<CharacterCandidate> =
            (0..4).map(|i| candidate(12 * i, 0, 10, 10)).collect();
        let tc = TextCandidate {
            members: vec![0, 1, 2, 3],
            split: None,
        };
        let priors = estimate_size_priors(&[(4, true), (4, false), (4, false)]).unwrap();
        let cfg = EliminationConfig {
            epsilon: 0.995,
            precision: 0.9,
        };
        let kept = eliminate(&[tc.clone()], &cands, &always_yes(), &priors, &cfg);
        assert_eq!(kept.len(), 1);

        // Everything voted non-character with a small prior gets dropped.
        let priors = estimate_size_priors(&[(4, true), (4, false), (4, false), (4, false), (4, false)])
            .unwrap();
        let kept = eliminate(&[tc], &cands, &always_no(), &priors, &cfg);
        assert!(kept.is_empty());
    }

    #[test]
    fn eliminate_is_order_independent() {
        let cands: Vec<CharacterCandidate> =
            (0..6).map(|i| candidate(12 * i, 0, 10, 10 + (i % 3))).collect();
        let tcs: Vec<TextCandidate> = (0..3)
            .map(|k| TextCandidate {
                members: vec![2 * k, 2 * k + 1],
                split: None,
            })
            .collect();
        let priors = estimate_size_priors(&[(2, true), (2, false)]).unwrap();
        let cfg = EliminationConfig::default();
        let forward = eliminate(&tcs, &cands, &always_no(), &priors, &cfg);
        let mut reversed_input = tcs.clone();
        reversed_input.reverse();
        let mut reversed = eliminate(&reversed_input, &cands, &always_no(), &priors, &cfg);
        reversed.reverse();
        assert_eq!(forward, reversed);
    }

    #[test]
    fn text_feature_uniformity() {
        let a = candidate(0, 0, 10, 10);
        let b = candidate(12, 0, 10, 10);
        let f = text_features(&[&a, &b]).unwrap();
        for k in 0..7 {
            assert_eq!(f[k], 0.0, "identical members must have zero CV");
        }
        assert_eq!(f[7], 2.0);

        let mut c = candidate(24, 0, 10, 10);
        c.bbox.h = 20;
        let f = text_features(&[&a, &c]).unwrap();
        // heights (10, 20): sample std = sqrt(50), mean 15.
        let expect = 50.0f64.sqrt() / 15.0;
        assert!((f[0] - expect).abs() < 1e-12);

        assert!(text_features(&[&a]).is_err());
    }

    #[test]
    fn partition_uniform_gaps_single_word() {
        let members: Vec<CharacterCandidate> =
            (0..5).map(|i| candidate(12 * i, 0, 10, 12)).collect();
        let refs: Vec<&CharacterCandidate> = members.iter().collect();
        // Word gaps are >= 0.5 line heights.
        let clf = StumpEnsemble {
            stumps: vec![Stump { feature: 0, threshold: 0.5, polarity: 1, alpha: 1.0 }],
            rounds: 1,
            validation_precision: None,
        };
        let words = partition_words(&refs, &clf);
        assert_eq!(words.len(), 1);
        assert_eq!(words[0], Rect::new(0, 0, 58, 12));
    }

    #[test]
    fn partition_splits_large_gap() {
        let mut members: Vec<CharacterCandidate> =
            (0..3).map(|i| candidate(12 * i, 0, 10, 12)).collect();
        members.push(candidate(60, 0, 10, 12));
        members.push(candidate(72, 0, 10, 12));
        let refs: Vec<&CharacterCandidate> = members.iter().collect();
        let clf = StumpEnsemble {
            stumps: vec![Stump { feature: 0, threshold: 0.5, polarity: 1, alpha: 1.0 }],
            rounds: 1,
            validation_precision: None,
        };
        let words = partition_words(&refs, &clf);
        assert_eq!(words.len(), 2);
        assert_eq!(words[0], Rect::new(0, 0, 34, 12));
        assert_eq!(words[1], Rect::new(60, 0, 22, 12));
    }

    #[test]
    fn partition_single_member_one_word() {
        let c = candidate(5, 5, 8, 10);
        let clf = always_yes();
        let words = partition_words(&[&c], &clf);
        assert_eq!(words, vec![Rect::new(5, 5, 8, 10)]);
    }

    #[test]
    fn partition_two_members_at_most_two_words() {
        let a = candidate(0, 0, 10, 10);
        let b = candidate(40, 0, 10, 10);
        let clf = StumpEnsemble {
            stumps: vec![Stump { feature: 0, threshold: 0.5, polarity: 1, alpha: 1.0 }],
            rounds: 1,
            validation_precision: None,
        };
        let words = partition_words(&[&a, &b], &clf);
        assert!(words.len() <= 2);
        assert_eq!(words.len(), 2);
    }
}
