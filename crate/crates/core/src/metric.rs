//! Self-training distance metric learning.
//!
//! Alternates two stages: mine one cannot-link and one must-link pair per
//! labeled cluster under the current weights, then refit the weights and
//! threshold jointly by minimizing a logistic loss over the mined pairs.
//! The loop is not guaranteed to converge; it stops when the mined pair
//! sets repeat or the iteration budget runs out, and the best restart is
//! picked by validation pair-classification error.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::descriptors::CharacterCandidate;
use crate::error::{Error, Result};
use crate::exec;
use crate::linking::{
    pair_features, single_link_forest, weighted_distance, MetricParams, PairFeatures,
    PAIR_FEATURE_COUNT,
};
use crate::optim::{minimize, MinimizeOptions};

pub const THETA_LEN: usize = PAIR_FEATURE_COUNT + 1;

/// Joint logistic parameter vector: `theta[0] = -threshold`, the rest are
/// the feature weights. The augmented pair feature is `(1, x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticParams(pub [f64; THETA_LEN]);

impl LogisticParams {
    pub fn weights(&self) -> [f64; PAIR_FEATURE_COUNT] {
        let mut w = [0.0; PAIR_FEATURE_COUNT];
        w.copy_from_slice(&self.0[1..]);
        w
    }

    pub fn link_threshold(&self) -> f64 {
        -self.0[0]
    }

    pub fn to_metric(&self) -> MetricParams {
        MetricParams {
            weights: self.weights(),
            link_threshold: self.link_threshold(),
        }
    }

    pub fn from_metric(m: &MetricParams) -> Self {
        let mut t = [0.0; THETA_LEN];
        t[0] = -m.link_threshold;
        t[1..].copy_from_slice(&m.weights);
        LogisticParams(t)
    }

    /// `theta . (1, x)`
    pub fn score(&self, x: &PairFeatures) -> f64 {
        self.0[0] + self.0[1..].iter().zip(&x.0).map(|(w, f)| w * f).sum::<f64>()
    }
}

/// Candidates of one training image plus its labeled ground-truth clusters
/// (index lists into `candidates`).
#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub candidates: Vec<CharacterCandidate>,
    pub clusters: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Default)]
pub struct LabeledClusterSet {
    pub images: Vec<LabeledImage>,
}

/// Per-cluster mined constraint pairs. `*_ids` carry `(image, u, v)`
/// identities so iterations can detect repeats.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MinedPairs {
    pub cannot_link: Vec<PairFeatures>,
    pub must_link: Vec<PairFeatures>,
    pub cannot_ids: Vec<(usize, usize, usize)>,
    pub must_ids: Vec<(usize, usize, usize)>,
}

fn pair_key(d: f64, u: usize, v: usize) -> (f64, usize, usize) {
    (d, u.min(v), u.max(v))
}

fn better(a: (f64, usize, usize), b: (f64, usize, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && (a.1, a.2) < (b.1, b.2))
}

/// Stage one of the loop: for each labeled cluster, the closest pair that
/// crosses out of the cluster (cannot-link) and the closest pair spanning
/// the cluster's two direct subclusters under the current weights
/// (must-link). Clusters with fewer than two members are skipped; a cluster
/// with no outside candidates in its image yields no cannot-link pair.
pub fn mine_pairs(data: &LabeledClusterSet, theta: &LogisticParams) -> MinedPairs {
    let w = theta.weights();
    let mut out = MinedPairs::default();
    for (img_idx, image) in data.images.iter().enumerate() {
        let cands = &image.candidates;
        for (cl_idx, cluster) in image.clusters.iter().enumerate() {
            if cluster.len() < 2 {
                warn!(
                    "skipping cluster {cl_idx} of image {img_idx}: fewer than two members"
                );
                continue;
            }
            let in_cluster: Vec<bool> = {
                let mut f = vec![false; cands.len()];
                for &m in cluster {
                    f[m] = true;
                }
                f
            };

            // Cannot-link: nearest pair across the cluster boundary.
            let mut best: Option<((f64, usize, usize), PairFeatures)> = None;
            for &u in cluster {
                for v in 0..cands.len() {
                    if in_cluster[v] {
                        continue;
                    }
                    let x = pair_features(&cands[u], &cands[v]);
                    let key = pair_key(weighted_distance(&w, &x), u, v);
                    if best.as_ref().map_or(true, |(k, _)| better(key, *k)) {
                        best = Some((key, x));
                    }
                }
            }
            if let Some(((_, u, v), x)) = best {
                out.cannot_link.push(x);
                out.cannot_ids.push((img_idx, u, v));
            }

            // Must-link: fully merge the cluster under the current weights;
            // the last merge's two sides are its direct subclusters.
            let forest = single_link_forest(
                cluster.len(),
                |i, j| {
                    weighted_distance(&w, &pair_features(&cands[cluster[i]], &cands[cluster[j]]))
                },
                f64::INFINITY,
            );
            debug_assert_eq!(forest.len(), 1);
            let split = forest[0]
                .split
                .as_ref()
                .expect("clusters of >= 2 members always record a final merge");
            let mut best: Option<((f64, usize, usize), PairFeatures)> = None;
            for &li in &split.left {
                for &ri in &split.right {
                    let (u, v) = (cluster[li], cluster[ri]);
                    let x = pair_features(&cands[u], &cands[v]);
                    let key = pair_key(weighted_distance(&w, &x), u, v);
                    if best.as_ref().map_or(true, |(k, _)| better(key, *k)) {
                        best = Some((key, x));
                    }
                }
            }
            let ((_, u, v), x) = best.expect("both subclusters are nonempty");
            out.must_link.push(x);
            out.must_ids.push((img_idx, u, v));
        }
    }
    out
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)`, overflow-safe.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Logistic loss over the mined pairs: cannot-link pairs should score above
/// the threshold (label 1), must-link pairs below (label 0). Each set is
/// averaged over its realized pair count. Evaluated in log-sum-exp form, so
/// saturated pairs never produce NaN.
pub fn objective(theta: &LogisticParams, pairs: &MinedPairs) -> f64 {
    let mut j = 0.0;
    if !pairs.cannot_link.is_empty() {
        let m = pairs.cannot_link.len() as f64;
        let sum: f64 = pairs
            .cannot_link
            .iter()
            .map(|x| softplus(-theta.score(x)))
            .sum();
        j += sum / (2.0 * m);
    }
    if !pairs.must_link.is_empty() {
        let m = pairs.must_link.len() as f64;
        let sum: f64 = pairs
            .must_link
            .iter()
            .map(|x| softplus(theta.score(x)))
            .sum();
        j += sum / (2.0 * m);
    }
    j
}

/// Analytic gradient of [`objective`].
pub fn objective_gradient(theta: &LogisticParams, pairs: &MinedPairs) -> [f64; THETA_LEN] {
    let mut grad = [0.0; THETA_LEN];
    if !pairs.cannot_link.is_empty() {
        let scale = 1.0 / (2.0 * pairs.cannot_link.len() as f64);
        for x in &pairs.cannot_link {
            let coef = (sigmoid(theta.score(x)) - 1.0) * scale;
            grad[0] += coef;
            for k in 0..PAIR_FEATURE_COUNT {
                grad[k + 1] += coef * x.0[k];
            }
        }
    }
    if !pairs.must_link.is_empty() {
        let scale = 1.0 / (2.0 * pairs.must_link.len() as f64);
        for x in &pairs.must_link {
            let coef = sigmoid(theta.score(x)) * scale;
            grad[0] += coef;
            for k in 0..PAIR_FEATURE_COUNT {
                grad[k + 1] += coef * x.0[k];
            }
        }
    }
    grad
}

/// Fraction of mined pairs the parameters classify on the wrong side of
/// the threshold.
pub fn pair_classification_error(theta: &LogisticParams, pairs: &MinedPairs) -> f64 {
    let total = pairs.cannot_link.len() + pairs.must_link.len();
    if total == 0 {
        return 0.0;
    }
    let mut wrong = 0usize;
    for x in &pairs.cannot_link {
        if theta.score(x) <= 0.0 {
            wrong += 1;
        }
    }
    for x in &pairs.must_link {
        if theta.score(x) > 0.0 {
            wrong += 1;
        }
    }
    wrong as f64 / total as f64
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iters: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iters: 20,
            restarts: 5,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IterRecord {
    pub objective_after_mining: f64,
    pub objective_after_update: f64,
    pub validation_error: f64,
}

#[derive(Debug, Clone)]
pub struct RestartRecord {
    pub iterations: Vec<IterRecord>,
    pub validation_error: f64,
    pub converged: bool,
    pub diverged: bool,
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub restarts: Vec<RestartRecord>,
    pub chosen_restart: usize,
    /// Set when the data had no cannot-link pairs at all (single-cluster
    /// images with no outsiders); the threshold then comes from the
    /// must-link margin alone.
    pub must_link_only: bool,
    /// Set when the data had too few images for a validation split.
    pub no_validation_split: bool,
}

/// Learns feature weights and the clustering threshold jointly. Images are
/// split 70/30 into train/validation; `restarts` independent seeds run the
/// mine/optimize loop and the parameters with the lowest validation
/// pair-classification error win.
pub fn fit(data: &LabeledClusterSet, opts: &FitOptions) -> Result<(MetricParams, FitReport)> {
    if data.images.is_empty() || data.images.iter().all(|im| im.clusters.is_empty()) {
        return Err(Error::Training("no labeled clusters".into()));
    }

    let mut order: Vec<usize> = (0..data.images.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let n_train = ((order.len() as f64) * 0.7).round().max(1.0) as usize;
    let n_train = n_train.min(order.len());
    let train = LabeledClusterSet {
        images: order[..n_train]
            .iter()
            .map(|&i| data.images[i].clone())
            .collect(),
    };
    let no_validation_split = n_train == order.len();
    let val = if no_validation_split {
        train.clone()
    } else {
        LabeledClusterSet {
            images: order[n_train..]
                .iter()
                .map(|&i| data.images[i].clone())
                .collect(),
        }
    };
    if no_validation_split {
        warn!("too few images for a 70/30 split; validating on the training images");
    }

    let restart_indices: Vec<u64> = (0..opts.restarts.max(1) as u64).collect();
    let runs: Vec<(LogisticParams, RestartRecord)> = exec::map(&restart_indices, |&r| {
        run_restart(&train, &val, opts.seed.wrapping_add(r.wrapping_mul(0x9e37)), opts.max_iters)
    });

    let mut best: Option<usize> = None;
    for (i, (_, rec)) in runs.iter().enumerate() {
        if rec.diverged {
            continue;
        }
        if best.map_or(true, |b| rec.validation_error < runs[b].1.validation_error) {
            best = Some(i);
        }
    }
    let Some(chosen) = best else {
        return Err(Error::Training(format!(
            "all {} restarts diverged to non-finite objectives",
            runs.len()
        )));
    };

    let must_link_only = {
        let probe = mine_pairs(&train, &runs[chosen].0);
        probe.cannot_link.is_empty()
    };
    if must_link_only {
        warn!("no cannot-link pairs mined; threshold learned from must-link margins only");
    }

    let report = FitReport {
        restarts: runs.iter().map(|(_, r)| r.clone()).collect(),
        chosen_restart: chosen,
        must_link_only,
        no_validation_split,
    };
    Ok((runs[chosen].0.to_metric(), report))
}

fn run_restart(
    train: &LabeledClusterSet,
    val: &LabeledClusterSet,
    seed: u64,
    max_iters: usize,
) -> (LogisticParams, RestartRecord) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = LogisticParams({
        let mut t = [0.0; THETA_LEN];
        t[0] = -rng.gen_range(0.0..5.0);
        for v in t[1..].iter_mut() {
            *v = rng.gen_range(0.0..1.0);
        }
        t
    });

    let mut iterations = Vec::new();
    let mut prev_ids: Option<(Vec<(usize, usize, usize)>, Vec<(usize, usize, usize)>)> = None;
    let mut converged = false;
    let mut diverged = false;

    for _ in 0..max_iters {
        let pairs = mine_pairs(train, &theta);
        if pairs.cannot_link.is_empty() && pairs.must_link.is_empty() {
            break;
        }
        let j_mine = objective(&theta, &pairs);
        let ids = (pairs.cannot_ids.clone(), pairs.must_ids.clone());
        if prev_ids.as_ref() == Some(&ids) {
            converged = true;
            break;
        }
        prev_ids = Some(ids);

        let outcome = minimize(
            |t| {
                let mut arr = [0.0; THETA_LEN];
                arr.copy_from_slice(t);
                objective(&LogisticParams(arr), &pairs)
            },
            |t| {
                let mut arr = [0.0; THETA_LEN];
                arr.copy_from_slice(t);
                objective_gradient(&LogisticParams(arr), &pairs).to_vec()
            },
            &theta.0,
            &MinimizeOptions::default(),
        );
        if !outcome.value.is_finite() {
            diverged = true;
            break;
        }
        theta.0.copy_from_slice(&outcome.x);

        let val_pairs = mine_pairs(val, &theta);
        iterations.push(IterRecord {
            objective_after_mining: j_mine,
            objective_after_update: outcome.value,
            validation_error: pair_classification_error(&theta, &val_pairs),
        });
    }

    let validation_error = if diverged {
        f64::INFINITY
    } else {
        let val_pairs = mine_pairs(val, &theta);
        pair_classification_error(&theta, &val_pairs)
    };
    (
        theta,
        RestartRecord {
            iterations,
            validation_error,
            converged,
            diverged,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rect;

    fn candidate(x: u32, y: u32, w: u32, h: u32, color: f64) -> CharacterCandidate {
        CharacterCandidate {
            bbox: Rect::new(x, y, w, h),
            area: w * h,
            stroke_mean: 3.0,
            stroke_var: 0.1,
            smoothness: 0.2,
            color: [color, color, color],
            aspect: w as f64 / h as f64,
        }
    }

    fn toy_image() -> LabeledImage {
        // One cluster {0, 1} plus one outsider (index 2).
        LabeledImage {
            candidates: vec![
                candidate(0, 0, 10, 10, 0.0),
                candidate(12, 0, 10, 10, 0.0),
                candidate(100, 80, 10, 10, 200.0),
            ],
            clusters: vec![vec![0, 1]],
        }
    }

    #[test]
    fn mine_pairs_on_toy_image() {
        let data = LabeledClusterSet {
            images: vec![toy_image()],
        };
        let theta = LogisticParams([-1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let mined = mine_pairs(&data, &theta);
        assert_eq!(mined.must_ids, vec![(0, 0, 1)]);
        assert_eq!(mined.cannot_ids.len(), 1);
        let (_, u, v) = mined.cannot_ids[0];
        assert!(v == 2 || u == 2);
    }

    #[test]
    fn mine_pairs_skips_small_clusters_and_lone_images() {
        let mut img = toy_image();
        img.clusters.push(vec![2]); // singleton: skipped with a warning
        let data = LabeledClusterSet { images: vec![img] };
        let theta = LogisticParams([0.0; THETA_LEN]);
        let mined = mine_pairs(&data, &theta);
        assert_eq!(mined.must_link.len(), 1);

        // Single cluster covering the whole image: no cannot-link source.
        let img = LabeledImage {
            candidates: vec![candidate(0, 0, 5, 5, 0.0), candidate(6, 0, 5, 5, 0.0)],
            clusters: vec![vec![0, 1]],
        };
        let data = LabeledClusterSet { images: vec![img] };
        let mined = mine_pairs(&data, &theta);
        assert!(mined.cannot_link.is_empty());
        assert_eq!(mined.must_link.len(), 1);
    }

    #[test]
    fn objective_half_probability_case() {
        // One pair in each set scoring exactly 0 gives J = log 2.
        let pairs = MinedPairs {
            cannot_link: vec![PairFeatures([0.0; 7])],
            must_link: vec![PairFeatures([0.0; 7])],
            cannot_ids: vec![(0, 0, 1)],
            must_ids: vec![(0, 2, 3)],
        };
        let theta = LogisticParams([0.0; THETA_LEN]);
        assert!((objective(&theta, &pairs) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn objective_approaches_zero_when_separated() {
        let pairs = MinedPairs {
            cannot_link: vec![PairFeatures([10.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])],
            must_link: vec![PairFeatures([0.0; 7])],
            cannot_ids: vec![(0, 0, 1)],
            must_ids: vec![(0, 2, 3)],
        };
        // threshold 5, weight 50 on the first feature: cannot scores +495,
        // must scores -5.
        let theta = LogisticParams([-5.0, 50.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let j = objective(&theta, &pairs);
        assert!(j > 0.0 && j < 1e-2, "J = {j}");
        assert!(j.is_finite());
    }

    #[test]
    fn objective_never_nan_at_extremes() {
        let pairs = MinedPairs {
            cannot_link: vec![PairFeatures([1e6; 7])],
            must_link: vec![PairFeatures([1e6; 7])],
            cannot_ids: vec![(0, 0, 1)],
            must_ids: vec![(0, 2, 3)],
        };
        let theta = LogisticParams([1e8; THETA_LEN]);
        assert!(objective(&theta, &pairs).is_finite());
        let theta = LogisticParams([-1e8; THETA_LEN]);
        assert!(objective(&theta, &pairs).is_finite());
    }

    #[test]
    fn gradient_zero_for_zero_features_in_weight_block() {
        let pairs = MinedPairs {
            cannot_link: vec![PairFeatures([0.0; 7])],
            must_link: vec![PairFeatures([0.0; 7])],
            cannot_ids: vec![(0, 0, 1)],
            must_ids: vec![(0, 2, 3)],
        };
        let theta = LogisticParams([0.0; THETA_LEN]);
        let g = objective_gradient(&theta, &pairs);
        for k in 1..THETA_LEN {
            assert_eq!(g[k], 0.0);
        }
        // Threshold block: (h-1)/2 + h/2 = 0 at h = 0.5.
        assert!(g[0].abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let pairs = MinedPairs {
            cannot_link: vec![
                PairFeatures([0.3, 1.2, 0.1, 0.9, 0.4, 2.0, 0.7]),
                PairFeatures([1.3, 0.2, 1.1, 0.0, 0.4, 0.5, 0.6]),
            ],
            must_link: vec![PairFeatures([0.1, 0.1, 0.2, 0.3, 0.1, 0.9, 0.2])],
            cannot_ids: vec![(0, 0, 1), (0, 2, 3)],
            must_ids: vec![(0, 4, 5)],
        };
        let theta = LogisticParams([-0.4, 0.3, -0.2, 0.8, 0.1, 0.0, 1.5, -0.7]);
        let g = objective_gradient(&theta, &pairs);
        let h = 1e-6;
        for k in 0..THETA_LEN {
            let mut tp = theta;
            tp.0[k] += h;
            let mut tm = theta;
            tm.0[k] -= h;
            let fd = (objective(&tp, &pairs) - objective(&tm, &pairs)) / (2.0 * h);
            let denom = fd.abs().max(1e-8);
            assert!(
                ((g[k] - fd) / denom).abs() < 1e-5,
                "component {k}: analytic {} vs fd {}",
                g[k],
                fd
            );
        }
    }

    #[test]
    fn fit_zero_iterations_returns_initial_theta() {
        let data = LabeledClusterSet {
            images: vec![toy_image(), toy_image(), toy_image()],
        };
        let opts = FitOptions {
            max_iters: 0,
            restarts: 1,
            seed: 5,
        };
        let (params, report) = fit(&data, &opts).unwrap();
        assert!(report.restarts[0].iterations.is_empty());
        // Must equal the raw seeded initialization.
        let mut rng = ChaCha8Rng::seed_from_u64(5u64);
        let eps: f64 = rng.gen_range(0.0..5.0);
        assert!((params.link_threshold - eps).abs() < 1e-12);
    }

    #[test]
    fn fit_single_cluster_dataset_is_flagged() {
        let img = LabeledImage {
            candidates: vec![candidate(0, 0, 5, 5, 0.0), candidate(6, 0, 5, 5, 0.0)],
            clusters: vec![vec![0, 1]],
        };
        let data = LabeledClusterSet { images: vec![img] };
        let opts = FitOptions {
            max_iters: 3,
            restarts: 1,
            seed: 1,
        };
        let (_, report) = fit(&data, &opts).unwrap();
        assert!(report.must_link_only);
        assert!(report.no_validation_split);
    }

    #[test]
    fn fit_rejects_empty_data() {
        let data = LabeledClusterSet { images: vec![] };
        assert!(fit(&data, &FitOptions::default()).is_err());
    }
}
