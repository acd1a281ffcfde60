//! Pairwise similarity features and single-link clustering of character
//! candidates into text candidates.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::descriptors::CharacterCandidate;

pub const PAIR_FEATURE_COUNT: usize = 7;

/// Feature order is a file-format contract; keep in sync with model headers.
pub const PAIR_FEATURE_NAMES: [&str; PAIR_FEATURE_COUNT] = [
    "spatial_distance",
    "width_diff",
    "height_diff",
    "top_alignment",
    "bottom_alignment",
    "color_diff",
    "stroke_diff",
];

/// Symmetric nonnegative similarity features for a candidate pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairFeatures(pub [f64; PAIR_FEATURE_COUNT]);

/// Learned feature weights plus the clustering termination threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricParams {
    pub weights: [f64; PAIR_FEATURE_COUNT],
    pub link_threshold: f64,
}

/// A top-level single-link cluster. Non-singletons record the two sides and
/// distance of their final merge.
#[derive(Debug, Clone, PartialEq)]
pub struct TextCandidate {
    /// Candidate indices, sorted ascending.
    pub members: Vec<usize>,
    pub split: Option<ClusterSplit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSplit {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub distance: f64,
}

/// Similarity feature vector between two candidates. The spatial and
/// alignment terms read the bounding boxes through their centers: the
/// horizontal gap is normalized by the wider box, and alignments are the
/// arctangents of vertical offset over horizontal center gap (a zero gap
/// with nonzero offset saturates at pi/2).
pub fn pair_features(u: &CharacterCandidate, v: &CharacterCandidate) -> PairFeatures {
    let (wu, wv) = (u.bbox.w as f64, v.bbox.w as f64);
    let (hu, hv) = (u.bbox.h as f64, v.bbox.h as f64);
    let cx_gap = (u.bbox.center_x() - v.bbox.center_x()).abs();
    let max_w = wu.max(wv);
    let spatial = cx_gap / max_w;
    let width_diff = (wu - wv).abs() / max_w;
    let height_diff = (hu - hv).abs() / hu.max(hv);
    let align = |dy: f64| -> f64 {
        if dy == 0.0 {
            0.0
        } else if cx_gap == 0.0 {
            std::f64::consts::FRAC_PI_2
        } else {
            (dy / cx_gap).atan()
        }
    };
    let top_alignment = align((u.bbox.y as f64 - v.bbox.y as f64).abs());
    let bottom_alignment = align((u.bbox.bottom() as f64 - v.bbox.bottom() as f64).abs());
    let color_diff = u
        .color
        .iter()
        .zip(&v.color)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let stroke_diff = (u.stroke_mean - v.stroke_mean).abs() / u.stroke_mean.max(v.stroke_mean);
    PairFeatures([
        spatial,
        width_diff,
        height_diff,
        top_alignment,
        bottom_alignment,
        color_diff,
        stroke_diff,
    ])
}

/// Weighted distance `w . x`.
pub fn weighted_distance(weights: &[f64; PAIR_FEATURE_COUNT], x: &PairFeatures) -> f64 {
    weights.iter().zip(&x.0).map(|(w, f)| w * f).sum()
}

pub fn distance(params: &MetricParams, x: &PairFeatures) -> f64 {
    weighted_distance(&params.weights, x)
}

/// Heap entry ordered by (distance, pair minima) ascending.
#[derive(Debug, Clone, Copy, PartialEq)]
struct MergeEntry {
    dist: f64,
    key_a: usize,
    key_b: usize,
    slot_a: usize,
    slot_b: usize,
    version_a: u64,
    version_b: u64,
}

impl Eq for MergeEntry {}

impl Ord for MergeEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reverse for a min-heap on (dist, key_a, key_b); distances are
        // always finite here.
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap()
            .then_with(|| other.key_a.cmp(&self.key_a))
            .then_with(|| other.key_b.cmp(&self.key_b))
    }
}

impl PartialOrd for MergeEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Agglomerative single-link clustering over an arbitrary pairwise
/// distance, stopping once the nearest cluster pair is farther than
/// `threshold`. Ties break on the lower minimum member index of the pair
/// (then the other side's minimum), which makes the forest deterministic
/// and permutation-stable. Returns top-level clusters ordered by minimum
/// member.
pub fn single_link_forest(
    n: usize,
    mut dist: impl FnMut(usize, usize) -> f64,
    threshold: f64,
) -> Vec<TextCandidate> {
    if n == 0 {
        return Vec::new();
    }
    // Slot state: single-link distances via minimum update on merge.
    let mut matrix = vec![f64::INFINITY; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = dist(i, j);
            matrix[i * n + j] = d;
            matrix[j * n + i] = d;
        }
    }
    let mut active = vec![true; n];
    let mut version = vec![0u64; n];
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut split: Vec<Option<ClusterSplit>> = vec![None; n];
    let mut min_member: Vec<usize> = (0..n).collect();

    let mut heap = BinaryHeap::with_capacity(n * n / 2 + 1);
    let push = |heap: &mut BinaryHeap<MergeEntry>,
                matrix: &[f64],
                min_member: &[usize],
                version: &[u64],
                i: usize,
                j: usize| {
        let d = matrix[i * n + j];
        if d <= threshold {
            let (ka, kb) = if min_member[i] <= min_member[j] {
                (min_member[i], min_member[j])
            } else {
                (min_member[j], min_member[i])
            };
            heap.push(MergeEntry {
                dist: d,
                key_a: ka,
                key_b: kb,
                slot_a: i,
                slot_b: j,
                version_a: version[i],
                version_b: version[j],
            });
        }
    };
    for i in 0..n {
        for j in (i + 1)..n {
            push(&mut heap, &matrix, &min_member, &version, i, j);
        }
    }

    while let Some(entry) = heap.pop() {
        let (a, b) = (entry.slot_a, entry.slot_b);
        if !active[a] || !active[b] || version[a] != entry.version_a || version[b] != entry.version_b
        {
            continue;
        }
        // Merge b into a.
        let left = std::mem::take(&mut members[a]);
        let right = std::mem::take(&mut members[b]);
        let mut merged: Vec<usize> = left.iter().chain(right.iter()).copied().collect();
        merged.sort_unstable();
        split[a] = Some(ClusterSplit {
            left,
            right,
            distance: entry.dist,
        });
        members[a] = merged;
        active[b] = false;
        min_member[a] = min_member[a].min(min_member[b]);
        version[a] += 1;
        for k in 0..n {
            if k == a || !active[k] {
                continue;
            }
            let d = matrix[a * n + k].min(matrix[b * n + k]);
            matrix[a * n + k] = d;
            matrix[k * n + a] = d;
            push(&mut heap, &matrix, &min_member, &version, a.min(k), a.max(k));
        }
    }

    let mut out: Vec<TextCandidate> = (0..n)
        .filter(|&i| active[i])
        .map(|i| TextCandidate {
            members: std::mem::take(&mut members[i]),
            split: split[i].take(),
        })
        .collect();
    out.sort_by_key(|c| c.members[0]);
    out
}

/// Clusters candidates under the learned metric; merging stops when the
/// nearest pair is farther than the link threshold.
pub fn single_link_cluster(
    candidates: &[CharacterCandidate],
    params: &MetricParams,
) -> Vec<TextCandidate> {
    single_link_forest(
        candidates.len(),
        |i, j| distance(params, &pair_features(&candidates[i], &candidates[j])),
        params.link_threshold,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rect;

    pub(crate) fn candidate(x: u32, y: u32, w: u32, h: u32) -> CharacterCandidate {
        CharacterCandidate {
            bbox: Rect::new(x, y, w, h),
            area: w * h,
            stroke_mean: 3.0,
            stroke_var: 0.1,
            smoothness: 0.2,
            color: [10.0, 20.0, 30.0],
            aspect: w as f64 / h as f64,
        }
    }

    #[test]
    fn identical_candidates_zero_features() {
        let c = candidate(5, 5, 10, 20);
        let f = pair_features(&c, &c);
        assert_eq!(f.0, [0.0; 7]);
    }

    #[test]
    fn adjacent_same_size_only_spatial() {
        let u = candidate(0, 0, 10, 10);
        let v = candidate(12, 0, 10, 10);
        let f = pair_features(&u, &v);
        assert!(f.0[0] > 0.0);
        for k in 1..7 {
            assert_eq!(f.0[k], 0.0, "feature {k}");
        }
    }

    #[test]
    fn spatial_normalized_by_max_width() {
        // Center gap 30, widths 10 and 20.
        let u = candidate(0, 0, 10, 10); // cx 5
        let mut v = candidate(25, 0, 20, 10); // cx 35
        v.stroke_mean = 3.0;
        let f = pair_features(&u, &v);
        assert!((f.0[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn vertical_stack_alignment_saturates() {
        let u = candidate(0, 0, 10, 10);
        let v = candidate(0, 30, 10, 10);
        let f = pair_features(&u, &v);
        assert_eq!(f.0[3], std::f64::consts::FRAC_PI_2);
        assert_eq!(f.0[4], std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn features_symmetric() {
        let u = candidate(0, 2, 13, 9);
        let v = candidate(40, 0, 7, 11);
        assert_eq!(pair_features(&u, &v), pair_features(&v, &u));
    }

    #[test]
    fn distance_basics() {
        let x = PairFeatures([0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut w = [0.0; 7];
        w[0] = 1.0;
        assert_eq!(weighted_distance(&w, &x), 0.5);
        assert_eq!(weighted_distance(&[0.0; 7], &x), 0.0);
        // Naive summation oracle on arbitrary values.
        let w = [0.3, -0.2, 0.7, 1.1, 0.0, 2.0, -0.5];
        let mut expect = 0.0;
        for k in 0..7 {
            expect += w[k] * x.0[k];
        }
        assert_eq!(weighted_distance(&w, &x), expect);
    }

    #[test]
    fn three_collinear_points() {
        // Distances (1, 1) between neighbors under unit spatial weight.
        let cands = vec![
            candidate(0, 0, 10, 10),
            candidate(10, 0, 10, 10),
            candidate(20, 0, 10, 10),
        ];
        let mut weights = [0.0; 7];
        weights[0] = 1.0;
        let loose = MetricParams {
            weights,
            link_threshold: 1.5,
        };
        let clusters = single_link_cluster(&cands, &loose);
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].members, vec![0, 1, 2]);

        let tight = MetricParams {
            weights,
            link_threshold: 0.5,
        };
        let clusters = single_link_cluster(&cands, &tight);
        assert_eq!(clusters.len(), 3);
        assert!(clusters.iter().all(|c| c.split.is_none()));
    }

    #[test]
    fn threshold_property_holds() {
        let cands: Vec<CharacterCandidate> = (0..20)
            .map(|i| candidate(7 * (i % 9) + 11 * (i / 9), 3 * (i % 4), 6 + (i % 3), 8))
            .collect();
        let params = MetricParams {
            weights: [1.0, 0.5, 0.5, 0.3, 0.3, 0.01, 0.2],
            link_threshold: 1.2,
        };
        let clusters = single_link_cluster(&cands, &params);
        // Within a cluster every recorded merge sits at or below the
        // threshold; across clusters every pair is above it.
        for c in &clusters {
            if let Some(s) = &c.split {
                assert!(s.distance <= params.link_threshold);
            }
        }
        for (i, a) in clusters.iter().enumerate() {
            for b in clusters.iter().skip(i + 1) {
                for &u in &a.members {
                    for &v in &b.members {
                        let d = distance(&params, &pair_features(&cands[u], &cands[v]));
                        assert!(d > params.link_threshold);
                    }
                }
            }
        }
    }

    #[test]
    fn permutation_invariant_contents() {
        let cands: Vec<CharacterCandidate> = (0..15)
            .map(|i| candidate(13 * (i % 5), 17 * (i / 5), 9, 12))
            .collect();
        let params = MetricParams {
            weights: [1.0, 0.2, 0.2, 0.1, 0.1, 0.005, 0.1],
            link_threshold: 1.0,
        };
        let base = single_link_cluster(&cands, &params);
        let perm: Vec<usize> = (0..15).map(|i| (i * 7 + 3) % 15).collect();
        let shuffled: Vec<CharacterCandidate> = perm.iter().map(|&i| cands[i].clone()).collect();
        let got = single_link_cluster(&shuffled, &params);
        let canon = |clusters: &[TextCandidate], map: &dyn Fn(usize) -> usize| {
            let mut sets: Vec<Vec<usize>> = clusters
                .iter()
                .map(|c| {
                    let mut m: Vec<usize> = c.members.iter().map(|&i| map(i)).collect();
                    m.sort_unstable();
                    m
                })
                .collect();
            sets.sort();
            sets
        };
        assert_eq!(
            canon(&base, &|i| i),
            canon(&got, &|i| perm[i]),
            "cluster contents must not depend on input order"
        );
    }

    #[test]
    fn cluster_count_monotone_in_threshold() {
        let cands: Vec<CharacterCandidate> = (0..12)
            .map(|i| candidate(11 * i, (i % 3) * 2, 10, 10))
            .collect();
        let mut weights = [0.0; 7];
        weights[0] = 1.0;
        weights[3] = 0.5;
        let mut prev = usize::MAX;
        for eps in [0.0, 0.4, 0.8, 1.2, 2.0, 5.0] {
            let params = MetricParams {
                weights,
                link_threshold: eps,
            };
            let k = single_link_cluster(&cands, &params).len();
            assert!(k <= prev);
            prev = k;
        }
    }

    #[test]
    fn empty_and_singleton_inputs() {
        let params = MetricParams {
            weights: [1.0; 7],
            link_threshold: 1.0,
        };
        assert!(single_link_cluster(&[], &params).is_empty());
        let one = vec![candidate(0, 0, 5, 5)];
        let clusters = single_link_cluster(&one, &params);
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].members, vec![0]);
        assert!(clusters[0].split.is_none());
    }
}
