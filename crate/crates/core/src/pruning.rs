//! Reduction of the MSER tree to disjoint character candidates.
//!
//! Two passes over each tree of the selected-MSER forest: linear reduction
//! collapses single-child chains to their minimum-variation node, tree
//! accumulation then resolves multi-child subtrees to a non-nested node
//! set. Both walk the tree with explicit stacks; MSER chains on noisy
//! images can be deep enough to overflow call stacks otherwise.

use crate::component_tree::ErTree;
use crate::error::{Error, Result};

/// Tree the pruning passes operate on: variation plus children, with a
/// payload id pointing back at the source ER node.
#[derive(Debug, Clone)]
pub struct PruneTree {
    pub nodes: Vec<PruneNode>,
    pub roots: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct PruneNode {
    pub var: f64,
    pub children: Vec<usize>,
    /// Index of the originating ER node (or any caller payload).
    pub source: usize,
}

/// Counts variation comparisons; the pruning cost bound is stated in terms
/// of these.
#[derive(Debug, Default, Clone, Copy)]
pub struct PruneStats {
    pub comparisons: u64,
}

/// One resolved comparison, for auditing that every winner actually held
/// the minimum variation among the nodes it was compared against.
#[derive(Debug, Clone)]
pub struct CompareEvent {
    pub winner: usize,
    pub participants: Vec<usize>,
}

/// Non-nested set of surviving ER node ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrunedCandidateSet {
    pub nodes: Vec<usize>,
}

/// Builds the pruning forest induced on the MSER-flagged nodes of a tree:
/// each selected node's parent is its nearest selected ancestor. Variations
/// are the regularized ones.
pub fn mser_forest(tree: &ErTree) -> PruneTree {
    let mser_ids = tree.mser_nodes();
    let mut index_of = vec![usize::MAX; tree.len()];
    for (i, &id) in mser_ids.iter().enumerate() {
        index_of[id] = i;
    }
    let mut nodes: Vec<PruneNode> = mser_ids
        .iter()
        .map(|&id| PruneNode {
            var: tree.node(id).reg_variation,
            children: Vec::new(),
            source: id,
        })
        .collect();
    let mut roots = Vec::new();
    for (i, &id) in mser_ids.iter().enumerate() {
        let mut anc = tree.node(id).parent;
        while let Some(a) = anc {
            if index_of[a] != usize::MAX {
                break;
            }
            anc = tree.node(a).parent;
        }
        match anc {
            Some(a) => nodes[index_of[a]].children.push(i),
            None => roots.push(i),
        }
    }
    PruneTree { nodes, roots }
}

impl PruneTree {
    /// Builds a tree from `(variation, children)` pairs; `source` is the
    /// node's own index. Used by tests and synthetic generators.
    pub fn from_vars(vars: &[f64], children: &[Vec<usize>], roots: Vec<usize>) -> PruneTree {
        let nodes = vars
            .iter()
            .zip(children)
            .enumerate()
            .map(|(i, (&var, ch))| PruneNode {
                var,
                children: ch.clone(),
                source: i,
            })
            .collect();
        PruneTree { nodes, roots }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Collapses every single-child chain under `root` to its minimum-variation
/// node and returns the root of the rewritten tree. Ties keep the parent.
/// The result has no node with exactly one child.
pub fn linear_reduction(tree: &mut PruneTree, root: usize) -> usize {
    let mut stats = PruneStats::default();
    linear_reduction_traced(tree, root, &mut stats, None)
}

pub fn linear_reduction_traced(
    tree: &mut PruneTree,
    root: usize,
    stats: &mut PruneStats,
    mut trace: Option<&mut Vec<CompareEvent>>,
) -> usize {
    // Post-order over an explicit stack; `reduced[n]` holds the subtree
    // result once n's frame exits.
    enum Frame {
        Enter(usize),
        Exit(usize),
    }
    let mut reduced: Vec<usize> = (0..tree.nodes.len()).collect();
    let mut stack = vec![Frame::Enter(root)];
    while let Some(frame) = stack.pop() {
        match frame {
            Frame::Enter(n) => {
                stack.push(Frame::Exit(n));
                for &c in &tree.nodes[n].children {
                    stack.push(Frame::Enter(c));
                }
            }
            Frame::Exit(n) => {
                let n_children = tree.nodes[n].children.len();
                if n_children == 0 {
                    reduced[n] = n;
                } else if n_children == 1 {
                    let c = reduced[tree.nodes[n].children[0]];
                    stats.comparisons += 1;
                    if tree.nodes[n].var <= tree.nodes[c].var {
                        let grandchildren = std::mem::take(&mut tree.nodes[c].children);
                        tree.nodes[n].children = grandchildren;
                        if let Some(t) = trace.as_deref_mut() {
                            t.push(CompareEvent {
                                winner: n,
                                participants: vec![n, c],
                            });
                        }
                        reduced[n] = n;
                    } else {
                        if let Some(t) = trace.as_deref_mut() {
                            t.push(CompareEvent {
                                winner: c,
                                participants: vec![n, c],
                            });
                        }
                        reduced[n] = c;
                    }
                } else {
                    let new_children: Vec<usize> = tree.nodes[n]
                        .children
                        .clone()
                        .iter()
                        .map(|&c| reduced[c])
                        .collect();
                    tree.nodes[n].children = new_children;
                    reduced[n] = n;
                }
            }
        }
    }
    reduced[root]
}

/// Resolves a reduced tree to a set of disconnected nodes: children are
/// accumulated, and a parent replaces them only when its variation does not
/// exceed their minimum. Fails on single-child nodes, which only a missing
/// linear reduction can produce.
pub fn tree_accumulation(tree: &PruneTree, root: usize) -> Result<Vec<usize>> {
    let mut stats = PruneStats::default();
    tree_accumulation_traced(tree, root, &mut stats, None)
}

pub fn tree_accumulation_traced(
    tree: &PruneTree,
    root: usize,
    stats: &mut PruneStats,
    mut trace: Option<&mut Vec<CompareEvent>>,
) -> Result<Vec<usize>> {
    enum Frame {
        Enter(usize),
        Exit(usize),
    }
    let mut accumulated: Vec<Vec<usize>> = vec![Vec::new(); tree.nodes.len()];
    let mut stack = vec![Frame::Enter(root)];
    while let Some(frame) = stack.pop() {
        match frame {
            Frame::Enter(n) => {
                let n_children = tree.nodes[n].children.len();
                if n_children == 1 {
                    return Err(Error::InvalidInput(format!(
                        "tree accumulation on a single-child node {n}; run linear reduction first"
                    )));
                }
                stack.push(Frame::Exit(n));
                for &c in &tree.nodes[n].children {
                    stack.push(Frame::Enter(c));
                }
            }
            Frame::Exit(n) => {
                if tree.nodes[n].children.is_empty() {
                    accumulated[n] = vec![n];
                } else {
                    let mut set: Vec<usize> = Vec::new();
                    for &c in &tree.nodes[n].children {
                        set.append(&mut accumulated[c]);
                    }
                    let (min_idx, min_var) = set
                        .iter()
                        .map(|&m| tree.nodes[m].var)
                        .enumerate()
                        .fold((0usize, f64::INFINITY), |acc, (i, v)| {
                            if v < acc.1 {
                                (i, v)
                            } else {
                                acc
                            }
                        });
                    // min over the set costs |set|-1 comparisons, plus one
                    // against the parent.
                    stats.comparisons += set.len() as u64;
                    if tree.nodes[n].var <= min_var {
                        if let Some(t) = trace.as_deref_mut() {
                            let mut participants = set.clone();
                            participants.push(n);
                            t.push(CompareEvent {
                                winner: n,
                                participants,
                            });
                        }
                        accumulated[n] = vec![n];
                    } else {
                        if let Some(t) = trace.as_deref_mut() {
                            let mut participants = set.clone();
                            participants.push(n);
                            t.push(CompareEvent {
                                winner: set[min_idx],
                                participants,
                            });
                        }
                        accumulated[n] = set;
                    }
                }
            }
        }
    }
    Ok(std::mem::take(&mut accumulated[root]))
}

/// Full pruning of a tree's MSER forest: linear reduction then tree
/// accumulation per root, with near-image-sized roots dropped as frame
/// artifacts. Returns disjoint ER node ids.
pub fn extract_character_candidates(tree: &ErTree) -> PrunedCandidateSet {
    let mut stats = PruneStats::default();
    extract_with_stats(tree, &mut stats)
}

pub fn extract_with_stats(tree: &ErTree, stats: &mut PruneStats) -> PrunedCandidateSet {
    let mut forest = mser_forest(tree);
    let image_area = tree.width() as f64 * tree.height() as f64;
    let mut nodes = Vec::new();
    let roots = forest.roots.clone();
    for root in roots {
        let reduced = linear_reduction_traced(&mut forest, root, stats, None);
        let kept = tree_accumulation_traced(&forest, reduced, stats, None)
            .expect("reduced trees have no single-child nodes");
        for k in kept {
            let source = forest.nodes[k].source;
            let area = tree.node(source).area as f64;
            // Frame artifact: a surviving root covering almost the whole
            // image is the background, not a character.
            if k == reduced && area >= 0.95 * image_area {
                continue;
            }
            nodes.push(source);
        }
    }
    nodes.sort_unstable();
    PrunedCandidateSet { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(vars: &[f64]) -> PruneTree {
        // vars[0] is the root; each node's child is the next one.
        let children: Vec<Vec<usize>> = (0..vars.len())
            .map(|i| if i + 1 < vars.len() { vec![i + 1] } else { vec![] })
            .collect();
        PruneTree::from_vars(vars, &children, vec![0])
    }

    #[test]
    fn leaf_reduces_to_itself() {
        let mut t = chain(&[0.4]);
        assert_eq!(linear_reduction(&mut t, 0), 0);
    }

    #[test]
    fn child_wins_and_keeps_grandchildren() {
        // P(0.2) -> C(0.1) -> {G1, G2}
        let vars = [0.2, 0.1, 0.5, 0.6];
        let children = vec![vec![1], vec![2, 3], vec![], vec![]];
        let mut t = PruneTree::from_vars(&vars, &children, vec![0]);
        let r = linear_reduction(&mut t, 0);
        assert_eq!(r, 1);
        assert_eq!(t.nodes[1].children, vec![2, 3]);
    }

    #[test]
    fn tie_keeps_parent() {
        let mut t = chain(&[0.1, 0.1]);
        assert_eq!(linear_reduction(&mut t, 0), 0);
    }

    #[test]
    fn parent_wins_strictly() {
        let mut t = chain(&[0.05, 0.1]);
        assert_eq!(linear_reduction(&mut t, 0), 0);
    }

    #[test]
    fn accumulation_parent_minimum() {
        let vars = [0.1, 0.2, 0.3];
        let children = vec![vec![1, 2], vec![], vec![]];
        let t = PruneTree::from_vars(&vars, &children, vec![0]);
        assert_eq!(tree_accumulation(&t, 0).unwrap(), vec![0]);
    }

    #[test]
    fn accumulation_children_win() {
        let vars = [0.3, 0.1, 0.2];
        let children = vec![vec![1, 2], vec![], vec![]];
        let t = PruneTree::from_vars(&vars, &children, vec![0]);
        assert_eq!(tree_accumulation(&t, 0).unwrap(), vec![1, 2]);
    }

    #[test]
    fn accumulation_rejects_single_child() {
        let t = chain(&[0.1, 0.2]);
        assert!(tree_accumulation(&t, 0).is_err());
    }

    #[test]
    fn accumulation_tie_keeps_parent() {
        let vars = [0.1, 0.1, 0.4];
        let children = vec![vec![1, 2], vec![], vec![]];
        let t = PruneTree::from_vars(&vars, &children, vec![0]);
        assert_eq!(tree_accumulation(&t, 0).unwrap(), vec![0]);
    }

    #[test]
    fn reduction_is_idempotent_on_small_tree() {
        let vars = [0.5, 0.2, 0.7, 0.1, 0.9, 0.3];
        let children = vec![vec![1], vec![2, 3], vec![4], vec![], vec![5], vec![]];
        let mut t = PruneTree::from_vars(&vars, &children, vec![0]);
        let r1 = linear_reduction(&mut t, 0);
        let snapshot: Vec<Vec<usize>> = t.nodes.iter().map(|n| n.children.clone()).collect();
        let r2 = linear_reduction(&mut t, r1);
        let after: Vec<Vec<usize>> = t.nodes.iter().map(|n| n.children.clone()).collect();
        assert_eq!(r1, r2);
        assert_eq!(snapshot, after);
    }

    #[test]
    fn deep_chain_does_not_overflow() {
        let vars: Vec<f64> = (0..200_000).map(|i| 1.0 + (i % 97) as f64).collect();
        let mut t = chain(&vars);
        let r = linear_reduction(&mut t, 0);
        // Minimum variation in the chain wins.
        assert_eq!(t.nodes[r].var, 1.0);
        let kept = tree_accumulation(&t, r).unwrap();
        assert_eq!(kept, vec![r]);
    }

    #[test]
    fn single_node_extraction() {
        use crate::component_tree::{ErTree, MserParams, Polarity, RegularizationParams};
        use crate::raster::GrayImage;
        let mut img = GrayImage::filled(10, 10, 255).unwrap();
        for y in 3..7 {
            for x in 3..7 {
                img.set(x, y, 0);
            }
        }
        let mut tree = ErTree::build(&img, None, Polarity::DarkOnLight);
        tree.compute_variation(1);
        tree.apply_regularization(&RegularizationParams::default());
        tree.select_msers(&MserParams::default());
        let got = extract_character_candidates(&tree);
        assert_eq!(got.nodes.len(), 1);
        assert_eq!(tree.node(got.nodes[0]).area, 16);
    }

    #[test]
    fn empty_mser_tree_gives_empty_set() {
        use crate::component_tree::{ErTree, MserParams, Polarity};
        use crate::raster::GrayImage;
        let img = GrayImage::filled(6, 6, 100).unwrap();
        let mut tree = ErTree::build(&img, None, Polarity::DarkOnLight);
        tree.compute_variation(1);
        tree.select_msers(&MserParams::default());
        let got = extract_character_candidates(&tree);
        assert!(got.nodes.is_empty());
    }
}
