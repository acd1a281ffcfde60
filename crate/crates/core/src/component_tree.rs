//! Extremal-region component tree with incremental statistics, variation
//! and MSER selection.
//!
//! The tree is built by a single union-find pass over pixels sorted by
//! intensity (4-connectivity), so construction cost is bounded by the pixel
//! count. A node represents a connected component of `{p : W(p) <= t}` at
//! the lowest threshold `t` where that exact pixel set appears; its parent
//! is the nearest strictly larger enclosing component. The root covers the
//! whole image.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geom::Rect;
use crate::raster::{GrayImage, RgbImage};

/// Which intensity polarity the tree is built for. Light-on-dark inverts
/// the image first so extremal regions are always the low-intensity side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    DarkOnLight,
    LightOnDark,
}

/// Polarity setting for a detection run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PolarityMode {
    DarkOnLight,
    LightOnDark,
    #[default]
    Both,
}

impl PolarityMode {
    pub fn polarities(&self) -> Vec<Polarity> {
        match self {
            PolarityMode::DarkOnLight => vec![Polarity::DarkOnLight],
            PolarityMode::LightOnDark => vec![Polarity::LightOnDark],
            PolarityMode::Both => vec![Polarity::DarkOnLight, Polarity::LightOnDark],
        }
    }
}

/// MSER selection parameters. Defaults follow the detection-tuned setting
/// (delta 1, max variation 0.5, min diversity 0.1) rather than the generic
/// detector defaults.
#[derive(Debug, Clone, Copy)]
pub struct MserParams {
    /// Intensity-level span used by the variation formula.
    pub delta: u32,
    /// Nodes with variation above this are never selected.
    pub max_variation: f64,
    /// Nested survivors closer in relative area than this are deduplicated.
    pub min_diversity: f64,
    pub polarity: PolarityMode,
}

impl Default for MserParams {
    fn default() -> Self {
        MserParams {
            delta: 1,
            max_variation: 0.5,
            min_diversity: 0.1,
            polarity: PolarityMode::Both,
        }
    }
}

impl MserParams {
    pub fn validate(&self) -> Result<()> {
        if self.delta < 1 {
            return Err(Error::InvalidInput("mser delta must be >= 1".into()));
        }
        if !(self.max_variation > 0.0) {
            return Err(Error::InvalidInput("max_variation must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.min_diversity) {
            return Err(Error::InvalidInput("min_diversity must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Aspect-ratio penalty applied to variations before pruning.
#[derive(Debug, Clone, Copy)]
pub struct RegularizationParams {
    pub theta1: f64,
    pub theta2: f64,
    pub aspect_min: f64,
    pub aspect_max: f64,
    /// +1 adds the penalty (raises variation outside the aspect band);
    /// -1 keeps the literal subtracting form.
    pub penalty_sign: f64,
}

impl Default for RegularizationParams {
    fn default() -> Self {
        RegularizationParams {
            theta1: 0.03,
            theta2: 0.08,
            aspect_min: 0.7,
            aspect_max: 1.2,
            penalty_sign: 1.0,
        }
    }
}

/// One extremal region.
#[derive(Debug, Clone)]
pub struct ErNode {
    /// Threshold at which this pixel set first appears (working intensity).
    pub level: u8,
    /// Total pixel count including descendants.
    pub area: u32,
    pub bbox: Rect,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Pixels at exactly this node's level (region = own + descendants').
    pub own_pixels: Vec<u32>,
    /// Per-channel color sums over the full region.
    pub color_sum: [f64; 3],
    /// Relative area growth toward the enclosing region `delta` levels up.
    /// Infinite for the root, which is never a meaningful region.
    pub variation: f64,
    /// Variation after the aspect-ratio penalty.
    pub reg_variation: f64,
    pub is_mser: bool,
}

/// Rooted inclusion tree of extremal regions.
#[derive(Debug, Clone)]
pub struct ErTree {
    nodes: Vec<ErNode>,
    root: usize,
    width: u32,
    height: u32,
    polarity: Polarity,
}

impl ErTree {
    /// Builds the component tree of `gray` under the given polarity.
    /// Color sums come from `color` when present, otherwise the gray value
    /// is replicated across channels.
    pub fn build(gray: &GrayImage, color: Option<&RgbImage>, polarity: Polarity) -> ErTree {
        let work = match polarity {
            Polarity::DarkOnLight => gray.clone(),
            Polarity::LightOnDark => gray.inverted(),
        };
        let (w, h) = (work.width(), work.height());
        let n_px = (w as usize) * (h as usize);
        let vals = work.pixels();

        // Counting sort: pixels in increasing working intensity, stable by index.
        let mut counts = [0usize; 257];
        for &v in vals {
            counts[v as usize + 1] += 1;
        }
        for i in 1..257 {
            counts[i] += counts[i - 1];
        }
        let mut order = vec![0u32; n_px];
        {
            let mut next = counts;
            for p in 0..n_px {
                let v = vals[p] as usize;
                order[next[v]] = p as u32;
                next[v] += 1;
            }
        }

        // Union-find immersion. `par_px` records, for each absorbed
        // component root, the pixel that absorbed it; it encodes the whole
        // tree at pixel granularity.
        let mut zpar: Vec<u32> = (0..n_px as u32).collect();
        let mut par_px: Vec<u32> = (0..n_px as u32).collect();
        let mut processed = vec![false; n_px];

        fn find(zpar: &mut [u32], mut x: u32) -> u32 {
            let mut root = x;
            while zpar[root as usize] != root {
                root = zpar[root as usize];
            }
            while zpar[x as usize] != root {
                let next = zpar[x as usize];
                zpar[x as usize] = root;
                x = next;
            }
            root
        }

        for &p in &order {
            processed[p as usize] = true;
            let (x, y) = (p % w, p / w);
            let mut neighbors = [0u32; 4];
            let mut n_nb = 0;
            if x > 0 {
                neighbors[n_nb] = p - 1;
                n_nb += 1;
            }
            if x + 1 < w {
                neighbors[n_nb] = p + 1;
                n_nb += 1;
            }
            if y > 0 {
                neighbors[n_nb] = p - w;
                n_nb += 1;
            }
            if y + 1 < h {
                neighbors[n_nb] = p + w;
                n_nb += 1;
            }
            for &q in &neighbors[..n_nb] {
                if processed[q as usize] {
                    let r = find(&mut zpar, q);
                    if r != p {
                        par_px[r as usize] = p;
                        zpar[r as usize] = p;
                    }
                }
            }
        }

        // A pixel heads a node iff its tree parent sits at a strictly
        // higher level (or it is the global root).
        let is_head = |p: usize| -> bool {
            let q = par_px[p] as usize;
            q == p || vals[q] != vals[p]
        };

        const UNSET: u32 = u32::MAX;
        let mut head_of = vec![UNSET; n_px];
        let mut chain: Vec<u32> = Vec::new();
        for p in 0..n_px {
            if head_of[p] != UNSET {
                continue;
            }
            chain.clear();
            let mut cur = p as u32;
            let h = loop {
                if head_of[cur as usize] != UNSET {
                    break head_of[cur as usize];
                }
                if is_head(cur as usize) {
                    break cur;
                }
                chain.push(cur);
                cur = par_px[cur as usize];
            };
            head_of[p] = h;
            for &c in &chain {
                head_of[c as usize] = h;
            }
        }

        // Assign node ids to heads in pixel order.
        let mut node_id = vec![UNSET; n_px];
        let mut heads: Vec<u32> = Vec::new();
        for p in 0..n_px {
            if head_of[p] == p as u32 && node_id[p] == UNSET {
                node_id[p] = heads.len() as u32;
                heads.push(p as u32);
            }
        }

        let mut nodes: Vec<ErNode> = heads
            .iter()
            .map(|&hp| ErNode {
                level: vals[hp as usize],
                area: 0,
                bbox: Rect::new(u32::MAX, u32::MAX, 0, 0),
                parent: None,
                children: Vec::new(),
                own_pixels: Vec::new(),
                color_sum: [0.0; 3],
                variation: f64::NAN,
                reg_variation: f64::NAN,
                is_mser: false,
            })
            .collect();

        // Own-pixel statistics. bbox is tracked as (min_x, min_y, max_x,
        // max_y) in the Rect fields until finalized below.
        let mut max_x = vec![0u32; nodes.len()];
        let mut max_y = vec![0u32; nodes.len()];
        for p in 0..n_px {
            let id = node_id[head_of[p] as usize] as usize;
            let node = &mut nodes[id];
            let (x, y) = (p as u32 % w, p as u32 / w);
            node.area += 1;
            node.bbox.x = node.bbox.x.min(x);
            node.bbox.y = node.bbox.y.min(y);
            max_x[id] = max_x[id].max(x);
            max_y[id] = max_y[id].max(y);
            let px_color = match color {
                Some(c) => {
                    let [r, g, b] = c.get(x, y);
                    [r as f64, g as f64, b as f64]
                }
                None => {
                    let v = gray.get(x, y) as f64;
                    [v, v, v]
                }
            };
            for ch in 0..3 {
                node.color_sum[ch] += px_color[ch];
            }
            node.own_pixels.push(p as u32);
        }

        // Parent links and children lists.
        let mut root = 0usize;
        for (id, &hp) in heads.iter().enumerate() {
            let q = par_px[hp as usize];
            if q == hp {
                root = id;
            } else {
                let pid = node_id[head_of[q as usize] as usize] as usize;
                nodes[id].parent = Some(pid);
            }
        }
        for id in 0..nodes.len() {
            if let Some(pid) = nodes[id].parent {
                nodes[pid].children.push(id);
            }
        }

        // Accumulate subtree statistics in increasing-level order; a
        // parent's level is strictly greater than its children's, so every
        // node is complete before it feeds its parent.
        let mut by_level: Vec<usize> = (0..nodes.len()).collect();
        by_level.sort_by_key(|&id| (nodes[id].level, id));
        for &id in &by_level {
            if let Some(pid) = nodes[id].parent {
                let (area, bbox, color_sum, nx, ny) = {
                    let n = &nodes[id];
                    (n.area, n.bbox, n.color_sum, max_x[id], max_y[id])
                };
                let p = &mut nodes[pid];
                p.area += area;
                p.bbox.x = p.bbox.x.min(bbox.x);
                p.bbox.y = p.bbox.y.min(bbox.y);
                max_x[pid] = max_x[pid].max(nx);
                max_y[pid] = max_y[pid].max(ny);
                for ch in 0..3 {
                    p.color_sum[ch] += color_sum[ch];
                }
            }
        }
        for (id, node) in nodes.iter_mut().enumerate() {
            node.bbox = Rect::new(
                node.bbox.x,
                node.bbox.y,
                max_x[id] - node.bbox.x + 1,
                max_y[id] - node.bbox.y + 1,
            );
        }

        ErTree {
            nodes,
            root,
            width: w,
            height: h,
            polarity,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn node(&self, id: usize) -> &ErNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[ErNode] {
        &self.nodes
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn polarity(&self) -> Polarity {
        self.polarity
    }

    /// All pixels of a node's region (own plus descendants').
    pub fn region_pixels(&self, id: usize) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.nodes[id].area as usize);
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            out.extend_from_slice(&self.nodes[n].own_pixels);
            stack.extend_from_slice(&self.nodes[n].children);
        }
        out
    }

    /// Annotates every node with its variation: the relative area growth of
    /// the enclosing region `delta` intensity levels further up the branch.
    /// The enclosing region at threshold `t` is the highest ancestor-or-self
    /// whose level does not exceed `t`; branches that merge into the root
    /// before `t` use the root. The root itself gets infinite variation.
    pub fn compute_variation(&mut self, delta: u32) {
        for id in 0..self.nodes.len() {
            if id == self.root {
                self.nodes[id].variation = f64::INFINITY;
                continue;
            }
            let target = self.nodes[id].level as u32 + delta;
            let mut anc = id;
            while let Some(pid) = self.nodes[anc].parent {
                if self.nodes[pid].level as u32 <= target {
                    anc = pid;
                } else {
                    break;
                }
            }
            let own = self.nodes[id].area as f64;
            let enclosing = self.nodes[anc].area as f64;
            self.nodes[id].variation = (enclosing - own) / own;
        }
    }

    /// Applies the aspect-ratio penalty to every node's variation.
    pub fn apply_regularization(&mut self, params: &RegularizationParams) {
        for node in &mut self.nodes {
            node.reg_variation = regularize(node.variation, node.bbox.aspect(), params)
                .expect("bbox aspect is always positive");
        }
    }

    /// Marks maximally stable nodes: local variation minima along their
    /// branch, capped at `max_variation`, deduplicated by relative area
    /// against the nearest surviving ancestor (the more stable one of a
    /// too-similar pair is kept). The root is never selected.
    pub fn select_msers(&mut self, params: &MserParams) {
        let n = self.nodes.len();
        let mut selected = vec![false; n];
        for id in 0..n {
            if id == self.root {
                continue;
            }
            let v = self.nodes[id].variation;
            if !(v <= params.max_variation) {
                continue;
            }
            let parent_ok = match self.nodes[id].parent {
                Some(pid) => v <= self.nodes[pid].variation,
                None => true,
            };
            if !parent_ok {
                continue;
            }
            let children_ok = self.nodes[id]
                .children
                .iter()
                .all(|&c| v <= self.nodes[c].variation);
            if children_ok {
                selected[id] = true;
            }
        }

        // Diversity pass: pairs are judged against the pre-dedup survivor
        // set, so removal is order-free.
        let mut removed = vec![false; n];
        for id in 0..n {
            if !selected[id] {
                continue;
            }
            let mut anc = self.nodes[id].parent;
            while let Some(a) = anc {
                if selected[a] {
                    break;
                }
                anc = self.nodes[a].parent;
            }
            if let Some(a) = anc {
                let big = self.nodes[a].area as f64;
                let small = self.nodes[id].area as f64;
                if (big - small) / big < params.min_diversity {
                    let loser = if self.nodes[a].variation < self.nodes[id].variation {
                        id
                    } else if self.nodes[id].variation < self.nodes[a].variation {
                        a
                    } else {
                        id
                    };
                    removed[loser] = true;
                }
            }
        }

        for id in 0..n {
            self.nodes[id].is_mser = selected[id] && !removed[id];
        }
    }

    pub fn mser_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&id| self.nodes[id].is_mser)
            .collect()
    }

    /// One node per line, indented by depth: level, area, bbox, variation.
    pub fn dump_outline(&self) -> String {
        let mut out = String::new();
        let mut stack = vec![(self.root, 0usize)];
        while let Some((id, depth)) = stack.pop() {
            let n = &self.nodes[id];
            let _ = writeln!(
                out,
                "{}level={} area={} bbox=({},{},{},{}) var={:.6} mser={}",
                "  ".repeat(depth),
                n.level,
                n.area,
                n.bbox.x,
                n.bbox.y,
                n.bbox.w,
                n.bbox.h,
                n.variation,
                n.is_mser,
            );
            for &c in n.children.iter().rev() {
                stack.push((c, depth + 1));
            }
        }
        out
    }
}

/// Aspect-ratio regularization of a variation value. Inside
/// `[aspect_min, aspect_max]` the variation is returned unchanged; outside,
/// a linear penalty scaled by `theta1` (too wide) or `theta2` (too tall)
/// is applied with the configured sign.
pub fn regularize(variation: f64, aspect: f64, params: &RegularizationParams) -> Result<f64> {
    if !(aspect > 0.0) {
        return Err(Error::InvalidInput(format!(
            "aspect ratio must be positive, got {aspect}"
        )));
    }
    let v = if aspect > params.aspect_max {
        variation + params.penalty_sign * params.theta1 * (aspect - params.aspect_max)
    } else if aspect < params.aspect_min {
        variation + params.penalty_sign * params.theta2 * (params.aspect_min - aspect)
    } else {
        variation
    };
    Ok(v)
}
