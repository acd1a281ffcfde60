//! Per-candidate descriptors: stroke width, boundary smoothness, mean color.

use crate::component_tree::ErTree;
use crate::error::{Error, Result};
use crate::geom::Rect;
use crate::raster::{GrayImage, RgbImage};

/// A region pixel set in a tight bounding box, with a local bitmap.
#[derive(Debug, Clone)]
pub struct RegionMask {
    pub bbox: Rect,
    /// Row-major over the bbox.
    bitmap: Vec<bool>,
    /// Original image pixel ids, used for color/gradient lookups.
    pixels: Vec<u32>,
    image_width: u32,
}

impl RegionMask {
    pub fn from_pixels(pixels: Vec<u32>, image_width: u32) -> Result<RegionMask> {
        if pixels.is_empty() {
            return Err(Error::InvalidInput("empty region mask".into()));
        }
        let mut min_x = u32::MAX;
        let mut min_y = u32::MAX;
        let mut max_x = 0u32;
        let mut max_y = 0u32;
        for &p in &pixels {
            let (x, y) = (p % image_width, p / image_width);
            min_x = min_x.min(x);
            min_y = min_y.min(y);
            max_x = max_x.max(x);
            max_y = max_y.max(y);
        }
        let bbox = Rect::new(min_x, min_y, max_x - min_x + 1, max_y - min_y + 1);
        let mut bitmap = vec![false; (bbox.w * bbox.h) as usize];
        for &p in &pixels {
            let (x, y) = (p % image_width, p / image_width);
            bitmap[((y - bbox.y) * bbox.w + (x - bbox.x)) as usize] = true;
        }
        Ok(RegionMask {
            bbox,
            bitmap,
            pixels,
            image_width,
        })
    }

    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn pixels(&self) -> &[u32] {
        &self.pixels
    }

    /// Local-coordinate membership test; out-of-bbox is background.
    fn at(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.bbox.w as i64 || y >= self.bbox.h as i64 {
            return false;
        }
        self.bitmap[(y as u32 * self.bbox.w + x as u32) as usize]
    }
}

/// Exact squared Euclidean distance transform (lower-envelope method),
/// one dimension at a time. `f` holds per-cell seed costs.
fn dt_1d(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let vk = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[vk] + (vk * vk) as f64))
                / (2.0 * (q as f64 - vk as f64));
            if s <= z[k] {
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    let mut k = 0usize;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let dq = q as f64 - v[k] as f64;
        d[q] = dq * dq + f[v[k]];
    }
}

// Large finite stand-in for infinity; keeps the parabola arithmetic NaN-free.
const FAR: f64 = 1e20;

/// Squared distance to the nearest background cell for every cell of the
/// mask's padded window (one background ring around the bbox).
fn squared_distance_field(mask: &RegionMask) -> (Vec<f64>, u32, u32) {
    let w = mask.bbox.w + 2;
    let h = mask.bbox.h + 2;
    let mut field = vec![0.0f64; (w * h) as usize];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            if mask.at(x - 1, y - 1) {
                field[(y as u32 * w + x as u32) as usize] = FAR;
            }
        }
    }
    // Columns, then rows.
    let mut col = vec![0.0f64; h as usize];
    let mut out = vec![0.0f64; h as usize];
    for x in 0..w {
        for y in 0..h {
            col[y as usize] = field[(y * w + x) as usize];
        }
        dt_1d(&col, &mut out);
        for y in 0..h {
            field[(y * w + x) as usize] = out[y as usize];
        }
    }
    let mut row = vec![0.0f64; w as usize];
    let mut out = vec![0.0f64; w as usize];
    for y in 0..h {
        row.copy_from_slice(&field[(y * w) as usize..((y + 1) * w) as usize]);
        dt_1d(&row, &mut out);
        field[(y * w) as usize..((y + 1) * w) as usize].copy_from_slice(&out);
    }
    (field, w, h)
}

/// Stroke width statistics of a region. Each region pixel's distance to the
/// nearest non-region pixel is computed exactly; pixels whose distance is a
/// local maximum in their 8-neighborhood act as skeleton samples with
/// stroke width `2 * (distance - 0.5)` (the half-pixel offset places the
/// region boundary between pixel centers). Returns the sample mean and the
/// coefficient of variation (sample standard deviation over mean).
pub fn stroke_width_stats(mask: &RegionMask) -> Result<(f64, f64)> {
    if mask.area() == 0 {
        return Err(Error::InvalidInput("empty region mask".into()));
    }
    let (field, w, _h) = squared_distance_field(mask);
    let mut samples: Vec<f64> = Vec::new();
    for y in 0..mask.bbox.h as i64 {
        for x in 0..mask.bbox.w as i64 {
            if !mask.at(x, y) {
                continue;
            }
            let (px, py) = (x + 1, y + 1);
            let d2 = field[(py as u32 * w + px as u32) as usize];
            let mut is_max = true;
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let q = field[((py + dy) as u32 * w + (px + dx) as u32) as usize];
                    if q > d2 {
                        is_max = false;
                    }
                }
            }
            if is_max {
                samples.push(2.0 * (d2.sqrt() - 0.5));
            }
        }
    }
    debug_assert!(!samples.is_empty(), "a finite mask has a distance maximum");
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let variation = if samples.len() < 2 {
        0.0
    } else {
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
        var.sqrt() / mean
    };
    Ok((mean, variation))
}

/// Ordered outer boundary of the region (Moore-neighbor tracing, clockwise,
/// Jacob's stopping criterion). Holes are ignored. Local coordinates.
pub fn trace_boundary(mask: &RegionMask) -> Vec<(i64, i64)> {
    // Clockwise ring, screen coordinates (y grows downward).
    const DIRS: [(i64, i64); 8] = [
        (1, 0),
        (1, 1),
        (0, 1),
        (-1, 1),
        (-1, 0),
        (-1, -1),
        (0, -1),
        (1, -1),
    ];
    let dir_index = |dx: i64, dy: i64| DIRS.iter().position(|&d| d == (dx, dy)).unwrap();

    let mut start = None;
    'scan: for y in 0..mask.bbox.h as i64 {
        for x in 0..mask.bbox.w as i64 {
            if mask.at(x, y) {
                start = Some((x, y));
                break 'scan;
            }
        }
    }
    let Some(start) = start else {
        return Vec::new();
    };

    let initial_back = (start.0 - 1, start.1); // west of the topmost-leftmost pixel
    let mut boundary = vec![start];
    let mut cur = start;
    let mut back = initial_back;
    let limit = 8 * mask.area() + 8;
    for _ in 0..limit {
        let back_dir = dir_index(back.0 - cur.0, back.1 - cur.1);
        let mut found = None;
        for i in 1..=8 {
            let d = (back_dir + i) % 8;
            let np = (cur.0 + DIRS[d].0, cur.1 + DIRS[d].1);
            if mask.at(np.0, np.1) {
                let before = (back_dir + i - 1) % 8;
                found = Some((np, (cur.0 + DIRS[before].0, cur.1 + DIRS[before].1)));
                break;
            }
        }
        let Some((np, prev_checked)) = found else {
            break; // isolated pixel
        };
        back = prev_checked;
        cur = np;
        if cur == start && back == initial_back {
            break;
        }
        boundary.push(cur);
    }
    boundary
}

/// Mean absolute angular difference of gradient directions between adjacent
/// boundary pixels, wrapped to `[0, pi]`. Gradients come from 3x3 central
/// differences on the grayscale (border-clamped). Degenerate regions with a
/// single boundary pixel are 0 by convention.
pub fn smoothness(mask: &RegionMask, gray: &GrayImage) -> f64 {
    let boundary = trace_boundary(mask);
    if boundary.len() < 2 {
        return 0.0;
    }
    let grad_dir = |lx: i64, ly: i64| -> f64 {
        let cx = (lx + mask.bbox.x as i64).clamp(0, gray.width() as i64 - 1);
        let cy = (ly + mask.bbox.y as i64).clamp(0, gray.height() as i64 - 1);
        let sample = |x: i64, y: i64| -> f64 {
            let sx = x.clamp(0, gray.width() as i64 - 1) as u32;
            let sy = y.clamp(0, gray.height() as i64 - 1) as u32;
            gray.get(sx, sy) as f64
        };
        // 3x3 Sobel: central differences with tangential smoothing, which
        // keeps directions stable on staircase boundaries.
        let gx = (sample(cx + 1, cy - 1) + 2.0 * sample(cx + 1, cy) + sample(cx + 1, cy + 1)
            - sample(cx - 1, cy - 1)
            - 2.0 * sample(cx - 1, cy)
            - sample(cx - 1, cy + 1))
            / 8.0;
        let gy = (sample(cx - 1, cy + 1) + 2.0 * sample(cx, cy + 1) + sample(cx + 1, cy + 1)
            - sample(cx - 1, cy - 1)
            - 2.0 * sample(cx, cy - 1)
            - sample(cx + 1, cy - 1))
            / 8.0;
        gy.atan2(gx)
    };
    let dirs: Vec<f64> = boundary.iter().map(|&(x, y)| grad_dir(x, y)).collect();
    let mut total = 0.0;
    let k = dirs.len();
    for i in 0..k {
        let a = dirs[i];
        let b = dirs[(i + 1) % k];
        let d = (a - b).rem_euclid(2.0 * std::f64::consts::PI);
        total += d.min(2.0 * std::f64::consts::PI - d);
    }
    total / k as f64
}

/// Arithmetic per-channel mean over the mask.
pub fn mean_color(mask: &RegionMask, color: &RgbImage) -> Result<[f64; 3]> {
    if mask.area() == 0 {
        return Err(Error::InvalidInput("empty region mask".into()));
    }
    let mut sums = [0.0f64; 3];
    for &p in mask.pixels() {
        let (x, y) = (p % mask.image_width, p / mask.image_width);
        let px = color.get(x, y);
        for ch in 0..3 {
            sums[ch] += px[ch] as f64;
        }
    }
    let n = mask.area() as f64;
    Ok([sums[0] / n, sums[1] / n, sums[2] / n])
}

/// Grayscale fallback of [`mean_color`]: the gray mean replicated.
pub fn mean_gray(mask: &RegionMask, gray: &GrayImage) -> Result<[f64; 3]> {
    if mask.area() == 0 {
        return Err(Error::InvalidInput("empty region mask".into()));
    }
    let mut sum = 0.0f64;
    for &p in mask.pixels() {
        let (x, y) = (p % mask.image_width, p / mask.image_width);
        sum += gray.get(x, y) as f64;
    }
    let m = sum / mask.area() as f64;
    Ok([m, m, m])
}

/// A pruned region with everything downstream stages consume.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacterCandidate {
    pub bbox: Rect,
    pub area: u32,
    pub stroke_mean: f64,
    /// Coefficient of variation of stroke width samples.
    pub stroke_var: f64,
    /// Mean angular difference of adjacent boundary gradients, radians.
    pub smoothness: f64,
    pub color: [f64; 3],
    pub aspect: f64,
}

/// Computes the full descriptor set for one ER node.
pub fn describe(
    tree: &ErTree,
    node_id: usize,
    gray: &GrayImage,
    color: Option<&RgbImage>,
) -> Result<CharacterCandidate> {
    let node = tree.node(node_id);
    let mask = RegionMask::from_pixels(tree.region_pixels(node_id), tree.width())?;
    let (stroke_mean, stroke_var) = stroke_width_stats(&mask)?;
    let smooth = smoothness(&mask, gray);
    let color_mean = match color {
        Some(c) => mean_color(&mask, c)?,
        None => mean_gray(&mask, gray)?,
    };
    Ok(CharacterCandidate {
        bbox: node.bbox,
        area: node.area,
        stroke_mean,
        stroke_var,
        smoothness: smooth,
        color: color_mean,
        aspect: node.bbox.aspect(),
    })
}
