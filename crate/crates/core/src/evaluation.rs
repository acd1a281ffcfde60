//! Rectangle matching and precision/recall/f scoring of detections against
//! ground truth (one-to-one best-overlap scheme).

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::Rect;

/// Overlap score `2 * |a ∩ b| / (|a| + |b|)` in `[0, 1]`.
pub fn match_score(a: &Rect, b: &Rect) -> f64 {
    let inter = a.intersection_area(b) as f64;
    2.0 * inter / (a.area() + b.area()) as f64
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EvalFlags {
    pub empty_groundtruth: bool,
    pub empty_detections: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EvalOutcome {
    pub recall: f64,
    pub precision: f64,
    pub f: f64,
    pub flags: EvalFlags,
}

fn f_measure(recall: f64, precision: f64) -> f64 {
    if recall * precision == 0.0 {
        0.0
    } else {
        2.0 * recall * precision / (recall + precision)
    }
}

/// Scores detections `det` against ground truth `gt`: each rectangle is
/// credited its best overlap on the other side, recall/precision are the
/// means, and f their harmonic mean. Empty sides score 1 and are flagged
/// instead of erroring, so batch runs survive blank images.
pub fn evaluate(gt: &[Rect], det: &[Rect]) -> EvalOutcome {
    let flags = EvalFlags {
        empty_groundtruth: gt.is_empty(),
        empty_detections: det.is_empty(),
    };
    let best = |r: &Rect, others: &[Rect]| -> f64 {
        others
            .iter()
            .map(|o| match_score(r, o))
            .fold(0.0, f64::max)
    };
    let recall = if gt.is_empty() {
        1.0
    } else {
        gt.iter().map(|g| best(g, det)).sum::<f64>() / gt.len() as f64
    };
    let precision = if det.is_empty() {
        1.0
    } else {
        det.iter().map(|d| best(d, gt)).sum::<f64>() / det.len() as f64
    };
    EvalOutcome {
        recall,
        precision,
        f: f_measure(recall, precision),
        flags,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Pool all rectangles across images before averaging.
    #[default]
    Micro,
    /// Average the per-image metrics.
    Macro,
}

/// Corpus-level score over per-image `(gt, det)` pairs.
pub fn aggregate(per_image: &[(Vec<Rect>, Vec<Rect>)], mode: Aggregation) -> EvalOutcome {
    match mode {
        Aggregation::Micro => {
            let mut gt_sum = 0.0;
            let mut gt_count = 0usize;
            let mut det_sum = 0.0;
            let mut det_count = 0usize;
            let mut flags = EvalFlags::default();
            for (gt, det) in per_image {
                flags.empty_groundtruth |= gt.is_empty();
                flags.empty_detections |= det.is_empty();
                for g in gt {
                    gt_sum += det.iter().map(|d| match_score(g, d)).fold(0.0, f64::max);
                    gt_count += 1;
                }
                for d in det {
                    det_sum += gt.iter().map(|g| match_score(d, g)).fold(0.0, f64::max);
                    det_count += 1;
                }
            }
            let recall = if gt_count == 0 { 1.0 } else { gt_sum / gt_count as f64 };
            let precision = if det_count == 0 {
                1.0
            } else {
                det_sum / det_count as f64
            };
            EvalOutcome {
                recall,
                precision,
                f: f_measure(recall, precision),
                flags,
            }
        }
        Aggregation::Macro => {
            let outcomes: Vec<EvalOutcome> =
                per_image.iter().map(|(g, d)| evaluate(g, d)).collect();
            let n = outcomes.len().max(1) as f64;
            let recall = outcomes.iter().map(|o| o.recall).sum::<f64>() / n;
            let precision = outcomes.iter().map(|o| o.precision).sum::<f64>() / n;
            let flags = EvalFlags {
                empty_groundtruth: outcomes.iter().any(|o| o.flags.empty_groundtruth),
                empty_detections: outcomes.iter().any(|o| o.flags.empty_detections),
            };
            EvalOutcome {
                recall,
                precision,
                f: f_measure(recall, precision),
                flags,
            }
        }
    }
}

/// Reads a rectangle file: one `x,y,w,h[,text]` per line, UTF-8, LF.
/// Blank lines and `#` comments are skipped.
pub fn read_rect_file(path: &Path) -> Result<Vec<Rect>> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rects = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.splitn(5, ',').collect();
        if parts.len() < 4 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                reason: "expected x,y,w,h[,text]".into(),
            });
        }
        let mut vals = [0u32; 4];
        for (i, p) in parts[..4].iter().enumerate() {
            vals[i] = p.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                reason: format!("bad integer field {:?}", p),
            })?;
        }
        if vals[2] == 0 || vals[3] == 0 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                reason: "rectangle width and height must be >= 1".into(),
            });
        }
        rects.push(Rect::new(vals[0], vals[1], vals[2], vals[3]));
    }
    Ok(rects)
}

pub fn write_rect_file(path: &Path, rects: &[Rect]) -> Result<()> {
    let mut out = Vec::new();
    for r in rects {
        writeln!(out, "{},{},{},{}", r.x, r.y, r.w, r.h).expect("vec write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
