//! Text formats for training data: labeled cluster files and generic
//! feature/label sample files.

use std::fmt::Write as _;
use std::path::Path;

use crate::descriptors::CharacterCandidate;
use crate::error::{Error, Result};
use crate::geom::Rect;
use crate::metric::{LabeledClusterSet, LabeledImage};

const CLUSTERS_HEADER: &str = "scenetext-data clusters v1";
const SAMPLES_HEADER: &str = "scenetext-data samples v1";

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Writes a labeled cluster set. Per image, one `candidate` line per
/// character candidate: cluster id (`_` for unlabeled outsiders) followed
/// by the descriptor fields.
pub fn write_clusters(path: &Path, data: &LabeledClusterSet, names: &[String]) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{CLUSTERS_HEADER}");
    let _ = writeln!(
        out,
        "# candidate <cluster|_> x y w h area stroke_mean stroke_var smoothness c1 c2 c3"
    );
    for (i, image) in data.images.iter().enumerate() {
        let name = names.get(i).cloned().unwrap_or_else(|| format!("image_{i:03}"));
        let _ = writeln!(out, "image {name}");
        let mut cluster_of = vec![None; image.candidates.len()];
        for (k, cluster) in image.clusters.iter().enumerate() {
            for &m in cluster {
                cluster_of[m] = Some(k);
            }
        }
        for (ci, c) in image.candidates.iter().enumerate() {
            let label = match cluster_of[ci] {
                Some(k) => k.to_string(),
                None => "_".to_string(),
            };
            let _ = writeln!(
                out,
                "candidate {label} {} {} {} {} {} {} {} {} {} {} {}",
                c.bbox.x,
                c.bbox.y,
                c.bbox.w,
                c.bbox.h,
                c.area,
                fmt_f64(c.stroke_mean),
                fmt_f64(c.stroke_var),
                fmt_f64(c.smoothness),
                fmt_f64(c.color[0]),
                fmt_f64(c.color[1]),
                fmt_f64(c.color[2]),
            );
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_clusters(path: &Path) -> Result<LabeledClusterSet> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = content.lines().enumerate();
    let parse_err = |lineno: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line: lineno + 1,
        reason,
    };
    match lines.next() {
        Some((_, l)) if l.trim() == CLUSTERS_HEADER => {}
        _ => {
            return Err(Error::model(
                path,
                format!("expected header {CLUSTERS_HEADER:?}"),
            ))
        }
    }
    let mut images: Vec<LabeledImage> = Vec::new();
    let mut labels: Vec<Vec<Option<usize>>> = Vec::new();
    for (lineno, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("image") => {
                images.push(LabeledImage {
                    candidates: Vec::new(),
                    clusters: Vec::new(),
                });
                labels.push(Vec::new());
            }
            Some("candidate") => {
                let image = images
                    .last_mut()
                    .ok_or_else(|| parse_err(lineno, "candidate before any image".into()))?;
                let fields: Vec<&str> = parts.collect();
                if fields.len() != 12 {
                    return Err(parse_err(
                        lineno,
                        format!("expected 12 fields after 'candidate', found {}", fields.len()),
                    ));
                }
                let cluster = match fields[0] {
                    "_" => None,
                    s => Some(
                        s.parse::<usize>()
                            .map_err(|_| parse_err(lineno, format!("bad cluster id {s:?}")))?,
                    ),
                };
                let int = |s: &str| -> Result<u32> {
                    s.parse()
                        .map_err(|_| parse_err(lineno, format!("bad integer {s:?}")))
                };
                let flt = |s: &str| -> Result<f64> {
                    s.parse()
                        .map_err(|_| parse_err(lineno, format!("bad float {s:?}")))
                };
                let bbox = Rect::new(int(fields[1])?, int(fields[2])?, int(fields[3])?, int(fields[4])?);
                if bbox.w == 0 || bbox.h == 0 {
                    return Err(parse_err(lineno, "candidate box must be nonempty".into()));
                }
                image.candidates.push(CharacterCandidate {
                    bbox,
                    area: int(fields[5])?,
                    stroke_mean: flt(fields[6])?,
                    stroke_var: flt(fields[7])?,
                    smoothness: flt(fields[8])?,
                    color: [flt(fields[9])?, flt(fields[10])?, flt(fields[11])?],
                    aspect: bbox.aspect(),
                });
                labels.last_mut().unwrap().push(cluster);
            }
            Some(other) => {
                return Err(parse_err(lineno, format!("unknown record {other:?}")));
            }
            None => unreachable!(),
        }
    }
    for (image, labels) in images.iter_mut().zip(&labels) {
        let max_cluster = labels.iter().flatten().copied().max();
        if let Some(max) = max_cluster {
            image.clusters = vec![Vec::new(); max + 1];
            for (ci, l) in labels.iter().enumerate() {
                if let Some(k) = l {
                    image.clusters[*k].push(ci);
                }
            }
            image.clusters.retain(|c| !c.is_empty());
        }
    }
    Ok(LabeledClusterSet { images })
}

/// Writes a feature/label sample file: `sample <+1|-1> f0 f1 ...`.
pub fn write_samples(path: &Path, samples: &[Vec<f64>], labels: &[i32]) -> Result<()> {
    assert_eq!(samples.len(), labels.len());
    let dim = samples.first().map_or(0, |s| s.len());
    let mut out = String::new();
    let _ = writeln!(out, "{SAMPLES_HEADER}");
    let _ = writeln!(out, "features {dim}");
    for (s, l) in samples.iter().zip(labels) {
        let vals: Vec<String> = s.iter().map(|&v| fmt_f64(v)).collect();
        let _ = writeln!(out, "sample {l} {}", vals.join(" "));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_samples(path: &Path) -> Result<(Vec<Vec<f64>>, Vec<i32>)> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = content.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == SAMPLES_HEADER => {}
        _ => {
            return Err(Error::model(
                path,
                format!("expected header {SAMPLES_HEADER:?}"),
            ))
        }
    }
    let mut dim: Option<usize> = None;
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for (lineno, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            reason,
        };
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("features") => {
                let d = parts
                    .next()
                    .ok_or_else(|| parse_err("missing dimension".into()))?;
                dim = Some(
                    d.parse()
                        .map_err(|_| parse_err(format!("bad dimension {d:?}")))?,
                );
            }
            Some("sample") => {
                let l = parts
                    .next()
                    .ok_or_else(|| parse_err("missing label".into()))?;
                let label: i32 = l
                    .parse()
                    .map_err(|_| parse_err(format!("bad label {l:?}")))?;
                if label != 1 && label != -1 {
                    return Err(parse_err(format!("label must be +1 or -1, got {label}")));
                }
                let feats: Vec<f64> = parts
                    .map(|s| {
                        s.parse()
                            .map_err(|_| parse_err(format!("bad float {s:?}")))
                    })
                    .collect::<Result<_>>()?;
                if let Some(d) = dim {
                    if feats.len() != d {
                        return Err(parse_err(format!(
                            "expected {d} features, found {}",
                            feats.len()
                        )));
                    }
                }
                samples.push(feats);
                labels.push(label);
            }
            Some(other) => return Err(parse_err(format!("unknown record {other:?}"))),
            None => unreachable!(),
        }
    }
    Ok((samples, labels))
}
