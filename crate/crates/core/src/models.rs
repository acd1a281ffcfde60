//! Versioned text model files.
//!
//! Every file starts with `scenetext-model <kind> v1`; the feature-order
//! contract is written as comment lines. Floats are serialized with Rust's
//! shortest round-trip formatting, so a load reproduces scores
//! bit-identically.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::boosting::{Stump, StumpEnsemble};
use crate::error::{Error, Result};
use crate::filtering::{
    SizePriorTable, CHARACTER_FEATURE_NAMES, SPACING_FEATURE_NAMES, TEXT_FEATURE_NAMES,
};
use crate::linking::{MetricParams, PAIR_FEATURE_COUNT, PAIR_FEATURE_NAMES};

const MAGIC: &str = "scenetext-model";
const VERSION: &str = "v1";

pub const METRIC_FILE: &str = "metric.model";
pub const CHAR_FILE: &str = "char.model";
pub const TEXT_FILE: &str = "text.model";
pub const SPACING_FILE: &str = "spacing.model";
pub const PRIORS_FILE: &str = "priors.model";

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    path: &'a Path,
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn open(path: &'a Path, content: &'a str, kind: &str) -> Result<Self> {
        let lines: Vec<&str> = content
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect();
        let mut r = Reader { path, lines, pos: 0 };
        let header = r.next_line()?;
        let expected = format!("{MAGIC} {kind} {VERSION}");
        if header != expected {
            return Err(Error::model(
                path,
                format!("expected header {expected:?}, found {header:?}"),
            ));
        }
        Ok(r)
    }

    fn next_line(&mut self) -> Result<&'a str> {
        let line = self
            .lines
            .get(self.pos)
            .ok_or_else(|| Error::model(self.path, "truncated file"))?;
        self.pos += 1;
        Ok(line)
    }

    fn next_field(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let line = self.next_line()?;
        let mut parts = line.split_whitespace();
        let head = parts.next().unwrap_or("");
        if head != key {
            return Err(Error::model(
                self.path,
                format!("expected field {key:?}, found {head:?}"),
            ));
        }
        Ok(parts.collect())
    }

    fn parse_f64(&self, s: &str) -> Result<f64> {
        s.parse()
            .map_err(|_| Error::model(self.path, format!("bad float {s:?}")))
    }

    fn parse_usize(&self, s: &str) -> Result<usize> {
        s.parse()
            .map_err(|_| Error::model(self.path, format!("bad integer {s:?}")))
    }
}

pub fn save_metric(path: &Path, params: &MetricParams) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} metric {VERSION}");
    let _ = writeln!(
        out,
        "# weight order: {}",
        PAIR_FEATURE_NAMES.join(" ")
    );
    let weights: Vec<String> = params.weights.iter().map(|&w| fmt_f64(w)).collect();
    let _ = writeln!(out, "weights {}", weights.join(" "));
    let _ = writeln!(out, "threshold {}", fmt_f64(params.link_threshold));
    write_file(path, &out)
}

pub fn load_metric(path: &Path) -> Result<MetricParams> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::open(path, &content, "metric")?;
    let fields = r.next_field("weights")?;
    if fields.len() != PAIR_FEATURE_COUNT {
        return Err(Error::model(
            path,
            format!("expected {PAIR_FEATURE_COUNT} weights, found {}", fields.len()),
        ));
    }
    let mut weights = [0.0; PAIR_FEATURE_COUNT];
    for (i, f) in fields.iter().enumerate() {
        weights[i] = r.parse_f64(f)?;
    }
    let t = r.next_field("threshold")?;
    if t.len() != 1 {
        return Err(Error::model(path, "threshold takes one value"));
    }
    let link_threshold = r.parse_f64(t[0])?;
    Ok(MetricParams {
        weights,
        link_threshold,
    })
}

fn feature_contract(kind: &str) -> &'static [&'static str] {
    match kind {
        "char" => &CHARACTER_FEATURE_NAMES,
        "text" => &TEXT_FEATURE_NAMES,
        "spacing" => &SPACING_FEATURE_NAMES,
        _ => &[],
    }
}

pub fn save_ensemble(path: &Path, kind: &str, ensemble: &StumpEnsemble) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} stump-ensemble {VERSION}");
    let contract = feature_contract(kind);
    if !contract.is_empty() {
        let _ = writeln!(out, "# feature order: {}", contract.join(" "));
    }
    let _ = writeln!(out, "kind {kind}");
    match ensemble.validation_precision {
        Some(p) => {
            let _ = writeln!(out, "precision {}", fmt_f64(p));
        }
        None => {
            let _ = writeln!(out, "precision none");
        }
    }
    let _ = writeln!(out, "rounds {}", ensemble.rounds);
    let _ = writeln!(out, "stumps {}", ensemble.stumps.len());
    for s in &ensemble.stumps {
        let _ = writeln!(
            out,
            "stump {} {} {} {}",
            s.feature,
            fmt_f64(s.threshold),
            s.polarity,
            fmt_f64(s.alpha)
        );
    }
    write_file(path, &out)
}

pub fn load_ensemble(path: &Path, expected_kind: &str) -> Result<StumpEnsemble> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::open(path, &content, "stump-ensemble")?;
    let kind = r.next_field("kind")?;
    if kind != vec![expected_kind] {
        return Err(Error::model(
            path,
            format!("expected kind {expected_kind:?}, found {kind:?}"),
        ));
    }
    let prec = r.next_field("precision")?;
    let validation_precision = match prec.as_slice() {
        ["none"] => None,
        [v] => Some(r.parse_f64(v)?),
        _ => return Err(Error::model(path, "precision takes one value")),
    };
    let rounds_field = r.next_field("rounds")?;
    let rounds = r.parse_usize(rounds_field[0])?;
    let count_field = r.next_field("stumps")?;
    let count = r.parse_usize(count_field[0])?;
    let mut stumps = Vec::with_capacity(count);
    for _ in 0..count {
        let f = r.next_field("stump")?;
        if f.len() != 4 {
            return Err(Error::model(path, "stump takes 4 values"));
        }
        stumps.push(Stump {
            feature: r.parse_usize(f[0])?,
            threshold: r.parse_f64(f[1])?,
            polarity: f[2]
                .parse()
                .map_err(|_| Error::model(path, format!("bad polarity {:?}", f[2])))?,
            alpha: r.parse_f64(f[3])?,
        });
    }
    Ok(StumpEnsemble {
        stumps,
        rounds,
        validation_precision,
    })
}

pub fn save_priors(path: &Path, priors: &SizePriorTable) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} size-priors {VERSION}");
    let _ = writeln!(out, "# size <member count> <total> <true text>");
    let _ = writeln!(out, "fallback {}", fmt_f64(priors.fallback));
    let _ = writeln!(out, "sizes {}", priors.counts.len());
    for (&size, &(total, text)) in &priors.counts {
        let _ = writeln!(out, "size {size} {total} {text}");
    }
    write_file(path, &out)
}

pub fn load_priors(path: &Path) -> Result<SizePriorTable> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::open(path, &content, "size-priors")?;
    let fallback_field = r.next_field("fallback")?;
    let fallback = r.parse_f64(fallback_field[0])?;
    let count_field = r.next_field("sizes")?;
    let count = r.parse_usize(count_field[0])?;
    let mut counts = std::collections::BTreeMap::new();
    for _ in 0..count {
        let f = r.next_field("size")?;
        if f.len() != 3 {
            return Err(Error::model(path, "size takes 3 values"));
        }
        let size = r.parse_usize(f[0])?;
        let total: u64 = f[1]
            .parse()
            .map_err(|_| Error::model(path, format!("bad count {:?}", f[1])))?;
        let text: u64 = f[2]
            .parse()
            .map_err(|_| Error::model(path, format!("bad count {:?}", f[2])))?;
        counts.insert(size, (total, text));
    }
    Ok(SizePriorTable { counts, fallback })
}

/// All models the detection pipeline consumes.
#[derive(Debug, Clone)]
pub struct ModelSet {
    pub metric: MetricParams,
    pub char_clf: StumpEnsemble,
    pub text_clf: StumpEnsemble,
    pub spacing_clf: Option<StumpEnsemble>,
    pub priors: SizePriorTable,
}

impl ModelSet {
    /// Loads metric, character, text and priors models from a directory;
    /// the spacing model is optional (only word partitioning needs it).
    pub fn load(dir: &Path) -> Result<ModelSet> {
        let metric = load_metric(&dir.join(METRIC_FILE))?;
        let char_clf = load_ensemble(&dir.join(CHAR_FILE), "char")?;
        if char_clf.validation_precision.is_none() {
            return Err(Error::model(
                dir.join(CHAR_FILE),
                "character model carries no measured precision",
            ));
        }
        let text_clf = load_ensemble(&dir.join(TEXT_FILE), "text")?;
        let spacing_path = dir.join(SPACING_FILE);
        let spacing_clf = if spacing_path.exists() {
            Some(load_ensemble(&spacing_path, "spacing")?)
        } else {
            None
        };
        let priors = load_priors(&dir.join(PRIORS_FILE))?;
        Ok(ModelSet {
            metric,
            char_clf,
            text_clf,
            spacing_clf,
            priors,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_metric(&dir.join(METRIC_FILE), &self.metric)?;
        save_ensemble(&dir.join(CHAR_FILE), "char", &self.char_clf)?;
        save_ensemble(&dir.join(TEXT_FILE), "text", &self.text_clf)?;
        if let Some(sp) = &self.spacing_clf {
            save_ensemble(&dir.join(SPACING_FILE), "spacing", sp)?;
        }
        save_priors(&dir.join(PRIORS_FILE), &self.priors)
    }

    pub fn default_dir() -> PathBuf {
        PathBuf::from("models")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(METRIC_FILE);
        let params = MetricParams {
            weights: [0.1, 1.0 / 3.0, 2.5e-17, 7.0, 0.0, 123.456, 1e300],
            link_threshold: std::f64::consts::PI,
        };
        save_metric(&path, &params).unwrap();
        let loaded = load_metric(&path).unwrap();
        assert_eq!(loaded, params);
    }

    #[test]
    fn ensemble_round_trip_scores_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(CHAR_FILE);
        let ensemble = StumpEnsemble {
            stumps: (0..40)
                .map(|i| Stump {
                    feature: i % 6,
                    threshold: (i as f64) * 0.371 - 3.0,
                    polarity: if i % 3 == 0 { -1 } else { 1 },
                    alpha: 1.0 / (i as f64 + 1.5),
                })
                .collect(),
            rounds: 40,
            validation_precision: Some(0.87654321),
        };
        save_ensemble(&path, "char", &ensemble).unwrap();
        let loaded = load_ensemble(&path, "char").unwrap();
        assert_eq!(loaded, ensemble);
        // Bit-identical scores on probes.
        for k in 0..100 {
            let x: Vec<f64> = (0..6).map(|j| ((k * 7 + j) as f64) * 0.173 - 4.0).collect();
            assert_eq!(loaded.score(&x).to_bits(), ensemble.score(&x).to_bits());
        }
    }

    #[test]
    fn wrong_kind_and_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.model");
        let e = StumpEnsemble::default();
        save_ensemble(&path, "char", &e).unwrap();
        assert!(load_ensemble(&path, "text").is_err());

        std::fs::write(&path, "scenetext-model stump-ensemble v9\nkind char\n").unwrap();
        let err = load_ensemble(&path, "char").unwrap_err();
        assert!(err.to_string().contains("header"));
    }

    #[test]
    fn truncated_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.model");
        std::fs::write(
            &path,
            "scenetext-model stump-ensemble v1\nkind char\nprecision none\nrounds 5\nstumps 3\nstump 0 1.0 1 0.5\n",
        )
        .unwrap();
        let err = load_ensemble(&path, "char").unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn priors_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(PRIORS_FILE);
        let table = crate::filtering::estimate_size_priors(&[
            (2, false),
            (2, true),
            (3, true),
            (9, false),
        ])
        .unwrap();
        save_priors(&path, &table).unwrap();
        assert_eq!(load_priors(&path).unwrap(), table);
    }
}
