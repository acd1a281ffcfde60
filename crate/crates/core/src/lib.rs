//! Scene text detection built on extremal-region component trees.
//!
//! The pipeline extracts character candidates as pruned MSERs from a
//! grayscale image, groups them into text candidates by single-link
//! clustering under a learned weighted distance, filters non-text with a
//! Bayesian vote rule over a boosted character classifier, and scores
//! detections against ground-truth rectangles.
//!
//! Stages map onto modules roughly in pipeline order:
//!
//! * [`raster`] - image buffers, grayscale conversion, loading
//! * [`component_tree`] - extremal-region tree, variation, MSER selection
//! * [`pruning`] - linear reduction and tree accumulation of the MSER tree
//! * [`descriptors`] - stroke width, boundary smoothness, mean color
//! * [`linking`] - pairwise features and single-link clustering
//! * [`metric`] - self-training distance metric learning
//! * [`boosting`] - AdaBoost over decision stumps
//! * [`filtering`] - character features, Bayesian elimination, words
//! * [`evaluation`] - rectangle matching and precision/recall/f
//! * [`pipeline`] - end-to-end detection and batch running
//! * [`fixtures`] - synthetic corpus generator with ground truth
//!
//! Batch work is data-parallel via rayon when the `parallel` feature is
//! enabled (the default); disabling it falls back to sequential loops with
//! identical results.

pub mod boosting;
pub mod component_tree;
pub mod datafiles;
pub mod descriptors;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod filtering;
pub mod fixtures;
pub mod geom;
pub mod linking;
pub mod metric;
pub mod models;
pub mod optim;
pub mod pipeline;
pub mod pruning;
pub mod raster;
pub mod training;

pub use error::{Error, Result};
