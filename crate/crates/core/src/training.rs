//! Training entry points. (placeholder)
