//! End-to-end detection pipeline. (placeholder)
