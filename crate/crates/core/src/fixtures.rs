//! Synthetic corpus generator. (placeholder)
