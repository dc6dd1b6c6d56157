//! Graph learning: a masked graph auto-encoder and the app-level detector.

pub mod detector;
pub mod gae;
pub mod sparse;
mod tape;
