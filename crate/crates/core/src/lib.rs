//! Static side of the detector: App-IR bundles in, attributed scene graphs
//! and their feature matrices out.

pub mod app_ir;
pub mod atg;
pub mod callgraph;
pub mod scenegraph;
pub mod widgets;

/// Default inter-procedural hop limit shared by taint, widget discovery and
/// transition attribution.
pub const DEFAULT_MAX_DEPTH: usize = 10;
