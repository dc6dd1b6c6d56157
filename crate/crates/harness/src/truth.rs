//! Ground-truth sidecars written next to every generated bundle.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use uedetect_core::app_ir::RenameMap;
use uedetect_learn::detector::Label;

pub const SIDECAR_FORMAT: &str = "truth/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub format: String,
    pub app_id: String,
    pub label: Option<Label>,
    /// Activities and fragments.
    pub nodes: BTreeSet<String>,
    pub edges: BTreeSet<(String, String)>,
    /// Planted edges whose start site lies beyond the analysis depth.
    pub over_depth: BTreeSet<(String, String)>,
    pub transition_sites: usize,
    /// Sorted widget types per owner.
    pub widgets: BTreeMap<String, Vec<String>>,
    /// Annotated imprint tokens per owner.
    pub tokens: BTreeMap<String, BTreeSet<String>>,
    /// Text that flows into URLs only at runtime.
    pub runtime_values: BTreeSet<String>,
}

impl GroundTruth {
    pub fn new(app_id: &str) -> Self {
        GroundTruth {
            format: SIDECAR_FORMAT.to_string(),
            app_id: app_id.to_string(),
            label: None,
            nodes: BTreeSet::new(),
            edges: BTreeSet::new(),
            over_depth: BTreeSet::new(),
            transition_sites: 0,
            widgets: BTreeMap::new(),
            tokens: BTreeMap::new(),
            runtime_values: BTreeSet::new(),
        }
    }

    pub fn token_count(&self) -> usize {
        self.tokens.values().map(BTreeSet::len).sum()
    }

    /// Edges the analysis is expected to find.
    pub fn reachable_edges(&self) -> BTreeSet<(String, String)> {
        self.edges.difference(&self.over_depth).cloned().collect()
    }

    /// The same truth with class names passed through `map`.
    pub fn renamed(&self, map: &RenameMap, app_id: &str) -> GroundTruth {
        let c = |s: &String| map.class(s).to_string();
        let pair = |(a, b): &(String, String)| (c(a), c(b));
        GroundTruth {
            format: self.format.clone(),
            app_id: app_id.to_string(),
            label: self.label,
            nodes: self.nodes.iter().map(c).collect(),
            edges: self.edges.iter().map(pair).collect(),
            over_depth: self.over_depth.iter().map(pair).collect(),
            transition_sites: self.transition_sites,
            widgets: self.widgets.iter().map(|(k, v)| (c(k), v.clone())).collect(),
            tokens: self.tokens.iter().map(|(k, v)| (c(k), v.clone())).collect(),
            runtime_values: self.runtime_values.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("truth serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let t: GroundTruth = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if t.format != SIDECAR_FORMAT {
            return Err(format!("unsupported sidecar format `{}`", t.format));
        }
        Ok(t)
    }
}
