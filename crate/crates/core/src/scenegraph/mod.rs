//! Scene graphs: the ATG with UI attributes on every node.

mod features;
mod io;

pub use features::{encode_features, hash_bucket, FeatureConfig, FeatureConfigError, FeatureMatrix, STRUCTURAL_FIELDS};
pub use io::{deserialize, serialize, FormatError, FORMAT_VERSION};

use crate::atg::{build_atg_with_depth, Atg, NodeKind};
use crate::callgraph::{build_call_graph_with, ImplicitPairTable};
use crate::widgets::{generate_imprints, identify_native_widgets, Stoplist, UiAttributes};
use crate::app_ir::AppBundle;
use crate::DEFAULT_MAX_DEPTH;
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneGraph {
    pub app_id: String,
    pub atg: Atg,
    /// Keyed by every node of `atg`.
    pub attributes: BTreeMap<String, UiAttributes>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SceneOptions {
    pub max_depth: usize,
    pub stoplist: Stoplist,
    pub implicit_pairs: ImplicitPairTable,
}

impl Default for SceneOptions {
    fn default() -> Self {
        SceneOptions {
            max_depth: DEFAULT_MAX_DEPTH,
            stoplist: Stoplist::default(),
            implicit_pairs: ImplicitPairTable::default(),
        }
    }
}

/// Scene graph identified by the bundle's package name.
pub fn build_scene_graph(bundle: &AppBundle) -> SceneGraph {
    build_scene_graph_with(bundle, &bundle.manifest.package_name, &SceneOptions::default())
}

pub fn build_scene_graph_with(bundle: &AppBundle, app_id: &str, opts: &SceneOptions) -> SceneGraph {
    let cg = build_call_graph_with(bundle, &opts.implicit_pairs);
    let (mut attributes, widget_warnings) = identify_native_widgets(bundle, &cg, opts.max_depth);
    let imprints = generate_imprints(bundle, &cg, &opts.stoplist, opts.max_depth);
    let atg = build_atg_with_depth(bundle, &cg, opts.max_depth);

    let web_owners = imprints.webview_owners();
    for (owner, tokens) in &imprints.by_owner {
        let attrs = attributes
            .entry(owner.clone())
            .or_insert_with(|| UiAttributes::empty(owner.clone()));
        attrs.imprint_tokens.extend(tokens.iter().cloned());
    }
    for (owner, attrs) in attributes.iter_mut() {
        attrs.has_webview |= web_owners.contains(owner.as_str());
    }
    attributes.retain(|k, _| atg.nodes.contains_key(k));
    for n in atg.nodes.keys() {
        attributes
            .entry(n.clone())
            .or_insert_with(|| UiAttributes::empty(n.clone()));
    }

    let mut warnings: Vec<String> = cg
        .warnings
        .iter()
        .map(|w| format!("unresolved call {} -> {}", w.caller, w.target))
        .collect();
    warnings.extend(widget_warnings.iter().map(ToString::to_string));
    for site in &imprints.sites {
        if site.result.depth_exhausted {
            warnings.push(format!("taint depth exhausted at {}", site.result.sink));
        }
    }
    SceneGraph {
        app_id: app_id.to_string(),
        atg,
        attributes,
        warnings,
    }
}

/// Per-app aggregates used for corpus statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SceneStats {
    pub nodes: usize,
    pub activities: usize,
    pub fragments: usize,
    pub transition_pairs: usize,
    pub widgets: usize,
    pub listeners: usize,
    pub tokens: usize,
    pub webview_nodes: usize,
}

impl SceneGraph {
    pub fn node_ids(&self) -> Vec<&str> {
        self.atg.nodes.keys().map(String::as_str).collect()
    }

    pub fn in_degree(&self, node: &str) -> usize {
        self.atg.edges.keys().filter(|(_, b)| b == node).count()
    }

    pub fn out_degree(&self, node: &str) -> usize {
        self.atg.edges.keys().filter(|(a, _)| a == node).count()
    }

    pub fn stats(&self) -> SceneStats {
        let count_kind = |k| self.atg.nodes.values().filter(|&&v| v == k).count();
        SceneStats {
            nodes: self.atg.nodes.len(),
            activities: count_kind(NodeKind::Activity),
            fragments: count_kind(NodeKind::Fragment),
            transition_pairs: self.atg.edge_count(),
            widgets: self.attributes.values().map(|a| a.native_widgets.len()).sum(),
            listeners: self.attributes.values().map(UiAttributes::listener_count).sum(),
            tokens: self.attributes.values().map(|a| a.imprint_tokens.len()).sum(),
            webview_nodes: self.attributes.values().filter(|a| a.has_webview).count(),
        }
    }
}
