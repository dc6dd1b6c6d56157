//! `sg/1` JSON: nodes sorted by id, edges sorted by endpoints.

use super::SceneGraph;
use crate::atg::{Atg, NodeKind, TransitionUnit};
use crate::widgets::UiAttributes;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub const FORMAT_VERSION: &str = "sg/1";

#[derive(Debug, Error, PartialEq, Eq)]
#[error("malformed scene graph at `{path}`: {message}")]
pub struct FormatError {
    pub path: String,
    pub message: String,
}

impl FormatError {
    fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        FormatError {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SgFile {
    format: String,
    app_id: String,
    nodes: Vec<SgNode>,
    edges: Vec<SgEdge>,
    units: Vec<TransitionUnit>,
    #[serde(default)]
    warnings: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SgNode {
    id: String,
    kind: NodeKind,
    attributes: UiAttributes,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SgEdge {
    from: String,
    to: String,
    /// Indices into `units`.
    units: BTreeSet<usize>,
}

pub fn serialize(sg: &SceneGraph) -> String {
    let file = SgFile {
        format: FORMAT_VERSION.to_string(),
        app_id: sg.app_id.clone(),
        nodes: sg
            .atg
            .nodes
            .iter()
            .map(|(id, &kind)| SgNode {
                id: id.clone(),
                kind,
                attributes: sg
                    .attributes
                    .get(id)
                    .cloned()
                    .unwrap_or_else(|| UiAttributes::empty(id.clone())),
            })
            .collect(),
        edges: sg
            .atg
            .edges
            .iter()
            .map(|((from, to), units)| SgEdge {
                from: from.clone(),
                to: to.clone(),
                units: units.clone(),
            })
            .collect(),
        units: sg.atg.units.clone(),
        warnings: sg.warnings.clone(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("scene graph DTO is serializable");
    text.push('\n');
    text
}

pub fn deserialize(text: &str) -> Result<SceneGraph, FormatError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: SgFile = serde_path_to_error::deserialize(de)
        .map_err(|e| FormatError::at(e.path().to_string(), e.inner().to_string()))?;
    if file.format != FORMAT_VERSION {
        return Err(FormatError::at(
            "format",
            format!("expected `{FORMAT_VERSION}`, found `{}`", file.format),
        ));
    }
    let mut atg = Atg {
        units: file.units,
        ..Atg::default()
    };
    let mut attributes = BTreeMap::new();
    for (i, n) in file.nodes.into_iter().enumerate() {
        if n.attributes.owner != n.id {
            return Err(FormatError::at(
                format!("nodes[{i}].attributes.owner"),
                format!("owner `{}` differs from node id `{}`", n.attributes.owner, n.id),
            ));
        }
        if atg.nodes.insert(n.id.clone(), n.kind).is_some() {
            return Err(FormatError::at(format!("nodes[{i}].id"), format!("duplicate node `{}`", n.id)));
        }
        attributes.insert(n.id, n.attributes);
    }
    for (i, e) in file.edges.into_iter().enumerate() {
        for (field, end) in [("from", &e.from), ("to", &e.to)] {
            if !atg.nodes.contains_key(end) {
                return Err(FormatError::at(format!("edges[{i}].{field}"), format!("unknown node `{end}`")));
            }
        }
        if let Some(&u) = e.units.iter().find(|&&u| u >= atg.units.len()) {
            return Err(FormatError::at(format!("edges[{i}].units"), format!("unit index {u} out of range")));
        }
        if atg.edges.insert((e.from, e.to), e.units).is_some() {
            return Err(FormatError::at(format!("edges[{i}]"), "duplicate edge"));
        }
    }
    Ok(SceneGraph {
        app_id: file.app_id,
        atg,
        attributes,
        warnings: file.warnings,
    })
}
