//! Hashed node features.
//!
//! Row layout: `[widget types | listener kinds | imprint tokens | structure]`.
//! Identifiers never enter a row, so renaming classes or widget ids only
//! permutes rows.

use super::SceneGraph;
use crate::atg::NodeKind;
use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::hash::Hasher;
use thiserror::Error;

/// Structural slot names, in order. Remaining slots stay zero.
pub const STRUCTURAL_FIELDS: [&str; 8] = [
    "in_degree",
    "out_degree",
    "widget_count",
    "layout_depth",
    "is_fragment",
    "has_webview",
    "token_count",
    "listener_count",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureConfigError {
    #[error("bucket count `{0}` must be positive")]
    EmptyBuckets(&'static str),
    #[error("structural_slots must be at least {min}, got {got}")]
    TooFewStructuralSlots { min: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    pub widget_buckets: usize,
    pub listener_buckets: usize,
    pub token_buckets: usize,
    pub structural_slots: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            widget_buckets: 64,
            listener_buckets: 16,
            token_buckets: 64,
            structural_slots: 16,
        }
    }
}

impl FeatureConfig {
    pub fn dim(&self) -> usize {
        self.widget_buckets + self.listener_buckets + self.token_buckets + self.structural_slots
    }

    pub fn validate(&self) -> Result<(), FeatureConfigError> {
        for (name, n) in [
            ("widget_buckets", self.widget_buckets),
            ("listener_buckets", self.listener_buckets),
            ("token_buckets", self.token_buckets),
        ] {
            if n == 0 {
                return Err(FeatureConfigError::EmptyBuckets(name));
            }
        }
        if self.structural_slots < STRUCTURAL_FIELDS.len() {
            return Err(FeatureConfigError::TooFewStructuralSlots {
                min: STRUCTURAL_FIELDS.len(),
                got: self.structural_slots,
            });
        }
        Ok(())
    }

    pub fn listener_offset(&self) -> usize {
        self.widget_buckets
    }

    pub fn token_offset(&self) -> usize {
        self.widget_buckets + self.listener_buckets
    }

    pub fn structural_offset(&self) -> usize {
        self.token_offset() + self.token_buckets
    }
}

/// FNV-1a 64 of the UTF-8 bytes, reduced modulo `buckets`.
pub fn hash_bucket(key: &str, buckets: usize) -> usize {
    let mut h = FnvHasher::default();
    h.write(key.as_bytes());
    (h.finish() % buckets as u64) as usize
}

/// Dense row-major `rows x dim` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub node_order: Vec<String>,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.node_order.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_of(&self, node: &str) -> Option<&[f64]> {
        let i = self.node_order.iter().position(|n| n == node)?;
        Some(self.row(i))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("node");
        for j in 0..self.dim {
            let _ = write!(out, ",f{j}");
        }
        out.push('\n');
        for (i, n) in self.node_order.iter().enumerate() {
            out.push_str(n);
            for v in self.row(i) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

fn scaled(count: usize) -> f64 {
    (count as f64).ln_1p()
}

/// Panics if `cfg` fails [`FeatureConfig::validate`].
pub fn encode_features(sg: &SceneGraph, cfg: &FeatureConfig) -> FeatureMatrix {
    if let Err(e) = cfg.validate() {
        panic!("invalid feature config: {e}");
    }
    let d = cfg.dim();
    let node_order: Vec<String> = sg.atg.nodes.keys().cloned().collect();
    let mut values = vec![0.0; node_order.len() * d];
    for (i, node) in node_order.iter().enumerate() {
        let row = &mut values[i * d..(i + 1) * d];
        let mut widget_counts = vec![0usize; cfg.widget_buckets];
        let mut listener_counts = vec![0usize; cfg.listener_buckets];
        let mut token_counts = vec![0usize; cfg.token_buckets];
        let (mut widgets, mut listeners, mut tokens, mut depth, mut web) = (0, 0, 0, 0, false);
        if let Some(a) = sg.attributes.get(node) {
            for w in &a.native_widgets {
                widget_counts[hash_bucket(&w.widget_type, cfg.widget_buckets)] += 1;
                for l in &w.listeners {
                    listener_counts[hash_bucket(l.as_str(), cfg.listener_buckets)] += 1;
                }
            }
            for t in &a.imprint_tokens {
                token_counts[hash_bucket(t, cfg.token_buckets)] += 1;
            }
            widgets = a.native_widgets.len();
            listeners = a.listener_count();
            tokens = a.imprint_tokens.len();
            depth = a.layout_depth;
            web = a.has_webview;
        }
        let counts = widget_counts
            .iter()
            .chain(&listener_counts)
            .chain(&token_counts);
        for (slot, &c) in row.iter_mut().zip(counts) {
            *slot = scaled(c);
        }
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        let structure = [
            scaled(sg.in_degree(node)),
            scaled(sg.out_degree(node)),
            scaled(widgets),
            scaled(depth),
            flag(sg.atg.nodes[node] == NodeKind::Fragment),
            flag(web),
            scaled(tokens),
            scaled(listeners),
        ];
        let off = cfg.structural_offset();
        row[off..off + structure.len()].copy_from_slice(&structure);
    }
    FeatureMatrix {
        node_order,
        dim: d,
        values,
    }
}
