//! Static analysis scored against ground-truth sidecars.

use crate::corpus::Entry;
use crate::metrics::Prf;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::time::Instant;
use uedetect_core::app_ir::parse_bundle;
use uedetect_core::scenegraph::{build_scene_graph_with, SceneOptions};
use uedetect_core::widgets::tokenize_url_text;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppStatic {
    pub id: String,
    /// Against the edges within the depth limit.
    pub transitions: Prf,
    /// Against every planted edge.
    pub transitions_all: Prf,
    /// Planted edges the analysis did not report.
    pub missed: Vec<(String, String)>,
    /// Whether `missed` equals the sidecar's over-depth set.
    pub misses_are_planted: bool,
    /// Over `(owner, token)` pairs.
    pub tokens: Prf,
    /// Reported tokens that only occur in runtime values.
    pub runtime_leaks: usize,
    pub seconds: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticReport {
    pub apps: Vec<AppStatic>,
    /// Micro-averaged over apps.
    pub transitions: Prf,
    pub transitions_all: Prf,
    pub tokens: Prf,
    pub runtime_leaks: usize,
    pub planted_misses: usize,
    pub max_seconds: f64,
    /// Apps that failed to parse, as `(id, reason)`.
    pub skipped: Vec<(String, String)>,
}

impl StaticReport {
    /// Scores without timings or class names, for comparing a corpus with
    /// its renamed twin.
    pub fn scores(&self) -> Vec<(String, Prf, Prf, Prf, usize, bool, usize)> {
        self.apps
            .iter()
            .map(|a| {
                (
                    a.id.clone(),
                    a.transitions,
                    a.transitions_all,
                    a.tokens,
                    a.missed.len(),
                    a.misses_are_planted,
                    a.runtime_leaks,
                )
            })
            .collect()
    }
}

fn owner_pairs<'a>(
    map: impl Iterator<Item = (&'a String, &'a BTreeSet<String>)>,
) -> BTreeSet<(String, String)> {
    map.flat_map(|(owner, tokens)| tokens.iter().map(move |t| (owner.clone(), t.clone())))
        .collect()
}

pub fn eval_app(entry: &Entry, opts: &SceneOptions) -> Result<AppStatic, String> {
    let t = Instant::now();
    let bundle = parse_bundle(&entry.source).map_err(|e| e.to_string())?;
    let sg = build_scene_graph_with(&bundle, &entry.id, opts);
    let seconds = t.elapsed().as_secs_f64();

    let truth = &entry.truth;
    let found = sg.atg.edge_set();
    let missed: Vec<(String, String)> = truth.edges.difference(&found).cloned().collect();
    let misses_are_planted = missed.iter().cloned().collect::<BTreeSet<_>>() == truth.over_depth;

    let found_tokens = owner_pairs(sg.attributes.iter().map(|(o, a)| (o, &a.imprint_tokens)));
    let expected_tokens = owner_pairs(truth.tokens.iter());
    let constant: BTreeSet<&str> = truth.tokens.values().flatten().map(String::as_str).collect();
    let runtime: BTreeSet<&str> = truth
        .runtime_values
        .iter()
        .flat_map(|v| tokenize_url_text(v))
        .filter(|t| !constant.contains(t))
        .collect();
    let runtime_leaks = found_tokens.iter().filter(|(_, t)| runtime.contains(t.as_str())).count();

    Ok(AppStatic {
        id: entry.id.clone(),
        transitions: Prf::of_sets(&found, &truth.reachable_edges()),
        transitions_all: Prf::of_sets(&found, &truth.edges),
        missed,
        misses_are_planted,
        tokens: Prf::of_sets(&found_tokens, &expected_tokens),
        runtime_leaks,
        seconds,
        warnings: sg.warnings,
    })
}

/// Scores every entry; unparseable bundles are skipped and listed.
pub fn eval_static(entries: &[Entry], opts: &SceneOptions) -> StaticReport {
    let mut report = StaticReport {
        apps: Vec::new(),
        transitions: Prf::from_counts(0, 0, 0),
        transitions_all: Prf::from_counts(0, 0, 0),
        tokens: Prf::from_counts(0, 0, 0),
        runtime_leaks: 0,
        planted_misses: 0,
        max_seconds: 0.0,
        skipped: Vec::new(),
    };
    for e in entries {
        match eval_app(e, opts) {
            Ok(a) => {
                report.transitions.add(&a.transitions);
                report.transitions_all.add(&a.transitions_all);
                report.tokens.add(&a.tokens);
                report.runtime_leaks += a.runtime_leaks;
                report.planted_misses += e.truth.over_depth.len();
                report.max_seconds = report.max_seconds.max(a.seconds);
                report.apps.push(a);
            }
            Err(reason) => {
                log::warn!("skipping {}: {reason}", e.id);
                report.skipped.push((e.id.clone(), reason));
            }
        }
    }
    report
}
