//! Activity Transition Graph construction.
//!
//! Transition units are located by API signature (`start_activity`,
//! `start_activity_for_result`, intents consumed by a start, `nav_navigate`,
//! navigation graph resources and `onKeyDown`-style overrides). Each unit
//! contributes `callers x callees` edges, where callers come from
//! [`resolve_callers`]: a fragment brings the activities hosting it, an inner
//! class hands over to its outer UI classes.

use crate::app_ir::{
    ApiCall, AppBundle, ClassKind, Instruction, MethodIR, MethodRef, StartTarget,
};
use crate::callgraph::{bfs_depths, CallGraph};
use crate::DEFAULT_MAX_DEPTH;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AtgError {
    #[error("unknown class `{0}`")]
    UnknownClass(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum UnitKind {
    ExplicitApi,
    ImplicitIcc,
    SystemListener,
    Navigation,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "at", rename_all = "snake_case")]
pub enum UnitLocation {
    Instruction {
        class: String,
        method: String,
        index: usize,
    },
    NavGraph {
        id: String,
        host: String,
    },
}

impl UnitLocation {
    /// The class whose callers own the transition.
    pub fn class(&self) -> &str {
        match self {
            UnitLocation::Instruction { class, .. } => class,
            UnitLocation::NavGraph { host, .. } => host,
        }
    }
}

impl fmt::Display for UnitLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnitLocation::Instruction {
                class,
                method,
                index,
            } => write!(f, "{class}.{method}#{index}"),
            UnitLocation::NavGraph { id, host } => write!(f, "nav:{id}@{host}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TransitionUnit {
    pub location: UnitLocation,
    pub kind: UnitKind,
    pub callees: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Activity,
    Fragment,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Atg {
    pub nodes: BTreeMap<String, NodeKind>,
    /// `(caller, callee)` to indices into `units`.
    pub edges: BTreeMap<(String, String), BTreeSet<usize>>,
    pub units: Vec<TransitionUnit>,
}

impl Atg {
    pub fn edge_set(&self) -> BTreeSet<(String, String)> {
        self.edges.keys().cloned().collect()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for ((a, b), prov) in &self.edges {
            let prov: Vec<String> = prov.iter().map(|&i| self.units[i].location.to_string()).collect();
            let _ = writeln!(out, "{a} -> {b}  # {}", prov.join(", "));
        }
        out
    }
}

/// Caller resolution for one class.
///
/// Fragment: itself plus every activity hosting it. Inner class: the UI
/// classes along its outer chain. Anything else: itself.
pub fn resolve_callers(
    cls: &str,
    bundle: &AppBundle,
    cg: &CallGraph,
) -> Result<BTreeSet<String>, AtgError> {
    resolve_callers_with_depth(cls, bundle, cg, DEFAULT_MAX_DEPTH)
}

pub fn resolve_callers_with_depth(
    cls: &str,
    bundle: &AppBundle,
    cg: &CallGraph,
    max_depth: usize,
) -> Result<BTreeSet<String>, AtgError> {
    let class = bundle
        .class(cls)
        .ok_or_else(|| AtgError::UnknownClass(cls.to_string()))?;
    if class.kind == ClassKind::Fragment {
        let mut out = BTreeSet::from([cls.to_string()]);
        out.extend(fragment_hosts(cls, bundle, cg, max_depth));
        return Ok(out);
    }
    if class.inner_of.is_some() {
        return Ok(outer_ui_classes(cls, bundle));
    }
    Ok(BTreeSet::from([cls.to_string()]))
}

/// UI classes on the outer chain of `cls` (excluding `cls`).
fn outer_ui_classes(cls: &str, bundle: &AppBundle) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut seen = BTreeSet::from([cls.to_string()]);
    let mut cur = bundle.class(cls).and_then(|c| c.inner_of.clone());
    while let Some(name) = cur {
        if !seen.insert(name.clone()) {
            break;
        }
        let Some(c) = bundle.class(&name) else { break };
        if c.kind.is_ui() {
            out.insert(name.clone());
        }
        cur = c.inner_of.clone();
    }
    out
}

/// UI classes that "own" code written in `cls` without looking at the call
/// graph: the class itself when it is UI, else its outer UI classes.
fn lexical_ui_owners(cls: &str, bundle: &AppBundle) -> BTreeSet<String> {
    match bundle.class(cls) {
        Some(c) if c.kind.is_ui() => BTreeSet::from([cls.to_string()]),
        Some(c) if c.inner_of.is_some() => outer_ui_classes(cls, bundle),
        _ => BTreeSet::new(),
    }
}

/// UI classes whose code reaches `method`: lexically, or else through
/// callers within `max_depth` hops. Expansion stops at the first UI-owned
/// method on each path.
pub fn code_owners(
    method: &MethodRef,
    bundle: &AppBundle,
    cg: &CallGraph,
    max_depth: usize,
) -> BTreeSet<String> {
    let direct = lexical_ui_owners(&method.class, bundle);
    if !direct.is_empty() {
        return direct;
    }
    let reached = bfs_depths(method, max_depth, |m| {
        if m != method && !lexical_ui_owners(&m.class, bundle).is_empty() {
            Vec::new()
        } else {
            cg.predecessors(m).cloned().collect()
        }
    });
    reached
        .keys()
        .flat_map(|m| lexical_ui_owners(&m.class, bundle))
        .collect()
}

/// Activities hosting fragment `frag`: hosts of navigation graphs listing it,
/// and activities whose code instantiates it with `new_widget`.
fn fragment_hosts(
    frag: &str,
    bundle: &AppBundle,
    cg: &CallGraph,
    max_depth: usize,
) -> BTreeSet<String> {
    let is_activity = |n: &str| bundle.class(n).is_some_and(|c| c.kind == ClassKind::Activity);
    let mut out = BTreeSet::new();
    for g in &bundle.nav_graphs {
        if g.destinations.iter().any(|d| d == frag) && is_activity(&g.host_class) {
            out.insert(g.host_class.clone());
        }
    }
    for c in &bundle.classes {
        for m in &c.methods {
            let instantiates = m.instructions.iter().any(|i| {
                matches!(i.api(), Some(ApiCall::NewWidget { widget_type }) if widget_type == frag)
            });
            if instantiates {
                let mref = MethodRef::new(&c.name, &m.name);
                out.extend(
                    code_owners(&mref, bundle, cg, max_depth)
                        .into_iter()
                        .filter(|o| is_activity(o)),
                );
            }
        }
    }
    out
}

/// Same-method intent resolution: the `new_intent` reaching `reg` at `idx`.
fn intent_target<'a>(m: &'a MethodIR, reg: &crate::app_ir::Reg, idx: usize) -> Option<&'a str> {
    let def = m.reaching_def(reg, idx)?;
    match m.instructions[def].api() {
        Some(ApiCall::NewIntent { target }) => Some(target),
        _ => None,
    }
}

pub fn find_transition_units(bundle: &AppBundle, _cg: &CallGraph) -> Vec<TransitionUnit> {
    let ui = |n: &str| bundle.is_ui_class(n);
    let mut units = Vec::new();
    for c in &bundle.classes {
        for m in &c.methods {
            let in_override = c.overrides_system_listener.contains(&m.name);
            for (index, instr) in m.instructions.iter().enumerate() {
                let Instruction::Api { call, .. } = instr else {
                    continue;
                };
                let (kind, callee) = match call {
                    ApiCall::StartActivity { target } | ApiCall::StartActivityForResult { target } => {
                        match target {
                            StartTarget::Class(t) => (UnitKind::ExplicitApi, t.as_str()),
                            StartTarget::Intent(r) => match intent_target(m, r, index) {
                                Some(t) => (UnitKind::ImplicitIcc, t),
                                None => continue,
                            },
                        }
                    }
                    ApiCall::NavNavigate { destination } => (UnitKind::Navigation, destination.as_str()),
                    _ => continue,
                };
                let kind = if in_override && kind != UnitKind::Navigation {
                    UnitKind::SystemListener
                } else {
                    kind
                };
                if !ui(callee) {
                    continue;
                }
                units.push(TransitionUnit {
                    location: UnitLocation::Instruction {
                        class: c.name.clone(),
                        method: m.name.clone(),
                        index,
                    },
                    kind,
                    callees: BTreeSet::from([callee.to_string()]),
                });
            }
        }
    }
    for g in &bundle.nav_graphs {
        let callees: BTreeSet<String> = g.destinations.iter().filter(|d| ui(d)).cloned().collect();
        if callees.is_empty() {
            continue;
        }
        units.push(TransitionUnit {
            location: UnitLocation::NavGraph {
                id: g.id.clone(),
                host: g.host_class.clone(),
            },
            kind: UnitKind::Navigation,
            callees,
        });
    }
    units
}

/// UI classes credited as the source of a unit.
pub fn unit_callers(
    unit: &TransitionUnit,
    bundle: &AppBundle,
    cg: &CallGraph,
    max_depth: usize,
) -> BTreeSet<String> {
    let owners = match &unit.location {
        UnitLocation::NavGraph { host, .. } => BTreeSet::from([host.clone()]),
        UnitLocation::Instruction { class, method, .. } => {
            code_owners(&MethodRef::new(class, method), bundle, cg, max_depth)
        }
    };
    owners
        .iter()
        .flat_map(|o| resolve_callers_with_depth(o, bundle, cg, max_depth).unwrap_or_default())
        .filter(|c| bundle.is_ui_class(c))
        .collect()
}

pub fn build_atg(bundle: &AppBundle, cg: &CallGraph) -> Atg {
    build_atg_with_depth(bundle, cg, DEFAULT_MAX_DEPTH)
}

pub fn build_atg_with_depth(bundle: &AppBundle, cg: &CallGraph, max_depth: usize) -> Atg {
    let mut atg = Atg::default();
    for c in &bundle.classes {
        match c.kind {
            ClassKind::Activity => {
                atg.nodes.insert(c.name.clone(), NodeKind::Activity);
            }
            ClassKind::Fragment => {
                atg.nodes.insert(c.name.clone(), NodeKind::Fragment);
            }
            _ => {}
        }
    }
    let mut units = find_transition_units(bundle, cg);
    units.sort();
    for (i, unit) in units.iter().enumerate() {
        let callers = unit_callers(unit, bundle, cg, max_depth);
        for caller in &callers {
            for callee in &unit.callees {
                atg.edges
                    .entry((caller.clone(), callee.clone()))
                    .or_default()
                    .insert(i);
            }
        }
    }
    atg.units = units;
    atg
}
