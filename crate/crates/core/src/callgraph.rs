//! Method-level call graph, completed with implicit run/start pairs.
//!
//! Direct edges come from `call` instructions. Implicit edges model
//! framework dispatch: `thread_start R` ends up in `R.run`, an
//! `async_execute T` walks `onPreExecute -> doInBackground -> doPostExecute`,
//! and so on. Which pairs exist is data ([`ImplicitPairTable`]).

use crate::app_ir::{ApiCall, AppBundle, Instruction, MethodRef};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CallGraphError {
    #[error("unknown method `{0}`")]
    UnknownMethod(MethodRef),
    #[error("invalid implicit pair table: {0}")]
    Table(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Direct,
    Implicit,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CallEdge {
    pub caller: MethodRef,
    pub callee: MethodRef,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImplicitPair {
    pub top_class: String,
    pub run_method: String,
    pub start_method: String,
}

/// Rows of `(top class, run method, start method)`. A row whose start method
/// is an API start name (see [`api_start_name`]) links the calling method to
/// `target.run_method`; every other row links two methods of the same class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImplicitPairTable {
    pub rows: Vec<ImplicitPair>,
}

impl Default for ImplicitPairTable {
    fn default() -> Self {
        let row = |t: &str, run: &str, start: &str| ImplicitPair {
            top_class: t.into(),
            run_method: run.into(),
            start_method: start.into(),
        };
        ImplicitPairTable {
            rows: vec![
                row("AsyncTask", "onPreExecute", "execute"),
                row("AsyncTask", "doInBackground", "onPreExecute"),
                row("AsyncTask", "doPostExecute", "doInBackground"),
                row("OnClickListener", "onClick", "setOnClickListener"),
                row("Runnable", "run", "start"),
                row("Message", "handleMessage", "sendMessage"),
            ],
        }
    }
}

impl ImplicitPairTable {
    /// Loads a table from TOML: `[[rows]]` entries with `top_class`,
    /// `run_method` and `start_method`.
    pub fn from_toml_str(text: &str) -> Result<Self, CallGraphError> {
        let table: ImplicitPairTable =
            toml::from_str(text).map_err(|e| CallGraphError::Table(e.to_string()))?;
        if table.rows.is_empty() {
            return Err(CallGraphError::Table("table has no rows".into()));
        }
        Ok(table)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("table serializes")
    }

    fn is_api_start(name: &str) -> bool {
        API_START_NAMES.contains(&name)
    }
}

const API_START_NAMES: [&str; 4] = ["start", "execute", "setOnClickListener", "sendMessage"];

/// Start-method name and target class of an asynchronous start site.
pub fn api_start_name(call: &ApiCall) -> Option<(&'static str, &str)> {
    match call {
        ApiCall::ThreadStart { class } => Some(("start", class)),
        ApiCall::AsyncExecute { class } => Some(("execute", class)),
        ApiCall::SetOnClickListener { listener, .. } => Some(("setOnClickListener", listener)),
        ApiCall::SendMessage { class } => Some(("sendMessage", class)),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UnresolvedTarget {
    pub caller: MethodRef,
    pub target: MethodRef,
}

#[derive(Debug, Clone, Default)]
pub struct CallGraph {
    pub nodes: BTreeSet<MethodRef>,
    pub edges: BTreeSet<CallEdge>,
    pub class_index: BTreeMap<String, Vec<MethodRef>>,
    /// Calls whose target has no body in the bundle.
    pub warnings: Vec<UnresolvedTarget>,
    succ: BTreeMap<MethodRef, BTreeSet<MethodRef>>,
    pred: BTreeMap<MethodRef, BTreeSet<MethodRef>>,
}

impl CallGraph {
    fn add_edge(&mut self, caller: MethodRef, callee: MethodRef, kind: EdgeKind) {
        self.succ
            .entry(caller.clone())
            .or_default()
            .insert(callee.clone());
        self.pred
            .entry(callee.clone())
            .or_default()
            .insert(caller.clone());
        self.edges.insert(CallEdge {
            caller,
            callee,
            kind,
        });
    }

    pub fn successors(&self, m: &MethodRef) -> impl Iterator<Item = &MethodRef> {
        self.succ.get(m).into_iter().flatten()
    }

    pub fn predecessors(&self, m: &MethodRef) -> impl Iterator<Item = &MethodRef> {
        self.pred.get(m).into_iter().flatten()
    }

    pub fn methods_of(&self, class: &str) -> &[MethodRef] {
        self.class_index.get(class).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn implicit_edges(&self) -> impl Iterator<Item = &CallEdge> {
        self.edges.iter().filter(|e| e.kind == EdgeKind::Implicit)
    }

    /// Edge-list dump, one `caller -> callee [kind]` per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let kind = match e.kind {
                EdgeKind::Direct => "direct",
                EdgeKind::Implicit => "implicit",
            };
            let _ = writeln!(out, "{} -> {} [{kind}]", e.caller, e.callee);
        }
        out
    }
}

pub fn build_call_graph(bundle: &AppBundle) -> CallGraph {
    build_call_graph_with(bundle, &ImplicitPairTable::default())
}

pub fn build_call_graph_with(bundle: &AppBundle, table: &ImplicitPairTable) -> CallGraph {
    let mut cg = CallGraph::default();
    for c in &bundle.classes {
        let refs: Vec<MethodRef> = c
            .methods
            .iter()
            .map(|m| MethodRef::new(&c.name, &m.name))
            .collect();
        cg.nodes.extend(refs.iter().cloned());
        cg.class_index.insert(c.name.clone(), refs);
    }

    let has = |class: &str, method: &str| bundle.class(class).and_then(|c| c.method(method)).is_some();
    // Classes targeted by each top-class family; used for the chained rows.
    let mut family_targets: BTreeSet<(String, String)> = BTreeSet::new();

    for c in &bundle.classes {
        for m in &c.methods {
            let caller = MethodRef::new(&c.name, &m.name);
            for instr in &m.instructions {
                match instr {
                    Instruction::Call { target, .. } => {
                        if cg.nodes.contains(target) {
                            cg.add_edge(caller.clone(), target.clone(), EdgeKind::Direct);
                        } else {
                            cg.warnings.push(UnresolvedTarget {
                                caller: caller.clone(),
                                target: target.clone(),
                            });
                        }
                    }
                    Instruction::Api { call, .. } => {
                        let Some((start, target)) = api_start_name(call) else {
                            continue;
                        };
                        for row in table.rows.iter().filter(|r| r.start_method == start) {
                            family_targets.insert((row.top_class.clone(), target.to_string()));
                            if has(target, &row.run_method) {
                                cg.add_edge(
                                    caller.clone(),
                                    MethodRef::new(target, &row.run_method),
                                    EdgeKind::Implicit,
                                );
                            }
                        }
                    }
                    _ => {}
                }
            }
        }
    }

    for (family, class) in &family_targets {
        for row in table
            .rows
            .iter()
            .filter(|r| &r.top_class == family && !ImplicitPairTable::is_api_start(&r.start_method))
        {
            if has(class, &row.start_method) && has(class, &row.run_method) {
                cg.add_edge(
                    MethodRef::new(class, &row.start_method),
                    MethodRef::new(class, &row.run_method),
                    EdgeKind::Implicit,
                );
            }
        }
    }
    cg
}

/// Methods within `max_depth` hops of `from`, including `from` itself.
pub fn reachable_methods(
    cg: &CallGraph,
    from: &MethodRef,
    max_depth: usize,
) -> Result<BTreeSet<MethodRef>, CallGraphError> {
    if !cg.nodes.contains(from) {
        return Err(CallGraphError::UnknownMethod(from.clone()));
    }
    Ok(bfs(from, max_depth, |m| cg.successors(m).cloned().collect()))
}

/// Methods from which `to` is reachable within `max_depth` hops.
pub fn reverse_reachable(
    cg: &CallGraph,
    to: &MethodRef,
    max_depth: usize,
) -> Result<BTreeMap<MethodRef, usize>, CallGraphError> {
    if !cg.nodes.contains(to) {
        return Err(CallGraphError::UnknownMethod(to.clone()));
    }
    Ok(bfs_depths(to, max_depth, |m| cg.predecessors(m).cloned().collect()))
}

fn bfs(
    from: &MethodRef,
    max_depth: usize,
    next: impl Fn(&MethodRef) -> Vec<MethodRef>,
) -> BTreeSet<MethodRef> {
    bfs_depths(from, max_depth, next).into_keys().collect()
}

pub(crate) fn bfs_depths(
    from: &MethodRef,
    max_depth: usize,
    next: impl Fn(&MethodRef) -> Vec<MethodRef>,
) -> BTreeMap<MethodRef, usize> {
    let mut depth = BTreeMap::from([(from.clone(), 0usize)]);
    let mut queue = VecDeque::from([from.clone()]);
    while let Some(m) = queue.pop_front() {
        let d = depth[&m];
        if d == max_depth {
            continue;
        }
        for n in next(&m) {
            if !depth.contains_key(&n) {
                depth.insert(n.clone(), d + 1);
                queue.push_back(n);
            }
        }
    }
    depth
}
