//! Backward string taint from `load_url` sinks.
//!
//! Only text values are followed: constants, resource strings, text
//! operations and calls (return values going down, parameters going up).
//! Constant and resource sources are instantiated and split into URL field
//! tokens; runtime sources are dropped and counted.

use crate::app_ir::{ApiCall, AppBundle, Instruction, MethodRef, Reg};
use crate::callgraph::CallGraph;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashSet};
use thiserror::Error;

/// Split points inside constant text.
pub const URL_DELIMITERS: [char; 6] = ['/', '?', '&', '=', ':', '.'];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaintError {
    #[error("no instruction at {0}")]
    NoSuchInstruction(SinkLocation),
    #[error("instruction at {0} is not a load_url sink")]
    NotASink(SinkLocation),
    #[error("sink operand at {0} is not text-typed")]
    SinkNotText(SinkLocation),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SinkLocation {
    pub method: MethodRef,
    pub index: usize,
}

impl std::fmt::Display for SinkLocation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}#{}", self.method, self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaintResult {
    pub sink: SinkLocation,
    pub tokens: BTreeSet<String>,
    pub discarded_runtime_sources: usize,
    pub depth_exhausted: bool,
}

/// Splits text on [`URL_DELIMITERS`], dropping empty pieces.
pub fn tokenize_url_text(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c| URL_DELIMITERS.contains(&c))
        .filter(|s| !s.is_empty())
}

/// Every `load_url` site in the bundle, in declaration order.
pub fn load_url_sites(bundle: &AppBundle) -> Vec<SinkLocation> {
    let mut out = Vec::new();
    for c in &bundle.classes {
        for m in &c.methods {
            for (index, instr) in m.instructions.iter().enumerate() {
                if matches!(instr.api(), Some(ApiCall::LoadUrl { .. })) {
                    out.push(SinkLocation {
                        method: MethodRef::new(&c.name, &m.name),
                        index,
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Frame {
    caller: MethodRef,
    call_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Source {
    Text(MethodRef, usize),
    Runtime(MethodRef, usize),
    /// Result of a call whose body is not in the bundle.
    Opaque(MethodRef, usize),
}

struct Tracer<'a> {
    bundle: &'a AppBundle,
    cg: &'a CallGraph,
    max_depth: usize,
    visited: HashSet<(MethodRef, Reg, usize, Vec<Frame>, usize)>,
    sources: BTreeSet<Source>,
    exhausted: bool,
}

impl<'a> Tracer<'a> {
    /// Traces the value `reg` holds just before instruction `before` of `m`.
    fn trace(&mut self, m: &MethodRef, reg: &Reg, before: usize, stack: &[Frame], depth: usize) {
        let key = (m.clone(), reg.clone(), before, stack.to_vec(), depth);
        if !self.visited.insert(key) {
            return;
        }
        let Some(body) = self.bundle.method(m) else {
            return;
        };
        let Some(def) = body.reaching_def(reg, before) else {
            self.trace_param(m, reg, stack, depth);
            return;
        };
        match &body.instructions[def] {
            Instruction::ConstText { .. } | Instruction::ResourceText { .. } => {
                self.sources.insert(Source::Text(m.clone(), def));
            }
            Instruction::RuntimeText { .. } => {
                self.sources.insert(Source::Runtime(m.clone(), def));
            }
            Instruction::TextOp { op, operands, .. } => {
                for o in op.data_operands(operands) {
                    self.trace(m, o, def, stack, depth);
                }
            }
            Instruction::Call { target, .. } => {
                let Some(callee) = self.bundle.method(target) else {
                    self.sources.insert(Source::Opaque(m.clone(), def));
                    return;
                };
                if depth + 1 > self.max_depth {
                    self.exhausted = true;
                    return;
                }
                let mut inner = stack.to_vec();
                inner.push(Frame {
                    caller: m.clone(),
                    call_index: def,
                });
                for (k, instr) in callee.instructions.iter().enumerate() {
                    if let Instruction::Return { value: Some(v) } = instr {
                        self.trace(target, v, k, &inner, depth + 1);
                    }
                }
            }
            // Widget handles, intents and the like carry no text.
            Instruction::Api { .. } | Instruction::Return { .. } => {}
        }
    }

    /// `reg` is a parameter of `m`: continue at the argument of the call site.
    fn trace_param(&mut self, m: &MethodRef, reg: &Reg, stack: &[Frame], depth: usize) {
        let Some(body) = self.bundle.method(m) else {
            return;
        };
        let Some(pos) = body.params.iter().position(|p| p == reg) else {
            return;
        };
        if let Some((frame, rest)) = stack.split_last() {
            self.trace_arg(&frame.caller, frame.call_index, pos, rest, depth.saturating_sub(1));
            return;
        }
        // Unbalanced: every caller in the call graph is a candidate.
        if depth + 1 > self.max_depth {
            if self.cg.predecessors(m).next().is_some() {
                self.exhausted = true;
            }
            return;
        }
        let callers: Vec<MethodRef> = self.cg.predecessors(m).cloned().collect();
        for caller in callers {
            let Some(cbody) = self.bundle.method(&caller) else {
                continue;
            };
            for (k, instr) in cbody.instructions.iter().enumerate() {
                if matches!(instr, Instruction::Call { target, .. } if target == m) {
                    self.trace_arg(&caller, k, pos, &[], depth + 1);
                }
            }
        }
    }

    fn trace_arg(&mut self, caller: &MethodRef, call_index: usize, pos: usize, stack: &[Frame], depth: usize) {
        let Some(body) = self.bundle.method(caller) else {
            return;
        };
        if let Some(Instruction::Call { args, .. }) = body.instructions.get(call_index) {
            if let Some(arg) = args.get(pos) {
                self.trace(caller, arg, call_index, stack, depth);
            }
        }
    }
}

pub fn backward_taint_text(
    bundle: &AppBundle,
    cg: &CallGraph,
    sink: &SinkLocation,
    max_depth: usize,
) -> Result<TaintResult, TaintError> {
    let body = bundle
        .method(&sink.method)
        .ok_or_else(|| TaintError::NoSuchInstruction(sink.clone()))?;
    let instr = body
        .instructions
        .get(sink.index)
        .ok_or_else(|| TaintError::NoSuchInstruction(sink.clone()))?;
    let Some(ApiCall::LoadUrl { url }) = instr.api() else {
        return Err(TaintError::NotASink(sink.clone()));
    };
    if let Some(def) = body.reaching_def(url, sink.index) {
        if matches!(body.instructions[def], Instruction::Api { .. }) {
            return Err(TaintError::SinkNotText(sink.clone()));
        }
    }
    let mut tracer = Tracer {
        bundle,
        cg,
        max_depth,
        visited: HashSet::new(),
        sources: BTreeSet::new(),
        exhausted: false,
    };
    tracer.trace(&sink.method, url, sink.index, &[], 0);

    let mut tokens = BTreeSet::new();
    let mut discarded = 0;
    for s in &tracer.sources {
        match s {
            Source::Text(m, i) => {
                let text = match bundle.method(m).map(|b| &b.instructions[*i]) {
                    Some(Instruction::ConstText { value, .. }) => Some(value.as_str()),
                    Some(Instruction::ResourceText { resource, .. }) => bundle.resource_text(resource),
                    _ => None,
                };
                if let Some(text) = text {
                    tokens.extend(tokenize_url_text(text).map(str::to_string));
                }
            }
            Source::Runtime(..) | Source::Opaque(..) => discarded += 1,
        }
    }
    Ok(TaintResult {
        sink: sink.clone(),
        tokens,
        discarded_runtime_sources: discarded,
        depth_exhausted: tracer.exhausted,
    })
}
