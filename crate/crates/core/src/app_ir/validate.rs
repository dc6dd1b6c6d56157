use super::model::*;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Where in a bundle something lives.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Location {
    Manifest,
    Layout(String),
    StringResource(String),
    NavGraph(String),
    Class(String),
    Method(MethodRef),
    Instruction(MethodRef, usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Manifest => write!(f, "manifest"),
            Location::Layout(id) => write!(f, "layout {id}"),
            Location::StringResource(id) => write!(f, "string {id}"),
            Location::NavGraph(id) => write!(f, "nav {id}"),
            Location::Class(c) => write!(f, "class {c}"),
            Location::Method(m) => write!(f, "method {m}"),
            Location::Instruction(m, i) => write!(f, "{m}#{i}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    EmptyPackageName,
    DuplicateClass,
    DuplicateMethod,
    DuplicateLayout,
    DuplicateNavGraph,
    DuplicateWidgetId,
    InnerOfCycle,
    UnknownOuterClass,
    DanglingLayout,
    DanglingString,
    DanglingClass,
    DanglingWidgetId,
    DeclaredActivityNotActivity,
    NavHostKind,
    NavEmptyDestinations,
    TransitionTargetKind,
    UndefinedRegister,
    DuplicateParam,
}

impl ViolationKind {
    pub fn name(self) -> &'static str {
        match self {
            ViolationKind::EmptyPackageName => "empty_package_name",
            ViolationKind::DuplicateClass => "duplicate_class",
            ViolationKind::DuplicateMethod => "duplicate_method",
            ViolationKind::DuplicateLayout => "duplicate_layout",
            ViolationKind::DuplicateNavGraph => "duplicate_nav_graph",
            ViolationKind::DuplicateWidgetId => "duplicate_widget_id",
            ViolationKind::InnerOfCycle => "inner_of_cycle",
            ViolationKind::UnknownOuterClass => "unknown_outer_class",
            ViolationKind::DanglingLayout => "dangling_layout",
            ViolationKind::DanglingString => "dangling_string",
            ViolationKind::DanglingClass => "dangling_class",
            ViolationKind::DanglingWidgetId => "dangling_widget_id",
            ViolationKind::DeclaredActivityNotActivity => "declared_activity_not_activity",
            ViolationKind::NavHostKind => "nav_host_kind",
            ViolationKind::NavEmptyDestinations => "nav_empty_destinations",
            ViolationKind::TransitionTargetKind => "transition_target_kind",
            ViolationKind::UndefinedRegister => "undefined_register",
            ViolationKind::DuplicateParam => "duplicate_param",
        }
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A broken bundle invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// The offending name (class, id, register...).
    pub subject: String,
    pub location: Location,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} `{}` at {}", self.kind, self.subject, self.location)
    }
}

struct Checker<'a> {
    bundle: &'a AppBundle,
    classes: BTreeMap<&'a str, &'a AppClass>,
    widget_ids: BTreeSet<&'a str>,
    out: Vec<Violation>,
}

impl<'a> Checker<'a> {
    fn push(&mut self, kind: ViolationKind, subject: impl Into<String>, location: Location) {
        self.out.push(Violation {
            kind,
            subject: subject.into(),
            location,
        });
    }

    fn class_ref(&mut self, name: &str, location: &Location) {
        if !self.classes.contains_key(name) {
            self.push(ViolationKind::DanglingClass, name, location.clone());
        }
    }

    fn ui_target(&mut self, name: &str, location: &Location) {
        match self.classes.get(name) {
            None => self.push(ViolationKind::DanglingClass, name, location.clone()),
            Some(c) if !c.kind.is_ui() => {
                self.push(ViolationKind::TransitionTargetKind, name, location.clone())
            }
            _ => {}
        }
    }

    fn layout_ref(&mut self, id: &str, location: &Location) {
        if self.bundle.layout(id).is_none() {
            self.push(ViolationKind::DanglingLayout, id, location.clone());
        }
    }
}

/// Checks every bundle invariant. An empty result means the bundle is safe
/// to hand to the downstream analyses.
pub fn validate(bundle: &AppBundle) -> Vec<Violation> {
    let mut classes = BTreeMap::new();
    let mut dup_classes = Vec::new();
    for c in &bundle.classes {
        if classes.insert(c.name.as_str(), c).is_some() {
            dup_classes.push(c.name.clone());
        }
    }
    let widget_ids = bundle
        .layouts
        .iter()
        .flat_map(|l| l.root.walk())
        .filter_map(|w| w.widget_id.as_deref())
        .collect();
    let mut ck = Checker {
        bundle,
        classes,
        widget_ids,
        out: Vec::new(),
    };

    if bundle.manifest.package_name.trim().is_empty() {
        ck.push(ViolationKind::EmptyPackageName, "", Location::Manifest);
    }
    for name in dup_classes {
        ck.push(ViolationKind::DuplicateClass, name.clone(), Location::Class(name));
    }
    for a in &bundle.manifest.declared_activities {
        match ck.classes.get(a.as_str()) {
            Some(c) if c.kind == ClassKind::Activity => {}
            _ => ck.push(
                ViolationKind::DeclaredActivityNotActivity,
                a.clone(),
                Location::Manifest,
            ),
        }
    }

    let mut layout_ids = BTreeSet::new();
    for l in &bundle.layouts {
        let loc = Location::Layout(l.id.clone());
        if !layout_ids.insert(l.id.as_str()) {
            ck.push(ViolationKind::DuplicateLayout, l.id.clone(), loc.clone());
        }
        let mut seen = BTreeSet::new();
        for w in l.root.walk() {
            if let Some(id) = &w.widget_id {
                if !seen.insert(id.as_str()) {
                    ck.push(ViolationKind::DuplicateWidgetId, id.clone(), loc.clone());
                }
            }
        }
    }

    let mut nav_ids = BTreeSet::new();
    for g in &bundle.nav_graphs {
        let loc = Location::NavGraph(g.id.clone());
        if !nav_ids.insert(g.id.as_str()) {
            ck.push(ViolationKind::DuplicateNavGraph, g.id.clone(), loc.clone());
        }
        match ck.classes.get(g.host_class.as_str()) {
            None => ck.push(ViolationKind::DanglingClass, g.host_class.clone(), loc.clone()),
            Some(c) if !c.kind.is_ui() => {
                ck.push(ViolationKind::NavHostKind, g.host_class.clone(), loc.clone())
            }
            _ => {}
        }
        if g.destinations.is_empty() {
            ck.push(ViolationKind::NavEmptyDestinations, g.id.clone(), loc.clone());
        }
        for d in &g.destinations {
            ck.ui_target(d, &loc);
        }
    }

    for class in &bundle.classes {
        let cloc = Location::Class(class.name.clone());
        if let Some(outer) = &class.inner_of {
            if outer == &class.name {
                ck.push(ViolationKind::InnerOfCycle, class.name.clone(), cloc.clone());
            } else if !ck.classes.contains_key(outer.as_str()) {
                ck.push(ViolationKind::UnknownOuterClass, outer.clone(), cloc.clone());
            } else {
                // Walk the outer chain; a revisit means a cycle through this class.
                let mut seen = BTreeSet::from([class.name.as_str()]);
                let mut cur = Some(outer.as_str());
                while let Some(name) = cur {
                    if !seen.insert(name) {
                        if name == class.name {
                            ck.push(ViolationKind::InnerOfCycle, class.name.clone(), cloc.clone());
                        }
                        break;
                    }
                    cur = ck.classes.get(name).and_then(|c| c.inner_of.as_deref());
                }
            }
        }
        let mut method_names = BTreeSet::new();
        for m in &class.methods {
            let mref = MethodRef::new(&class.name, &m.name);
            if !method_names.insert(m.name.as_str()) {
                ck.push(
                    ViolationKind::DuplicateMethod,
                    mref.to_string(),
                    Location::Method(mref.clone()),
                );
            }
            check_method(&mut ck, &mref, m);
        }
    }
    ck.out
}

fn check_method(ck: &mut Checker<'_>, mref: &MethodRef, m: &MethodIR) {
    let mut defined: BTreeSet<&Reg> = BTreeSet::new();
    for p in &m.params {
        if !defined.insert(p) {
            ck.push(
                ViolationKind::DuplicateParam,
                p.to_string(),
                Location::Method(mref.clone()),
            );
        }
    }
    for (idx, instr) in m.instructions.iter().enumerate() {
        let loc = Location::Instruction(mref.clone(), idx);
        for r in instr.uses() {
            if !defined.contains(r) {
                ck.push(ViolationKind::UndefinedRegister, r.to_string(), loc.clone());
            }
        }
        match instr {
            Instruction::ResourceText { resource, .. } => {
                if ck.bundle.resource_text(resource).is_none() {
                    ck.push(ViolationKind::DanglingString, resource.clone(), loc.clone());
                }
            }
            Instruction::Api { call, .. } => match call {
                ApiCall::SetContentView { layout } | ApiCall::Inflate { layout } => {
                    ck.layout_ref(layout, &loc)
                }
                ApiCall::FindViewById { widget } => {
                    if !ck.widget_ids.contains(widget.as_str()) {
                        ck.push(ViolationKind::DanglingWidgetId, widget.clone(), loc.clone());
                    }
                }
                ApiCall::StartActivity {
                    target: StartTarget::Class(c),
                }
                | ApiCall::StartActivityForResult {
                    target: StartTarget::Class(c),
                }
                | ApiCall::NewIntent { target: c }
                | ApiCall::NavNavigate { destination: c } => ck.ui_target(c, &loc),
                ApiCall::SetOnClickListener { listener: c, .. }
                | ApiCall::ThreadStart { class: c }
                | ApiCall::AsyncExecute { class: c }
                | ApiCall::SendMessage { class: c } => ck.class_ref(c, &loc),
                _ => {}
            },
            _ => {}
        }
        if let Some(d) = instr.def() {
            defined.insert(d);
        }
    }
}
