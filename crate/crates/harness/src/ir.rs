//! Text builder for App-IR bundles that records ground truth as it goes.

use crate::truth::GroundTruth;
use serde_json::{json, Value};
use std::collections::BTreeSet;
use uedetect_core::app_ir::{ClassKind, Instruction};

/// How a planted transition is triggered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mech {
    /// Start call in the entry method.
    Direct,
    ForResult,
    /// `new_intent` followed by a start on the intent register.
    Intent,
    /// Button in the owner's layout with an inner listener class.
    Listener,
    /// System listener override (`onKeyDown`).
    KeyDown,
    Thread,
    Async,
    Handler,
    /// One static helper call away.
    Helper,
    /// Navigation graph resource hosted by the owner.
    NavGraph,
    /// Listener whose start site sits `DEEP_CHAIN + 1` calls from `onClick`.
    OverDepth,
}

pub const DEEP_CHAIN: usize = 10;

/// One piece of a `load_url` argument.
#[derive(Debug, Clone)]
pub enum Piece {
    Const(String),
    /// String resource `(id, text)`.
    Res(String, String),
    PackageName,
    AppName,
    /// Value known only at runtime; the text is what would flow there.
    Runtime(String),
    /// Constant returned by a static helper method.
    Helper(String),
}

pub fn konst(s: &str) -> Piece {
    Piece::Const(s.to_string())
}

#[derive(Debug, Clone)]
struct MethodSrc {
    name: String,
    params: String,
    lines: Vec<String>,
}

#[derive(Debug, Clone)]
struct ClassSrc {
    name: String,
    kind: ClassKind,
    inner_of: Option<String>,
    overrides: BTreeSet<String>,
    methods: Vec<MethodSrc>,
    layout: Option<Value>,
}

impl ClassSrc {
    fn method(&mut self, name: &str, params: &str) -> &mut Vec<String> {
        let i = match self.methods.iter().position(|m| m.name == name) {
            Some(i) => i,
            None => {
                self.methods.push(MethodSrc {
                    name: name.to_string(),
                    params: params.to_string(),
                    lines: Vec::new(),
                });
                self.methods.len() - 1
            }
        };
        &mut self.methods[i].lines
    }
}

pub struct AppBuilder {
    pub truth: GroundTruth,
    manifest: Value,
    strings: Vec<(String, String)>,
    navs: Vec<(String, String, String)>,
    classes: Vec<ClassSrc>,
    next: usize,
    hosted: BTreeSet<String>,
    initiators: BTreeSet<String>,
}

fn entry_method(kind: ClassKind) -> &'static str {
    if kind == ClassKind::Fragment {
        "onViewCreated"
    } else {
        "onCreate"
    }
}

impl AppBuilder {
    pub fn new(app_id: &str, package: &str, app_name: &str, cert: &str, permissions: &[String]) -> Self {
        AppBuilder {
            truth: GroundTruth::new(app_id),
            manifest: json!({
                "package_name": package,
                "app_name": app_name,
                "cert_digest": cert,
                "permissions": permissions,
            }),
            strings: Vec::new(),
            navs: Vec::new(),
            classes: Vec::new(),
            next: 0,
            hosted: BTreeSet::new(),
            initiators: BTreeSet::new(),
        }
    }

    fn fresh(&mut self) -> usize {
        self.next += 1;
        self.next
    }

    fn class_mut(&mut self, name: &str) -> &mut ClassSrc {
        self.classes
            .iter_mut()
            .find(|c| c.name == name)
            .unwrap_or_else(|| panic!("undeclared class {name}"))
    }

    pub fn is_fragment(&self, name: &str) -> bool {
        self.kind_of(name) == ClassKind::Fragment
    }

    pub fn is_hosted(&self, name: &str) -> bool {
        self.hosted.contains(name)
    }

    fn kind_of(&self, name: &str) -> ClassKind {
        self.classes
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.kind)
            .unwrap_or_else(|| panic!("undeclared class {name}"))
    }

    fn declare(&mut self, name: &str, kind: ClassKind, inner_of: Option<&str>) {
        assert!(
            self.classes.iter().all(|c| c.name != name),
            "class {name} declared twice"
        );
        self.classes.push(ClassSrc {
            name: name.to_string(),
            kind,
            inner_of: inner_of.map(str::to_string),
            overrides: BTreeSet::new(),
            methods: Vec::new(),
            layout: None,
        });
    }

    pub fn activity(&mut self, name: &str) -> &mut Self {
        self.declare(name, ClassKind::Activity, None);
        self.truth.nodes.insert(name.to_string());
        self
    }

    pub fn fragment(&mut self, name: &str) -> &mut Self {
        self.declare(name, ClassKind::Fragment, None);
        self.truth.nodes.insert(name.to_string());
        self
    }

    fn entry(&mut self, owner: &str) -> &mut Vec<String> {
        let kind = self.kind_of(owner);
        self.class_mut(owner).method(entry_method(kind), "")
    }

    fn layout_root(&mut self, owner: &str) -> &mut Value {
        let c = self.class_mut(owner);
        c.layout
            .get_or_insert_with(|| json!({"type": "LinearLayout", "children": []}))
    }

    fn push_widget(&mut self, owner: &str, widget: Value) {
        let types = collect_types(&widget);
        self.layout_root(owner)["children"]
            .as_array_mut()
            .expect("layout root has children")
            .push(widget);
        let list = self.truth.widgets.entry(owner.to_string()).or_default();
        if list.is_empty() {
            list.push("LinearLayout".to_string());
        }
        list.extend(types);
        list.sort();
    }

    /// Adds plain widgets to the owner's layout.
    pub fn widgets(&mut self, owner: &str, types: &[&str]) -> &mut Self {
        for t in types {
            self.push_widget(owner, json!({"type": t}));
        }
        self
    }

    /// Adds a nested container holding `types`.
    pub fn group(&mut self, owner: &str, container: &str, types: &[&str]) -> &mut Self {
        let children: Vec<Value> = types.iter().map(|t| json!({"type": t})).collect();
        self.push_widget(owner, json!({"type": container, "children": children}));
        self
    }

    /// Start (or navigate) statement from the current context to `to`.
    fn go(&self, to: &str) -> String {
        if self.kind_of(to) == ClassKind::Fragment {
            format!("nav_navigate {to}")
        } else {
            format!("start_activity {to}")
        }
    }

    fn plain(&mut self, prefix: &str, inner_of: Option<&str>) -> String {
        let name = format!("{prefix}{}", self.fresh());
        self.declare(&name, ClassKind::Plain, inner_of);
        name
    }

    fn listener(&mut self, owner: &str) -> String {
        let n = self.fresh();
        let name = format!("{owner}$Click{n}");
        self.declare(&name, ClassKind::Listener, Some(owner));
        let id = format!("btn{n}");
        self.push_widget(owner, json!({"type": "Button", "id": id, "listeners": ["OnClick"]}));
        let entry = self.entry(owner);
        entry.push(format!("%b{n} = find_view_by_id {id}"));
        entry.push(format!("set_on_click_listener %b{n} {name}"));
        name
    }

    /// Plants transition `from -> to` and records it as ground truth.
    ///
    /// Panics when a nav-graph destination would also start transitions:
    /// those are credited to its host as well and the truth would be short.
    pub fn plant(&mut self, from: &str, to: &str, mech: Mech) -> &mut Self {
        assert!(!self.hosted.contains(from), "hosted fragment {from} cannot start transitions");
        self.initiators.insert(from.to_string());
        let go = self.go(to);
        match mech {
            Mech::Direct => self.entry(from).push(go),
            Mech::ForResult => {
                self.entry(from).push(format!("start_activity_for_result {to}"));
            }
            Mech::Intent => {
                let n = self.fresh();
                let e = self.entry(from);
                e.push(format!("%i{n} = new_intent {to}"));
                e.push(format!("start_activity %i{n}"));
            }
            Mech::Listener => {
                let l = self.listener(from);
                self.class_mut(&l).method("onClick", "%v").push(go);
            }
            Mech::KeyDown => {
                let c = self.class_mut(from);
                c.overrides.insert("onKeyDown".into());
                c.method("onKeyDown", "%k").push(go);
            }
            Mech::Thread => {
                let w = self.plain("Worker", None);
                self.class_mut(&w).method("run", "").push(go);
                self.entry(from).push(format!("thread_start {w}"));
            }
            Mech::Async => {
                let t = self.plain("Task", None);
                let c = self.class_mut(&t);
                c.method("onPreExecute", "");
                c.method("doInBackground", "");
                c.method("doPostExecute", "").push(go);
                self.entry(from).push(format!("async_execute {t}"));
            }
            Mech::Handler => {
                let h = self.plain("Handler", None);
                self.class_mut(&h).method("handleMessage", "").push(go);
                self.entry(from).push(format!("send_message {h}"));
            }
            Mech::Helper => {
                let u = self.plain("Router", None);
                self.class_mut(&u).method("open", "").push(go);
                self.entry(from).push(format!("call {u}.open"));
            }
            Mech::NavGraph => {
                assert_eq!(self.kind_of(from), ClassKind::Activity, "nav host must be an activity");
                assert!(!self.initiators.contains(to), "fragment {to} already starts transitions");
                self.hosted.insert(to.to_string());
                let n = self.fresh();
                self.navs.push((format!("nav{n}"), from.to_string(), to.to_string()));
            }
            Mech::OverDepth => {
                let l = self.listener(from);
                let chain = self.plain("Deep", None);
                self.class_mut(&l).method("onClick", "%v").push(format!("call {chain}.f1"));
                let c = self.class_mut(&chain);
                for i in 1..=DEEP_CHAIN {
                    let next = if i == DEEP_CHAIN {
                        "actionStart".to_string()
                    } else {
                        format!("f{}", i + 1)
                    };
                    c.method(&format!("f{i}"), "").push(format!("call {chain}.{next}"));
                }
                c.method("actionStart", "").push(go);
                self.truth.over_depth.insert((from.to_string(), to.to_string()));
            }
        }
        let fresh = self.truth.edges.insert((from.to_string(), to.to_string()));
        assert!(fresh, "edge {from} -> {to} planted twice");
        self.truth.transition_sites += 1;
        self
    }

    /// Web widget in `owner` loading the concatenation of `pieces`.
    /// `tokens` is the annotated imprint the URL should yield.
    pub fn web(&mut self, owner: &str, pieces: &[Piece], tokens: &[&str]) -> &mut Self {
        let n = self.fresh();
        self.push_widget(owner, json!({"type": "WebView", "id": format!("web{n}")}));
        let mut regs = Vec::new();
        let mut lines = Vec::new();
        for (k, p) in pieces.iter().enumerate() {
            let r = format!("%u{n}_{k}");
            match p {
                Piece::Const(s) => lines.push(format!("{r} = const {}", quote(s))),
                Piece::Res(id, text) => {
                    self.strings.push((id.clone(), text.clone()));
                    lines.push(format!("{r} = res {id}"));
                }
                Piece::PackageName => lines.push(format!("{r} = res manifest.package_name")),
                Piece::AppName => lines.push(format!("{r} = res manifest.app_name")),
                Piece::Runtime(v) => {
                    self.truth.runtime_values.insert(v.clone());
                    lines.push(format!("{r} = runtime"));
                }
                Piece::Helper(s) => {
                    let h = self.plain("Config", None);
                    let m = self.class_mut(&h).method("value", "");
                    m.push(format!("%c = const {}", quote(s)));
                    m.push("return %c".into());
                    lines.push(format!("{r} = call {h}.value"));
                }
            }
            regs.push(r);
        }
        let mut acc = regs[0].clone();
        for (k, r) in regs.iter().enumerate().skip(1) {
            let dst = format!("%url{n}_{k}");
            lines.push(format!("{dst} = append {acc} {r}"));
            acc = dst;
        }
        lines.push(format!("load_url {acc}"));
        self.entry(owner).extend(lines);
        let set = self.truth.tokens.entry(owner.to_string()).or_default();
        set.extend(tokens.iter().map(|t| t.to_string()));
        self
    }

    /// Inner listener with no transition; adds code and a widget only.
    pub fn idle_listener(&mut self, owner: &str) -> &mut Self {
        let l = self.listener(owner);
        self.class_mut(&l).method("onClick", "%v");
        self
    }

    pub fn render(&self) -> String {
        let mut out = String::from("appir/1\n");
        out += &format!("manifest {}\n", self.manifest);
        for (id, text) in &self.strings {
            out += &format!("string {id} {}\n", quote(text));
        }
        for c in &self.classes {
            if let Some(l) = &c.layout {
                out += &format!("layout {} {l}\n", layout_id(&c.name));
            }
        }
        for (id, host, dest) in &self.navs {
            out += &format!("nav {id} {}\n", json!({"host": host, "destinations": [dest]}));
        }
        for c in &self.classes {
            out += &format!("class {} {}", c.name, c.kind.keyword());
            if let Some(o) = &c.inner_of {
                out += &format!(" inner_of {o}");
            }
            out.push('\n');
            for o in &c.overrides {
                out += &format!("  overrides {o}\n");
            }
            let mut methods = c.methods.clone();
            if c.layout.is_some() {
                let name = entry_method(c.kind);
                if !methods.iter().any(|m| m.name == name) {
                    methods.insert(
                        0,
                        MethodSrc {
                            name: name.to_string(),
                            params: String::new(),
                            lines: Vec::new(),
                        },
                    );
                }
            }
            for m in &methods {
                out += &format!("  method {}", m.name);
                if !m.params.is_empty() {
                    out += &format!(" {}", m.params);
                }
                out.push('\n');
                if c.layout.is_some() && m.name == entry_method(c.kind) {
                    let op = if c.kind == ClassKind::Fragment { "inflate" } else { "set_content_view" };
                    out += &format!("    {op} {}\n", layout_id(&c.name));
                }
                for l in &m.lines {
                    out += &format!("    {l}\n");
                }
                out += "  end\n";
            }
            out += "end\n";
        }
        out
    }
}

fn layout_id(class: &str) -> String {
    format!("layout_{}", class.to_lowercase().replace('$', "_"))
}

fn quote(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

fn collect_types(v: &Value) -> Vec<String> {
    let mut out = vec![v["type"].as_str().unwrap_or_default().to_string()];
    if let Some(children) = v["children"].as_array() {
        for c in children {
            out.extend(collect_types(c));
        }
    }
    out
}

/// Number of transition sites in a parsed bundle: start calls, navigation
/// calls and navigation graphs.
pub fn count_transition_sites(bundle: &uedetect_core::app_ir::AppBundle) -> usize {
    let calls = bundle
        .classes
        .iter()
        .flat_map(|c| &c.methods)
        .flat_map(|m| &m.instructions)
        .filter(|i| {
            use uedetect_core::app_ir::ApiCall::*;
            matches!(
                i,
                Instruction::Api {
                    call: StartActivity { .. } | StartActivityForResult { .. } | NavNavigate { .. },
                    ..
                }
            )
        })
        .count();
    calls + bundle.nav_graphs.len()
}
