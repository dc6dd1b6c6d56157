//! UI widget identification: native widgets per activity/fragment, and
//! network imprints for web widgets.

mod taint;

pub use taint::{
    backward_taint_text, load_url_sites, tokenize_url_text, SinkLocation, TaintError, TaintResult,
    URL_DELIMITERS,
};

use crate::app_ir::{ApiCall, AppBundle, Instruction, ListenerKind, MethodRef};
use crate::atg::code_owners;
use crate::callgraph::{bfs_depths, CallGraph};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidgetOrigin {
    Layout(String),
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NativeWidget {
    pub widget_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub widget_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub icon: Option<String>,
    #[serde(default)]
    pub listeners: BTreeSet<ListenerKind>,
    pub origin: WidgetOrigin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UiAttributes {
    pub owner: String,
    pub native_widgets: Vec<NativeWidget>,
    pub imprint_tokens: BTreeSet<String>,
    pub has_webview: bool,
    /// Deepest layout tree reached by the owner (0 when none).
    pub layout_depth: usize,
}

impl UiAttributes {
    pub fn empty(owner: impl Into<String>) -> Self {
        UiAttributes {
            owner: owner.into(),
            native_widgets: Vec::new(),
            imprint_tokens: BTreeSet::new(),
            has_webview: false,
            layout_depth: 0,
        }
    }

    pub fn listener_count(&self) -> usize {
        self.native_widgets.iter().map(|w| w.listeners.len()).sum()
    }
}

/// Tokens dropped from every imprint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stoplist(BTreeSet<String>);

impl Default for Stoplist {
    fn default() -> Self {
        Stoplist(
            ["github", "http", "https", "www"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        )
    }
}

impl Stoplist {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(tokens: I) -> Self {
        Stoplist(tokens.into_iter().map(|s| s.into().to_lowercase()).collect())
    }

    /// One token per line; `#` starts a comment.
    pub fn parse(text: &str) -> Self {
        Stoplist::new(
            text.lines()
                .map(|l| l.split('#').next().unwrap_or("").trim())
                .filter(|l| !l.is_empty()),
        )
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(&token.to_lowercase())
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

/// Warnings collected while identifying widgets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum WidgetWarning {
    UnresolvedWidget { owner: String, at: String },
    UnresolvedLayout { owner: String, layout: String },
}

impl std::fmt::Display for WidgetWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WidgetWarning::UnresolvedWidget { owner, at } => {
                write!(f, "{owner}: widget at {at} not resolved")
            }
            WidgetWarning::UnresolvedLayout { owner, layout } => {
                write!(f, "{owner}: layout `{layout}` not found")
            }
        }
    }
}

/// Methods whose UI work is credited to `owner`: everything reachable from
/// the owner's own methods that is not lexically owned by another UI class.
fn owner_methods(bundle: &AppBundle, cg: &CallGraph, owner: &str, max_depth: usize) -> BTreeSet<MethodRef> {
    let foreign = |m: &MethodRef| {
        m.class != owner && {
            let owners = code_owners(m, bundle, cg, 0);
            !owners.is_empty() && !owners.contains(owner)
        }
    };
    let mut out = BTreeSet::new();
    for root in cg.methods_of(owner) {
        let reached = bfs_depths(root, max_depth, |m| {
            cg.successors(m).filter(|n| !foreign(n)).cloned().collect()
        });
        out.extend(reached.into_keys());
    }
    out
}

pub fn identify_native_widgets(
    bundle: &AppBundle,
    cg: &CallGraph,
    max_depth: usize,
) -> (BTreeMap<String, UiAttributes>, Vec<WidgetWarning>) {
    let mut out = BTreeMap::new();
    let mut warnings = Vec::new();
    for class in bundle.classes.iter().filter(|c| c.kind.is_ui()) {
        let owner = class.name.as_str();
        let methods = owner_methods(bundle, cg, owner, max_depth);

        let mut layouts: BTreeSet<&str> = BTreeSet::new();
        let mut dynamic: Vec<NativeWidget> = Vec::new();
        let mut pending_listeners: Vec<(&str, String)> = Vec::new();

        for mref in &methods {
            let Some(body) = bundle.method(mref) else { continue };
            // Defining instruction -> index into `dynamic`.
            let mut created: BTreeMap<usize, usize> = BTreeMap::new();
            let mut attached: BTreeSet<usize> = BTreeSet::new();
            let first_dynamic = dynamic.len();
            for (idx, instr) in body.instructions.iter().enumerate() {
                let Instruction::Api { dst, call } = instr else { continue };
                match call {
                    ApiCall::SetContentView { layout } | ApiCall::Inflate { layout } => {
                        layouts.insert(layout);
                    }
                    ApiCall::NewWidget { widget_type } => {
                        if bundle.class(widget_type).is_some() {
                            continue;
                        }
                        if dst.is_some() {
                            created.insert(idx, dynamic.len());
                        }
                        dynamic.push(NativeWidget {
                            widget_type: widget_type.clone(),
                            widget_id: None,
                            icon: None,
                            listeners: BTreeSet::new(),
                            origin: WidgetOrigin::Dynamic,
                        });
                    }
                    ApiCall::AttachWidget { child, .. } => {
                        let def = body.reaching_def(child, idx);
                        if let Some(&w) = def.and_then(|d| created.get(&d)) {
                            attached.insert(w);
                        }
                    }
                    ApiCall::SetOnClickListener { widget, .. } => {
                        let def = body.reaching_def(widget, idx);
                        if let Some(&w) = def.and_then(|d| created.get(&d)) {
                            dynamic[w].listeners.insert(ListenerKind::OnClick);
                            continue;
                        }
                        match def.map(|d| &body.instructions[d]) {
                            Some(Instruction::Api {
                                call: ApiCall::FindViewById { widget: id },
                                ..
                            }) => pending_listeners.push((id.as_str(), format!("{mref}#{idx}"))),
                            _ => warnings.push(WidgetWarning::UnresolvedWidget {
                                owner: owner.to_string(),
                                at: format!("{mref}#{idx}"),
                            }),
                        }
                    }
                    _ => {}
                }
            }
            // Widgets never attached to the view tree are not rendered.
            let local: Vec<NativeWidget> = dynamic.drain(first_dynamic..).collect();
            dynamic.extend(
                local
                    .into_iter()
                    .enumerate()
                    .filter(|(i, _)| attached.contains(&(first_dynamic + i)))
                    .map(|(_, w)| w),
            );
        }

        let mut widgets = Vec::new();
        let mut depth = 0;
        for id in &layouts {
            let Some(layout) = bundle.layout(id) else {
                warnings.push(WidgetWarning::UnresolvedLayout {
                    owner: owner.to_string(),
                    layout: id.to_string(),
                });
                continue;
            };
            depth = depth.max(layout.root.depth());
            for w in layout.root.walk() {
                widgets.push(NativeWidget {
                    widget_type: w.widget_type.clone(),
                    widget_id: w.widget_id.clone(),
                    icon: w.icon.clone(),
                    listeners: w.listeners.clone(),
                    origin: WidgetOrigin::Layout(layout.id.clone()),
                });
            }
        }
        for (wid, at) in pending_listeners {
            let mut hit = false;
            for w in widgets.iter_mut().filter(|w| w.widget_id.as_deref() == Some(wid)) {
                w.listeners.insert(ListenerKind::OnClick);
                hit = true;
            }
            if !hit {
                warnings.push(WidgetWarning::UnresolvedWidget {
                    owner: owner.to_string(),
                    at,
                });
            }
        }
        widgets.extend(dynamic);
        let has_webview = widgets.iter().any(|w| w.widget_type == "WebView");
        out.insert(
            owner.to_string(),
            UiAttributes {
                owner: owner.to_string(),
                native_widgets: widgets,
                imprint_tokens: BTreeSet::new(),
                has_webview,
                layout_depth: depth,
            },
        );
    }
    (out, warnings)
}

/// Per-sink detail behind [`generate_imprints`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ImprintSite {
    pub owners: BTreeSet<String>,
    pub result: TaintResult,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Imprints {
    /// Every activity/fragment, with its (possibly empty) token set.
    pub by_owner: BTreeMap<String, BTreeSet<String>>,
    pub sites: Vec<ImprintSite>,
}

impl Imprints {
    pub fn webview_owners(&self) -> BTreeSet<&str> {
        self.sites
            .iter()
            .flat_map(|s| s.owners.iter().map(String::as_str))
            .collect()
    }
}

pub fn generate_imprints(
    bundle: &AppBundle,
    cg: &CallGraph,
    stoplist: &Stoplist,
    max_depth: usize,
) -> Imprints {
    let mut imprints = Imprints {
        by_owner: bundle
            .classes
            .iter()
            .filter(|c| c.kind.is_ui())
            .map(|c| (c.name.clone(), BTreeSet::new()))
            .collect(),
        sites: Vec::new(),
    };
    for sink in load_url_sites(bundle) {
        let Ok(mut result) = backward_taint_text(bundle, cg, &sink, max_depth) else {
            continue;
        };
        result.tokens.retain(|t| !stoplist.contains(t));
        let owners = code_owners(&sink.method, bundle, cg, max_depth);
        for o in &owners {
            imprints
                .by_owner
                .entry(o.clone())
                .or_default()
                .extend(result.tokens.iter().cloned());
        }
        imprints.sites.push(ImprintSite { owners, result });
    }
    imprints
}
