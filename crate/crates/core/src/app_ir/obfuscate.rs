//! Seeded rename obfuscation, the desk-scale analogue of R8/ProGuard renaming.
//!
//! Class names, method names and widget ids are replaced by short generated
//! identifiers. Framework entry points (lifecycle callbacks, implicit
//! run/start methods, overridden system listeners) keep their names, as a
//! shrinker must keep them for the platform to find them.

use super::model::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

/// Method names never renamed.
pub const KEPT_METHOD_NAMES: &[&str] = &[
    "onCreate",
    "onStart",
    "onResume",
    "onPause",
    "onStop",
    "onDestroy",
    "onCreateView",
    "onViewCreated",
    "onClick",
    "onLongClick",
    "onKeyDown",
    "onBackPressed",
    "run",
    "start",
    "execute",
    "onPreExecute",
    "doInBackground",
    "doPostExecute",
    "onPostExecute",
    "handleMessage",
    "sendMessage",
    "setOnClickListener",
];

/// Old-name to new-name maps produced by [`rename_map`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RenameMap {
    pub classes: BTreeMap<String, String>,
    pub methods: BTreeMap<String, String>,
    pub widget_ids: BTreeMap<String, String>,
}

impl RenameMap {
    pub fn class<'a>(&'a self, name: &'a str) -> &'a str {
        self.classes.get(name).map(String::as_str).unwrap_or(name)
    }

    pub fn method<'a>(&'a self, name: &'a str) -> &'a str {
        self.methods.get(name).map(String::as_str).unwrap_or(name)
    }

    pub fn widget_id<'a>(&'a self, id: &'a str) -> &'a str {
        self.widget_ids.get(id).map(String::as_str).unwrap_or(id)
    }
}

/// `a, b, ..., z, aa, ab, ...`
fn short_name(mut n: usize) -> String {
    let mut chars = Vec::new();
    loop {
        chars.push((b'a' + (n % 26) as u8) as char);
        if n < 26 {
            break;
        }
        n = n / 26 - 1;
    }
    chars.iter().rev().collect()
}

fn assign(
    names: BTreeSet<String>,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    reserved: &BTreeSet<String>,
) -> BTreeMap<String, String> {
    let mut names: Vec<String> = names.into_iter().collect();
    names.shuffle(rng);
    let mut counter = 0;
    let mut out = BTreeMap::new();
    for name in names {
        let fresh = loop {
            let candidate = format!("{prefix}{}", short_name(counter));
            counter += 1;
            if !reserved.contains(&candidate) {
                break candidate;
            }
        };
        out.insert(name, fresh);
    }
    out
}

/// The deterministic rename map that [`apply_rename_obfuscation`] uses for
/// `seed`.
pub fn rename_map(bundle: &AppBundle, seed: u64) -> RenameMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept: BTreeSet<String> = KEPT_METHOD_NAMES.iter().map(|s| s.to_string()).collect();
    for c in &bundle.classes {
        kept.extend(c.overrides_system_listener.iter().cloned());
    }
    let classes: BTreeSet<String> = bundle.classes.iter().map(|c| c.name.clone()).collect();
    let methods: BTreeSet<String> = bundle
        .classes
        .iter()
        .flat_map(|c| &c.methods)
        .map(|m| m.name.clone())
        .filter(|n| !kept.contains(n))
        .collect();
    let widgets: BTreeSet<String> = bundle
        .layouts
        .iter()
        .flat_map(|l| l.root.walk())
        .filter_map(|w| w.widget_id.clone())
        .collect();
    // Class names get an uppercase prefix so they never shadow widget types.
    RenameMap {
        classes: assign(classes, &mut rng, "O", &BTreeSet::new()),
        methods: assign(methods, &mut rng, "", &kept),
        widget_ids: assign(widgets, &mut rng, "w", &BTreeSet::new()),
    }
}

/// Renames classes, methods and widget ids consistently. Constants,
/// resources, API kinds and all structure are left untouched.
pub fn apply_rename_obfuscation(bundle: &AppBundle, seed: u64) -> AppBundle {
    let map = rename_map(bundle, seed);
    apply_rename_map(bundle, &map)
}

pub fn apply_rename_map(bundle: &AppBundle, map: &RenameMap) -> AppBundle {
    let cls = |s: &String| map.class(s).to_string();
    let mut out = bundle.clone();
    out.manifest.declared_activities = bundle.manifest.declared_activities.iter().map(cls).collect();
    for l in &mut out.layouts {
        rename_widgets(&mut l.root, map);
    }
    for g in &mut out.nav_graphs {
        g.host_class = cls(&g.host_class);
        g.destinations = g.destinations.iter().map(cls).collect();
    }
    for c in &mut out.classes {
        c.name = cls(&c.name);
        c.inner_of = c.inner_of.as_ref().map(cls);
        for m in &mut c.methods {
            m.name = map.method(&m.name).to_string();
            for instr in &mut m.instructions {
                rename_instruction(instr, map);
            }
        }
    }
    out
}

fn rename_widgets(w: &mut WidgetNode, map: &RenameMap) {
    if let Some(id) = &w.widget_id {
        w.widget_id = Some(map.widget_id(id).to_string());
    }
    for c in &mut w.children {
        rename_widgets(c, map);
    }
}

fn rename_instruction(instr: &mut Instruction, map: &RenameMap) {
    let rc = |s: &mut String| *s = map.class(s).to_string();
    match instr {
        Instruction::Call { target, .. } => {
            target.class = map.class(&target.class).to_string();
            target.method = map.method(&target.method).to_string();
        }
        Instruction::Api { call, .. } => match call {
            ApiCall::FindViewById { widget } => *widget = map.widget_id(widget).to_string(),
            // `new_widget` of an app class instantiates that class (fragments).
            ApiCall::NewWidget { widget_type } => rc(widget_type),
            ApiCall::StartActivity {
                target: StartTarget::Class(c),
            }
            | ApiCall::StartActivityForResult {
                target: StartTarget::Class(c),
            }
            | ApiCall::NewIntent { target: c }
            | ApiCall::NavNavigate { destination: c }
            | ApiCall::SetOnClickListener { listener: c, .. }
            | ApiCall::ThreadStart { class: c }
            | ApiCall::AsyncExecute { class: c }
            | ApiCall::SendMessage { class: c } => rc(c),
            _ => {}
        },
        _ => {}
    }
}
