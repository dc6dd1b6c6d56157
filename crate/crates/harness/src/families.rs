//! Labeled app families for the classification corpus.
//!
//! Every family has a fixed core motif (screen names and transitions) plus
//! per-app noise: optional branches, shared filler screens, widget counts,
//! imprint vocabulary and manifest fields. Motif edge sets are pairwise
//! disjoint.

use crate::ir::{konst, AppBuilder, Mech, Piece};
use crate::truth::GroundTruth;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use uedetect_learn::detector::Label;

/// One generated app before rendering.
#[derive(Debug, Clone, Default)]
pub struct Plan {
    /// `(name, is_fragment)`.
    pub nodes: Vec<(String, bool)>,
    pub edges: Vec<(String, String)>,
    /// Flat widgets and nested groups per owner.
    pub widgets: Vec<(String, Vec<&'static str>)>,
    pub groups: Vec<(String, &'static str, Vec<&'static str>)>,
    pub webs: Vec<(String, Vec<String>)>,
}

impl Plan {
    fn node(&mut self, name: &str, fragment: bool) {
        if !self.has(name) {
            self.nodes.push((name.to_string(), fragment));
        }
    }

    fn has(&self, name: &str) -> bool {
        self.nodes.iter().any(|(n, _)| n == name)
    }

    fn edge(&mut self, from: &str, to: &str) {
        let e = (from.to_string(), to.to_string());
        if from != to && !self.edges.contains(&e) {
            self.edges.push(e);
        }
    }

    fn initiates(&self, name: &str) -> bool {
        self.edges.iter().any(|(a, _)| a == name)
    }

    fn is_fragment(&self, name: &str) -> bool {
        self.nodes.iter().any(|(n, f)| n == name && *f)
    }
}

/// Core transitions per family, used for the disjointness check.
pub fn motif_edges(label: Label) -> BTreeSet<(String, String)> {
    let pairs: &[(&str, &str)] = match label {
        Label::InvestmentScam => &[
            ("Home", "Personal"),
            ("Personal", "LoanApply"),
            ("Personal", "BankCard"),
            ("Personal", "Certification"),
        ],
        Label::GamblingGame => &[
            ("Lobby", "Hub"),
            ("Hub", "Bet1"),
            ("Hub", "Bet2"),
            ("Hub", "Bet3"),
            ("Hub", "Bet4"),
            ("Hub", "Recharge"),
        ],
        Label::Porn => &[
            ("Cover", "Gallery"),
            ("Gallery", "Player"),
            ("Gallery", "VipCenter"),
            ("VipCenter", "VipPay"),
        ],
        Label::Miscellaneous => &[
            ("Launcher", "LinesFrag"),
            ("LinesFrag", "LineDetailFrag"),
            ("Launcher", "Subscribe"),
            ("Subscribe", "PlanFrag"),
        ],
        Label::Legitimate => &[
            ("Main", "HomeTab"),
            ("Main", "DiscoverTab"),
            ("Main", "MeTab"),
            ("Main", "FeedFrag"),
            ("FeedFrag", "Article"),
            ("Main", "Search"),
            ("Search", "Article"),
            ("Article", "Comments"),
            ("Main", "Preferences"),
            ("Preferences", "Account"),
            ("Preferences", "Notifications"),
        ],
    };
    pairs
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect()
}

const GENERIC_TOKENS: [&str; 12] = [
    "api", "v1", "v2", "cdn", "static", "m", "h5", "index", "net", "app", "web", "cloud",
];

fn vocabulary(label: Label) -> &'static [&'static str] {
    match label {
        Label::InvestmentScam => &[
            "loan", "credit", "cash", "quota", "repay", "idcard", "bankcard", "rate", "lend", "borrow",
        ],
        Label::GamblingGame => &[
            "bet", "casino", "odds", "slot", "lottery", "jackpot", "spin", "poker", "recharge", "bonus",
        ],
        Label::Porn => &["video", "live", "hot", "vip", "stream", "av", "night", "room", "girls", "hd"],
        Label::Miscellaneous => &[
            "proxy", "node", "vpn", "sub", "config", "server", "line", "speed", "tunnel", "ss",
        ],
        Label::Legitimate => &[
            "news", "weather", "user", "feed", "article", "profile", "search", "comment", "upload", "img",
        ],
    }
}

/// Widget types favored by each family.
fn palette(label: Label) -> &'static [&'static str] {
    match label {
        Label::InvestmentScam => &["EditText", "Spinner", "SeekBar", "CheckBox", "TextView"],
        Label::GamblingGame => &["GridView", "ImageView", "ImageButton", "TextView"],
        Label::Porn => &["RecyclerView", "ImageView", "VideoView", "TextView"],
        Label::Miscellaneous => &["ListView", "Switch", "ProgressBar", "TextView"],
        Label::Legitimate => &[
            "RecyclerView", "TextView", "ImageView", "EditText", "Toolbar", "TabLayout", "Switch", "ProgressBar",
            "CheckBox", "RadioButton", "Spinner", "ImageButton", "RatingBar", "SearchView",
        ],
    }
}

const FILLER_SCREENS: [&str; 8] = ["Splash", "Settings", "About", "Feedback", "Update", "Notice", "Share", "Help"];
const FILLER_WIDGETS: [&str; 3] = ["TextView", "ImageView", "Button"];

/// Generates the motif and noise of one app of `label`.
pub fn plan(label: Label, rng: &mut ChaCha8Rng) -> Plan {
    let mut p = Plan::default();
    let core: Vec<(String, String)> = motif_edges(label).into_iter().collect();
    // Optional branches: any motif edge whose target is otherwise unreached
    // may be dropped, but never more than one per app.
    let drop = if label != Label::Legitimate && rng.gen_bool(0.3) {
        let leaves: Vec<&(String, String)> = core
            .iter()
            .filter(|(_, b)| !core.iter().any(|(a, _)| a == b))
            .collect();
        leaves.choose(rng).map(|e| (*e).clone())
    } else {
        None
    };
    let gambling_bets = rng.gen_range(2..=4);
    for (a, b) in &core {
        if Some((a.clone(), b.clone())) == drop {
            continue;
        }
        if label == Label::GamblingGame {
            if let Some(k) = b.strip_prefix("Bet") {
                if k.parse::<usize>().unwrap_or(0) > gambling_bets {
                    continue;
                }
            }
        }
        for n in [a, b] {
            p.node(n, n.ends_with("Frag") || n.ends_with("Tab"));
        }
        p.edge(a, b);
    }
    if label == Label::Legitimate {
        for extra in ["Edit", "Gallery2", "Login", "Register"] {
            if rng.gen_bool(0.5) {
                p.node(extra, false);
                p.edge("Main", extra);
            }
        }
    }

    let entry = match label {
        Label::InvestmentScam => "Home",
        Label::GamblingGame => "Lobby",
        Label::Porn => "Cover",
        Label::Miscellaneous => "Launcher",
        Label::Legitimate => "Main",
    };
    let fillers = rng.gen_range(0..=2);
    for name in FILLER_SCREENS.choose_multiple(rng, fillers) {
        p.node(name, false);
        if *name == "Splash" {
            p.edge(name, entry);
        } else {
            let from = activity_source(&p, rng);
            p.edge(&from, name);
        }
    }
    for _ in 0..rng.gen_range(0..=1) {
        let a = activity_source(&p, rng);
        let b = p.nodes.choose(rng).expect("nodes").0.clone();
        if !p.is_fragment(&b) {
            p.edge(&a, &b);
        }
    }

    let names: Vec<String> = p.nodes.iter().map(|(n, _)| n.clone()).collect();
    let pal = palette(label);
    let (lo, hi) = if label == Label::Legitimate { (8, 16) } else { (2, 5) };
    for n in &names {
        let mut w: Vec<&'static str> = (0..rng.gen_range(lo..=hi))
            .map(|_| *pal.choose(rng).expect("palette"))
            .collect();
        w.extend((0..rng.gen_range(0..=2)).map(|_| *FILLER_WIDGETS.choose(rng).expect("fillers")));
        p.widgets.push((n.clone(), w));
        if label == Label::Legitimate {
            for _ in 0..rng.gen_range(1..=2) {
                let inner = (0..rng.gen_range(3..=5))
                    .map(|_| *pal.choose(rng).expect("palette"))
                    .collect();
                p.groups.push((n.clone(), "CardView", inner));
            }
        }
    }

    let web_owners = match label {
        Label::InvestmentScam => vec!["LoanApply", "Certification", "Home"],
        Label::GamblingGame => vec!["Recharge", "Bet1", "Lobby"],
        Label::Porn => vec!["Player", "VipPay", "Gallery"],
        Label::Miscellaneous => vec!["Subscribe", "LineDetailFrag", "Launcher"],
        Label::Legitimate => vec!["Article", "HomeTab", "Account"],
    };
    let webs = rng.gen_range(1..=2);
    let owners: Vec<&str> = web_owners.into_iter().filter(|o| p.has(o)).take(webs).collect();
    for owner in owners {
        p.webs.push((owner.to_string(), tokens(label, rng)));
    }
    p
}

fn activity_source(p: &Plan, rng: &mut ChaCha8Rng) -> String {
    let acts: Vec<&String> = p.nodes.iter().filter(|(_, f)| !f).map(|(n, _)| n).collect();
    acts.choose(rng).expect("every family has an activity").to_string()
}

/// Distinct imprint tokens: mostly family vocabulary with generic filler and
/// occasional words from another family.
fn tokens(label: Label, rng: &mut ChaCha8Rng) -> Vec<String> {
    let own = rng.gen_range(2..=4);
    let mut out: Vec<String> = vocabulary(label)
        .choose_multiple(rng, own)
        .map(|s| s.to_string())
        .collect();
    let generic = rng.gen_range(1..=3);
    out.extend(
        GENERIC_TOKENS
            .choose_multiple(rng, generic)
            .map(|s| s.to_string()),
    );
    if rng.gen_bool(0.25) {
        let other = Label::ALL[rng.gen_range(0..Label::ALL.len())];
        if other != label {
            out.push(vocabulary(other).choose(rng).expect("vocabulary").to_string());
        }
    }
    let mut seen = BTreeSet::new();
    out.retain(|t| seen.insert(t.clone()));
    out.shuffle(rng);
    out
}

/// Mechanisms by `(source is fragment, target is fragment)`.
fn pick_mech(p: &Plan, from: &str, to: &str, rng: &mut ChaCha8Rng) -> Mech {
    use Mech::*;
    let from_frag = p.is_fragment(from);
    let to_frag = p.is_fragment(to);
    let options: &[Mech] = match (from_frag, to_frag) {
        (false, false) => &[
            Direct, ForResult, Intent, Listener, Listener, KeyDown, Thread, Async, Handler, Helper,
        ],
        (false, true) if !p.initiates(to) => &[Direct, Listener, Helper, NavGraph, NavGraph],
        (false, true) => &[Direct, Listener, Helper],
        (true, _) => &[Direct, Listener, Listener, Helper, Thread, Handler, Async],
    };
    *options.choose(rng).expect("mechanisms")
}

/// Joins tokens into a URL split across constant, resource and helper pieces,
/// followed by a runtime value.
fn url_pieces(tokens: &[String], tag: &str, rng: &mut ChaCha8Rng) -> Vec<Piece> {
    let mut segments = Vec::new();
    match tokens {
        [] => {}
        [one] => segments.push(format!("https://{one}/")),
        [a, b, rest @ ..] => {
            segments.push(format!("https://{a}.{b}/"));
            for (i, t) in rest.iter().enumerate() {
                let sep = if i + 1 == rest.len() { "?" } else { "/" };
                segments.push(format!("{t}{sep}"));
            }
        }
    }
    let mut pieces = Vec::new();
    let mut i = 0;
    let mut k = 0;
    while i < segments.len() {
        let take = rng.gen_range(1..=2).min(segments.len() - i);
        let text: String = segments[i..i + take].concat();
        pieces.push(match rng.gen_range(0..4) {
            0 => {
                k += 1;
                Piece::Res(format!("{tag}_{k}"), text)
            }
            1 => Piece::Helper(text),
            _ => konst(&text),
        });
        i += take;
    }
    pieces.push(Piece::Runtime(format!("rt{}", rng.gen_range(1000..9999))));
    pieces
}

/// Renders a plan into `b`, recording ground truth.
pub fn realize(p: &Plan, b: &mut AppBuilder, rng: &mut ChaCha8Rng) {
    for (n, frag) in &p.nodes {
        if *frag {
            b.fragment(n);
        } else {
            b.activity(n);
        }
    }
    for (owner, w) in &p.widgets {
        b.widgets(owner, w);
    }
    for (owner, container, inner) in &p.groups {
        b.group(owner, container, inner);
    }
    for (from, to) in &p.edges {
        let mech = pick_mech(p, from, to, rng);
        b.plant(from, to, mech);
    }
    for (i, (owner, toks)) in p.webs.iter().enumerate() {
        let pieces = url_pieces(toks, &format!("url{i}"), rng);
        let refs: Vec<&str> = toks.iter().map(String::as_str).collect();
        b.web(owner, &pieces, &refs);
    }
    if rng.gen_bool(0.5) {
        let owner = &p.nodes[rng.gen_range(0..p.nodes.len())].0;
        b.idle_listener(owner);
    }
}

const PERMISSIONS: [&str; 20] = [
    "INTERNET",
    "ACCESS_NETWORK_STATE",
    "ACCESS_WIFI_STATE",
    "READ_PHONE_STATE",
    "WRITE_EXTERNAL_STORAGE",
    "READ_EXTERNAL_STORAGE",
    "CAMERA",
    "RECORD_AUDIO",
    "ACCESS_FINE_LOCATION",
    "READ_CONTACTS",
    "READ_SMS",
    "CALL_PHONE",
    "VIBRATE",
    "WAKE_LOCK",
    "REQUEST_INSTALL_PACKAGES",
    "SYSTEM_ALERT_WINDOW",
    "BIND_VPN_SERVICE",
    "FOREGROUND_SERVICE",
    "GET_ACCOUNTS",
    "POST_NOTIFICATIONS",
];

/// Probability of each permission; families raise a few of them.
fn permission_rate(label: Label, perm: &str) -> f64 {
    let boosted: &[&str] = match label {
        Label::InvestmentScam => &["READ_CONTACTS", "READ_SMS", "CAMERA", "READ_PHONE_STATE"],
        Label::GamblingGame => &["REQUEST_INSTALL_PACKAGES", "SYSTEM_ALERT_WINDOW", "VIBRATE"],
        Label::Porn => &["WRITE_EXTERNAL_STORAGE", "WAKE_LOCK", "REQUEST_INSTALL_PACKAGES"],
        Label::Miscellaneous => &["BIND_VPN_SERVICE", "FOREGROUND_SERVICE", "ACCESS_WIFI_STATE"],
        Label::Legitimate => &["ACCESS_FINE_LOCATION", "POST_NOTIFICATIONS", "GET_ACCOUNTS", "CAMERA"],
    };
    match perm {
        "INTERNET" => 1.0,
        _ if boosted.contains(&perm) => 0.55,
        _ => 0.25,
    }
}

const NAME_WORDS: [&str; 16] = [
    "app", "mobile", "pro", "plus", "lite", "go", "best", "top", "star", "fun", "fast", "super", "my", "smart",
    "daily", "one",
];

fn hint_words(label: Label) -> &'static [&'static str] {
    match label {
        Label::InvestmentScam => &["cash", "credit", "loan", "money"],
        Label::GamblingGame => &["lucky", "game", "bet", "win"],
        Label::Porn => &["video", "live", "hot", "night"],
        Label::Miscellaneous => &["vpn", "proxy", "tool", "speed"],
        Label::Legitimate => &["news", "note", "weather", "photo"],
    }
}

fn name_word(label: Label, rng: &mut ChaCha8Rng) -> &'static str {
    if rng.gen_bool(0.35) {
        hint_words(label).choose(rng).expect("hints")
    } else {
        NAME_WORDS.choose(rng).expect("words")
    }
}

/// Manifest identity of one app.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Identity {
    pub package: String,
    pub app_name: String,
    pub cert: String,
    pub permissions: Vec<String>,
}

/// Developer account shared by a group of apps of one family.
#[derive(Debug, Clone)]
pub struct Developer {
    pub cert: String,
    pub package: String,
    pub app_name: String,
}

pub fn developer(label: Label, index: usize, rng: &mut ChaCha8Rng) -> Developer {
    let (a, b) = (name_word(label, rng), name_word(label, rng));
    Developer {
        cert: format!("{:016x}", rng.gen::<u64>()),
        package: format!("com.{a}{index}.{b}"),
        app_name: format!("{a} {b}"),
    }
}

/// App name reused by unrelated developers of one family.
pub fn template_name(label: Label, index: usize, rng: &mut ChaCha8Rng) -> String {
    let hint = hint_words(label).choose(rng).expect("hints");
    let word = NAME_WORDS.choose(rng).expect("words");
    format!("{hint} {word} {}", index + 1)
}

/// Identity for an app signed by `dev`; clones sometimes keep its names.
pub fn identity(label: Label, serial: usize, dev: &Developer, shared_cert: Option<&str>, rng: &mut ChaCha8Rng) -> Identity {
    let package = if rng.gen_bool(0.15) {
        dev.package.clone()
    } else {
        format!("{}.{}{serial}", dev.package, name_word(label, rng))
    };
    let app_name = if rng.gen_bool(0.25) {
        dev.app_name.clone()
    } else {
        format!("{} {} {serial}", name_word(label, rng), name_word(label, rng))
    };
    let permissions = PERMISSIONS
        .iter()
        .filter(|p| rng.gen_bool(permission_rate(label, p)))
        .map(|p| format!("android.permission.{p}"))
        .collect();
    Identity {
        package,
        app_name,
        cert: shared_cert.map(str::to_string).unwrap_or_else(|| dev.cert.clone()),
        permissions,
    }
}

/// Builds one labeled app; returns its source and ground truth.
pub fn generate(app_id: &str, label: Label, id: &Identity, rng: &mut ChaCha8Rng) -> (String, GroundTruth) {
    let p = plan(label, rng);
    let mut b = AppBuilder::new(app_id, &id.package, &id.app_name, &id.cert, &id.permissions);
    realize(&p, &mut b, rng);
    b.truth.label = Some(label);
    (b.render(), b.truth)
}
