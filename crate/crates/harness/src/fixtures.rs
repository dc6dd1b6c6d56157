//! The five benchmark apps, one per transition style plus a mixed one.
//!
//! Each fixture plants a fixed list of transitions and web widgets; the
//! builder records them as ground truth. Across the five apps the web
//! widgets carry 36 annotated imprint tokens.

use crate::ir::{konst, AppBuilder, Mech, Piece};
use crate::truth::GroundTruth;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fixture {
    pub name: &'static str,
    pub style: &'static str,
    pub source: String,
    pub truth: GroundTruth,
}

pub const TRANSITION_COUNTS: [usize; 5] = [13, 13, 13, 12, 11];
pub const FIXTURE_TOKENS: usize = 36;

fn perms() -> Vec<String> {
    vec!["android.permission.INTERNET".to_string()]
}

fn finish(name: &'static str, style: &'static str, b: AppBuilder) -> Fixture {
    Fixture {
        name,
        style,
        source: b.render(),
        truth: b.truth,
    }
}

/// Activity to activity.
pub fn app1() -> Fixture {
    let mut b = AppBuilder::new("App1", "org.bench.app1", "Bench One", "b1", &perms());
    for a in ["Main", "Login", "Register", "Home", "Profile", "Settings", "About", "Detail", "Web"] {
        b.activity(a);
    }
    b.widgets("Main", &["ImageView", "TextView"])
        .plant("Main", "Login", Mech::Direct)
        .plant("Main", "Register", Mech::Listener)
        .plant("Login", "Home", Mech::Intent)
        .plant("Login", "Register", Mech::ForResult)
        .plant("Register", "Home", Mech::Listener)
        .plant("Home", "Profile", Mech::Listener)
        .plant("Home", "Settings", Mech::KeyDown)
        .plant("Home", "Detail", Mech::Thread)
        .plant("Profile", "Settings", Mech::Helper)
        .plant("Settings", "About", Mech::Async)
        .plant("Detail", "Web", Mech::Handler)
        .plant("About", "Main", Mech::Intent)
        .plant("Web", "Home", Mech::KeyDown);
    b.group("Login", "LinearLayout", &["EditText", "EditText"]);
    b.web(
        "Web",
        &[
            Piece::Res("base".into(), "https://www.lucky-bet.cc/api/v2/".into()),
            konst("login?channel=android&ref="),
            Piece::Runtime("u93812".into()),
        ],
        &["lucky-bet", "cc", "api", "v2", "login", "channel", "android", "ref"],
    );
    finish("App1", "Act-Act", b)
}

/// Activity to fragment.
pub fn app2() -> Fixture {
    let mut b = AppBuilder::new("App2", "org.bench.app2", "Bench Two", "b2", &perms());
    for a in ["Main", "Shop", "Account"] {
        b.activity(a);
    }
    for f in [
        "FeedFrag", "NewsFrag", "VideoFrag", "WebFrag", "CartFrag", "OrderFrag", "PayFrag", "ProfileFrag",
        "WalletFrag", "HelpFrag",
    ] {
        b.fragment(f);
    }
    b.plant("Main", "FeedFrag", Mech::NavGraph)
        .plant("Main", "NewsFrag", Mech::Direct)
        .plant("Main", "VideoFrag", Mech::Listener)
        .plant("Main", "WebFrag", Mech::Helper)
        .plant("Main", "CartFrag", Mech::Listener)
        .plant("Shop", "CartFrag", Mech::NavGraph)
        .plant("Shop", "OrderFrag", Mech::Listener)
        .plant("Shop", "PayFrag", Mech::Thread)
        .plant("Shop", "FeedFrag", Mech::KeyDown)
        .plant("Account", "ProfileFrag", Mech::Direct)
        .plant("Account", "WalletFrag", Mech::Async)
        .plant("Account", "HelpFrag", Mech::Handler)
        .plant("Account", "NewsFrag", Mech::Listener);
    b.widgets("FeedFrag", &["RecyclerView"]).widgets("VideoFrag", &["VideoView", "SeekBar"]);
    b.web(
        "WebFrag",
        &[
            Piece::Helper("http://192.168.1.20/".into()),
            konst("feed/list?page="),
            Piece::Runtime("p2".into()),
        ],
        &["192", "168", "1", "20", "feed", "list", "page"],
    );
    finish("App2", "Act-Frag", b)
}

/// Fragment to fragment.
pub fn app3() -> Fixture {
    let mut b = AppBuilder::new("App3", "org.bench.app3", "Bench Three", "b3", &perms());
    b.activity("Main");
    b.widgets("Main", &["FrameLayout"]);
    for f in ["AFrag", "BFrag", "CFrag", "DFrag", "EFrag", "FFrag", "GFrag"] {
        b.fragment(f);
    }
    b.plant("AFrag", "BFrag", Mech::Direct)
        .plant("AFrag", "CFrag", Mech::Listener)
        .plant("BFrag", "CFrag", Mech::Helper)
        .plant("BFrag", "DFrag", Mech::Thread)
        .plant("CFrag", "DFrag", Mech::Async)
        .plant("CFrag", "EFrag", Mech::Handler)
        .plant("DFrag", "EFrag", Mech::Listener)
        .plant("DFrag", "AFrag", Mech::Direct)
        .plant("EFrag", "FFrag", Mech::Helper)
        .plant("EFrag", "GFrag", Mech::KeyDown)
        .plant("FFrag", "GFrag", Mech::Direct)
        .plant("GFrag", "AFrag", Mech::Listener)
        .plant("FFrag", "BFrag", Mech::Thread);
    b.web(
        "EFrag",
        &[
            Piece::Res("api".into(), "https://api.vipclub.vip/".into()),
            konst("/live/room?id="),
            konst("&token="),
            Piece::Runtime("sess7781".into()),
        ],
        &["api", "vipclub", "vip", "live", "room", "id", "token"],
    );
    finish("App3", "Frag-Frag", b)
}

/// Navigation component only.
pub fn app4() -> Fixture {
    let mut b = AppBuilder::new("App4", "org.bench.app4", "Bench Four", "b4", &perms());
    for a in ["Main", "Detail", "Player"] {
        b.activity(a);
    }
    for f in [
        "HomeFrag", "SearchFrag", "MineFrag", "InfoFrag", "CommentFrag", "LiveFrag", "ShareFrag", "RelatedFrag",
        "ChatFrag",
    ] {
        b.fragment(f);
    }
    b.plant("Main", "HomeFrag", Mech::NavGraph)
        .plant("Main", "SearchFrag", Mech::NavGraph)
        .plant("Main", "MineFrag", Mech::NavGraph)
        .plant("Detail", "InfoFrag", Mech::NavGraph)
        .plant("Detail", "CommentFrag", Mech::NavGraph)
        .plant("Player", "LiveFrag", Mech::NavGraph)
        .plant("Main", "ShareFrag", Mech::Listener)
        .plant("Detail", "RelatedFrag", Mech::Direct)
        .plant("Player", "ChatFrag", Mech::Helper)
        .plant("Main", "Detail", Mech::Direct)
        .plant("Detail", "Player", Mech::Direct)
        .plant("Player", "Main", Mech::Listener);
    b.web(
        "LiveFrag",
        &[
            konst("https://play.hotlive.tv"),
            konst("/hls/"),
            Piece::Runtime("room5521".into()),
            konst(".m3u8?"),
            Piece::Res("stream_key".into(), "key=live_secret".into()),
        ],
        &["play", "hotlive", "tv", "hls", "m3u8", "key", "live_secret"],
    );
    finish("App4", "Navigation", b)
}

/// Every transition style, plus one chain deeper than the analysis limit.
pub fn app5() -> Fixture {
    let mut b = AppBuilder::new("App5", "com.quick.pay", "Quick Pay", "b5", &perms());
    for a in ["Main", "Login", "Home", "Detail", "Pay", "Result", "Bonus"] {
        b.activity(a);
    }
    for f in ["HomeFrag", "ListFrag", "ItemFrag"] {
        b.fragment(f);
    }
    b.plant("Main", "Login", Mech::Direct)
        .plant("Main", "HomeFrag", Mech::NavGraph)
        .plant("Login", "Home", Mech::Intent)
        .plant("Home", "ListFrag", Mech::Listener)
        .plant("Home", "Detail", Mech::Thread)
        .plant("ListFrag", "ItemFrag", Mech::Direct)
        .plant("ItemFrag", "Pay", Mech::Helper)
        .plant("Detail", "Pay", Mech::Async)
        .plant("Pay", "Result", Mech::Handler)
        .plant("Result", "Main", Mech::KeyDown)
        .plant("Home", "Bonus", Mech::OverDepth);
    b.widgets("Pay", &["EditText", "CheckBox"]).idle_listener("Pay");
    b.web(
        "Pay",
        &[
            konst("https://gateway.paynow.io/checkout/"),
            Piece::PackageName,
            Piece::Runtime("order-000431".into()),
        ],
        &["gateway", "paynow", "io", "checkout", "com", "quick", "pay"],
    );
    finish("App5", "All", b)
}

pub fn all() -> Vec<Fixture> {
    vec![app1(), app2(), app3(), app4(), app5()]
}
