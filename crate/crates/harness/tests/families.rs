use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use uedetect_core::app_ir::parse_bundle;
use uedetect_core::scenegraph::build_scene_graph;
use uedetect_harness::families::{developer, generate, identity, motif_edges};
use uedetect_learn::detector::Label;

#[test]
fn generated_apps_match_their_truth() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for label in Label::ALL {
        let dev = developer(label, 0, &mut rng);
        let (mut edges, mut widgets, mut tokens) = (0, 0, 0);
        for k in 0..40 {
            let id = identity(label, k, &dev, None, &mut rng);
            let (src, truth) = generate(&format!("{label}{k}"), label, &id, &mut rng);
            let b = parse_bundle(&src).unwrap_or_else(|e| panic!("{e}\n{src}"));
            let sg = build_scene_graph(&b);
            assert_eq!(sg.atg.edge_set(), truth.reachable_edges(), "{src}");
            assert!(sg.warnings.is_empty(), "{:?}", sg.warnings);
            for (owner, attrs) in &sg.attributes {
                let want = truth.tokens.get(owner).cloned().unwrap_or_default();
                assert_eq!(attrs.imprint_tokens, want, "{owner}\n{src}");
            }
            let present: BTreeSet<_> = motif_edges(label).intersection(&truth.edges).cloned().collect();
            assert!(present.len() + 1 >= motif_edges(label).len().min(4), "{label} {present:?}");
            let s = sg.stats();
            edges += s.transition_pairs;
            widgets += s.widgets;
            tokens += s.tokens;
        }
        eprintln!("{label}: edges {:.1} widgets {:.1} tokens {:.1}", edges as f64 / 40.0, widgets as f64 / 40.0, tokens as f64 / 40.0);
    }
}
