use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uedetect_core::app_ir::parse_bundle;
use uedetect_core::callgraph::build_call_graph;
use uedetect_core::widgets::{backward_taint_text, load_url_sites};
use uedetect_core::DEFAULT_MAX_DEPTH;
use uedetect_harness::programs::{interpret, random_program, render};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn taint_equals_interpreter(seed in any::<u64>()) {
        let p = random_program(&mut ChaCha8Rng::seed_from_u64(seed));
        let b = parse_bundle(&render(&p)).unwrap();
        let cg = build_call_graph(&b);
        let sinks = load_url_sites(&b);
        prop_assert_eq!(sinks.len(), 1);
        let r = backward_taint_text(&b, &cg, &sinks[0], DEFAULT_MAX_DEPTH).unwrap();
        let (tokens, runtime) = interpret(&p);
        prop_assert_eq!(r.tokens, tokens);
        prop_assert_eq!(r.discarded_runtime_sources, runtime);
    }

    #[test]
    fn generation_is_seeded(seed in any::<u64>()) {
        let a = random_program(&mut ChaCha8Rng::seed_from_u64(seed));
        let b = random_program(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(render(&a), render(&b));
    }
}
