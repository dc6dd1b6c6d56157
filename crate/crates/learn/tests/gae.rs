use ndarray::{array, Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use uedetect_learn::gae::*;

fn random_graph(n: usize, d: usize, p: f64, seed: u64) -> DenseGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                edges.push((i, j));
            }
        }
    }
    DenseGraph::new(x, edges).unwrap()
}

/// Five clusters of six nodes, dense inside, empty between.
fn clustered_graph(seed: u64) -> DenseGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 30;
    let x = Array2::from_shape_fn((n, 16), |(i, k)| if k == i / 6 { 1.0 } else { rng.gen_range(0.0..0.2) });
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if i / 6 == j / 6 && rng.gen_bool(0.8) {
                edges.push((i, j));
            }
        }
    }
    DenseGraph::new(x, edges).unwrap()
}

/// `D^-1/2 (A + I) D^-1/2` with dense diagonal matrices.
fn formula_a_hat(g: &DenseGraph) -> Array2<f64> {
    let a = g.adjacency() + Array2::<f64>::eye(g.n);
    let mut d = Array2::<f64>::zeros((g.n, g.n));
    for i in 0..g.n {
        d[[i, i]] = 1.0 / a.row(i).sum().sqrt();
    }
    d.dot(&a).dot(&d)
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    (a - b).iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[test]
fn normalization_matches_formula() {
    for seed in 0..10 {
        let g = random_graph(6, 3, 0.4, seed);
        let got = normalize_adjacency(&g).to_dense();
        assert!(max_abs_diff(&got, &formula_a_hat(&g)) < 1e-12);
    }
}

#[test]
fn irregular_rows_can_exceed_one() {
    // Star with 3 leaves: centre row is 1/4 + 3/sqrt(8).
    let star = DenseGraph::new(Array2::zeros((4, 1)), [(0, 1), (0, 2), (0, 3)]).unwrap();
    let a = normalize_adjacency(&star).to_dense();
    assert!((a.row(0).sum() - (0.25 + 3.0 / 8f64.sqrt())).abs() < 1e-12);
    assert!(a.row(1).sum() < 1.0);
}

#[test]
fn directed_input_is_symmetrized() {
    let a = DenseGraph::new(Array2::zeros((3, 1)), [(0, 1), (2, 1)]).unwrap();
    let b = DenseGraph::new(Array2::zeros((3, 1)), [(1, 0), (1, 2), (0, 1), (1, 1)]).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.adjacency(), a.adjacency().t());
}

#[test]
fn regular_graph_rows_sum_to_one() {
    let ring = DenseGraph::new(Array2::zeros((5, 1)), (0..5).map(|i| (i, (i + 1) % 5))).unwrap();
    let a = normalize_adjacency(&ring).to_dense();
    for i in 0..5 {
        assert!((a.row(i).sum() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn masking_basics() {
    let g = random_graph(12, 1, 0.5, 3);
    assert!(mask_edges(&g, 0.0, 9).masked_edges.is_empty());
    assert_eq!(mask_edges(&g, 0.3, 9), mask_edges(&g, 0.3, 9));
}

#[test]
fn masking_fraction_is_binomial() {
    // 10 000 edges over 142 nodes; 3 sigma of Binomial(10 000, 0.3) is 0.0137.
    let edges: Vec<(usize, usize)> = (0..142)
        .flat_map(|i| (i + 1..142).map(move |j| (i, j)))
        .take(10_000)
        .collect();
    assert_eq!(edges.len(), 10_000);
    let g = DenseGraph::new(Array2::zeros((142, 1)), edges).unwrap();
    for seed in 0..5 {
        let frac = mask_edges(&g, 0.3, seed).masked_edges.len() as f64 / 10_000.0;
        assert!((frac - 0.3).abs() <= 0.02, "seed {seed}: {frac}");
    }
}

fn params_2x2x2() -> GaeParams {
    GaeParams {
        w0: array![[1.0, -1.0], [0.5, 1.0]],
        w1: array![[1.0, 0.0], [0.0, -1.0]],
        mlp_w: array![[1.0, -1.0], [2.0, 0.5]],
        mlp_b: array![[0.1, -0.1]],
        out_w: array![[2.0], [3.0]],
        out_b: array![[0.5]],
    }
}

#[test]
fn encode_hand_golden() {
    // X W0 = [2, 1], ReLU keeps it, times W1 = [2, -1], softmax.
    let g = DenseGraph::new(array![[1.0, 2.0]], []).unwrap();
    let z = encode_graph(&g, &params_2x2x2()).unwrap();
    assert!((z[[0, 0]] - 0.9525741268224334).abs() < 1e-15);
    assert!((z[[0, 1]] - 0.04742587317756679).abs() < 1e-15);
}

#[test]
fn decode_hand_golden() {
    // h = [0.3, 0.2]; hidden = relu([0.8, -0.3]) = [0.8, 0]; logit 2.1.
    let p = params_2x2x2();
    let zi = array![0.6, 0.4];
    let zj = array![0.5, 0.5];
    let v = decode_edge(zi.view(), zj.view(), &p);
    assert!((v - 0.8909031788043871).abs() < 1e-15);
    assert_eq!(v, decode_edge(zj.view(), zi.view(), &p));
}

fn oracle_local(z: &Array2<f64>, p: &GaeParams, pos: &[(usize, usize)], neg: &[(usize, usize)]) -> f64 {
    let clamp = |v: f64| v.clamp(1e-7, 1.0 - 1e-7);
    let mean = |xs: Vec<f64>| if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };
    let lp = mean(pos.iter().map(|&(i, j)| -clamp(decode_edge(z.row(i), z.row(j), p)).ln()).collect());
    let ln = mean(neg.iter().map(|&(i, j)| -(1.0 - clamp(decode_edge(z.row(i), z.row(j), p))).ln()).collect());
    lp + ln
}

#[test]
fn local_loss_matches_summation_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = random_graph(7, 4, 0.5, 2);
    let p = GaeParams::init(4, 6, 3, &mut rng);
    let z = encode_graph(&g, &p).unwrap();
    let pos = [(0, 1), (2, 5), (3, 6)];
    let neg = [(0, 6), (1, 4), (1, 4), (2, 3)];
    let got = local_loss(&z, &p, &pos, &neg);
    assert!((got - oracle_local(&z, &p, &pos, &neg)).abs() < 1e-12);
}

#[test]
fn local_loss_extremes() {
    let z = Array2::from_elem((3, 2), 0.5);
    let zero = GaeParams::zeros(1, 1, 2);
    let l = local_loss(&z, &zero, &[(0, 1)], &[(1, 2)]);
    assert!((l - 2.0 * 2f64.ln()).abs() < 1e-12);
    // A huge output bias saturates every prediction at 1.
    let mut sure = GaeParams::zeros(1, 1, 2);
    sure.out_b[[0, 0]] = 100.0;
    assert!(local_loss(&z, &sure, &[(0, 1), (1, 2)], &[]) < 1e-6);
    assert_eq!(local_loss(&z, &sure, &[], &[]), 0.0);
}

#[test]
fn global_loss_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a: Array2<f64> = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-1.0..1.0));
    let b: Array2<f64> = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-1.0..1.0));
    let mut sum = 0.0f64;
    for i in 0..4 {
        for j in 0..3 {
            sum += (a[[i, j]] - b[[i, j]]).powi(2);
        }
    }
    let entry = global_loss(&a, &b, GlobalNormalization::PerEntry).unwrap();
    let row = global_loss(&a, &b, GlobalNormalization::PerRow).unwrap();
    assert!((entry - sum / 12.0).abs() < 1e-14);
    assert!((row - sum / 4.0).abs() < 1e-14);
    assert_eq!(global_loss(&a, &a, GlobalNormalization::PerEntry).unwrap(), 0.0);

    let c = 0.25;
    let shifted = &a + c;
    let entry = global_loss(&shifted, &a, GlobalNormalization::PerEntry).unwrap();
    let row = global_loss(&shifted, &a, GlobalNormalization::PerRow).unwrap();
    assert!((entry - c * c).abs() < 1e-14);
    assert!((row - c * c * 3.0).abs() < 1e-14);
}

fn tiny_instance() -> (DenseGraph, GaeParams, Episode, Hyper) {
    let g = random_graph(5, 6, 0.7, 21);
    let hyper = Hyper {
        hidden: 8,
        embed: 4,
        mask_p: 0.5,
        seed: 2,
        ..Hyper::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = GaeParams::init(6, 8, 4, &mut rng);
    let ep = Episode::references(&g, &hyper).remove(0);
    (g, p, ep, hyper)
}

/// Total loss assembled from the standalone pieces.
fn oracle_total(g: &DenseGraph, p: &GaeParams, ep: &Episode, hyper: &Hyper) -> f64 {
    let z: Vec<Array2<f64>> = ep
        .0
        .iter()
        .map(|s| encode(&g.features, &normalize_edges(g.n, &s.view.remaining_edges), p).unwrap())
        .collect();
    let l: Vec<f64> = ep
        .0
        .iter()
        .zip(&z)
        .map(|(s, z)| oracle_local(z, p, &s.positives(), &s.negatives))
        .collect();
    let gl = global_loss(&z[0], &z[1], hyper.global_norm).unwrap();
    (l[0] + l[1]) / 2.0 + hyper.alpha * gl
}

#[test]
fn total_loss_composition() {
    let (g, p, ep, mut hyper) = tiny_instance();
    assert!(!ep.0[0].view.masked_edges.is_empty());
    let at_one = episode_loss(&g, &p, &ep, &hyper);
    assert!((at_one.total - oracle_total(&g, &p, &ep, &hyper)).abs() < 1e-12);
    assert_eq!(at_one.total, total_loss(at_one.local, at_one.global, 1.0));
    hyper.alpha = 0.0;
    let at_zero = episode_loss(&g, &p, &ep, &hyper);
    assert_eq!(at_zero.total, (at_zero.local[0] + at_zero.local[1]) / 2.0);
    assert!(at_one.global > 0.0);
    let mut last = at_zero.total;
    for alpha in [0.5, 1.0, 10.0] {
        hyper.alpha = alpha;
        let t = episode_loss(&g, &p, &ep, &hyper).total;
        assert!(t > last);
        last = t;
    }
}

#[test]
fn gradients_match_finite_differences() {
    let (g, p, ep, hyper) = tiny_instance();
    for term in [LossTerm::Local, LossTerm::Global, LossTerm::Total] {
        let check = gradient_check(&g, &p, &ep, &hyper, term, 1e-4, 1e-6);
        assert!(check.max_rel_error <= 1e-4, "{term:?}: {check:?}");
        assert_eq!(check.per_tensor.len(), 6);
    }
}

#[test]
fn training_is_deterministic() {
    let g = clustered_graph(1);
    let hyper = Hyper {
        epochs: 20,
        seed: 5,
        ..Hyper::default()
    };
    let (a, ra) = train(&g, &hyper).unwrap();
    let (b, rb) = train(&g, &hyper).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
}

#[test]
fn training_halves_loss_on_clustered_graph() {
    for seed in [1, 2, 3] {
        let g = clustered_graph(seed);
        let (p, r) = train(&g, &Hyper { seed, ..Hyper::default() }).unwrap();
        assert!(p.is_finite());
        assert_eq!(r.epochs.len(), 200);
        assert!(
            r.reference_final < 0.5 * r.reference_initial,
            "seed {seed}: {} -> {}",
            r.reference_initial,
            r.reference_final
        );
    }
}

#[test]
fn non_finite_features_diverge() {
    let mut g = clustered_graph(1);
    g.features[[0, 0]] = f64::INFINITY;
    assert_eq!(train(&g, &Hyper::default()).unwrap_err(), GaeError::Divergence { epoch: 0 });
}

#[test]
fn invalid_hyper_is_rejected() {
    let g = clustered_graph(1);
    let h = Hyper {
        lr: 0.0,
        ..Hyper::default()
    };
    assert!(matches!(train(&g, &h), Err(GaeError::InvalidHyper(_))));
}

#[test]
fn pooling() {
    let one = array![[0.2, 0.8]];
    assert_eq!(pool(&one), array![0.2, 0.8]);
    let dup = array![[0.2, 0.8], [0.2, 0.8], [0.2, 0.8]];
    assert!((pool(&dup) - array![0.2, 0.8]).iter().all(|v| v.abs() < 1e-15));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let z = Array2::from_shape_fn((7, 3), |_| rng.gen_range(0.0..1.0));
    let pooled = pool(&z);
    for j in 0..3 {
        let m = (0..7).map(|i| z[[i, j]]).sum::<f64>() / 7.0;
        assert!((pooled[j] - m).abs() < 1e-15);
    }
}

#[test]
fn disjoint_union_offsets() {
    let a = random_graph(3, 2, 1.0, 0);
    let b = random_graph(2, 2, 1.0, 1);
    let (u, ranges) = DenseGraph::disjoint_union(&[a.clone(), b.clone()]).unwrap();
    assert_eq!(u.n, 5);
    assert_eq!(ranges, vec![0..3, 3..5]);
    assert_eq!(u.edges, BTreeSet::from([(0, 1), (0, 2), (1, 2), (3, 4)]));
    let p = GaeParams::init(2, 4, 3, &mut ChaCha8Rng::seed_from_u64(0));
    let zu = encode_graph(&u, &p).unwrap();
    let zb = encode_graph(&b, &p).unwrap();
    assert!(max_abs_diff(&zu.slice(ndarray::s![3..5, ..]).to_owned(), &zb) < 1e-15);
    let wide = random_graph(2, 5, 1.0, 1);
    assert!(DenseGraph::disjoint_union(&[a, wide]).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let g = clustered_graph(2);
    let hyper = Hyper {
        epochs: 3,
        ..Hyper::default()
    };
    let (p, _) = train(&g, &hyper).unwrap();
    let c = Checkpoint::new(hyper, p);
    let back = Checkpoint::from_json(&c.to_json()).unwrap();
    assert_eq!(back, c);
    let bad = c.to_json().replace("gae/1", "gae/9");
    assert!(matches!(Checkpoint::from_json(&bad), Err(GaeError::Checkpoint(_))));
}

fn permute(g: &DenseGraph, perm: &[usize]) -> DenseGraph {
    // Node i of `g` becomes node perm[i].
    let mut x = Array2::zeros(g.features.raw_dim());
    for i in 0..g.n {
        x.row_mut(perm[i]).assign(&g.features.row(i));
    }
    DenseGraph::new(x, g.edges.iter().map(|&(a, b)| (perm[a], perm[b]))).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_and_symmetry(n in 1usize..9, p in 0.0f64..1.0, seed in any::<u64>()) {
        let g = random_graph(n, 3, p, seed);
        let a = normalize_adjacency(&g).to_dense();
        prop_assert!(max_abs_diff(&a, &a.t().to_owned()) <= 1e-12);
        let params = GaeParams::init(3, 5, 4, &mut ChaCha8Rng::seed_from_u64(seed));
        let z = encode_graph(&g, &params).unwrap();
        for row in z.rows() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-9);
            prop_assert!(row.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn mask_partitions_edges(n in 2usize..15, p in 0.0f64..0.99, seed in any::<u64>()) {
        let g = random_graph(n, 1, 0.5, seed);
        let v = mask_edges(&g, p, seed);
        prop_assert!(v.remaining_edges.is_disjoint(&v.masked_edges));
        let all: BTreeSet<_> = v.remaining_edges.union(&v.masked_edges).copied().collect();
        prop_assert_eq!(all, g.edges.clone());
    }

    #[test]
    fn relabeling_is_equivariant(n in 2usize..8, seed in any::<u64>(), shuffle in any::<u64>()) {
        let g = random_graph(n, 3, 0.5, seed);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(shuffle));
        let h = permute(&g, &perm);
        let params = GaeParams::init(3, 5, 4, &mut ChaCha8Rng::seed_from_u64(seed));
        let zg = encode_graph(&g, &params).unwrap();
        let zh = encode_graph(&h, &params).unwrap();
        for i in 0..n {
            let d = (&zg.row(i) - &zh.row(perm[i])).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(d <= 1e-9);
        }
        let pd: Array1<f64> = pool(&zg) - pool(&zh);
        prop_assert!(pd.iter().all(|v| v.abs() <= 1e-9));
        let pos: Vec<(usize, usize)> = g.edges.iter().copied().collect();
        let pos_h: Vec<(usize, usize)> = pos.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        let lg = local_loss(&zg, &params, &pos, &[]);
        let lh = local_loss(&zh, &params, &pos_h, &[]);
        prop_assert!((lg - lh).abs() <= 1e-9);
    }
}
