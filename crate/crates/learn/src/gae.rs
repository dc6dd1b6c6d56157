//! Masked graph auto-encoder.
//!
//! Encoder: `Z = softmax_rows(A' relu(A' X W0) W1)` where `A'` is the
//! self-loop normalized adjacency of the edges left visible by a mask.
//! Decoder: `sigmoid(MLP(z_i * z_j))` with one ReLU hidden layer of width F.
//! Training minimizes the mean of two views' reconstruction losses plus
//! `alpha` times the squared distance between the two views' embeddings.

use crate::sparse::SparseAdj;
use crate::tape::{Grads, Tape, Var};
use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::ops::Range;
use std::rc::Rc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GaeError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("edge ({0}, {1}) is out of range for {2} nodes")]
    EdgeOutOfRange(usize, usize, usize),
    #[error("loss became non-finite at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("invalid hyper-parameter: {0}")]
    InvalidHyper(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Undirected graph with node features. Edges are stored once as `(i, j)`
/// with `i < j`; self-loops are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGraph {
    pub n: usize,
    pub edges: BTreeSet<(usize, usize)>,
    pub features: Array2<f64>,
}

impl DenseGraph {
    /// Symmetrizes `edges`; any direction and duplicates are accepted.
    pub fn new(
        features: Array2<f64>,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GaeError> {
        let n = features.nrows();
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(GaeError::EdgeOutOfRange(a, b, n));
            }
            if a != b {
                set.insert((a.min(b), a.max(b)));
            }
        }
        Ok(DenseGraph {
            n,
            edges: set,
            features,
        })
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    /// Symmetric 0/1 adjacency without self-loops.
    pub fn adjacency(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.n, self.n));
        for &(i, j) in &self.edges {
            a[[i, j]] = 1.0;
            a[[j, i]] = 1.0;
        }
        a
    }

    /// Block-diagonal union; returns the node range of each input graph.
    pub fn disjoint_union(graphs: &[DenseGraph]) -> Result<(DenseGraph, Vec<Range<usize>>), GaeError> {
        let d = graphs.first().map_or(0, DenseGraph::dim);
        if let Some(g) = graphs.iter().find(|g| g.dim() != d) {
            return Err(GaeError::ShapeMismatch(format!(
                "feature width {} differs from {d}",
                g.dim()
            )));
        }
        let n: usize = graphs.iter().map(|g| g.n).sum();
        let mut features = Array2::zeros((n, d));
        let mut edges = BTreeSet::new();
        let mut ranges = Vec::with_capacity(graphs.len());
        let mut off = 0;
        for g in graphs {
            features
                .slice_mut(ndarray::s![off..off + g.n, ..])
                .assign(&g.features);
            edges.extend(g.edges.iter().map(|&(a, b)| (a + off, b + off)));
            ranges.push(off..off + g.n);
            off += g.n;
        }
        Ok((DenseGraph { n, edges, features }, ranges))
    }
}

/// `D^-1/2 (A + I) D^-1/2` over `n` nodes and undirected `edges`.
pub fn normalize_edges(n: usize, edges: &BTreeSet<(usize, usize)>) -> SparseAdj {
    let mut rows: Vec<Vec<(usize, f64)>> = (0..n).map(|i| vec![(i, 1.0)]).collect();
    for &(i, j) in edges {
        rows[i].push((j, 1.0));
        rows[j].push((i, 1.0));
    }
    let deg: Vec<f64> = rows.iter().map(|r| r.len() as f64).collect();
    for (i, r) in rows.iter_mut().enumerate() {
        for (j, v) in r.iter_mut() {
            *v /= (deg[i] * deg[*j]).sqrt();
        }
    }
    SparseAdj::new(n, rows)
}

pub fn normalize_adjacency(g: &DenseGraph) -> SparseAdj {
    normalize_edges(g.n, &g.edges)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedView {
    pub remaining_edges: BTreeSet<(usize, usize)>,
    pub masked_edges: BTreeSet<(usize, usize)>,
    pub seed: u64,
}

/// Masks each undirected edge independently with probability `p`.
pub fn mask_edges(g: &DenseGraph, p: f64, seed: u64) -> MaskedView {
    assert!((0.0..1.0).contains(&p), "mask probability must lie in [0, 1)");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut view = MaskedView {
        remaining_edges: BTreeSet::new(),
        masked_edges: BTreeSet::new(),
        seed,
    };
    for &e in &g.edges {
        if rng.gen_bool(p) {
            view.masked_edges.insert(e);
        } else {
            view.remaining_edges.insert(e);
        }
    }
    view
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlobalNormalization {
    /// Mean over all `N x F` entries.
    PerEntry,
    /// Sum of squared row distances divided by `N`.
    PerRow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyper {
    pub mask_p: f64,
    pub alpha: f64,
    pub lr: f64,
    pub epochs: usize,
    pub neg_ratio: f64,
    pub seed: u64,
    pub hidden: usize,
    pub embed: usize,
    pub global_norm: GlobalNormalization,
    pub optimizer: Optimizer,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            mask_p: 0.3,
            alpha: 1.0,
            lr: 0.01,
            epochs: 200,
            neg_ratio: 1.0,
            seed: 0,
            hidden: 64,
            embed: 32,
            global_norm: GlobalNormalization::PerEntry,
            optimizer: Optimizer::Adam,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<(), GaeError> {
        let bad = |m: &str| Err(GaeError::InvalidHyper(m.to_string()));
        if !(0.0..1.0).contains(&self.mask_p) {
            return bad("mask_p must lie in [0, 1)");
        }
        if !(self.alpha >= 0.0) {
            return bad("alpha must be non-negative");
        }
        if !(self.lr > 0.0) || !(self.neg_ratio >= 0.0) {
            return bad("lr must be positive and neg_ratio non-negative");
        }
        if self.hidden == 0 || self.embed == 0 {
            return bad("hidden and embed widths must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaeParams {
    pub w0: Array2<f64>,
    pub w1: Array2<f64>,
    pub mlp_w: Array2<f64>,
    pub mlp_b: Array2<f64>,
    pub out_w: Array2<f64>,
    pub out_b: Array2<f64>,
}

pub const PARAM_NAMES: [&str; 6] = ["w0", "w1", "mlp_w", "mlp_b", "out_w", "out_b"];

impl GaeParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init(d: usize, hidden: usize, embed: usize, rng: &mut impl Rng) -> Self {
        let mut glorot = |r: usize, c: usize| {
            let a = (6.0 / (r + c) as f64).sqrt();
            Array2::from_shape_fn((r, c), |_| rng.gen_range(-a..a))
        };
        GaeParams {
            w0: glorot(d, hidden),
            w1: glorot(hidden, embed),
            mlp_w: glorot(embed, embed),
            mlp_b: Array2::zeros((1, embed)),
            out_w: glorot(embed, 1),
            out_b: Array2::zeros((1, 1)),
        }
    }

    pub fn zeros(d: usize, hidden: usize, embed: usize) -> Self {
        GaeParams {
            w0: Array2::zeros((d, hidden)),
            w1: Array2::zeros((hidden, embed)),
            mlp_w: Array2::zeros((embed, embed)),
            mlp_b: Array2::zeros((1, embed)),
            out_w: Array2::zeros((embed, 1)),
            out_b: Array2::zeros((1, 1)),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w0.nrows()
    }

    pub fn embed_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn tensors(&self) -> [&Array2<f64>; 6] {
        [&self.w0, &self.w1, &self.mlp_w, &self.mlp_b, &self.out_w, &self.out_b]
    }

    pub fn tensors_mut(&mut self) -> [&mut Array2<f64>; 6] {
        [
            &mut self.w0,
            &mut self.w1,
            &mut self.mlp_w,
            &mut self.mlp_b,
            &mut self.out_w,
            &mut self.out_b,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn check_shapes(&self) -> Result<(), GaeError> {
        let (h, f) = (self.w0.ncols(), self.w1.ncols());
        let ok = self.w1.nrows() == h
            && self.mlp_w.dim() == (f, f)
            && self.mlp_b.dim() == (1, f)
            && self.out_w.dim() == (f, 1)
            && self.out_b.dim() == (1, 1);
        if ok {
            Ok(())
        } else {
            Err(GaeError::ShapeMismatch("inconsistent parameter shapes".into()))
        }
    }
}

struct ParamVars([Var; 6]);

impl ParamVars {
    fn record(t: &mut Tape, p: &GaeParams) -> Self {
        ParamVars(p.tensors().map(|a| t.leaf(a.clone())))
    }
}

fn encode_on(t: &mut Tape, x: Var, adj: &Rc<SparseAdj>, pv: &ParamVars) -> Var {
    let xw = t.matmul(x, pv.0[0]);
    let h = t.spmm(adj.clone(), xw);
    let h = t.relu(h);
    let hw = t.matmul(h, pv.0[1]);
    let z = t.spmm(adj.clone(), hw);
    t.softmax_rows(z)
}

fn decode_on(t: &mut Tape, z: Var, pairs: &[(usize, usize)], pv: &ParamVars) -> Var {
    let zi = t.gather_rows(z, pairs.iter().map(|p| p.0).collect());
    let zj = t.gather_rows(z, pairs.iter().map(|p| p.1).collect());
    let h = t.hadamard(zi, zj);
    let h = t.matmul(h, pv.0[2]);
    let h = t.add_row(h, pv.0[3]);
    let h = t.relu(h);
    let o = t.matmul(h, pv.0[4]);
    let o = t.add_row(o, pv.0[5]);
    t.sigmoid(o)
}

fn check_input(x: &Array2<f64>, adj: &SparseAdj, p: &GaeParams) -> Result<(), GaeError> {
    p.check_shapes()?;
    if x.ncols() != p.input_dim() {
        return Err(GaeError::ShapeMismatch(format!(
            "features have width {}, encoder expects {}",
            x.ncols(),
            p.input_dim()
        )));
    }
    if x.nrows() != adj.n() {
        return Err(GaeError::ShapeMismatch(format!(
            "{} feature rows for {} nodes",
            x.nrows(),
            adj.n()
        )));
    }
    Ok(())
}

pub fn encode(x: &Array2<f64>, adj: &SparseAdj, p: &GaeParams) -> Result<Array2<f64>, GaeError> {
    check_input(x, adj, p)?;
    let mut t = Tape::new();
    let xv = t.leaf(x.clone());
    let pv = ParamVars::record(&mut t, p);
    let z = encode_on(&mut t, xv, &Rc::new(adj.clone()), &pv);
    Ok(t.value(z).clone())
}

/// Embeds `g` with all of its edges visible.
pub fn encode_graph(g: &DenseGraph, p: &GaeParams) -> Result<Array2<f64>, GaeError> {
    encode(&g.features, &normalize_adjacency(g), p)
}

pub fn decode_edge(zi: ArrayView1<f64>, zj: ArrayView1<f64>, p: &GaeParams) -> f64 {
    let h = &zi * &zj;
    let hidden = (h.dot(&p.mlp_w) + p.mlp_b.row(0)).mapv(|v| v.max(0.0));
    let o = hidden.dot(&p.out_w.column(0)) + p.out_b[[0, 0]];
    1.0 / (1.0 + (-o).exp())
}

/// Reconstruction loss of one view: positives are its masked edges.
pub fn local_loss(z: &Array2<f64>, p: &GaeParams, positives: &[(usize, usize)], negatives: &[(usize, usize)]) -> f64 {
    let mut t = Tape::new();
    let zv = t.leaf(z.clone());
    let pv = ParamVars::record(&mut t, p);
    let l = local_on(&mut t, zv, positives, negatives, &pv);
    t.scalar(l)
}

fn local_on(t: &mut Tape, z: Var, pos: &[(usize, usize)], neg: &[(usize, usize)], pv: &ParamVars) -> Var {
    let hp = decode_on(t, z, pos, pv);
    let hn = decode_on(t, z, neg, pv);
    let a = t.neg_log_mean(hp, true);
    let b = t.neg_log_mean(hn, false);
    t.add(a, b)
}

pub fn global_loss(z1: &Array2<f64>, z2: &Array2<f64>, norm: GlobalNormalization) -> Result<f64, GaeError> {
    if z1.dim() != z2.dim() {
        return Err(GaeError::ShapeMismatch(format!("{:?} vs {:?}", z1.dim(), z2.dim())));
    }
    let mut t = Tape::new();
    let a = t.leaf(z1.clone());
    let b = t.leaf(z2.clone());
    let l = global_on(&mut t, a, b, norm);
    Ok(t.scalar(l))
}

fn global_denom(shape: (usize, usize), norm: GlobalNormalization) -> f64 {
    let (n, f) = shape;
    match norm {
        GlobalNormalization::PerEntry => (n * f).max(1) as f64,
        GlobalNormalization::PerRow => n.max(1) as f64,
    }
}

fn global_on(t: &mut Tape, a: Var, b: Var, norm: GlobalNormalization) -> Var {
    let denom = global_denom(t.value(a).dim(), norm);
    t.sq_diff(a, b, denom)
}

pub fn total_loss(local: [f64; 2], global: f64, alpha: f64) -> f64 {
    0.5 * (local[0] + local[1]) + alpha * global
}

/// Uniform non-edges `(i, j)`, `i < j`, drawn with replacement.
pub fn sample_negatives(g: &DenseGraph, count: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let pairs = g.n * g.n.saturating_sub(1) / 2;
    if count == 0 || pairs <= g.edges.len() {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let a = rng.gen_range(0..g.n);
        let b = rng.gen_range(0..g.n);
        if a != b && !g.has_edge(a, b) {
            out.push((a.min(b), a.max(b)));
        }
    }
    out
}

/// One masked view with its negative samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSample {
    pub view: MaskedView,
    pub negatives: Vec<(usize, usize)>,
}

impl ViewSample {
    pub fn draw(g: &DenseGraph, hyper: &Hyper, seed: u64) -> Self {
        let view = mask_edges(g, hyper.mask_p, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e65_6761_7469_7665);
        let count = (hyper.neg_ratio * view.masked_edges.len() as f64).round() as usize;
        let negatives = sample_negatives(g, count, &mut rng);
        ViewSample { view, negatives }
    }

    pub fn positives(&self) -> Vec<(usize, usize)> {
        self.view.masked_edges.iter().copied().collect()
    }
}

pub const REFERENCE_EPISODES: usize = 8;

/// The two views a training step looks at.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode(pub [ViewSample; 2]);

impl Episode {
    pub fn draw(g: &DenseGraph, hyper: &Hyper, rng: &mut impl Rng) -> Self {
        let a = rng.gen();
        let b = rng.gen();
        Episode([ViewSample::draw(g, hyper, a), ViewSample::draw(g, hyper, b)])
    }

    /// Fixed episodes used to compare parameters before and after training.
    pub fn references(g: &DenseGraph, hyper: &Hyper) -> Vec<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0x7265_6665_7265_6e63);
        (0..REFERENCE_EPISODES).map(|_| Episode::draw(g, hyper, &mut rng)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub local: [f64; 2],
    pub global: f64,
    pub total: f64,
}

/// Which scalar to differentiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossTerm {
    /// Local loss of the first view.
    Local,
    Global,
    Total,
}

struct Recorded {
    tape: Tape,
    params: ParamVars,
    local: [Var; 2],
    global: Var,
    total: Var,
}

fn record_episode(g: &DenseGraph, p: &GaeParams, ep: &Episode, hyper: &Hyper) -> Recorded {
    let mut t = Tape::new();
    let x = t.leaf(g.features.clone());
    let pv = ParamVars::record(&mut t, p);
    let mut z = Vec::with_capacity(2);
    let mut local = Vec::with_capacity(2);
    for s in &ep.0 {
        let adj = Rc::new(normalize_edges(g.n, &s.view.remaining_edges));
        let zv = encode_on(&mut t, x, &adj, &pv);
        local.push(local_on(&mut t, zv, &s.positives(), &s.negatives, &pv));
        z.push(zv);
    }
    let global = global_on(&mut t, z[0], z[1], hyper.global_norm);
    let sum = t.add(local[0], local[1]);
    let half = t.scale(sum, 0.5);
    let weighted = t.scale(global, hyper.alpha);
    let total = t.add(half, weighted);
    Recorded {
        tape: t,
        params: pv,
        local: [local[0], local[1]],
        global,
        total,
    }
}

impl Recorded {
    fn breakdown(&self) -> LossBreakdown {
        LossBreakdown {
            local: self.local.map(|v| self.tape.scalar(v)),
            global: self.tape.scalar(self.global),
            total: self.tape.scalar(self.total),
        }
    }

    fn term(&self, term: LossTerm) -> Var {
        match term {
            LossTerm::Local => self.local[0],
            LossTerm::Global => self.global,
            LossTerm::Total => self.total,
        }
    }

    fn grads_of(&self, grads: &Grads) -> GaeParams {
        let [a, b, c, d, e, f] = self.params.0.map(|v| grads.wrt(&self.tape, v));
        GaeParams {
            w0: a,
            w1: b,
            mlp_w: c,
            mlp_b: d,
            out_w: e,
            out_b: f,
        }
    }
}

/// Mean total loss over `episodes`.
pub fn mean_total_loss(g: &DenseGraph, p: &GaeParams, episodes: &[Episode], hyper: &Hyper) -> f64 {
    let sum: f64 = episodes.iter().map(|e| episode_loss(g, p, e, hyper).total).sum();
    sum / episodes.len().max(1) as f64
}

pub fn episode_loss(g: &DenseGraph, p: &GaeParams, ep: &Episode, hyper: &Hyper) -> LossBreakdown {
    record_episode(g, p, ep, hyper).breakdown()
}

/// Loss value and its gradient with respect to every parameter tensor.
pub fn episode_gradients(
    g: &DenseGraph,
    p: &GaeParams,
    ep: &Episode,
    hyper: &Hyper,
    term: LossTerm,
) -> (f64, GaeParams) {
    let r = record_episode(g, p, ep, hyper);
    let out = r.term(term);
    let grads = r.tape.backward(out);
    (r.tape.scalar(out), r.grads_of(&grads))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheck {
    /// Largest relative error per parameter tensor, in [`PARAM_NAMES`] order.
    pub per_tensor: Vec<(String, f64)>,
    pub max_rel_error: f64,
}

/// Compares analytic gradients with central differences of step `h`.
///
/// Relative error is `|a - n| / max(|a|, |n|, floor)`; the floor keeps
/// entries whose true gradient is zero from dividing by rounding noise.
pub fn gradient_check(
    g: &DenseGraph,
    p: &GaeParams,
    ep: &Episode,
    hyper: &Hyper,
    term: LossTerm,
    h: f64,
    floor: f64,
) -> GradCheck {
    let (_, analytic) = episode_gradients(g, p, ep, hyper, term);
    let eval = |q: &GaeParams| {
        let r = record_episode(g, q, ep, hyper);
        r.tape.scalar(r.term(term))
    };
    let mut per_tensor = Vec::new();
    for (k, name) in PARAM_NAMES.iter().enumerate() {
        let mut worst: f64 = 0.0;
        let a = analytic.tensors()[k];
        for (idx, &ana) in a.indexed_iter() {
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus.tensors_mut()[k][idx] += h;
            minus.tensors_mut()[k][idx] -= h;
            let num = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let rel = (ana - num).abs() / ana.abs().max(num.abs()).max(floor);
            worst = worst.max(rel);
        }
        per_tensor.push((name.to_string(), worst));
    }
    let max_rel_error = per_tensor.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    GradCheck {
        per_tensor,
        max_rel_error,
    }
}

struct AdamState {
    m: GaeParams,
    v: GaeParams,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn apply_update(p: &mut GaeParams, grad: &GaeParams, hyper: &Hyper, adam: &mut AdamState) {
    match hyper.optimizer {
        Optimizer::Sgd => {
            for (w, g) in p.tensors_mut().into_iter().zip(grad.tensors()) {
                w.scaled_add(-hyper.lr, g);
            }
        }
        Optimizer::Adam => {
            adam.t += 1;
            let c1 = 1.0 - BETA1.powi(adam.t);
            let c2 = 1.0 - BETA2.powi(adam.t);
            let ms = adam.m.tensors_mut();
            let vs = adam.v.tensors_mut();
            for (((w, g), m), v) in p.tensors_mut().into_iter().zip(grad.tensors()).zip(ms).zip(vs) {
                ndarray::Zip::from(w).and(g).and(m).and(v).for_each(|w, &g, m, v| {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    *w -= hyper.lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                });
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<LossBreakdown>,
    /// Mean total loss on [`Episode::references`] before and after training.
    pub reference_initial: f64,
    pub reference_final: f64,
}

pub fn train(g: &DenseGraph, hyper: &Hyper) -> Result<(GaeParams, TrainReport), GaeError> {
    hyper.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut p = GaeParams::init(g.dim(), hyper.hidden, hyper.embed, &mut rng);
    let reference = Episode::references(g, hyper);
    let reference_initial = mean_total_loss(g, &p, &reference, hyper);
    let d = g.dim();
    let mut adam = AdamState {
        m: GaeParams::zeros(d, hyper.hidden, hyper.embed),
        v: GaeParams::zeros(d, hyper.hidden, hyper.embed),
        t: 0,
    };
    let mut epochs = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        let ep = Episode::draw(g, hyper, &mut rng);
        let r = record_episode(g, &p, &ep, hyper);
        let losses = r.breakdown();
        if !losses.total.is_finite() {
            return Err(GaeError::Divergence { epoch });
        }
        let grads = r.grads_of(&r.tape.backward(r.total));
        apply_update(&mut p, &grads, hyper, &mut adam);
        if !p.is_finite() {
            return Err(GaeError::Divergence { epoch });
        }
        epochs.push(losses);
    }
    let reference_final = mean_total_loss(g, &p, &reference, hyper);
    if !reference_final.is_finite() {
        return Err(GaeError::Divergence { epoch: hyper.epochs });
    }
    Ok((
        p,
        TrainReport {
            epochs,
            reference_initial,
            reference_final,
        },
    ))
}

/// Column mean of `z`; zeros when `z` has no rows.
pub fn pool(z: &Array2<f64>) -> Array1<f64> {
    z.mean_axis(Axis(0))
        .unwrap_or_else(|| Array1::zeros(z.ncols()))
}

pub const CHECKPOINT_FORMAT: &str = "gae/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub hyper: Hyper,
    pub params: GaeParams,
}

impl Checkpoint {
    pub fn new(hyper: Hyper, params: GaeParams) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            hyper,
            params,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GaeError> {
        let c: Checkpoint = serde_json::from_str(text).map_err(|e| GaeError::Checkpoint(e.to_string()))?;
        if c.format != CHECKPOINT_FORMAT {
            return Err(GaeError::Checkpoint(format!("unsupported format `{}`", c.format)));
        }
        c.params.check_shapes()?;
        if !c.params.is_finite() {
            return Err(GaeError::Checkpoint("non-finite weights".into()));
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_node_normalizes_to_one() {
        let g = DenseGraph::new(Array2::zeros((1, 2)), []).unwrap();
        assert_eq!(normalize_adjacency(&g).to_dense(), array![[1.0]]);
    }

    #[test]
    fn two_nodes_one_edge() {
        let g = DenseGraph::new(Array2::zeros((2, 2)), [(1, 0)]).unwrap();
        assert_eq!(normalize_adjacency(&g).to_dense(), array![[0.5, 0.5], [0.5, 0.5]]);
    }

    #[test]
    fn zero_weights_give_uniform_rows() {
        let g = DenseGraph::new(array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]], [(0, 1)]).unwrap();
        let z = encode_graph(&g, &GaeParams::zeros(2, 4, 5)).unwrap();
        assert!(z.iter().all(|&v| (v - 0.2).abs() < 1e-15));
        assert_eq!(decode_edge(z.row(0), z.row(1), &GaeParams::zeros(2, 4, 5)), 0.5);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let g = DenseGraph::new(Array2::zeros((3, 4)), []).unwrap();
        assert!(matches!(
            encode_graph(&g, &GaeParams::zeros(5, 2, 2)),
            Err(GaeError::ShapeMismatch(_))
        ));
        assert!(matches!(
            global_loss(&Array2::zeros((2, 2)), &Array2::zeros((3, 2)), GlobalNormalization::PerEntry),
            Err(GaeError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn out_of_range_edge() {
        assert_eq!(
            DenseGraph::new(Array2::zeros((2, 1)), [(0, 2)]),
            Err(GaeError::EdgeOutOfRange(0, 2, 2))
        );
    }

    #[test]
    fn pool_of_empty_is_zero() {
        assert_eq!(pool(&Array2::zeros((0, 3))), Array1::<f64>::zeros(3));
    }

    #[test]
    fn negatives_avoid_edges() {
        let g = DenseGraph::new(Array2::zeros((4, 1)), [(0, 1), (1, 2), (2, 3)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let neg = sample_negatives(&g, 50, &mut rng);
        assert_eq!(neg.len(), 50);
        assert!(neg.iter().all(|&(a, b)| a < b && !g.has_edge(a, b)));
        let full = DenseGraph::new(Array2::zeros((3, 1)), [(0, 1), (1, 2), (0, 2)]).unwrap();
        assert!(sample_negatives(&full, 5, &mut rng).is_empty());
    }

    #[test]
    fn hyper_validation() {
        assert!(Hyper::default().validate().is_ok());
        let h = Hyper {
            mask_p: 1.0,
            ..Hyper::default()
        };
        assert!(h.validate().is_err());
        let h = Hyper {
            alpha: -1.0,
            ..Hyper::default()
        };
        assert!(h.validate().is_err());
    }
}
