//! Two-stage app detector.
//!
//! Apps become nodes of a relation graph whose edges join apps sharing a
//! package name, app name or certificate digest. An encoder is trained on
//! that graph without labels, then frozen; a multinomial logistic regression
//! over its standardized embeddings predicts the label.

use crate::gae::{self, DenseGraph, GaeError, GaeParams, Hyper, TrainReport};
use crate::tape::Tape;
use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    GamblingGame,
    Porn,
    InvestmentScam,
    Miscellaneous,
    Legitimate,
}

pub const NUM_LABELS: usize = 5;

impl Label {
    pub const ALL: [Label; NUM_LABELS] = [
        Label::GamblingGame,
        Label::Porn,
        Label::InvestmentScam,
        Label::Miscellaneous,
        Label::Legitimate,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::GamblingGame => "gambling_game",
            Label::Porn => "porn",
            Label::InvestmentScam => "investment_scam",
            Label::Miscellaneous => "miscellaneous",
            Label::Legitimate => "legitimate",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Label::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| format!("unknown label `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StrongFeatures {
    pub package_name: String,
    pub app_name: String,
    pub cert_digest: String,
}

impl StrongFeatures {
    pub fn overlaps(&self, other: &StrongFeatures) -> bool {
        self.package_name == other.package_name
            || self.app_name == other.app_name
            || self.cert_digest == other.cert_digest
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppRecord {
    pub app_id: String,
    pub strong: StrongFeatures,
    /// App-level feature vector; every app in one graph has the same width.
    pub vector: Vec<f64>,
    pub label: Option<Label>,
}

#[derive(Debug, Error, PartialEq)]
pub enum DetectorError {
    #[error("duplicate app id `{0}`")]
    DuplicateAppId(String),
    #[error("test app `{0}` is also a training app")]
    IdCollision(String),
    #[error("no labeled apps to train on")]
    EmptyClass,
    #[error("relation graph needs at least 2 apps, got {0}")]
    TooFewApps(usize),
    #[error("app `{0}` has a non-finite or mis-sized feature vector")]
    BadVector(String),
    #[error(transparent)]
    Gae(#[from] GaeError),
}

/// App-level graph; `edges` holds `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationGraph {
    pub apps: Vec<AppRecord>,
    pub edges: BTreeSet<(usize, usize)>,
}

pub fn build_relation_graph(apps: Vec<AppRecord>) -> Result<RelationGraph, DetectorError> {
    let mut seen = HashSet::new();
    for a in &apps {
        if !seen.insert(a.app_id.as_str()) {
            return Err(DetectorError::DuplicateAppId(a.app_id.clone()));
        }
    }
    let width = apps.first().map_or(0, |a| a.vector.len());
    if let Some(a) = apps
        .iter()
        .find(|a| a.vector.len() != width || a.vector.iter().any(|v| !v.is_finite()))
    {
        return Err(DetectorError::BadVector(a.app_id.clone()));
    }
    let mut edges = BTreeSet::new();
    let mut buckets: Vec<BTreeMap<&str, Vec<usize>>> = vec![BTreeMap::new(); 3];
    for (i, a) in apps.iter().enumerate() {
        let keys = [&a.strong.package_name, &a.strong.app_name, &a.strong.cert_digest];
        for (bucket, key) in buckets.iter_mut().zip(keys) {
            bucket.entry(key.as_str()).or_default().push(i);
        }
    }
    for group in buckets.iter().flat_map(|b| b.values()) {
        for (k, &i) in group.iter().enumerate() {
            for &j in &group[k + 1..] {
                edges.insert((i, j));
            }
        }
    }
    Ok(RelationGraph { apps, edges })
}

impl RelationGraph {
    pub fn len(&self) -> usize {
        self.apps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.apps.is_empty()
    }

    pub fn width(&self) -> usize {
        self.apps.first().map_or(0, |a| a.vector.len())
    }

    /// The feature matrix `X_H`, one row per app.
    pub fn features(&self) -> Array2<f64> {
        let mut x = Array2::zeros((self.len(), self.width()));
        for (mut row, a) in x.rows_mut().into_iter().zip(&self.apps) {
            row.assign(&Array1::from(a.vector.clone()));
        }
        x
    }

    pub fn to_dense(&self) -> DenseGraph {
        DenseGraph::new(self.features(), self.edges.iter().copied())
            .expect("relation edges index existing apps")
    }

    pub fn index_of(&self, app_id: &str) -> Option<usize> {
        self.apps.iter().position(|a| a.app_id == app_id)
    }
}

/// Trains the app-level encoder on `h`; labels are never read.
pub fn self_train_encoder(h: &RelationGraph, hyper: &Hyper) -> Result<(GaeParams, TrainReport), DetectorError> {
    if h.len() < 2 {
        return Err(DetectorError::TooFewApps(h.len()));
    }
    Ok(gae::train(&h.to_dense(), hyper)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub lambda: f64,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            lambda: 1e-4,
            lr: 0.1,
            epochs: 500,
            seed: 0,
        }
    }
}

/// Multinomial logistic regression over standardized embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
    pub trained: bool,
}

impl ClassifierParams {
    fn standardize(&self, z: &Array2<f64>) -> Array2<f64> {
        (z - &self.mean) / &self.scale
    }

    pub fn logits(&self, z: &Array2<f64>) -> Array2<f64> {
        self.standardize(z).dot(&self.weights) + &self.bias
    }

    /// Row-wise softmax class probabilities.
    pub fn probabilities(&self, z: &Array2<f64>) -> Array2<f64> {
        let mut l = self.logits(z);
        for mut row in l.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            row.mapv_inplace(|v| (v - m).exp());
            let s = row.sum();
            row /= s;
        }
        l
    }

    pub fn is_finite(&self) -> bool {
        [&self.bias, &self.mean, &self.scale]
            .iter()
            .all(|a| a.iter().all(|v| v.is_finite()))
            && self.weights.iter().all(|v| v.is_finite())
    }
}

const MIN_SCALE: f64 = 1e-8;

/// Trains the classifier on the labeled apps of `h` with `f_psi` frozen.
pub fn train_classifier(
    h: &RelationGraph,
    f_psi: &GaeParams,
    cfg: &ClassifierConfig,
) -> Result<ClassifierParams, DetectorError> {
    let labeled: Vec<(usize, Label)> = h
        .apps
        .iter()
        .enumerate()
        .filter_map(|(i, a)| a.label.map(|l| (i, l)))
        .collect();
    if labeled.is_empty() {
        return Err(DetectorError::EmptyClass);
    }
    let z = gae::encode_graph(&h.to_dense(), f_psi)?;
    let rows: Vec<usize> = labeled.iter().map(|p| p.0).collect();
    let zl = z.select(Axis(0), &rows);
    let mean = zl.mean_axis(Axis(0)).expect("labeled set is non-empty");
    let scale = zl
        .std_axis(Axis(0), 0.0)
        .mapv(|s| if s > MIN_SCALE { s } else { 1.0 });
    let f = z.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ClassifierParams {
        weights: Array2::from_shape_fn((f, NUM_LABELS), |_| rng.gen_range(-0.01..0.01)),
        bias: Array1::zeros(NUM_LABELS),
        mean,
        scale,
        trained: false,
    };
    let xs = params.standardize(&zl);
    let labels: Vec<usize> = labeled.iter().map(|p| p.1.index()).collect();
    for _ in 0..cfg.epochs {
        let mut t = Tape::new();
        let x = t.leaf(xs.clone());
        let w = t.leaf(params.weights.clone());
        let b = t.leaf(params.bias.clone().insert_axis(Axis(0)));
        let logits = t.matmul(x, w);
        let logits = t.add_row(logits, b);
        let xent = t.softmax_xent(logits, labels.clone());
        let reg = t.sum_sq(w);
        let reg = t.scale(reg, cfg.lambda);
        let loss = t.add(xent, reg);
        let g = t.backward(loss);
        params.weights.scaled_add(-cfg.lr, &g.wrt(&t, w));
        params.bias.scaled_add(-cfg.lr, &g.wrt(&t, b).row(0));
    }
    params.trained = true;
    Ok(params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    /// Probabilities in [`Label::ALL`] order.
    pub scores: [f64; NUM_LABELS],
}

/// Scores `test` apps inside a relation graph rebuilt over `train ∪ test`.
pub fn classify(
    train: &[AppRecord],
    test: &[AppRecord],
    f_psi: &GaeParams,
    clf: &ClassifierParams,
) -> Result<BTreeMap<String, Prediction>, DetectorError> {
    let train_ids: HashSet<&str> = train.iter().map(|a| a.app_id.as_str()).collect();
    if let Some(a) = test.iter().find(|a| train_ids.contains(a.app_id.as_str())) {
        return Err(DetectorError::IdCollision(a.app_id.clone()));
    }
    let all: Vec<AppRecord> = train.iter().chain(test).cloned().collect();
    let h = build_relation_graph(all)?;
    let z = gae::encode_graph(&h.to_dense(), f_psi)?;
    let rows: Vec<usize> = (train.len()..h.len()).collect();
    let probs = clf.probabilities(&z.select(Axis(0), &rows));
    let mut out = BTreeMap::new();
    for (a, p) in test.iter().zip(probs.rows()) {
        let mut scores = [0.0; NUM_LABELS];
        for (s, &v) in scores.iter_mut().zip(p) {
            *s = v;
        }
        let best = (0..NUM_LABELS)
            .fold(0, |b, i| if scores[i] > scores[b] { i } else { b });
        out.insert(
            a.app_id.clone(),
            Prediction {
                label: Label::ALL[best],
                scores,
            },
        );
    }
    Ok(out)
}
