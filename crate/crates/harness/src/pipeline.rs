//! Corpus-level pipeline: scene graphs, the scene encoder, app vectors, the
//! two-stage detector, and held-out evaluation.

use crate::corpus::LoadedApp;
use crate::metrics::Confusion;
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;
use uedetect_core::app_ir::AppBundle;
use uedetect_core::widgets::Stoplist;
use uedetect_core::scenegraph::{
    build_scene_graph_with, encode_features, hash_bucket, FeatureConfig, SceneGraph, SceneOptions, SceneStats,
};
use uedetect_learn::detector::{
    build_relation_graph, classify, self_train_encoder, train_classifier, AppRecord, ClassifierConfig,
    ClassifierParams, DetectorError, Label, Prediction, StrongFeatures,
};
use uedetect_learn::gae::{self, Checkpoint, DenseGraph, GaeError, GaeParams, Hyper, TrainReport};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Gae(#[from] GaeError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Model { path: PathBuf, message: String },
}

/// Which node attributes reach the app vector. The manifest vector is
/// always included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    Manifest,
    /// Transition structure only: degrees and node kind.
    ManifestAtg,
    ManifestSceneGraph,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 3] = [FeatureSet::Manifest, FeatureSet::ManifestAtg, FeatureSet::ManifestSceneGraph];

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::Manifest => "manifest",
            FeatureSet::ManifestAtg => "manifest_atg",
            FeatureSet::ManifestSceneGraph => "manifest_scene_graph",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManifestConfig {
    pub permission_buckets: usize,
    pub name_buckets: usize,
}

impl Default for ManifestConfig {
    fn default() -> Self {
        ManifestConfig {
            permission_buckets: 32,
            name_buckets: 16,
        }
    }
}

impl ManifestConfig {
    pub fn dim(&self) -> usize {
        self.permission_buckets + self.name_buckets + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub split_seed: u64,
    pub max_depth: usize,
    /// Tokens dropped from imprints.
    pub stoplist: Vec<String>,
    pub feature_set: FeatureSet,
    pub features: FeatureConfig,
    pub manifest: ManifestConfig,
    /// Scene-graph encoder, trained over all training scene graphs at once.
    pub scene_encoder: Hyper,
    /// App encoder on the relation graph.
    pub app_encoder: Hyper,
    pub classifier: ClassifierConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            split_seed: 0,
            max_depth: uedetect_core::DEFAULT_MAX_DEPTH,
            stoplist: Stoplist::default().tokens().map(str::to_string).collect(),
            feature_set: FeatureSet::ManifestSceneGraph,
            features: FeatureConfig::default(),
            manifest: ManifestConfig::default(),
            scene_encoder: Hyper::default(),
            app_encoder: Hyper::default(),
            classifier: ClassifierConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.features
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.manifest.permission_buckets == 0 || self.manifest.name_buckets == 0 {
            return Err(PipelineError::Config("manifest bucket counts must be positive".into()));
        }
        self.scene_encoder.validate()?;
        self.app_encoder.validate()?;
        let c = &self.classifier;
        if !(c.lr.is_finite() && c.lr > 0.0 && c.lambda.is_finite() && c.lambda >= 0.0) {
            return Err(PipelineError::Config("classifier lr must be positive and lambda non-negative".into()));
        }
        Ok(())
    }

    pub fn scene_options(&self) -> SceneOptions {
        SceneOptions {
            max_depth: self.max_depth,
            stoplist: Stoplist::new(self.stoplist.iter().cloned()),
            ..SceneOptions::default()
        }
    }

    /// Sets mask ratio and contrastive weight on both encoders.
    pub fn with_gae(&self, mask_p: f64, alpha: f64) -> Self {
        let mut c = self.clone();
        for h in [&mut c.scene_encoder, &mut c.app_encoder] {
            h.mask_p = mask_p;
            h.alpha = alpha;
        }
        c
    }
}

/// Everything the learning stages need from one app.
#[derive(Debug, Clone)]
pub struct AppData {
    pub id: String,
    pub label: Option<Label>,
    pub strong: StrongFeatures,
    /// Scene graph with full node features.
    pub graph: DenseGraph,
    pub manifest: Vec<f64>,
    pub stats: SceneStats,
    pub warnings: Vec<String>,
}

/// Hashed permissions, hashed package and app-name words, and the log count
/// of UI classes. Certificates are left out.
pub fn manifest_vector(bundle: &AppBundle, cfg: &ManifestConfig) -> Vec<f64> {
    let m = &bundle.manifest;
    let mut v = vec![0.0; cfg.dim()];
    for p in &m.permissions {
        v[hash_bucket(p, cfg.permission_buckets)] = 1.0;
    }
    let mut counts = vec![0usize; cfg.name_buckets];
    let words = m
        .package_name
        .split('.')
        .chain(m.app_name.split_whitespace())
        .map(str::to_lowercase)
        .filter(|w| !w.is_empty() && !w.chars().all(|c| c.is_ascii_digit()));
    for w in words {
        let w: String = w.trim_end_matches(|c: char| c.is_ascii_digit()).to_string();
        counts[hash_bucket(&w, cfg.name_buckets)] += 1;
    }
    for (slot, c) in v[cfg.permission_buckets..].iter_mut().zip(counts) {
        *slot = (c as f64).ln_1p();
    }
    let ui = bundle.classes.iter().filter(|c| c.kind.is_ui()).count();
    v[cfg.dim() - 1] = (ui as f64).ln_1p();
    v
}

/// Node features and symmetric edges of a scene graph.
pub fn scene_dense_graph(sg: &SceneGraph, cfg: &FeatureConfig) -> DenseGraph {
    let fm = encode_features(sg, cfg);
    let index: BTreeMap<&str, usize> = fm.node_order.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let x = Array2::from_shape_vec((fm.rows(), fm.dim), fm.values.clone()).expect("feature matrix shape");
    let edges = sg.atg.edges.keys().map(|(a, b)| (index[a.as_str()], index[b.as_str()]));
    DenseGraph::new(x, edges).expect("scene graph edges index its own nodes")
}

pub fn prepare_app(id: &str, bundle: &AppBundle, label: Option<Label>, cfg: &PipelineConfig) -> AppData {
    let sg = build_scene_graph_with(bundle, id, &cfg.scene_options());
    let m = &bundle.manifest;
    AppData {
        id: id.to_string(),
        label,
        strong: StrongFeatures {
            package_name: m.package_name.clone(),
            app_name: m.app_name.clone(),
            cert_digest: m.cert_digest.clone(),
        },
        graph: scene_dense_graph(&sg, &cfg.features),
        manifest: manifest_vector(bundle, &cfg.manifest),
        stats: sg.stats(),
        warnings: sg.warnings,
    }
}

/// Scene graphs and features for every app, in parallel.
pub fn prepare(apps: &[LoadedApp], cfg: &PipelineConfig) -> Vec<AppData> {
    apps.par_iter()
        .map(|a| prepare_app(&a.id, &a.bundle, Some(a.label), cfg))
        .collect()
}

/// Node features visible under `set`.
pub fn restrict(x: &Array2<f64>, set: FeatureSet, cfg: &FeatureConfig) -> Array2<f64> {
    match set {
        FeatureSet::ManifestSceneGraph => x.clone(),
        FeatureSet::Manifest => Array2::zeros(x.raw_dim()),
        FeatureSet::ManifestAtg => {
            let mut out = Array2::zeros(x.raw_dim());
            let s = cfg.structural_offset();
            // in_degree, out_degree, is_fragment
            for j in [s, s + 1, s + 4] {
                out.column_mut(j).assign(&x.column(j));
            }
            out
        }
    }
}

/// Seeded 70/20/10 partition of `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn new(n: usize, seed: u64) -> Self {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let train = (n as f64 * 0.7).round() as usize;
        let val = (n as f64 * 0.2).round() as usize;
        let test = idx.split_off((train + val).min(n));
        let val = idx.split_off(train.min(idx.len()));
        Split { train: idx, val, test }
    }

    /// Validation and test apps together.
    pub fn held_out(&self) -> Vec<usize> {
        self.val.iter().chain(&self.test).copied().collect()
    }
}

/// Column-wise z-scoring fitted on training vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let width = rows.first().map_or(0, Vec::len);
        let m = Array2::from_shape_fn((rows.len(), width), |(i, j)| rows[i][j]);
        let mean = m.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(width));
        let scale = m.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-8 { s } else { 1.0 });
        Standardizer {
            mean: mean.to_vec(),
            scale: scale.to_vec(),
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }
}

/// Learned state needed to classify new apps.
#[derive(Debug, Clone, PartialEq)]
pub struct Models {
    pub config: PipelineConfig,
    pub scene_encoder: Option<GaeParams>,
    pub standardizer: Standardizer,
    pub app_encoder: GaeParams,
    pub classifier: ClassifierParams,
    /// Training apps with standardized vectors; classification rebuilds the
    /// relation graph over them plus the new apps.
    pub train_records: Vec<AppRecord>,
}

/// Loss summary of one encoder run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderSummary {
    pub nodes: usize,
    pub edges: usize,
    pub reference_initial: f64,
    pub reference_final: f64,
    pub last_epoch_total: f64,
}

impl EncoderSummary {
    fn of(g: &DenseGraph, r: &TrainReport) -> Self {
        EncoderSummary {
            nodes: g.n,
            edges: g.edges.len(),
            reference_initial: r.reference_initial,
            reference_final: r.reference_final,
            last_epoch_total: r.epochs.last().map_or(f64::NAN, |e| e.total),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.reference_initial.is_finite() && self.reference_final.is_finite()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub scene_encoder_s: f64,
    pub app_vectors_s: f64,
    pub app_encoder_s: f64,
    pub classifier_s: f64,
    pub classify_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub models: Models,
    pub scene_summary: Option<EncoderSummary>,
    pub app_summary: EncoderSummary,
    pub times: StageTimes,
}

fn scene_vector(g: &DenseGraph, f_theta: &GaeParams, cfg: &PipelineConfig) -> Result<Vec<f64>, GaeError> {
    let x = restrict(&g.features, cfg.feature_set, &cfg.features);
    let view = DenseGraph {
        n: g.n,
        edges: g.edges.clone(),
        features: x,
    };
    Ok(gae::pool(&gae::encode_graph(&view, f_theta)?).to_vec())
}

impl Models {
    /// Raw (unstandardized) app vector.
    fn raw_vector(&self, app: &AppData) -> Result<Vec<f64>, GaeError> {
        let mut v = match &self.scene_encoder {
            Some(p) => scene_vector(&app.graph, p, &self.config)?,
            None => Vec::new(),
        };
        v.extend_from_slice(&app.manifest);
        Ok(v)
    }

    pub fn record(&self, app: &AppData, label: Option<Label>) -> Result<AppRecord, GaeError> {
        Ok(AppRecord {
            app_id: app.id.clone(),
            strong: app.strong.clone(),
            vector: self.standardizer.apply(&self.raw_vector(app)?),
            label,
        })
    }

    pub fn classify(&self, apps: &[&AppData]) -> Result<BTreeMap<String, Prediction>, PipelineError> {
        let records = apps
            .par_iter()
            .map(|a| self.record(a, None))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(classify(&self.train_records, &records, &self.app_encoder, &self.classifier)?)
    }

    /// Same encoders, classifier retrained on `labels` (one per training
    /// record). The encoders never read labels, so this equals a full rerun.
    pub fn relabeled(&self, labels: &[Label]) -> Result<Models, PipelineError> {
        let mut out = self.clone();
        for (r, l) in out.train_records.iter_mut().zip(labels) {
            r.label = Some(*l);
        }
        let h = build_relation_graph(out.train_records.clone())?;
        out.classifier = train_classifier(&h, &out.app_encoder, &self.config.classifier)?;
        Ok(out)
    }
}

/// Trains every stage on `train` apps; `labels[i]` labels `train[i]`.
pub fn train_models(
    data: &[AppData],
    train: &[usize],
    labels: &[Label],
    cfg: &PipelineConfig,
) -> Result<TrainOutcome, PipelineError> {
    cfg.validate()?;
    assert_eq!(train.len(), labels.len(), "one label per training app");
    let mut times = StageTimes::default();

    let t = Instant::now();
    let (scene_encoder, scene_summary) = if cfg.feature_set == FeatureSet::Manifest {
        (None, None)
    } else {
        let graphs: Vec<DenseGraph> = train
            .iter()
            .map(|&i| {
                let g = &data[i].graph;
                DenseGraph {
                    n: g.n,
                    edges: g.edges.clone(),
                    features: restrict(&g.features, cfg.feature_set, &cfg.features),
                }
            })
            .collect();
        let (union, _) = DenseGraph::disjoint_union(&graphs)?;
        let (p, report) = gae::train(&union, &cfg.scene_encoder)?;
        (Some(p), Some(EncoderSummary::of(&union, &report)))
    };
    times.scene_encoder_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let mut models = Models {
        config: cfg.clone(),
        scene_encoder,
        standardizer: Standardizer {
            mean: Vec::new(),
            scale: Vec::new(),
        },
        app_encoder: GaeParams::zeros(1, 1, 1),
        classifier: ClassifierParams {
            weights: Array2::zeros((0, 0)),
            bias: Array1::zeros(0),
            mean: Array1::zeros(0),
            scale: Array1::zeros(0),
            trained: false,
        },
        train_records: Vec::new(),
    };
    let raw = train
        .par_iter()
        .map(|&i| models.raw_vector(&data[i]))
        .collect::<Result<Vec<_>, _>>()?;
    models.standardizer = Standardizer::fit(&raw);
    models.train_records = train
        .iter()
        .zip(&raw)
        .zip(labels)
        .map(|((&i, v), l)| AppRecord {
            app_id: data[i].id.clone(),
            strong: data[i].strong.clone(),
            vector: models.standardizer.apply(v),
            label: Some(*l),
        })
        .collect();
    times.app_vectors_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let h = build_relation_graph(models.train_records.clone())?;
    let (f_psi, report) = self_train_encoder(&h, &cfg.app_encoder)?;
    let app_summary = EncoderSummary::of(&h.to_dense(), &report);
    models.app_encoder = f_psi;
    times.app_encoder_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    models.classifier = train_classifier(&h, &models.app_encoder, &cfg.classifier)?;
    times.classifier_s = t.elapsed().as_secs_f64();

    Ok(TrainOutcome {
        models,
        scene_summary,
        app_summary,
        times,
    })
}

/// Held-out predictions scored against true labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOut {
    pub confusion: Confusion,
    pub accuracy: f64,
    /// Accuracy on the test part alone.
    pub test_accuracy: f64,
    pub predictions: BTreeMap<String, Prediction>,
}

pub fn score(data: &[AppData], split: &Split, preds: &BTreeMap<String, Prediction>) -> HeldOut {
    let pairs = |idx: &[usize]| -> Vec<(Label, Label)> {
        idx.iter()
            .map(|&i| (data[i].label.expect("evaluation apps are labeled"), preds[&data[i].id].label))
            .collect()
    };
    let confusion = Confusion::from_pairs(pairs(&split.held_out()));
    let test = Confusion::from_pairs(pairs(&split.test));
    HeldOut {
        accuracy: confusion.accuracy(),
        confusion,
        test_accuracy: test.accuracy(),
        predictions: preds.clone(),
    }
}

/// Trains on the training split and scores validation and test apps.
pub fn evaluate(data: &[AppData], split: &Split, cfg: &PipelineConfig) -> Result<(TrainOutcome, HeldOut), PipelineError> {
    let labels: Vec<Label> = split
        .train
        .iter()
        .map(|&i| data[i].label.expect("training apps are labeled"))
        .collect();
    let mut out = train_models(data, &split.train, &labels, cfg)?;
    let t = Instant::now();
    let held: Vec<&AppData> = split.held_out().iter().map(|&i| &data[i]).collect();
    let preds = out.models.classify(&held)?;
    out.times.classify_s = t.elapsed().as_secs_f64();
    let s = score(data, split, &preds);
    Ok((out, s))
}

/// Held-out accuracy after retraining the classifier on shuffled labels,
/// one value per shuffle seed.
pub fn shuffled_label_accuracy(
    data: &[AppData],
    split: &Split,
    models: &Models,
    seeds: &[u64],
) -> Result<Vec<f64>, PipelineError> {
    let held: Vec<&AppData> = split.held_out().iter().map(|&i| &data[i]).collect();
    seeds
        .par_iter()
        .map(|&seed| {
            let mut labels: Vec<Label> = models
                .train_records
                .iter()
                .map(|r| r.label.expect("training records are labeled"))
                .collect();
            labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let m = models.relabeled(&labels)?;
            Ok(score(data, split, &m.classify(&held)?).accuracy)
        })
        .collect()
}

pub const MODEL_FORMAT: &str = "uedetect-model/1";
const FORMAT_FILE: &str = "FORMAT";
const CONFIG_FILE: &str = "config.json";
const SCENE_FILE: &str = "scene_encoder.json";
const APP_FILE: &str = "app_encoder.json";
const CLASSIFIER_FILE: &str = "classifier.json";
const STANDARDIZER_FILE: &str = "standardizer.json";
const TRAIN_FILE: &str = "train_apps.json";

fn model_err(path: &Path, message: impl ToString) -> PipelineError {
    PipelineError::Model {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

fn write_file(path: &Path, text: String) -> Result<(), PipelineError> {
    fs::write(path, text).map_err(|e| model_err(path, e))
}

fn read_file(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|e| model_err(path, e))
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("model parts serialize") + "\n"
}

fn parse<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    serde_json::from_str(&read_file(path)?).map_err(|e| model_err(path, e))
}

impl Models {
    pub fn save(&self, dir: &Path) -> Result<(), PipelineError> {
        fs::create_dir_all(dir).map_err(|e| model_err(dir, e))?;
        write_file(&dir.join(FORMAT_FILE), format!("{MODEL_FORMAT}\n"))?;
        write_file(&dir.join(CONFIG_FILE), json(&self.config))?;
        if let Some(p) = &self.scene_encoder {
            write_file(&dir.join(SCENE_FILE), Checkpoint::new(self.config.scene_encoder, p.clone()).to_json())?;
        }
        write_file(
            &dir.join(APP_FILE),
            Checkpoint::new(self.config.app_encoder, self.app_encoder.clone()).to_json(),
        )?;
        write_file(&dir.join(CLASSIFIER_FILE), json(&self.classifier))?;
        write_file(&dir.join(STANDARDIZER_FILE), json(&self.standardizer))?;
        write_file(&dir.join(TRAIN_FILE), json(&self.train_records))
    }

    pub fn load(dir: &Path) -> Result<Models, PipelineError> {
        let fmt_path = dir.join(FORMAT_FILE);
        let fmt = read_file(&fmt_path)?;
        if fmt.trim() != MODEL_FORMAT {
            return Err(model_err(&fmt_path, format!("unsupported model format `{}`", fmt.trim())));
        }
        let config: PipelineConfig = parse(&dir.join(CONFIG_FILE))?;
        config.validate()?;
        let checkpoint = |name: &str| -> Result<GaeParams, PipelineError> {
            let path = dir.join(name);
            Checkpoint::from_json(&read_file(&path)?)
                .map(|c| c.params)
                .map_err(|e| model_err(&path, e))
        };
        let scene_encoder = match config.feature_set {
            FeatureSet::Manifest => None,
            _ => Some(checkpoint(SCENE_FILE)?),
        };
        let classifier: ClassifierParams = parse(&dir.join(CLASSIFIER_FILE))?;
        if !classifier.is_finite() {
            return Err(model_err(&dir.join(CLASSIFIER_FILE), "non-finite classifier"));
        }
        Ok(Models {
            scene_encoder,
            app_encoder: checkpoint(APP_FILE)?,
            classifier,
            standardizer: parse(&dir.join(STANDARDIZER_FILE))?,
            train_records: parse(&dir.join(TRAIN_FILE))?,
            config,
        })
    }
}
