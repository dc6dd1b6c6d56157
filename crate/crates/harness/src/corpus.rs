//! Corpus generation, layout on disk and loading.
//!
//! Layout:
//! ```text
//! corpus.json               spec the corpus was generated from
//! fixtures/App1.appir       benchmark apps, plus `.truth.json` sidecars
//! fixtures-renamed/...      the same apps after rename obfuscation
//! apps/<label>-<nnn>.appir  labeled apps
//! ```

use crate::families::{developer, generate, identity, template_name, Developer};
use crate::fixtures;
use crate::truth::GroundTruth;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;
use uedetect_core::app_ir::{parse_bundle, rename_map, apply_rename_map, write_bundle, AppBundle};
use uedetect_learn::detector::Label;

pub const FIXTURE_DIR: &str = "fixtures";
pub const RENAMED_DIR: &str = "fixtures-renamed";
pub const APPS_DIR: &str = "apps";
pub const SPEC_FILE: &str = "corpus.json";
pub const BUNDLE_EXT: &str = "appir";
pub const TRUTH_SUFFIX: &str = ".truth.json";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub seed: u64,
    pub per_class: usize,
    /// Developer accounts (certificates) per underground family.
    pub developers_per_class: usize,
    /// Chance that an underground app is signed with a certificate shared
    /// across families.
    pub shared_cert_rate: f64,
    pub shared_certs: usize,
    /// App names reused across developers of one underground family.
    pub template_names: usize,
    /// Chance that an underground app takes one of its family's template names.
    pub template_name_rate: f64,
    /// Fraction of labeled apps emitted rename-obfuscated.
    pub renamed_fraction: f64,
    /// Seed for the renamed fixture variants.
    pub rename_seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            seed: 7,
            per_class: 50,
            developers_per_class: 8,
            shared_cert_rate: 0.08,
            shared_certs: 3,
            template_names: 4,
            template_name_rate: 0.5,
            renamed_fraction: 0.3,
            rename_seed: 1,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.per_class == 0 {
            return Err("per_class must be positive".into());
        }
        if self.developers_per_class == 0 {
            return Err("developers_per_class must be positive".into());
        }
        for (name, v) in [
            ("shared_cert_rate", self.shared_cert_rate),
            ("renamed_fraction", self.renamed_fraction),
            ("template_name_rate", self.template_name_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if self.template_name_rate > 0.0 && self.template_names == 0 {
            return Err("template_names must be positive when template_name_rate > 0".into());
        }
        if self.shared_cert_rate > 0.0 && self.shared_certs == 0 {
            return Err("shared_certs must be positive when shared_cert_rate > 0".into());
        }
        Ok(())
    }
}

/// One bundle with its sidecar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub id: String,
    pub source: String,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub fixtures: Vec<Entry>,
    pub renamed: Vec<Entry>,
    pub apps: Vec<Entry>,
}

fn renamed_entry(id: &str, source: &str, truth: &GroundTruth, seed: u64) -> Entry {
    let bundle = parse_bundle(source).expect("generated bundles parse");
    let map = rename_map(&bundle, seed);
    Entry {
        id: id.to_string(),
        source: write_bundle(&apply_rename_map(&bundle, &map)),
        truth: truth.renamed(&map, id),
    }
}

/// Builds the whole corpus in memory. Deterministic in `spec`.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Corpus, String> {
    spec.validate()?;
    let mut corpus = Corpus::default();
    for f in fixtures::all() {
        corpus.renamed.push(renamed_entry(f.name, &f.source, &f.truth, spec.rename_seed));
        corpus.fixtures.push(Entry {
            id: f.name.to_string(),
            source: f.source,
            truth: f.truth,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shared: Vec<String> = (0..spec.shared_certs)
        .map(|_| format!("{:016x}", rng.gen::<u64>()))
        .collect();
    for label in Label::ALL {
        // Legitimate developers publish one app each.
        let devs = if label == Label::Legitimate {
            spec.per_class
        } else {
            spec.developers_per_class
        };
        let developers: Vec<Developer> = (0..devs).map(|i| developer(label, i, &mut rng)).collect();
        let templates: Vec<String> = (0..spec.template_names)
            .map(|i| template_name(label, i, &mut rng))
            .collect();
        for k in 0..spec.per_class {
            let id = format!("{}-{k:03}", label.name());
            let mut app_rng = ChaCha8Rng::seed_from_u64(rng.gen());
            let dev = if label == Label::Legitimate {
                &developers[k]
            } else {
                developers.choose(&mut app_rng).expect("developers")
            };
            let cert = (label != Label::Legitimate && app_rng.gen_bool(spec.shared_cert_rate))
                .then(|| shared.choose(&mut app_rng).expect("shared certs").as_str());
            let mut ident = identity(label, k, dev, cert, &mut app_rng);
            if label != Label::Legitimate && app_rng.gen_bool(spec.template_name_rate) {
                ident.app_name = templates.choose(&mut app_rng).expect("templates").clone();
            }
            let (source, truth) = generate(&id, label, &ident, &mut app_rng);
            let entry = if app_rng.gen_bool(spec.renamed_fraction) {
                renamed_entry(&id, &source, &truth, app_rng.gen())
            } else {
                Entry { id, source, truth }
            };
            corpus.apps.push(entry);
        }
    }
    // Same order as `read_entries`, so a corpus splits identically whether
    // generated or read back.
    corpus.apps.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(corpus)
}

fn write_entries(dir: &Path, entries: &[Entry]) -> Result<(), CorpusError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for e in entries {
        let bundle = dir.join(format!("{}.{BUNDLE_EXT}", e.id));
        fs::write(&bundle, &e.source).map_err(io_err(&bundle))?;
        let truth = dir.join(format!("{}{TRUTH_SUFFIX}", e.id));
        fs::write(&truth, e.truth.to_json()).map_err(io_err(&truth))?;
    }
    Ok(())
}

pub fn write_corpus(dir: &Path, spec: &CorpusSpec, corpus: &Corpus) -> Result<(), CorpusError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let spec_path = dir.join(SPEC_FILE);
    let text = serde_json::to_string_pretty(spec).expect("spec serializes") + "\n";
    fs::write(&spec_path, text).map_err(io_err(&spec_path))?;
    write_entries(&dir.join(FIXTURE_DIR), &corpus.fixtures)?;
    write_entries(&dir.join(RENAMED_DIR), &corpus.renamed)?;
    write_entries(&dir.join(APPS_DIR), &corpus.apps)
}

/// Bundles under `dir` with their sidecars, sorted by id. A missing
/// directory yields no entries.
pub fn read_entries(dir: &Path) -> Result<Vec<Entry>, CorpusError> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == BUNDLE_EXT))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for path in paths {
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| CorpusError::Invalid {
                path: path.clone(),
                message: "file name is not UTF-8".into(),
            })?
            .to_string();
        let source = fs::read_to_string(&path).map_err(io_err(&path))?;
        let truth_path = dir.join(format!("{id}{TRUTH_SUFFIX}"));
        let text = fs::read_to_string(&truth_path).map_err(io_err(&truth_path))?;
        let truth = GroundTruth::from_json(&text).map_err(|message| CorpusError::Invalid {
            path: truth_path.clone(),
            message,
        })?;
        out.push(Entry { id, source, truth });
    }
    Ok(out)
}

pub fn read_corpus(dir: &Path) -> Result<Corpus, CorpusError> {
    if !dir.is_dir() {
        return Err(CorpusError::Invalid {
            path: dir.to_path_buf(),
            message: "not a directory".into(),
        });
    }
    Ok(Corpus {
        fixtures: read_entries(&dir.join(FIXTURE_DIR))?,
        renamed: read_entries(&dir.join(RENAMED_DIR))?,
        apps: read_entries(&dir.join(APPS_DIR))?,
    })
}

/// A labeled app that parsed.
#[derive(Debug, Clone)]
pub struct LoadedApp {
    pub id: String,
    pub bundle: AppBundle,
    pub label: Label,
}

/// Parses labeled entries. Unparseable or unlabeled bundles are skipped and
/// reported as `(id, reason)`.
pub fn load_apps(entries: &[Entry]) -> (Vec<LoadedApp>, Vec<(String, String)>) {
    let mut apps = Vec::new();
    let mut skipped = Vec::new();
    for e in entries {
        let Some(label) = e.truth.label else {
            skipped.push((e.id.clone(), "no label".to_string()));
            continue;
        };
        match parse_bundle(&e.source) {
            Ok(bundle) => apps.push(LoadedApp {
                id: e.id.clone(),
                bundle,
                label,
            }),
            Err(err) => skipped.push((e.id.clone(), err.to_string())),
        }
    }
    (apps, skipped)
}
