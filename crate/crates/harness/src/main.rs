//! `uedetect` command line.
//!
//! Exit codes: 0 success, 1 invalid input or config, 2 internal error.

use clap::{Parser, Subcommand};
use serde_json::json;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use uedetect_core::app_ir::{parse_bundle, AppBundle};
use uedetect_core::scenegraph::{build_scene_graph_with, serialize};
use uedetect_harness::config::Config;
use uedetect_harness::corpus::{generate_corpus, load_apps, read_corpus, write_corpus, Corpus, BUNDLE_EXT};
use uedetect_harness::pipeline::{prepare, prepare_app, train_models, AppData, Models, PipelineError, Split};
use uedetect_harness::report::{render_text, run, Scope};
use uedetect_learn::detector::{DetectorError, Label};

#[derive(Debug, Parser)]
#[command(name = "uedetect", version, about = "Scene-graph based detection of underground-economy apps")]
struct Cli {
    /// TOML config file; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Config override such as `pipeline.app_encoder.epochs=50`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic corpus into a directory.
    GenCorpus {
        dir: PathBuf,
    },
    /// Scene graph JSON for a bundle, or for every bundle in a directory.
    BuildSg {
        path: PathBuf,
    },
    /// Standardized app vectors under a trained model.
    Encode {
        #[arg(long)]
        model: PathBuf,
        path: PathBuf,
    },
    /// Train on the training split of a corpus and save the model.
    Train {
        #[arg(long)]
        model: PathBuf,
        /// Corpus directory; generated from the config when omitted.
        corpus: Option<PathBuf>,
    },
    /// Predict labels for a bundle or a directory of bundles.
    Classify {
        #[arg(long)]
        model: PathBuf,
        path: PathBuf,
    },
    /// Static analysis scores and held-out classification.
    Eval {
        corpus: Option<PathBuf>,
        /// Plain text instead of JSON.
        #[arg(long)]
        text: bool,
    },
    /// Everything in `eval` plus ablations, sweeps and the chance control.
    Report {
        corpus: Option<PathBuf>,
        #[arg(long)]
        text: bool,
    },
}

enum Failure {
    Invalid(String),
    Internal(String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(_)
            | PipelineError::Model { .. }
            | PipelineError::Detector(DetectorError::IdCollision(_) | DetectorError::DuplicateAppId(_)) => {
                Failure::Invalid(e.to_string())
            }
            _ => Failure::Internal(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Internal(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("json value serializes") + "\n"
}

/// `(id, bundle)` for a file, or for every bundle in a directory. A single
/// file must parse; unparseable files in a directory are skipped.
fn read_bundles(path: &Path) -> Result<Vec<(String, AppBundle)>, Failure> {
    let read = |p: &Path| fs::read_to_string(p).map_err(|e| Failure::Invalid(format!("{}: {e}", p.display())));
    let id_of = |p: &Path| p.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    if path.is_file() {
        let b = parse_bundle(&read(path)?).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
        return Ok(vec![(id_of(path), b)]);
    }
    let entries = fs::read_dir(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == BUNDLE_EXT))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        match parse_bundle(&read(&p)?) {
            Ok(b) => out.push((id_of(&p), b)),
            Err(e) => log::warn!("skipping {}: {e}", p.display()),
        }
    }
    Ok(out)
}

fn corpus_from(path: Option<&Path>, cfg: &Config) -> Result<Corpus, Failure> {
    match path {
        Some(p) => read_corpus(p).map_err(|e| Failure::Invalid(e.to_string())),
        None => generate_corpus(&cfg.corpus).map_err(Failure::Invalid),
    }
}

fn load_models(dir: &Path) -> Result<Models, Failure> {
    Models::load(dir).map_err(|e| Failure::Invalid(e.to_string()))
}

fn unlabeled(bundles: &[(String, AppBundle)], models: &Models) -> Vec<AppData> {
    bundles
        .iter()
        .map(|(id, b)| prepare_app(id, b, None, &models.config))
        .collect()
}

fn execute(cli: Cli) -> Outcome {
    let cfg = Config::load(cli.config.as_deref(), &cli.overrides).map_err(|e| Failure::Invalid(e.to_string()))?;
    let out = cli.out.as_deref();
    let extras = matches!(cli.command, Command::Report { .. });
    match cli.command {
        Command::GenCorpus { dir } => {
            let corpus = generate_corpus(&cfg.corpus).map_err(Failure::Invalid)?;
            write_corpus(&dir, &cfg.corpus, &corpus).map_err(|e| Failure::Internal(e.to_string()))?;
            log::info!("wrote {} labeled apps to {}", corpus.apps.len(), dir.display());
            Ok(())
        }
        Command::BuildSg { path } => {
            let opts = cfg.pipeline.scene_options();
            let graphs: Vec<String> = read_bundles(&path)?
                .iter()
                .map(|(id, b)| serialize(&build_scene_graph_with(b, id, &opts)))
                .collect();
            let text = if path.is_file() {
                graphs.concat()
            } else {
                format!("[{}]\n", graphs.iter().map(|g| g.trim_end()).collect::<Vec<_>>().join(",\n"))
            };
            emit(out, &text)
        }
        Command::Encode { model, path } => {
            let models = load_models(&model)?;
            let data = unlabeled(&read_bundles(&path)?, &models);
            let mut vectors = BTreeMap::new();
            for a in &data {
                let r = models.record(a, None).map_err(|e| Failure::Internal(e.to_string()))?;
                vectors.insert(a.id.clone(), r.vector);
            }
            emit(out, &to_json(&json!(vectors)))
        }
        Command::Train { model, corpus } => {
            let corpus = corpus_from(corpus.as_deref(), &cfg)?;
            let (apps, skipped) = load_apps(&corpus.apps);
            for (id, reason) in &skipped {
                log::warn!("skipping {id}: {reason}");
            }
            let data = prepare(&apps, &cfg.pipeline);
            if data.len() < 3 {
                return Err(Failure::Invalid(format!("need at least 3 labeled apps, found {}", data.len())));
            }
            let split = Split::new(data.len(), cfg.pipeline.split_seed);
            let labels: Vec<Label> = split.train.iter().map(|&i| apps[i].label).collect();
            let outcome = train_models(&data, &split.train, &labels, &cfg.pipeline)?;
            outcome.models.save(&model)?;
            let summary = json!({
                "train_apps": split.train.len(),
                "scene_encoder": outcome.scene_summary,
                "app_encoder": outcome.app_summary,
                "times": outcome.times,
            });
            emit(out, &to_json(&summary))
        }
        Command::Classify { model, path } => {
            let models = load_models(&model)?;
            let data = unlabeled(&read_bundles(&path)?, &models);
            let refs: Vec<&AppData> = data.iter().collect();
            let preds = models.classify(&refs)?;
            emit(out, &to_json(&json!(preds)))
        }
        Command::Eval { corpus, text } | Command::Report { corpus, text } => {
            let scope = Scope { extras, ..Scope::ALL };
            let corpus = corpus_from(corpus.as_deref(), &cfg)?;
            let report = run(&corpus, &cfg, scope)?;
            let body = if text { render_text(&report) } else { report.to_json() };
            emit(out, &body)?;
            if report.all_checks_pass() {
                Ok(())
            } else {
                Err(Failure::Internal("report self-consistency checks failed".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
    }
}
