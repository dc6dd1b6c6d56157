//! Full evaluation runs and the report they produce.

use crate::config::Config;
use crate::corpus::{load_apps, Corpus};
use crate::metrics::{Confusion, Prf};
use crate::pipeline::{
    evaluate, prepare, shuffled_label_accuracy, AppData, EncoderSummary, FeatureSet, PipelineError, Split, StageTimes,
};
use crate::static_eval::{eval_static, StaticReport};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::time::Instant;
use uedetect_learn::detector::Label;

pub const REPORT_FORMAT: &str = "uedetect-report/1";

/// Per-class means over labeled apps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub label: Label,
    pub apps: usize,
    pub nodes: f64,
    pub transition_pairs: f64,
    pub widgets: f64,
    pub tokens: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ablation {
    pub feature_set: FeatureSet,
    pub accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub mask_ratio: f64,
    pub alpha: f64,
    pub accuracy: f64,
    /// Both encoders ended with finite losses.
    pub finite: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chance {
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub label: Label,
    pub support: usize,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub feature_set: FeatureSet,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    /// Over validation and test apps together.
    pub accuracy: f64,
    pub test_accuracy: f64,
    pub per_class: Vec<ClassAccuracy>,
    /// Rows true, columns predicted, in `per_class` order.
    pub confusion: Confusion,
    pub scene_encoder: Option<EncoderSummary>,
    pub app_encoder: EncoderSummary,
    pub ablations: Vec<Ablation>,
    pub sweeps: Vec<SweepPoint>,
    pub chance: Option<Chance>,
    /// Bundles left out of the run, as `(id, reason)`.
    pub skipped: Vec<(String, String)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub static_s: f64,
    pub prepare_s: f64,
    pub stages: StageTimes,
    /// Scene graphs through held-out predictions for the main run.
    pub pipeline_s: f64,
    pub ablations_s: f64,
    pub sweeps_s: f64,
    pub chance_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format: String,
    pub static_plain: Option<StaticReport>,
    pub static_renamed: Option<StaticReport>,
    pub classification: Option<Classification>,
    pub corpus: Vec<ClassStats>,
    pub timing: Timing,
    pub checks: Vec<Check>,
}

/// Which parts of the evaluation to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scope {
    pub static_eval: bool,
    pub classification: bool,
    /// Ablations, sweeps and the chance control, as enabled in the config.
    pub extras: bool,
}

impl Scope {
    pub const ALL: Scope = Scope {
        static_eval: true,
        classification: true,
        extras: true,
    };
}

impl EvalReport {
    /// The report with every wall-clock field zeroed.
    pub fn without_timing(&self) -> EvalReport {
        let mut r = self.clone();
        r.timing = Timing::default();
        for s in [&mut r.static_plain, &mut r.static_renamed].into_iter().flatten() {
            s.max_seconds = 0.0;
            for a in &mut s.apps {
                a.seconds = 0.0;
            }
        }
        r
    }

    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

fn class_stats(data: &[AppData]) -> Vec<ClassStats> {
    Label::ALL
        .iter()
        .filter_map(|&label| {
            let apps: Vec<&AppData> = data.iter().filter(|a| a.label == Some(label)).collect();
            if apps.is_empty() {
                return None;
            }
            let n = apps.len() as f64;
            let mean = |f: fn(&AppData) -> usize| apps.iter().map(|a| f(a) as f64).sum::<f64>() / n;
            Some(ClassStats {
                label,
                apps: apps.len(),
                nodes: mean(|a| a.stats.nodes),
                transition_pairs: mean(|a| a.stats.transition_pairs),
                widgets: mean(|a| a.stats.widgets),
                tokens: mean(|a| a.stats.tokens),
            })
        })
        .collect()
}

fn prf_checks(name: &str, s: &StaticReport, checks: &mut Vec<Check>) {
    let ok = [s.transitions, s.transitions_all, s.tokens]
        .iter()
        .chain(s.apps.iter().flat_map(|a| [&a.transitions, &a.transitions_all, &a.tokens]))
        .all(Prf::is_consistent);
    checks.push(Check {
        name: format!("{name}: F1 follows from precision and recall"),
        ok,
    });
}

fn classification_checks(c: &Classification, data: &[AppData], split: &Split, checks: &mut Vec<Check>) {
    let held = split.held_out();
    let rows_ok = Label::ALL.iter().all(|&l| {
        let support = held.iter().filter(|&&i| data[i].label == Some(l)).count();
        c.confusion.support(l) == support
    });
    checks.push(Check {
        name: "confusion rows sum to class supports".into(),
        ok: rows_ok && c.confusion.total() == held.len(),
    });
    let acc = c.confusion.correct() as f64 / c.confusion.total().max(1) as f64;
    checks.push(Check {
        name: "accuracy follows from the confusion matrix".into(),
        ok: (acc - c.accuracy).abs() <= 1e-12,
    });
    let per_class_ok = c
        .per_class
        .iter()
        .all(|p| p.accuracy == c.confusion.class_accuracy(p.label) && p.support == c.confusion.support(p.label));
    checks.push(Check {
        name: "per-class accuracy follows from the confusion matrix".into(),
        ok: per_class_ok,
    });
}

/// Runs the selected parts of the evaluation on `corpus`.
pub fn run(corpus: &Corpus, cfg: &Config, scope: Scope) -> Result<EvalReport, PipelineError> {
    let start = Instant::now();
    let mut timing = Timing::default();
    let mut checks = Vec::new();
    let opts = cfg.pipeline.scene_options();

    let (mut static_plain, mut static_renamed) = (None, None);
    if scope.static_eval {
        let t = Instant::now();
        let plain = eval_static(&corpus.fixtures, &opts);
        let renamed = eval_static(&corpus.renamed, &opts);
        timing.static_s = t.elapsed().as_secs_f64();
        prf_checks("fixtures", &plain, &mut checks);
        prf_checks("renamed fixtures", &renamed, &mut checks);
        static_plain = Some(plain);
        static_renamed = Some(renamed);
    }

    let mut classification = None;
    let mut corpus_stats = Vec::new();
    if scope.classification {
        let t = Instant::now();
        let (apps, skipped) = load_apps(&corpus.apps);
        for (id, reason) in &skipped {
            log::warn!("skipping {id}: {reason}");
        }
        let data = prepare(&apps, &cfg.pipeline);
        timing.prepare_s = t.elapsed().as_secs_f64();
        corpus_stats = class_stats(&data);
        if data.len() < 3 {
            return Err(PipelineError::Config(format!(
                "need at least 3 labeled apps, found {}",
                data.len()
            )));
        }
        let split = Split::new(data.len(), cfg.pipeline.split_seed);

        let t = Instant::now();
        let (outcome, held) = evaluate(&data, &split, &cfg.pipeline)?;
        timing.stages = outcome.times.clone();
        timing.pipeline_s = timing.prepare_s + t.elapsed().as_secs_f64();

        let exp = &cfg.experiment;
        let t = Instant::now();
        let ablations = if scope.extras && exp.ablations {
            FeatureSet::ALL
                .par_iter()
                .map(|&set| {
                    if set == cfg.pipeline.feature_set {
                        return Ok(Ablation {
                            feature_set: set,
                            accuracy: held.accuracy,
                            test_accuracy: held.test_accuracy,
                        });
                    }
                    let c = crate::pipeline::PipelineConfig {
                        feature_set: set,
                        ..cfg.pipeline.clone()
                    };
                    let (_, h) = evaluate(&data, &split, &c)?;
                    Ok(Ablation {
                        feature_set: set,
                        accuracy: h.accuracy,
                        test_accuracy: h.test_accuracy,
                    })
                })
                .collect::<Result<Vec<_>, PipelineError>>()?
        } else {
            Vec::new()
        };
        timing.ablations_s = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let grid: Vec<(f64, f64)> = if scope.extras && exp.sweeps {
            exp.mask_ratios
                .iter()
                .flat_map(|&m| exp.alphas.iter().map(move |&a| (m, a)))
                .collect()
        } else {
            Vec::new()
        };
        let sweeps = grid
            .par_iter()
            .map(|&(mask_ratio, alpha)| {
                let (o, h) = evaluate(&data, &split, &cfg.pipeline.with_gae(mask_ratio, alpha))?;
                Ok(SweepPoint {
                    mask_ratio,
                    alpha,
                    accuracy: h.accuracy,
                    finite: o.app_summary.is_finite() && o.scene_summary.is_none_or(|s| s.is_finite()),
                })
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        timing.sweeps_s = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let chance = if scope.extras && !exp.shuffle_seeds.is_empty() {
            let accuracies = shuffled_label_accuracy(&data, &split, &outcome.models, &exp.shuffle_seeds)?;
            let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
            Some(Chance {
                seeds: exp.shuffle_seeds.clone(),
                accuracies,
                mean,
            })
        } else {
            None
        };
        timing.chance_s = t.elapsed().as_secs_f64();

        let c = Classification {
            feature_set: cfg.pipeline.feature_set,
            train: split.train.len(),
            validation: split.val.len(),
            test: split.test.len(),
            accuracy: held.accuracy,
            test_accuracy: held.test_accuracy,
            per_class: Label::ALL
                .iter()
                .map(|&label| ClassAccuracy {
                    label,
                    support: held.confusion.support(label),
                    accuracy: held.confusion.class_accuracy(label),
                })
                .collect(),
            confusion: held.confusion,
            scene_encoder: outcome.scene_summary,
            app_encoder: outcome.app_summary,
            ablations,
            sweeps,
            chance,
            skipped,
        };
        classification_checks(&c, &data, &split, &mut checks);
        classification = Some(c);
    }

    timing.total_s = start.elapsed().as_secs_f64();
    Ok(EvalReport {
        format: REPORT_FORMAT.to_string(),
        static_plain,
        static_renamed,
        classification,
        corpus: corpus_stats,
        timing,
        checks,
    })
}

fn prf_line(out: &mut String, name: &str, p: &Prf) {
    let _ = writeln!(
        out,
        "  {name:<22} P {:.3}  R {:.3}  F1 {:.3}  (tp {} fp {} fn {})",
        p.precision, p.recall, p.f1, p.tp, p.fp, p.fn_
    );
}

/// Plain-text rendering for terminals.
pub fn render_text(r: &EvalReport) -> String {
    let mut out = String::new();
    for (title, s) in [("fixtures", &r.static_plain), ("renamed fixtures", &r.static_renamed)] {
        let Some(s) = s else { continue };
        let _ = writeln!(out, "static analysis, {title}");
        prf_line(&mut out, "transitions (in depth)", &s.transitions);
        prf_line(&mut out, "transitions (all)", &s.transitions_all);
        prf_line(&mut out, "imprint tokens", &s.tokens);
        let _ = writeln!(
            out,
            "  runtime leaks {}  planted misses {}  slowest app {:.3}s",
            s.runtime_leaks, s.planted_misses, s.max_seconds
        );
        for a in &s.apps {
            let missed: Vec<String> = a.missed.iter().map(|(x, y)| format!("{x}->{y}")).collect();
            let _ = writeln!(
                out,
                "  {:<8} transitions F1 {:.3}  tokens F1 {:.3}  missed [{}]",
                a.id,
                a.transitions.f1,
                a.tokens.f1,
                missed.join(", ")
            );
        }
    }
    if !r.corpus.is_empty() {
        let _ = writeln!(out, "corpus (means per app)");
        let _ = writeln!(out, "  {:<16} {:>5} {:>7} {:>7} {:>8} {:>7}", "class", "apps", "nodes", "pairs", "widgets", "tokens");
        for c in &r.corpus {
            let _ = writeln!(
                out,
                "  {:<16} {:>5} {:>7.1} {:>7.1} {:>8.1} {:>7.1}",
                c.label.name(),
                c.apps,
                c.nodes,
                c.transition_pairs,
                c.widgets,
                c.tokens
            );
        }
    }
    if let Some(c) = &r.classification {
        let _ = writeln!(
            out,
            "classification ({}), train {} / validation {} / test {}",
            c.feature_set.name(),
            c.train,
            c.validation,
            c.test
        );
        let _ = writeln!(out, "  held-out accuracy {:.3}  test accuracy {:.3}", c.accuracy, c.test_accuracy);
        for p in &c.per_class {
            let acc = p.accuracy.map_or("-".to_string(), |a| format!("{a:.3}"));
            let _ = writeln!(out, "  {:<16} support {:>3}  accuracy {acc}", p.label.name(), p.support);
        }
        let _ = writeln!(out, "  confusion (rows true, columns predicted)");
        for row in &c.confusion.counts {
            let cells: Vec<String> = row.iter().map(|n| format!("{n:>4}")).collect();
            let _ = writeln!(out, "   {}", cells.join(""));
        }
        for a in &c.ablations {
            let _ = writeln!(out, "  ablation {:<22} accuracy {:.3}", a.feature_set.name(), a.accuracy);
        }
        for s in &c.sweeps {
            let _ = writeln!(
                out,
                "  sweep mask {:<4} alpha {:<6} accuracy {:.3}{}",
                s.mask_ratio,
                s.alpha,
                s.accuracy,
                if s.finite { "" } else { "  (non-finite loss)" }
            );
        }
        if let Some(ch) = &c.chance {
            let _ = writeln!(out, "  shuffled labels, {} runs: mean accuracy {:.3}", ch.accuracies.len(), ch.mean);
        }
    }
    let t = &r.timing;
    let _ = writeln!(
        out,
        "timing: static {:.2}s  pipeline {:.2}s  ablations {:.2}s  sweeps {:.2}s  chance {:.2}s  total {:.2}s",
        t.static_s, t.pipeline_s, t.ablations_s, t.sweeps_s, t.chance_s, t.total_s
    );
    for c in &r.checks {
        let _ = writeln!(out, "check {}: {}", if c.ok { "ok" } else { "FAILED" }, c.name);
    }
    out
}
