//! Subcommands wiring the pipeline end to end from one run config.
//!
//! Every command reads its inputs from the config and from earlier stages'
//! artifacts in the output directory, writes its own artifacts there, and
//! echoes the effective config as `config.toml`. Nothing is written outside
//! the output directory unless the config points a cache elsewhere.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use vfc_core::calibration::{calibrate_filter, CalibrationReport};
use vfc_core::corpus::{load_manifest, make_synthetic_corpus, save_manifest, CorpusError, DatasetManifest};
use vfc_core::eval::{self, EvalError, EvalTasks};
use vfc_core::experiments::{self, ExperimentError, TrainedRun, EXPERIMENTS};
use vfc_core::losses::NegativeVariant;
use vfc_core::textgen::{
    extract_verb_phrases, generate_all, generate_positives, CachedService, Clients, CompletionClient,
    CompletionClientConfig, FillMaskClient, GenError, HttpService, JsonService, LexiconResources,
    StubService,
};
use vfc_core::trainer::{train_loop, LoopOutputs, TrainError, TrainState};

pub use config::{Overrides, RunConfig};

/// File names inside the output directory.
pub mod layout {
    pub const CONFIG: &str = "config.toml";
    pub const GEN_MANIFEST: &str = "manifest.gen.jsonl";
    pub const GEN_SUMMARY: &str = "gen_summary.json";
    pub const CALIBRATED_MANIFEST: &str = "manifest.calibrated.jsonl";
    pub const CALIBRATION_JSON: &str = "calibration.json";
    pub const CALIBRATION_TEXT: &str = "calibration.txt";
    pub const CHECKPOINTS: &str = "checkpoints";
    pub const FINAL_CHECKPOINT: &str = "final.ckpt";
    pub const METRICS: &str = "metrics.jsonl";
    pub const EVAL_JSON: &str = "eval.json";
    pub const EVAL_TEXT: &str = "eval.txt";
    pub const CONFUSION_CSV: &str = "confusion.csv";
    pub const REPORT_JSON: &str = "report.json";
    pub const REPORT_TEXT: &str = "report.md";
    pub const EXPERIMENTS: &str = "experiments";
    pub const CACHE: &str = "cache";
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("missing {}: run `vfc {command}` first", .path.display())]
    MissingArtifact { path: PathBuf, command: &'static str },
    #[error("{0}")]
    Runtime(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 1 for invalid configs, inputs and missing stages; 2 for failures
    /// while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::MissingArtifact { .. } => 1,
            CliError::Runtime(_) | CliError::Io { .. } => 2,
        }
    }

    pub(crate) fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<GenError> for CliError {
    fn from(e: GenError) -> Self {
        match e {
            GenError::InvalidConfig(_) | GenError::MissingClient(_) | GenError::Lexicon(_) | GenError::Auth(_) => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) | TrainError::TooFewCaptions(_) | TrainError::Mismatch(_) => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::InvalidTask(_) | EvalError::Parse { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(m) => CliError::Validation(m),
            ExperimentError::Corpus(e) => e.into(),
            ExperimentError::Gen(e) => e.into(),
            ExperimentError::Train(e) => e.into(),
            ExperimentError::Eval(e) => e.into(),
            ExperimentError::Calibration(e) => CliError::Runtime(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out_dir.join(name)
}

fn require(path: PathBuf, command: &'static str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::MissingArtifact { path, command })
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    fs::write(path, text).map_err(CliError::io(format!("writing {}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(CliError::io(format!("reading {}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(CliError::io(format!("writing {}", path.display())))
}

/// The manifest named by `corpus.manifest`, or the configured synthetic one.
pub fn base_manifest(cfg: &RunConfig) -> Result<DatasetManifest> {
    match (&cfg.corpus.manifest, &cfg.corpus.synthetic) {
        (Some(path), _) => {
            if !path.exists() {
                return Err(CliError::Validation(format!("corpus.manifest {} does not exist", path.display())));
            }
            Ok(load_manifest(path)?)
        }
        (None, Some(spec)) => Ok(make_synthetic_corpus(spec)?),
        (None, None) => Err(CliError::Validation("set corpus.manifest or corpus.synthetic".into())),
    }
}

fn lexicon(cfg: &RunConfig) -> Result<LexiconResources> {
    match &cfg.lexicon.verb_corpus {
        Some(path) => Ok(LexiconResources::load(path, cfg.lexicon.antonyms.as_deref())?),
        None if cfg.lexicon.antonyms.is_some() => {
            Err(CliError::Validation("lexicon.antonyms needs lexicon.verb_corpus".into()))
        }
        None => Ok(LexiconResources::builtin()),
    }
}

/// Cached completion and fill-mask services built from the config.
pub struct ServiceSet {
    pub completion: Option<Arc<CachedService>>,
    pub fill_mask: Option<Arc<CachedService>>,
}

impl ServiceSet {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        let stub: Option<Arc<dyn JsonService>> = match &cfg.client.stub_transcript {
            Some(p) => Some(Arc::new(StubService::load(p)?)),
            None => None,
        };
        let root = cfg.client.cache_dir.clone().unwrap_or_else(|| out_path(cfg, layout::CACHE));
        let make = |live: &Option<CompletionClientConfig>, sub: &str| -> Result<Option<Arc<CachedService>>> {
            let inner: Arc<dyn JsonService> = match (&stub, live) {
                (Some(s), _) => s.clone(),
                (None, Some(c)) => Arc::new(HttpService::new(c)),
                (None, None) => return Ok(None),
            };
            let dir = live.as_ref().and_then(|c| c.cache_dir.clone()).unwrap_or_else(|| root.join(sub));
            Ok(Some(Arc::new(CachedService::new(inner, dir)?)))
        };
        Ok(Self {
            completion: make(&cfg.client.completion, "completion")?,
            fill_mask: make(&cfg.client.fill_mask, "fill_mask")?,
        })
    }

    pub fn network_calls(&self) -> usize {
        [&self.completion, &self.fill_mask]
            .into_iter()
            .flatten()
            .map(|s| s.network_calls())
            .sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenOutcome {
    pub captions: usize,
    pub skipped: usize,
    pub hard_negatives: usize,
    pub positives: usize,
    /// Requests that missed the cache.
    pub network_calls: usize,
}

/// Generates hard negatives (and optionally positives and verb phrases) for
/// the train captions of the base manifest.
pub fn cmd_gen(cfg: &RunConfig) -> Result<GenOutcome> {
    cfg.echo()?;
    let mut manifest = base_manifest(cfg)?;
    let resources = lexicon(cfg)?;
    let services = ServiceSet::build(cfg)?;
    let completion = services.completion.clone().map(|s| CompletionClient::new(s));
    let fill_mask = services.fill_mask.clone().map(|s| FillMaskClient::new(s));
    let clients = Clients {
        completion: completion.as_ref(),
        fill_mask: fill_mask.as_ref(),
    };

    let train = manifest.train_caption_indices();
    if let Some(method) = cfg.generate.extract {
        for &i in &train {
            let phrases = extract_verb_phrases(&manifest.captions[i], method, &cfg.gen, &resources, clients.completion)?;
            manifest.captions[i].verb_phrases = phrases;
        }
    }
    let captions: Vec<_> = train.iter().map(|&i| manifest.captions[i].clone()).collect();
    let (negatives, summary) = generate_all(&captions, &cfg.gen, &resources, clients, cfg.client.max_in_flight)?;
    let mut outcome = GenOutcome {
        captions: summary.captions,
        skipped: summary.skipped,
        hard_negatives: summary.generated,
        ..Default::default()
    };
    manifest.generations.extend(negatives);
    if cfg.generate.positives {
        let client = completion
            .as_ref()
            .ok_or_else(|| CliError::Validation("generate.positives needs a completion client or stub".into()))?;
        for c in &captions {
            let pos = generate_positives(c, &cfg.gen, &resources, client)?;
            outcome.positives += pos.len();
            manifest.generations.extend(pos);
        }
    }
    outcome.network_calls = services.network_calls();

    save_manifest(&manifest, out_path(cfg, layout::GEN_MANIFEST))?;
    write_json(&out_path(cfg, layout::GEN_SUMMARY), &outcome)?;
    // A calibrated manifest from an earlier generation pass is now stale.
    let stale = out_path(cfg, layout::CALIBRATED_MANIFEST);
    if stale.exists() {
        fs::remove_file(&stale).map_err(CliError::io(format!("removing {}", stale.display())))?;
    }
    Ok(outcome)
}

/// Filters hard negatives so that no concept has more than `S_ω` of them.
///
/// Reads the calibrated manifest when one exists, so a repeated run starts
/// from its own output and discards nothing further.
pub fn cmd_calibrate(cfg: &RunConfig) -> Result<CalibrationReport> {
    cfg.echo()?;
    let calibrated = out_path(cfg, layout::CALIBRATED_MANIFEST);
    let input = if calibrated.exists() {
        calibrated.clone()
    } else {
        require(out_path(cfg, layout::GEN_MANIFEST), "gen")?
    };
    let manifest = load_manifest(&input)?;
    let (out, report) = calibrate_filter(&manifest, cfg.train.batch_size);
    save_manifest(&out, &calibrated)?;
    write_json(&out_path(cfg, layout::CALIBRATION_JSON), &report)?;
    write_text(&out_path(cfg, layout::CALIBRATION_TEXT), &report.render_text(cfg.calibrate.top_k))?;
    Ok(report)
}

/// The manifest a training run reads for its loss variant.
pub fn training_manifest(cfg: &RunConfig) -> Result<DatasetManifest> {
    match cfg.train.loss.negative_variant {
        NegativeVariant::CalibratedHn => Ok(load_manifest(require(
            out_path(cfg, layout::CALIBRATED_MANIFEST),
            "calibrate",
        )?)?),
        NegativeVariant::HnUncalibrated => Ok(load_manifest(require(out_path(cfg, layout::GEN_MANIFEST), "gen")?)?),
        NegativeVariant::None => {
            let generated = out_path(cfg, layout::GEN_MANIFEST);
            if generated.exists() {
                Ok(load_manifest(&generated)?)
            } else {
                base_manifest(cfg)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub epochs: usize,
    pub steps: u64,
    pub final_loss: Option<f64>,
    pub checkpoint: PathBuf,
}

/// Trains from scratch and writes checkpoints plus a metrics log.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.echo()?;
    let manifest = training_manifest(cfg)?;
    let ckpt_dir = out_path(cfg, layout::CHECKPOINTS);
    let metrics = out_path(cfg, layout::METRICS);
    if metrics.exists() {
        fs::remove_file(&metrics).map_err(CliError::io(format!("removing {}", metrics.display())))?;
    }
    let (state, log) = train_loop(
        &manifest,
        &cfg.train,
        None,
        &LoopOutputs {
            checkpoint_dir: Some(ckpt_dir.clone()),
            metrics_log: Some(metrics),
        },
    )?;
    Ok(TrainOutcome {
        epochs: state.epoch,
        steps: state.step,
        final_loss: log.last().map(|m| m.total),
        checkpoint: ckpt_dir.join(layout::FINAL_CHECKPOINT),
    })
}

/// Evaluates a checkpoint on the configured task file.
pub fn cmd_eval(cfg: &RunConfig) -> Result<eval::EvalReport> {
    cfg.echo()?;
    let tasks_path = cfg
        .eval
        .tasks
        .as_ref()
        .ok_or_else(|| CliError::Validation("eval.tasks is not set".into()))?;
    if !tasks_path.exists() {
        return Err(CliError::Validation(format!("eval.tasks {} does not exist", tasks_path.display())));
    }
    let ckpt = match &cfg.eval.checkpoint {
        Some(p) => require(p.clone(), "train")?,
        None => require(out_path(cfg, layout::CHECKPOINTS).join(layout::FINAL_CHECKPOINT), "train")?,
    };
    let (state, _) = TrainState::load(&ckpt)?;
    let tasks = EvalTasks::load(tasks_path)?;
    let report = eval::evaluate(&state.encoders, &tasks)?;
    let labels = tasks.classification.as_ref().map(|c| c.labels.as_slice());
    write_json(&out_path(cfg, layout::EVAL_JSON), &report)?;
    write_text(&out_path(cfg, layout::EVAL_TEXT), &report.render_text(labels))?;
    if let (Some(z), Some(labels)) = (&report.zero_shot, labels) {
        write_text(
            &out_path(cfg, layout::CONFUSION_CSV),
            &eval::confusion_csv(labels, &z.all.confusion)?,
        )?;
    }
    Ok(report)
}

/// Merges every stage artifact present in the output directory into
/// `report.json` and `report.md`.
pub fn cmd_report(cfg: &RunConfig) -> Result<serde_json::Value> {
    let mut merged = serde_json::Map::new();
    let mut text = String::from("# Run report\n");
    let gen = out_path(cfg, layout::GEN_SUMMARY);
    if gen.exists() {
        let g: GenOutcome = read_json(&gen)?;
        let _ = write!(
            text,
            "\n## Generation\n\ncaptions {}, skipped {}, hard negatives {}, positives {}, network calls {}\n",
            g.captions, g.skipped, g.hard_negatives, g.positives, g.network_calls
        );
        merged.insert("generation".into(), serde_json::to_value(g).expect("serializable"));
    }
    let cal = out_path(cfg, layout::CALIBRATION_JSON);
    if cal.exists() {
        let c: CalibrationReport = read_json(&cal)?;
        let _ = write!(text, "\n## Calibration\n\n```\n{}```\n", c.render_text(cfg.calibrate.top_k));
        merged.insert("calibration".into(), serde_json::to_value(c).expect("serializable"));
    }
    let metrics = out_path(cfg, layout::METRICS);
    if metrics.exists() {
        let body = fs::read_to_string(&metrics).map_err(CliError::io(format!("reading {}", metrics.display())))?;
        let epochs: Vec<serde_json::Value> = body
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| CliError::Runtime(format!("{}: {e}", metrics.display())))?;
        // Wall time is not reproducible; keep it out of the merged report.
        let epochs: Vec<serde_json::Value> = epochs
            .into_iter()
            .map(|mut v| {
                if let Some(o) = v.as_object_mut() {
                    o.remove("wall_ms");
                }
                v
            })
            .collect();
        if let Some(last) = epochs.last() {
            let _ = write!(text, "\n## Training\n\n{} epochs; last epoch {last}\n", epochs.len());
        }
        merged.insert("training".into(), serde_json::Value::Array(epochs));
    }
    let ev = out_path(cfg, layout::EVAL_TEXT);
    if ev.exists() {
        let body = fs::read_to_string(&ev).map_err(CliError::io(format!("reading {}", ev.display())))?;
        let _ = write!(text, "\n## Evaluation\n\n```\n{body}```\n");
        let e: serde_json::Value = read_json(&out_path(cfg, layout::EVAL_JSON))?;
        merged.insert("evaluation".into(), e);
    }
    let mut exps = serde_json::Map::new();
    for name in EXPERIMENTS {
        let dir = out_path(cfg, layout::EXPERIMENTS).join(name);
        let json = dir.join(layout::REPORT_JSON);
        if json.exists() {
            exps.insert(name.to_string(), read_json(&json)?);
            if let Ok(summary) = fs::read_to_string(dir.join("summary.txt")) {
                let _ = write!(text, "\n## Experiment {name}\n\n```\n{summary}```\n");
            }
        }
    }
    if !exps.is_empty() {
        merged.insert("experiments".into(), serde_json::Value::Object(exps));
    }
    if merged.is_empty() {
        return Err(CliError::MissingArtifact {
            path: cfg.out_dir.clone(),
            command: "gen",
        });
    }
    cfg.echo()?;
    let value = serde_json::Value::Object(merged);
    write_json(&out_path(cfg, layout::REPORT_JSON), &value)?;
    write_text(&out_path(cfg, layout::REPORT_TEXT), &text)?;
    Ok(value)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub name: String,
    pub dir: PathBuf,
    /// Human-readable summary, also written as `summary.txt`.
    pub summary: String,
    /// Whether the experiment's qualitative claim held.
    pub reproduced: bool,
    pub checkpoints: Vec<PathBuf>,
}

fn save_runs(dir: &Path, runs: &[TrainedRun]) -> Result<Vec<PathBuf>> {
    runs.iter()
        .map(|r| {
            let p = dir.join(format!("{}.ckpt", r.name));
            r.state.save(&p, &r.config)?;
            Ok(p)
        })
        .collect()
}

/// Runs a packaged seeded experiment and writes its report, summary and
/// one checkpoint per trained model under `<out>/experiments/<name>/`.
pub fn cmd_experiment(name: &str, cfg: &RunConfig) -> Result<ExperimentOutcome> {
    if !EXPERIMENTS.contains(&name) {
        return Err(CliError::Validation(format!(
            "unknown experiment {name:?} (expected one of {})",
            EXPERIMENTS.join(", ")
        )));
    }
    cfg.echo()?;
    let dir = out_path(cfg, layout::EXPERIMENTS).join(name);
    fs::create_dir_all(&dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
    let mut s = String::new();
    let (reproduced, runs) = match name {
        "ratio_law" => {
            let (r, runs) = experiments::ratio_law(&cfg.experiments.ratio_law)?;
            let _ = writeln!(
                s,
                "ratio law: {} concepts, min S {}, {} epochs",
                r.n_concepts, r.min_s_count, r.epochs
            );
            for v in &r.variants {
                let _ = writeln!(
                    s,
                    "  {:<16} B={:<3} max relative deviation {:.3e}",
                    experiments::variant_name(v.variant),
                    v.batch_size,
                    v.max_relative_error
                );
            }
            let _ = writeln!(s, "max relative deviation {:.3e}", r.max_relative_error());
            write_json(&dir.join(layout::REPORT_JSON), &r)?;
            (r.max_relative_error() <= 0.05, runs)
        }
        "attraction_point" => {
            let (r, runs) = experiments::attraction_point(&cfg.experiments.attraction_point)?;
            for arm in [&r.uncalibrated, &r.calibrated] {
                let _ = writeln!(
                    s,
                    "{:<16} max share/prevalence {:.3}  macro accuracy {:.3}",
                    experiments::variant_name(arm.variant),
                    arm.max_share_ratio,
                    arm.macro_accuracy
                );
                for c in &arm.concepts {
                    let _ = writeln!(
                        s,
                        "  {:<20} S={:<4} G={:<4} share {:.3}  prevalence {:.3}  accuracy {:.3}",
                        c.concept, c.s_count, c.g_count, c.share, c.prevalence, c.accuracy
                    );
                }
            }
            let _ = writeln!(s, "reproduced {}", r.reproduces());
            write_json(&dir.join(layout::REPORT_JSON), &r)?;
            (r.reproduces(), runs)
        }
        _ => {
            let (r, runs) = experiments::shortcut(&cfg.experiments.shortcut)?;
            let _ = writeln!(s, "chance {:.3}", r.chance);
            for arm in [&r.baseline, &r.vfc] {
                let _ = writeln!(
                    s,
                    "{:<10} verb-hard MC {:.3}  noun MC {:.3}",
                    arm.name, arm.verb_mc.accuracy, arm.noun_mc.accuracy
                );
            }
            let _ = writeln!(
                s,
                "verb gain {:+.3}  noun drop {:+.3}  reproduced {}",
                r.verb_gain(),
                r.noun_drop(),
                r.reproduces()
            );
            write_json(&dir.join(layout::REPORT_JSON), &r)?;
            (r.reproduces(), runs)
        }
    };
    write_text(&dir.join("summary.txt"), &s)?;
    let checkpoints = save_runs(&dir, &runs)?;
    Ok(ExperimentOutcome {
        name: name.to_string(),
        dir,
        summary: s,
        reproduced,
        checkpoints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(CliError::Validation("x".into()).exit_code(), 1);
        let missing = CliError::MissingArtifact {
            path: "out/manifest.gen.jsonl".into(),
            command: "gen",
        };
        assert_eq!(missing.exit_code(), 1);
        assert!(missing.to_string().contains("run `vfc gen` first"));
        assert_eq!(CliError::Runtime("x".into()).exit_code(), 2);
    }
}
