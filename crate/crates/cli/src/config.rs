//! Run configuration: one TOML file covering every pipeline stage.
//!
//! Every section defaults to the library defaults, unknown keys are
//! rejected, and command-line flags are folded in with [`Overrides::apply`]
//! before the effective config is echoed into the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use vfc_core::corpus::{GenBackend, SynthSpec};
use vfc_core::experiments::{AttractionConfig, RatioLawConfig, ShortcutConfig};
use vfc_core::losses::{NceMode, NegativeVariant};
use vfc_core::textgen::{CompletionClientConfig, ExtractMethod, GenBackendConfig};
use vfc_core::trainer::TrainConfig;

use crate::CliError;

/// Default output directory.
pub const DEFAULT_OUT_DIR: &str = "vfc-run";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub corpus: CorpusConfig,
    pub lexicon: LexiconConfig,
    pub client: ClientConfig,
    pub gen: GenBackendConfig,
    pub generate: GenerateConfig,
    pub calibrate: CalibrateConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub experiments: ExperimentsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from(DEFAULT_OUT_DIR),
            corpus: CorpusConfig::default(),
            lexicon: LexiconConfig::default(),
            client: ClientConfig::default(),
            gen: GenBackendConfig::default(),
            generate: GenerateConfig::default(),
            calibrate: CalibrateConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            experiments: ExperimentsConfig::default(),
        }
    }
}

/// Where the base manifest comes from: a file, or a seeded synthetic corpus.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub manifest: Option<PathBuf>,
    pub synthetic: Option<SynthSpec>,
}

/// Verb corpus (one verb per line) and antonym map (two tab-separated
/// columns). The built-in lexicon is used when `verb_corpus` is unset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LexiconConfig {
    pub verb_corpus: Option<PathBuf>,
    pub antonyms: Option<PathBuf>,
}

/// Model endpoints. A stub transcript, when set, replaces both live
/// endpoints. Responses are cached under `cache_dir`, or `<out>/cache`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClientConfig {
    pub completion: Option<CompletionClientConfig>,
    pub fill_mask: Option<CompletionClientConfig>,
    pub stub_transcript: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    /// Captions generated concurrently.
    pub max_in_flight: usize,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            completion: None,
            fill_mask: None,
            stub_transcript: None,
            cache_dir: None,
            max_in_flight: 4,
        }
    }
}

/// Optional generation stages beyond hard negatives.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateConfig {
    /// Also generate synonym-verb positives (completion backend only).
    pub positives: bool,
    /// Re-extract caption verb phrases before generating.
    pub extract: Option<ExtractMethod>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateConfig {
    /// Most imbalanced concepts printed before and after filtering.
    pub top_k: usize,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        Self { top_k: 10 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Task file (JSON lines).
    pub tasks: Option<PathBuf>,
    /// Checkpoint to evaluate; `<out>/checkpoints/final.ckpt` when unset.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentsConfig {
    pub ratio_law: RatioLawConfig,
    pub attraction_point: AttractionConfig,
    pub shortcut: ShortcutConfig,
}

/// Values given on the command line. Each one overrides its config key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub backend: Option<String>,
    pub loss_variant: Option<String>,
    pub nce_mode: Option<String>,
    pub n_hard: Option<usize>,
    pub epochs: Option<usize>,
    pub no_exemplars: bool,
    pub freeze_video: bool,
    pub freeze_text: bool,
}

impl Overrides {
    /// Folds the flags into `cfg`.
    ///
    /// `--seed` and `--epochs` also reach the packaged experiments.
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.gen.seed = seed;
            cfg.train.seed = seed;
            cfg.train.encoder.seed = seed;
            cfg.experiments.ratio_law.seed = seed;
            cfg.experiments.attraction_point.seed = seed;
            cfg.experiments.shortcut.seed = seed;
        }
        if let Some(name) = &self.backend {
            cfg.gen.backend = GenBackend::parse(name)
                .ok_or_else(|| CliError::Validation(format!("unknown backend {name:?}")))?;
        }
        if let Some(name) = &self.loss_variant {
            cfg.train.loss.negative_variant = parse_variant(name)?;
        }
        if let Some(name) = &self.nce_mode {
            cfg.train.loss.nce_mode =
                NceMode::parse(name).ok_or_else(|| CliError::Validation(format!("unknown nce mode {name:?}")))?;
        }
        if let Some(n) = self.n_hard {
            cfg.train.n_hard_max = n;
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
            cfg.experiments.ratio_law.epochs = e;
            cfg.experiments.attraction_point.epochs = e;
            cfg.experiments.shortcut.epochs = e;
        }
        if self.no_exemplars {
            cfg.gen.exemplars = false;
        }
        if self.freeze_video {
            cfg.train.encoder.freeze_video = true;
        }
        if self.freeze_text {
            cfg.train.encoder.freeze_text = true;
        }
        Ok(())
    }
}

pub fn parse_variant(name: &str) -> Result<NegativeVariant, CliError> {
    NegativeVariant::parse(name).ok_or_else(|| CliError::Validation(format!("unknown loss variant {name:?}")))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("reading config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    /// Config file (if any) plus flags, validated.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        overrides.apply(&mut cfg)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.out_dir.as_os_str().is_empty() {
            return Err(CliError::Validation("out_dir must not be empty".into()));
        }
        if self.corpus.manifest.is_some() && self.corpus.synthetic.is_some() {
            return Err(CliError::Validation(
                "set only one of corpus.manifest and corpus.synthetic".into(),
            ));
        }
        self.gen.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        if self.client.max_in_flight == 0 {
            return Err(CliError::Validation("client.max_in_flight must be >= 1".into()));
        }
        if self.calibrate.top_k == 0 {
            return Err(CliError::Validation("calibrate.top_k must be >= 1".into()));
        }
        Ok(())
    }

    /// Writes the effective config to `<out>/config.toml`.
    pub fn echo(&self) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.out_dir).map_err(CliError::io(format!("creating {}", self.out_dir.display())))?;
        let path = self.out_dir.join("config.toml");
        fs::write(&path, self.to_toml()).map_err(CliError::io(format!("writing {}", path.display())))?;
        Ok(path)
    }
}
