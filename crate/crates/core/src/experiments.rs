//! Packaged seeded experiments on synthetic corpora.
//!
//! - `ratio_law`: per-concept negative/positive usage counted during real
//!   training, against the closed-form ratio of each negative variant.
//! - `attraction_point`: skewed hard-negative counts make uncalibrated
//!   training over-predict the concepts that are rarely used as negatives.
//! - `shortcut`: captions of one context differ only in the verb, so plain
//!   contrastive training can ignore verbs; verb-focused training cannot.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{calibrate_filter, compute_ratio, count_concepts, CalibrationError, CalibrationReport};
use crate::corpus::{make_synthetic_corpus, split_synthetic_caption, CorpusError, DatasetManifest, GenBackend, SynthSpec};
use crate::encoders::{tokenize, EncoderConfig, Encoders};
use crate::eval::{self, ClassificationTask, EvalError, McReport, MultipleChoiceItem, OptionKind, ZeroShotReport, MC_OPTIONS};
use crate::losses::{LossConfig, NegativeVariant};
use crate::seeding::{rng_for, text_seed};
use crate::textgen::{generate_hard_negatives, Clients, GenBackendConfig, GenError, LexiconResources};
use crate::trainer::{train_loop, LoopOutputs, TrainConfig, TrainError, TrainState, Trainer};
use crate::vecops::axpy;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

pub const EXPERIMENTS: &[&str] = &["ratio_law", "attraction_point", "shortcut"];

/// A trained model produced by an experiment, for checkpointing.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub name: String,
    pub config: TrainConfig,
    pub state: TrainState,
}

/// Adds random-verb hard negatives for every train caption. Replacement
/// verbs are drawn from `negative_verbs` only.
pub fn add_random_verb_negatives(
    manifest: &DatasetManifest,
    negative_verbs: &[String],
    candidates: usize,
    seed: u64,
) -> Result<DatasetManifest> {
    let res = LexiconResources::new(negative_verbs.iter().cloned(), BTreeMap::new())?;
    let cfg = GenBackendConfig {
        backend: GenBackend::RandomVerb,
        candidates_per_caption: candidates,
        seed,
        ..Default::default()
    };
    let mut out = manifest.clone();
    for &i in &manifest.train_caption_indices() {
        match generate_hard_negatives(&manifest.captions[i], &cfg, &res, Clients::default()) {
            Ok(gens) => out.generations.extend(gens),
            Err(e) if e.is_skip() => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

/// Distinct verbs of a synthetic corpus, most frequent first.
fn corpus_verbs(manifest: &DatasetManifest) -> Vec<String> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for c in &manifest.captions {
        for p in &c.verb_phrases {
            *counts.entry(p.as_str().to_string()).or_insert(0) += 1;
        }
    }
    let mut v: Vec<(String, usize)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.into_iter().map(|(k, _)| k).collect()
}

fn train(name: &str, manifest: &DatasetManifest, cfg: TrainConfig) -> Result<TrainedRun> {
    train_with_features(name, manifest, cfg, None)
}

/// Stand-in for pretrained encoders on synthetic captions.
///
/// Every video row becomes `common·u + context + verb_scale·verb + noise·ε`
/// from seeded Gaussian vectors, where `u` is shared by every video and the
/// context vector is the scaled sum of its token vectors. With
/// `text_context` the context token rows start at those same token vectors,
/// so the text tower already matches videos by context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainedFeatures {
    pub common: f64,
    pub verb_scale: f64,
    pub noise: f64,
    /// Keep the video tower fixed during training.
    pub frozen: bool,
    pub text_context: bool,
    pub seed: u64,
}

impl Default for PretrainedFeatures {
    fn default() -> Self {
        Self {
            common: 1.0,
            verb_scale: 0.3,
            noise: 0.3,
            frozen: true,
            text_context: false,
            seed: 1,
        }
    }
}

fn gaussian(parts: &[u64], dim: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0 / (dim as f64).sqrt()).expect("unit normal");
    let mut rng = rng_for(parts);
    (0..dim).map(|_| normal.sample(&mut rng)).collect()
}

/// Overwrites the video table of `enc`, and the context token rows when
/// asked, with [`PretrainedFeatures`] vectors.
pub fn seed_pretrained_features(enc: &mut Encoders, manifest: &DatasetManifest, f: &PretrainedFeatures) -> Result<()> {
    let d = enc.dim();
    let u = gaussian(&[f.seed, 0], d);
    let token_vec = |t: &str| gaussian(&[f.seed, 1, text_seed(t)], d);
    let mut context_tokens = BTreeSet::new();
    for c in &manifest.captions {
        let (ctx, verb) = split_synthetic_caption(&c.text)
            .ok_or_else(|| ExperimentError::Config(format!("not a synthetic caption: {:?}", c.text)))?;
        let toks = tokenize(ctx);
        let mut cv = vec![0.0; d];
        for t in &toks {
            axpy(1.0 / (toks.len() as f64).sqrt(), &token_vec(t), &mut cv);
        }
        context_tokens.extend(toks);
        let row = enc.video_row(&c.video_id).map_err(TrainError::from)?;
        let vv = gaussian(&[f.seed, 2, text_seed(verb)], d);
        let nv = gaussian(&[f.seed, 3, text_seed(&c.video_id)], d);
        for k in 0..d {
            enc.video_table[row * d + k] = f.common * u[k] + cv[k] + f.verb_scale * vv[k] + f.noise * nv[k];
        }
    }
    if f.text_context {
        for t in &context_tokens {
            let rows = enc.token_rows(t).map_err(TrainError::from)?;
            enc.token_table[rows[0] * d..(rows[0] + 1) * d].copy_from_slice(&token_vec(t));
        }
    }
    Ok(())
}

fn train_with_features(
    name: &str,
    manifest: &DatasetManifest,
    mut cfg: TrainConfig,
    features: Option<&PretrainedFeatures>,
) -> Result<TrainedRun> {
    let resume = match features {
        Some(f) => {
            cfg.encoder.freeze_video = f.frozen;
            let trainer = Trainer::new(manifest, cfg.clone())?;
            let mut state = trainer.init_state()?;
            seed_pretrained_features(&mut state.encoders, manifest, f)?;
            Some((state, cfg.clone()))
        }
        None => None,
    };
    let (state, _) = train_loop(manifest, &cfg, resume, &LoopOutputs::default())?;
    Ok(TrainedRun {
        name: name.to_string(),
        config: cfg,
        state,
    })
}

// ---------------------------------------------------------------- ratio law

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatioLawConfig {
    pub corpus: SynthSpec,
    pub batch_size: usize,
    pub epochs: usize,
    /// Random-verb negatives requested per caption before calibration.
    pub candidates_per_caption: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for RatioLawConfig {
    fn default() -> Self {
        Self {
            corpus: SynthSpec {
                n_contexts: 24,
                verbs_per_context: 50,
                captions_per_cell: 1,
                frequency_skew: 0.0,
                seed: 11,
            },
            batch_size: 16,
            epochs: 200,
            candidates_per_caption: 3,
            dim: 8,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub concept: String,
    pub s_count: usize,
    pub g_count: usize,
    pub formula: f64,
    pub empirical: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRatios {
    pub variant: NegativeVariant,
    pub batch_size: usize,
    pub rows: Vec<RatioRow>,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioLawReport {
    pub n_concepts: usize,
    pub min_s_count: usize,
    pub epochs: usize,
    pub variants: Vec<VariantRatios>,
}

impl RatioLawReport {
    pub fn max_relative_error(&self) -> f64 {
        self.variants.iter().map(|v| v.max_relative_error).fold(0.0, f64::max)
    }
}

fn ratio_rows(manifest: &DatasetManifest, trainer: &Trainer, state: &TrainState, min_s: usize) -> Result<Vec<RatioRow>> {
    let variant = trainer.config().loss.negative_variant;
    let b = trainer.batch_size();
    let mut rows = Vec::new();
    for (concept, stats) in count_concepts(manifest) {
        if stats.s_count < min_s {
            continue;
        }
        let formula = compute_ratio(&stats, variant, b)?;
        let empirical = state.usage.ratio(concept.as_str()).unwrap_or(0.0);
        rows.push(RatioRow {
            concept: concept.to_string(),
            s_count: stats.s_count,
            g_count: stats.g_count,
            formula,
            empirical,
            relative_error: (empirical - formula).abs() / formula,
        });
    }
    Ok(rows)
}

/// Trains once per variant and compares counted usage ratios with the
/// closed forms. The calibrated variant trains on the filtered manifest.
pub fn ratio_law(cfg: &RatioLawConfig) -> Result<(RatioLawReport, Vec<TrainedRun>)> {
    let base = make_synthetic_corpus(&cfg.corpus)?;
    let verbs = corpus_verbs(&base);
    let with_neg = add_random_verb_negatives(&base, &verbs, cfg.candidates_per_caption, cfg.seed)?;
    let (calibrated, _) = calibrate_filter(&with_neg, cfg.batch_size);
    let min_s = count_concepts(&base).values().map(|s| s.s_count).min().unwrap_or(0);

    let mut variants = Vec::new();
    let mut runs = Vec::new();
    for (variant, manifest) in [
        (NegativeVariant::None, &with_neg),
        (NegativeVariant::HnUncalibrated, &with_neg),
        (NegativeVariant::CalibratedHn, &calibrated),
    ] {
        let tc = TrainConfig {
            batch_size: cfg.batch_size,
            epochs: cfg.epochs,
            n_hard_max: cfg.candidates_per_caption,
            seed: cfg.seed,
            loss: LossConfig {
                negative_variant: variant,
                sigma: 0.05,
                ..LossConfig::default()
            },
            encoder: EncoderConfig {
                dim: cfg.dim,
                seed: cfg.seed,
                ..Default::default()
            },
            ..TrainConfig::default()
        };
        let trainer = Trainer::new(manifest, tc.clone())?;
        let run = train(&format!("ratio_law_{}", variant_name(variant)), manifest, tc)?;
        let rows = ratio_rows(manifest, &trainer, &run.state, min_s.max(1))?;
        variants.push(VariantRatios {
            variant,
            batch_size: trainer.batch_size(),
            max_relative_error: rows.iter().map(|r| r.relative_error).fold(0.0, f64::max),
            rows,
        });
        runs.push(run);
    }
    Ok((
        RatioLawReport {
            n_concepts: verbs.len(),
            min_s_count: min_s,
            epochs: cfg.epochs,
            variants,
        },
        runs,
    ))
}

pub fn variant_name(v: NegativeVariant) -> &'static str {
    match v {
        NegativeVariant::None => "baseline",
        NegativeVariant::HnUncalibrated => "hn",
        NegativeVariant::CalibratedHn => "chn",
    }
}

// ---------------------------------------------------------- attraction point

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttractionConfig {
    pub corpus: SynthSpec,
    /// Number of verbs (alphabetically last) made rare among hard negatives.
    pub rare_verbs: usize,
    /// Fraction of hard negatives mentioning a rare verb that are kept.
    pub rare_keep: f64,
    pub candidates_per_caption: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub sigma: f64,
    /// Weight of the verb-phrase term.
    pub lambda3: f64,
    pub dim: usize,
    pub features: Option<PretrainedFeatures>,
    pub seed: u64,
}

impl Default for AttractionConfig {
    fn default() -> Self {
        Self {
            corpus: SynthSpec {
                n_contexts: 12,
                verbs_per_context: 6,
                captions_per_cell: 2,
                frequency_skew: 0.0,
                seed: 5,
            },
            rare_verbs: 1,
            rare_keep: 0.1,
            candidates_per_caption: 5,
            batch_size: 32,
            epochs: 60,
            learning_rate: 0.05,
            sigma: 0.5,
            lambda3: 1.0,
            dim: 64,
            features: Some(PretrainedFeatures {
                common: 1.5,
                verb_scale: 0.3,
                noise: 0.15,
                frozen: true,
                text_context: false,
                seed: 3,
            }),
            seed: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptShare {
    pub concept: String,
    pub s_count: usize,
    pub g_count: usize,
    pub prevalence: f64,
    pub share: f64,
    pub share_ratio: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractionArm {
    pub variant: NegativeVariant,
    pub concepts: Vec<ConceptShare>,
    pub max_share_ratio: f64,
    pub macro_accuracy: f64,
    pub zero_shot: ZeroShotReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractionReport {
    pub labels: Vec<String>,
    pub uncalibrated: AttractionArm,
    pub calibrated: AttractionArm,
    pub calibration: CalibrationReport,
}

impl AttractionReport {
    /// Uncalibrated training over-predicts some concept at least twice its
    /// prevalence; calibrated training keeps all within 1.3× and has higher
    /// macro accuracy.
    pub fn reproduces(&self) -> bool {
        self.uncalibrated.max_share_ratio >= 2.0
            && self.calibrated.max_share_ratio <= 1.3
            && self.calibrated.macro_accuracy > self.uncalibrated.macro_accuracy
    }
}

/// Zero-shot task whose labels are the verb phrases and whose items are
/// the train videos.
pub fn verb_classification_task(manifest: &DatasetManifest) -> ClassificationTask {
    let labels: Vec<String> = {
        let set: BTreeSet<&str> = manifest.captions.iter().flat_map(|c| c.verb_phrases.iter().map(|p| p.as_str())).collect();
        set.into_iter().map(String::from).collect()
    };
    let items = manifest
        .train_caption_indices()
        .into_iter()
        .filter_map(|i| {
            let c = &manifest.captions[i];
            let p = c.verb_phrases.first()?;
            Some((c.video_id.clone(), labels.iter().position(|l| l == p.as_str())?))
        })
        .collect();
    ClassificationTask {
        labels,
        items,
        verb_split: None,
    }
}

fn attraction_arm(
    run: &TrainedRun,
    task: &ClassificationTask,
    manifest: &DatasetManifest,
) -> Result<AttractionArm> {
    let z = eval::eval_zero_shot(&run.state.encoders, task)?.all;
    let stats = count_concepts(manifest);
    let concepts: Vec<ConceptShare> = task
        .labels
        .iter()
        .enumerate()
        .map(|(c, label)| {
            let st = stats.iter().find(|(k, _)| k.as_str() == label).map(|(_, s)| s);
            let n: u64 = z.confusion[c].iter().sum();
            ConceptShare {
                concept: label.clone(),
                s_count: st.map_or(0, |s| s.s_count),
                g_count: st.map_or(0, |s| s.g_count),
                prevalence: z.prevalence[c],
                share: z.shares[c],
                share_ratio: if z.prevalence[c] > 0.0 { z.shares[c] / z.prevalence[c] } else { 0.0 },
                accuracy: if n > 0 { z.confusion[c][c] as f64 / n as f64 } else { 0.0 },
            }
        })
        .collect();
    Ok(AttractionArm {
        variant: run.config.loss.negative_variant,
        max_share_ratio: concepts.iter().map(|c| c.share_ratio).fold(0.0, f64::max),
        macro_accuracy: concepts.iter().map(|c| c.accuracy).sum::<f64>() / concepts.len().max(1) as f64,
        concepts,
        zero_shot: z,
    })
}

pub fn attraction_point(cfg: &AttractionConfig) -> Result<(AttractionReport, Vec<TrainedRun>)> {
    let base = make_synthetic_corpus(&cfg.corpus)?;
    let verbs = corpus_verbs(&base);
    if cfg.rare_verbs >= verbs.len() {
        return Err(ExperimentError::Config("rare_verbs must leave at least one common verb".into()));
    }
    if !(0.0..=1.0).contains(&cfg.rare_keep) {
        return Err(ExperimentError::Config("rare_keep must lie in [0, 1]".into()));
    }
    let mut with_neg = add_random_verb_negatives(&base, &verbs, cfg.candidates_per_caption, cfg.seed)?;
    let mut sorted = verbs.clone();
    sorted.sort();
    let rare: BTreeSet<&str> = sorted[sorted.len() - cfg.rare_verbs..].iter().map(String::as_str).collect();
    let mut rng = rng_for(&[cfg.seed, 0x7a7e]);
    with_neg
        .generations
        .retain(|g| !g.verb_phrases.iter().any(|p| rare.contains(p.as_str())) || rng.gen_bool(cfg.rare_keep));
    let (calibrated, calibration) = calibrate_filter(&with_neg, cfg.batch_size);
    let task = verb_classification_task(&base);

    let tc = |variant: NegativeVariant| TrainConfig {
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
        n_hard_max: cfg.candidates_per_caption,
        seed: cfg.seed,
        loss: LossConfig {
            negative_variant: variant,
            sigma: cfg.sigma,
            lambda3: cfg.lambda3,
            ..LossConfig::default()
        },
        encoder: EncoderConfig {
            dim: cfg.dim,
            seed: cfg.seed,
            ..Default::default()
        },
        ..TrainConfig::default()
    };
    let f = cfg.features.as_ref();
    let hn = train_with_features("attraction_point_hn", &with_neg, tc(NegativeVariant::HnUncalibrated), f)?;
    let chn = train_with_features("attraction_point_chn", &calibrated, tc(NegativeVariant::CalibratedHn), f)?;
    let report = AttractionReport {
        labels: task.labels.clone(),
        uncalibrated: attraction_arm(&hn, &task, &with_neg)?,
        calibrated: attraction_arm(&chn, &task, &calibrated)?,
        calibration,
    };
    Ok((report, vec![hn, chn]))
}

// ------------------------------------------------------------------ shortcut

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShortcutConfig {
    pub corpus: SynthSpec,
    pub candidates_per_caption: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub sigma: f64,
    pub dim: usize,
    pub features: Option<PretrainedFeatures>,
    pub seed: u64,
}

impl Default for ShortcutConfig {
    fn default() -> Self {
        Self {
            corpus: SynthSpec {
                n_contexts: 40,
                verbs_per_context: 6,
                captions_per_cell: 1,
                frequency_skew: 0.0,
                seed: 8,
            },
            candidates_per_caption: 3,
            batch_size: 16,
            epochs: 10,
            learning_rate: 0.005,
            sigma: 0.05,
            dim: 64,
            features: Some(PretrainedFeatures {
                common: 1.0,
                verb_scale: 0.3,
                noise: 0.15,
                frozen: true,
                text_context: true,
                seed: 4,
            }),
            seed: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortcutArm {
    pub name: String,
    pub verb_mc: McReport,
    pub noun_mc: McReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortcutReport {
    pub chance: f64,
    pub baseline: ShortcutArm,
    pub vfc: ShortcutArm,
}

impl ShortcutReport {
    pub fn verb_gain(&self) -> f64 {
        self.vfc.verb_mc.accuracy - self.baseline.verb_mc.accuracy
    }

    pub fn noun_drop(&self) -> f64 {
        self.baseline.noun_mc.accuracy - self.vfc.noun_mc.accuracy
    }

    /// Baseline within 0.10 of chance on verb MC, VFC at least 0.20 above
    /// it, and noun MC no more than 0.02 lower.
    pub fn reproduces(&self) -> bool {
        (self.baseline.verb_mc.accuracy - self.chance).abs() <= 0.10 && self.verb_gain() >= 0.20 && self.noun_drop() <= 0.02
    }
}

/// Verb-hard and context-only multiple-choice items over the train videos.
///
/// Verb-hard distractors share the context and differ in the verb; context
/// distractors share the verb and differ in the context.
pub fn shortcut_mc_items(manifest: &DatasetManifest, seed: u64) -> Result<(Vec<MultipleChoiceItem>, Vec<MultipleChoiceItem>)> {
    let mut by_ctx: BTreeMap<&str, BTreeMap<&str, &str>> = BTreeMap::new();
    let mut by_verb: BTreeMap<&str, BTreeMap<&str, &str>> = BTreeMap::new();
    for c in &manifest.captions {
        let (ctx, verb) = split_synthetic_caption(&c.text)
            .ok_or_else(|| ExperimentError::Config(format!("not a synthetic caption: {:?}", c.text)))?;
        by_ctx.entry(ctx).or_default().insert(verb, &c.text);
        by_verb.entry(verb).or_default().insert(ctx, &c.text);
    }
    let build = |video: &str, text: &str, pool: Vec<&str>, kind: OptionKind, salt: u64, idx: usize| -> Option<MultipleChoiceItem> {
        let mut rng = rng_for(&[seed, salt, idx as u64]);
        let mut distractors: Vec<&str> = pool.choose_multiple(&mut rng, MC_OPTIONS - 1).copied().collect();
        if distractors.len() < MC_OPTIONS - 1 {
            return None;
        }
        distractors.push(text);
        distractors.shuffle(&mut rng);
        let answer_index = distractors.iter().position(|t| *t == text)?;
        Some(MultipleChoiceItem {
            video_id: video.to_string(),
            option_kinds: (0..MC_OPTIONS).map(|i| if i == answer_index { OptionKind::Positive } else { kind }).collect(),
            options: distractors.into_iter().map(String::from).collect(),
            answer_index,
        })
    };
    let mut verb_items = Vec::new();
    let mut noun_items = Vec::new();
    for i in manifest.train_caption_indices() {
        let c = &manifest.captions[i];
        let (ctx, verb) = split_synthetic_caption(&c.text).expect("checked above");
        let same_ctx: Vec<&str> = by_ctx[ctx].iter().filter(|(v, _)| **v != verb).map(|(_, t)| *t).collect();
        let same_verb: Vec<&str> = by_verb[verb].iter().filter(|(k, _)| **k != ctx).map(|(_, t)| *t).collect();
        if let Some(item) = build(&c.video_id, &c.text, same_ctx, OptionKind::HardVerbNegative, 1, i) {
            verb_items.push(item);
        }
        if let Some(item) = build(&c.video_id, &c.text, same_verb, OptionKind::RandomNegative, 2, i) {
            noun_items.push(item);
        }
    }
    if verb_items.is_empty() || noun_items.is_empty() {
        return Err(ExperimentError::Config(
            "shortcut corpus needs at least 5 verbs per context and 5 contexts".into(),
        ));
    }
    Ok((verb_items, noun_items))
}

pub fn shortcut(cfg: &ShortcutConfig) -> Result<(ShortcutReport, Vec<TrainedRun>)> {
    let base = make_synthetic_corpus(&cfg.corpus)?;
    let verbs = corpus_verbs(&base);
    let with_neg = add_random_verb_negatives(&base, &verbs, cfg.candidates_per_caption, cfg.seed)?;
    let (calibrated, _) = calibrate_filter(&with_neg, cfg.batch_size);
    let (verb_items, noun_items) = shortcut_mc_items(&base, cfg.seed)?;

    let tc = |loss: LossConfig| TrainConfig {
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
        n_hard_max: cfg.candidates_per_caption,
        seed: cfg.seed,
        loss: LossConfig { sigma: cfg.sigma, ..loss },
        encoder: EncoderConfig {
            dim: cfg.dim,
            seed: cfg.seed,
            ..Default::default()
        },
        ..TrainConfig::default()
    };
    let baseline_loss = LossConfig {
        negative_variant: NegativeVariant::None,
        lambda3: 0.0,
        ..LossConfig::default()
    };
    let vfc_loss = LossConfig {
        negative_variant: NegativeVariant::CalibratedHn,
        ..LossConfig::default()
    };
    let f = cfg.features.as_ref();
    let base_run = train_with_features("shortcut_baseline", &base, tc(baseline_loss), f)?;
    let vfc_run = train_with_features("shortcut_vfc", &calibrated, tc(vfc_loss), f)?;
    let arm = |run: &TrainedRun, name: &str| -> Result<ShortcutArm> {
        Ok(ShortcutArm {
            name: name.to_string(),
            verb_mc: eval::eval_multiple_choice(&run.state.encoders, &verb_items)?,
            noun_mc: eval::eval_multiple_choice(&run.state.encoders, &noun_items)?,
        })
    };
    let report = ShortcutReport {
        chance: 1.0 / MC_OPTIONS as f64,
        baseline: arm(&base_run, "baseline")?,
        vfc: arm(&vfc_run, "vfc")?,
    };
    Ok((report, vec![base_run, vfc_run]))
}
